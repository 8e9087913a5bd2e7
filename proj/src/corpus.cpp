#include "otreg/corpus.hpp"

#include <cmath>

namespace otreg {

void validate(const CorpusConfig& cfg) {
  if (cfg.vocab_size < 2) throw domain_error("corpus: vocab_size must be >= 2");
  if (cfg.d_l < 2 || cfg.d_s < 1) throw domain_error("corpus: embedding dimensions too small");
  if (cfg.utterance_count < 1) throw domain_error("corpus: utterance_count must be >= 1");
  if (cfg.token_len_min < 1 || cfg.token_len_max < cfg.token_len_min)
    throw domain_error("corpus: empty token length range");
  if (cfg.repeat_min < 1 || cfg.repeat_max < cfg.repeat_min)
    throw domain_error("corpus: empty repeat range");
  if (cfg.pad_insert_prob < 0.0 || cfg.pad_insert_prob > 1.0)
    throw domain_error("corpus: pad_insert_prob must be in [0, 1]");
  if (cfg.noise_sigma < 0.0) throw domain_error("corpus: noise_sigma must be nonnegative");
}

EmbeddingTable make_embedding_table(std::uint64_t seed, int vocab_size, int dim) {
  if (vocab_size < 2) throw domain_error("embedding table: vocab_size must be >= 2");
  if (dim < 2) throw domain_error("embedding table: dim must be >= 2");
  EmbeddingTable table;
  table.vocab_size = vocab_size;
  table.dim = dim;
  table.pad_id = vocab_size - 1;
  table.rows = Matrix(vocab_size, dim);
  Rng rng(seed);
  for (int r = 0; r < vocab_size; ++r) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double v = rng.symmetric();
        table.rows(r, j) = v;
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (int j = 0; j < dim; ++j) table.rows(r, j) /= norm;
  }
  return table;
}

namespace {

void emit_frames(const EmbeddingTable& table, const Matrix& mixing, int token, int count,
                 double sigma, Rng& rng, std::vector<double>& frames,
                 std::vector<int>& frame_to_token) {
  const int d_s = mixing.cols();
  for (int f = 0; f < count; ++f) {
    for (int j = 0; j < d_s; ++j) {
      double v = 0.0;
      for (int i = 0; i < table.dim; ++i) v += table.rows(token, i) * mixing(i, j);
      frames.push_back(v + sigma * rng.gaussian());
    }
    frame_to_token.push_back(token);
  }
}

}  // namespace

UtteranceSample synthesize_utterance(const EmbeddingTable& table, const Matrix& mixing,
                                     const CorpusConfig& cfg, Rng& rng) {
  validate(cfg);
  if (mixing.rows() != table.dim) throw dimension_error("synthesize: mixing rows != table dim");

  UtteranceSample s;
  const int n_t = rng.uniform_int(cfg.token_len_min, cfg.token_len_max);
  s.tokens.reserve(n_t);
  for (int i = 0; i < n_t; ++i) s.tokens.push_back(rng.uniform_int(0, table.vocab_size - 2));

  std::vector<double> frames;
  for (int i = 0; i < n_t; ++i) {
    if (i > 0 && rng.unit() < cfg.pad_insert_prob) {
      const int run = rng.uniform_int(cfg.repeat_min, cfg.repeat_max);
      emit_frames(table, mixing, table.pad_id, run, cfg.noise_sigma, rng, frames,
                  s.frame_to_token);
    }
    const int repeats = rng.uniform_int(cfg.repeat_min, cfg.repeat_max);
    emit_frames(table, mixing, s.tokens[i], repeats, cfg.noise_sigma, rng, frames,
                s.frame_to_token);
  }
  s.raw_speech = Matrix(static_cast<int>(s.frame_to_token.size()), mixing.cols(),
                        std::move(frames));
  return s;
}

Matrix embeddings_for_tokens(const EmbeddingTable& table, std::span<const int> tokens) {
  Matrix out(static_cast<int>(tokens.size()), table.dim);
  for (size_t i = 0; i < tokens.size(); ++i) {
    const int tok = tokens[i];
    if (tok < 0 || tok >= table.vocab_size)
      throw domain_error("embeddings_for_tokens: token id out of vocabulary");
    for (int j = 0; j < table.dim; ++j) out(static_cast<int>(i), j) = table.rows(tok, j);
  }
  return out;
}

Corpus make_corpus(const CorpusConfig& cfg) {
  validate(cfg);
  Corpus c;
  c.config = cfg;
  c.table = make_embedding_table(cfg.seed, cfg.vocab_size, cfg.d_l);
  // Offset stream keeps the data draws distinct from the table draws.
  Rng rng(cfg.seed ^ 0xD1B54A32D192ED03ull);
  c.mixing = Matrix(cfg.d_l, cfg.d_s);
  for (auto& v : c.mixing.data()) v = rng.gaussian();
  c.samples.reserve(cfg.utterance_count);
  for (int i = 0; i < cfg.utterance_count; ++i)
    c.samples.push_back(synthesize_utterance(c.table, c.mixing, cfg, rng));
  return c;
}

}  // namespace otreg
