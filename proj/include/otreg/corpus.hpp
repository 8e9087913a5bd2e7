#pragma once

// Deterministic synthetic corpus standing in for a speech encoder and an
// embedding layer: a unit-normalized token embedding table, and utterances
// whose "speech" frames are token embeddings pushed through a fixed linear
// mixing plus Gaussian noise, with the ground-truth frame-to-token alignment
// recorded exactly.

#include <cstdint>
#include <span>
#include <vector>

#include "otreg/matrix.hpp"
#include "otreg/rng.hpp"

namespace otreg {

struct EmbeddingTable {
  int vocab_size = 0;
  int dim = 0;
  Matrix rows;     // vocab_size x dim, unit rows
  int pad_id = 0;  // always vocab_size - 1
};

struct UtteranceSample {
  std::vector<int> tokens;            // length n_t, no pad tokens
  Matrix raw_speech;                  // n_s x d_s
  std::vector<int> frame_to_token;    // length n_s; token id or pad_id per frame
};

struct CorpusConfig {
  std::uint64_t seed = 42;
  int vocab_size = 30;
  int d_l = 16;  // embedding-table dimension
  int d_s = 24;  // raw frame dimension
  int utterance_count = 200;
  int token_len_min = 4;
  int token_len_max = 8;
  int repeat_min = 2;  // frames per token (and per inserted pad run)
  int repeat_max = 4;
  double pad_insert_prob = 0.3;
  double noise_sigma = 0.02;
};

void validate(const CorpusConfig& cfg);

// Rows drawn from SplitMix64 as [-1,1) reals and unit-normalized; a row whose
// norm is below 1e-12 is resampled from the continuing stream.
EmbeddingTable make_embedding_table(std::uint64_t seed, int vocab_size, int dim);

// Draw order per utterance (fixed for reproducibility): token count, then the
// tokens, then per position an optional interior pad run (probability draw,
// run length, frame noise), then the token's repeat count and frame noise.
// Noise draws happen even at sigma = 0 so streams align across configs.
UtteranceSample synthesize_utterance(const EmbeddingTable& table, const Matrix& mixing,
                                     const CorpusConfig& cfg, Rng& rng);

struct Corpus {
  CorpusConfig config;
  EmbeddingTable table;
  Matrix mixing;  // d_l x d_s
  std::vector<UtteranceSample> samples;
};

// Table from cfg.seed; mixing and utterances from an offset stream so the
// table alone can be regenerated independently.
Corpus make_corpus(const CorpusConfig& cfg);

// Table rows gathered for a token sequence (one row per token, in order).
Matrix embeddings_for_tokens(const EmbeddingTable& table, std::span<const int> tokens);

}  // namespace otreg
