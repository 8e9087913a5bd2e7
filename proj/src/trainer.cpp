#include "otreg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "otreg/loss.hpp"

namespace otreg {

void validate(const TrainConfig& cfg) {
  if (cfg.lambda_ot < 0.0 || cfg.lambda_spr < 0.0)
    throw domain_error("train config: loss weights must be nonnegative");
  if (cfg.stage1_epochs < 0 || cfg.stage2_epochs < 0)
    throw domain_error("train config: epochs must be >= 0");
  if (!(cfg.learning_rate > 0.0) || !(cfg.lr_min > 0.0) || cfg.lr_min > cfg.learning_rate)
    throw domain_error("train config: need 0 < lr_min <= learning_rate");
  if (cfg.k < 1) throw domain_error("train config: k must be >= 1");
  if (cfg.d_h < 1) throw domain_error("train config: d_h must be >= 1");
  if (!(cfg.merge_threshold > 0.0 && cfg.merge_threshold < 1.0) ||
      !(cfg.drop_threshold > 0.0 && cfg.drop_threshold < 1.0))
    throw domain_error("train config: thresholds must be in (0, 1)");
}

Var ce_loss(Var f, Var table_rows, std::span<const int> labels, double scale) {
  const int n = f.value().rows();
  const int vocab = table_rows.value().rows();
  if (static_cast<int>(labels.size()) != n)
    throw dimension_error("ce_loss: labels length must equal frame count");
  for (int label : labels)
    if (label < 0 || label >= vocab) throw domain_error("ce_loss: label out of vocabulary");

  Tape& t = *f.tape();
  Var logits = t.scale(cosine_similarity(f, table_rows), scale);
  Matrix mask(n, vocab);
  for (int i = 0; i < n; ++i) mask(i, labels[i]) = 1.0;
  Var picked = sum_all(mul(logits, t.constant(mask)));
  Var lse = sum_all(lse_rows(logits));
  return t.scale(sub(lse, picked), 1.0 / n);
}

double ce_loss(const Matrix& f, const Matrix& table_rows, std::span<const int> labels,
               double scale) {
  Tape t;
  return ce_loss(t.constant(f), t.constant(table_rows), labels, scale).scalar();
}

std::vector<int> stacked_frame_labels(std::span<const int> frame_to_token, int k) {
  if (k < 1) throw domain_error("stacked_frame_labels: k must be >= 1");
  const int out = static_cast<int>(frame_to_token.size()) / k;
  std::vector<int> labels(out);
  for (int s = 0; s < out; ++s) {
    // Majority within the stack; ties resolved by earliest appearance.
    int best_tok = -1, best_count = 0;
    for (int i = 0; i < k; ++i) {
      const int tok = frame_to_token[s * k + i];
      int count = 0;
      for (int j = 0; j < k; ++j)
        if (frame_to_token[s * k + j] == tok) ++count;
      if (count > best_count) {
        best_count = count;
        best_tok = tok;
      }
    }
    labels[s] = best_tok;
  }
  return labels;
}

AdapterParams init_adapter(int d_in, int d_h, int d_out, std::uint64_t seed) {
  Rng rng(seed);
  AdapterParams p;
  p.w1 = Matrix(d_in, d_h);
  const double s1 = std::sqrt(2.0 / d_in);
  for (auto& v : p.w1.data()) v = s1 * rng.gaussian();
  p.b1 = Matrix(1, d_h);
  p.w2 = Matrix(d_h, d_out);
  const double s2 = std::sqrt(2.0 / d_h);
  for (auto& v : p.w2.data()) v = s2 * rng.gaussian();
  p.b2 = Matrix(1, d_out);
  return p;
}

namespace {

double cosine_lr(double lr_max, double lr_min, long step, long total) {
  if (total <= 1) return lr_max;
  const double t = static_cast<double>(step) / static_cast<double>(total - 1);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(3.14159265358979323846 * t));
}

void apply_update(Matrix& p, const Matrix& g, double lr) {
  for (size_t i = 0; i < p.size(); ++i) p.data()[i] -= lr * g.data()[i];
}

}  // namespace

StepReport Stage2Trace::report(double lambda_spr) const {
  StepReport r;
  r.l_ce = ce.scalar();
  const OtLossBreakdown b = ot.values(lambda_spr);
  r.l_cost = b.l_cost;
  r.l_spr = b.l_spr;
  r.l_ot = b.l_ot;
  r.l_total = total.scalar();
  r.sinkhorn_iterations = plan.iterations_used;
  r.marginal_error = plan.marginal_error;
  return r;
}

Stage2Trace stage2_graph(Tape& tape, const UtteranceSample& sample, const AdapterVars& vars,
                         const EmbeddingTable& table, const TrainConfig& cfg) {
  const Matrix stacked = stack_frames(sample.raw_speech, cfg.k);
  const std::vector<int> labels = stacked_frame_labels(sample.frame_to_token, cfg.k);

  Var h = tape.constant(stacked);
  Var f = adapter_forward(h, vars);

  Stage2Trace g;
  auto [compressed, report] =
      ot_compress(f, table.rows.row(table.pad_id), cfg.merge_threshold, cfg.drop_threshold);
  (void)compressed;  // decode path is exercised by evaluate()
  g.compression = std::move(report);

  Var table_const = tape.constant(table.rows);
  g.ce = ce_loss(f, table_const, labels);

  UniqueTargetSet targets = unique_targets(
      embeddings_for_tokens(table, sample.tokens), table.rows.row(table.pad_id),
      kUniquenessThreshold, sample.tokens, table.pad_id);
  Var cost = build_cost(f, tape.constant(targets.embeddings));
  g.plan = sinkhorn(cost, cfg.sinkhorn);
  g.ot = ot_loss(g.plan.gamma, cost, cfg.lambda_spr);
  g.total = add(g.ce, tape.scale(g.ot.l_ot, cfg.lambda_ot));
  return g;
}

std::vector<StepReport> stage1_train(const Corpus& corpus, AdapterParams& params,
                                     const TrainConfig& cfg) {
  validate(cfg);
  std::vector<StepReport> reports;
  const long total = static_cast<long>(cfg.stage1_epochs) * corpus.samples.size();
  long step = 0;
  for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    for (size_t si = 0; si < corpus.samples.size(); ++si) {
      const UtteranceSample& sample = corpus.samples[si];
      const Matrix stacked = stack_frames(sample.raw_speech, cfg.k);
      const std::vector<int> labels = stacked_frame_labels(sample.frame_to_token, cfg.k);

      Tape tape;
      AdapterVars vars = track_params(tape, params);
      Var f = adapter_forward(tape.constant(stacked), vars);
      Var loss = ce_loss(f, tape.constant(corpus.table.rows), labels);
      const double loss_value = loss.scalar();
      if (!std::isfinite(loss_value))
        throw numeric_error("stage1: loss diverged at sample " + std::to_string(si));

      const Var wrt[] = {vars.w1, vars.b1, vars.w2, vars.b2};
      std::vector<Matrix> grads = tape.backward(loss, wrt);
      const double lr = cosine_lr(cfg.learning_rate, cfg.lr_min, step, total);
      apply_update(params.w1, grads[0], lr);
      apply_update(params.b1, grads[1], lr);
      apply_update(params.w2, grads[2], lr);
      apply_update(params.b2, grads[3], lr);
      ++step;

      StepReport r;
      r.l_ce = loss_value;
      r.l_total = loss_value;
      reports.push_back(r);
    }
  }
  return reports;
}

std::pair<AdapterGrads, StepReport> stage2_step(const UtteranceSample& sample,
                                                const AdapterParams& params,
                                                const EmbeddingTable& table,
                                                const TrainConfig& cfg) {
  validate(cfg);
  Tape tape;
  AdapterVars vars = track_params(tape, params);
  Stage2Trace g = stage2_graph(tape, sample, vars, table, cfg);
  if (!std::isfinite(g.total.scalar()))
    throw numeric_error("stage2: loss diverged");

  const Var wrt[] = {vars.w1, vars.b1, vars.w2, vars.b2};
  std::vector<Matrix> grads = tape.backward(g.total, wrt);
  AdapterGrads out{std::move(grads[0]), std::move(grads[1]), std::move(grads[2]),
                   std::move(grads[3])};
  return {std::move(out), g.report(cfg.lambda_spr)};
}

std::vector<StepReport> stage2_train(const Corpus& corpus, AdapterParams& params,
                                     const TrainConfig& cfg) {
  validate(cfg);
  std::vector<StepReport> reports;
  const long total = static_cast<long>(cfg.stage2_epochs) * corpus.samples.size();
  long step = 0;
  for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
    for (size_t si = 0; si < corpus.samples.size(); ++si) {
      std::pair<AdapterGrads, StepReport> sr;
      try {
        sr = stage2_step(corpus.samples[si], params, corpus.table, cfg);
      } catch (const numeric_error& e) {
        throw numeric_error(std::string(e.what()) + " at sample " + std::to_string(si));
      }
      const double lr = cosine_lr(cfg.learning_rate, cfg.lr_min, step, total);
      apply_update(params.w1, sr.first.w1, lr);
      apply_update(params.b1, sr.first.b1, lr);
      apply_update(params.w2, sr.first.w2, lr);
      apply_update(params.b2, sr.first.b2, lr);
      ++step;
      reports.push_back(sr.second);
    }
  }
  return reports;
}

int edit_distance(std::span<const int> a, std::span<const int> b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

namespace {

struct SampleEval {
  long frames = 0, frames_correct = 0, pad_frames = 0, pad_frames_correct = 0;
  double l_cost = 0.0, l_spr = 0.0, ter = 0.0, ratio = 0.0;
  bool empty_compression = false;
};

std::vector<int> dedup_consecutive(std::span<const int> tokens) {
  std::vector<int> out;
  for (int t : tokens)
    if (out.empty() || out.back() != t) out.push_back(t);
  return out;
}

SampleEval evaluate_sample(const UtteranceSample& sample, const AdapterParams& params,
                           const EmbeddingTable& table, const TrainConfig& cfg) {
  SampleEval ev;
  const Matrix stacked = stack_frames(sample.raw_speech, cfg.k);
  const std::vector<int> labels = stacked_frame_labels(sample.frame_to_token, cfg.k);
  const Matrix f = adapter_forward(stacked, params);

  UniqueTargetSet targets = unique_targets(
      embeddings_for_tokens(table, sample.tokens), table.rows.row(table.pad_id),
      kUniquenessThreshold, sample.tokens, table.pad_id);
  const CostMatrix cost = build_cost(f, targets.embeddings);
  const TransportPlan plan = sinkhorn(cost, cfg.sinkhorn);

  for (int i = 0; i < f.rows(); ++i) {
    int arg = 0;
    for (int j = 1; j < plan.gamma.cols(); ++j)
      if (plan.gamma(i, j) > plan.gamma(i, arg)) arg = j;
    const bool is_pad = labels[i] == table.pad_id;
    const bool correct = is_pad ? arg == targets.pad_row_index
                                : targets.token_ids[arg] == labels[i];
    ++ev.frames;
    ev.frames_correct += correct;
    if (is_pad) {
      ++ev.pad_frames;
      ev.pad_frames_correct += correct;
    }
  }

  ev.l_cost = transport_cost(plan.gamma, cost.values);
  ev.l_spr = sparsity_loss(plan.gamma);

  auto [compressed, report] =
      ot_compress(f, table.rows.row(table.pad_id), cfg.merge_threshold, cfg.drop_threshold);
  ev.ratio = report.input_length > 0
                 ? static_cast<double>(report.after_drop) / report.input_length
                 : 1.0;
  const std::vector<int> reference = dedup_consecutive(sample.tokens);
  if (compressed.rows() == 0) {
    ev.empty_compression = true;
    ev.ter = 1.0;
  } else {
    std::vector<int> decoded(compressed.rows());
    const Matrix sims = cosine_similarity_matrix(compressed, table.rows);
    for (int i = 0; i < sims.rows(); ++i) {
      int arg = 0;
      for (int j = 1; j < sims.cols(); ++j)
        if (sims(i, j) > sims(i, arg)) arg = j;
      decoded[i] = arg;
    }
    ev.ter = static_cast<double>(edit_distance(decoded, reference)) /
             std::max<size_t>(1, reference.size());
  }
  return ev;
}

}  // namespace

EvalReport evaluate(const Corpus& corpus, const AdapterParams& params,
                    const EmbeddingTable& table, const TrainConfig& cfg, EvalDetail* detail) {
  validate(cfg);
  const int n = static_cast<int>(corpus.samples.size());
  std::vector<SampleEval> evs(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    evs[i] = evaluate_sample(corpus.samples[i], params, table, cfg);

  EvalReport report;
  EvalDetail det;
  double sum_cost = 0.0, sum_spr = 0.0, sum_ter = 0.0, sum_ratio = 0.0;
  for (const SampleEval& ev : evs) {  // ordered reduce
    det.frames += ev.frames;
    det.frames_correct += ev.frames_correct;
    det.pad_frames += ev.pad_frames;
    det.pad_frames_correct += ev.pad_frames_correct;
    det.empty_compressions += ev.empty_compression;
    sum_cost += ev.l_cost;
    sum_spr += ev.l_spr;
    sum_ter += ev.ter;
    sum_ratio += ev.ratio;
  }
  report.alignment_accuracy =
      det.frames > 0 ? static_cast<double>(det.frames_correct) / det.frames : 0.0;
  report.mean_transport_cost = sum_cost / n;
  report.token_error_rate_after_compression = sum_ter / n;
  report.mean_compression_ratio = sum_ratio / n;
  det.mean_l_spr = sum_spr / n;
  if (detail) *detail = det;
  return report;
}

}  // namespace otreg
