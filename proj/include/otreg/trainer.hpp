#pragma once

// Two-stage training: stage 1 is plain supervised fine-tuning of the adapter
// with frame-level cross-entropy; stage 2 adds the transport regularizer
// (lambda_ot * (l_cost + lambda_spr * l_spr)) with compression exercised in
// the evaluation decode path. Plain gradient descent with a cosine-decayed
// step size keeps runs reproducible bit for bit.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "otreg/corpus.hpp"
#include "otreg/loss.hpp"
#include "otreg/ot.hpp"
#include "otreg/seq.hpp"
#include "otreg/tape.hpp"

namespace otreg {

// Softmax temperature applied to cosine logits in the toy CE loss.
inline constexpr double kLogitScale = 20.0;

struct TrainConfig {
  double lambda_ot = 0.3;
  double lambda_spr = 0.1;
  int stage1_epochs = 2;
  int stage2_epochs = 3;
  double learning_rate = 0.5;
  double lr_min = 0.005;
  int k = 5;
  int d_h = 2048;
  SinkhornConfig sinkhorn;
  double merge_threshold = 0.9;
  double drop_threshold = 0.9;
  std::uint64_t seed = 1;
};

void validate(const TrainConfig& cfg);

struct RunConfig {
  TrainConfig train;
  CorpusConfig corpus;
};

// Line-based key=value file; '#' starts a comment. Unknown keys are rejected
// with their line number.
RunConfig parse_run_config(const std::string& path);

struct StepReport {
  double l_ce = 0.0;
  double l_cost = 0.0;
  double l_spr = 0.0;
  double l_ot = 0.0;
  double l_total = 0.0;
  int sinkhorn_iterations = 0;
  double marginal_error = 0.0;
};

struct EvalReport {
  double alignment_accuracy = 0.0;
  double mean_transport_cost = 0.0;
  double token_error_rate_after_compression = 0.0;
  double mean_compression_ratio = 0.0;
};

// Extra evaluation detail used by diagnostics and the acceptance suite.
struct EvalDetail {
  long frames = 0;
  long frames_correct = 0;
  long pad_frames = 0;
  long pad_frames_correct = 0;
  double mean_l_spr = 0.0;
  int empty_compressions = 0;
};

// Per-frame softmax cross-entropy; logits are scale * cosine(f_i, table rows).
Var ce_loss(Var f, Var table_rows, std::span<const int> labels, double scale = kLogitScale);
double ce_loss(const Matrix& f, const Matrix& table_rows, std::span<const int> labels,
               double scale = kLogitScale);

// Majority token among each group of k raw frames, ties to the earliest
// token in the group.
std::vector<int> stacked_frame_labels(std::span<const int> frame_to_token, int k);

// He-style init of the two-layer adapter from the given seed; biases zero.
AdapterParams init_adapter(int d_in, int d_h, int d_out, std::uint64_t seed);

std::vector<StepReport> stage1_train(const Corpus& corpus, AdapterParams& params,
                                     const TrainConfig& cfg);

// The full stage-2 computation on one sample: adapter forward, compression,
// CE, cost matrix, unrolled transport solve, and the combined scalar loss.
struct Stage2Trace {
  Var total;
  Var ce;
  TrackedOtLoss ot;
  TrackedPlan plan;
  CompressionReport compression;
  StepReport report(double lambda_spr) const;
};

Stage2Trace stage2_graph(Tape& tape, const UtteranceSample& sample, const AdapterVars& vars,
                         const EmbeddingTable& table, const TrainConfig& cfg);

struct AdapterGrads {
  Matrix w1, b1, w2, b2;
};

std::pair<AdapterGrads, StepReport> stage2_step(const UtteranceSample& sample,
                                                const AdapterParams& params,
                                                const EmbeddingTable& table,
                                                const TrainConfig& cfg);

std::vector<StepReport> stage2_train(const Corpus& corpus, AdapterParams& params,
                                     const TrainConfig& cfg);

EvalReport evaluate(const Corpus& corpus, const AdapterParams& params,
                    const EmbeddingTable& table, const TrainConfig& cfg,
                    EvalDetail* detail = nullptr);

// Levenshtein distance between token sequences.
int edit_distance(std::span<const int> a, std::span<const int> b);

}  // namespace otreg
