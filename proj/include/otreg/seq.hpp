#pragma once

// Sequence machinery around the transport solver: frame stacking, the
// two-layer adapter, unique-target extraction, and similarity-driven
// compression (pairwise merge of near-duplicate neighbors, then dropping
// rows close to the pad embedding).

#include <span>
#include <utility>
#include <vector>

#include "otreg/matrix.hpp"
#include "otreg/tape.hpp"

namespace otreg {

inline constexpr double kUniquenessThreshold = 0.999;

// Concatenates every k consecutive rows into one; the remainder rows
// (rows % k) are discarded. Output is (rows / k) x (cols * k).
Matrix stack_frames(const Matrix& raw, int k);

struct AdapterParams {
  Matrix w1;  // (d_in) x d_h
  Matrix b1;  // 1 x d_h
  Matrix w2;  // d_h x d_out
  Matrix b2;  // 1 x d_out
};

struct AdapterVars {
  Var w1, b1, w2, b2;
};

AdapterVars track_params(Tape& t, const AdapterParams& p);

// relu(h*w1 + b1)*w2 + b2, one output row per input row.
Var adapter_forward(Var h, const AdapterVars& p);
Matrix adapter_forward(const Matrix& h, const AdapterParams& p);

struct UniqueTargetSet {
  Matrix embeddings;            // n_g x d
  std::vector<int> token_ids;   // length n_g; pad row holds pad_marker
  int pad_row_index = -1;       // row representing the pad embedding
  std::vector<int> source_rows; // index into [input; pad] each kept row came from
};

// Scans [transcript; pad] in order and keeps a row iff its cosine similarity
// to every previously kept row is < threshold. The pad embedding is always
// represented: either by its own appended row or by the transcript row that
// duplicated it. With ids empty, token_ids holds source row indices.
UniqueTargetSet unique_targets(const Matrix& transcript, std::span<const double> pad,
                               double threshold, std::span<const int> ids = {},
                               int pad_marker = -1);

struct CompressionReport {
  int input_length = 0;
  int after_merge = 0;
  int after_drop = 0;
  std::vector<int> merged_pair_indices;  // input index of the first row of each merged pair
  std::vector<int> dropped_indices;      // indices into the post-merge sequence
};

// Merge step: adjacent pairs (0,1),(2,3),... are replaced by their mean when
// their cosine similarity exceeds merge_threshold; a trailing unpaired row
// passes through. Drop step: surviving rows whose similarity to pad exceeds
// drop_threshold are removed. May return an empty matrix.
std::pair<Var, CompressionReport> ot_compress(Var f, std::span<const double> pad,
                                              double merge_threshold, double drop_threshold);
std::pair<Matrix, CompressionReport> ot_compress(const Matrix& f, std::span<const double> pad,
                                                 double merge_threshold, double drop_threshold);

// Entry (i,j) = 1 - cosine similarity(f_i, t_j); same formula as the OT cost.
Matrix pairwise_distance_map(const Matrix& f, const Matrix& t);

}  // namespace otreg
