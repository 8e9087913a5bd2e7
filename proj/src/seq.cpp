#include "otreg/seq.hpp"

#include <cmath>
#include <cstring>

#include "otreg/ot.hpp"

namespace otreg {

Matrix stack_frames(const Matrix& raw, int k) {
  if (k < 1) throw domain_error("stack_frames: k must be >= 1");
  const int out_rows = raw.rows() / k;
  if (out_rows == 0)
    throw domain_error("stack_frames: fewer than k rows, output would be empty");
  Matrix out(out_rows, raw.cols() * k);
  // Row-major concatenation of k consecutive rows is one contiguous copy.
  std::memcpy(out.data().data(), raw.data().data(),
              static_cast<size_t>(out_rows) * k * raw.cols() * sizeof(double));
  return out;
}

AdapterVars track_params(Tape& t, const AdapterParams& p) {
  if (p.w1.cols() != p.b1.cols() || p.w2.rows() != p.w1.cols() || p.w2.cols() != p.b2.cols() ||
      p.b1.rows() != 1 || p.b2.rows() != 1)
    throw dimension_error("adapter params: inconsistent shapes");
  return {t.param(p.w1), t.param(p.b1), t.param(p.w2), t.param(p.b2)};
}

Var adapter_forward(Var h, const AdapterVars& p) {
  if (h.value().cols() != p.w1.value().rows())
    throw dimension_error("adapter_forward: input width does not match w1");
  Var hidden = relu(add_row(matmul(h, p.w1), p.b1));
  return add_row(matmul(hidden, p.w2), p.b2);
}

Matrix adapter_forward(const Matrix& h, const AdapterParams& p) {
  Tape t;
  AdapterVars v{t.constant(p.w1), t.constant(p.b1), t.constant(p.w2), t.constant(p.b2)};
  return adapter_forward(t.constant(h), v).value();
}

namespace {

double row_norm(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  const double na = row_norm(a), nb = row_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;  // decision-only; zero rows match nothing
  return dot / (na * nb);
}

double cosine_checked(std::span<const double> a, std::span<const double> b, const char* what) {
  const double na = row_norm(a), nb = row_norm(b);
  if (na == 0.0 || nb == 0.0) throw domain_error(std::string(what) + ": zero-norm row");
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot / (na * nb);
}

}  // namespace

UniqueTargetSet unique_targets(const Matrix& transcript, std::span<const double> pad,
                               double threshold, std::span<const int> ids, int pad_marker) {
  if (!(threshold > 0.0) || threshold > 1.0)
    throw domain_error("unique_targets: threshold must be in (0, 1]");
  if (static_cast<int>(pad.size()) != transcript.cols() && transcript.rows() > 0)
    throw dimension_error("unique_targets: pad dimension mismatch");
  if (!ids.empty() && static_cast<int>(ids.size()) != transcript.rows())
    throw dimension_error("unique_targets: ids length must equal transcript rows");

  const int n_t = transcript.rows();
  const int d = static_cast<int>(pad.size());
  auto row_of = [&](int i) -> std::span<const double> {
    return i < n_t ? transcript.row(i) : pad;
  };

  UniqueTargetSet out;
  std::vector<int> kept;
  int pad_kept = -1;
  for (int i = 0; i <= n_t; ++i) {
    std::span<const double> ri = row_of(i);
    int duplicate_of = -1;
    for (size_t kidx = 0; kidx < kept.size(); ++kidx) {
      if (cosine_checked(ri, row_of(kept[kidx]), "unique_targets") >= threshold) {
        duplicate_of = static_cast<int>(kidx);
        break;
      }
    }
    if (duplicate_of < 0) {
      kept.push_back(i);
      if (i == n_t) pad_kept = static_cast<int>(kept.size()) - 1;
    } else if (i == n_t) {
      pad_kept = duplicate_of;  // an earlier transcript row stands in for pad
    }
  }

  out.embeddings = Matrix(static_cast<int>(kept.size()), d);
  out.token_ids.reserve(kept.size());
  out.source_rows = kept;
  for (size_t k = 0; k < kept.size(); ++k) {
    std::span<const double> src = row_of(kept[k]);
    for (int j = 0; j < d; ++j) out.embeddings(static_cast<int>(k), j) = src[j];
    if (kept[k] == n_t)
      out.token_ids.push_back(pad_marker);
    else
      out.token_ids.push_back(ids.empty() ? kept[k] : ids[kept[k]]);
  }
  out.pad_row_index = pad_kept;
  return out;
}

std::pair<Var, CompressionReport> ot_compress(Var f, std::span<const double> pad,
                                              double merge_threshold, double drop_threshold) {
  if (!(merge_threshold > 0.0 && merge_threshold < 1.0) ||
      !(drop_threshold > 0.0 && drop_threshold < 1.0))
    throw domain_error("ot_compress: thresholds must be in (0, 1)");
  const Matrix& fv = f.value();
  if (fv.rows() > 0 && static_cast<int>(pad.size()) != fv.cols())
    throw dimension_error("ot_compress: pad dimension mismatch");

  CompressionReport report;
  report.input_length = fv.rows();

  // Merge: decide groups from forward values; gradient flows through means.
  std::vector<std::vector<int>> merge_groups;
  for (int i = 0; i + 1 < fv.rows(); i += 2) {
    if (cosine(fv.row(i), fv.row(i + 1)) > merge_threshold) {
      merge_groups.push_back({i, i + 1});
      report.merged_pair_indices.push_back(i);
    } else {
      merge_groups.push_back({i});
      merge_groups.push_back({i + 1});
    }
  }
  if (fv.rows() % 2 == 1) merge_groups.push_back({fv.rows() - 1});
  Var merged = f.tape()->combine_rows(f, merge_groups);
  report.after_merge = merged.value().rows();

  // Drop: keep rows not similar to pad.
  std::vector<std::vector<int>> keep_groups;
  for (int i = 0; i < merged.value().rows(); ++i) {
    if (cosine(merged.value().row(i), pad) > drop_threshold)
      report.dropped_indices.push_back(i);
    else
      keep_groups.push_back({i});
  }
  Var out = f.tape()->combine_rows(merged, keep_groups);
  report.after_drop = out.value().rows();
  return {out, report};
}

std::pair<Matrix, CompressionReport> ot_compress(const Matrix& f, std::span<const double> pad,
                                                 double merge_threshold, double drop_threshold) {
  Tape t;
  auto [var, report] = ot_compress(t.constant(f), pad, merge_threshold, drop_threshold);
  return {var.value(), std::move(report)};
}

Matrix pairwise_distance_map(const Matrix& f, const Matrix& t) {
  return build_cost(f, t).values;
}

}  // namespace otreg
