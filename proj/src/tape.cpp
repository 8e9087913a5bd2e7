#include "otreg/tape.hpp"

#include <cmath>

#include "otreg/kernels.hpp"

namespace otreg {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw domain_error("scalar() on non 1x1 value");
  return v(0, 0);
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::check_owned(Var v, const char* what) const {
  if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size()))
    throw domain_error(std::string(what) + ": operand belongs to a different tape");
}

Var Tape::param(Matrix value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.requires_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.requires_grad = false;
  n.value = std::move(value);
  return push(std::move(n));
}

namespace {
bool needs(const Tape::Node& a) { return a.requires_grad; }
}  // namespace

Var Tape::matmul(Var a, Var b) {
  check_owned(a, "matmul");
  check_owned(b, "matmul");
  const Matrix& av = value(a.id());
  const Matrix& bv = value(b.id());
  if (av.cols() != bv.rows()) throw dimension_error("matmul: inner dimensions differ");
  Node n;
  n.kind = OpKind::kMatMul;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = needs(nodes_[a.id()]) || needs(nodes_[b.id()]);
  n.value = Matrix(av.rows(), bv.cols());
  kernels::matmul(av, bv, n.value);
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  check_owned(a, "transpose");
  const Matrix& av = value(a.id());
  Node n;
  n.kind = OpKind::kTranspose;
  n.a = a.id();
  n.requires_grad = needs(nodes_[a.id()]);
  n.value = Matrix(av.cols(), av.rows());
  kernels::transpose(av, n.value);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_owned(a, "add");
  check_owned(b, "add");
  const Matrix& av = value(a.id());
  const Matrix& bv = value(b.id());
  require_same_shape(av, bv, "add");
  Node n;
  n.kind = OpKind::kAdd;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = needs(nodes_[a.id()]) || needs(nodes_[b.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map2(av, bv, n.value, [](double x, double y) { return x + y; });
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_owned(a, "sub");
  check_owned(b, "sub");
  const Matrix& av = value(a.id());
  const Matrix& bv = value(b.id());
  require_same_shape(av, bv, "sub");
  Node n;
  n.kind = OpKind::kSub;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = needs(nodes_[a.id()]) || needs(nodes_[b.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map2(av, bv, n.value, [](double x, double y) { return x - y; });
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_owned(a, "mul");
  check_owned(b, "mul");
  const Matrix& av = value(a.id());
  const Matrix& bv = value(b.id());
  require_same_shape(av, bv, "mul");
  Node n;
  n.kind = OpKind::kMul;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = needs(nodes_[a.id()]) || needs(nodes_[b.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map2(av, bv, n.value, [](double x, double y) { return x * y; });
  return push(std::move(n));
}

Var Tape::div(Var a, Var b) {
  check_owned(a, "div");
  check_owned(b, "div");
  const Matrix& av = value(a.id());
  const Matrix& bv = value(b.id());
  require_same_shape(av, bv, "div");
  Node n;
  n.kind = OpKind::kDiv;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = needs(nodes_[a.id()]) || needs(nodes_[b.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map2(av, bv, n.value, [](double x, double y) { return x / y; });
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  check_owned(a, "scale");
  const Matrix& av = value(a.id());
  Node n;
  n.kind = OpKind::kScale;
  n.a = a.id();
  n.s0 = s;
  n.requires_grad = needs(nodes_[a.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map1(av, n.value, [s](double x) { return s * x; });
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double s) {
  check_owned(a, "add_scalar");
  const Matrix& av = value(a.id());
  Node n;
  n.kind = OpKind::kAddScalar;
  n.a = a.id();
  n.s0 = s;
  n.requires_grad = needs(nodes_[a.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map1(av, n.value, [s](double x) { return x + s; });
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  check_owned(a, "exp");
  const Matrix& av = value(a.id());
  Node n;
  n.kind = OpKind::kExp;
  n.a = a.id();
  n.requires_grad = needs(nodes_[a.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map1(av, n.value, [](double x) { return std::exp(x); });
  return push(std::move(n));
}

Var Tape::log(Var a) {
  check_owned(a, "log");
  const Matrix& av = value(a.id());
  for (double v : av.data())
    if (!(v > 0.0)) throw domain_error("log: nonpositive entry");
  Node n;
  n.kind = OpKind::kLog;
  n.a = a.id();
  n.requires_grad = needs(nodes_[a.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map1(av, n.value, [](double x) { return std::log(x); });
  return push(std::move(n));
}

Var Tape::sqrt(Var a) {
  check_owned(a, "sqrt");
  const Matrix& av = value(a.id());
  for (double v : av.data())
    if (v < 0.0) throw domain_error("sqrt: negative entry");
  Node n;
  n.kind = OpKind::kSqrt;
  n.a = a.id();
  n.requires_grad = needs(nodes_[a.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map1(av, n.value, [](double x) { return std::sqrt(x); });
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  check_owned(a, "relu");
  const Matrix& av = value(a.id());
  Node n;
  n.kind = OpKind::kRelu;
  n.a = a.id();
  n.requires_grad = needs(nodes_[a.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map1(av, n.value, [](double x) { return x > 0.0 ? x : 0.0; });
  return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
  check_owned(a, "clamp");
  const Matrix& av = value(a.id());
  Node n;
  n.kind = OpKind::kClamp;
  n.a = a.id();
  n.s0 = lo;
  n.s1 = hi;
  n.requires_grad = needs(nodes_[a.id()]);
  n.value = Matrix(av.rows(), av.cols());
  kernels::map1(av, n.value, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); });
  return push(std::move(n));
}

Var Tape::add_col(Var m, Var c) {
  check_owned(m, "add_col");
  check_owned(c, "add_col");
  const Matrix& mv = value(m.id());
  const Matrix& cv = value(c.id());
  if (cv.cols() != 1 || cv.rows() != mv.rows())
    throw dimension_error("add_col: column operand must be rows x 1");
  Node n;
  n.kind = OpKind::kAddCol;
  n.a = m.id();
  n.b = c.id();
  n.requires_grad = needs(nodes_[m.id()]) || needs(nodes_[c.id()]);
  n.value = Matrix(mv.rows(), mv.cols());
  kernels::map_bcast_col(mv, cv, n.value, [](double x, double y) { return x + y; });
  return push(std::move(n));
}

Var Tape::add_row(Var m, Var r) {
  check_owned(m, "add_row");
  check_owned(r, "add_row");
  const Matrix& mv = value(m.id());
  const Matrix& rv = value(r.id());
  if (rv.rows() != 1 || rv.cols() != mv.cols())
    throw dimension_error("add_row: row operand must be 1 x cols");
  Node n;
  n.kind = OpKind::kAddRow;
  n.a = m.id();
  n.b = r.id();
  n.requires_grad = needs(nodes_[m.id()]) || needs(nodes_[r.id()]);
  n.value = Matrix(mv.rows(), mv.cols());
  kernels::map_bcast_row(mv, rv, n.value, [](double x, double y) { return x + y; });
  return push(std::move(n));
}

Var Tape::mul_col(Var m, Var c) {
  check_owned(m, "mul_col");
  check_owned(c, "mul_col");
  const Matrix& mv = value(m.id());
  const Matrix& cv = value(c.id());
  if (cv.cols() != 1 || cv.rows() != mv.rows())
    throw dimension_error("mul_col: column operand must be rows x 1");
  Node n;
  n.kind = OpKind::kMulCol;
  n.a = m.id();
  n.b = c.id();
  n.requires_grad = needs(nodes_[m.id()]) || needs(nodes_[c.id()]);
  n.value = Matrix(mv.rows(), mv.cols());
  kernels::map_bcast_col(mv, cv, n.value, [](double x, double y) { return x * y; });
  return push(std::move(n));
}

Var Tape::mul_row(Var m, Var r) {
  check_owned(m, "mul_row");
  check_owned(r, "mul_row");
  const Matrix& mv = value(m.id());
  const Matrix& rv = value(r.id());
  if (rv.rows() != 1 || rv.cols() != mv.cols())
    throw dimension_error("mul_row: row operand must be 1 x cols");
  Node n;
  n.kind = OpKind::kMulRow;
  n.a = m.id();
  n.b = r.id();
  n.requires_grad = needs(nodes_[m.id()]) || needs(nodes_[r.id()]);
  n.value = Matrix(mv.rows(), mv.cols());
  kernels::map_bcast_row(mv, rv, n.value, [](double x, double y) { return x * y; });
  return push(std::move(n));
}

Var Tape::lse_rows(Var m) {
  check_owned(m, "lse_rows");
  const Matrix& mv = value(m.id());
  if (mv.cols() == 0) throw dimension_error("lse_rows: empty rows");
  Node n;
  n.kind = OpKind::kLseRows;
  n.a = m.id();
  n.requires_grad = needs(nodes_[m.id()]);
  n.value = Matrix(mv.rows(), 1);
  kernels::lse_rows(mv, n.value);
  return push(std::move(n));
}

Var Tape::lse_cols(Var m) {
  check_owned(m, "lse_cols");
  const Matrix& mv = value(m.id());
  if (mv.rows() == 0) throw dimension_error("lse_cols: empty columns");
  Node n;
  n.kind = OpKind::kLseCols;
  n.a = m.id();
  n.requires_grad = needs(nodes_[m.id()]);
  n.value = Matrix(1, mv.cols());
  kernels::lse_cols(mv, n.value);
  return push(std::move(n));
}

Var Tape::sum_all(Var m) {
  check_owned(m, "sum_all");
  Node n;
  n.kind = OpKind::kSumAll;
  n.a = m.id();
  n.requires_grad = needs(nodes_[m.id()]);
  n.value = Matrix(1, 1);
  n.value(0, 0) = kernels::sum_all(value(m.id()));
  return push(std::move(n));
}

Var Tape::normalize_rows(Var m) {
  check_owned(m, "normalize_rows");
  const Matrix& mv = value(m.id());
  Matrix norms(mv.rows(), 1);
  kernels::row_norms(mv, norms);
  for (int i = 0; i < mv.rows(); ++i)
    if (norms(i, 0) <= 0.0) throw domain_error("normalize_rows: zero-norm row");
  Node n;
  n.kind = OpKind::kNormalizeRows;
  n.a = m.id();
  n.requires_grad = needs(nodes_[m.id()]);
  n.value = Matrix(mv.rows(), mv.cols());
  kernels::map_bcast_col(mv, norms, n.value, [](double x, double nrm) { return x / nrm; });
  return push(std::move(n));
}

Var Tape::combine_rows(Var m, std::vector<std::vector<int>> groups) {
  check_owned(m, "combine_rows");
  const Matrix& mv = value(m.id());
  for (const auto& g : groups) {
    if (g.empty()) throw domain_error("combine_rows: empty group");
    for (int idx : g)
      if (idx < 0 || idx >= mv.rows()) throw dimension_error("combine_rows: row index out of range");
  }
  Node n;
  n.kind = OpKind::kCombineRows;
  n.a = m.id();
  n.requires_grad = needs(nodes_[m.id()]);
  n.value = Matrix(static_cast<int>(groups.size()), mv.cols());
  for (size_t r = 0; r < groups.size(); ++r) {
    const double inv = 1.0 / static_cast<double>(groups[r].size());
    for (int j = 0; j < mv.cols(); ++j) {
      double s = 0.0;
      for (int idx : groups[r]) s += mv(idx, j);
      n.value(static_cast<int>(r), j) = s * inv;
    }
  }
  n.groups = std::move(groups);
  return push(std::move(n));
}

namespace {

void accumulate(Matrix& dst, const Matrix& src) {
  kernels::map2(dst, src, dst, [](double x, double y) { return x + y; });
}

}  // namespace

std::vector<Matrix> Tape::backward(Var root, std::span<const Var> wrt) {
  check_owned(root, "backward");
  const Matrix& rv = value(root.id());
  if (rv.rows() != 1 || rv.cols() != 1)
    throw domain_error("backward: root must be a scalar (1x1) node");
  for (Var v : wrt) check_owned(v, "backward");

  // Nodes that can influence the root and require gradients.
  std::vector<char> live(nodes_.size(), 0);
  {
    std::vector<int> stack{root.id()};
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      if (live[id] || !nodes_[id].requires_grad) continue;
      live[id] = 1;
      if (nodes_[id].a >= 0) stack.push_back(nodes_[id].a);
      if (nodes_[id].b >= 0) stack.push_back(nodes_[id].b);
    }
  }

  std::vector<Matrix> grads(nodes_.size());
  std::vector<char> touched(nodes_.size(), 0);
  auto grad_of = [&](int id) -> Matrix& {
    if (!touched[id]) {
      grads[id] = Matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
      touched[id] = 1;
    }
    return grads[id];
  };

  if (live[root.id()]) grad_of(root.id())(0, 0) = 1.0;

  for (int id = root.id(); id >= 0; --id) {
    if (!live[id] || !touched[id]) continue;
    const Node& n = nodes_[id];
    const Matrix& g = grads[id];
    const bool need_a = n.a >= 0 && live[n.a];
    const bool need_b = n.b >= 0 && live[n.b];
    if (!need_a && !need_b) continue;
    const Matrix& av = n.a >= 0 ? nodes_[n.a].value : n.value;
    const Matrix& bv = n.b >= 0 ? nodes_[n.b].value : n.value;

    switch (n.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kMatMul: {
        if (need_a) {
          Matrix da(av.rows(), av.cols());
          kernels::matmul_nt(g, bv, da);
          accumulate(grad_of(n.a), da);
        }
        if (need_b) {
          Matrix db(bv.rows(), bv.cols());
          kernels::matmul_tn(av, g, db);
          accumulate(grad_of(n.b), db);
        }
        break;
      }
      case OpKind::kTranspose: {
        Matrix da(av.rows(), av.cols());
        kernels::transpose(g, da);
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kAdd: {
        if (need_a) accumulate(grad_of(n.a), g);
        if (need_b) accumulate(grad_of(n.b), g);
        break;
      }
      case OpKind::kSub: {
        if (need_a) accumulate(grad_of(n.a), g);
        if (need_b) {
          Matrix db(g.rows(), g.cols());
          kernels::map1(g, db, [](double x) { return -x; });
          accumulate(grad_of(n.b), db);
        }
        break;
      }
      case OpKind::kMul: {
        if (need_a) {
          Matrix da(g.rows(), g.cols());
          kernels::map2(g, bv, da, [](double x, double y) { return x * y; });
          accumulate(grad_of(n.a), da);
        }
        if (need_b) {
          Matrix db(g.rows(), g.cols());
          kernels::map2(g, av, db, [](double x, double y) { return x * y; });
          accumulate(grad_of(n.b), db);
        }
        break;
      }
      case OpKind::kDiv: {
        if (need_a) {
          Matrix da(g.rows(), g.cols());
          kernels::map2(g, bv, da, [](double x, double y) { return x / y; });
          accumulate(grad_of(n.a), da);
        }
        if (need_b) {
          Matrix db(g.rows(), g.cols());
          for (size_t i = 0; i < db.size(); ++i)
            db.data()[i] = -g.data()[i] * n.value.data()[i] / bv.data()[i];
          accumulate(grad_of(n.b), db);
        }
        break;
      }
      case OpKind::kScale: {
        Matrix da(g.rows(), g.cols());
        const double s = n.s0;
        kernels::map1(g, da, [s](double x) { return s * x; });
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kAddScalar: {
        accumulate(grad_of(n.a), g);
        break;
      }
      case OpKind::kExp: {
        Matrix da(g.rows(), g.cols());
        kernels::map2(g, n.value, da, [](double x, double y) { return x * y; });
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kLog: {
        Matrix da(g.rows(), g.cols());
        kernels::map2(g, av, da, [](double x, double y) { return x / y; });
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kSqrt: {
        Matrix da(g.rows(), g.cols());
        kernels::map2(g, n.value, da, [](double x, double y) { return 0.5 * x / y; });
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kRelu: {
        Matrix da(g.rows(), g.cols());
        kernels::map2(g, av, da, [](double x, double y) { return y > 0.0 ? x : 0.0; });
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kClamp: {
        Matrix da(g.rows(), g.cols());
        const double lo = n.s0, hi = n.s1;
        kernels::map2(g, av, da,
                      [lo, hi](double x, double y) { return (y >= lo && y <= hi) ? x : 0.0; });
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kAddCol: {
        if (need_a) accumulate(grad_of(n.a), g);
        if (need_b) {
          Matrix db(bv.rows(), 1);
          kernels::row_sums(g, db);
          accumulate(grad_of(n.b), db);
        }
        break;
      }
      case OpKind::kAddRow: {
        if (need_a) accumulate(grad_of(n.a), g);
        if (need_b) {
          Matrix db(1, bv.cols());
          kernels::col_sums(g, db);
          accumulate(grad_of(n.b), db);
        }
        break;
      }
      case OpKind::kMulCol: {
        if (need_a) {
          Matrix da(g.rows(), g.cols());
          kernels::map_bcast_col(g, bv, da, [](double x, double y) { return x * y; });
          accumulate(grad_of(n.a), da);
        }
        if (need_b) {
          Matrix prod(g.rows(), g.cols());
          kernels::map2(g, av, prod, [](double x, double y) { return x * y; });
          Matrix db(bv.rows(), 1);
          kernels::row_sums(prod, db);
          accumulate(grad_of(n.b), db);
        }
        break;
      }
      case OpKind::kMulRow: {
        if (need_a) {
          Matrix da(g.rows(), g.cols());
          kernels::map_bcast_row(g, bv, da, [](double x, double y) { return x * y; });
          accumulate(grad_of(n.a), da);
        }
        if (need_b) {
          Matrix prod(g.rows(), g.cols());
          kernels::map2(g, av, prod, [](double x, double y) { return x * y; });
          Matrix db(1, bv.cols());
          kernels::col_sums(prod, db);
          accumulate(grad_of(n.b), db);
        }
        break;
      }
      case OpKind::kLseRows: {
        Matrix sm(av.rows(), av.cols());
        kernels::softmax_rows(av, sm);
        Matrix da(av.rows(), av.cols());
        kernels::map_bcast_col(sm, g, da, [](double s, double gi) { return s * gi; });
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kLseCols: {
        Matrix sm(av.rows(), av.cols());
        kernels::softmax_cols(av, sm);
        Matrix da(av.rows(), av.cols());
        kernels::map_bcast_row(sm, g, da, [](double s, double gj) { return s * gj; });
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kSumAll: {
        const double gs = g(0, 0);
        Matrix da = Matrix::filled(av.rows(), av.cols(), gs);
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kNormalizeRows: {
        // out_i = a_i / |a_i|; da_i = (g_i - out_i <out_i, g_i>) / |a_i|
        Matrix norms(av.rows(), 1);
        kernels::row_norms(av, norms);
        Matrix da(av.rows(), av.cols());
        for (int i = 0; i < av.rows(); ++i) {
          double dot = 0.0;
          for (int j = 0; j < av.cols(); ++j) dot += n.value(i, j) * g(i, j);
          const double inv = 1.0 / norms(i, 0);
          for (int j = 0; j < av.cols(); ++j)
            da(i, j) = (g(i, j) - n.value(i, j) * dot) * inv;
        }
        accumulate(grad_of(n.a), da);
        break;
      }
      case OpKind::kCombineRows: {
        Matrix da(av.rows(), av.cols());
        for (size_t r = 0; r < n.groups.size(); ++r) {
          const double inv = 1.0 / static_cast<double>(n.groups[r].size());
          for (int idx : n.groups[r])
            for (int j = 0; j < av.cols(); ++j) da(idx, j) += g(static_cast<int>(r), j) * inv;
        }
        accumulate(grad_of(n.a), da);
        break;
      }
    }
  }

  std::vector<Matrix> out;
  out.reserve(wrt.size());
  for (Var v : wrt) {
    if (touched[v.id()])
      out.push_back(std::move(grads[v.id()]));
    else
      out.push_back(Matrix(value(v.id()).rows(), value(v.id()).cols()));
  }
  return out;
}

Var cosine_similarity(Var a, Var b) {
  if (a.value().cols() != b.value().cols())
    throw dimension_error("cosine_similarity: column dimensions differ");
  return matmul(normalize_rows(a), transpose(normalize_rows(b)));
}

Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b) {
  Tape t;
  return cosine_similarity(t.constant(a), t.constant(b)).value();
}

}  // namespace otreg
