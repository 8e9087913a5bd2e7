#pragma once

// Reverse-mode differentiation over dense matrices. A Tape records every
// executed operation as a node (kind, parent indices, cached forward value);
// backward() runs a reverse topological sweep from a scalar root and returns
// gradients for the requested leaves. Nodes are appended only, so parents
// always precede their consumers.

#include <cstdint>
#include <span>
#include <vector>

#include "otreg/matrix.hpp"

namespace otreg {

class Tape;

// Lightweight handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }
  const Matrix& value() const;
  // Scalar convenience for 1x1 nodes.
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,      // s0 * a
  kAddScalar,  // a + s0
  kExp,
  kLog,
  kSqrt,
  kRelu,
  kClamp,    // clamp to [s0, s1], pass-through gradient on the closed interval
  kAddCol,   // m + c broadcast over columns (c is n x 1)
  kAddRow,   // m + r broadcast over rows (r is 1 x m)
  kMulCol,   // m * c broadcast
  kMulRow,   // m * r broadcast
  kLseRows,  // log-sum-exp per row -> n x 1
  kLseCols,  // 1 x m
  kSumAll,   // 1 x 1
  kNormalizeRows,
  kCombineRows,  // each output row is the mean of a group of input rows
};

class Tape {
 public:
  struct Node {
    OpKind kind;
    int a = -1;
    int b = -1;
    double s0 = 0.0;
    double s1 = 0.0;
    bool requires_grad = false;
    Matrix value;
    std::vector<std::vector<int>> groups;  // kCombineRows only
  };

  // Leaf whose gradient will be reported by backward().
  Var param(Matrix value);
  // Leaf treated as a constant (gradient not propagated into it).
  Var constant(Matrix value);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var relu(Var a);
  Var clamp(Var a, double lo, double hi);
  Var add_col(Var m, Var c);
  Var add_row(Var m, Var r);
  Var mul_col(Var m, Var c);
  Var mul_row(Var m, Var r);
  Var lse_rows(Var m);
  Var lse_cols(Var m);
  Var sum_all(Var m);
  Var normalize_rows(Var m);
  Var combine_rows(Var m, std::vector<std::vector<int>> groups);

  // Gradients of a scalar root w.r.t. the given leaves, in order. Leaves the
  // root does not depend on get zero gradients of the right shape.
  std::vector<Matrix> backward(Var root, std::span<const Var> wrt);

  size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[id]; }
  const Matrix& value(int id) const { return nodes_[id].value; }

 private:
  friend class Var;
  Var push(Node n);
  void check_owned(Var v, const char* what) const;

  std::vector<Node> nodes_;
};

// Free-function spellings so expressions read naturally.
inline Var matmul(Var a, Var b) { return a.tape()->matmul(a, b); }
inline Var transpose(Var a) { return a.tape()->transpose(a); }
inline Var add(Var a, Var b) { return a.tape()->add(a, b); }
inline Var sub(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var mul(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var div(Var a, Var b) { return a.tape()->div(a, b); }
inline Var scale(Var a, double s) { return a.tape()->scale(a, s); }
inline Var add_scalar(Var a, double s) { return a.tape()->add_scalar(a, s); }
inline Var exp(Var a) { return a.tape()->exp(a); }
inline Var log(Var a) { return a.tape()->log(a); }
inline Var sqrt(Var a) { return a.tape()->sqrt(a); }
inline Var relu(Var a) { return a.tape()->relu(a); }
inline Var clamp(Var a, double lo, double hi) { return a.tape()->clamp(a, lo, hi); }
inline Var add_col(Var m, Var c) { return m.tape()->add_col(m, c); }
inline Var add_row(Var m, Var r) { return m.tape()->add_row(m, r); }
inline Var mul_col(Var m, Var c) { return m.tape()->mul_col(m, c); }
inline Var mul_row(Var m, Var r) { return m.tape()->mul_row(m, r); }
inline Var lse_rows(Var m) { return m.tape()->lse_rows(m); }
inline Var lse_cols(Var m) { return m.tape()->lse_cols(m); }
inline Var sum_all(Var m) { return m.tape()->sum_all(m); }
inline Var normalize_rows(Var m) { return m.tape()->normalize_rows(m); }

// Pairwise cosine similarity of rows: out(i,j) = <a_i, b_j> / (|a_i||b_j|).
// Composition of normalize_rows and a transposed product; errors on zero rows.
Var cosine_similarity(Var a, Var b);
Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b);

}  // namespace otreg
