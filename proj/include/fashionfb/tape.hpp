#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fashionfb/tensor.hpp"

namespace fashionfb {

// Reverse-mode autodiff over a flat tape of primitive ops.
//
// Leaf nodes bind a parameter Tensor by pointer; replay() re-reads the bound
// storage, so nudging a parameter in place and replaying gives exact forward
// values for finite-difference checks, and replaying untouched parameters
// reproduces every intermediate bit for bit.
//
// Values and grads live in tape-owned buffers indexed by node id. Every
// primitive checks its output for NaN/Inf right after computing it.

class Tape;

struct Node {
  int id = -1;
  const Tape* tape = nullptr;
  int rows = 0;
  int cols = 0;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  MatMul,      // a[m x k] * b[k x n]
  Add,
  Mul,
  Scale,
  ConcatCols,  // [a | b], equal rows
  ConcatRows,  // [a ; b], equal cols
  Tanh,
  Sigmoid,
  Relu,
  Log,
  SoftmaxRows,
  LogSoftmaxRows,
  MeanRows,    // 1 x n column means
  MeanAll,     // 1 x 1
  LookupRows,  // gather rows of a by fixed index list
  Pick,        // 1 x 1, single element of a
  PickCols,    // m x 1, one chosen column per row
  StackRows,   // n-ary row concatenation
  DropoutMask, // multiply by a fixed mask tensor
  AttnScores,  // 1 x m, u^T tanh(p_i + q) per row i of p
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Binds param by pointer; the caller keeps it alive for the tape's lifetime.
  Node leaf(Tensor* param, const std::string& name = "");

  // Copies the value in; constants take no gradient.
  Node constant(const Tensor& value, const std::string& name = "");

  Node matmul(Node a, Node b);
  Node add(Node a, Node b);
  Node mul(Node a, Node b);
  Node scale(Node a, double s);
  Node concat_cols(Node a, Node b);
  Node concat_rows(Node a, Node b);
  Node tanh(Node a);
  Node sigmoid(Node a);
  Node relu(Node a);
  Node log(Node a);
  Node softmax_rows(Node a);
  Node log_softmax_rows(Node a);
  Node mean_rows(Node a);
  Node mean_all(Node a);
  Node lookup_rows(Node a, std::vector<int> idx);
  Node pick(Node a, int r, int c);
  // out[r] = a(r, cols[r]); cols.size() must equal a.rows.
  Node pick_cols(Node a, std::vector<int> cols);
  Node stack_rows(const std::vector<Node>& rows);
  Node dropout(Node a, const Tensor& mask);
  // p: m x a, q: 1 x a, u: 1 x a (or a x 1); result 1 x m.
  Node attn_scores(Node p, Node q, Node u);

  const Tensor& value(Node n) const;
  const Tensor& grad(Node n) const;

  // Re-runs the whole forward pass in recorded order, re-reading bound leaves.
  void replay();

  // Seeds d(loss)/d(loss) = 1 and accumulates grads; loss must be 1 x 1.
  void backward(Node loss);

  // Adds each leaf's accumulated grad into the map keyed by the bound Tensor*.
  void collect_grads(std::vector<std::pair<Tensor*, const Tensor*>>& out) const;

  std::size_t node_count() const { return steps_.size(); }
  std::size_t value_bytes() const;

 private:
  struct Step {
    OpKind kind;
    int a = -1, b = -1, c = -1;
    int rows = 0, cols = 0;
    Tensor* bound = nullptr;      // Leaf
    Tensor fixed;                 // Constant payload / dropout mask
    std::vector<int> idx;         // LookupRows
    int pr = 0, pc = 0;           // Pick coords
    double s = 0.0;               // Scale factor
    std::string name;
  };

  int push(Step st);
  void run_step(int i);
  void check_finite(int i) const;

  std::vector<Step> steps_;
  std::vector<Tensor> vals_;
  std::vector<Tensor> grads_;
  bool grads_ready_ = false;
};

// Central-difference gradient check against the tape's analytic grads.
// Returns the max relative error over every element of every leaf.
double grad_check(Tape& tape, Node loss, const std::vector<Tensor*>& params, double eps = 1e-5);

}  // namespace fashionfb
