#include "fashionfb/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include "fashionfb/kernels.hpp"

namespace fashionfb {

namespace k = kernels;

int Tape::push(Step st) {
  const int id = static_cast<int>(steps_.size());
  steps_.push_back(std::move(st));
  vals_.emplace_back(steps_.back().rows, steps_.back().cols);
  grads_.emplace_back(steps_.back().rows, steps_.back().cols);
  run_step(id);
  check_finite(id);
  return id;
}

void Tape::check_finite(int i) const {
  const Tensor& v = vals_[i];
  if (!k::all_finite(v.ptr(), v.size())) {
    const Step& st = steps_[i];
    char buf[128];
    std::snprintf(buf, sizeof(buf), "non-finite value at node %d (kind %d%s%s)", i,
                  static_cast<int>(st.kind), st.name.empty() ? "" : " ",
                  st.name.c_str());
    throw std::runtime_error(buf);
  }
}

Node Tape::leaf(Tensor* param, const std::string& name) {
  Step st;
  st.kind = OpKind::Leaf;
  st.rows = param->rows;
  st.cols = param->cols;
  st.bound = param;
  st.name = name;
  const int id = push(std::move(st));
  return {id, this, param->rows, param->cols};
}

Node Tape::constant(const Tensor& value, const std::string& name) {
  Step st;
  st.kind = OpKind::Constant;
  st.rows = value.rows;
  st.cols = value.cols;
  st.fixed = value;
  st.name = name;
  const int id = push(std::move(st));
  return {id, this, value.rows, value.cols};
}

Node Tape::matmul(Node a, Node b) {
  check_shape(a.cols == b.rows, "matmul");
  Step st;
  st.kind = OpKind::MatMul;
  st.a = a.id;
  st.b = b.id;
  st.rows = a.rows;
  st.cols = b.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::add(Node a, Node b) {
  check_shape(a.rows == b.rows && a.cols == b.cols, "add");
  Step st;
  st.kind = OpKind::Add;
  st.a = a.id;
  st.b = b.id;
  st.rows = a.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::mul(Node a, Node b) {
  check_shape(a.rows == b.rows && a.cols == b.cols, "mul");
  Step st;
  st.kind = OpKind::Mul;
  st.a = a.id;
  st.b = b.id;
  st.rows = a.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::scale(Node a, double s) {
  Step st;
  st.kind = OpKind::Scale;
  st.a = a.id;
  st.s = s;
  st.rows = a.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::concat_cols(Node a, Node b) {
  check_shape(a.rows == b.rows, "concat_cols");
  Step st;
  st.kind = OpKind::ConcatCols;
  st.a = a.id;
  st.b = b.id;
  st.rows = a.rows;
  st.cols = a.cols + b.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::concat_rows(Node a, Node b) {
  check_shape(a.cols == b.cols, "concat_rows");
  Step st;
  st.kind = OpKind::ConcatRows;
  st.a = a.id;
  st.b = b.id;
  st.rows = a.rows + b.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::tanh(Node a) {
  Step st;
  st.kind = OpKind::Tanh;
  st.a = a.id;
  st.rows = a.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::sigmoid(Node a) {
  Step st;
  st.kind = OpKind::Sigmoid;
  st.a = a.id;
  st.rows = a.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::relu(Node a) {
  Step st;
  st.kind = OpKind::Relu;
  st.a = a.id;
  st.rows = a.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::log(Node a) {
  Step st;
  st.kind = OpKind::Log;
  st.a = a.id;
  st.rows = a.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::softmax_rows(Node a) {
  Step st;
  st.kind = OpKind::SoftmaxRows;
  st.a = a.id;
  st.rows = a.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::log_softmax_rows(Node a) {
  Step st;
  st.kind = OpKind::LogSoftmaxRows;
  st.a = a.id;
  st.rows = a.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::mean_rows(Node a) {
  Step st;
  st.kind = OpKind::MeanRows;
  st.a = a.id;
  st.rows = 1;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, 1, a.cols};
}

Node Tape::mean_all(Node a) {
  Step st;
  st.kind = OpKind::MeanAll;
  st.a = a.id;
  st.rows = 1;
  st.cols = 1;
  const int id = push(std::move(st));
  return {id, this, 1, 1};
}

Node Tape::lookup_rows(Node a, std::vector<int> idx) {
  Step st;
  st.kind = OpKind::LookupRows;
  st.a = a.id;
  st.rows = static_cast<int>(idx.size());
  st.cols = a.cols;
  st.idx = std::move(idx);
  const int id = push(std::move(st));
  return {id, this, steps_.back().rows, a.cols};
}

Node Tape::pick(Node a, int r, int c) {
  check_shape(r >= 0 && r < a.rows && c >= 0 && c < a.cols, "pick");
  Step st;
  st.kind = OpKind::Pick;
  st.a = a.id;
  st.pr = r;
  st.pc = c;
  st.rows = 1;
  st.cols = 1;
  const int id = push(std::move(st));
  return {id, this, 1, 1};
}

Node Tape::pick_cols(Node a, std::vector<int> cols) {
  check_shape(static_cast<int>(cols.size()) == a.rows, "pick_cols count");
  for (int c : cols) check_shape(c >= 0 && c < a.cols, "pick_cols range");
  Step st;
  st.kind = OpKind::PickCols;
  st.a = a.id;
  st.idx = std::move(cols);
  st.rows = a.rows;
  st.cols = 1;
  const int id = push(std::move(st));
  return {id, this, a.rows, 1};
}

Node Tape::stack_rows(const std::vector<Node>& rows) {
  check_shape(!rows.empty(), "stack_rows empty");
  int total = 0;
  for (const Node& r : rows) {
    check_shape(r.cols == rows[0].cols, "stack_rows widths");
    total += r.rows;
  }
  Step st;
  st.kind = OpKind::StackRows;
  for (const Node& r : rows) st.idx.push_back(r.id);
  st.rows = total;
  st.cols = rows[0].cols;
  const int id = push(std::move(st));
  return {id, this, total, rows[0].cols};
}

Node Tape::dropout(Node a, const Tensor& mask) {
  check_shape(a.rows == mask.rows && a.cols == mask.cols, "dropout");
  Step st;
  st.kind = OpKind::DropoutMask;
  st.a = a.id;
  st.fixed = mask;
  st.rows = a.rows;
  st.cols = a.cols;
  const int id = push(std::move(st));
  return {id, this, st.rows, st.cols};
}

Node Tape::attn_scores(Node p, Node q, Node u) {
  check_shape(q.rows * q.cols == p.cols && u.rows * u.cols == p.cols, "attn_scores");
  Step st;
  st.kind = OpKind::AttnScores;
  st.a = p.id;
  st.b = q.id;
  st.c = u.id;
  st.rows = 1;
  st.cols = p.rows;
  const int id = push(std::move(st));
  return {id, this, 1, p.rows};
}

void Tape::run_step(int i) {
  Step& st = steps_[i];
  Tensor& out = vals_[i];
  switch (st.kind) {
    case OpKind::Leaf:
      check_shape(st.bound->rows == st.rows && st.bound->cols == st.cols, "leaf rebind");
      out.data = st.bound->data;
      break;
    case OpKind::Constant:
      out.data = st.fixed.data;
      break;
    case OpKind::MatMul: {
      const Tensor& a = vals_[st.a];
      const Tensor& b = vals_[st.b];
      k::matmul_nn(a.ptr(), b.ptr(), out.ptr(), a.rows, a.cols, b.cols);
      break;
    }
    case OpKind::Add:
      k::add(vals_[st.a].ptr(), vals_[st.b].ptr(), out.ptr(), out.size());
      break;
    case OpKind::Mul:
      k::mul(vals_[st.a].ptr(), vals_[st.b].ptr(), out.ptr(), out.size());
      break;
    case OpKind::Scale:
      k::scale(vals_[st.a].ptr(), st.s, out.ptr(), out.size());
      break;
    case OpKind::ConcatCols: {
      const Tensor& a = vals_[st.a];
      const Tensor& b = vals_[st.b];
      for (int r = 0; r < st.rows; ++r) {
        double* orow = out.row(r);
        const double* ar = a.row(r);
        const double* br = b.row(r);
        for (int c = 0; c < a.cols; ++c) orow[c] = ar[c];
        for (int c = 0; c < b.cols; ++c) orow[a.cols + c] = br[c];
      }
      break;
    }
    case OpKind::ConcatRows: {
      const Tensor& a = vals_[st.a];
      const Tensor& b = vals_[st.b];
      std::copy(a.data.begin(), a.data.end(), out.data.begin());
      std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.size());
      break;
    }
    case OpKind::Tanh:
      k::tanh(vals_[st.a].ptr(), out.ptr(), out.size());
      break;
    case OpKind::Sigmoid:
      k::sigmoid(vals_[st.a].ptr(), out.ptr(), out.size());
      break;
    case OpKind::Relu:
      k::relu(vals_[st.a].ptr(), out.ptr(), out.size());
      break;
    case OpKind::Log:
      k::log(vals_[st.a].ptr(), out.ptr(), out.size());
      break;
    case OpKind::SoftmaxRows:
      k::softmax_rows(vals_[st.a].ptr(), out.ptr(), st.rows, st.cols);
      break;
    case OpKind::LogSoftmaxRows:
      k::log_softmax_rows(vals_[st.a].ptr(), out.ptr(), st.rows, st.cols);
      break;
    case OpKind::MeanRows:
      k::mean_rows(vals_[st.a].ptr(), out.ptr(), vals_[st.a].rows, st.cols);
      break;
    case OpKind::MeanAll:
      out.data[0] = k::sum_serial(vals_[st.a].ptr(), vals_[st.a].size()) /
                    static_cast<double>(vals_[st.a].size());
      break;
    case OpKind::LookupRows: {
      const Tensor& a = vals_[st.a];
      for (int r = 0; r < st.rows; ++r) {
        const double* src = a.row(st.idx[r]);
        double* dst = out.row(r);
        for (int c = 0; c < st.cols; ++c) dst[c] = src[c];
      }
      break;
    }
    case OpKind::Pick:
      out.data[0] = vals_[st.a].at(st.pr, st.pc);
      break;
    case OpKind::PickCols: {
      const Tensor& a = vals_[st.a];
      for (int r = 0; r < st.rows; ++r) out.data[r] = a.at(r, st.idx[r]);
      break;
    }
    case OpKind::StackRows: {
      double* dst = out.ptr();
      for (int src : st.idx) {
        const Tensor& a = vals_[src];
        std::copy(a.data.begin(), a.data.end(), dst);
        dst += a.size();
      }
      break;
    }
    case OpKind::DropoutMask:
      k::mul(vals_[st.a].ptr(), st.fixed.ptr(), out.ptr(), out.size());
      break;
    case OpKind::AttnScores: {
      const Tensor& p = vals_[st.a];
      k::attn_scores(p.ptr(), vals_[st.b].ptr(), vals_[st.c].ptr(), out.ptr(), p.rows, p.cols);
      break;
    }
  }
}

void Tape::replay() {
  for (int i = 0; i < static_cast<int>(steps_.size()); ++i) {
    run_step(i);
    check_finite(i);
  }
  grads_ready_ = false;
}

const Tensor& Tape::value(Node n) const { return vals_[n.id]; }

const Tensor& Tape::grad(Node n) const {
  if (!grads_ready_) throw std::runtime_error("grad read before backward()");
  return grads_[n.id];
}

void Tape::backward(Node loss) {
  check_shape(loss.rows == 1 && loss.cols == 1, "backward loss shape");
  for (Tensor& g : grads_) g.zero();
  grads_[loss.id].data[0] = 1.0;

  for (int i = loss.id; i >= 0; --i) {
    const Step& st = steps_[i];
    const Tensor& g = grads_[i];
    switch (st.kind) {
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
      case OpKind::MatMul: {
        const Tensor& a = vals_[st.a];
        const Tensor& b = vals_[st.b];
        // dA += G * B^T ; dB += A^T * G
        k::matmul_nt(g.ptr(), b.ptr(), grads_[st.a].ptr(), a.rows, b.cols, b.rows, true);
        k::matmul_tn(a.ptr(), g.ptr(), grads_[st.b].ptr(), a.rows, a.cols, g.cols, true);
        break;
      }
      case OpKind::Add:
        k::axpy(1.0, g.ptr(), grads_[st.a].ptr(), g.size());
        k::axpy(1.0, g.ptr(), grads_[st.b].ptr(), g.size());
        break;
      case OpKind::Mul: {
        const Tensor& a = vals_[st.a];
        const Tensor& b = vals_[st.b];
        double* da = grads_[st.a].ptr();
        double* db = grads_[st.b].ptr();
        for (std::size_t j = 0; j < g.size(); ++j) {
          da[j] += g.data[j] * b.data[j];
          db[j] += g.data[j] * a.data[j];
        }
        break;
      }
      case OpKind::Scale:
        k::axpy(st.s, g.ptr(), grads_[st.a].ptr(), g.size());
        break;
      case OpKind::ConcatCols: {
        Tensor& da = grads_[st.a];
        Tensor& db = grads_[st.b];
        for (int r = 0; r < st.rows; ++r) {
          const double* grow = g.row(r);
          double* dar = da.row(r);
          double* dbr = db.row(r);
          for (int c = 0; c < da.cols; ++c) dar[c] += grow[c];
          for (int c = 0; c < db.cols; ++c) dbr[c] += grow[da.cols + c];
        }
        break;
      }
      case OpKind::ConcatRows: {
        Tensor& da = grads_[st.a];
        Tensor& db = grads_[st.b];
        for (std::size_t j = 0; j < da.size(); ++j) da.data[j] += g.data[j];
        for (std::size_t j = 0; j < db.size(); ++j) db.data[j] += g.data[da.size() + j];
        break;
      }
      case OpKind::Tanh: {
        const Tensor& y = vals_[i];
        double* da = grads_[st.a].ptr();
        for (std::size_t j = 0; j < g.size(); ++j)
          da[j] += g.data[j] * (1.0 - y.data[j] * y.data[j]);
        break;
      }
      case OpKind::Sigmoid: {
        const Tensor& y = vals_[i];
        double* da = grads_[st.a].ptr();
        for (std::size_t j = 0; j < g.size(); ++j)
          da[j] += g.data[j] * y.data[j] * (1.0 - y.data[j]);
        break;
      }
      case OpKind::Relu: {
        const Tensor& x = vals_[st.a];
        double* da = grads_[st.a].ptr();
        for (std::size_t j = 0; j < g.size(); ++j)
          if (x.data[j] > 0.0) da[j] += g.data[j];
        break;
      }
      case OpKind::Log: {
        const Tensor& x = vals_[st.a];
        double* da = grads_[st.a].ptr();
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += g.data[j] / x.data[j];
        break;
      }
      case OpKind::SoftmaxRows: {
        // dx_j = y_j * (g_j - sum_k g_k y_k), per row
        const Tensor& y = vals_[i];
        Tensor& da = grads_[st.a];
        for (int r = 0; r < st.rows; ++r) {
          const double* yr = y.row(r);
          const double* gr = g.row(r);
          double dot = 0.0;
          for (int c = 0; c < st.cols; ++c) dot += gr[c] * yr[c];
          double* dar = da.row(r);
          for (int c = 0; c < st.cols; ++c) dar[c] += yr[c] * (gr[c] - dot);
        }
        break;
      }
      case OpKind::LogSoftmaxRows: {
        // dx_j = g_j - exp(y_j) * sum_k g_k, per row
        const Tensor& y = vals_[i];
        Tensor& da = grads_[st.a];
        for (int r = 0; r < st.rows; ++r) {
          const double* yr = y.row(r);
          const double* gr = g.row(r);
          double gsum = 0.0;
          for (int c = 0; c < st.cols; ++c) gsum += gr[c];
          double* dar = da.row(r);
          for (int c = 0; c < st.cols; ++c) dar[c] += gr[c] - std::exp(yr[c]) * gsum;
        }
        break;
      }
      case OpKind::MeanRows: {
        const int m = vals_[st.a].rows;
        Tensor& da = grads_[st.a];
        const double inv = 1.0 / m;
        for (int r = 0; r < m; ++r) {
          double* dar = da.row(r);
          for (int c = 0; c < st.cols; ++c) dar[c] += g.data[c] * inv;
        }
        break;
      }
      case OpKind::MeanAll: {
        Tensor& da = grads_[st.a];
        const double gi = g.data[0] / static_cast<double>(da.size());
        for (std::size_t j = 0; j < da.size(); ++j) da.data[j] += gi;
        break;
      }
      case OpKind::LookupRows: {
        Tensor& da = grads_[st.a];
        for (int r = 0; r < st.rows; ++r) {
          double* dar = da.row(st.idx[r]);
          const double* gr = g.row(r);
          for (int c = 0; c < st.cols; ++c) dar[c] += gr[c];
        }
        break;
      }
      case OpKind::Pick:
        grads_[st.a].at(st.pr, st.pc) += g.data[0];
        break;
      case OpKind::PickCols: {
        Tensor& da = grads_[st.a];
        for (int r = 0; r < st.rows; ++r) da.at(r, st.idx[r]) += g.data[r];
        break;
      }
      case OpKind::StackRows: {
        const double* src = g.ptr();
        for (int in : st.idx) {
          Tensor& da = grads_[in];
          for (std::size_t j = 0; j < da.size(); ++j) da.data[j] += src[j];
          src += da.size();
        }
        break;
      }
      case OpKind::DropoutMask: {
        double* da = grads_[st.a].ptr();
        const double* mk = st.fixed.ptr();
        for (std::size_t j = 0; j < g.size(); ++j) da[j] += g.data[j] * mk[j];
        break;
      }
      case OpKind::AttnScores: {
        const Tensor& p = vals_[st.a];
        k::attn_scores_backward_serial(p.ptr(), vals_[st.b].ptr(), vals_[st.c].ptr(), g.ptr(),
                                       grads_[st.a].ptr(), grads_[st.b].ptr(), grads_[st.c].ptr(),
                                       p.rows, p.cols);
        break;
      }
    }
  }
  grads_ready_ = true;
}

void Tape::collect_grads(std::vector<std::pair<Tensor*, const Tensor*>>& out) const {
  if (!grads_ready_) throw std::runtime_error("collect_grads before backward()");
  for (std::size_t i = 0; i < steps_.size(); ++i)
    if (steps_[i].kind == OpKind::Leaf) out.emplace_back(steps_[i].bound, &grads_[i]);
}

std::size_t Tape::value_bytes() const {
  std::size_t total = 0;
  for (const Tensor& t : vals_) total += t.size() * sizeof(double);
  return 2 * total;  // values + grads
}

double grad_check(Tape& tape, Node loss, const std::vector<Tensor*>& params, double eps) {
  tape.backward(loss);

  // Snapshot analytic grads keyed by parameter storage.
  std::vector<std::pair<Tensor*, const Tensor*>> pairs;
  tape.collect_grads(pairs);
  std::vector<Tensor> analytic;
  std::vector<Tensor*> owners;
  for (Tensor* p : params) {
    Tensor acc(p->rows, p->cols);
    for (auto& [bound, g] : pairs)
      if (bound == p)
        for (std::size_t j = 0; j < acc.size(); ++j) acc.data[j] += g->data[j];
    analytic.push_back(std::move(acc));
    owners.push_back(p);
  }

  double worst = 0.0;
  for (std::size_t pi = 0; pi < owners.size(); ++pi) {
    Tensor* p = owners[pi];
    for (std::size_t j = 0; j < p->size(); ++j) {
      const double orig = p->data[j];
      p->data[j] = orig + eps;
      tape.replay();
      const double up = tape.value(loss).data[0];
      p->data[j] = orig - eps;
      tape.replay();
      const double dn = tape.value(loss).data[0];
      p->data[j] = orig;
      const double numeric = (up - dn) / (2.0 * eps);
      const double a = analytic[pi].data[j];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > worst) worst = rel;
    }
  }
  tape.replay();
  tape.backward(loss);
  return worst;
}

}  // namespace fashionfb
