#include "dsfpo/tape.hpp"

#include <algorithm>
#include <cmath>

namespace dsfpo {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)
}

Var Tape::push(Node n) {
  if (n.op != Op::kLeaf && n.op != Op::kConst) {
    // An interior node carries gradient only if some input does; stop_gradient
    // cuts the flow regardless.
    if (n.op == Op::kStopGrad) {
      n.needs_grad = false;
    } else {
      bool any = false;
      for (int in : n.in)
        if (in >= 0 && nodes_[std::size_t(in)].needs_grad) any = true;
      n.needs_grad = any;
    }
  }
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  check(v, "node");
  return nodes_[std::size_t(v.id)];
}

void Tape::check(Var v, const char* who) const {
  if (!v.valid() || std::size_t(v.id) >= nodes_.size())
    throw TapeError(std::string(who) + ": invalid node handle");
}

void Tape::fail_shape(const char* op, const Node& a, const Node* b) const {
  std::string msg = std::string(op) + ": bad operand shapes " + a.value.shape_str();
  if (b) msg += " x " + b->value.shape_str();
  msg += " at node " + std::to_string(nodes_.size());
  throw ShapeError(msg);
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(value);
  n.needs_grad = false;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  check(a, "matmul");
  check(b, "matmul");
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  Node n;
  n.op = Op::kMatmul;
  n.in = {a.id, b.id, -1};
  if (A.rank() == 2 && B.rank() == 2 && A.shape()[1] == B.shape()[0]) {
    const std::size_t N = A.shape()[0], K = A.shape()[1], M = B.shape()[1];
    Tensor C({N, M});
    for (std::size_t i = 0; i < N; ++i) {
      const double* arow = A.data() + i * K;
      double* crow = C.data() + i * M;
      for (std::size_t k = 0; k < K; ++k) {
        const double aik = arow[k];
        const double* brow = B.data() + k * M;
        for (std::size_t j = 0; j < M; ++j) crow[j] += aik * brow[j];
      }
    }
    n.value = std::move(C);
  } else if (A.rank() == 2 && B.rank() == 1 && A.shape()[1] == B.shape()[0]) {
    const std::size_t N = A.shape()[0], K = A.shape()[1];
    Tensor C({N});
    for (std::size_t i = 0; i < N; ++i) {
      const double* arow = A.data() + i * K;
      double acc = 0;
      for (std::size_t k = 0; k < K; ++k) acc += arow[k] * B[k];
      C[i] = acc;
    }
    n.value = std::move(C);
  } else {
    fail_shape("matmul", nodes_[a.id], &nodes_[b.id]);
  }
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check(a, "add");
  check(b, "add");
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  Node n;
  n.in = {a.id, b.id, -1};
  if (A.same_shape(B)) {
    n.op = Op::kAdd;
    Tensor C(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] + B[i];
    n.value = std::move(C);
  } else if (A.rank() == 2 && B.rank() == 1 && A.shape()[1] == B.shape()[0]) {
    n.op = Op::kAddBias;
    const std::size_t N = A.shape()[0], M = A.shape()[1];
    Tensor C({N, M});
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < M; ++j) C.at(i, j) = A.at(i, j) + B[j];
    n.value = std::move(C);
  } else {
    fail_shape("add", nodes_[a.id], &nodes_[b.id]);
  }
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check(a, "sub");
  check(b, "sub");
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  if (!A.same_shape(B)) fail_shape("sub", nodes_[a.id], &nodes_[b.id]);
  Node n;
  n.op = Op::kSub;
  n.in = {a.id, b.id, -1};
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] - B[i];
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check(a, "mul");
  check(b, "mul");
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  if (!A.same_shape(B)) fail_shape("mul", nodes_[a.id], &nodes_[b.id]);
  Node n;
  n.op = Op::kMul;
  n.in = {a.id, b.id, -1};
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * B[i];
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  check(a, "scale");
  const Tensor& A = nodes_[a.id].value;
  Node n;
  n.op = Op::kScale;
  n.in = {a.id, -1, -1};
  n.s0 = s;
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = s * A[i];
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double s) {
  check(a, "add_scalar");
  const Tensor& A = nodes_[a.id].value;
  Node n;
  n.op = Op::kAddScalar;
  n.in = {a.id, -1, -1};
  n.s0 = s;
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] + s;
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::elu(Var a) {
  check(a, "elu");
  const Tensor& A = nodes_[a.id].value;
  Node n;
  n.op = Op::kElu;
  n.in = {a.id, -1, -1};
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i)
    C[i] = A[i] > 0.0 ? A[i] : std::expm1(A[i]);
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  check(a, "tanh");
  const Tensor& A = nodes_[a.id].value;
  Node n;
  n.op = Op::kTanh;
  n.in = {a.id, -1, -1};
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = std::tanh(A[i]);
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  check(a, "exp");
  const Tensor& A = nodes_[a.id].value;
  Node n;
  n.op = Op::kExp;
  n.in = {a.id, -1, -1};
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = std::exp(A[i]);
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::clip(Var a, double lo, double hi) {
  check(a, "clip");
  const Tensor& A = nodes_[a.id].value;
  Node n;
  n.op = Op::kClip;
  n.in = {a.id, -1, -1};
  n.s0 = lo;
  n.s1 = hi;
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = std::clamp(A[i], lo, hi);
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::minimum(Var a, Var b) {
  check(a, "minimum");
  check(b, "minimum");
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  if (!A.same_shape(B)) fail_shape("minimum", nodes_[a.id], &nodes_[b.id]);
  Node n;
  n.op = Op::kMin;
  n.in = {a.id, b.id, -1};
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = std::min(A[i], B[i]);
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::log_softmax(Var a) {
  check(a, "log_softmax");
  const Tensor& A = nodes_[a.id].value;
  if (A.rank() != 1 && A.rank() != 2) fail_shape("log_softmax", nodes_[a.id], nullptr);
  const std::size_t N = A.rank() == 2 ? A.shape()[0] : 1;
  const std::size_t K = A.rank() == 2 ? A.shape()[1] : A.shape()[0];
  Node n;
  n.op = Op::kLogSoftmax;
  n.in = {a.id, -1, -1};
  Tensor C(A.shape());
  for (std::size_t i = 0; i < N; ++i) {
    const double* zi = A.data() + i * K;
    double* ci = C.data() + i * K;
    double m = zi[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, zi[k]);
    double lse = 0;
    for (std::size_t k = 0; k < K; ++k) lse += std::exp(zi[k] - m);
    lse = m + std::log(lse);
    for (std::size_t k = 0; k < K; ++k) ci[k] = zi[k] - lse;
  }
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::gaussian_log_prob(Var mean, Var log_std, Var x) {
  check(mean, "gaussian_log_prob");
  check(log_std, "gaussian_log_prob");
  check(x, "gaussian_log_prob");
  const Tensor& M = nodes_[mean.id].value;
  const Tensor& S = nodes_[log_std.id].value;
  const Tensor& X = nodes_[x.id].value;
  const std::size_t D = M.rank() == 2 ? M.shape()[1] : M.shape()[0];
  if (!M.same_shape(X) || S.rank() != 1 || S.shape()[0] != D)
    fail_shape("gaussian_log_prob", nodes_[mean.id], &nodes_[log_std.id]);
  const std::size_t N = M.rank() == 2 ? M.shape()[0] : 1;
  Node n;
  n.op = Op::kGaussLogProb;
  n.in = {mean.id, log_std.id, x.id};
  Tensor C({N});
  for (std::size_t i = 0; i < N; ++i) {
    double lp = 0;
    for (std::size_t j = 0; j < D; ++j) {
      const double z = (X[i * D + j] - M[i * D + j]) * std::exp(-S[j]);
      lp += -0.5 * kLog2Pi - S[j] - 0.5 * z * z;
    }
    C[i] = lp;
  }
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::row_sum(Var a) {
  check(a, "row_sum");
  const Tensor& A = nodes_[a.id].value;
  if (A.rank() != 2) fail_shape("row_sum", nodes_[a.id], nullptr);
  const std::size_t N = A.shape()[0], M = A.shape()[1];
  Node n;
  n.op = Op::kRowSum;
  n.in = {a.id, -1, -1};
  Tensor C({N});
  for (std::size_t i = 0; i < N; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < M; ++j) acc += A.at(i, j);
    C[i] = acc;
  }
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  check(a, "sum");
  const Tensor& A = nodes_[a.id].value;
  Node n;
  n.op = Op::kSum;
  n.in = {a.id, -1, -1};
  double acc = 0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A[i];
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  check(a, "mean");
  const Tensor& A = nodes_[a.id].value;
  if (A.size() == 0) fail_shape("mean", nodes_[a.id], nullptr);
  Node n;
  n.op = Op::kMean;
  n.in = {a.id, -1, -1};
  double acc = 0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A[i];
  n.value = Tensor::scalar(acc / double(A.size()));
  return push(std::move(n));
}

Var Tape::gather(Var a, std::vector<int> idx) {
  check(a, "gather");
  const Tensor& A = nodes_[a.id].value;
  if (A.rank() != 2 || idx.size() != A.shape()[0]) fail_shape("gather", nodes_[a.id], nullptr);
  const std::size_t N = A.shape()[0], K = A.shape()[1];
  for (int k : idx)
    if (k < 0 || std::size_t(k) >= K)
      throw ShapeError("gather: index " + std::to_string(k) + " out of range [0," +
                       std::to_string(K) + ") at node " + std::to_string(nodes_.size()));
  Node n;
  n.op = Op::kGather;
  n.in = {a.id, -1, -1};
  Tensor C({N});
  for (std::size_t i = 0; i < N; ++i) C[i] = A.at(i, std::size_t(idx[i]));
  n.idx = std::move(idx);
  n.value = std::move(C);
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, int start, int len) {
  check(a, "slice_cols");
  const Tensor& A = nodes_[a.id].value;
  const std::size_t M = A.rank() == 2 ? A.shape()[1] : A.shape()[0];
  if (start < 0 || len <= 0 || std::size_t(start + len) > M)
    throw ShapeError("slice_cols: [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of " + A.shape_str());
  Node n;
  n.op = Op::kSliceCols;
  n.in = {a.id, -1, -1};
  n.idx = {start, len};
  if (A.rank() == 2) {
    const std::size_t N = A.shape()[0];
    Tensor C({N, std::size_t(len)});
    for (std::size_t i = 0; i < N; ++i)
      for (int j = 0; j < len; ++j) C.at(i, std::size_t(j)) = A.at(i, std::size_t(start + j));
    n.value = std::move(C);
  } else {
    Tensor C({std::size_t(len)});
    for (int j = 0; j < len; ++j) C[std::size_t(j)] = A[std::size_t(start + j)];
    n.value = std::move(C);
  }
  return push(std::move(n));
}

Var Tape::stop_gradient(Var a) {
  check(a, "stop_gradient");
  Node n;
  n.op = Op::kStopGrad;
  n.in = {a.id, -1, -1};
  n.value = nodes_[a.id].value;
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  if (!grads_ready_) throw TapeError("grad: backward has not run on this tape");
  return node(v).grad;
}

void Tape::backward(Var out) {
  check(out, "backward");
  Tensor seed(nodes_[out.id].value.shape());
  seed.fill(1.0);
  backward(out, seed);
}

void Tape::backward(Var out, const Tensor& seed) {
  if (nodes_.empty()) throw TapeError("backward: empty tape (forward has not run)");
  check(out, "backward");
  if (!seed.same_shape(nodes_[out.id].value))
    throw ShapeError("backward: seed shape " + seed.shape_str() + " does not match output " +
                     nodes_[out.id].value.shape_str());

  for (auto& n : nodes_) {
    n.grad = Tensor(n.value.shape());  // zeros
  }
  nodes_[out.id].grad = seed;
  grads_ready_ = true;

  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[std::size_t(id)];
    if (!n.needs_grad) continue;  // nothing upstream reaches a leaf
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kMatmul: {
        Node& na = nodes_[n.in[0]];
        Node& nb = nodes_[n.in[1]];
        const Tensor& A = na.value;
        const Tensor& B = nb.value;
        if (B.rank() == 2) {
          const std::size_t N = A.shape()[0], K = A.shape()[1], M = B.shape()[1];
          if (na.needs_grad) {
            // dA = g * B^T
            for (std::size_t i = 0; i < N; ++i)
              for (std::size_t k = 0; k < K; ++k) {
                const double* grow = g.data() + i * M;
                const double* brow = B.data() + k * M;
                double acc = 0;
                for (std::size_t j = 0; j < M; ++j) acc += grow[j] * brow[j];
                na.grad[i * K + k] += acc;
              }
          }
          if (nb.needs_grad) {
            // dB = A^T * g
            for (std::size_t i = 0; i < N; ++i) {
              const double* arow = A.data() + i * K;
              const double* grow = g.data() + i * M;
              for (std::size_t k = 0; k < K; ++k) {
                const double aik = arow[k];
                double* brow = nb.grad.data() + k * M;
                for (std::size_t j = 0; j < M; ++j) brow[j] += aik * grow[j];
              }
            }
          }
        } else {
          const std::size_t N = A.shape()[0], K = A.shape()[1];
          for (std::size_t i = 0; i < N; ++i) {
            const double gi = g[i];
            const double* arow = A.data() + i * K;
            double* garow = na.grad.data() + i * K;
            for (std::size_t k = 0; k < K; ++k) {
              if (na.needs_grad) garow[k] += gi * B[k];
              if (nb.needs_grad) nb.grad[k] += gi * arow[k];
            }
          }
        }
        break;
      }
      case Op::kAdd: {
        Node& na = nodes_[n.in[0]];
        Node& nb = nodes_[n.in[1]];
        for (std::size_t i = 0; i < g.size(); ++i) {
          na.grad[i] += g[i];
          nb.grad[i] += g[i];
        }
        break;
      }
      case Op::kAddBias: {
        Node& na = nodes_[n.in[0]];
        Node& nb = nodes_[n.in[1]];
        const std::size_t N = n.value.shape()[0], M = n.value.shape()[1];
        for (std::size_t i = 0; i < N; ++i)
          for (std::size_t j = 0; j < M; ++j) {
            na.grad[i * M + j] += g[i * M + j];
            nb.grad[j] += g[i * M + j];
          }
        break;
      }
      case Op::kSub: {
        Node& na = nodes_[n.in[0]];
        Node& nb = nodes_[n.in[1]];
        for (std::size_t i = 0; i < g.size(); ++i) {
          na.grad[i] += g[i];
          nb.grad[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        Node& na = nodes_[n.in[0]];
        Node& nb = nodes_[n.in[1]];
        for (std::size_t i = 0; i < g.size(); ++i) {
          na.grad[i] += g[i] * nb.value[i];
          nb.grad[i] += g[i] * na.value[i];
        }
        break;
      }
      case Op::kScale: {
        Node& na = nodes_[n.in[0]];
        for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += n.s0 * g[i];
        break;
      }
      case Op::kAddScalar: {
        Node& na = nodes_[n.in[0]];
        for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i];
        break;
      }
      case Op::kElu: {
        Node& na = nodes_[n.in[0]];
        for (std::size_t i = 0; i < g.size(); ++i)
          na.grad[i] += g[i] * (na.value[i] > 0.0 ? 1.0 : n.value[i] + 1.0);
        break;
      }
      case Op::kTanh: {
        Node& na = nodes_[n.in[0]];
        for (std::size_t i = 0; i < g.size(); ++i)
          na.grad[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case Op::kExp: {
        Node& na = nodes_[n.in[0]];
        for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * n.value[i];
        break;
      }
      case Op::kClip: {
        Node& na = nodes_[n.in[0]];
        for (std::size_t i = 0; i < g.size(); ++i)
          if (na.value[i] > n.s0 && na.value[i] < n.s1) na.grad[i] += g[i];
        break;
      }
      case Op::kMin: {
        Node& na = nodes_[n.in[0]];
        Node& nb = nodes_[n.in[1]];
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (na.value[i] <= nb.value[i])
            na.grad[i] += g[i];
          else
            nb.grad[i] += g[i];
        }
        break;
      }
      case Op::kLogSoftmax: {
        Node& na = nodes_[n.in[0]];
        const std::size_t N = n.value.rank() == 2 ? n.value.shape()[0] : 1;
        const std::size_t K = n.value.rank() == 2 ? n.value.shape()[1] : n.value.shape()[0];
        for (std::size_t i = 0; i < N; ++i) {
          double gs = 0;
          for (std::size_t k = 0; k < K; ++k) gs += g[i * K + k];
          for (std::size_t k = 0; k < K; ++k)
            na.grad[i * K + k] += g[i * K + k] - std::exp(n.value[i * K + k]) * gs;
        }
        break;
      }
      case Op::kGaussLogProb: {
        Node& nm = nodes_[n.in[0]];
        Node& ns = nodes_[n.in[1]];
        Node& nx = nodes_[n.in[2]];
        const Tensor& M = nm.value;
        const Tensor& S = ns.value;
        const Tensor& X = nx.value;
        const std::size_t D = S.shape()[0];
        const std::size_t N = M.rank() == 2 ? M.shape()[0] : 1;
        for (std::size_t i = 0; i < N; ++i) {
          const double gi = g[i];
          for (std::size_t j = 0; j < D; ++j) {
            const double inv_var = std::exp(-2.0 * S[j]);
            const double diff = X[i * D + j] - M[i * D + j];
            if (nm.needs_grad) nm.grad[i * D + j] += gi * diff * inv_var;
            if (nx.needs_grad) nx.grad[i * D + j] -= gi * diff * inv_var;
            if (ns.needs_grad) ns.grad[j] += gi * (diff * diff * inv_var - 1.0);
          }
        }
        break;
      }
      case Op::kRowSum: {
        Node& na = nodes_[n.in[0]];
        const std::size_t N = na.value.shape()[0], M = na.value.shape()[1];
        for (std::size_t i = 0; i < N; ++i)
          for (std::size_t j = 0; j < M; ++j) na.grad[i * M + j] += g[i];
        break;
      }
      case Op::kSum: {
        Node& na = nodes_[n.in[0]];
        for (std::size_t i = 0; i < na.value.size(); ++i) na.grad[i] += g[0];
        break;
      }
      case Op::kMean: {
        Node& na = nodes_[n.in[0]];
        const double s = g[0] / double(na.value.size());
        for (std::size_t i = 0; i < na.value.size(); ++i) na.grad[i] += s;
        break;
      }
      case Op::kGather: {
        Node& na = nodes_[n.in[0]];
        const std::size_t K = na.value.shape()[1];
        for (std::size_t i = 0; i < n.value.size(); ++i)
          na.grad[i * K + std::size_t(n.idx[i])] += g[i];
        break;
      }
      case Op::kSliceCols: {
        Node& na = nodes_[n.in[0]];
        const int start = n.idx[0], len = n.idx[1];
        if (na.value.rank() == 2) {
          const std::size_t N = na.value.shape()[0], M = na.value.shape()[1];
          for (std::size_t i = 0; i < N; ++i)
            for (int j = 0; j < len; ++j)
              na.grad[i * M + std::size_t(start + j)] += g[i * std::size_t(len) + std::size_t(j)];
        } else {
          for (int j = 0; j < len; ++j) na.grad[std::size_t(start + j)] += g[std::size_t(j)];
        }
        break;
      }
      case Op::kStopGrad:
        break;
    }
  }
}

}  // namespace dsfpo
