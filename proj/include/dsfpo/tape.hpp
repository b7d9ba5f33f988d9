#pragma once
#include <array>
#include <vector>

#include "dsfpo/tensor.hpp"

namespace dsfpo {

// Reverse-mode autodiff over a define-by-run tape. Node values are computed
// eagerly when an op is recorded; backward() walks the record in reverse
// topological order (which is the recording order, since every op's inputs
// already exist when it is appended).
class Tape {
 public:
  // Lightweight handle to a tape node.
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable leaf (parameter or input).
  Var leaf(Tensor value);
  // Non-differentiable leaf; backward never writes a gradient for it.
  Var constant(Tensor value);

  // --- primitives ---
  Var matmul(Var a, Var b);               // [n,k]x[k,m] -> [n,m], [n,k]x[k] -> [n]
  Var add(Var a, Var b);                  // same shape, or [n,m] + [m] bias broadcast
  Var sub(Var a, Var b);                  // same shape
  Var mul(Var a, Var b);                  // elementwise, same shape
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var neg(Var a);
  Var elu(Var a);                         // alpha = 1
  Var tanh(Var a);
  Var exp(Var a);
  Var clip(Var a, double lo, double hi);  // gradient passes only strictly inside
  Var minimum(Var a, Var b);              // elementwise; ties route gradient to a
  Var log_softmax(Var a);                 // rowwise on [n,K]; rank 1 treated as one row
  // log of a diagonal Gaussian density of x under (mean, exp(log_std)),
  // reduced over the feature axis: [n,m] -> [n] (rank 1 -> [1]).
  Var gaussian_log_prob(Var mean, Var log_std, Var x);
  Var row_sum(Var a);                     // [n,m] -> [n]
  Var sum(Var a);                         // -> [1]
  Var mean(Var a);                        // -> [1]
  Var gather(Var a, std::vector<int> idx);       // [n,K] + idx[n] -> [n]
  Var slice_cols(Var a, int start, int len);     // [n,m] -> [n,len], [m] -> [len]
  Var stop_gradient(Var a);

  const Tensor& value(Var v) const;
  // Backpropagates from `out`, seeding with ones (or `seed`, which must match
  // the output shape). Gradients accumulate into every differentiable node.
  void backward(Var out);
  void backward(Var out, const Tensor& seed);
  const Tensor& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf, kConst, kMatmul, kAdd, kAddBias, kSub, kMul, kScale, kAddScalar,
    kNeg, kElu, kTanh, kExp, kClip, kMin, kLogSoftmax, kGaussLogProb,
    kRowSum, kSum, kMean, kGather, kSliceCols, kStopGrad,
  };

  struct Node {
    Op op;
    std::array<int, 3> in{-1, -1, -1};
    Tensor value;
    Tensor grad;          // allocated by backward
    double s0 = 0, s1 = 0;  // op scalars (clip bounds, scale factor, ...)
    std::vector<int> idx;   // gather indices / slice extents
    bool needs_grad = true;
  };

  Var push(Node n);
  const Node& node(Var v) const;
  void check(Var v, const char* who) const;
  [[noreturn]] void fail_shape(const char* op, const Node& a, const Node* b) const;

  std::vector<Node> nodes_;
  bool grads_ready_ = false;
};

using Var = Tape::Var;

}  // namespace dsfpo
