#pragma once
#include <string>
#include <vector>

#include "dsfpo/tensor.hpp"

namespace dsfpo {

// Named view of a learnable tensor; parameter containers hand these out in a
// fixed order so optimizer state and checkpoints stay aligned.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moment estimation over a fixed parameter group.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, const std::vector<ParamRef>& params);

  // Applies one update. grads must be aligned with the construction order.
  // Throws NonFiniteError naming the parameter if a gradient is non-finite.
  void step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads);

  long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // Serialization access.
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(long step, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long step_ = 0;
};

// Global L2 norm of a gradient set.
double grad_norm(const std::vector<Tensor>& grads);

// Scales grads in place so their global norm is at most max_norm.
// Returns the pre-clip norm.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace dsfpo
