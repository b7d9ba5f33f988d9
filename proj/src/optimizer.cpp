#include "dsfpo/optimizer.hpp"

#include <cmath>

#include "dsfpo/errors.hpp"

namespace dsfpo {

Adam::Adam(AdamConfig cfg, const std::vector<ParamRef>& params) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.value->shape());
    v_.emplace_back(p.value->shape());
  }
}

void Adam::step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw ShapeError("adam: parameter group size changed since construction");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].value->same_shape(grads[p]))
      throw ShapeError("adam: gradient shape " + grads[p].shape_str() + " != parameter " +
                       params[p].name + " " + params[p].value->shape_str());
    if (!grads[p].all_finite())
      throw NonFiniteError(params[p].name, "non-finite gradient");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p].value;
    const Tensor& g = grads[p];
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::restore(long step, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw ShapeError("adam: restored moment count does not match parameter group");
  for (std::size_t p = 0; p < m.size(); ++p)
    if (!m[p].same_shape(m_[p]) || !v[p].same_shape(v_[p]))
      throw ShapeError("adam: restored moment shape mismatch at index " + std::to_string(p));
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

double grad_norm(const std::vector<Tensor>& grads) {
  double acc = 0;
  for (const auto& g : grads)
    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * g[i];
  return std::sqrt(acc);
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  const double norm = grad_norm(grads);
  if (norm > max_norm && norm > 0) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s;
  }
  return norm;
}

}  // namespace dsfpo
