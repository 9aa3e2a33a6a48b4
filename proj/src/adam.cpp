#include "feedrank/adam.hpp"

#include <cmath>

#include "feedrank/errors.hpp"

namespace feedrank {

Adam::Adam(AdamConfig cfg, std::span<const Tensor> params) : cfg_(cfg) {
  if (cfg_.lr < 0.0 || cfg_.beta1 <= 0.0 || cfg_.beta1 >= 1.0 ||
      cfg_.beta2 <= 0.0 || cfg_.beta2 >= 1.0 || cfg_.eps <= 0.0)
    throw ConfigError("adam: invalid hyperparameters");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.push_back(Tensor::zeros(p.shape()));
    v_.push_back(Tensor::zeros(p.shape()));
  }
}

void Adam::step(std::span<Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw ShapeError("adam: parameter list size changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(m_[i]) || !g.same_shape(m_[i]))
      throw ShapeError("adam: gradient shape does not match parameter");
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace feedrank
