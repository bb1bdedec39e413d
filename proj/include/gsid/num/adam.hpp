#pragma once

#include <cmath>
#include <string>

#include "gsid/num/tape.hpp"

namespace gsid::num {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// Adam with bias-corrected moments and decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterSet& params, const Gradients& grads, double lr) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be positive");
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const Tensor& g = git->second;
      if (g.shape != p.shape) throw ShapeError("gradient of " + name + " has shape " + g.shape_string() + ", parameter " + p.shape_string());
      auto [mit, fresh] = m_.try_emplace(name, Tensor(p.shape, 0.0));
      Tensor& m = mit->second;
      Tensor& v = v_.try_emplace(name, Tensor(p.shape, 0.0)).first->second;
      for (std::size_t i = 0; i < p.size(); ++i) {
        m.values[i] = cfg_.beta1 * m.values[i] + (1.0 - cfg_.beta1) * g.values[i];
        v.values[i] = cfg_.beta2 * v.values[i] + (1.0 - cfg_.beta2) * g.values[i] * g.values[i];
        const double mh = m.values[i] / c1;
        const double vh = v.values[i] / c2;
        p.values[i] -= lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * p.values[i]);
      }
      if (!p.all_finite()) throw NumericError("Adam step produced a non-finite value in " + name);
    }
  }

  long steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const TensorMap& first_moments() const { return m_; }
  const TensorMap& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  TensorMap m_;
  TensorMap v_;
};

}  // namespace gsid::num
