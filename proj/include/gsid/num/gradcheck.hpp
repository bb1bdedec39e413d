#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "gsid/num/tape.hpp"

namespace gsid::num {

/// Builds a scalar loss on `tape` from the bound parameters.
using LossFn = std::function<Var(Tape&, const Bindings&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "name[index]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline double evaluate_loss(const LossFn& f, const ParameterSet& params) {
  Tape tape;
  Bindings b = bind_parameters(tape, params);
  const double v = tape.value(f(tape, b)).values.at(0);
  if (!std::isfinite(v)) throw CheckError("loss is not finite");
  return v;
}

/// Compares reverse-mode gradients with central differences on up to
/// `samples` coordinates (0 = all), chosen uniformly without replacement.
/// Error per coordinate: |a - c| / (|a| + |c| + 1e-12).
inline GradCheckReport finite_difference_check(const LossFn& f, ParameterSet& params, double h = 1e-5,
                                               std::size_t samples = 0, std::uint64_t seed = 0) {
  Gradients analytic;
  {
    Tape tape;
    Bindings b = bind_parameters(tape, params);
    Var loss = f(tape, b);
    if (!std::isfinite(tape.value(loss).values.at(0))) throw CheckError("loss is not finite");
    if (tape.requires_grad(loss)) {
      tape.backward(loss);
      analytic = collect_gradients(tape, b);
    } else {
      for (const auto& [name, t] : params) analytic.emplace(name, Tensor(t.shape, 0.0));
    }
  }

  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, t] : params) {
    for (std::size_t i = 0; i < t.size(); ++i) coords.emplace_back(name, i);
  }
  if (samples && samples < coords.size()) {
    Rng rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(samples);
  }

  GradCheckReport rep;
  for (const auto& [name, i] : coords) {
    double& p = params.at(name).values[i];
    const double saved = p;
    p = saved + h;
    const double up = evaluate_loss(f, params);
    p = saved - h;
    const double down = evaluate_loss(f, params);
    p = saved;
    const double c = (up - down) / (2.0 * h);
    const double a = analytic.at(name).values[i];
    const double err = std::abs(a - c) / (std::abs(a) + std::abs(c) + 1e-12);
    ++rep.checked;
    if (rep.worst.empty() || err > rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst = name + "[" + std::to_string(i) + "]";
      rep.worst_analytic = a;
      rep.worst_numeric = c;
    }
  }
  return rep;
}

}  // namespace gsid::num
