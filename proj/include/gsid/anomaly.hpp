#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gsid/common.hpp"
#include "gsid/graph.hpp"

namespace gsid {

struct InjectionSpec {
  double rate = 0.4;
  ParameterRanges ranges{};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("injection rate must lie in [0,1]");
    ranges.validate();
  }
};

using LabelRow = std::array<std::uint8_t, kParamCount>;

/// Observed features with their ground truth, labels and eligibility; one
/// label row per fact node.
struct LabeledSample {
  FeatureMatrix observed;
  FeatureMatrix truth;
  std::vector<LabelRow> labels;
  std::vector<LabelRow> eligible;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

/// Number of nodes perturbed for a parameter: round(rate * eligible), .5 up.
inline int perturbation_count(double rate, int eligible) {
  return static_cast<int>(std::floor(rate * eligible + 0.5));
}

/// Fact nodes carrying parameter `p`.
inline std::vector<int> eligible_facts(const BipartiteGraph& g, Param p) {
  std::vector<int> out;
  for (int i = 0; i < g.fact_count(); ++i) {
    if (g.facts[i].param(p)) out.push_back(i);
  }
  return out;
}

/// A sample with no anomalies.
inline LabeledSample clean_sample(const BipartiteGraph& g) {
  LabeledSample s;
  s.observed = g.features;
  s.truth = g.features;
  s.labels.assign(g.fact_count(), LabelRow{});
  s.eligible.assign(g.fact_count(), LabelRow{});
  for (std::size_t c = 0; c < kParams.size(); ++c) {
    for (int i : eligible_facts(g, kParams[c])) s.eligible[i][c] = 1;
  }
  return s;
}

/// Per parameter, perturbs round(rate * |eligible|) distinct fact nodes with a
/// value drawn uniformly from the parameter range minus the original value.
inline LabeledSample inject(const BipartiteGraph& g, const InjectionSpec& spec) {
  spec.validate();
  LabeledSample s = clean_sample(g);
  const int ne = g.entity_count();
  for (std::size_t c = 0; c < kParams.size(); ++c) {
    const Param p = kParams[c];
    const IntRange& range = param_range(spec.ranges, p);
    auto pool = eligible_facts(g, p);
    const int k = perturbation_count(spec.rate, static_cast<int>(pool.size()));
    if (k == 0) continue;
    if (range.size() < 2) {
      throw InjectionError(std::string(param_name(p)) + " range " + to_string(range) +
                           " admits no distinct replacement");
    }
    Rng rng(mix_seed(spec.seed, g.seed, c));
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    const int d = kParamDims[c];
    for (int i : pool) {
      const int original = *g.facts[i].param(p);
      if (!range.contains(original)) {
        throw InjectionError(std::string(param_name(p)) + " value " + std::to_string(original) + " outside range");
      }
      int v = uniform_int(rng, range.lo, range.hi - 1);
      if (v >= original) ++v;
      s.observed[ne + i][d] = v;
      s.labels[i][c] = 1;
    }
  }
  return s;
}

/// Y = 1 exactly where an eligible observed value differs from the truth, and
/// nothing outside eligible config dims was touched.
inline bool labels_consistent(const BipartiteGraph& g, const LabeledSample& s) {
  const int ne = g.entity_count();
  if (s.observed.size() != g.features.size() || s.truth != g.features) return false;
  if (s.labels.size() != static_cast<std::size_t>(g.fact_count())) return false;
  for (int v = 0; v < g.node_count(); ++v) {
    for (int d = 0; d < kFeatureDim; ++d) {
      const bool config_dim = std::find(kParamDims.begin(), kParamDims.end(), d) != kParamDims.end();
      if ((v < ne || !config_dim) && s.observed[v][d] != s.truth[v][d]) return false;
    }
  }
  for (int i = 0; i < g.fact_count(); ++i) {
    for (int c = 0; c < kParamCount; ++c) {
      const bool differs = s.observed[ne + i][kParamDims[c]] != s.truth[ne + i][kParamDims[c]];
      if (!s.eligible[i][c] && (s.labels[i][c] || differs)) return false;
      if (s.eligible[i][c] && (s.labels[i][c] == 1) != differs) return false;
    }
  }
  return true;
}

}  // namespace gsid
