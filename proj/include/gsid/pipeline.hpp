#pragma once

#include <optional>
#include <tuple>
#include <string>
#include <string_view>
#include <vector>

#include "gsid/anomaly.hpp"
#include "gsid/dataset.hpp"
#include "gsid/graph.hpp"
#include "gsid/graphml.hpp"
#include "gsid/parallel.hpp"
#include "gsid/protocol.hpp"
#include "gsid/topology.hpp"

namespace gsid {

enum class Preset { baseline, larger_scale, real_world };

inline std::string_view preset_name(Preset p) {
  switch (p) {
    case Preset::baseline: return "baseline";
    case Preset::larger_scale: return "larger-scale";
    case Preset::real_world: return "real-world";
  }
  return "?";
}

inline Preset parse_preset(std::string_view s) {
  for (Preset p : {Preset::baseline, Preset::larger_scale, Preset::real_world}) {
    if (preset_name(p) == s) return p;
  }
  throw ConfigError("unknown preset '" + std::string(s) + "' (valid: baseline, larger-scale, real-world)");
}

/// Dataset table columns. Real-world router counts come from the GraphML
/// file, so its router range is unused.
inline TopologySpec preset_spec(Preset p) {
  TopologySpec s;
  switch (p) {
    case Preset::baseline:
    case Preset::real_world:
      break;
    case Preset::larger_scale:
      s.router_range = {24, 31};
      s.dest_network_range = {10, 15};
      s.gateway_count_range = {7, 9};
      s.fwd_query_range = {25, 35};
      s.reach_query_range = {15, 20};
      s.iso_query_range = {10, 30};
      break;
  }
  return s;
}

/// Everything the generator knows about one network.
struct GroundTruth {
  Topology topology;
  BgpConfig bgp;
  OspfConfig ospf;
  RoutingState routing;
  IntentSet intents;
};

inline GroundTruth make_ground_truth(const TopologySpec& spec, const ParameterRanges& ranges,
                                     std::optional<std::string_view> graphml = std::nullopt) {
  GroundTruth gt;
  gt.topology = graphml ? ingest_graphml(*graphml, spec) : generate_topology(spec);
  std::tie(gt.bgp, gt.ospf) = synthesize_config(gt.topology, ranges);
  gt.routing = simulate_routing(gt.topology, gt.bgp, gt.ospf);
  gt.intents = derive_intents(gt.topology, gt.routing, spec);
  return gt;
}

inline constexpr int kMaxGenerationAttempts = 64;

/// Clean augmented graph for `seed`. Networks whose routing state cannot
/// realize the requested intent counts are redrawn under derived seeds.
inline BipartiteGraph generate_graph(TopologySpec spec, const ParameterRanges& ranges, std::uint64_t seed,
                                     std::optional<std::string_view> graphml = std::nullopt) {
  for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
    spec.seed = attempt == 0 ? seed : mix_seed(seed, attempt);
    try {
      GroundTruth gt = make_ground_truth(spec, ranges, graphml);
      BipartiteGraph g = build_graph(gt.topology, gt.bgp, gt.ospf, gt.intents);
      g.seed = seed;
      return augment(std::move(g));
    } catch (const IntentError&) {
    }
  }
  throw IntentError("no realizable intent set after " + std::to_string(kMaxGenerationAttempts) + " attempts (seed " +
                    std::to_string(seed) + ")");
}

/// `count` clean samples; sample i uses seed mix(seed, i).
inline std::vector<Sample> generate_dataset(const TopologySpec& spec, const ParameterRanges& ranges, int count,
                                            std::uint64_t seed,
                                            std::optional<std::string_view> graphml = std::nullopt,
                                            unsigned workers = default_workers()) {
  if (count < 0) throw ValidationError("sample count must be non-negative");
  spec.validate();
  ranges.validate();
  std::vector<Sample> out(count);
  parallel_for(out.size(), [&](std::size_t i) { out[i].graph = generate_graph(spec, ranges, mix_seed(seed, i), graphml); }, workers);
  return out;
}

/// Copies with anomalies injected at `rate`; sample i uses seed mix(seed, i).
inline std::vector<Sample> inject_dataset(const std::vector<Sample>& clean, double rate, std::uint64_t seed,
                                          const ParameterRanges& ranges = {}, unsigned workers = default_workers()) {
  std::vector<Sample> out(clean.size());
  parallel_for(out.size(), [&](std::size_t i) {
    out[i].graph = clean[i].graph;
    out[i].labeled = inject(clean[i].graph, {rate, ranges, mix_seed(seed, i)});
  }, workers);
  return out;
}

}  // namespace gsid
