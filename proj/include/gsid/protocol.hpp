#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "gsid/common.hpp"
#include "gsid/topology.hpp"

namespace gsid {

/// Valid values of every monitored parameter. Configurable per run.
struct ParameterRanges {
  IntRange local_pref{0, 9};
  IntRange as_path_len{1, 9};
  IntRange med{0, 9};
  IntRange ospf_weight{1, 9};

  void validate() const {
    for (const IntRange* r : {&local_pref, &as_path_len, &med, &ospf_weight}) {
      if (r->lo < 0 || !r->valid()) throw ValidationError("invalid parameter range " + to_string(*r));
    }
  }
  friend bool operator==(const ParameterRanges&, const ParameterRanges&) = default;
};

using Advertisement = std::pair<AsId, NetworkId>;

/// BGP attributes per eBGP advertisement (external AS, destination network),
/// i.e. per BGP_route fact. Local preference is assigned on ingress at the
/// gateway peering with the AS.
struct BgpConfig {
  std::map<Advertisement, int> local_pref;
  std::map<Advertisement, int> as_path_len;
  std::map<Advertisement, int> med;

  friend bool operator==(const BgpConfig&, const BgpConfig&) = default;
};

struct OspfConfig {
  std::map<Link, int> weight;

  int at(RouterId a, RouterId b) const {
    auto it = weight.find(Link::make(a, b));
    return it == weight.end() ? 0 : it->second;
  }
  friend bool operator==(const OspfConfig&, const OspfConfig&) = default;
};

/// Uniform draw of every parameter from its range; a pure function of the
/// topology seed.
inline std::pair<BgpConfig, OspfConfig> synthesize_config(const Topology& topo,
                                                          const ParameterRanges& ranges = {}) {
  ranges.validate();
  Rng rng(mix_seed(topo.seed, 0x63666721ULL));
  BgpConfig bgp;
  for (const auto& adv : topo.advertised_routes) {
    bgp.local_pref[adv] = uniform_int(rng, ranges.local_pref);
    bgp.as_path_len[adv] = uniform_int(rng, ranges.as_path_len);
    bgp.med[adv] = uniform_int(rng, ranges.med);
  }
  OspfConfig ospf;
  for (const auto& l : topo.intra_links) ospf.weight[l] = uniform_int(rng, ranges.ospf_weight);
  return {std::move(bgp), std::move(ospf)};
}

struct RouteCandidate {
  RouterId gateway = 0;
  int local_pref = 0;
  int as_path_len = 0;
  int med = 0;
};

/// BGP decision: highest local preference, then shortest AS path, then
/// lowest MED, then lowest gateway id.
inline RouterId bgp_select_route(std::span<const RouteCandidate> candidates) {
  if (candidates.empty()) throw SelectionError("no candidate routes");
  std::vector<RouteCandidate> pool(candidates.begin(), candidates.end());
  auto keep_best = [&pool](auto key, bool maximize) {
    int best = key(pool.front());
    for (const auto& c : pool) best = maximize ? std::max(best, key(c)) : std::min(best, key(c));
    std::erase_if(pool, [&](const RouteCandidate& c) { return key(c) != best; });
  };
  keep_best([](const RouteCandidate& c) { return c.local_pref; }, true);
  keep_best([](const RouteCandidate& c) { return c.as_path_len; }, false);
  keep_best([](const RouteCandidate& c) { return c.med; }, false);
  keep_best([](const RouteCandidate& c) { return c.gateway; }, false);
  return pool.front().gateway;
}

struct RoutingState {
  static constexpr RouterId kNone = -1;

  std::vector<std::vector<RouterId>> ospf_next_hop;  // [src][dst], kNone on the diagonal
  std::vector<std::vector<long>> ospf_cost;          // [src][dst]
  std::vector<std::vector<RouterId>> exit_point;     // [router][network]
  std::vector<std::vector<std::vector<RouterId>>> forward_path;  // [router][network], src..exit

  /// OSPF path src..dst following next hops.
  std::vector<RouterId> ospf_path(RouterId src, RouterId dst) const {
    std::vector<RouterId> path{src};
    while (path.back() != dst) path.push_back(ospf_next_hop[path.back()][dst]);
    return path;
  }
};

/// All-pairs OSPF shortest paths (Dijkstra from every router). Equal-cost
/// ties pick the lowest-id next hop.
inline RoutingState compute_ospf_routes(const Topology& topo, const OspfConfig& ospf) {
  const int n = topo.router_count();
  constexpr long kInf = std::numeric_limits<long>::max();
  const auto adj = topo.adjacency();
  for (const auto& l : topo.intra_links) {
    if (ospf.at(l.a, l.b) <= 0) {
      throw RoutingError("link " + topo.router_names[l.a] + "-" + topo.router_names[l.b] + " has no weight");
    }
  }

  RoutingState st;
  st.ospf_cost.assign(n, std::vector<long>(n, kInf));
  st.ospf_next_hop.assign(n, std::vector<RouterId>(n, RoutingState::kNone));
  using Item = std::pair<long, RouterId>;
  for (RouterId src = 0; src < n; ++src) {
    auto& dist = st.ospf_cost[src];
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[src] = 0;
    pq.push({0, src});
    while (!pq.empty()) {
      auto [d, u] = pq.top();
      pq.pop();
      if (d != dist[u]) continue;
      for (RouterId v : adj[u]) {
        long nd = d + ospf.at(u, v);
        if (nd < dist[v]) {
          dist[v] = nd;
          pq.push({nd, v});
        }
      }
    }
  }
  for (RouterId s = 0; s < n; ++s) {
    for (RouterId t = 0; t < n; ++t) {
      if (st.ospf_cost[s][t] == kInf) {
        throw RoutingError("router " + topo.router_names[t] + " unreachable from " + topo.router_names[s]);
      }
      if (s == t) continue;
      // costs are symmetric, so cost(x, t) is available from row x
      for (RouterId x : adj[s]) {
        if (ospf.at(s, x) + st.ospf_cost[x][t] == st.ospf_cost[s][t]) {
          st.ospf_next_hop[s][t] = x;
          break;
        }
      }
    }
  }
  return st;
}

/// Gateways able to reach `net` over eBGP with their attributes.
inline std::vector<RouteCandidate> route_candidates(const Topology& topo, const BgpConfig& bgp,
                                                    NetworkId net) {
  std::vector<RouteCandidate> out;
  for (const auto& adv : topo.advertised_routes) {
    if (adv.second != net) continue;
    out.push_back({topo.gateway_of(adv.first), bgp.local_pref.at(adv), bgp.as_path_len.at(adv),
                   bgp.med.at(adv)});
  }
  return out;
}

/// Full routing state: OSPF inside the AS, BGP exit selection per
/// destination redistributed over iBGP, and the resulting forwarding paths.
inline RoutingState simulate_routing(const Topology& topo, const BgpConfig& bgp, const OspfConfig& ospf) {
  RoutingState st = compute_ospf_routes(topo, ospf);
  const int n = topo.router_count();
  const int nets = topo.network_count();
  st.exit_point.assign(n, std::vector<RouterId>(nets, RoutingState::kNone));
  st.forward_path.assign(n, std::vector<std::vector<RouterId>>(nets));
  for (NetworkId net = 0; net < nets; ++net) {
    const auto cands = route_candidates(topo, bgp, net);
    if (cands.empty()) throw RoutingError("destination network " + std::to_string(net) + " has no advertising gateway");
    const RouterId exit = bgp_select_route(cands);
    for (RouterId r = 0; r < n; ++r) {
      st.exit_point[r][net] = exit;
      st.forward_path[r][net] = st.ospf_path(r, exit);
    }
  }
  return st;
}

struct FwdIntent {
  RouterId src = 0;
  NetworkId dst = 0;
  RouterId next = 0;
  bool holds = true;
  friend auto operator<=>(const FwdIntent&, const FwdIntent&) = default;
};

struct ReachIntent {
  RouterId src = 0;
  NetworkId dst = 0;
  RouterId exit = 0;
  bool holds = true;
  friend auto operator<=>(const ReachIntent&, const ReachIntent&) = default;
};

struct IsoIntent {
  RouterId r1 = 0;
  RouterId r2 = 0;
  NetworkId n1 = 0;
  NetworkId n2 = 0;
  bool holds = true;
  friend auto operator<=>(const IsoIntent&, const IsoIntent&) = default;
};

struct IntentSet {
  std::vector<FwdIntent> fwd;
  std::vector<ReachIntent> reachable;
  std::vector<IsoIntent> traffic_iso;
  friend bool operator==(const IntentSet&, const IntentSet&) = default;
};

namespace detail {

template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, int count, Rng& rng, const char* what) {
  if (static_cast<int>(pool.size()) < count) {
    throw IntentError(std::string("only ") + std::to_string(pool.size()) + " realizable " + what +
                      " tuples, need " + std::to_string(count));
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline bool disjoint(const std::vector<RouterId>& a, const std::vector<RouterId>& b) {
  for (RouterId x : a) {
    if (std::find(b.begin(), b.end(), x) != b.end()) return false;
  }
  return true;
}

}  // namespace detail

/// Intents sampled from the realized routing state, so each holds under the
/// ground-truth configuration. Throws IntentError when the state cannot
/// supply the requested counts.
inline IntentSet derive_intents(const Topology& topo, const RoutingState& st, const TopologySpec& spec) {
  Rng rng(mix_seed(spec.seed, topo.seed, 0x696e7473ULL));
  const int n = topo.router_count();
  const int nets = topo.network_count();
  const int fwd_count = uniform_int(rng, spec.fwd_query_range);
  const int reach_count = uniform_int(rng, spec.reach_query_range);
  const int iso_count = uniform_int(rng, spec.iso_query_range);

  std::vector<FwdIntent> fwd_pool;
  std::vector<ReachIntent> reach_pool;
  for (RouterId r = 0; r < n; ++r) {
    for (NetworkId net = 0; net < nets; ++net) {
      const auto& path = st.forward_path[r][net];
      if (path.size() >= 2) fwd_pool.push_back({r, net, path[1], true});
      reach_pool.push_back({r, net, st.exit_point[r][net], true});
    }
  }
  std::vector<IsoIntent> iso_pool;
  for (RouterId r1 = 0; r1 < n; ++r1) {
    for (NetworkId n1 = 0; n1 < nets; ++n1) {
      for (RouterId r2 = r1 + 1; r2 < n; ++r2) {
        for (NetworkId n2 = 0; n2 < nets; ++n2) {
          if (n1 == n2) continue;
          if (detail::disjoint(st.forward_path[r1][n1], st.forward_path[r2][n2])) {
            iso_pool.push_back({r1, r2, n1, n2, true});
          }
        }
      }
    }
  }

  IntentSet out;
  out.fwd = detail::sample_without_replacement(std::move(fwd_pool), fwd_count, rng, "fwd");
  out.reachable = detail::sample_without_replacement(std::move(reach_pool), reach_count, rng, "reachable");
  out.traffic_iso = detail::sample_without_replacement(std::move(iso_pool), iso_count, rng, "trafficIso");
  return out;
}

}  // namespace gsid
