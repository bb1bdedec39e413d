#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gsid/common.hpp"

namespace gsid {

using RouterId = int;
using AsId = int;
using NetworkId = int;

struct TopologySpec {
  IntRange router_range{16, 23};
  IntRange gateway_count_range{3, 3};
  IntRange dest_network_range{4, 7};
  IntRange fwd_query_range{8, 12};
  IntRange reach_query_range{4, 7};
  IntRange iso_query_range{10, 30};
  std::uint64_t seed = 0;

  void validate() const {
    auto check = [](const IntRange& r, const char* name) {
      if (r.lo < 1 || !r.valid()) {
        throw ValidationError(std::string("invalid ") + name + " range " + to_string(r));
      }
    };
    check(router_range, "router");
    check(gateway_count_range, "gateway");
    check(dest_network_range, "destination network");
    check(fwd_query_range, "fwd query");
    check(reach_query_range, "reachability query");
    check(iso_query_range, "isolation query");
    if (gateway_count_range.hi > router_range.lo) {
      throw ValidationError("gateway range " + to_string(gateway_count_range) +
                            " exceeds router range " + to_string(router_range));
    }
  }

  friend bool operator==(const TopologySpec&, const TopologySpec&) = default;
};

/// Unordered router pair, stored with a < b.
struct Link {
  RouterId a = 0;
  RouterId b = 0;

  static Link make(RouterId x, RouterId y) { return x < y ? Link{x, y} : Link{y, x}; }
  friend auto operator<=>(const Link&, const Link&) = default;
};

struct Topology {
  std::vector<std::string> router_names;  // router id == index
  RouterId route_reflector = 0;
  std::vector<RouterId> gateways;          // sorted
  std::vector<AsId> external_ases;         // 0..k-1
  std::vector<AsId> network_owner;         // network id == index
  std::set<Link> intra_links;
  std::set<std::pair<RouterId, AsId>> ebgp_adjacencies;
  std::set<std::pair<AsId, NetworkId>> advertised_routes;
  std::uint64_t seed = 0;

  int router_count() const { return static_cast<int>(router_names.size()); }
  int network_count() const { return static_cast<int>(network_owner.size()); }
  int as_count() const { return static_cast<int>(external_ases.size()); }

  bool is_gateway(RouterId r) const {
    return std::binary_search(gateways.begin(), gateways.end(), r);
  }

  std::vector<std::vector<RouterId>> adjacency() const {
    std::vector<std::vector<RouterId>> adj(router_names.size());
    for (const auto& l : intra_links) {
      adj[l.a].push_back(l.b);
      adj[l.b].push_back(l.a);
    }
    for (auto& n : adj) std::sort(n.begin(), n.end());
    return adj;
  }

  /// Gateway attached to an external AS over eBGP.
  RouterId gateway_of(AsId as) const {
    for (const auto& [g, a] : ebgp_adjacencies) {
      if (a == as) return g;
    }
    throw ValidationError("external AS " + std::to_string(as) + " has no eBGP adjacency");
  }

  /// Throws ValidationError naming the first broken invariant.
  void validate() const {
    const int n = router_count();
    if (n == 0) throw ValidationError("topology has no routers");
    auto in_range = [n](RouterId r) { return r >= 0 && r < n; };
    if (!in_range(route_reflector)) throw ValidationError("route reflector is not a router");
    for (RouterId g : gateways) {
      if (!in_range(g)) throw ValidationError("gateway " + std::to_string(g) + " is not a router");
    }
    if (!std::is_sorted(gateways.begin(), gateways.end()) ||
        std::adjacent_find(gateways.begin(), gateways.end()) != gateways.end()) {
      throw ValidationError("gateway list must be sorted and unique");
    }
    for (const auto& l : intra_links) {
      if (!in_range(l.a) || !in_range(l.b)) throw ValidationError("link endpoint out of range");
      if (l.a == l.b) throw ValidationError("self-link on router " + router_names[l.a]);
      if (l.a > l.b) throw ValidationError("link not normalized");
    }
    // connectivity by BFS from router 0
    std::vector<char> seen(n, 0);
    std::queue<RouterId> q;
    q.push(0);
    seen[0] = 1;
    const auto adj = adjacency();
    while (!q.empty()) {
      RouterId u = q.front();
      q.pop();
      for (RouterId v : adj[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
    for (int r = 0; r < n; ++r) {
      if (!seen[r]) throw ValidationError("router " + router_names[r] + " is disconnected");
    }
    for (std::size_t i = 0; i < external_ases.size(); ++i) {
      if (external_ases[i] != static_cast<AsId>(i)) throw ValidationError("AS ids must be dense");
    }
    for (const auto& [g, a] : ebgp_adjacencies) {
      if (!is_gateway(g)) throw ValidationError("eBGP adjacency on non-gateway router");
      if (a < 0 || a >= as_count()) throw ValidationError("eBGP adjacency to unknown AS");
    }
    for (const auto& [a, net] : advertised_routes) {
      if (a < 0 || a >= as_count() || net < 0 || net >= network_count()) {
        throw ValidationError("advertisement references unknown AS or network");
      }
    }
    for (AsId a : external_ases) {
      bool adjacent = std::any_of(ebgp_adjacencies.begin(), ebgp_adjacencies.end(),
                                  [a](const auto& e) { return e.second == a; });
      bool advertises = std::any_of(advertised_routes.begin(), advertised_routes.end(),
                                    [a](const auto& e) { return e.first == a; });
      if (!adjacent) throw ValidationError("AS" + std::to_string(a) + " has no eBGP adjacency");
      if (!advertises) throw ValidationError("AS" + std::to_string(a) + " advertises nothing");
    }
    for (NetworkId net = 0; net < network_count(); ++net) {
      AsId owner = network_owner[net];
      if (owner < 0 || owner >= as_count()) throw ValidationError("network owner out of range");
      if (!advertised_routes.count({owner, net})) {
        throw ValidationError("network " + std::to_string(net) + " not advertised by its owner");
      }
    }
  }

  /// Canonical text form; equal topologies serialize identically.
  std::string serialize() const {
    std::ostringstream os;
    os << "seed " << seed << "\nrouters";
    for (const auto& r : router_names) os << ' ' << r;
    os << "\nrr " << route_reflector << "\ngateways";
    for (RouterId g : gateways) os << ' ' << g;
    os << "\nases " << external_ases.size() << "\nnetworks";
    for (AsId o : network_owner) os << ' ' << o;
    os << "\nlinks";
    for (const auto& l : intra_links) os << ' ' << l.a << '-' << l.b;
    os << "\nebgp";
    for (const auto& [g, a] : ebgp_adjacencies) os << ' ' << g << ':' << a;
    os << "\nadvertised";
    for (const auto& [a, n] : advertised_routes) os << ' ' << a << ':' << n;
    os << '\n';
    return os.str();
  }

  friend bool operator==(const Topology&, const Topology&) = default;
};

namespace detail {

// Gateways, external ASes, destination networks and the route reflector are
// drawn onto an existing router core.
inline void attach_periphery(Topology& topo, const TopologySpec& spec, Rng& rng) {
  const int n = topo.router_count();
  const int gw_hi = std::min(spec.gateway_count_range.hi, n);
  if (spec.gateway_count_range.lo > n) {
    throw ValidationError("gateway range " + to_string(spec.gateway_count_range) +
                          " exceeds router count " + std::to_string(n));
  }
  const int gw_count = uniform_int(rng, spec.gateway_count_range.lo, gw_hi);

  std::vector<RouterId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  // Prefer a non-gateway route reflector; it can only coincide with a
  // gateway when every router is a gateway.
  topo.route_reflector = order.back();
  const int skip_rr = gw_count < n ? 1 : 0;
  topo.gateways.assign(order.begin(), order.begin() + gw_count);
  if (!skip_rr) topo.route_reflector = order.front();
  std::sort(topo.gateways.begin(), topo.gateways.end());

  topo.external_ases.resize(gw_count);
  std::iota(topo.external_ases.begin(), topo.external_ases.end(), 0);
  topo.ebgp_adjacencies.clear();
  for (int k = 0; k < gw_count; ++k) topo.ebgp_adjacencies.insert({topo.gateways[k], k});

  const int net_count = uniform_int(rng, spec.dest_network_range);
  topo.network_owner.assign(net_count, 0);
  topo.advertised_routes.clear();
  for (NetworkId net = 0; net < net_count; ++net) {
    const AsId owner = uniform_int(rng, 0, gw_count - 1);
    topo.network_owner[net] = owner;
    topo.advertised_routes.insert({owner, net});
    // Transit advertisements: every other AS re-advertises with probability
    // 1/2, and at least one does, so exit selection has real candidates.
    std::vector<AsId> others;
    for (AsId a = 0; a < gw_count; ++a) {
      if (a != owner) others.push_back(a);
    }
    bool any = false;
    for (AsId a : others) {
      if (uniform_real(rng) < 0.5) {
        topo.advertised_routes.insert({a, net});
        any = true;
      }
    }
    if (!any && !others.empty()) {
      topo.advertised_routes.insert({others[uniform_int(rng, 0, int(others.size()) - 1)], net});
    }
  }
  for (AsId a = 0; a < gw_count; ++a) {
    bool advertises = std::any_of(topo.advertised_routes.begin(), topo.advertised_routes.end(),
                                  [a](const auto& e) { return e.first == a; });
    if (!advertises) topo.advertised_routes.insert({a, uniform_int(rng, 0, net_count - 1)});
  }
}

}  // namespace detail

/// Random multi-AS topology: spanning tree plus extra links up to average
/// degree three, then the AS periphery.
inline Topology generate_topology(const TopologySpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 0x70706f6cULL));
  Topology topo;
  topo.seed = spec.seed;
  const int n = uniform_int(rng, spec.router_range);
  topo.router_names.reserve(n);
  for (int r = 0; r < n; ++r) topo.router_names.push_back("R" + std::to_string(r));

  std::vector<RouterId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 1; i < n; ++i) {
    topo.intra_links.insert(Link::make(perm[i], perm[uniform_int(rng, 0, i - 1)]));
  }
  const std::size_t max_links = static_cast<std::size_t>(n) * (n - 1) / 2;
  const std::size_t target = std::min<std::size_t>(max_links, (3 * static_cast<std::size_t>(n) + 1) / 2);
  while (topo.intra_links.size() < target) {
    RouterId a = uniform_int(rng, 0, n - 1);
    RouterId b = uniform_int(rng, 0, n - 1);
    if (a != b) topo.intra_links.insert(Link::make(a, b));
  }
  detail::attach_periphery(topo, spec, rng);
  topo.validate();
  return topo;
}

}  // namespace gsid
