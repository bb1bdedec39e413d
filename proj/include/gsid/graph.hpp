#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gsid/common.hpp"
#include "gsid/protocol.hpp"
#include "gsid/topology.hpp"

namespace gsid {

inline constexpr int kFeatureDim = 15;
inline constexpr int kParamCount = 4;
inline constexpr int kSelfLoopType = 4;
inline constexpr int kEdgeTypeCount = 5;  // argument positions 0..3 plus self-loops

using FeatureRow = std::array<double, kFeatureDim>;
using FeatureMatrix = std::vector<FeatureRow>;

// Feature layout.
namespace dim {
inline constexpr int kNodeType = 0;
inline constexpr int kNodeIndex = 1;
inline constexpr int kPredicate = 2;
inline constexpr int kHolds = 3;
inline constexpr int kLocalPref = 4;
inline constexpr int kAsPathLen = 5;
inline constexpr int kMed = 6;
inline constexpr int kOspfWeight = 10;
inline constexpr int kExternalAs = 11;
inline constexpr int kDestNetwork = 12;
inline constexpr int kRouteReflector = 13;
inline constexpr int kRouter = 14;
}  // namespace dim

/// Monitored configuration parameters, in label-column order.
enum class Param : std::uint8_t { local_pref = 0, as_path_len = 1, med = 2, ospf_weight = 3 };

inline constexpr std::array<Param, kParamCount> kParams{Param::local_pref, Param::as_path_len, Param::med,
                                                        Param::ospf_weight};
inline constexpr std::array<int, kParamCount> kParamDims{dim::kLocalPref, dim::kAsPathLen, dim::kMed,
                                                         dim::kOspfWeight};

inline constexpr std::string_view param_name(Param p) {
  switch (p) {
    case Param::local_pref: return "local_pref";
    case Param::as_path_len: return "as_path_len";
    case Param::med: return "med";
    case Param::ospf_weight: return "ospf_weight";
  }
  return "?";
}

inline const IntRange& param_range(const ParameterRanges& r, Param p) {
  switch (p) {
    case Param::local_pref: return r.local_pref;
    case Param::as_path_len: return r.as_path_len;
    case Param::med: return r.med;
    case Param::ospf_weight: return r.ospf_weight;
  }
  return r.local_pref;
}

enum class EntityKind : std::uint8_t { router = 0, route_reflector = 1, external_as = 2, dest_network = 3 };

enum class Predicate : std::uint8_t {
  bgp_route = 0,
  connected = 1,
  ebgp = 2,
  fwd = 4,
  ibgp = 5,
  reachable = 7,
  traffic_iso = 10,
};

inline constexpr std::string_view predicate_name(Predicate p) {
  switch (p) {
    case Predicate::bgp_route: return "BGP_route";
    case Predicate::connected: return "connected";
    case Predicate::ebgp: return "eBGP";
    case Predicate::fwd: return "fwd";
    case Predicate::ibgp: return "iBGP";
    case Predicate::reachable: return "reachable";
    case Predicate::traffic_iso: return "trafficIso";
  }
  return "?";
}

inline constexpr std::string_view entity_kind_name(EntityKind k) {
  switch (k) {
    case EntityKind::router: return "router";
    case EntityKind::route_reflector: return "route_reflector";
    case EntityKind::external_as: return "external_as";
    case EntityKind::dest_network: return "dest_network";
  }
  return "?";
}

inline constexpr int predicate_arity(Predicate p) {
  switch (p) {
    case Predicate::fwd:
    case Predicate::reachable: return 3;
    case Predicate::traffic_iso: return 4;
    default: return 2;
  }
}

/// Entity kinds admissible at each argument position.
inline bool argument_kind_ok(Predicate p, int position, EntityKind k) {
  const bool router_like = k == EntityKind::router || k == EntityKind::route_reflector;
  switch (p) {
    case Predicate::connected: return router_like;
    case Predicate::ibgp: return position == 0 ? router_like : k == EntityKind::route_reflector;
    case Predicate::ebgp: return position == 0 ? router_like : k == EntityKind::external_as;
    case Predicate::bgp_route: return position == 0 ? k == EntityKind::external_as : k == EntityKind::dest_network;
    case Predicate::fwd:
    case Predicate::reachable: return position == 1 ? k == EntityKind::dest_network : router_like;
    case Predicate::traffic_iso: return position < 2 ? router_like : k == EntityKind::dest_network;
  }
  return false;
}

struct EntityNode {
  int index = 0;
  EntityKind kind = EntityKind::router;
  std::string source_id;
  friend bool operator==(const EntityNode&, const EntityNode&) = default;
};

struct FactNode {
  int index = 0;
  Predicate predicate = Predicate::connected;
  std::vector<int> args;  // entity node indices, position == edge type
  int holds = 1;
  std::optional<int> local_pref;
  std::optional<int> as_path_len;
  std::optional<int> med;
  std::optional<int> ospf_weight;

  std::optional<int> param(Param p) const {
    switch (p) {
      case Param::local_pref: return local_pref;
      case Param::as_path_len: return as_path_len;
      case Param::med: return med;
      case Param::ospf_weight: return ospf_weight;
    }
    return std::nullopt;
  }
  friend bool operator==(const FactNode&, const FactNode&) = default;
};

struct TypedEdge {
  int fact = 0;    // node index
  int entity = 0;  // node index
  int type = 0;
  friend auto operator<=>(const TypedEdge&, const TypedEdge&) = default;
};

/// Directed message used by message passing (after augmentation).
struct Message {
  int src = 0;
  int dst = 0;
  int type = 0;
  friend auto operator<=>(const Message&, const Message&) = default;
};

/// Node indices: entities occupy [0, entities.size()), facts follow.
struct BipartiteGraph {
  std::uint64_t seed = 0;
  std::vector<EntityNode> entities;
  std::vector<FactNode> facts;
  std::vector<TypedEdge> edges;
  FeatureMatrix features;          // ground truth X*
  std::vector<Message> messages;   // empty until augment()

  int node_count() const { return static_cast<int>(entities.size() + facts.size()); }
  int entity_count() const { return static_cast<int>(entities.size()); }
  int fact_count() const { return static_cast<int>(facts.size()); }
  bool is_fact(int node) const { return node >= entity_count(); }
  const FactNode& fact_at(int node) const { return facts.at(node - entity_count()); }
  bool augmented() const { return !messages.empty() || node_count() == 0; }

  friend bool operator==(const BipartiteGraph&, const BipartiteGraph&) = default;
};

/// Feature row of one entity; depends on the node alone.
inline FeatureRow entity_features(const EntityNode& e) {
  FeatureRow x;
  x.fill(-1.0);
  x[dim::kNodeType] = 0.0;
  x[dim::kNodeIndex] = e.index;
  switch (e.kind) {
    case EntityKind::external_as: x[dim::kExternalAs] = 1.0; break;
    case EntityKind::dest_network: x[dim::kDestNetwork] = 1.0; break;
    case EntityKind::route_reflector: x[dim::kRouteReflector] = 1.0; break;
    case EntityKind::router: x[dim::kRouter] = 1.0; break;
  }
  return x;
}

/// Feature row of one fact; depends on the node alone. Dims 7-9 are
/// reserved and always inapplicable.
inline FeatureRow fact_features(const FactNode& f) {
  FeatureRow x;
  x.fill(-1.0);
  x[dim::kNodeType] = 1.0;
  x[dim::kNodeIndex] = f.index;
  x[dim::kPredicate] = static_cast<double>(static_cast<int>(f.predicate));
  x[dim::kHolds] = f.holds;
  for (std::size_t c = 0; c < kParams.size(); ++c) {
    if (auto v = f.param(kParams[c])) x[kParamDims[c]] = *v;
  }
  return x;
}

inline FeatureMatrix featurize(const BipartiteGraph& g) {
  FeatureMatrix x;
  x.reserve(g.node_count());
  for (const auto& e : g.entities) x.push_back(entity_features(e));
  for (const auto& f : g.facts) x.push_back(fact_features(f));
  return x;
}

/// Throws GraphError on any structural violation: bipartiteness, arity,
/// argument kinds, edge typing, fact degree, feature layout.
inline void check_graph(const BipartiteGraph& g) {
  const int ne = g.entity_count();
  for (int i = 0; i < ne; ++i) {
    if (g.entities[i].index != i) throw GraphError("entity index mismatch at " + std::to_string(i));
  }
  for (int i = 0; i < g.fact_count(); ++i) {
    const auto& f = g.facts[i];
    if (f.index != ne + i) throw GraphError("fact index mismatch at " + std::to_string(i));
    if (static_cast<int>(f.args.size()) != predicate_arity(f.predicate) || f.args.size() < 2) {
      throw GraphError(std::string(predicate_name(f.predicate)) + " fact with wrong arity");
    }
    for (std::size_t p = 0; p < f.args.size(); ++p) {
      int a = f.args[p];
      if (a < 0 || a >= ne) throw GraphError("dangling argument " + std::to_string(a));
      if (!argument_kind_ok(f.predicate, static_cast<int>(p), g.entities[a].kind)) {
        throw GraphError(std::string(predicate_name(f.predicate)) + " argument " + std::to_string(p) +
                         " has wrong entity kind");
      }
    }
  }
  std::vector<int> degree(g.fact_count(), 0);
  for (const auto& e : g.edges) {
    if (!g.is_fact(e.fact) || e.fact >= g.node_count()) throw GraphError("edge source is not a fact node");
    if (e.entity < 0 || e.entity >= ne) throw GraphError("edge target is not an entity node");
    const auto& f = g.fact_at(e.fact);
    if (e.type < 0 || e.type >= static_cast<int>(f.args.size()) || f.args[e.type] != e.entity) {
      throw GraphError("edge type does not match argument position");
    }
    ++degree[e.fact - ne];
  }
  for (int i = 0; i < g.fact_count(); ++i) {
    if (degree[i] < 2 || degree[i] != static_cast<int>(g.facts[i].args.size())) {
      throw GraphError("fact node " + std::to_string(ne + i) + " has degree " + std::to_string(degree[i]));
    }
  }
  if (g.features != featurize(g)) throw GraphError("feature matrix does not match node layout");
}

namespace detail {

class GraphBuilder {
 public:
  int entity(EntityKind kind, std::string source) {
    int idx = static_cast<int>(g_.entities.size());
    g_.entities.push_back({idx, kind, std::move(source)});
    return idx;
  }
  FactNode& fact(Predicate p, std::vector<int> args) {
    FactNode f;
    f.predicate = p;
    f.args = std::move(args);
    pending_.push_back(std::move(f));
    return pending_.back();
  }
  BipartiteGraph finish(std::uint64_t seed) {
    g_.seed = seed;
    const int ne = g_.entity_count();
    for (auto& f : pending_) {
      f.index = ne + static_cast<int>(g_.facts.size());
      for (int a : f.args) {
        if (a < 0 || a >= ne) throw GraphError("dangling argument id " + std::to_string(a));
      }
      for (std::size_t p = 0; p < f.args.size(); ++p) {
        g_.edges.push_back({f.index, f.args[p], static_cast<int>(p)});
      }
      g_.facts.push_back(std::move(f));
    }
    g_.features = featurize(g_);
    check_graph(g_);
    return std::move(g_);
  }

 private:
  BipartiteGraph g_;
  std::vector<FactNode> pending_;
};

}  // namespace detail

/// Lowers a network and its intents into the bipartite entity/fact graph.
inline BipartiteGraph build_graph(const Topology& topo, const BgpConfig& bgp, const OspfConfig& ospf,
                                  const IntentSet& intents) {
  detail::GraphBuilder b;
  const int n = topo.router_count();
  std::vector<int> router_node(n), as_node(topo.as_count()), net_node(topo.network_count());
  for (RouterId r = 0; r < n; ++r) {
    router_node[r] = b.entity(r == topo.route_reflector ? EntityKind::route_reflector : EntityKind::router,
                              topo.router_names[r]);
  }
  for (AsId a = 0; a < topo.as_count(); ++a) as_node[a] = b.entity(EntityKind::external_as, "AS" + std::to_string(a));
  for (NetworkId k = 0; k < topo.network_count(); ++k) net_node[k] = b.entity(EntityKind::dest_network, "N" + std::to_string(k));

  auto router = [&](RouterId r) {
    if (r < 0 || r >= n) throw GraphError("dangling router id " + std::to_string(r));
    return router_node[r];
  };
  auto network = [&](NetworkId k) {
    if (k < 0 || k >= topo.network_count()) throw GraphError("dangling network id " + std::to_string(k));
    return net_node[k];
  };
  auto as_entity = [&](AsId a) {
    if (a < 0 || a >= topo.as_count()) throw GraphError("dangling AS id " + std::to_string(a));
    return as_node[a];
  };

  for (const auto& l : topo.intra_links) {
    auto it = ospf.weight.find(l);
    if (it == ospf.weight.end()) throw GraphError("link without OSPF weight");
    b.fact(Predicate::connected, {router(l.a), router(l.b)}).ospf_weight = it->second;
  }
  for (RouterId r = 0; r < n; ++r) {
    if (r != topo.route_reflector) b.fact(Predicate::ibgp, {router(r), router(topo.route_reflector)});
  }
  for (const auto& [gw, as] : topo.ebgp_adjacencies) b.fact(Predicate::ebgp, {router(gw), as_entity(as)});
  for (const auto& adv : topo.advertised_routes) {
    auto& f = b.fact(Predicate::bgp_route, {as_entity(adv.first), network(adv.second)});
    f.local_pref = bgp.local_pref.at(adv);
    f.as_path_len = bgp.as_path_len.at(adv);
    f.med = bgp.med.at(adv);
  }
  for (const auto& i : intents.fwd) {
    b.fact(Predicate::fwd, {router(i.src), network(i.dst), router(i.next)}).holds = i.holds;
  }
  for (const auto& i : intents.reachable) {
    b.fact(Predicate::reachable, {router(i.src), network(i.dst), router(i.exit)}).holds = i.holds;
  }
  for (const auto& i : intents.traffic_iso) {
    b.fact(Predicate::traffic_iso, {router(i.r1), router(i.r2), network(i.n1), network(i.n2)}).holds = i.holds;
  }
  return b.finish(topo.seed);
}

/// Adds both message directions for every typed edge (same type) and one
/// self-loop per node with its own type. Idempotent.
inline BipartiteGraph augment(BipartiteGraph g) {
  g.messages.clear();
  g.messages.reserve(2 * g.edges.size() + g.node_count());
  for (const auto& e : g.edges) {
    g.messages.push_back({e.fact, e.entity, e.type});
    g.messages.push_back({e.entity, e.fact, e.type});
  }
  for (int v = 0; v < g.node_count(); ++v) g.messages.push_back({v, v, kSelfLoopType});
  return g;
}

/// Applicability of each feature dim, taken from the ground-truth layout:
/// true where X* is not -1.
inline std::vector<std::array<bool, kFeatureDim>> applicability(const BipartiteGraph& g) {
  std::vector<std::array<bool, kFeatureDim>> m(g.features.size());
  for (std::size_t v = 0; v < g.features.size(); ++v) {
    for (int d = 0; d < kFeatureDim; ++d) m[v][d] = g.features[v][d] != -1.0;
  }
  return m;
}

}  // namespace gsid
