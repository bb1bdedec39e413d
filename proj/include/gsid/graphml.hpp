#pragma once

#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "gsid/topology.hpp"

namespace gsid {

namespace detail {

struct GraphmlElements {
  std::vector<std::string> node_ids;
  std::vector<std::pair<std::string, std::string>> edges;
};

inline void collect_graphml(const boost::property_tree::ptree& tree, GraphmlElements& out) {
  for (const auto& [name, child] : tree) {
    if (name == "node") {
      auto id = child.get_optional<std::string>("<xmlattr>.id");
      if (!id) throw IngestError("node #" + std::to_string(out.node_ids.size()), "missing id attribute");
      out.node_ids.push_back(*id);
    } else if (name == "edge") {
      auto src = child.get_optional<std::string>("<xmlattr>.source");
      auto dst = child.get_optional<std::string>("<xmlattr>.target");
      if (!src || !dst) {
        throw IngestError("edge #" + std::to_string(out.edges.size()), "missing source or target");
      }
      out.edges.emplace_back(*src, *dst);
    } else if (name != "<xmlattr>" && name != "<xmlcomment>") {
      collect_graphml(child, out);
    }
  }
}

}  // namespace detail

/// Count of `node` elements, ignoring everything else in the document.
inline std::size_t graphml_node_count(std::string_view document) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(document)};
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw IngestError("line " + std::to_string(e.line()), e.message());
  }
  detail::GraphmlElements el;
  detail::collect_graphml(tree, el);
  return el.node_ids.size();
}

/// Reads a GraphML document (e.g. an Internet Topology Zoo file). Every node
/// becomes an internal router and every edge an intra-AS link; the AS
/// periphery is synthesized from `spec` and its seed.
inline Topology ingest_graphml(std::string_view document, const TopologySpec& spec) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(document)};
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw IngestError("line " + std::to_string(e.line()), e.message());
  }
  detail::GraphmlElements el;
  detail::collect_graphml(tree, el);
  if (el.node_ids.empty()) throw IngestError("document", "no node elements");

  Topology topo;
  topo.seed = spec.seed;
  std::map<std::string, RouterId> index;
  for (const auto& id : el.node_ids) {
    if (index.count(id)) throw IngestError("node " + id, "duplicate node id");
    index.emplace(id, static_cast<RouterId>(topo.router_names.size()));
    topo.router_names.push_back(id);
  }
  for (std::size_t k = 0; k < el.edges.size(); ++k) {
    const auto& [s, t] = el.edges[k];
    auto si = index.find(s);
    auto ti = index.find(t);
    if (si == index.end() || ti == index.end()) {
      throw IngestError("edge #" + std::to_string(k), "unknown endpoint " + (si == index.end() ? s : t));
    }
    // parallel edges collapse; self-loops carry no routing information
    if (si->second != ti->second) topo.intra_links.insert(Link::make(si->second, ti->second));
  }

  // connectivity is checked before the periphery so the error names the core
  {
    const auto adj = topo.adjacency();
    std::vector<char> seen(adj.size(), 0);
    std::vector<RouterId> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      RouterId u = stack.back();
      stack.pop_back();
      for (RouterId v : adj[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
    for (std::size_t r = 0; r < seen.size(); ++r) {
      if (!seen[r]) throw IngestError("node " + topo.router_names[r], "graph is disconnected");
    }
  }

  Rng rng(mix_seed(spec.seed, 0x6772616dULL));
  try {
    detail::attach_periphery(topo, spec, rng);
  } catch (const ValidationError& e) {
    throw IngestError("document", e.what());
  }
  topo.validate();
  return topo;
}

}  // namespace gsid
