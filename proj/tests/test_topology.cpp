#include <gtest/gtest.h>

#include <fstream>
#include <queue>
#include <regex>
#include <sstream>

#include "gsid/graphml.hpp"
#include "gsid/topology.hpp"

using namespace gsid;

namespace {

TopologySpec baseline(std::uint64_t seed) {
  TopologySpec s;
  s.seed = seed;
  return s;
}

// Independent connectivity check straight from the link set.
bool connected_by_bfs(const Topology& t) {
  const int n = t.router_count();
  std::vector<std::vector<int>> adj(n);
  for (const auto& l : t.intra_links) {
    adj[l.a].push_back(l.b);
    adj[l.b].push_back(l.a);
  }
  std::vector<bool> seen(n, false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  int count = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        q.push(v);
      }
    }
  }
  return count == n;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kPath3 = R"(<?xml version="1.0" encoding="utf-8"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns">
  <graph edgedefault="undirected">
    <node id="a"/><node id="b"/><node id="c"/>
    <edge source="a" target="b"/>
    <edge source="b" target="c"/>
  </graph>
</graphml>)";

TopologySpec small_spec() {
  TopologySpec s;
  s.router_range = {3, 3};
  s.gateway_count_range = {1, 2};
  s.dest_network_range = {1, 2};
  return s;
}

}  // namespace

TEST(GenerateTopology, BaselineCountsWithinRanges) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Topology t = generate_topology(baseline(seed));
    EXPECT_GE(t.router_count(), 16);
    EXPECT_LE(t.router_count(), 23);
    EXPECT_EQ(t.gateways.size(), 3u);
    EXPECT_GE(t.network_count(), 4);
    EXPECT_LE(t.network_count(), 7);
    EXPECT_NO_THROW(t.validate());
  }
}

TEST(GenerateTopology, ConnectedUnderIndependentBfs) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Topology t = generate_topology(baseline(seed));
    EXPECT_TRUE(connected_by_bfs(t)) << "seed " << seed;
    for (const auto& l : t.intra_links) EXPECT_NE(l.a, l.b);
  }
}

TEST(GenerateTopology, InvariantsHoldOverSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Topology t = generate_topology(baseline(seed));
    EXPECT_GE(t.route_reflector, 0);
    EXPECT_LT(t.route_reflector, t.router_count());
    for (AsId a : t.external_ases) {
      int adj = 0, adv = 0;
      for (const auto& [g, x] : t.ebgp_adjacencies) adj += x == a;
      for (const auto& [x, n] : t.advertised_routes) adv += x == a;
      EXPECT_GE(adj, 1);
      EXPECT_GE(adv, 1);
    }
    for (const auto& [g, a] : t.ebgp_adjacencies) EXPECT_TRUE(t.is_gateway(g));
  }
}

TEST(GenerateTopology, DeterministicSerialization) {
  for (std::uint64_t seed : {0ull, 7ull, 123456789ull}) {
    EXPECT_EQ(generate_topology(baseline(seed)).serialize(), generate_topology(baseline(seed)).serialize());
    EXPECT_EQ(generate_topology(baseline(seed)), generate_topology(baseline(seed)));
  }
  EXPECT_NE(generate_topology(baseline(1)).serialize(), generate_topology(baseline(2)).serialize());
}

TEST(GenerateTopology, RouterCountsCoverRange) {
  std::set<int> seen;
  for (std::uint64_t seed = 0; seed < 200; ++seed) seen.insert(generate_topology(baseline(seed)).router_count());
  EXPECT_EQ(seen.size(), 8u);
}

TEST(GenerateTopology, InfeasibleSpecRejected) {
  TopologySpec s = baseline(0);
  s.gateway_count_range = {30, 30};
  EXPECT_THROW(generate_topology(s), ValidationError);
  s = baseline(0);
  s.router_range = {5, 2};
  EXPECT_THROW(generate_topology(s), ValidationError);
  s = baseline(0);
  s.dest_network_range = {0, 3};
  EXPECT_THROW(generate_topology(s), ValidationError);
}

TEST(GenerateTopology, SingleRouterSingleGateway) {
  TopologySpec s;
  s.router_range = {1, 1};
  s.gateway_count_range = {1, 1};
  s.dest_network_range = {1, 1};
  const Topology t = generate_topology(s);
  EXPECT_EQ(t.router_count(), 1);
  EXPECT_TRUE(t.intra_links.empty());
  EXPECT_NO_THROW(t.validate());
}

TEST(IngestGraphml, ThreeNodePath) {
  const Topology t = ingest_graphml(kPath3, small_spec());
  EXPECT_EQ(t.router_count(), 3);
  EXPECT_EQ(t.intra_links.size(), 2u);
  EXPECT_EQ(t.router_names, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_NO_THROW(t.validate());
}

TEST(IngestGraphml, TruncatedDocumentFails) {
  const std::string doc(kPath3);
  EXPECT_THROW(ingest_graphml(doc.substr(0, doc.size() / 2), small_spec()), IngestError);
}

TEST(IngestGraphml, EmptyNodeSetFails) {
  const char* doc = R"(<graphml><graph edgedefault="undirected"></graph></graphml>)";
  EXPECT_THROW(ingest_graphml(doc, small_spec()), IngestError);
}

TEST(IngestGraphml, DisconnectedGraphNamesNode) {
  const char* doc = R"(<graphml><graph>
    <node id="a"/><node id="b"/><node id="z"/>
    <edge source="a" target="b"/></graph></graphml>)";
  try {
    ingest_graphml(doc, small_spec());
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_EQ(e.location(), "node z");
  }
}

TEST(IngestGraphml, DuplicateIdAndUnknownEndpointFail) {
  const char* dup = R"(<graphml><graph><node id="a"/><node id="a"/></graph></graphml>)";
  EXPECT_THROW(ingest_graphml(dup, small_spec()), IngestError);
  const char* dangling = R"(<graphml><graph><node id="a"/><node id="b"/>
    <edge source="a" target="q"/></graph></graphml>)";
  EXPECT_THROW(ingest_graphml(dangling, small_spec()), IngestError);
}

TEST(IngestGraphml, SeedSelectsPeripheryDeterministically) {
  TopologySpec s = small_spec();
  s.seed = 5;
  EXPECT_EQ(ingest_graphml(kPath3, s), ingest_graphml(kPath3, s));
}

TEST(IngestGraphml, BundledSampleMatchesIndependentNodeCount) {
  const std::string doc = read_text(std::string(GSID_DATA_DIR) + "/abilene.graphml");
  ASSERT_FALSE(doc.empty());
  // Independent count: opening <node ...> tags in the raw text.
  const std::regex node_tag("<node[\\s/>]");
  const auto count = std::distance(std::sregex_iterator(doc.begin(), doc.end(), node_tag), std::sregex_iterator());
  TopologySpec s;
  s.router_range = {1, 1000};
  const Topology t = ingest_graphml(doc, s);
  EXPECT_EQ(t.router_count(), count);
  EXPECT_EQ(graphml_node_count(doc), static_cast<std::size_t>(count));
  EXPECT_TRUE(connected_by_bfs(t));
}
