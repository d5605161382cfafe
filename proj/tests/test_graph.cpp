#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "metaclust/graph.hpp"
#include "metaclust/noise.hpp"
#include "metaclust/rng.hpp"
#include "metaclust/sbm.hpp"
#include "metaclust/similarity.hpp"

#include "helpers.hpp"

using namespace metaclust;

namespace {

Graph triangle() { return Graph(3, {{0, 1}, {1, 2}, {0, 2}}); }

// Two triangles {0,1,2} and {3,4,5} joined by the edge 2-3.
Graph barbell() {
  return Graph(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}, {2, 3}});
}

Graph random_graph(Rng& rng, int n, double p) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < p) edges.push_back({i, j});
  return Graph(n, std::move(edges));
}

}  // namespace

TEST_CASE("graph stores each edge once and answers symmetric queries") {
  Graph g(4, {{0, 1}, {2, 1}});
  REQUIRE(g.num_nodes() == 4);
  REQUIRE(g.num_edges() == 2);
  REQUIRE(g.has_edge(0, 1));
  REQUIRE(g.has_edge(1, 0));
  REQUIRE(g.has_edge(1, 2));
  REQUIRE_FALSE(g.has_edge(0, 2));
  REQUIRE(g.degree(0) == 1);
  REQUIRE(g.degree(1) == 2);
  REQUIRE(g.degree(3) == 0);
}

TEST_CASE("graph rejects self loops and duplicate edges") {
  REQUIRE_THROWS(Graph(3, {{1, 1}}));
  REQUIRE_THROWS(Graph(3, {{0, 1}, {1, 0}}));
  REQUIRE_THROWS(Graph(2, {{0, 5}}));
}

TEST_CASE("degree sum equals twice the edge count on random graphs") {
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    Graph g = random_graph(rng, 2 + static_cast<int>(rng.uniform() * 14), 0.3);
    long long sum = 0;
    for (int v = 0; v < g.num_nodes(); ++v) sum += g.degree(v);
    REQUIRE(sum == 2LL * g.num_edges());
  }
}

TEST_CASE("dataset loads edges, attributes and labels from disk") {
  TempDir dir("load");
  const auto edges = write_file(dir, "edges.txt", "0 1\n1 2\n");
  const auto attrs = write_file(dir, "attrs.csv", "1,0\n0,1\n1,1\n");
  const auto labels = write_file(dir, "labels.csv", "0\n0\n1\n");
  const Dataset ds = load_dataset(edges, attrs, labels);
  REQUIRE(ds.graph.num_nodes() == 3);
  REQUIRE(ds.graph.num_edges() == 2);
  REQUIRE(ds.graph.degree(0) == 1);
  REQUIRE(ds.graph.degree(1) == 2);
  REQUIRE(ds.graph.degree(2) == 1);
  REQUIRE(ds.attributes.rows() == 3);
  REQUIRE(ds.attributes.cols() == 2);
  REQUIRE(ds.labels == std::vector<int>{0, 0, 1});
  REQUIRE(ds.num_classes == 2);
}

TEST_CASE("dataset load reports the line of a self loop") {
  TempDir dir("selfloop");
  const auto edges = write_file(dir, "edges.txt", "0 1\n2 2\n");
  const auto attrs = write_file(dir, "attrs.csv", zero_attr_csv(3, 2));
  const auto labels = write_file(dir, "labels.csv", "0\n0\n1\n");
  REQUIRE_THROWS_WITH(load_dataset(edges, attrs, labels),
                      Catch::Matchers::ContainsSubstring("self-loop") &&
                          Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("dataset load rejects bad inputs with clear errors") {
  TempDir dir("badload");
  const auto attrs2 = write_file(dir, "attrs2.csv", zero_attr_csv(2, 2));
  const auto labels3 = write_file(dir, "labels3.csv", "0\n1\n0\n");
  const auto edges = write_file(dir, "edges.txt", "0 1\n");

  SECTION("missing file") { REQUIRE_THROWS(load_dataset(dir.path("nope"), attrs2, labels3)); }
  SECTION("non-integer id") {
    const auto bad = write_file(dir, "bad.txt", "0 x\n");
    REQUIRE_THROWS(load_dataset(bad, attrs2, labels3));
  }
  SECTION("attribute/label row mismatch") {
    REQUIRE_THROWS(load_dataset(edges, attrs2, labels3));
  }
  SECTION("duplicate edge names the line") {
    const auto attrs3 = write_file(dir, "attrs3.csv", zero_attr_csv(3, 2));
    const auto dup = write_file(dir, "dup.txt", "0 1\n2 0\n1 0\n");
    REQUIRE_THROWS_WITH(load_dataset(dup, attrs3, labels3),
                        Catch::Matchers::ContainsSubstring("line 3"));
  }
}

TEST_CASE("dataset load remaps sparse node ids to a dense range") {
  TempDir dir("remap");
  const auto edges = write_file(dir, "edges.txt", "# comment\n100 7\n7 2026\n");
  const auto attrs = write_file(dir, "attrs.csv", zero_attr_csv(3, 1));
  const auto labels = write_file(dir, "labels.csv", "0\n1\n1\n");
  const Dataset ds = load_dataset(edges, attrs, labels);
  REQUIRE(ds.graph.num_nodes() == 3);
  REQUIRE(ds.graph.num_edges() == 2);
  REQUIRE(ds.original_ids.size() == 3);
  const std::set<std::int64_t> ids(ds.original_ids.begin(), ds.original_ids.end());
  REQUIRE(ids == std::set<std::int64_t>{7, 100, 2026});
}

TEST_CASE("noise injection adds the rounded share of cross class edges") {
  // 10-edge clean graph: two 5-cycles, labels split by cycle.
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < 5; ++i) edges.push_back({i, (i + 1) % 5});
  for (int i = 0; i < 5; ++i) edges.push_back({5 + i, 5 + (i + 1) % 5});
  Dataset ds;
  ds.graph = Graph(10, edges);
  ds.attributes = Eigen::MatrixXd::Zero(10, 1);
  ds.labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  ds.num_classes = 2;

  const NoisyGraph ng = inject_noise(ds, 0.3, 5);
  REQUIRE(ng.graph.num_edges() == 13);
  REQUIRE(ng.num_injected() == 3);
  REQUIRE(ng.clean_graph.num_edges() == 10);

  int real = 0;
  for (std::size_t e = 0; e < ng.real_mask.size(); ++e) {
    const auto [u, v] = ng.graph.edges()[e];
    if (ng.real_mask[e]) {
      ++real;
      REQUIRE(ng.clean_graph.has_edge(u, v));
    } else {
      REQUIRE(ds.labels[u] != ds.labels[v]);
      REQUIRE_FALSE(ng.clean_graph.has_edge(u, v));
    }
  }
  REQUIRE(real == 10);
}

TEST_CASE("noise injection is deterministic per seed") {
  const Dataset ds = synth_sbm(20, 3, 0.3, 0.02, 4, 1.0, 3);
  const NoisyGraph a = inject_noise(ds, 0.6, 42);
  const NoisyGraph b = inject_noise(ds, 0.6, 42);
  const NoisyGraph c = inject_noise(ds, 0.6, 43);
  REQUIRE(a.graph.edges() == b.graph.edges());
  REQUIRE(a.real_mask == b.real_mask);
  REQUIRE(a.graph.edges() != c.graph.edges());
}

TEST_CASE("noise injection fails when the cross class pool is too small") {
  // Complete bipartite between the two classes: no cross-class non-edge left.
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < 3; ++i)
    for (int j = 3; j < 6; ++j) edges.push_back({i, j});
  Dataset ds;
  ds.graph = Graph(6, edges);
  ds.attributes = Eigen::MatrixXd::Zero(6, 1);
  ds.labels = {0, 0, 0, 1, 1, 1};
  ds.num_classes = 2;
  REQUIRE_THROWS_WITH(inject_noise(ds, 0.5, 1),
                      Catch::Matchers::ContainsSubstring("candidate"));
}

TEST_CASE("noisy edge list round trips through disk byte for byte") {
  TempDir dir("noisyio");
  const Dataset ds = synth_sbm(15, 2, 0.4, 0.05, 3, 1.0, 9);
  const NoisyGraph ng = inject_noise(ds, 0.5, 4);
  save_noisy_edge_list(ng, dir.path("a.txt"));
  save_noisy_edge_list(ng, dir.path("b.txt"));
  REQUIRE(read_file(dir.path("a.txt")) == read_file(dir.path("b.txt")));

  const NoisyGraph back = load_noisy_edge_list(dir.path("a.txt"), ds.graph.num_nodes());
  REQUIRE(back.graph.edges() == ng.graph.edges());
  REQUIRE(back.real_mask == ng.real_mask);
  REQUIRE(back.clean_graph.edges() == ng.clean_graph.edges());
}

TEST_CASE("adamic adar scores common neighbors by inverse log degree") {
  SECTION("path has no common neighbors") {
    const Graph g(3, {{0, 1}, {1, 2}});
    const PairSimilarity sim = adamic_adar(g);
    REQUIRE(sim.at(g, 0, 1) == 0.0);
    REQUIRE(sim.at(g, 1, 2) == 0.0);
  }
  SECTION("triangle edge sees one degree-2 common neighbor") {
    const Graph g = triangle();
    const PairSimilarity sim = adamic_adar(g);
    REQUIRE_THAT(sim.at(g, 0, 1),
                 Catch::Matchers::WithinAbs(1.0 / std::log(2.0), 1e-12));
    REQUIRE(sim.at(g, 0, 1) == sim.at(g, 1, 0));
  }
  SECTION("bridge edge of the barbell has no common neighbor") {
    const Graph g = barbell();
    const PairSimilarity sim = adamic_adar(g);
    REQUIRE(sim.at(g, 2, 3) == 0.0);
    REQUIRE(sim.at(g, 0, 1) > 0.0);
  }
}

TEST_CASE("adamic adar is symmetric and non negative on random graphs") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g = random_graph(rng, 12, 0.35);
    if (g.num_edges() == 0) continue;
    const PairSimilarity sim = adamic_adar(g);
    for (const auto& [u, v] : g.edges()) {
      REQUIRE(sim.at(g, u, v) >= 0.0);
      REQUIRE(sim.at(g, u, v) == sim.at(g, v, u));
    }
  }
}

TEST_CASE("deleting an edge lowers other scores by at most one term") {
  // Removing edge (a,b) can remove at most the common-neighbor term of a (or
  // b) from any other pair's sum, each worth at most 1/ln 2.
  const double bound = 1.0 / std::log(2.0) + 1e-12;
  Rng rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    Graph g = random_graph(rng, 10, 0.4);
    if (g.num_edges() < 2) continue;
    const PairSimilarity before = adamic_adar(g);
    const auto removed = g.edges()[static_cast<std::size_t>(rng.uniform() *
                                                            g.num_edges())];
    std::vector<std::pair<int, int>> rest;
    for (const auto& e : g.edges())
      if (e != removed) rest.push_back(e);
    Graph h(g.num_nodes(), rest);
    const PairSimilarity after = adamic_adar(h);
    for (const auto& [u, v] : h.edges()) {
      const double delta = before.at(g, u, v) - after.at(h, u, v);
      REQUIRE(delta >= -1e-12);  // scores never increase
      REQUIRE(delta <= 2.0 * bound);
    }
  }
}

TEST_CASE("synthetic block model honors its parameters") {
  SECTION("zero inter-cluster rate disconnects the communities") {
    const Dataset ds = synth_sbm(100, 4, 0.1, 0.0, 8, 1.0, 1);
    REQUIRE(ds.graph.num_nodes() == 400);
    REQUIRE(ds.num_classes == 4);
    for (const auto& [u, v] : ds.graph.edges()) REQUIRE(ds.labels[u] == ds.labels[v]);
    for (int v = 0; v < 400; ++v) REQUIRE(ds.labels[v] == v / 100);
  }
  SECTION("equal rates violate the precondition") {
    REQUIRE_THROWS(synth_sbm(10, 2, 0.1, 0.1, 4, 1.0, 1));
  }
  SECTION("same seed reproduces graph and attributes exactly") {
    const Dataset a = synth_sbm(30, 3, 0.2, 0.01, 6, 2.0, 77);
    const Dataset b = synth_sbm(30, 3, 0.2, 0.01, 6, 2.0, 77);
    REQUIRE(a.graph.edges() == b.graph.edges());
    REQUIRE(a.attributes == b.attributes);
    const Dataset c = synth_sbm(30, 3, 0.2, 0.01, 6, 2.0, 78);
    REQUIRE(a.graph.edges() != c.graph.edges());
  }
}
