#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "metaclust/autodiff.hpp"
#include "metaclust/cluster_model.hpp"
#include "metaclust/enumeration.hpp"
#include "metaclust/graph.hpp"
#include "metaclust/rng.hpp"

using namespace metaclust;

namespace {

Graph barbell() {
  return Graph(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}, {2, 3}});
}

Eigen::MatrixXd random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

Eigen::MatrixXd random_soft(Rng& rng, int n, int k) {
  Eigen::MatrixXd P(n, k);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int c = 0; c < k; ++c) {
      P(i, c) = rng.uniform(0.05, 1.0);
      s += P(i, c);
    }
    P.row(i) /= s;
  }
  return P;
}

std::vector<int> all_rows(int n) {
  std::vector<int> rows(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
  return rows;
}

}  // namespace

TEST_CASE("gcn layer reduces to the skip path without propagation") {
  Rng rng(3);
  const Eigen::MatrixXd H = random_mat(rng, 4, 3);
  const Eigen::MatrixXd W1 = random_mat(rng, 3, 5);
  const Eigen::MatrixXd W2 = random_mat(rng, 3, 5);

  SECTION("edgeless graph") {
    const Graph g(4, {});
    const Eigen::MatrixXd out = gcn_layer(g, H, W1, W2);
    Tape t;
    const Eigen::MatrixXd expect = t.val(selu(t, t.constant(H * W2)));
    REQUIRE((out - expect).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SECTION("zero propagation weight") {
    const Graph g(4, {{0, 1}, {1, 2}, {2, 3}});
    const Eigen::MatrixXd out = gcn_layer(g, H, Eigen::MatrixXd::Zero(3, 5), W2);
    Tape t;
    const Eigen::MatrixXd expect = t.val(selu(t, t.constant(H * W2)));
    REQUIRE((out - expect).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("gcn layer matches a dense normalized adjacency reference") {
  Rng rng(5);
  const Graph g(3, {{0, 1}, {1, 2}});
  const Eigen::MatrixXd H = random_mat(rng, 3, 2);
  const Eigen::MatrixXd W1 = random_mat(rng, 2, 4);
  const Eigen::MatrixXd W2 = random_mat(rng, 2, 4);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 3);
  A(0, 1) = A(1, 0) = A(1, 2) = A(2, 1) = 1.0;
  Eigen::VectorXd dinv(3);
  for (int v = 0; v < 3; ++v) dinv[v] = 1.0 / std::sqrt(static_cast<double>(g.degree(v)));
  const Eigen::MatrixXd Anorm = dinv.asDiagonal() * A * dinv.asDiagonal();

  Tape t;
  const Eigen::MatrixXd expect = t.val(selu(t, t.constant(Anorm * H * W1 + H * W2)));
  const Eigen::MatrixXd out = gcn_layer(g, H, W1, W2);
  REQUIRE((out - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("assignment head produces a proper soft clustering") {
  Rng rng(7);
  const Graph g(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}});
  const Eigen::MatrixXd X = random_mat(rng, 5, 3);

  SECTION("zero head gives the uniform assignment") {
    ParamSet w = init_cluster_params(3, 8, 4, rng);
    w.at("head_w").setZero();
    w.at("head_b").setZero();
    const SoftAssignment P = assign(g, X, 4, w);
    REQUIRE((P.P.array() - 0.25).abs().maxCoeff() <= 1e-12);
  }
  SECTION("rows sum to one") {
    const ParamSet w = init_cluster_params(3, 8, 3, rng);
    const SoftAssignment P = assign(g, X, 3, w);
    for (int i = 0; i < 5; ++i)
      REQUIRE_THAT(P.P.row(i).sum(), Catch::Matchers::WithinAbs(1.0, 1e-9));
    REQUIRE(P.P.minCoeff() > 0.0);
  }
  SECTION("raising one head bias lifts that column in every row") {
    ParamSet w = init_cluster_params(3, 8, 3, rng);
    const SoftAssignment before = assign(g, X, 3, w);
    w.at("head_b")(0, 1) += 0.7;
    const SoftAssignment after = assign(g, X, 3, w);
    for (int i = 0; i < 5; ++i) REQUIRE(after.P(i, 1) > before.P(i, 1));
  }
}

TEST_CASE("pair loss terms decompose modularity with the documented constants") {
  const Graph g = barbell();

  SECTION("single cluster sums to zero") {
    const Eigen::MatrixXd P = Eigen::MatrixXd::Ones(6, 1);
    const PairLossTerms terms = pair_loss_terms(P, g, all_rows(6));
    REQUIRE_THAT(terms.L.sum(), Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("hard two-triangle split scores minus five fourteenths") {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(6, 2);
    for (int v = 0; v < 6; ++v) P(v, v / 3) = 1.0;
    const PairLossTerms terms = pair_loss_terms(P, g, all_rows(6));
    REQUIRE_THAT(terms.L.sum(), Catch::Matchers::WithinAbs(-5.0 / 14.0, 1e-12));
  }
  SECTION("terms are symmetric across row choices") {
    Rng rng(11);
    const Eigen::MatrixXd P = random_soft(rng, 6, 3);
    const PairLossTerms ti = pair_loss_terms(P, g, {1});
    const PairLossTerms tj = pair_loss_terms(P, g, {4});
    REQUIRE_THAT(ti.L(0, 4), Catch::Matchers::WithinAbs(tj.L(0, 1), 1e-15));
    REQUIRE_THAT(ti.c(0, 4), Catch::Matchers::WithinAbs(tj.c(0, 1), 1e-15));
  }
  SECTION("tape version agrees with the numeric version") {
    Rng rng(13);
    const Eigen::MatrixXd P = random_soft(rng, 6, 2);
    const std::vector<int> rows{0, 2, 5};
    const PairLossTerms numeric = pair_loss_terms(P, g, rows);
    Tape t;
    const Eigen::MatrixXd on_tape = t.val(pair_terms_node(t, t.constant(P), g, rows));
    REQUIRE((on_tape - numeric.L).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("collapse regularizer spans zero to its hard ceiling") {
  SECTION("uniform assignment scores zero") {
    const Eigen::MatrixXd P = Eigen::MatrixXd::Constant(10, 4, 0.25);
    REQUIRE_THAT(collapse_reg(P, 4), Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("all nodes in one cluster score sqrt(K) minus one") {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(10, 3);
    P.col(0).setOnes();
    REQUIRE_THAT(collapse_reg(P, 3),
                 Catch::Matchers::WithinAbs(std::sqrt(3.0) - 1.0, 1e-12));
  }
  SECTION("K of four collapses to exactly one") {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(8, 4);
    P.col(2).setOnes();
    REQUIRE_THAT(collapse_reg(P, 4), Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
  SECTION("tape version matches") {
    Rng rng(17);
    const Eigen::MatrixXd P = random_soft(rng, 7, 3);
    Tape t;
    const double on_tape = t.val(collapse_reg_node(t, t.constant(P), 3))(0, 0);
    REQUIRE_THAT(on_tape, Catch::Matchers::WithinAbs(collapse_reg(P, 3), 1e-13));
  }
}

TEST_CASE("weighted node loss combines pair terms and the regularizer") {
  const Graph g = barbell();
  Rng rng(19);
  const Eigen::MatrixXd P = random_soft(rng, 6, 2);
  const std::vector<int> rows = all_rows(6);
  const PairLossTerms terms = pair_loss_terms(P, g, rows);
  const double R = collapse_reg(P, 2);

  SECTION("unit weights and zero lambda reduce to the unweighted loss") {
    const Eigen::MatrixXd V = Eigen::MatrixXd::Ones(6, 6);
    REQUIRE_THAT(weighted_node_loss(terms, V, 0.0, R, rows),
                 Catch::Matchers::WithinAbs(unweighted_node_loss(terms, rows), 1e-14));
    REQUIRE_THAT(unweighted_node_loss(terms, rows),
                 Catch::Matchers::WithinAbs(terms.L.sum(), 1e-14));
  }
  SECTION("with no pair contribution only the scaled regularizer remains") {
    const Eigen::MatrixXd Pz = Eigen::MatrixXd::Ones(6, 1);
    const PairLossTerms zero_terms = pair_loss_terms(Pz, Graph(6, {}), rows);
    const Eigen::MatrixXd V = Eigen::MatrixXd::Constant(6, 6, 2.0);
    REQUIRE_THAT(weighted_node_loss(zero_terms, V, 1.0, R, rows),
                 Catch::Matchers::WithinAbs(6.0 * R / 6.0, 1e-14));
  }
  SECTION("the loss is linear in the weights") {
    Eigen::MatrixXd V = Eigen::MatrixXd::Constant(6, 6, 0.7);
    const double once = weighted_node_loss(terms, V, 0.0, R, rows);
    const double twice = weighted_node_loss(terms, 2.0 * V, 0.0, R, rows);
    REQUIRE_THAT(twice, Catch::Matchers::WithinAbs(2.0 * once, 1e-12));
  }
  SECTION("non positive weights are rejected") {
    Eigen::MatrixXd V = Eigen::MatrixXd::Ones(6, 6);
    V(2, 3) = 0.0;
    REQUIRE_THROWS(weighted_node_loss(terms, V, 0.0, R, rows));
  }
}

TEST_CASE("soft loss equals its expectation over deterministic assignments") {
  // Spot check at unit-test scale; the verification suite runs the full sweep.
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 4);
    const int k = 2 + static_cast<int>(rng.uniform() * 2);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.uniform() < 0.5) edges.push_back({i, j});
    if (edges.empty()) continue;
    const Graph g(n, std::move(edges));
    const Eigen::MatrixXd P = random_soft(rng, n, k);
    const double gap = expectation_conforming_gap(
        [](const Eigen::MatrixXd& Q, const Graph& h) {
          return full_unweighted_loss(Q, h);
        },
        P, g);
    REQUIRE(gap <= 1e-9);
  }
}

TEST_CASE("soft modularity is the negated full loss") {
  Rng rng(29);
  const Graph g = barbell();
  const Eigen::MatrixXd P = random_soft(rng, 6, 3);
  REQUIRE_THAT(soft_modularity(P, g),
               Catch::Matchers::WithinAbs(-full_unweighted_loss(P, g), 1e-12));
}

TEST_CASE("clustering loss gradient matches finite differences") {
  Rng rng(31);
  const Graph g = barbell();
  const Eigen::MatrixXd X = random_mat(rng, 6, 3);
  const ParamSet w = init_cluster_params(3, 4, 2, rng);
  const std::vector<int> batch{0, 3, 4};

  const ScalarFn fn = [&](Tape& t, const std::vector<Value>& vs) {
    Value P = assign_node(t, g, t.constant(X), vs);
    Value terms = pair_terms_node(t, P, g, batch);
    Value R = collapse_reg_node(t, P, 2);
    Value V = t.constant(Eigen::MatrixXd::Ones(3, 6));
    return weighted_batch_loss_node(t, terms, V, R, 0.8, 6, 3);
  };
  REQUIRE(finite_diff_check(fn, w, 1e-5) <= 1e-4);
}

TEST_CASE("pre softmax activations are exposed on request") {
  Rng rng(37);
  const Graph g = barbell();
  const Eigen::MatrixXd X = random_mat(rng, 6, 3);
  const ParamSet w = init_cluster_params(3, 4, 2, rng);
  Tape t;
  auto nodes = autodiff_leaves(t, w);
  Value logits{};
  Value P = assign_node(t, g, t.constant(X), nodes, &logits);
  const Eigen::MatrixXd expect = t.val(t.row_softmax(logits));
  REQUIRE((t.val(P) - expect).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(t.val(logits).rows() == 6);
  REQUIRE(t.val(logits).cols() == 2);
}
