#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaclust/cluster_model.hpp"
#include "metaclust/graph.hpp"
#include "metaclust/params.hpp"
#include "metaclust/rng.hpp"
#include "metaclust/similarity.hpp"
#include "metaclust/tape.hpp"

namespace metaclust {

inline constexpr int kNumPairFeatures = 3;

// Per-pair feature planes for a set of rows, each |rows| x N:
//   non-adjacent pair: (1, 0, 0)
//   adjacent pair:     (1, S_ij, 2|E| * L_ij)
// where S is Adamic-Adar and L the current pair loss value. The loss values
// are snapshots (constants); the meta objective reaches w only through the
// differentiated inner step, not through this feature. The loss feature is
// rescaled into per-pair modularity units, i.e. -(A_ij - d_i d_j / 2|E|)
// (P_i . P_j), which is O(1); the raw entries carry a global 1/2|E| factor
// that would park the downstream sigmoid gate at its flat center and starve
// that branch of gradient.
struct PairFeatures {
  std::vector<int> rows;
  Eigen::MatrixXd y1, y2, y3;
};

inline PairFeatures pair_features(const Graph& g, const PairSimilarity& sim,
                                  const PairLossTerms& loss_terms,
                                  const std::vector<int>& rows) {
  if (static_cast<int>(sim.edge_scores.size()) != g.num_edges())
    throw std::invalid_argument(
        "pair_features: similarity does not cover the graph's edges");
  const int n = g.num_nodes();
  const double loss_unit = static_cast<double>(g.total_degree());
  PairFeatures f;
  f.rows = rows;
  f.y1 = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(rows.size()), n);
  f.y2 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), n);
  f.y3 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int i = rows[r];
    const Eigen::Index lr = loss_terms.row_position(i);
    for (int j : g.neighbors(i)) {
      const int e = g.edge_index(i, j);
      f.y2(static_cast<Eigen::Index>(r), j) = sim.edge_scores[static_cast<std::size_t>(e)];
      f.y3(static_cast<Eigen::Index>(r), j) = loss_unit * loss_terms.L(lr, j);
    }
  }
  return f;
}

enum class FeatureVariant { full, attributes_only };

// attributes_only (the attributes-only ablation) forces (1, 0, 0) for every
// pair; full delegates to pair_features.
inline PairFeatures ablation_features(FeatureVariant variant, const Graph& g,
                                      const PairSimilarity& sim,
                                      const PairLossTerms& loss_terms,
                                      const std::vector<int>& rows) {
  switch (variant) {
    case FeatureVariant::full:
      return pair_features(g, sim, loss_terms, rows);
    case FeatureVariant::attributes_only: {
      PairFeatures f;
      f.rows = rows;
      f.y1 = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(rows.size()), g.num_nodes());
      f.y2 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), g.num_nodes());
      f.y3 = f.y2;
      return f;
    }
  }
  throw std::invalid_argument("ablation_features: unknown variant");
}

// Meta parameters: per feature r, a two-layer MLP (ReLU after layer 1, linear
// layer 2) mapping attributes to an embedding Z^(r), plus free logits whose
// softmax gives the mixture alpha.
inline ParamSet init_meta_params(int n_features, int hidden, int embed_dim, Rng& rng) {
  if (n_features < 1 || hidden < 1 || embed_dim < 1)
    throw std::invalid_argument("init_meta_params: bad dimensions");
  auto kaiming = [&rng](int rows, int cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows));
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
    return m;
  };
  // The output layer is shrunk so that initial embeddings give pair products
  // Z_i . Z_j of order 1; full-scale init saturates the sigmoid gates and
  // kills their gradient from the very first step.
  const double out_gain = 0.1;
  ParamSet theta;
  for (int r = 1; r <= kNumPairFeatures; ++r) {
    const std::string p = "m" + std::to_string(r) + "_";
    theta.add(p + "w1", kaiming(n_features, hidden));
    theta.add(p + "b1", Eigen::MatrixXd::Zero(1, hidden));
    theta.add(p + "w2", out_gain * kaiming(hidden, embed_dim));
    theta.add(p + "b2", Eigen::MatrixXd::Zero(1, embed_dim));
  }
  theta.add("alpha_logits", Eigen::MatrixXd::Zero(1, kNumPairFeatures));
  return theta;
}

// V = sum_r alpha_r * sigmoid((Z^(r) Z^(r)T) ⊙ Y^(r)) restricted to the
// requested rows; every entry lies strictly in (0, 1). theta_nodes order
// matches init_meta_params.
inline Value meta_forward_node(Tape& t, Value X, const PairFeatures& feats,
                               const std::vector<Value>& theta_nodes) {
  if (theta_nodes.size() != 4 * kNumPairFeatures + 1)
    throw std::invalid_argument("meta_forward: wrong number of parameter nodes");
  const int n = static_cast<int>(t.val(X).rows());
  const Eigen::MatrixXd* planes[kNumPairFeatures] = {&feats.y1, &feats.y2, &feats.y3};
  Value alpha = t.row_softmax(theta_nodes[4 * kNumPairFeatures]);
  Value v_total{};
  for (int r = 0; r < kNumPairFeatures; ++r) {
    Value w1 = theta_nodes[static_cast<std::size_t>(4 * r)];
    Value b1 = theta_nodes[static_cast<std::size_t>(4 * r + 1)];
    Value w2 = theta_nodes[static_cast<std::size_t>(4 * r + 2)];
    Value b2 = theta_nodes[static_cast<std::size_t>(4 * r + 3)];
    Value hidden = relu(t, t.add(t.matmul(X, w1), t.broadcast_row(b1, n)));
    Value z = t.add(t.matmul(hidden, w2), t.broadcast_row(b2, n));
    Value attn = t.matmul(t.gather_rows(z, feats.rows), t.transpose(z));
    Value gated = t.sigmoid(t.mul(attn, t.constant(*planes[r])));
    Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(1, kNumPairFeatures);
    selector(0, r) = 1.0;
    Value alpha_r = t.sum(t.mul(alpha, t.constant(selector)));
    Value contrib = t.mul_scalar(gated, alpha_r);
    v_total = v_total.valid() ? t.add(v_total, contrib) : contrib;
  }
  return v_total;
}

inline Eigen::MatrixXd meta_forward(const Eigen::MatrixXd& X, const PairFeatures& feats,
                                    const ParamSet& theta) {
  Tape t;
  std::vector<Value> nodes;
  for (std::size_t i = 0; i < theta.count(); ++i) nodes.push_back(t.constant(theta.mat(i)));
  return t.val(meta_forward_node(t, t.constant(X), feats, nodes));
}

}  // namespace metaclust
