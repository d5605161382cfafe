#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "metaclust/autodiff.hpp"
#include "metaclust/graph.hpp"
#include "metaclust/params.hpp"
#include "metaclust/rng.hpp"
#include "metaclust/tape.hpp"

namespace metaclust {

// Row-stochastic N x K soft cluster assignment.
struct SoftAssignment {
  Eigen::MatrixXd P;
  int num_nodes() const { return static_cast<int>(P.rows()); }
  int num_clusters() const { return static_cast<int>(P.cols()); }
};

// Clustering parameters: one GCN layer with a skip connection (W1 propagates,
// W2 skips) followed by a single-layer softmax head. Entry order is the
// flattening order.
inline ParamSet init_cluster_params(int n_features, int hidden, int k_clusters,
                                    Rng& rng) {
  if (n_features < 1 || hidden < 1 || k_clusters < 2)
    throw std::invalid_argument("init_cluster_params: bad dimensions");
  auto kaiming = [&rng](int rows, int cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows));
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
    return m;
  };
  ParamSet w;
  w.add("gcn_w1", kaiming(n_features, hidden));
  w.add("gcn_w2", kaiming(n_features, hidden));
  w.add("head_w", kaiming(hidden, k_clusters));
  w.add("head_b", Eigen::MatrixXd::Zero(1, k_clusters));
  return w;
}

// SELU(Anorm * H * W1 + H * W2); degree-0 nodes see only the skip term.
inline Value gcn_layer_node(Tape& t, const Graph& g, Value H, Value W1, Value W2) {
  if (t.val(H).rows() != g.num_nodes())
    throw std::invalid_argument("gcn_layer: H row count does not match graph");
  Value prop = t.spmm(&g.norm_adjacency(), t.matmul(H, W1));
  Value skip = t.matmul(H, W2);
  return selu(t, t.add(prop, skip));
}

// Full clustering model: P = row_softmax(gcn(X) * head_w + head_b).
// w_nodes order: gcn_w1, gcn_w2, head_w, head_b. logits_out, when given,
// receives the pre-softmax activations (the trainer's annealing penalty needs
// them).
inline Value assign_node(Tape& t, const Graph& g, Value X,
                         const std::vector<Value>& w_nodes,
                         Value* logits_out = nullptr) {
  if (w_nodes.size() != 4)
    throw std::invalid_argument("assign: expected 4 clustering parameter nodes");
  Value H = gcn_layer_node(t, g, X, w_nodes[0], w_nodes[1]);
  Value logits =
      t.add(t.matmul(H, w_nodes[2]), t.broadcast_row(w_nodes[3], g.num_nodes()));
  if (logits_out) *logits_out = logits;
  return t.row_softmax(logits);
}

inline Eigen::MatrixXd gcn_layer(const Graph& g, const Eigen::MatrixXd& H_in,
                                 const Eigen::MatrixXd& W1, const Eigen::MatrixXd& W2) {
  Tape t;
  return t.val(gcn_layer_node(t, g, t.constant(H_in), t.constant(W1), t.constant(W2)));
}

inline SoftAssignment assign(const Graph& g, const Eigen::MatrixXd& X, int k_clusters,
                             const ParamSet& w) {
  if (w.at("head_w").cols() != k_clusters)
    throw std::invalid_argument("assign: head width does not match K");
  Tape t;
  std::vector<Value> nodes;
  for (std::size_t i = 0; i < w.count(); ++i) nodes.push_back(t.constant(w.mat(i)));
  Value P = assign_node(t, g, t.constant(X), nodes);
  return SoftAssignment{t.val(P)};
}

// Decomposable modularity loss terms for a set of rows. The constants are
// c_ij = -(1/2|E|) (A_ij - d_i d_j / 2|E|); L_ij = c_ij * (P_i . P_j). Both
// matrices are |rows| x N (the null-model part is dense in j).
//
// Diagonal convention: every deterministic assignment has P*_i . P*_i = 1, so
// the (i,i) term is the constant c_ii. Evaluating it at the soft value
// P_i . P_i instead would break the equality between the soft loss and the
// expectation of its deterministic values, which the rest of the theory (and
// the oracle suite) relies on.
struct PairLossTerms {
  std::vector<int> rows;
  Eigen::MatrixXd c;
  Eigen::MatrixXd L;

  Eigen::Index row_position(int node) const {
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (rows[r] == node) return static_cast<Eigen::Index>(r);
    throw std::invalid_argument("PairLossTerms: node " + std::to_string(node) +
                                " not among computed rows");
  }
};

inline Eigen::MatrixXd pair_constants(const Graph& g, const std::vector<int>& rows) {
  const int n = g.num_nodes();
  Eigen::MatrixXd c(static_cast<Eigen::Index>(rows.size()), n);
  const double two_e = g.total_degree();
  if (two_e == 0.0) {
    c.setZero();
    return c;
  }
  Eigen::VectorXd deg(n);
  for (int v = 0; v < n; ++v) deg[v] = static_cast<double>(g.degree(v));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int i = rows[r];
    if (i < 0 || i >= n) throw std::invalid_argument("pair_constants: row out of range");
    c.row(static_cast<Eigen::Index>(r)) =
        (deg[i] / (two_e * two_e)) * deg.transpose();
    for (int j : g.neighbors(i)) c(static_cast<Eigen::Index>(r), j) -= 1.0 / two_e;
  }
  return c;
}

inline PairLossTerms pair_loss_terms(const Eigen::MatrixXd& P, const Graph& g,
                                     const std::vector<int>& rows) {
  if (P.rows() != g.num_nodes())
    throw std::invalid_argument("pair_loss_terms: P row count does not match graph");
  PairLossTerms terms;
  terms.rows = rows;
  terms.c = pair_constants(g, rows);
  Eigen::MatrixXd P_rows(static_cast<Eigen::Index>(rows.size()), P.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    P_rows.row(static_cast<Eigen::Index>(r)) = P.row(rows[r]);
  terms.L = terms.c.cwiseProduct(P_rows * P.transpose());
  for (std::size_t r = 0; r < rows.size(); ++r)
    terms.L(static_cast<Eigen::Index>(r), rows[r]) =
        terms.c(static_cast<Eigen::Index>(r), rows[r]);
  return terms;
}

// Tape version: C_offdiag ⊙ (P_rows P^T) + diag constants, a |rows| x N node.
inline Value pair_terms_node(Tape& t, Value P, const Graph& g,
                             const std::vector<int>& rows) {
  Value P_rows = t.gather_rows(P, rows);
  Value ppt = t.matmul(P_rows, t.transpose(P));
  Eigen::MatrixXd c_off = pair_constants(g, rows);
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(c_off.rows(), c_off.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    diag(static_cast<Eigen::Index>(r), rows[r]) =
        c_off(static_cast<Eigen::Index>(r), rows[r]);
    c_off(static_cast<Eigen::Index>(r), rows[r]) = 0.0;
  }
  return t.add(t.mul(t.constant(std::move(c_off)), ppt), t.constant(std::move(diag)));
}

// Collapse regularizer R = (sqrt(K)/N) ||sum_i P_i||_F - 1, in [0, sqrt(K)-1].
inline double collapse_reg(const Eigen::MatrixXd& P, int k_clusters) {
  if (P.cols() != k_clusters)
    throw std::invalid_argument("collapse_reg: column count does not match K");
  const double n = static_cast<double>(P.rows());
  return std::sqrt(static_cast<double>(k_clusters)) / n * P.colwise().sum().norm() - 1.0;
}

inline Value collapse_reg_node(Tape& t, Value P, int k_clusters) {
  const double n = static_cast<double>(t.val(P).rows());
  Value cs = t.col_sum(P);
  Value fro = t.sqrt(t.sum(t.mul(cs, cs)));
  Value one = t.constant(Eigen::MatrixXd::Ones(1, 1));
  return t.sub(t.scale(fro, std::sqrt(static_cast<double>(k_clusters)) / n), one);
}

namespace detail {

inline Eigen::MatrixXd select_term_rows(const PairLossTerms& terms,
                                        const std::vector<int>& rows,
                                        const Eigen::MatrixXd& from) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), from.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = from.row(terms.row_position(rows[r]));
  return out;
}

}  // namespace detail

// Sum over i in rows of [ sum_j V_ij L_ij + (lambda/N) R ]. V rows align with
// `rows`; every weight must be strictly positive.
inline double weighted_node_loss(const PairLossTerms& terms, const Eigen::MatrixXd& V_rows,
                                 double lambda, double R, const std::vector<int>& rows) {
  if (lambda < 0.0) throw std::invalid_argument("weighted_node_loss: negative lambda");
  if (V_rows.rows() != static_cast<Eigen::Index>(rows.size()) ||
      V_rows.cols() != terms.L.cols())
    throw std::invalid_argument("weighted_node_loss: V shape mismatch");
  if ((V_rows.array() <= 0.0).any())
    throw std::invalid_argument("weighted_node_loss: non-positive weight");
  const Eigen::MatrixXd L = detail::select_term_rows(terms, rows, terms.L);
  const double n = static_cast<double>(terms.L.cols());
  return (V_rows.array() * L.array()).sum() +
         static_cast<double>(rows.size()) * lambda / n * R;
}

// Unweighted variant: V ≡ 1, lambda = 0.
inline double unweighted_node_loss(const PairLossTerms& terms, const std::vector<int>& rows) {
  return detail::select_term_rows(terms, rows, terms.L).sum();
}

// Batch loss node: sum(V ⊙ terms) + |batch| * (lambda/N) * R.
inline Value weighted_batch_loss_node(Tape& t, Value terms, Value V, Value R,
                                      double lambda, int n_nodes, int batch_size) {
  Value data = t.sum(t.mul(V, terms));
  Value reg =
      t.scale(R, lambda * static_cast<double>(batch_size) / static_cast<double>(n_nodes));
  return t.add(data, reg);
}

inline Value unweighted_batch_loss_node(Tape& t, Value terms) { return t.sum(terms); }

// Soft modularity of P on g: the negated full-graph unweighted loss, computed
// in O(|E| K + N K) without materializing pair matrices. Used for the
// per-epoch trace. The diagonal correction keeps this equal to the pair-term
// route, which evaluates (i,i) at its constant hard value.
inline double soft_modularity(const Eigen::MatrixXd& P, const Graph& g) {
  const double two_e = g.total_degree();
  if (two_e == 0.0) return 0.0;
  double edge_term = 0.0;
  for (const auto& [u, v] : g.edges()) edge_term += 2.0 * P.row(u).dot(P.row(v));
  Eigen::VectorXd deg(g.num_nodes());
  for (int v = 0; v < g.num_nodes(); ++v) deg[v] = static_cast<double>(g.degree(v));
  const Eigen::RowVectorXd dp = deg.transpose() * P;
  double null_term = dp.squaredNorm();
  for (int v = 0; v < g.num_nodes(); ++v)
    null_term += deg[v] * deg[v] * (1.0 - P.row(v).squaredNorm());
  return (edge_term - null_term / two_e) / two_e;
}

}  // namespace metaclust
