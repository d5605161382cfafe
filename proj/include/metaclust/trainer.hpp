#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metaclust/autodiff.hpp"
#include "metaclust/cluster_model.hpp"
#include "metaclust/graph.hpp"
#include "metaclust/meta_model.hpp"
#include "metaclust/params.hpp"
#include "metaclust/rng.hpp"
#include "metaclust/similarity.hpp"
#include "metaclust/tape.hpp"

namespace metaclust {

enum class Variant { metagc, metagc_x, metagc_a };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::metagc: return "metagc";
    case Variant::metagc_x: return "metagc-x";
    case Variant::metagc_a: return "metagc-a";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "metagc") return Variant::metagc;
  if (s == "metagc-x" || s == "metagc_x") return Variant::metagc_x;
  if (s == "metagc-a" || s == "metagc_a") return Variant::metagc_a;
  throw std::invalid_argument("unknown variant: " + s);
}

struct TrainConfig {
  int k_clusters = 0;
  int hidden = 64;       // GCN width
  int meta_hidden = 64;  // meta MLP hidden width
  int embed_dim = 64;    // meta embedding dimension d_z
  int batch_size = 256;
  double eta = 1e-3;    // clustering learning rate
  double mu = 1e-3;     // meta learning rate
  double lambda = 1.0;  // collapse regularization rate
  int min_epochs = 200;
  int max_epochs = 1500;
  int patience = 50;
  std::uint64_t seed = 0;
  Variant variant = Variant::metagc;
  // "adam" (default) or "sgd". With "sgd" and mu = 0 each step reduces to one
  // plain gradient step on the weighted loss.
  std::string optimizer = "adam";
  // Annealed softmax-logit penalty for the clustering updates: a term of
  // softness_t * sum_{i in batch} |logit_i|^2 / N is added to the losses
  // driving w, with softness_t decaying linearly from `anneal` to 0 over
  // `anneal_epochs` epochs. The modularity objective alone is maximized at
  // one-hot rows, so logit norms grow until every softmax row saturates;
  // saturated rows stop sending gradient into the shared weights and the
  // assignment freezes long before borderline nodes are settled. Bounding the
  // logits early keeps every row in the responsive range of the softmax while
  // the coarse structure forms; rows then harden progressively as the penalty
  // fades. After the horizon the objective is exactly the unmodified one.
  // anneal = 0 disables.
  double anneal = 0.0;
  int anneal_epochs = 0;

  void validate(int n_nodes) const {
    if (k_clusters < 2) throw std::invalid_argument("TrainConfig: k_clusters < 2");
    if (k_clusters > n_nodes) throw std::invalid_argument("TrainConfig: K > N");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
    if (2 * batch_size > n_nodes)
      throw std::invalid_argument("TrainConfig: need 2*batch_size <= N, got 2*" +
                                  std::to_string(batch_size) + " > " +
                                  std::to_string(n_nodes));
    if (eta < 0.0 || mu < 0.0)
      throw std::invalid_argument("TrainConfig: negative learning rate");
    if (lambda < 0.0) throw std::invalid_argument("TrainConfig: negative lambda");
    if (patience < 1) throw std::invalid_argument("TrainConfig: patience < 1");
    if (min_epochs < 1 || max_epochs < min_epochs)
      throw std::invalid_argument("TrainConfig: bad epoch bounds");
    if (optimizer != "adam" && optimizer != "sgd")
      throw std::invalid_argument("TrainConfig: unknown optimizer " + optimizer);
    if (anneal < 0.0) throw std::invalid_argument("TrainConfig: negative anneal");
    if (anneal > 0.0 && anneal_epochs < 1)
      throw std::invalid_argument("TrainConfig: anneal > 0 needs anneal_epochs >= 1");
  }
};

// Adam with bias correction over the flattened parameter vector.
struct Optimizer {
  bool adam = true;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd m, v;
  long long t = 0;

  void init(Eigen::Index n, bool use_adam) {
    adam = use_adam;
    m = Eigen::VectorXd::Zero(n);
    v = Eigen::VectorXd::Zero(n);
    t = 0;
  }

  void step(ParamSet& p, const ParamSet& g, double lr) {
    Eigen::VectorXd pf = p.flatten();
    const Eigen::VectorXd gf = g.flatten();
    if (adam) {
      ++t;
      m = beta1 * m + (1.0 - beta1) * gf;
      v = beta2 * v + (1.0 - beta2) * gf.cwiseProduct(gf);
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
      pf -= lr * (m / c1).cwiseQuotient(((v / c2).cwiseSqrt().array() + eps).matrix());
    } else {
      pf -= lr * gf;
    }
    p.unflatten(pf);
  }
};

struct ModelState {
  ParamSet w, theta;
  Optimizer opt_w, opt_theta;
};

inline ModelState init_model_state(int n_features, const TrainConfig& cfg, Rng& rng) {
  ModelState s;
  s.w = init_cluster_params(n_features, cfg.hidden, cfg.k_clusters, rng);
  s.theta = init_meta_params(n_features, cfg.meta_hidden, cfg.embed_dim, rng);
  const bool use_adam = cfg.optimizer == "adam";
  s.opt_w.init(s.w.total_size(), use_adam);
  s.opt_theta.init(s.theta.total_size(), use_adam);
  return s;
}

// Uniformly random disjoint batches of size b (partial Fisher-Yates over a
// fresh identity permutation; each is returned sorted).
inline std::pair<std::vector<int>, std::vector<int>> sample_disjoint_batches(int n, int b,
                                                                             Rng& rng) {
  if (b < 1 || 2 * b > n)
    throw std::invalid_argument("sample_disjoint_batches: need 1 <= 2b <= N");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int k = 0; k < 2 * b; ++k) {
    const int j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - k)));
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(j)]);
  }
  std::vector<int> bc(idx.begin(), idx.begin() + b);
  std::vector<int> bm(idx.begin() + b, idx.begin() + 2 * b);
  std::sort(bc.begin(), bc.end());
  std::sort(bm.begin(), bm.end());
  return {std::move(bc), std::move(bm)};
}

// Per-step instrumentation for tests.
struct StepTrace {
  bool meta_updated = false;
  Eigen::VectorXd w_before;         // w entering the step
  Eigen::VectorXd w_prime;          // w after the differentiated inner step
  Eigen::VectorXd meta_grad_flat;   // gradient applied to theta
  Eigen::VectorXd w_grad_flat;      // gradient applied to w in the final update
  double weighted_loss = std::numeric_limits<double>::quiet_NaN();
  double meta_objective = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Weighted batch loss at the given parameter nodes; builds V from theta for
// the meta-weighted variants or fixes it at 1 for the unweighted one.
inline Value build_weighted_loss(Tape& t, const Graph& g, Value X_const,
                                 const std::vector<Value>& w_nodes,
                                 const std::vector<Value>& th_nodes,
                                 const PairSimilarity& sim, const TrainConfig& cfg,
                                 const std::vector<int>& batch, double softness) {
  Value logits{};
  Value P = assign_node(t, g, X_const, w_nodes, &logits);
  Value terms = pair_terms_node(t, P, g, batch);
  Value R = collapse_reg_node(t, P, cfg.k_clusters);
  Value V{};
  if (cfg.variant == Variant::metagc_x) {
    V = t.constant(
        Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(batch.size()), g.num_nodes()));
  } else {
    const PairLossTerms numeric_terms = pair_loss_terms(t.val(P), g, batch);
    const FeatureVariant fv = cfg.variant == Variant::metagc_a
                                  ? FeatureVariant::attributes_only
                                  : FeatureVariant::full;
    const PairFeatures feats = ablation_features(fv, g, sim, numeric_terms, batch);
    V = meta_forward_node(t, X_const, feats, th_nodes);
    if (std::getenv("METACLUST_VNORM")) {
      // Normalize the weights to mean 1 over the batch. The weighted loss is
      // otherwise not scale-invariant in V, and the meta-gradient's steepest
      // direction is a uniform inflation of all weights (a disguised learning
      // rate increase) that saturates every gate before any real/noise
      // discrimination can form.
      const double count = static_cast<double>(batch.size()) * g.num_nodes();
      Value inv_mean =
          t.div(t.constant(Eigen::MatrixXd::Constant(1, 1, count)), t.sum(V));
      V = t.mul_scalar(V, inv_mean);
    }
  }
  Value loss = weighted_batch_loss_node(t, terms, V, R, cfg.lambda, g.num_nodes(),
                                        static_cast<int>(batch.size()));
  if (softness > 0.0) {
    Value rows = t.gather_rows(logits, batch);
    Value sq_norm = t.sum(t.mul(rows, rows));
    loss = t.add(loss, t.scale(sq_norm, softness / g.num_nodes()));
  }
  return loss;
}

}  // namespace detail

// One alternating update with explicit batches:
//   (1) w' <- w - eta * grad_w of the weighted loss over batch_c (plain SGD,
//       recorded on the tape);
//   (2) theta <- optimizer step against grad_theta of the unweighted loss over
//       batch_m evaluated at w' (gradient flows through step 1);
//   (3) w <- optimizer step against grad_w of the weighted loss over batch_c
//       at the updated theta.
// The x-variant (no meta-model) runs only step 3 with V = 1.
inline void train_step_on_batches(ModelState& state, const Graph& g,
                                  const Eigen::MatrixXd& X, const PairSimilarity& sim,
                                  const TrainConfig& cfg, const std::vector<int>& batch_c,
                                  const std::vector<int>& batch_m,
                                  StepTrace* trace = nullptr, double softness = 0.0) {
  if (!state.w.all_finite() || !state.theta.all_finite())
    throw std::runtime_error("train_step: non-finite parameters");
  if (trace) {
    trace->w_before = state.w.flatten();
    trace->meta_updated = false;
  }

  const bool run_meta = cfg.variant != Variant::metagc_x;
  if (run_meta) {
    Tape t;
    auto w_nodes = autodiff_leaves(t, state.w);
    auto th_nodes = autodiff_leaves(t, state.theta);
    Value X_const = t.constant(X);
    Value loss = detail::build_weighted_loss(t, g, X_const, w_nodes, th_nodes, sim, cfg,
                                             batch_c, softness);
    auto gw = t.backward(loss, w_nodes);
    std::vector<Value> w_prime;
    w_prime.reserve(w_nodes.size());
    for (std::size_t i = 0; i < w_nodes.size(); ++i)
      w_prime.push_back(t.sub(w_nodes[i], t.scale(gw[i], cfg.eta)));

    Value p_prime = assign_node(t, g, X_const, w_prime);
    Value q = unweighted_batch_loss_node(t, pair_terms_node(t, p_prime, g, batch_m));
    auto gth = t.backward(q, th_nodes);

    ParamSet meta_g;
    for (std::size_t i = 0; i < state.theta.count(); ++i)
      meta_g.add(state.theta.name(i), t.val(gth[i]));
    if (!meta_g.all_finite())
      throw std::runtime_error("train_step: non-finite meta gradient");

    if (trace) {
      ParamSet wp;
      for (std::size_t i = 0; i < state.w.count(); ++i)
        wp.add(state.w.name(i), t.val(w_prime[i]));
      trace->w_prime = wp.flatten();
      trace->meta_grad_flat = meta_g.flatten();
      trace->meta_objective = t.val(q)(0, 0);
      trace->meta_updated = true;
    }
    state.opt_theta.step(state.theta, meta_g, cfg.mu);
  }

  // Final clustering update at the (possibly) updated theta; fresh tape.
  {
    Tape t;
    auto w_nodes = autodiff_leaves(t, state.w);
    auto th_nodes = run_meta ? autodiff_leaves(t, state.theta) : std::vector<Value>{};
    Value X_const = t.constant(X);
    Value loss = detail::build_weighted_loss(t, g, X_const, w_nodes, th_nodes, sim, cfg,
                                             batch_c, softness);
    auto gw = t.backward(loss, w_nodes);
    ParamSet w_g;
    for (std::size_t i = 0; i < state.w.count(); ++i)
      w_g.add(state.w.name(i), t.val(gw[i]));
    if (!w_g.all_finite()) throw std::runtime_error("train_step: non-finite gradient");
    if (trace) {
      trace->w_grad_flat = w_g.flatten();
      trace->weighted_loss = t.val(loss)(0, 0);
    }
    state.opt_w.step(state.w, w_g, cfg.eta);
  }
}

inline void train_step(ModelState& state, const Graph& g, const Eigen::MatrixXd& X,
                       const PairSimilarity& sim, const TrainConfig& cfg, Rng& rng,
                       StepTrace* trace = nullptr, double softness = 0.0) {
  auto [bc, bm] = sample_disjoint_batches(g.num_nodes(), cfg.batch_size, rng);
  train_step_on_batches(state, g, X, sim, cfg, bc, bm, trace, softness);
}

struct TrainReport {
  std::vector<double> loss_trace;        // mean final-update loss per epoch
  std::vector<double> modularity_trace;  // soft modularity on the training graph
  ParamSet best_w, best_theta;
  double best_modularity = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;  // 1-based
  int epochs_run = 0;
  double wall_ms = 0.0;
};

// Full training run on one graph (usually the noisy graph). Deterministic per
// config/seed. Early stopping: after min_epochs, stop once the soft-modularity
// trace has not improved in `patience` consecutive epochs; the best snapshot
// is returned.
inline TrainReport train(const Graph& g, const Eigen::MatrixXd& X,
                         const TrainConfig& cfg) {
  cfg.validate(g.num_nodes());
  if (X.rows() != g.num_nodes())
    throw std::invalid_argument("train: attribute rows do not match graph");
  const auto t0 = std::chrono::steady_clock::now();

  Rng rng(cfg.seed);
  ModelState state = init_model_state(static_cast<int>(X.cols()), cfg, rng);
  const PairSimilarity sim = adamic_adar(g);
  const int steps_per_epoch = g.num_nodes() / cfg.batch_size;

  TrainReport report;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double softness =
        cfg.anneal > 0.0 && epoch <= cfg.anneal_epochs
            ? cfg.anneal * (1.0 - static_cast<double>(epoch - 1) /
                                      static_cast<double>(cfg.anneal_epochs))
            : 0.0;
    double loss_sum = 0.0;
    for (int it = 0; it < steps_per_epoch; ++it) {
      StepTrace trace;
      train_step(state, g, X, sim, cfg, rng, &trace, softness);
      loss_sum += trace.weighted_loss;
    }
    report.loss_trace.push_back(loss_sum / steps_per_epoch);

    const SoftAssignment P = assign(g, X, cfg.k_clusters, state.w);
    const double q = soft_modularity(P.P, g);
    report.modularity_trace.push_back(q);
    report.epochs_run = epoch;
    if (q > report.best_modularity) {
      report.best_modularity = q;
      report.best_epoch = epoch;
      report.best_w = state.w;
      report.best_theta = state.theta;
    }
    if (epoch >= cfg.min_epochs && epoch - report.best_epoch >= cfg.patience) break;
  }

  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return report;
}

}  // namespace metaclust
