#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "metaclust/checkpoint.hpp"
#include "metaclust/cluster_model.hpp"
#include "metaclust/graph.hpp"
#include "metaclust/meta_model.hpp"
#include "metaclust/metrics.hpp"
#include "metaclust/noise.hpp"
#include "metaclust/report.hpp"
#include "metaclust/sbm.hpp"
#include "metaclust/similarity.hpp"
#include "metaclust/trainer.hpp"

namespace metaclust {

// Synthetic block-model source; enabled when clusters > 0.
struct SynthSpec {
  int clusters = 0;
  int nodes_per_cluster = 0;
  double p_in = 0.0;
  double p_out = 0.0;
  int attr_dim = 16;
  double attr_signal = 1.0;
  std::uint64_t seed = 1;

  bool enabled() const { return clusters > 0; }
};

// Full description of a seeds x ratios grid over one dataset. Parsed from a
// flat "key = value" config file; see parse_experiment_config for the keys.
struct ExperimentSpec {
  std::string dataset_name = "dataset";
  std::string edges_path, labels_path, attributes_path;  // file-backed dataset
  SynthSpec synth;
  std::vector<double> ratios{0.3};
  std::vector<std::uint64_t> seeds{1};
  Variant variant = Variant::metagc;
  TrainConfig train;  // k_clusters 0 means "use the label class count"
  double hits_frac = 0.1;
  std::string out_dir = "runs";

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("experiment: need at least one seed");
    if (ratios.empty())
      throw std::invalid_argument("experiment: need at least one noise ratio");
    for (double r : ratios)
      if (r < 0.0) throw std::invalid_argument("experiment: negative noise ratio");
    if (!(hits_frac > 0.0 && hits_frac <= 1.0))
      throw std::invalid_argument("experiment: hits_frac must be in (0, 1]");
    const bool files = !edges_path.empty() || !labels_path.empty();
    if (synth.enabled() && files)
      throw std::invalid_argument("experiment: both synthetic and file dataset given");
    if (!synth.enabled()) {
      if (edges_path.empty() || labels_path.empty() || attributes_path.empty())
        throw std::invalid_argument(
            "experiment: need dataset.edges, dataset.labels and dataset.attributes "
            "(or a synth.* block)");
    } else {
      if (synth.nodes_per_cluster < 1)
        throw std::invalid_argument("experiment: synth.nodes_per_cluster must be >= 1");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad number '" + v + "' for " + key);
  }
}

inline int to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad integer '" + v + "' for " + key);
  }
}

inline std::uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const std::uint64_t u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad seed '" + v + "' for " + key);
  }
}

}  // namespace detail

// Flat key-value experiment config. Lines are "key = value"; blank lines and
// lines starting with '#' are skipped. Keys:
//   dataset.name                       row label (default "dataset")
//   dataset.edges/.labels/.attributes  file-backed dataset paths
//   synth.clusters .nodes_per_cluster .p_in .p_out .attr_dim .attr_signal .seed
//   noise.ratios                       comma-separated ratios
//   seeds                              comma-separated run seeds
//   variant                            metagc | metagc-x | metagc-a
//   out_dir                            artifact directory
//   train.clusters .hidden .meta_hidden .embed_dim .batch .eta .mu .lambda
//        .min_epochs .max_epochs .patience .optimizer
//   eval.hits_frac
inline ExperimentSpec parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  ExperimentSpec spec;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ": expected 'key = value' at line " +
                               std::to_string(line_no));
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));
    if (key.empty() || val.empty())
      throw std::runtime_error(path + ": empty key or value at line " +
                               std::to_string(line_no));

    if (key == "dataset.name") spec.dataset_name = val;
    else if (key == "dataset.edges") spec.edges_path = val;
    else if (key == "dataset.labels") spec.labels_path = val;
    else if (key == "dataset.attributes") spec.attributes_path = val;
    else if (key == "synth.clusters") spec.synth.clusters = detail::to_int(val, key);
    else if (key == "synth.nodes_per_cluster")
      spec.synth.nodes_per_cluster = detail::to_int(val, key);
    else if (key == "synth.p_in") spec.synth.p_in = detail::to_double(val, key);
    else if (key == "synth.p_out") spec.synth.p_out = detail::to_double(val, key);
    else if (key == "synth.attr_dim") spec.synth.attr_dim = detail::to_int(val, key);
    else if (key == "synth.attr_signal")
      spec.synth.attr_signal = detail::to_double(val, key);
    else if (key == "synth.seed") spec.synth.seed = detail::to_u64(val, key);
    else if (key == "noise.ratios") {
      spec.ratios.clear();
      for (const auto& v : detail::split_list(val))
        spec.ratios.push_back(detail::to_double(v, key));
    } else if (key == "seeds") {
      spec.seeds.clear();
      for (const auto& v : detail::split_list(val))
        spec.seeds.push_back(detail::to_u64(v, key));
    } else if (key == "variant") spec.variant = parse_variant(val);
    else if (key == "out_dir") spec.out_dir = val;
    else if (key == "train.clusters") spec.train.k_clusters = detail::to_int(val, key);
    else if (key == "train.hidden") spec.train.hidden = detail::to_int(val, key);
    else if (key == "train.meta_hidden")
      spec.train.meta_hidden = detail::to_int(val, key);
    else if (key == "train.embed_dim") spec.train.embed_dim = detail::to_int(val, key);
    else if (key == "train.batch") spec.train.batch_size = detail::to_int(val, key);
    else if (key == "train.eta") spec.train.eta = detail::to_double(val, key);
    else if (key == "train.mu") spec.train.mu = detail::to_double(val, key);
    else if (key == "train.lambda") spec.train.lambda = detail::to_double(val, key);
    else if (key == "train.min_epochs")
      spec.train.min_epochs = detail::to_int(val, key);
    else if (key == "train.max_epochs")
      spec.train.max_epochs = detail::to_int(val, key);
    else if (key == "train.patience") spec.train.patience = detail::to_int(val, key);
    else if (key == "train.optimizer") spec.train.optimizer = val;
    else if (key == "train.anneal") spec.train.anneal = detail::to_double(val, key);
    else if (key == "train.anneal_epochs")
      spec.train.anneal_epochs = detail::to_int(val, key);
    else if (key == "eval.hits_frac") spec.hits_frac = detail::to_double(val, key);
    else
      throw std::runtime_error(path + ": unknown key '" + key + "' at line " +
                               std::to_string(line_no));
  }
  spec.validate();
  return spec;
}

inline Dataset build_dataset(const ExperimentSpec& spec) {
  if (spec.synth.enabled()) {
    const auto& s = spec.synth;
    return synth_sbm(s.nodes_per_cluster, s.clusters, s.p_in, s.p_out, s.attr_dim,
                     s.attr_signal, s.seed);
  }
  return load_dataset(spec.edges_path, spec.attributes_path, spec.labels_path);
}

// Learned confidence weight for every edge of g, aligned with g.edges().
// Evaluated in chunks of distinct first endpoints so the pair matrices stay
// |chunk| x N instead of N x N.
inline std::vector<double> edge_confidence_weights(const Graph& g,
                                                   const Eigen::MatrixXd& X,
                                                   const PairSimilarity& sim,
                                                   const Eigen::MatrixXd& P,
                                                   const ParamSet& theta,
                                                   FeatureVariant fv, int chunk = 256) {
  const auto& edges = g.edges();
  std::vector<double> weights(edges.size(), 0.0);
  std::size_t i = 0;
  while (i < edges.size()) {
    const std::size_t start = i;
    std::vector<int> rows;
    while (i < edges.size()) {
      const int u = edges[i].first;
      if (rows.empty() || rows.back() != u) {
        if (static_cast<int>(rows.size()) == chunk) break;
        rows.push_back(u);
      }
      ++i;
    }
    const PairLossTerms terms = pair_loss_terms(P, g, rows);
    const PairFeatures feats = ablation_features(fv, g, sim, terms, rows);
    const Eigen::MatrixXd V = meta_forward(X, feats, theta);
    for (std::size_t e = start; e < i; ++e) {
      const auto pos = std::lower_bound(rows.begin(), rows.end(), edges[e].first) -
                       rows.begin();
      weights[e] = V(static_cast<Eigen::Index>(pos), edges[e].second);
    }
  }
  return weights;
}

// One grid cell: either a finished row (ok) or the error that stopped it.
struct RunOutcome {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::string checkpoint_path;
  MetricsRow row;
};

namespace detail {

inline TrainConfig resolve_train_config(const ExperimentSpec& spec, const Dataset& base,
                                        double /*ratio*/, std::uint64_t seed) {
  TrainConfig cfg = spec.train;
  cfg.variant = spec.variant;
  cfg.seed = seed;
  if (cfg.k_clusters == 0) cfg.k_clusters = base.num_classes;
  return cfg;
}

inline std::string checkpoint_filename(const ExperimentSpec& spec, double ratio,
                                       std::uint64_t seed) {
  std::ostringstream ss;
  ss << spec.dataset_name << "_r" << format_double(ratio) << "_s" << seed << '_'
     << variant_name(spec.variant) << ".json";
  return ss.str();
}

}  // namespace detail

// Trains on the noisy graph and scores the result against the clean graph and
// the labels. checkpoint_path may be empty to skip writing.
inline RunOutcome run_single(const ExperimentSpec& spec, const Dataset& base,
                             double ratio, std::uint64_t seed,
                             const std::string& checkpoint_path) {
  RunOutcome out;
  out.ratio = ratio;
  out.seed = seed;
  try {
    const TrainConfig cfg = detail::resolve_train_config(spec, base, ratio, seed);
    const NoisyGraph noisy = inject_noise(base, ratio, seed);
    const TrainReport rep = train(noisy.graph, base.attributes, cfg);

    MetricsRow& row = out.row;
    row.dataset = spec.dataset_name;
    row.noise_level = ratio;
    row.seed = seed;
    row.variant = variant_name(spec.variant);
    row.epochs = rep.epochs_run;
    row.wall_ms = rep.wall_ms;

    const SoftAssignment P = assign(noisy.graph, base.attributes, cfg.k_clusters,
                                    rep.best_w);
    const HardAssignment hard = to_deterministic(P.P);
    row.f1 = pairwise_f1(base.labels, hard.clusters);
    row.nmi = nmi(base.labels, hard.clusters);
    row.modularity = modularity_metric(hard.clusters, base.graph);

    if (spec.variant != Variant::metagc_x) {
      const PairSimilarity sim = adamic_adar(noisy.graph);
      const FeatureVariant fv = spec.variant == Variant::metagc_a
                                    ? FeatureVariant::attributes_only
                                    : FeatureVariant::full;
      const auto weights = edge_confidence_weights(noisy.graph, base.attributes, sim,
                                                   P.P, rep.best_theta, fv);
      const RankingMetrics rm = ranking_metrics(weights, noisy.real_mask, spec.hits_frac);
      row.prauc = rm.prauc;
      row.hits = rm.hits_at_frac;
    }

    if (!checkpoint_path.empty()) {
      RunMeta meta{spec.dataset_name, ratio,     seed, variant_name(spec.variant),
                   rep.epochs_run,    rep.wall_ms};
      save_checkpoint(rep.best_w, rep.best_theta, cfg, checkpoint_path, &meta);
      out.checkpoint_path = checkpoint_path;
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

// Worker cap: METACLUST_THREADS when set (minimum 1), otherwise the hardware
// concurrency, never more than the number of jobs.
inline int worker_count(std::size_t jobs) {
  unsigned cap = std::thread::hardware_concurrency();
  if (cap == 0) cap = 1;
  if (const char* env = std::getenv("METACLUST_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) cap = static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return static_cast<int>(std::min<std::size_t>(cap, std::max<std::size_t>(jobs, 1)));
}

// Runs the ratios x seeds grid. Each run owns its state; results come back in
// grid order regardless of scheduling. Failed runs are recorded and do not
// stop the rest.
inline std::vector<RunOutcome> run_grid(const ExperimentSpec& spec, const Dataset& base,
                                        const std::string& checkpoint_dir) {
  struct Job {
    double ratio;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double r : spec.ratios)
    for (std::uint64_t s : spec.seeds) jobs.push_back({r, s});

  std::vector<RunOutcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const std::string ck =
          checkpoint_dir.empty()
              ? std::string()
              : checkpoint_dir + "/" +
                    detail::checkpoint_filename(spec, jobs[j].ratio, jobs[j].seed);
      outcomes[j] = run_single(spec, base, jobs[j].ratio, jobs[j].seed, ck);
    }
  };

  const int workers = worker_count(jobs.size());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return outcomes;
}

struct ExperimentResult {
  std::vector<RunOutcome> outcomes;  // grid order
  std::vector<MetricsRow> rows;      // successful runs only, grid order
  int failures = 0;
};

// Full grid plus artifacts: out_dir/rows.csv, out_dir/rows.json, checkpoints
// under out_dir/checkpoints/, and out_dir/failed_runs.txt when anything broke.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const Dataset base = build_dataset(spec);
  const std::string ck_dir = spec.out_dir + "/checkpoints";
  std::filesystem::create_directories(ck_dir);

  ExperimentResult res;
  res.outcomes = run_grid(spec, base, ck_dir);
  for (const auto& o : res.outcomes) {
    if (o.ok) res.rows.push_back(o.row);
    else ++res.failures;
  }
  write_rows_csv(res.rows, spec.out_dir + "/rows.csv");
  write_rows_json(res.rows, spec.out_dir + "/rows.json");
  if (res.failures > 0) {
    std::ofstream out(spec.out_dir + "/failed_runs.txt");
    for (const auto& o : res.outcomes)
      if (!o.ok)
        out << "ratio=" << detail::format_double(o.ratio) << " seed=" << o.seed
            << " variant=" << variant_name(spec.variant) << ": " << o.error << '\n';
  }
  return res;
}

// Re-evaluates a saved checkpoint against the dataset described by the spec.
// The stored run metadata pins the noisy graph (ratio, seed), so the metrics
// land on the same inputs the training run saw; epochs and wall_ms are carried
// over from the original run, which makes the row reproducible byte for byte.
inline MetricsRow eval_checkpoint(const ExperimentSpec& spec,
                                  const std::string& checkpoint_path) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  if (!ck.has_run)
    throw std::runtime_error(checkpoint_path +
                             ": checkpoint carries no run metadata, cannot re-evaluate");
  const Dataset base = build_dataset(spec);

  ExperimentSpec pinned = spec;
  pinned.variant = parse_variant(ck.run.variant);
  const TrainConfig cfg =
      detail::resolve_train_config(pinned, base, ck.run.noise_level, ck.run.seed);
  if (config_hash(cfg) != ck.cfg_hash)
    throw std::runtime_error(checkpoint_path +
                             ": checkpoint was written under a different configuration");

  const NoisyGraph noisy = inject_noise(base, ck.run.noise_level, ck.run.seed);

  MetricsRow row;
  row.dataset = ck.run.dataset;
  row.noise_level = ck.run.noise_level;
  row.seed = ck.run.seed;
  row.variant = ck.run.variant;
  row.epochs = ck.run.epochs;
  row.wall_ms = ck.run.wall_ms;

  const SoftAssignment P = assign(noisy.graph, base.attributes, ck.k_clusters, ck.w);
  const HardAssignment hard = to_deterministic(P.P);
  row.f1 = pairwise_f1(base.labels, hard.clusters);
  row.nmi = nmi(base.labels, hard.clusters);
  row.modularity = modularity_metric(hard.clusters, base.graph);

  if (pinned.variant != Variant::metagc_x) {
    const PairSimilarity sim = adamic_adar(noisy.graph);
    const FeatureVariant fv = pinned.variant == Variant::metagc_a
                                  ? FeatureVariant::attributes_only
                                  : FeatureVariant::full;
    const auto weights =
        edge_confidence_weights(noisy.graph, base.attributes, sim, P.P, ck.theta, fv);
    const RankingMetrics rm = ranking_metrics(weights, noisy.real_mask, spec.hits_frac);
    row.prauc = rm.prauc;
    row.hits = rm.hits_at_frac;
  }
  return row;
}

}  // namespace metaclust
