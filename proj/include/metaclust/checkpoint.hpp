#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "metaclust/params.hpp"
#include "metaclust/trainer.hpp"

namespace metaclust {

inline constexpr int kCheckpointVersion = 1;

// FNV-1a over the fields that define a run; stored in checkpoints so a reload
// against a different configuration is caught early.
inline std::uint64_t config_hash(const TrainConfig& cfg) {
  std::ostringstream ss;
  ss << cfg.k_clusters << '|' << cfg.hidden << '|' << cfg.meta_hidden << '|'
     << cfg.embed_dim << '|' << cfg.batch_size << '|' << std::setprecision(17)
     << cfg.eta << '|' << cfg.mu << '|' << cfg.lambda << '|' << cfg.min_epochs << '|'
     << cfg.max_epochs << '|' << cfg.patience << '|' << cfg.seed << '|'
     << variant_name(cfg.variant) << '|' << cfg.optimizer << '|' << cfg.anneal << '|'
     << cfg.anneal_epochs;
  std::uint64_t h = 1469598103934665603ull;
  for (char c : ss.str()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

namespace detail {

inline nlohmann::json params_to_json(const ParamSet& p) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < p.count(); ++i) {
    const auto& m = p.mat(i);
    nlohmann::json data = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) data.push_back(m(r, c));
    entries.push_back({{"name", p.name(i)},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"data", std::move(data)}});
  }
  return entries;
}

inline ParamSet params_from_json(const nlohmann::json& entries) {
  ParamSet p;
  for (const auto& e : entries) {
    const Eigen::Index rows = e.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = e.at("cols").get<Eigen::Index>();
    const auto& data = e.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw std::runtime_error("checkpoint: entry size mismatch for " +
                               e.at("name").get<std::string>());
    Eigen::MatrixXd m(rows, cols);
    std::size_t at = 0;
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = data[at++].get<double>();
    p.add(e.at("name").get<std::string>(), std::move(m));
  }
  return p;
}

}  // namespace detail

// Identifies the run that produced a checkpoint, so re-evaluation can rebuild
// the same noisy graph and report the same row.
struct RunMeta {
  std::string dataset;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  std::string variant;
  int epochs = 0;
  double wall_ms = 0.0;
};

struct Checkpoint {
  ParamSet w, theta;
  std::uint64_t cfg_hash = 0;
  int k_clusters = 0;
  bool has_run = false;
  RunMeta run;
};

inline void save_checkpoint(const ParamSet& w, const ParamSet& theta,
                            const TrainConfig& cfg, const std::string& path,
                            const RunMeta* run = nullptr) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["config_hash"] = config_hash(cfg);
  j["k_clusters"] = cfg.k_clusters;
  j["w"] = detail::params_to_json(w);
  j["theta"] = detail::params_to_json(theta);
  if (run) {
    j["run"] = {{"dataset", run->dataset},   {"noise_level", run->noise_level},
                {"seed", run->seed},         {"variant", run->variant},
                {"epochs", run->epochs},     {"wall_ms", run->wall_ms}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(j.at("version").get<int>()));
  Checkpoint ck;
  ck.cfg_hash = j.at("config_hash").get<std::uint64_t>();
  ck.k_clusters = j.at("k_clusters").get<int>();
  ck.w = detail::params_from_json(j.at("w"));
  ck.theta = detail::params_from_json(j.at("theta"));
  if (j.contains("run")) {
    const auto& r = j.at("run");
    ck.has_run = true;
    ck.run.dataset = r.at("dataset").get<std::string>();
    ck.run.noise_level = r.at("noise_level").get<double>();
    ck.run.seed = r.at("seed").get<std::uint64_t>();
    ck.run.variant = r.at("variant").get<std::string>();
    ck.run.epochs = r.at("epochs").get<int>();
    ck.run.wall_ms = r.at("wall_ms").get<double>();
  }
  return ck;
}

}  // namespace metaclust
