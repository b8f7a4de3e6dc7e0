#include "lrp3d/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace lrp3d {

namespace {

using json = nlohmann::json;

void require_object(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_field(const json& section, const char* key, T& out, const std::string& where) {
  if (!section.contains(key)) return;
  try {
    out = section.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

const char* seed_mode_name(RunConfig::SeedMode m) {
  switch (m) {
    case RunConfig::SeedMode::FullOutput: return "full_output";
    case RunConfig::SeedMode::GroundTruth: return "ground_truth";
    default: return "predicted_positive";
  }
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config is not valid JSON: ") + e.what());
  }
  require_object(root, "run config", {"model", "train", "lrp", "filters", "metrics", "paths"});
  RunConfig cfg;

  if (root.contains("model")) {
    require_object(root["model"], "model", {"depth", "base_filters", "in_channels", "out_channels", "input_shape"});
    cfg.model = UNetConfig::from_json(root["model"].dump());
    cfg.model.validate();
  }

  if (root.contains("train")) {
    const json& t = root["train"];
    require_object(t, "train", {"epochs", "lr", "momentum", "seed"});
    read_field(t, "epochs", cfg.train.epochs, "train");
    read_field(t, "lr", cfg.train.lr, "train");
    read_field(t, "momentum", cfg.train.momentum, "train");
    read_field(t, "seed", cfg.train.seed, "train");
    if (cfg.train.epochs < 0) throw ConfigError("train.epochs must be non-negative");
    if (!(cfg.train.lr >= 0.0)) throw ConfigError("train.lr must be non-negative");
  }

  if (root.contains("lrp")) {
    const json& l = root["lrp"];
    require_object(l, "lrp", {"seed", "threshold", "eps_stab"});
    std::string mode = seed_mode_name(cfg.seed_mode);
    read_field(l, "seed", mode, "lrp");
    if (mode == "predicted_positive") cfg.seed_mode = SeedMode::PredictedPositive;
    else if (mode == "full_output") cfg.seed_mode = SeedMode::FullOutput;
    else if (mode == "ground_truth") cfg.seed_mode = SeedMode::GroundTruth;
    else throw ConfigError("lrp.seed must be predicted_positive, full_output or ground_truth, got '" + mode + "'");
    read_field(l, "threshold", cfg.seed_threshold, "lrp");
    read_field(l, "eps_stab", cfg.eps_stab, "lrp");
    if (!(cfg.eps_stab >= 0.0)) throw ConfigError("lrp.eps_stab must be non-negative");
  }

  if (root.contains("filters")) {
    const json& f = root["filters"];
    if (!f.is_array()) throw ConfigError("filters must be an array of filter strings");
    for (const auto& item : f) {
      if (!item.is_string()) throw ConfigError("filters must be an array of filter strings");
      cfg.filters.push_back(parse_filter_arg(item.get<std::string>()));
    }
  }

  if (root.contains("metrics")) {
    const json& m = root["metrics"];
    require_object(m, "metrics",
                   {"theta_input", "theta_lrp", "pred_threshold", "position_weighted", "sweep_kind", "alpha_lo", "alphas"});
    read_field(m, "theta_input", cfg.metrics.theta_x, "metrics");
    read_field(m, "theta_lrp", cfg.metrics.theta_lrp, "metrics");
    read_field(m, "pred_threshold", cfg.metrics.pred_threshold, "metrics");
    read_field(m, "position_weighted", cfg.metrics.position_weighted, "metrics");
    std::string kind = "pass";
    read_field(m, "sweep_kind", kind, "metrics");
    if (kind == "pass") cfg.sweep_kind = FilterSpec::Kind::Pass;
    else if (kind == "clamp") cfg.sweep_kind = FilterSpec::Kind::Clamp;
    else throw ConfigError("metrics.sweep_kind must be pass or clamp, got '" + kind + "'");
    read_field(m, "alpha_lo", cfg.alpha_lo, "metrics");
    read_field(m, "alphas", cfg.alphas, "metrics");
    for (double t : {cfg.metrics.theta_x, cfg.metrics.theta_lrp})
      if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("metrics thresholds must lie in [0, 1]");
    if (cfg.alphas.empty()) throw ConfigError("metrics.alphas must not be empty");
    for (const auto& spec : cfg.sweep_filters()) spec.validate();
  }

  if (root.contains("paths")) {
    const json& p = root["paths"];
    require_object(p, "paths", {"data", "weights", "out"});
    read_field(p, "data", cfg.data_dir, "paths");
    read_field(p, "weights", cfg.weights_path, "paths");
    read_field(p, "out", cfg.out_dir, "paths");
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return from_json(text.str());
}

std::string RunConfig::to_json() const {
  json j;
  j["model"] = json::parse(model.to_json());
  if (model.input_shape.empty()) j["model"].erase("input_shape");
  j["train"] = {{"epochs", train.epochs}, {"lr", train.lr}, {"momentum", train.momentum}, {"seed", train.seed}};
  j["lrp"] = {{"seed", seed_mode_name(seed_mode)}, {"threshold", seed_threshold}, {"eps_stab", eps_stab}};
  j["filters"] = json::array();
  for (const auto& f : filters)
    j["filters"].push_back(f.spec.to_string() +
                           (f.insertion == kFinalInsertion ? "" : "@layer=" + std::to_string(f.insertion)));
  j["metrics"] = {{"theta_input", metrics.theta_x},
                  {"theta_lrp", metrics.theta_lrp},
                  {"pred_threshold", metrics.pred_threshold},
                  {"position_weighted", metrics.position_weighted},
                  {"sweep_kind", sweep_kind == FilterSpec::Kind::Pass ? "pass" : "clamp"},
                  {"alpha_lo", alpha_lo},
                  {"alphas", alphas}};
  j["paths"] = {{"data", data_dir}, {"weights", weights_path}, {"out", out_dir}};
  return j.dump(2);
}

FilterPlan RunConfig::filter_plan() const {
  FilterPlan plan;
  for (const auto& f : filters)
    if (!plan.emplace(f.insertion, f.spec).second)
      throw ConfigError("two filters target the same insertion point " +
                        (f.insertion == kFinalInsertion ? std::string("final") : std::to_string(f.insertion)));
  return plan;
}

std::vector<FilterSpec> RunConfig::sweep_filters() const {
  return sweep_kind == FilterSpec::Kind::Pass ? pass_family(alpha_lo, alphas) : clamp_family(alphas);
}

MetricsOptions RunConfig::metrics_options() const {
  MetricsOptions m = metrics;
  m.eps = eps_stab;
  m.seed_from_ground_truth = seed_mode == SeedMode::GroundTruth;
  m.seed = seed_mode == SeedMode::FullOutput ? SeedSpec::full_output() : SeedSpec::predicted_positive(seed_threshold);
  return m;
}

}  // namespace lrp3d
