#ifndef LRP3D_RUN_CONFIG_HPP
#define LRP3D_RUN_CONFIG_HPP

#include <string>
#include <vector>

#include "lrp3d/filters.hpp"
#include "lrp3d/metrics.hpp"
#include "lrp3d/trainer.hpp"
#include "lrp3d/unet.hpp"

namespace lrp3d {

/// Single JSON document driving a CLI run. Every section is optional; unknown
/// keys anywhere are rejected with a ConfigError.
///
///   { "model":   { "depth", "base_filters", "in_channels", "out_channels" },
///     "train":   { "epochs", "lr", "momentum", "seed" },
///     "lrp":     { "seed": "predicted_positive" | "full_output" | "ground_truth", "threshold", "eps_stab" },
///     "filters": [ "pass:0.0:0.4", "clamp:0.2@layer=final", ... ],
///     "metrics": { "theta_input", "theta_lrp", "pred_threshold", "position_weighted",
///                  "sweep_kind": "pass" | "clamp", "alpha_lo", "alphas": [ ... ] },
///     "paths":   { "data", "weights", "out" } }
struct RunConfig {
  UNetConfig model;
  TrainOptions train;

  enum class SeedMode { PredictedPositive, FullOutput, GroundTruth };
  SeedMode seed_mode = SeedMode::PredictedPositive;
  double seed_threshold = 0.5;
  double eps_stab = kDefaultLrpEps;

  std::vector<FilterArg> filters;

  MetricsOptions metrics;
  FilterSpec::Kind sweep_kind = FilterSpec::Kind::Pass;
  double alpha_lo = 0.0;
  std::vector<double> alphas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  std::string data_dir;
  std::string weights_path;
  std::string out_dir;

  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::string& path);
  std::string to_json() const;

  FilterPlan filter_plan() const;
  std::vector<FilterSpec> sweep_filters() const;

  /// Metric options with the LRP seed and stabilizer applied.
  MetricsOptions metrics_options() const;
};

}  // namespace lrp3d

#endif  // LRP3D_RUN_CONFIG_HPP
