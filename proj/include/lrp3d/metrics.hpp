#ifndef LRP3D_METRICS_HPP
#define LRP3D_METRICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "lrp3d/filters.hpp"
#include "lrp3d/lrp.hpp"
#include "lrp3d/trainer.hpp"

namespace lrp3d {

/// |v| > theta_rel * max|v|, plus the peak voxels themselves; an all-zero
/// volume gives an empty mask.
template <typename Scalar>
Mask binarize(const Tensor<Scalar>& vol, double theta_rel);

inline constexpr double kInclusivityEps = 1e-6;

/// Inclusivity of b in a: |a n b| / (|b| + eps).
double inclusivity(const Mask& a, const Mask& b, double eps = kInclusivityEps);

struct SignalStats {
  double mu = 0.0;           // spatial mean of the normalized, filtered signal
  double area = 0.0;         // spatial mean of its absolute value
  double omega_tilde = 0.0;  // fraction of voxels whose normalized magnitude exceeds the filter's upper bound
  double max_abs = 0.0;      // normalizer N
  bool valid = false;        // false for an all-zero channel
};

/// Statistics of one relevance channel under `spec`. With `position_weighted`
/// each voxel is weighted by its position w_i = i / (n - 1) in flattened order.
template <typename Scalar>
SignalStats signal_stats(const Tensor<Scalar>& channel, const FilterSpec& spec, bool position_weighted = false);

struct MetricsOptions {
  double theta_x = 0.5;    // input binarization
  double theta_lrp = 0.0;  // relevance binarization
  double pred_threshold = 0.5;
  bool position_weighted = false;
  SeedSpec seed;
  bool seed_from_ground_truth = false;  // overrides `seed` with each case's lesion mask
  double eps = kDefaultLrpEps;
};

struct ChannelInclusivity {
  double incl_x = 0.0;   // D(LRP, x)
  double incl_gt = 0.0;  // D(LRP, y_OT)
  bool valid = false;
};

struct InclusivityReport {
  std::string case_id;
  std::optional<FilterSpec> filter;  // empty: raw relevance
  double theta_x = 0.0;
  double theta_lrp = 0.0;
  std::vector<ChannelInclusivity> channels;

  /// Means over valid channels; 0 when none is valid.
  double mean_incl_x() const;
  double mean_incl_gt() const;
};

/// Per-channel inclusivity of the (optionally filtered) input relevance
/// `r0` (C,D,H,W) against the binarized input `x` and the lesion mask.
template <typename Scalar>
InclusivityReport inclusivity_report(const Tensor<Scalar>& r0, const Tensor<Scalar>& x, const Mask& gt,
                                     const std::optional<FilterSpec>& filter, const MetricsOptions& options,
                                     const std::string& case_id = {});

inline constexpr const char* kInclusivityCsvHeader = "case,channel,filter,theta_x,theta_lrp,incl_x,incl_gt,valid";
std::string inclusivity_csv(const std::vector<InclusivityReport>& reports);

/// Forward pass, prediction and unfiltered input relevance of one case.
struct CaseExplanation {
  Mask prediction;
  double dice = 0.0;
  TensorF relevance;  // R^(0), (C,D,H,W)
  bool seed_warning = false;
};

CaseExplanation explain_case(const Network<float>& net, const Case& c, const MetricsOptions& options,
                             const FilterPlan& plan = {});

struct SweepRow {
  std::string case_id;
  Index channel = 0;
  FilterSpec filter;
  SignalStats stats;
  double incl_x = 0.0;
  double incl_gt = 0.0;
  double dice = 0.0;
};

inline constexpr const char* kSweepCsvHeader =
    "case,channel,alpha_lo,alpha_hi,filter_kind,mu,area,omega_tilde,incl_x,incl_gt,dice,valid";

struct SweepTable {
  std::vector<SweepRow> rows;  // ordered by case, channel, then filter band

  Index valid_count() const;
  std::string to_csv() const;

  /// Population standard deviation of mu over valid rows using `filter`.
  double mu_spread(const FilterSpec& filter) const;
};

/// Pass(lo, a) for each a, and Clamp(a) for each a.
std::vector<FilterSpec> pass_family(double lo, const std::vector<double>& alphas);
std::vector<FilterSpec> clamp_family(const std::vector<double>& alphas);

/// One row per (case, channel, filter). Filters apply at the input-level
/// relevance, so each case needs a single relevance pass. Invalid
/// (all-zero) channels stay in the table with valid = 0.
SweepTable alpha_sweep(const Network<float>& net, const Dataset& data, std::vector<FilterSpec> filters,
                       const MetricsOptions& options = {});

}  // namespace lrp3d

#endif  // LRP3D_METRICS_HPP
