#ifndef LRP3D_FILTERS_HPP
#define LRP3D_FILTERS_HPP

#include <string>

#include "lrp3d/tensor.hpp"

namespace lrp3d {

/// Amplitude filter on signals normalized to [-1, 1].
///   Pass(lo, hi): keeps v where lo <= |v| <= hi, zero elsewhere.
///   Clamp(hi):    saturates v to [-hi, hi], keeping the sign.
struct FilterSpec {
  enum class Kind { Pass, Clamp };

  Kind kind = Kind::Pass;
  double lo = 0.0;
  double hi = 1.0;

  static FilterSpec pass(double lo, double hi);
  static FilterSpec pass(double hi) { return pass(0.0, hi); }
  static FilterSpec clamp(double hi);

  /// Throws ConfigError unless 0 <= lo < hi <= 1 (clamp: lo == 0).
  void validate() const;

  /// "pass:<lo>:<hi>" or "clamp:<hi>".
  std::string to_string() const;
  const char* kind_name() const { return kind == Kind::Pass ? "pass" : "clamp"; }

  bool operator==(const FilterSpec&) const = default;
};

/// Insertion point of a filter inside the relevance pass: a layer id, or the
/// final input-level relevance.
inline constexpr Index kFinalInsertion = -1;

struct FilterArg {
  FilterSpec spec;
  Index insertion = kFinalInsertion;
};

/// Parses "pass:0.0:0.4", "clamp:0.2", optionally suffixed "@layer=<id|final>".
FilterArg parse_filter_arg(const std::string& text);

/// Filters a single normalized value. Throws RangeError if |v| > 1 + 1e-6.
double filter_value(const FilterSpec& spec, double v);

inline double pass(double v, double lo, double hi) { return filter_value(FilterSpec::pass(lo, hi), v); }
inline double clamp(double v, double hi) { return filter_value(FilterSpec::clamp(hi), v); }

/// Elementwise filter of an already-normalized tensor.
template <typename Scalar>
Tensor<Scalar> filter_normalized(const Tensor<Scalar>& v, const FilterSpec& spec);

/// N * F[raw / N] with N = max|raw|; all-zero input stays zero.
template <typename Scalar>
Tensor<Scalar> apply_filtered(const Tensor<Scalar>& raw, const FilterSpec& spec);

/// apply_filtered on each leading-axis channel independently.
template <typename Scalar>
Tensor<Scalar> apply_filtered_per_channel(const Tensor<Scalar>& raw, const FilterSpec& spec);

}  // namespace lrp3d

#endif  // LRP3D_FILTERS_HPP
