#ifndef LRP3D_CALCULUS_HPP
#define LRP3D_CALCULUS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lrp3d/filters.hpp"

namespace lrp3d::calc {

/// Real function on [0, 1].
using CalcFunction = std::function<double(double)>;

CalcFunction identity();
CalcFunction constant(double c);
CalcFunction power(double p);  // x^p
CalcFunction filter_fn(const FilterSpec& spec);

struct ChainLink {
  FilterSpec filter;
  CalcFunction fn;
};

/// f(x) = (F_1 f_1 F_2 f_2 ... F_n f_n)(x): the last link acts first.
struct FilterChain {
  std::vector<ChainLink> links;
};

double eval_chain(const FilterChain& chain, double x);
CalcFunction as_function(FilterChain chain);

/// Pass(0, alpha) applied `depth` times over `inner` (inner acts first).
FilterChain pass_probe(double alpha, int depth, CalcFunction inner = identity());

/// Trapezoidal integral over [0, 1] on an n_points grid. Grid intervals whose
/// endpoint values differ by more than `jump_tol` are split at the bisected
/// jump location, so step discontinuities do not cost O(h) accuracy.
double area(const CalcFunction& f, Index n_points, double jump_tol = 1e-3);
double area(const FilterChain& chain, Index n_points, double jump_tol = 1e-3);

struct ErrorPoint {
  double alpha = 0.0;
  double error = 0.0;  // sup over the grid
};

using ChainFamily = std::function<FilterChain(double alpha)>;

/// For each alpha, max |probe(alpha)(x) - truth(x)| over grid_n evenly spaced x in [0, 1].
std::vector<ErrorPoint> error_curve(const CalcFunction& truth, const ChainFamily& probe,
                                    const std::vector<double>& alphas, Index grid_n);

struct Alpha0Result {
  std::optional<double> alpha0;  // empty: no recovery
  std::vector<ErrorPoint> curve;
};

/// Smallest grid alpha whose sup error is <= tol.
Alpha0Result recover_alpha0(const CalcFunction& truth, const ChainFamily& probe, const std::vector<double>& alphas,
                            double tol, Index grid_n = 1001);

/// Monte Carlo estimate of P(A_alpha <= A_I^alpha) over random chains of
/// 1-3 links Pass(l, alpha) with l in {0, U(0, alpha/2)} over x^p, p ~ U(1, 3).
struct AreaBoundReport {
  double alpha = 0.0;
  double bound = 0.0;                 // A_I^alpha
  double target_probability = 0.0;    // p_alpha
  double empirical_probability = 0.0;
  Index samples = 0;
  std::uint64_t seed = 0;
  double max_area = 0.0;

  bool holds() const { return empirical_probability >= target_probability; }
};

AreaBoundReport area_bound_mc(double alpha, double bound, double target_probability, Index samples,
                              std::uint64_t seed, Index n_points = 2001);

}  // namespace lrp3d::calc

#endif  // LRP3D_CALCULUS_HPP
