#include "lrp3d/calculus.hpp"

#include <cmath>

#include "lrp3d/rng.hpp"

namespace lrp3d::calc {

namespace {

constexpr int kBisections = 80;

double grid_point(Index k, Index n) { return static_cast<double>(k) / static_cast<double>(n - 1); }

// Trapezoid over [a, b] with the jump inside it located by bisection.
double split_interval(const CalcFunction& f, double a, double fa, double b, double fb) {
  double lo = a, flo = fa, hi = b, fhi = fb;
  for (int i = 0; i < kBisections && hi - lo > 0.0; ++i) {
    const double mid = lo + (hi - lo) / 2;
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (std::abs(fm - flo) <= std::abs(fm - fhi)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
  }
  return (lo - a) * (fa + flo) / 2 + (hi - lo) * (flo + fhi) / 2 + (b - hi) * (fhi + fb) / 2;
}

}  // namespace

CalcFunction identity() {
  return [](double x) { return x; };
}

CalcFunction constant(double c) {
  return [c](double) { return c; };
}

CalcFunction power(double p) {
  return [p](double x) { return std::pow(x, p); };
}

CalcFunction filter_fn(const FilterSpec& spec) {
  spec.validate();
  return [spec](double x) { return filter_value(spec, x); };
}

double eval_chain(const FilterChain& chain, double x) {
  if (chain.links.empty()) throw ConfigError("filter chain is empty");
  double v = x;
  for (auto it = chain.links.rbegin(); it != chain.links.rend(); ++it) v = filter_value(it->filter, it->fn(v));
  return v;
}

CalcFunction as_function(FilterChain chain) {
  if (chain.links.empty()) throw ConfigError("filter chain is empty");
  for (const auto& l : chain.links) l.filter.validate();
  return [chain = std::move(chain)](double x) { return eval_chain(chain, x); };
}

FilterChain pass_probe(double alpha, int depth, CalcFunction inner) {
  if (depth < 1) throw ConfigError("probe depth must be at least 1");
  FilterChain chain;
  const FilterSpec p = FilterSpec::pass(0.0, alpha);
  for (int i = 1; i < depth; ++i) chain.links.push_back({p, identity()});
  chain.links.push_back({p, std::move(inner)});
  return chain;
}

double area(const CalcFunction& f, Index n_points, double jump_tol) {
  if (n_points < 2) throw ConfigError("area needs at least 2 grid points");
  double total = 0.0;
  double x0 = 0.0, f0 = f(0.0);
  for (Index k = 1; k < n_points; ++k) {
    const double x1 = grid_point(k, n_points);
    const double f1 = f(x1);
    total += std::abs(f1 - f0) > jump_tol ? split_interval(f, x0, f0, x1, f1) : (x1 - x0) * (f0 + f1) / 2;
    x0 = x1;
    f0 = f1;
  }
  return total;
}

double area(const FilterChain& chain, Index n_points, double jump_tol) {
  return area(as_function(chain), n_points, jump_tol);
}

std::vector<ErrorPoint> error_curve(const CalcFunction& truth, const ChainFamily& probe,
                                    const std::vector<double>& alphas, Index grid_n) {
  if (alphas.empty()) throw ConfigError("error curve needs at least one alpha");
  if (grid_n < 2) throw ConfigError("error curve needs at least 2 grid points");
  for (std::size_t i = 1; i < alphas.size(); ++i)
    if (alphas[i] < alphas[i - 1]) throw ConfigError("alphas must be sorted ascending");
  std::vector<double> target(static_cast<std::size_t>(grid_n));
  for (Index k = 0; k < grid_n; ++k) target[static_cast<std::size_t>(k)] = truth(grid_point(k, grid_n));

  std::vector<ErrorPoint> curve;
  for (double a : alphas) {
    const FilterChain chain = probe(a);
    double err = 0.0;
    for (Index k = 0; k < grid_n; ++k)
      err = std::max(err, std::abs(eval_chain(chain, grid_point(k, grid_n)) - target[static_cast<std::size_t>(k)]));
    curve.push_back({a, err});
  }
  return curve;
}

Alpha0Result recover_alpha0(const CalcFunction& truth, const ChainFamily& probe, const std::vector<double>& alphas,
                            double tol, Index grid_n) {
  if (!(tol > 0.0)) throw ConfigError("recovery tolerance must be positive");
  Alpha0Result res;
  res.curve = error_curve(truth, probe, alphas, grid_n);
  for (const auto& p : res.curve)
    if (p.error <= tol) {
      res.alpha0 = p.alpha;
      break;
    }
  return res;
}

AreaBoundReport area_bound_mc(double alpha, double bound, double target_probability, Index samples,
                              std::uint64_t seed, Index n_points) {
  if (samples < 1) throw ConfigError("Monte Carlo needs at least one sample");
  AreaBoundReport rep;
  rep.alpha = alpha;
  rep.bound = bound;
  rep.target_probability = target_probability;
  rep.samples = samples;
  rep.seed = seed;
  Rng rng(seed);
  Index within = 0;
  for (Index s = 0; s < samples; ++s) {
    FilterChain chain;
    const auto links = 1 + rng.below(3);
    for (std::uint64_t i = 0; i < links; ++i) {
      const double lo = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.0, alpha / 2);
      chain.links.push_back({FilterSpec::pass(lo, alpha), power(rng.uniform(1.0, 3.0))});
    }
    const double a = area(chain, n_points);
    rep.max_area = std::max(rep.max_area, a);
    within += a <= bound;
  }
  rep.empirical_probability = static_cast<double>(within) / static_cast<double>(samples);
  return rep;
}

}  // namespace lrp3d::calc
