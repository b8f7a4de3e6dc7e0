#include "lrp3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

namespace lrp3d {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(9);
  s << v;
  return s.str();
}

}  // namespace

template <typename Scalar>
Mask binarize(const Tensor<Scalar>& vol, double theta_rel) {
  if (!(theta_rel >= 0.0 && theta_rel <= 1.0))
    throw RangeError("binarization threshold " + fmt(theta_rel) + " outside [0, 1]");
  Mask m(vol.shape());
  const double peak = static_cast<double>(vol.max_abs());
  if (peak == 0.0) return m;
  const double cut = theta_rel * peak;
  // peak voxels always count, so theta_rel = 1 keeps the maxima
  for (Index i = 0; i < vol.size(); ++i) {
    const double a = std::abs(static_cast<double>(vol[i]));
    m.data[static_cast<std::size_t>(i)] = a > cut || a == peak;
  }
  return m;
}

double inclusivity(const Mask& a, const Mask& b, double eps) {
  if (a.shape != b.shape)
    throw DimensionError("inclusivity: mask shapes " + shape_string(a.shape) + " and " + shape_string(b.shape) + " differ");
  Index inter = 0, nb = 0;
  for (std::size_t i = 0; i < b.data.size(); ++i) {
    nb += b.data[i] != 0;
    inter += a.data[i] && b.data[i];
  }
  return static_cast<double>(inter) / (static_cast<double>(nb) + eps);
}

template <typename Scalar>
SignalStats signal_stats(const Tensor<Scalar>& channel, const FilterSpec& spec, bool position_weighted) {
  spec.validate();
  SignalStats st;
  st.max_abs = static_cast<double>(channel.max_abs());
  if (st.max_abs == 0.0 || channel.size() == 0) return st;
  st.valid = true;
  const Index n = channel.size();
  double mu = 0.0, area = 0.0;
  Index above = 0;
  for (Index i = 0; i < n; ++i) {
    const double v = static_cast<double>(channel[i]) / st.max_abs;
    const double f = filter_value(spec, v);
    const double w = !position_weighted ? 1.0 : n == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    mu += w * f;
    area += std::abs(f);
    above += std::abs(v) > spec.hi;
  }
  st.mu = mu / static_cast<double>(n);
  st.area = area / static_cast<double>(n);
  st.omega_tilde = static_cast<double>(above) / static_cast<double>(n);
  return st;
}

double InclusivityReport::mean_incl_x() const {
  double sum = 0.0;
  Index n = 0;
  for (const auto& c : channels)
    if (c.valid) sum += c.incl_x, ++n;
  return n ? sum / static_cast<double>(n) : 0.0;
}

double InclusivityReport::mean_incl_gt() const {
  double sum = 0.0;
  Index n = 0;
  for (const auto& c : channels)
    if (c.valid) sum += c.incl_gt, ++n;
  return n ? sum / static_cast<double>(n) : 0.0;
}

template <typename Scalar>
InclusivityReport inclusivity_report(const Tensor<Scalar>& r0, const Tensor<Scalar>& x, const Mask& gt,
                                     const std::optional<FilterSpec>& filter, const MetricsOptions& options,
                                     const std::string& case_id) {
  if (r0.shape() != x.shape() || r0.rank() != 4)
    throw DimensionError("inclusivity report: relevance " + shape_string(r0.shape()) + " vs input " +
                         shape_string(x.shape()));
  if (gt.shape != spatial_of(x.shape()))
    throw DimensionError("inclusivity report: mask " + shape_string(gt.shape) + " vs input " + shape_string(x.shape()));
  InclusivityReport rep;
  rep.case_id = case_id;
  rep.filter = filter;
  rep.theta_x = options.theta_x;
  rep.theta_lrp = options.theta_lrp;
  for (Index c = 0; c < r0.channels(); ++c) {
    Tensor<Scalar> rc = r0.channel(c);
    ChannelInclusivity ci;
    ci.valid = rc.max_abs() != Scalar(0);
    if (filter) rc = apply_filtered(rc, *filter);
    const Mask lrp_mask = binarize(rc, options.theta_lrp);
    ci.incl_x = inclusivity(lrp_mask, binarize(x.channel(c), options.theta_x));
    ci.incl_gt = inclusivity(lrp_mask, gt);
    rep.channels.push_back(ci);
  }
  return rep;
}

std::string inclusivity_csv(const std::vector<InclusivityReport>& reports) {
  std::string out = std::string(kInclusivityCsvHeader) + "\n";
  for (const auto& r : reports)
    for (std::size_t c = 0; c < r.channels.size(); ++c)
      out += r.case_id + "," + std::to_string(c) + "," + (r.filter ? r.filter->to_string() : "raw") + "," +
             fmt(r.theta_x) + "," + fmt(r.theta_lrp) + "," + fmt(r.channels[c].incl_x) + "," +
             fmt(r.channels[c].incl_gt) + "," + (r.channels[c].valid ? "1" : "0") + "\n";
  return out;
}

CaseExplanation explain_case(const Network<float>& net, const Case& c, const MetricsOptions& options,
                             const FilterPlan& plan) {
  auto fwd = forward(net, c.x);
  CaseExplanation ex;
  ex.prediction = threshold_logits(fwd.output, options.pred_threshold);
  ex.dice = dice(ex.prediction, c.mask);
  LrpOptions lrp_opts;
  lrp_opts.eps = options.eps;
  lrp_opts.keep_layers = false;
  const SeedSpec seed = options.seed_from_ground_truth ? SeedSpec::masked_by(c.mask) : options.seed;
  auto map = run_lrp(net, fwd.cache, seed, plan, lrp_opts);
  ex.relevance = std::move(map.input);
  ex.seed_warning = map.seed_warning;
  return ex;
}

Index SweepTable::valid_count() const {
  return std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.stats.valid; });
}

std::string SweepTable::to_csv() const {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const auto& r : rows)
    out += r.case_id + "," + std::to_string(r.channel) + "," + fmt(r.filter.lo) + "," + fmt(r.filter.hi) + "," +
           r.filter.kind_name() + "," + fmt(r.stats.mu) + "," + fmt(r.stats.area) + "," + fmt(r.stats.omega_tilde) +
           "," + fmt(r.incl_x) + "," + fmt(r.incl_gt) + "," + fmt(r.dice) + "," + (r.stats.valid ? "1" : "0") + "\n";
  return out;
}

double SweepTable::mu_spread(const FilterSpec& filter) const {
  std::vector<double> mus;
  for (const auto& r : rows)
    if (r.stats.valid && r.filter == filter) mus.push_back(r.stats.mu);
  if (mus.empty()) return 0.0;
  double mean = 0.0;
  for (double m : mus) mean += m;
  mean /= static_cast<double>(mus.size());
  double var = 0.0;
  for (double m : mus) var += (m - mean) * (m - mean);
  return std::sqrt(var / static_cast<double>(mus.size()));
}

std::vector<FilterSpec> pass_family(double lo, const std::vector<double>& alphas) {
  std::vector<FilterSpec> out;
  for (double a : alphas) out.push_back(FilterSpec::pass(lo, a));
  return out;
}

std::vector<FilterSpec> clamp_family(const std::vector<double>& alphas) {
  std::vector<FilterSpec> out;
  for (double a : alphas) out.push_back(FilterSpec::clamp(a));
  return out;
}

SweepTable alpha_sweep(const Network<float>& net, const Dataset& data, std::vector<FilterSpec> filters,
                       const MetricsOptions& options) {
  if (data.empty()) throw ConfigError("sweep dataset is empty");
  if (filters.empty()) throw ConfigError("sweep needs at least one filter");
  for (const auto& f : filters) f.validate();
  std::stable_sort(filters.begin(), filters.end(), [](const FilterSpec& a, const FilterSpec& b) {
    return std::tuple(a.lo, a.hi, static_cast<int>(a.kind)) < std::tuple(b.lo, b.hi, static_cast<int>(b.kind));
  });

  SweepTable table;
  for (const auto& c : data) {
    const CaseExplanation ex = explain_case(net, c, options);
    for (Index ch = 0; ch < ex.relevance.channels(); ++ch) {
      const TensorF rc = ex.relevance.channel(ch);
      const Mask x_mask = binarize(c.x.channel(ch), options.theta_x);
      for (const auto& f : filters) {
        SweepRow row;
        row.case_id = c.id;
        row.channel = ch;
        row.filter = f;
        row.dice = ex.dice;
        row.stats = signal_stats(rc, f, options.position_weighted);
        const Mask lrp_mask = binarize(apply_filtered(rc, f), options.theta_lrp);
        row.incl_x = inclusivity(lrp_mask, x_mask);
        row.incl_gt = inclusivity(lrp_mask, c.mask);
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

#define LRP3D_INSTANTIATE_METRICS(S)                                                                         \
  template Mask binarize(const Tensor<S>&, double);                                                         \
  template SignalStats signal_stats(const Tensor<S>&, const FilterSpec&, bool);                             \
  template InclusivityReport inclusivity_report(const Tensor<S>&, const Tensor<S>&, const Mask&,            \
                                                const std::optional<FilterSpec>&, const MetricsOptions&,    \
                                                const std::string&);

LRP3D_INSTANTIATE_METRICS(float)
LRP3D_INSTANTIATE_METRICS(double)

#undef LRP3D_INSTANTIATE_METRICS

}  // namespace lrp3d
