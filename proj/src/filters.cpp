#include "lrp3d/filters.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <vector>

namespace lrp3d {

namespace {

constexpr double kNormalizedSlack = 1e-6;

double parse_number(const std::string& s, const std::string& whole) {
  double value = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty())
    throw ConfigError("filter '" + whole + "': '" + s + "' is not a number");
  return value;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

FilterSpec FilterSpec::pass(double lo, double hi) {
  FilterSpec s{Kind::Pass, lo, hi};
  s.validate();
  return s;
}

FilterSpec FilterSpec::clamp(double hi) {
  FilterSpec s{Kind::Clamp, 0.0, hi};
  s.validate();
  return s;
}

void FilterSpec::validate() const {
  if (!(std::isfinite(lo) && std::isfinite(hi)))
    throw ConfigError("filter bounds must be finite");
  if (kind == Kind::Clamp) {
    if (lo != 0.0) throw ConfigError("clamp filter takes a single bound; range clamps are not supported");
    if (!(hi > 0.0 && hi <= 1.0)) throw ConfigError("clamp bound must lie in (0, 1], got " + format_number(hi));
    return;
  }
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
    throw ConfigError("pass band must satisfy 0 <= lo < hi <= 1, got [" + format_number(lo) + ", " +
                      format_number(hi) + "]");
}

std::string FilterSpec::to_string() const {
  if (kind == Kind::Clamp) return "clamp:" + format_number(hi);
  return "pass:" + format_number(lo) + ":" + format_number(hi);
}

FilterArg parse_filter_arg(const std::string& text) {
  FilterArg arg;
  std::string body = text;
  if (const auto at = text.find('@'); at != std::string::npos) {
    body = text.substr(0, at);
    const std::string suffix = text.substr(at + 1);
    const std::string key = "layer=";
    if (suffix.rfind(key, 0) != 0) throw ConfigError("filter '" + text + "': expected '@layer=<id|final>'");
    const std::string where = suffix.substr(key.size());
    if (where == "final") {
      arg.insertion = kFinalInsertion;
    } else {
      Index id = -1;
      auto [ptr, ec] = std::from_chars(where.data(), where.data() + where.size(), id);
      if (ec != std::errc() || ptr != where.data() + where.size() || id < 0)
        throw ConfigError("filter '" + text + "': bad layer id '" + where + "'");
      arg.insertion = id;
    }
  }
  const auto parts = split(body, ':');
  if (parts[0] == "pass" && parts.size() == 3) {
    arg.spec = FilterSpec::pass(parse_number(parts[1], text), parse_number(parts[2], text));
  } else if (parts[0] == "pass" && parts.size() == 2) {
    arg.spec = FilterSpec::pass(parse_number(parts[1], text));
  } else if (parts[0] == "clamp" && parts.size() == 2) {
    arg.spec = FilterSpec::clamp(parse_number(parts[1], text));
  } else {
    throw ConfigError("filter '" + text + "': expected pass:<lo>:<hi> or clamp:<hi>");
  }
  return arg;
}

double filter_value(const FilterSpec& spec, double v) {
  const double mag = std::abs(v);
  if (!(mag <= 1.0 + kNormalizedSlack))
    throw RangeError("filter input " + format_number(v) + " is not normalized to [-1, 1]");
  if (spec.kind == FilterSpec::Kind::Pass) return (mag >= spec.lo && mag <= spec.hi) ? v : 0.0;
  if (mag <= spec.hi) return v;
  return v > 0 ? spec.hi : -spec.hi;
}

template <typename Scalar>
Tensor<Scalar> filter_normalized(const Tensor<Scalar>& v, const FilterSpec& spec) {
  spec.validate();
  Tensor<Scalar> out(v.shape());
  for (Index i = 0; i < v.size(); ++i)
    out[i] = static_cast<Scalar>(filter_value(spec, static_cast<double>(v[i])));
  return out;
}

template <typename Scalar>
Tensor<Scalar> apply_filtered(const Tensor<Scalar>& raw, const FilterSpec& spec) {
  spec.validate();
  const double n = static_cast<double>(raw.max_abs());
  Tensor<Scalar> out(raw.shape());
  if (n == 0.0) return out;
  for (Index i = 0; i < raw.size(); ++i) {
    const double normalized = static_cast<double>(raw[i]) / n;
    const double filtered = filter_value(spec, normalized);
    // untouched values are copied so the pass-through path is exact
    out[i] = filtered == normalized ? raw[i] : static_cast<Scalar>(n * filtered);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> apply_filtered_per_channel(const Tensor<Scalar>& raw, const FilterSpec& spec) {
  if (raw.rank() < 2) return apply_filtered(raw, spec);
  Tensor<Scalar> out(raw.shape());
  for (Index c = 0; c < raw.channels(); ++c) out.set_channel(c, apply_filtered(raw.channel(c), spec));
  return out;
}

template Tensor<float> filter_normalized(const Tensor<float>&, const FilterSpec&);
template Tensor<double> filter_normalized(const Tensor<double>&, const FilterSpec&);
template Tensor<float> apply_filtered(const Tensor<float>&, const FilterSpec&);
template Tensor<double> apply_filtered(const Tensor<double>&, const FilterSpec&);
template Tensor<float> apply_filtered_per_channel(const Tensor<float>&, const FilterSpec&);
template Tensor<double> apply_filtered_per_channel(const Tensor<double>&, const FilterSpec&);

}  // namespace lrp3d
