#include "lrp3d/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "lrp3d/calculus.hpp"
#include "lrp3d/metrics.hpp"
#include "lrp3d/run_config.hpp"
#include "lrp3d/synthetic.hpp"
#include "lrp3d/unet.hpp"
#include "lrp3d/volume_io.hpp"

namespace lrp3d {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(9);
  s << v;
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw FormatError("cannot write " + path.string(), 0);
}

std::string channel_tag(Index c, Index channels) {
  std::string tag = "c" + std::to_string(c);
  if (channels == static_cast<Index>(kModalityNames.size())) tag += std::string("_") + kModalityNames[static_cast<std::size_t>(c)];
  return tag;
}

std::string require_path(const std::string& value, const char* what) {
  if (value.empty()) throw CLI::RequiredError(std::string("--") + what);
  return value;
}

// Option values shared across subcommands; flags override the config file.
struct Args {
  std::string config;
  std::string data, weights, out, log;
  std::uint64_t seed = 0;
  Index cases = 12;
  std::vector<Index> shape = kDefaultCaseShape;
  int epochs = 80;
  double lr = 0.01, momentum = 0.9;
  Index depth = 2, base_filters = 4;
  std::vector<std::string> filters;
  std::vector<std::string> case_ids;
  Index slice = -1;
  std::string seed_mode;
  double eps = kDefaultLrpEps;
  double threshold = 0.5;
  double theta_input = 0.5, theta_lrp = 0.0;
  std::string kind = "pass";
  double alpha_lo = 0.0;
  std::vector<double> alphas;
  bool position_weighted = false;
  std::string truth;
  int probe_depth = 2;
  Index points = 100001, grid = 1001;
  double tol = 1e-12;
};

struct Given {
  CLI::App* app;
  bool operator()(const std::string& name) const {
    const CLI::Option* o = app->get_option_no_throw(name);
    return o && o->count() > 0;
  }
};

RunConfig resolve_config(const Args& a, const Given& given) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  if (given("--data")) cfg.data_dir = a.data;
  if (given("--weights")) cfg.weights_path = a.weights;
  if (given("--out")) cfg.out_dir = a.out;
  if (given("--seed")) cfg.train.seed = a.seed;
  if (given("--epochs")) cfg.train.epochs = a.epochs;
  if (given("--lr")) cfg.train.lr = a.lr;
  if (given("--momentum")) cfg.train.momentum = a.momentum;
  if (given("--depth")) cfg.model.depth = a.depth;
  if (given("--base-filters")) cfg.model.base_filters = a.base_filters;
  if (given("--eps")) cfg.eps_stab = a.eps;
  if (given("--theta-input")) cfg.metrics.theta_x = a.theta_input;
  if (given("--theta-lrp")) cfg.metrics.theta_lrp = a.theta_lrp;
  if (given("--threshold")) cfg.metrics.pred_threshold = a.threshold;
  if (given("--position-weighted")) cfg.metrics.position_weighted = a.position_weighted;
  if (given("--alpha-lo")) cfg.alpha_lo = a.alpha_lo;
  if (given("--alphas")) cfg.alphas = a.alphas;
  if (given("--kind")) cfg.sweep_kind = a.kind == "clamp" ? FilterSpec::Kind::Clamp : FilterSpec::Kind::Pass;
  if (given("--seed-mode")) {
    if (a.seed_mode == "predicted_positive") cfg.seed_mode = RunConfig::SeedMode::PredictedPositive;
    else if (a.seed_mode == "full_output") cfg.seed_mode = RunConfig::SeedMode::FullOutput;
    else cfg.seed_mode = RunConfig::SeedMode::GroundTruth;
  }
  if (given("--filter")) {
    cfg.filters.clear();
    for (const auto& f : a.filters) cfg.filters.push_back(parse_filter_arg(f));
  }
  for (double t : {cfg.metrics.theta_x, cfg.metrics.theta_lrp})
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("binarization thresholds must lie in [0, 1]");
  return cfg;
}

Dataset select_cases(Dataset data, const std::vector<std::string>& ids) {
  if (ids.empty()) return data;
  Dataset picked;
  for (const auto& id : ids) {
    auto it = std::find_if(data.begin(), data.end(), [&](const Case& c) { return c.id == id; });
    if (it == data.end()) throw ConfigError("case '" + id + "' is not in the dataset");
    picked.push_back(*it);
  }
  return picked;
}

LoadedModel load_model(const RunConfig& cfg) { return load_weights(require_path(cfg.weights_path, "weights")); }

int cmd_gen_data(const RunConfig& cfg, const Args& a, std::ostream& out) {
  const std::string dir = require_path(a.out.empty() ? cfg.data_dir : a.out, "out");
  const Dataset data = gen_synthetic(cfg.train.seed, a.cases, a.shape);
  save_dataset(data, dir);
  out << "wrote " << data.size() << " cases of shape " << shape_string(a.shape) << " to " << dir << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const Args& a, std::ostream& out) {
  const Dataset data = load_dataset(require_path(cfg.data_dir, "data"));
  const std::string weights = require_path(a.out.empty() ? cfg.weights_path : a.out, "out");
  UNetConfig model = cfg.model;
  model.in_channels = data.front().x.channels();
  model.input_shape = data.front().x.shape();
  model.validate();
  Network<float> net = build_unet<float>(model);
  init_kaiming(net, cfg.train.seed);
  auto res = train(std::move(net), data, cfg.train, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " loss " << fmt(r.loss) << " mean_dice " << fmt(r.mean_dice) << "\n";
  });
  if (fs::path(weights).has_parent_path()) fs::create_directories(fs::path(weights).parent_path());
  save_weights(res.net, model, weights);
  const fs::path log = a.log.empty() ? fs::path(weights).replace_extension(".csv") : fs::path(a.log);
  write_text(log, res.log.to_csv());
  out << "weights " << weights << "\nlog " << log.string() << "\n";
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, const Args& a, std::ostream& out) {
  const LoadedModel model = load_model(cfg);
  const Dataset data = select_cases(load_dataset(require_path(cfg.data_dir, "data")), a.case_ids);
  const fs::path dir = require_path(cfg.out_dir, "out");
  fs::create_directories(dir);
  std::string csv = "case,dice,predicted_voxels,lesion_voxels\n";
  double sum = 0.0;
  for (const auto& c : data) {
    const Mask pred = predict(model.net, c.x, cfg.metrics.pred_threshold);
    const double d = dice(pred, c.mask);
    sum += d;
    write_volume(pred, (dir / (c.id + "_pred.vol")).string());
    csv += c.id + "," + fmt(d) + "," + std::to_string(pred.count()) + "," + std::to_string(c.mask.count()) + "\n";
  }
  write_text(dir / "predict.csv", csv);
  out << "mean dice " << fmt(sum / static_cast<double>(data.size())) << " over " << data.size() << " cases\n";
  return kExitOk;
}

int cmd_explain(const RunConfig& cfg, const Args& a, std::ostream& out) {
  const LoadedModel model = load_model(cfg);
  const Dataset data = select_cases(load_dataset(require_path(cfg.data_dir, "data")), a.case_ids);
  const fs::path dir = require_path(cfg.out_dir, "out");
  fs::create_directories(dir);
  const FilterPlan plan = cfg.filter_plan();
  const MetricsOptions mo = cfg.metrics_options();
  LrpOptions lrp_opts;
  lrp_opts.eps = mo.eps;
  lrp_opts.keep_layers = false;

  std::string csv = "case,dice,seed_warning,relevance_out,relevance_in,absorbed_units,absorbed_mass\n";
  for (const auto& c : data) {
    auto fwd = forward(model.net, c.x);
    const double d = dice(threshold_logits(fwd.output, mo.pred_threshold), c.mask);
    const SeedSpec seed = mo.seed_from_ground_truth ? SeedSpec::masked_by(c.mask) : mo.seed;
    const auto map = run_lrp(model.net, fwd.cache, seed, plan, lrp_opts);
    const Index depth = a.slice >= 0 ? a.slice : c.x.dim(1) / 2;
    for (Index ch = 0; ch < map.input.channels(); ++ch) {
      const std::string tag = c.id + "_" + channel_tag(ch, map.input.channels());
      const TensorF rc = map.input.channel(ch);
      const TensorF xc = c.x.channel(ch);
      write_volume(rc, (dir / (tag + "_R0.vol")).string());
      export_slice(rc, depth, (dir / (tag + "_R0.ppm")).string(), SliceMode::Signed);
      export_slice(xc, depth, (dir / (tag + "_x.pgm")).string(), SliceMode::Unsigned);
      export_overlay(rc, xc, depth, (dir / (tag + "_overlay.ppm")).string());
    }
    csv += c.id + "," + fmt(d) + "," + (map.seed_warning ? "1" : "0") + "," + fmt(map.output.sum_double()) + "," +
           fmt(map.input.sum_double()) + "," + std::to_string(map.absorbed.units) + "," + fmt(map.absorbed.mass) + "\n";
    if (map.seed_warning) out << "warning: " << c.id << " has no predicted-positive voxel; relevance is zero\n";
  }
  write_text(dir / "explain.csv", csv);
  out << "explained " << data.size() << " cases";
  for (const auto& f : cfg.filters) out << " " << f.spec.to_string();
  out << " -> " << dir.string() << "\n";
  return kExitOk;
}

int cmd_metrics(const RunConfig& cfg, const Args& a, std::ostream& out) {
  const LoadedModel model = load_model(cfg);
  const Dataset data = select_cases(load_dataset(require_path(cfg.data_dir, "data")), a.case_ids);
  const std::string path = require_path(cfg.out_dir, "out");
  const MetricsOptions mo = cfg.metrics_options();
  std::vector<std::optional<FilterSpec>> filters = {std::nullopt};
  for (const auto& f : cfg.filters) {
    if (f.insertion != kFinalInsertion) throw ConfigError("metrics filters apply to the input-level relevance only");
    filters.push_back(f.spec);
  }
  std::vector<InclusivityReport> reports;
  std::vector<double> mean_gt(filters.size(), 0.0), mean_x(filters.size(), 0.0);
  for (const auto& c : data) {
    const CaseExplanation ex = explain_case(model.net, c, mo);
    for (std::size_t i = 0; i < filters.size(); ++i) {
      reports.push_back(inclusivity_report(ex.relevance, c.x, c.mask, filters[i], mo, c.id));
      mean_x[i] += reports.back().mean_incl_x() / static_cast<double>(data.size());
      mean_gt[i] += reports.back().mean_incl_gt() / static_cast<double>(data.size());
    }
  }
  write_text(path, inclusivity_csv(reports));
  for (std::size_t i = 0; i < filters.size(); ++i)
    out << (filters[i] ? filters[i]->to_string() : "raw") << ": mean D(LRP,x) " << fmt(mean_x[i])
        << " mean D(LRP,gt) " << fmt(mean_gt[i]) << "\n";
  return kExitOk;
}

int cmd_sweep(const RunConfig& cfg, const Args&, std::ostream& out) {
  const LoadedModel model = load_model(cfg);
  const Dataset data = load_dataset(require_path(cfg.data_dir, "data"));
  const std::string path = require_path(cfg.out_dir, "out");
  const SweepTable table = alpha_sweep(model.net, data, cfg.sweep_filters(), cfg.metrics_options());
  write_text(path, table.to_csv());
  out << table.rows.size() << " rows, " << table.valid_count() << " valid -> " << path << "\n";
  return kExitOk;
}

int cmd_calculus(const RunConfig& cfg, const Args& a, std::ostream& out) {
  calc::CalcFunction truth = calc::identity();
  if (!a.truth.empty()) {
    const FilterArg t = parse_filter_arg(a.truth);
    truth = calc::as_function(calc::FilterChain{{{t.spec, calc::identity()}}});
  }
  std::vector<double> alphas = a.alphas.empty() ? cfg.alphas : a.alphas;
  const auto probe = [&](double alpha) { return calc::pass_probe(alpha, a.probe_depth, truth); };
  const auto rec = calc::recover_alpha0(truth, probe, alphas, a.tol, a.grid);
  std::string csv = "alpha,area,error\n";
  for (const auto& p : rec.curve) csv += fmt(p.alpha) + "," + fmt(calc::area(probe(p.alpha), a.points)) + "," + fmt(p.error) + "\n";
  if (a.out.empty()) {
    out << csv;
    return kExitOk;
  }
  write_text(a.out, csv);
  out << "alpha0 " << (rec.alpha0 ? fmt(*rec.alpha0) : std::string("NO_RECOVERY")) << " (tol " << fmt(a.tol) << ")\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Volumetric U-Net relevance propagation lab", "lrp3d"};
  app.require_subcommand(1);
  Args a;

  auto add_config = [&](CLI::App* s) { s->add_option("--config", a.config, "JSON run config")->check(CLI::ExistingFile); };
  auto add_io = [&](CLI::App* s, bool weights) {
    s->add_option("--data", a.data, "dataset directory");
    if (weights) s->add_option("--weights", a.weights, "NNW1 weights file");
  };
  auto add_lrp = [&](CLI::App* s) {
    s->add_option("--seed-mode", a.seed_mode, "predicted_positive | full_output | ground_truth")
        ->check(CLI::IsMember({"predicted_positive", "full_output", "ground_truth"}));
    s->add_option("--eps", a.eps, "z+ stabilizer");
    s->add_option("--threshold", a.threshold, "prediction threshold on sigmoid output");
  };
  auto add_theta = [&](CLI::App* s) {
    s->add_option("--theta-input", a.theta_input, "input binarization, fraction of max");
    s->add_option("--theta-lrp", a.theta_lrp, "relevance binarization, fraction of max");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic multi-modal dataset");
  add_config(gen);
  gen->add_option("--seed", a.seed, "generator seed");
  gen->add_option("--cases", a.cases, "number of cases")->check(CLI::PositiveNumber);
  gen->add_option("--shape", a.shape, "C,D,H,W")->delimiter(',')->expected(4);
  gen->add_option("--out", a.out, "output directory");

  CLI::App* tr = app.add_subcommand("train", "train a U-Net on a dataset");
  add_config(tr);
  add_io(tr, false);
  tr->add_option("--out", a.out, "weights output path");
  tr->add_option("--log", a.log, "training log CSV (default: weights path with .csv)");
  tr->add_option("--epochs", a.epochs)->check(CLI::NonNegativeNumber);
  tr->add_option("--lr", a.lr);
  tr->add_option("--momentum", a.momentum);
  tr->add_option("--seed", a.seed, "initialization and shuffling seed");
  tr->add_option("--depth", a.depth)->check(CLI::PositiveNumber);
  tr->add_option("--base-filters", a.base_filters)->check(CLI::PositiveNumber);

  CLI::App* pr = app.add_subcommand("predict", "threshold network predictions");
  add_config(pr);
  add_io(pr, true);
  pr->add_option("--out", a.out, "output directory");
  pr->add_option("--case", a.case_ids, "restrict to case ids");
  pr->add_option("--threshold", a.threshold, "prediction threshold on sigmoid output");

  CLI::App* ex = app.add_subcommand("explain", "relevance maps with optional filters");
  add_config(ex);
  add_io(ex, true);
  add_lrp(ex);
  ex->add_option("--out", a.out, "output directory");
  ex->add_option("--filter", a.filters, "pass:lo:hi | pass:hi | clamp:hi, optional @layer=<id|final>");
  ex->add_option("--case", a.case_ids, "restrict to case ids");
  ex->add_option("--slice", a.slice, "depth index of exported slices (default: middle)");

  CLI::App* me = app.add_subcommand("metrics", "inclusivity report, raw and filtered");
  add_config(me);
  add_io(me, true);
  add_lrp(me);
  add_theta(me);
  me->add_option("--out", a.out, "report CSV path");
  me->add_option("--filter", a.filters, "filters to compare against raw relevance");
  me->add_option("--case", a.case_ids, "restrict to case ids");

  CLI::App* sw = app.add_subcommand("sweep", "alpha sweep of signal statistics");
  add_config(sw);
  add_io(sw, true);
  add_lrp(sw);
  add_theta(sw);
  sw->add_option("--out", a.out, "sweep CSV path");
  sw->add_option("--kind", a.kind, "pass | clamp")->check(CLI::IsMember({"pass", "clamp"}));
  sw->add_option("--alpha-lo", a.alpha_lo, "lower band edge for pass filters");
  sw->add_option("--alphas", a.alphas, "upper band edges")->delimiter(',');
  sw->add_flag("--position-weighted", a.position_weighted, "weight mu by voxel position");

  CLI::App* ca = app.add_subcommand("calculus", "filter-calculus area and recovery curve");
  add_config(ca);
  ca->add_option("--alphas", a.alphas, "ascending alpha grid")->delimiter(',');
  ca->add_option("--true", a.truth, "filter applied to identity as the true function (default identity)");
  ca->add_option("--depth", a.probe_depth, "number of Pass(0,alpha) probe links")->check(CLI::PositiveNumber);
  ca->add_option("--points", a.points, "trapezoid grid size")->check(CLI::Range(Index{2}, Index{100000000}));
  ca->add_option("--grid", a.grid, "error grid size")->check(CLI::Range(Index{2}, Index{100000000}));
  ca->add_option("--tol", a.tol, "recovery tolerance")->check(CLI::PositiveNumber);
  ca->add_option("--out", a.out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunConfig cfg;
  try {
    for (const auto& f : a.filters) parse_filter_arg(f);
    if (!a.truth.empty()) parse_filter_arg(a.truth);
    if (sub == ca)
      for (std::size_t i = 1; i < a.alphas.size(); ++i)
        if (a.alphas[i] < a.alphas[i - 1]) throw ConfigError("--alphas must be ascending");
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n\n" << sub->help();
    return kExitUsage;
  }

  try {
    cfg = resolve_config(a, Given{sub});
    if (sub == gen) return cmd_gen_data(cfg, a, out);
    if (sub == tr) return cmd_train(cfg, a, out);
    if (sub == pr) return cmd_predict(cfg, a, out);
    if (sub == ex) return cmd_explain(cfg, a, out);
    if (sub == me) return cmd_metrics(cfg, a, out);
    if (sub == sw) return cmd_sweep(cfg, a, out);
    return cmd_calculus(cfg, a, out);
  } catch (const CLI::RequiredError& e) {
    err << "error: " << e.what() << " is required (flag or config paths)\n\n" << sub->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitData;
}

}  // namespace lrp3d
