// SPDX-License-Identifier: Apache-2.0

#include "som/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "som/ndarray.hpp"

namespace som {

namespace fs = std::filesystem;

std::filesystem::path predictions_path_for(const fs::path& report) {
  fs::path p = report;
  p.replace_extension();
  return fs::path(p.string() + ".predictions.csv");
}

std::string format_predictions_csv(const std::vector<Prediction>& preds) {
  std::ostringstream os;
  const std::size_t n = preds.empty() ? 0 : preds.front().paths.power.size();
  os << "index,p_nlos,p_los,label";
  for (std::size_t i = 0; i < n; ++i) os << ",power_" << i;
  for (std::size_t i = 0; i < n; ++i) os << ",delay_ns_" << i;
  os << "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const Prediction& p : preds) {
    os << p.index << "," << num(p.outputs.los_prob[0]) << "," << num(p.outputs.los_prob[1]) << "," << p.label;
    for (double v : p.paths.power) os << "," << num(v);
    for (double v : p.paths.delay_s) os << "," << num(v * 1e9);
    os << "\n";
  }
  return os.str();
}

std::vector<std::pair<std::size_t, PathPrediction>> parse_predictions_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || !line.starts_with("index,")) throw IoError("predictions: missing header");
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 4 || (cols - 4) % 2 != 0) throw IoError("predictions: malformed header");
  const std::size_t n = (cols - 4) / 2;
  std::vector<std::pair<std::size_t, PathPrediction>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != cols) throw IoError("predictions: wrong column count");
    try {
      PathPrediction p;
      for (std::size_t i = 0; i < n; ++i) p.power.push_back(std::stod(f[4 + i]));
      for (std::size_t i = 0; i < n; ++i) p.delay_s.push_back(std::stod(f[4 + n + i]) * 1e-9);
      out.emplace_back(static_cast<std::size_t>(std::stoull(f[0])), std::move(p));
    } catch (const std::logic_error&) {
      throw IoError("predictions: bad number in line: " + line);
    }
  }
  return out;
}

MultipathSet predicted_set(const PathPrediction& p, const MultipathSet& truth) {
  MultipathSet m = truth;
  for (std::size_t i = 0; i < m.paths.size(); ++i) {
    if (!m.paths[i].valid) continue;
    m.paths[i].power_ratio = std::max(0.0, p.power.at(i));
    m.paths[i].delay_s = std::max(0.0, p.delay_s.at(i));
  }
  return m;
}

EvaluateOutput evaluate(const fs::path& checkpoint, const fs::path& dataset_dir, const std::string& split,
                        const std::optional<fs::path>& report, int threads) {
  Model model = load_checkpoint(checkpoint);
  const Dataset ds = load_dataset(dataset_dir);
  check_compatible(model.config(), ds);
  const auto indices = ds.split(split);
  if (indices.empty()) throw ConfigError("evaluate: split '" + split + "' is empty");
  const auto samples = prepare_samples(ds, indices, model.config(), threads);
  EvaluateOutput out;
  out.result = evaluate_samples(model, samples);

  std::vector<MultipathSet> train_truth, test_truth;
  for (std::size_t i : ds.manifest.train) train_truth.push_back(ds.record(i).paths);
  for (const Sample& s : samples) test_truth.push_back(s.paths);
  if (!train_truth.empty()) out.baseline = evaluate_baseline(fit_baseline(train_truth), test_truth);

  out.report["checkpoint"] = checkpoint.string();
  out.report["data"] = dataset_dir.string();
  out.report["split"] = split;
  out.report["variant"] = to_string(model.config().variant);
  out.report["mean_loss"] = out.result.mean_loss;
  out.report["metrics"] = to_json(out.result.metrics);
  if (!train_truth.empty()) out.report["baseline"] = to_json(out.baseline);
  if (report) {
    if (report->has_parent_path()) fs::create_directories(report->parent_path());
    write_json(*report, out.report);
    write_file(predictions_path_for(*report), format_predictions_csv(out.result.predictions));
  }
  return out;
}

Json channel_plot_data(const std::vector<MultipathSet>& truth, const std::vector<MultipathSet>& predicted,
                       const CapacityConfig& capacity, std::size_t trace_count) {
  if (truth.size() != predicted.size()) throw ShapeError("plot data: truth and prediction counts differ");
  Json j;
  Json traces = Json::array();
  for (std::size_t t = 0; t < std::min(trace_count, truth.size()); ++t) {
    Json tr;
    tr["snapshot"] = t;
    for (const auto& [key, set] : {std::pair<const char*, const MultipathSet*>{"truth", &truth[t]},
                                   {"predicted", &predicted[t]}}) {
      Json imp = Json::array();
      for (const Impulse& i : pdp(*set)) imp.push_back({{"delay_ns", i.delay_s * 1e9}, {"power_w", i.power_w}});
      tr[key] = imp;
    }
    traces.push_back(tr);
  }
  j["pdp_traces"] = traces;

  auto cdf = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    Json s = Json::array();
    for (std::size_t i = 0; i < v.size(); ++i)
      s.push_back({{"rms_ns", v[i] * 1e9}, {"cdf", static_cast<double>(i + 1) / static_cast<double>(v.size())}});
    return s;
  };
  std::vector<double> rms_t, rms_p;
  std::vector<double> grid;
  const int points = 101;
  for (int i = 0; i < points; ++i) grid.push_back(capacity.bandwidth_hz * i / (points - 1));
  std::vector<double> fcf_t(points, 0.0), fcf_p(points, 0.0);
  std::size_t fcf_count = 0;
  double cap_t = 0.0, cap_p = 0.0;
  std::size_t cap_count = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const PdpEntry et = pdp(truth[t]);
    const PdpEntry ep = pdp(predicted[t]);
    double pt = 0, pp = 0;
    for (const auto& i : et) pt += i.power_w;
    for (const auto& i : ep) pp += i.power_w;
    if (pt > 0 && pp > 0) {
      rms_t.push_back(rms_delay_spread(et));
      rms_p.push_back(rms_delay_spread(ep));
      const auto ft = fcf_normalized(et, grid);
      const auto fp = fcf_normalized(ep, grid);
      for (int i = 0; i < points; ++i) {
        fcf_t[static_cast<std::size_t>(i)] += ft[static_cast<std::size_t>(i)];
        fcf_p[static_cast<std::size_t>(i)] += fp[static_cast<std::size_t>(i)];
      }
      ++fcf_count;
    }
    CapacityConfig c = capacity;
    c.seed = Rng::derive(capacity.seed, t).next_u64();
    cap_t += channel_capacity(truth[t], c);
    cap_p += channel_capacity(predicted[t], c);
    ++cap_count;
  }
  j["rms_delay_spread_cdf"] = {{"truth", cdf(rms_t)}, {"predicted", cdf(rms_p)}};
  Json f = Json::array();
  for (int i = 0; i < points; ++i) {
    const double d = fcf_count ? static_cast<double>(fcf_count) : 1.0;
    f.push_back({{"delta_f_mhz", grid[static_cast<std::size_t>(i)] / 1e6},
                 {"truth", fcf_t[static_cast<std::size_t>(i)] / d},
                 {"predicted", fcf_p[static_cast<std::size_t>(i)] / d}});
  }
  j["fcf_normalized"] = f;
  j["capacity_bps"] = {{"truth", cap_count ? cap_t / cap_count : 0.0},
                       {"predicted", cap_count ? cap_p / cap_count : 0.0}};
  return j;
}

namespace {

std::map<std::string, nn::Tensor> snapshot_params(const Model& m, bool (*pred)(const std::string&)) {
  std::map<std::string, nn::Tensor> out;
  for (const auto& [name, p] : m.params().all()) {
    if (pred(name)) out[name] = p.value;
  }
  return out;
}

bool is_lora_name(const std::string& n) { return is_lora(n); }
bool is_base_name(const std::string& n) { return is_backbone_base(n); }

}  // namespace

AblationResult run_ablation(Variant variant, const AblationSamples& samples, ModelConfig model_cfg,
                            const TrainConfig& train_cfg, const std::optional<fs::path>& out_dir) {
  model_cfg.variant = variant;
  Model model(model_cfg);
  const auto base_before = snapshot_params(model, &is_base_name);
  const auto lora_before = snapshot_params(model, &is_lora_name);
  TrainOptions opt;
  opt.out_dir = out_dir;
  const TrainResult tr = train_model(model, samples.train, samples.val, train_cfg, opt);
  AblationResult r;
  r.variant = variant;
  r.final_train_loss = tr.log.empty() ? tr.initial_train_loss : tr.log.back().train_loss;
  r.trainable_parameters = model.params().trainable_count();
  r.backbone_bit_identical = snapshot_params(model, &is_base_name) == base_before;
  r.lora_bit_identical = snapshot_params(model, &is_lora_name) == lora_before;
  r.metrics = evaluate_samples(model, samples.test.empty() ? samples.val : samples.test).metrics;
  return r;
}

Json ablation_table_json(const std::vector<AblationResult>& rows) {
  Json table = Json::array();
  for (const AblationResult& r : rows) {
    table.push_back({{"variant", to_string(r.variant)},
                     {"accuracy", r.metrics.accuracy},
                     {"accuracy_percent", format_percent(r.metrics.accuracy)},
                     {"nmae_power", r.metrics.nmae_power},
                     {"nmse_power", r.metrics.nmse_power},
                     {"nmae_delay", r.metrics.nmae_delay},
                     {"nmse_delay", r.metrics.nmse_delay},
                     {"final_train_loss", r.final_train_loss},
                     {"trainable_parameters", r.trainable_parameters},
                     {"backbone_bit_identical", r.backbone_bit_identical},
                     {"lora_bit_identical", r.lora_bit_identical}});
  }
  return Json{{"table", "ablation"}, {"rows", table}};
}

std::string ablation_table_csv(const std::vector<AblationResult>& rows) {
  std::ostringstream os;
  os << "variant,accuracy,nmae_power,nmse_power,nmae_delay,nmse_delay,trainable_parameters\n";
  char buf[256];
  for (const AblationResult& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.6f,%.6f,%.6f,%.6f,%zu\n", to_string(r.variant).c_str(),
                  r.metrics.accuracy, r.metrics.nmae_power, r.metrics.nmse_power, r.metrics.nmae_delay,
                  r.metrics.nmse_delay, r.trainable_parameters);
    os << buf;
  }
  return os.str();
}

const std::vector<double>& default_fraction_grid() {
  static const std::vector<double> grid = {0.0025, 0.005, 0.01, 0.014, 0.016};
  return grid;
}

GeneralizationResult run_generalization(const fs::path& source_checkpoint, const GeneralizationCase& c,
                                        const std::vector<double>& fractions, const TrainConfig& cfg, int threads) {
  const Dataset target = load_dataset(c.target);
  Model probe = load_checkpoint(source_checkpoint);
  check_compatible(probe.config(), target);
  const auto test = prepare_samples(target, target.manifest.test, probe.config(), threads);
  GeneralizationResult r;
  r.name = c.name;
  r.zero_shot = evaluate_samples(probe, test).metrics;
  for (double f : fractions) {
    Model model = load_checkpoint(source_checkpoint);
    const FineTuneResult ft = fine_tune_few_shot(model, target, f, cfg, nullptr, threads, &test);
    r.points.push_back(FewShotPoint{f, ft.samples_used, ft.result.metrics});
  }
  return r;
}

Json generalization_report_json(const std::vector<GeneralizationResult>& results) {
  Json cases = Json::array();
  for (const GeneralizationResult& g : results) {
    Json pts = Json::array();
    for (const FewShotPoint& p : g.points) {
      pts.push_back({{"fraction", p.fraction},
                     {"samples", p.samples},
                     {"accuracy", p.metrics.accuracy},
                     {"nmae_power", p.metrics.nmae_power},
                     {"nmse_power", p.metrics.nmse_power},
                     {"nmae_delay", p.metrics.nmae_delay},
                     {"nmse_delay", p.metrics.nmse_delay}});
    }
    cases.push_back({{"case", g.name}, {"zero_shot", to_json(g.zero_shot)}, {"few_shot", pts}});
  }
  return Json{{"report", "few_shot_generalization"}, {"cases", cases}};
}

}  // namespace som
