// SPDX-License-Identifier: Apache-2.0

#include "som/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace som {

double classification_accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (predicted.size() != labels.size()) throw ShapeError("classification_accuracy: length mismatch");
  if (predicted.empty()) throw DomainError("classification_accuracy: empty input");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

int argmax_label(const std::array<double, 2>& los_prob) { return los_prob[1] > los_prob[0] ? 1 : 0; }

namespace {

struct ErrorSums {
  double nmae = 0.0;
  double nmse = 0.0;
  std::size_t count = 0;
  std::size_t skipped = 0;

  void add(double abs_num, double abs_den, double sq_num, double sq_den) {
    if (abs_den == 0.0 || sq_den == 0.0) {
      ++skipped;
      return;
    }
    nmae += abs_num / abs_den;
    nmse += sq_num / sq_den;
    ++count;
  }
  double mean_nmae() const { return count ? nmae / count : 0.0; }
  double mean_nmse() const { return count ? nmse / count : 0.0; }
};

void accumulate(const PathPrediction& p, const MultipathSet& t, ErrorSums& power, ErrorSums& delay) {
  if (p.power.size() < t.paths.size() || p.delay_s.size() < t.paths.size())
    throw ShapeError("nmae_nmse: prediction shorter than the path budget");
  double pa = 0, pd = 0, ps = 0, pds = 0;
  double da = 0, dd = 0, ds = 0, dds = 0;
  for (std::size_t n = 0; n < t.paths.size(); ++n) {
    const PathEntry& e = t.paths[n];
    if (!e.valid) continue;
    const double ep = e.power_ratio - p.power[n];
    pa += std::abs(ep);
    pd += std::abs(e.power_ratio);
    ps += ep * ep;
    pds += e.power_ratio * e.power_ratio;
    const double ed = e.delay_s - p.delay_s[n];
    da += std::abs(ed);
    dd += std::abs(e.delay_s);
    ds += ed * ed;
    dds += e.delay_s * e.delay_s;
  }
  power.add(pa, pd, ps, pds);
  delay.add(da, dd, ds, dds);
}

}  // namespace

MetricsReport nmae_nmse(const std::vector<PathPrediction>& pred, const std::vector<MultipathSet>& truth) {
  if (pred.size() != truth.size()) throw ShapeError("nmae_nmse: prediction and truth counts differ");
  ErrorSums power, delay;
  for (std::size_t t = 0; t < truth.size(); ++t) accumulate(pred[t], truth[t], power, delay);
  MetricsReport r;
  r.snapshots = truth.size();
  r.nmae_power = power.mean_nmae();
  r.nmse_power = power.mean_nmse();
  r.nmae_delay = delay.mean_nmae();
  r.nmse_delay = delay.mean_nmse();
  r.skipped_power = power.skipped;
  r.skipped_delay = delay.skipped;
  return r;
}

MetricsReport compute_metrics(const std::vector<PathPrediction>& pred, const std::vector<int>& predicted_labels,
                              const std::vector<MultipathSet>& truth) {
  MetricsReport r = nmae_nmse(pred, truth);
  std::vector<int> labels;
  for (const auto& t : truth) labels.push_back(t.los_present ? 1 : 0);
  r.accuracy = classification_accuracy(predicted_labels, labels);
  for (int c : {1, 0}) {
    std::vector<PathPrediction> p;
    std::vector<MultipathSet> t;
    std::vector<int> pl, tl;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (labels[i] != c) continue;
      p.push_back(pred[i]);
      t.push_back(truth[i]);
      pl.push_back(predicted_labels[i]);
      tl.push_back(c);
    }
    CaseMetrics cm;
    cm.name = c == 1 ? "los" : "nlos";
    cm.snapshots = t.size();
    if (!t.empty()) {
      const MetricsReport sub = nmae_nmse(p, t);
      cm.accuracy = classification_accuracy(pl, tl);
      cm.nmae_power = sub.nmae_power;
      cm.nmse_power = sub.nmse_power;
      cm.nmae_delay = sub.nmae_delay;
      cm.nmse_delay = sub.nmse_delay;
    }
    r.cases.push_back(cm);
  }
  return r;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
  return buf;
}

Json to_json(const MetricsReport& r) {
  Json j;
  j["accuracy"] = r.accuracy;
  j["accuracy_percent"] = format_percent(r.accuracy);
  j["nmae_power"] = r.nmae_power;
  j["nmse_power"] = r.nmse_power;
  j["nmae_delay"] = r.nmae_delay;
  j["nmse_delay"] = r.nmse_delay;
  j["snapshots"] = r.snapshots;
  j["skipped_power"] = r.skipped_power;
  j["skipped_delay"] = r.skipped_delay;
  Json cases = Json::array();
  for (const CaseMetrics& c : r.cases) {
    cases.push_back({{"case", c.name},
                     {"snapshots", c.snapshots},
                     {"accuracy", c.accuracy},
                     {"nmae_power", c.nmae_power},
                     {"nmse_power", c.nmse_power},
                     {"nmae_delay", c.nmae_delay},
                     {"nmse_delay", c.nmse_delay}});
  }
  j["cases"] = cases;
  return j;
}

PathPrediction to_path_prediction(const TaskOutputs& out, double tau_max_s) {
  PathPrediction p;
  p.power = out.power_pred;
  for (double d : out.delay_pred) p.delay_s.push_back(d * tau_max_s);
  return p;
}

EvalResult evaluate_samples(Model& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw ConfigError("evaluate: no samples");
  EvalResult r;
  std::vector<PathPrediction> preds;
  std::vector<int> labels;
  std::vector<MultipathSet> truth;
  double loss = 0.0;
  for (const Sample& s : samples) {
    Prediction p;
    p.index = s.index;
    p.outputs = model.predict(s);
    p.paths = to_path_prediction(p.outputs, model.config().heads.tau_max_s());
    p.label = argmax_label(p.outputs.los_prob);
    loss += compute_loss(p.outputs, s.targets, model.config().loss).total;
    preds.push_back(p.paths);
    labels.push_back(p.label);
    truth.push_back(s.paths);
    r.predictions.push_back(std::move(p));
  }
  r.mean_loss = loss / static_cast<double>(samples.size());
  r.metrics = compute_metrics(preds, labels, truth);
  return r;
}

MeanBaseline fit_baseline(const std::vector<MultipathSet>& train) {
  if (train.empty()) throw ConfigError("baseline: empty training split");
  const std::size_t n = train.front().paths.size();
  MeanBaseline b;
  b.power.assign(n, 0.0);
  b.delay_s.assign(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  std::size_t los = 0;
  for (const MultipathSet& m : train) {
    if (m.paths.size() != n) throw ShapeError("baseline: inconsistent path budget");
    los += m.los_present ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!m.paths[i].valid) continue;
      b.power[i] += m.paths[i].power_ratio;
      b.delay_s[i] += m.paths[i].delay_s;
      ++count[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] == 0) continue;
    b.power[i] /= static_cast<double>(count[i]);
    b.delay_s[i] /= static_cast<double>(count[i]);
  }
  b.majority_label = 2 * los > train.size() ? 1 : 0;
  return b;
}

MetricsReport evaluate_baseline(const MeanBaseline& b, const std::vector<MultipathSet>& truth) {
  std::vector<PathPrediction> preds(truth.size(), PathPrediction{b.power, b.delay_s});
  std::vector<int> labels(truth.size(), b.majority_label);
  return compute_metrics(preds, labels, truth);
}

}  // namespace som
