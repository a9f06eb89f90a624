// SPDX-License-Identifier: Apache-2.0

#include "som/heads.hpp"

#include <cmath>

#include "som/layers.hpp"

namespace som {

using namespace nn;

std::string to_string(Task t) {
  switch (t) {
    case Task::kClassification: return "cls";
    case Task::kPower: return "power";
    case Task::kDelay: return "delay";
  }
  return "?";
}

void HeadsConfig::validate() const {
  if (width < 1 || n_paths < 1) throw ConfigError("heads: width and n_paths must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("heads: dropout must be in [0, 1)");
  if (!(tau_max_ns > 0)) throw ConfigError("heads: tau_max must be positive");
}

void LossConfig::validate(int n_paths) const {
  if (static_cast<int>(mu.size()) != n_paths) throw ConfigError("loss: mu must have one weight per path");
  for (double m : mu) {
    if (!(m > 0)) throw ConfigError("loss: mu entries must be > 0");
  }
  if (cls_weight < 0 || power_weight < 0 || delay_weight < 0) throw ConfigError("loss: task weights must be >= 0");
}

Targets make_targets(const MultipathSet& paths, const HeadsConfig& cfg) {
  if (static_cast<int>(paths.paths.size()) != cfg.n_paths)
    throw CompatibilityError("targets: path budget " + std::to_string(paths.paths.size()) + " != " +
                             std::to_string(cfg.n_paths));
  Targets t;
  t.los_label = paths.los_present ? 1 : 0;
  for (const PathEntry& p : paths.paths) {
    t.power.push_back(p.valid ? p.power_ratio : 0.0);
    t.delay.push_back(p.valid ? p.delay_s / cfg.tau_max_s() : 0.0);
    t.valid.push_back(p.valid);
  }
  return t;
}

void init_heads(ParameterStore& store, int d_model, const HeadsConfig& cfg, Rng& rng) {
  cfg.validate();
  for (Task task : {Task::kClassification, Task::kPower, Task::kDelay}) {
    const std::string name = "heads." + to_string(task);
    nn::init_linear(store, name + ".in", d_model, cfg.width, rng);
    nn::init_linear(store, name + ".hidden", cfg.width, cfg.width, rng);
    nn::init_linear(store, name + ".out", cfg.width, cfg.width, rng);
    nn::init_linear(store, name + ".logits", cfg.width, task == Task::kClassification ? 2 : cfg.n_paths, rng);
  }
}

Var pool_and_adapt(Graph& g, ParameterStore& store, const HeadsConfig& cfg, Var hidden, Task task) {
  if (hidden.rows() < 1) throw ShapeError("pool_and_adapt: empty sequence");
  const std::string name = "heads." + to_string(task);
  Var u = nn::linear(g, store, name + ".in", mean_rows(hidden));
  Var v = relu(nn::linear(g, store, name + ".hidden", u));
  if (task != Task::kClassification) v = dropout(v, cfg.dropout);
  v = nn::linear(g, store, name + ".out", v);
  return relu(add(u, v));
}

Var classify_los(Graph& g, ParameterStore& store, Var mapping) {
  return nn::linear(g, store, "heads.cls.logits", mapping);
}

std::pair<Var, Var> regress_paths(Graph& g, ParameterStore& store, Var power_mapping, Var delay_mapping) {
  return {sigmoid(nn::linear(g, store, "heads.power.logits", power_mapping)),
          sigmoid(nn::linear(g, store, "heads.delay.logits", delay_mapping))};
}

HeadVars run_heads(Graph& g, ParameterStore& store, const HeadsConfig& cfg, Var hidden) {
  HeadVars h;
  h.cls_logits = classify_los(g, store, pool_and_adapt(g, store, cfg, hidden, Task::kClassification));
  Var pm = pool_and_adapt(g, store, cfg, hidden, Task::kPower);
  Var dm = pool_and_adapt(g, store, cfg, hidden, Task::kDelay);
  std::tie(h.power, h.delay) = regress_paths(g, store, pm, dm);
  return h;
}

std::array<double, 2> softmax2(double z0, double z1) {
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m);
  const double e1 = std::exp(z1 - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

TaskOutputs to_outputs(const HeadVars& h) {
  TaskOutputs out;
  const Tensor& z = h.cls_logits.value();
  out.los_prob = softmax2(z.data[0], z.data[1]);
  out.power_pred = h.power.value().data;
  out.delay_pred = h.delay.value().data;
  return out;
}

double weighted_nmse(const std::vector<double>& truth, const std::vector<double>& pred,
                     const std::vector<double>& weights, const std::vector<bool>& valid) {
  if (truth.size() != pred.size() || truth.size() != valid.size() || weights.size() < truth.size())
    throw ShapeError("weighted_nmse: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    if (!valid[n]) continue;
    const double d = truth[n] - pred[n];
    num += weights[n] * d * d;
    den += truth[n] * truth[n];
  }
  if (den == 0.0) return 0.0;
  return num / den;
}

namespace {

bool any_regression(const Targets& t, const std::vector<double>& values) {
  double den = 0.0;
  for (std::size_t n = 0; n < values.size(); ++n) {
    if (t.valid[n]) den += values[n] * values[n];
  }
  return den > 0.0;
}

// Sum of coef_n (pred_n - truth_n)^2 with coef_n = w_n / sum truth^2 on valid n.
Var nmse_term(Graph& g, Var pred, const std::vector<double>& truth, const std::vector<double>& weights,
              const std::vector<bool>& valid) {
  double den = 0.0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    if (valid[n]) den += truth[n] * truth[n];
  }
  Tensor coef(1, static_cast<int>(truth.size()));
  for (std::size_t n = 0; n < truth.size(); ++n) coef.data[n] = valid[n] ? weights[n] / den : 0.0;
  Var diff = sub(pred, g.constant(Tensor::row(truth)));
  return sum_all(mul(mul(diff, diff), g.constant(std::move(coef))));
}

}  // namespace

Var compute_loss(Graph& g, const HeadVars& h, const Targets& t, const LossConfig& cfg, LossBreakdown* breakdown) {
  const int n = h.power.cols();
  cfg.validate(n);
  if (static_cast<int>(t.power.size()) != n || static_cast<int>(t.valid.size()) != n ||
      static_cast<int>(t.delay.size()) != n)
    throw ShapeError("compute_loss: target length mismatch");
  Var ce = cross_entropy(h.cls_logits, t.los_label);
  Var total = scale(ce, cfg.cls_weight);
  LossBreakdown b;
  b.cls = ce.value().data[0];
  if (any_regression(t, t.power)) {
    Var p = nmse_term(g, h.power, t.power, cfg.mu, t.valid);
    b.power = p.value().data[0];
    total = add(total, scale(p, cfg.power_weight));
    b.regression_used = true;
  }
  if (any_regression(t, t.delay)) {
    Var d = nmse_term(g, h.delay, t.delay, std::vector<double>(static_cast<std::size_t>(n), 1.0), t.valid);
    b.delay = d.value().data[0];
    total = add(total, scale(d, cfg.delay_weight));
    b.regression_used = true;
  }
  b.total = total.value().data[0];
  if (breakdown != nullptr) *breakdown = b;
  return total;
}

LossBreakdown compute_loss(const TaskOutputs& out, const Targets& t, const LossConfig& cfg) {
  const int n = static_cast<int>(out.power_pred.size());
  cfg.validate(n);
  LossBreakdown b;
  const double p = out.los_prob[static_cast<std::size_t>(t.los_label)];
  b.cls = -std::log(p);
  if (any_regression(t, t.power)) {
    b.power = weighted_nmse(t.power, out.power_pred, cfg.mu, t.valid);
    b.regression_used = true;
  }
  if (any_regression(t, t.delay)) {
    b.delay = weighted_nmse(t.delay, out.delay_pred, std::vector<double>(static_cast<std::size_t>(n), 1.0), t.valid);
    b.regression_used = true;
  }
  b.total = cfg.cls_weight * b.cls + cfg.power_weight * b.power + cfg.delay_weight * b.delay;
  return b;
}

}  // namespace som
