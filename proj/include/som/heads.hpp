// SPDX-License-Identifier: Apache-2.0
//
// Task adapters on the pooled backbone output and the composite loss.

#pragma once

#include <array>
#include <vector>

#include "som/autodiff.hpp"
#include "som/scenegen.hpp"

namespace som {

enum class Task { kClassification, kPower, kDelay };
std::string to_string(Task t);

struct HeadsConfig {
  int width = 512;
  double dropout = 0.3;  // regression branches, training only
  int n_paths = 6;
  double tau_max_ns = 2000.0;
  double tau_max_s() const { return tau_max_ns * 1e-9; }

  void validate() const;
};

struct LossConfig {
  std::vector<double> mu = {3, 1, 1, 1, 1, 1};
  double cls_weight = 1.0;
  double power_weight = 1.0;
  double delay_weight = 1.0;

  void validate(int n_paths) const;
};

struct TaskOutputs {
  std::array<double, 2> los_prob{0.5, 0.5};  // (NLoS, LoS)
  std::vector<double> power_pred;
  std::vector<double> delay_pred;  // fraction of tau_max
};

struct Targets {
  int los_label = 0;  // 1 = LoS
  std::vector<double> power;
  std::vector<double> delay;  // fraction of tau_max
  std::vector<bool> valid;
};

Targets make_targets(const MultipathSet& paths, const HeadsConfig& cfg);

struct LossBreakdown {
  double total = 0.0;
  double cls = 0.0;
  double power = 0.0;
  double delay = 0.0;
  bool regression_used = false;
};

struct HeadVars {
  nn::Var cls_logits;  // 1 x 2
  nn::Var power;       // 1 x N in (0,1)
  nn::Var delay;       // 1 x N in (0,1)
};

void init_heads(nn::ParameterStore& store, int d_model, const HeadsConfig& cfg, Rng& rng);

// Mean over positions, then relu(u + W2 drop(relu(W1 u))) with u = W0 pooled.
nn::Var pool_and_adapt(nn::Graph& g, nn::ParameterStore& store, const HeadsConfig& cfg, nn::Var hidden, Task task);
nn::Var classify_los(nn::Graph& g, nn::ParameterStore& store, nn::Var mapping);  // logits
std::pair<nn::Var, nn::Var> regress_paths(nn::Graph& g, nn::ParameterStore& store, nn::Var power_mapping,
                                          nn::Var delay_mapping);
HeadVars run_heads(nn::Graph& g, nn::ParameterStore& store, const HeadsConfig& cfg, nn::Var hidden);

std::array<double, 2> softmax2(double z0, double z1);
TaskOutputs to_outputs(const HeadVars& h);

// sum mu (w - w_hat)^2 / sum w^2 over valid entries
double weighted_nmse(const std::vector<double>& truth, const std::vector<double>& pred,
                     const std::vector<double>& weights, const std::vector<bool>& valid);

nn::Var compute_loss(nn::Graph& g, const HeadVars& h, const Targets& t, const LossConfig& cfg,
                     LossBreakdown* breakdown = nullptr);
LossBreakdown compute_loss(const TaskOutputs& out, const Targets& t, const LossConfig& cfg);

}  // namespace som
