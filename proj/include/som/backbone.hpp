// SPDX-License-Identifier: Apache-2.0
//
// Small decoder-only transformer over byte-level prompt tokens plus one
// trailing fused-feature token. The FFN linear maps carry low-rank adapters.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "som/autodiff.hpp"
#include "som/scenegen.hpp"

namespace som {

inline constexpr int kPadToken = 256;
inline constexpr int kSepToken = 257;
inline constexpr int kVocabSize = 258;

struct BackboneConfig {
  int d_model = 256;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_width = 512;
  int max_seq_len = 128;
  int lora_rank = 8;
  double lora_alpha = 32.0;

  void validate() const;
  double lora_scaling() const { return lora_alpha / lora_rank; }
  // Adapter weights added by LoRA: both FFN maps of every block.
  std::size_t lora_parameter_count() const;
};

// `fc_ghz=.. bw_mhz=.. dist_m=.. az_deg=.. el_deg=..` with 3 decimals.
std::string render_prompt(const PropagationPrompt& prompt);
// Bytes of the rendered prompt followed by the separator token.
std::vector<int> tokenize_prompt(const PropagationPrompt& prompt);

struct LoraLayer {
  nn::Tensor w0;  // d_out x d_in
  nn::Tensor a;   // r x d_in
  nn::Tensor b;   // d_out x r
  double alpha = 32.0;
  int rank = 8;

  void validate() const;
  double scaling() const { return alpha / rank; }
};

LoraLayer make_lora_layer(int d_in, int d_out, int rank, double alpha, Rng& rng);
// W0 x + (alpha/r) B (A x), without forming the merged matrix.
std::vector<double> lora_forward(const std::vector<double>& x, const LoraLayer& layer);
nn::Tensor merge_lora(const LoraLayer& layer);

// backbone.embed.{tokens,pos}, backbone.block<i>.*, backbone.norm
void init_backbone(nn::ParameterStore& store, const BackboneConfig& cfg, Rng& rng);

nn::Var encode_prompt(nn::Graph& g, nn::ParameterStore& store, const std::vector<int>& tokens);

// prompt embeddings (n x d_model, optional) ++ fused token (1 x d_model)
// -> hidden states (n+1 x d_model).
nn::Var backbone_forward(nn::Graph& g, nn::ParameterStore& store, const BackboneConfig& cfg,
                         std::optional<nn::Var> prompt_embeddings, nn::Var fused_token, bool lora_active);

// Names of the FFN maps that carry adapters, e.g. backbone.block0.ffn.up.
std::vector<std::string> lora_layer_names(const BackboneConfig& cfg);

}  // namespace som
