// SPDX-License-Identifier: Apache-2.0

#include "som/backbone.hpp"

#include <cmath>
#include <cstdio>

#include "som/layers.hpp"

namespace som {

using namespace nn;

void BackboneConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
    throw ConfigError("backbone: d_model must be divisible by n_heads");
  if (n_layers < 1) throw ConfigError("backbone: n_layers must be >= 1");
  if (ffn_width < 1 || max_seq_len < 1) throw ConfigError("backbone: ffn_width and max_seq_len must be >= 1");
  if (lora_rank < 1 || !(lora_alpha > 0)) throw ConfigError("backbone: lora_rank and lora_alpha must be positive");
}

std::size_t BackboneConfig::lora_parameter_count() const {
  return static_cast<std::size_t>(n_layers) * 2 * static_cast<std::size_t>(lora_rank) *
         static_cast<std::size_t>(d_model + ffn_width);
}

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

}  // namespace

std::string render_prompt(const PropagationPrompt& prompt) {
  prompt.validate();
  return "fc_ghz=" + fixed3(prompt.carrier_frequency_hz / 1e9) + " bw_mhz=" + fixed3(prompt.bandwidth_hz / 1e6) +
         " dist_m=" + fixed3(prompt.distance_m) + " az_deg=" + fixed3(prompt.azimuth_deg) +
         " el_deg=" + fixed3(prompt.elevation_deg);
}

std::vector<int> tokenize_prompt(const PropagationPrompt& prompt) {
  const std::string text = render_prompt(prompt);
  std::vector<int> tokens;
  tokens.reserve(text.size() + 1);
  for (unsigned char c : text) tokens.push_back(c);
  tokens.push_back(kSepToken);
  return tokens;
}

void LoraLayer::validate() const {
  if (rank < 1 || !(alpha > 0)) throw ConfigError("lora: rank and alpha must be positive");
  if (a.rows != rank || b.cols != rank || a.cols != w0.cols || b.rows != w0.rows)
    throw ShapeError("lora: factor shapes do not match the base weight");
}

LoraLayer make_lora_layer(int d_in, int d_out, int rank, double alpha, Rng& rng) {
  LoraLayer l;
  l.rank = rank;
  l.alpha = alpha;
  l.w0 = Tensor(d_out, d_in);
  l.a = Tensor(rank, d_in);
  l.b = Tensor(d_out, rank);
  const double s = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (double& v : l.w0.data) v = s * rng.normal();
  for (double& v : l.a.data) v = s * rng.normal();
  return l;
}

std::vector<double> lora_forward(const std::vector<double>& x, const LoraLayer& layer) {
  layer.validate();
  if (static_cast<int>(x.size()) != layer.w0.cols) throw ShapeError("lora_forward: input width mismatch");
  const Tensor xr = Tensor::row(x);
  Tensor y = nn::matmul_nt(xr, layer.w0);
  const Tensor ax = nn::matmul_nt(xr, layer.a);
  const Tensor bax = nn::matmul_nt(ax, layer.b);
  const double s = layer.scaling();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += s * bax.data[i];
  return y.data;
}

Tensor merge_lora(const LoraLayer& layer) {
  layer.validate();
  Tensor w = layer.w0;
  const Tensor ba = nn::matmul(layer.b, layer.a);
  const double s = layer.scaling();
  for (std::size_t i = 0; i < w.size(); ++i) w.data[i] += s * ba.data[i];
  return w;
}

std::vector<std::string> lora_layer_names(const BackboneConfig& cfg) {
  std::vector<std::string> names;
  for (int l = 0; l < cfg.n_layers; ++l) {
    names.push_back("backbone.block" + std::to_string(l) + ".ffn.up");
    names.push_back("backbone.block" + std::to_string(l) + ".ffn.down");
  }
  return names;
}

void init_backbone(ParameterStore& store, const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  store.create_normal("backbone.embed.tokens", kVocabSize, cfg.d_model, 0.02, rng);
  store.create_normal("backbone.embed.pos", cfg.max_seq_len, cfg.d_model, 0.02, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string name = "backbone.block" + std::to_string(l);
    nn::init_rms_norm(store, name + ".norm1", cfg.d_model);
    nn::init_attention(store, name + ".attn", cfg.d_model, rng);
    nn::init_rms_norm(store, name + ".norm2", cfg.d_model);
    nn::init_lora_linear(store, name + ".ffn.up", cfg.d_model, cfg.ffn_width, cfg.lora_rank, rng);
    nn::init_lora_linear(store, name + ".ffn.down", cfg.ffn_width, cfg.d_model, cfg.lora_rank, rng);
  }
  nn::init_rms_norm(store, "backbone.norm", cfg.d_model);
}

Var encode_prompt(Graph& g, ParameterStore& store, const std::vector<int>& tokens) {
  if (tokens.empty()) throw ShapeError("encode_prompt: empty token sequence");
  return gather_rows(g.param(store.get("backbone.embed.tokens")), tokens);
}

Var backbone_forward(Graph& g, ParameterStore& store, const BackboneConfig& cfg, std::optional<Var> prompt_embeddings,
                     Var fused_token, bool lora_active) {
  if (fused_token.rows() != 1 || fused_token.cols() != cfg.d_model)
    throw ShapeError("backbone_forward: fused token must be 1 x d_model");
  Var x = fused_token;
  if (prompt_embeddings) {
    if (prompt_embeddings->cols() != cfg.d_model) throw ShapeError("backbone_forward: prompt width mismatch");
    x = concat_rows({*prompt_embeddings, fused_token});
  }
  const int n = x.rows();
  if (n > cfg.max_seq_len)
    throw LengthError("backbone_forward: sequence of " + std::to_string(n) + " exceeds max_seq_len " +
                      std::to_string(cfg.max_seq_len));
  x = add(x, slice_rows(g.param(store.get("backbone.embed.pos")), 0, n));
  const double s = cfg.lora_scaling();
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string name = "backbone.block" + std::to_string(l);
    Var h = nn::rms_norm(g, store, name + ".norm1", x);
    x = add(x, nn::self_attention(g, store, name + ".attn", h, cfg.n_heads, true));
    h = nn::rms_norm(g, store, name + ".norm2", x);
    h = silu(nn::lora_linear(g, store, name + ".ffn.up", h, s, lora_active));
    x = add(x, nn::lora_linear(g, store, name + ".ffn.down", h, s, lora_active));
  }
  return nn::rms_norm(g, store, "backbone.norm", x);
}

}  // namespace som
