// SPDX-License-Identifier: Apache-2.0

#include "som/layers.hpp"

#include <cmath>

namespace som::nn {

void init_linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, bool bias) {
  store.create_normal(name + ".w", out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  if (bias) store.create(name + ".b", 1, out);
}

Var linear(Graph& g, ParameterStore& store, const std::string& name, Var x) {
  Var y = matmul_nt(x, g.param(store.get(name + ".w")));
  const std::string b = name + ".b";
  if (store.contains(b)) y = add_row(y, g.param(store.get(b)));
  return y;
}

void init_layer_norm(ParameterStore& store, const std::string& name, int width) {
  store.create(name + ".g", 1, width).value = Tensor(1, width, 1.0);
  store.create(name + ".b", 1, width);
}

Var layer_norm(Graph& g, ParameterStore& store, const std::string& name, Var x) {
  return layer_norm(x, g.param(store.get(name + ".g")), g.param(store.get(name + ".b")));
}

void init_rms_norm(ParameterStore& store, const std::string& name, int width) {
  store.create(name + ".g", 1, width).value = Tensor(1, width, 1.0);
}

Var rms_norm(Graph& g, ParameterStore& store, const std::string& name, Var x) {
  return rms_norm(x, g.param(store.get(name + ".g")));
}

void init_lora_linear(ParameterStore& store, const std::string& name, int in, int out, int rank, Rng& rng) {
  init_linear(store, name, in, out, rng, false);
  store.create_normal(name + ".lora_a", rank, in, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  store.create(name + ".lora_b", out, rank);
}

Var lora_linear(Graph& g, ParameterStore& store, const std::string& name, Var x, double scaling, bool active) {
  Var y = matmul_nt(x, g.param(store.get(name + ".w")));
  if (!active) return y;
  Var ax = matmul_nt(x, g.param(store.get(name + ".lora_a")));
  Var bax = matmul_nt(ax, g.param(store.get(name + ".lora_b")));
  return add(y, scale(bax, scaling));
}

void init_attention(ParameterStore& store, const std::string& name, int width, Rng& rng) {
  for (const char* p : {".q", ".k", ".v", ".o"}) init_linear(store, name + p, width, width, rng, false);
}

Var attention(Graph& g, ParameterStore& store, const std::string& name, Var queries, Var context, int heads,
              bool causal) {
  Var q = linear(g, store, name + ".q", queries);
  Var k = linear(g, store, name + ".k", context);
  Var v = linear(g, store, name + ".v", context);
  const int width = q.cols();
  if (heads < 1 || width % heads != 0) throw ConfigError("attention: width not divisible by heads");
  const int dh = width / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Var p = softmax_rows(scale(matmul_nt(qh, kh), inv), causal);
    outs.push_back(matmul(p, vh));
  }
  Var merged = heads == 1 ? outs.front() : concat_cols(outs);
  return linear(g, store, name + ".o", merged);
}

Var self_attention(Graph& g, ParameterStore& store, const std::string& name, Var x, int heads, bool causal) {
  return attention(g, store, name, x, x, heads, causal);
}

void init_encoder_block(ParameterStore& store, const std::string& name, int width, int hidden, Rng& rng) {
  init_layer_norm(store, name + ".ln1", width);
  init_attention(store, name + ".attn", width, rng);
  init_layer_norm(store, name + ".ln2", width);
  init_linear(store, name + ".mlp.up", width, hidden, rng);
  init_linear(store, name + ".mlp.down", hidden, width, rng);
}

Var encoder_block(Graph& g, ParameterStore& store, const std::string& name, Var x, int heads) {
  x = add(x, self_attention(g, store, name + ".attn", layer_norm(g, store, name + ".ln1", x), heads, false));
  Var h = gelu(linear(g, store, name + ".mlp.up", layer_norm(g, store, name + ".ln2", x)));
  return add(x, linear(g, store, name + ".mlp.down", h));
}

}  // namespace som::nn
