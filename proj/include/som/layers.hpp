// SPDX-License-Identifier: Apache-2.0
//
// Named building blocks on top of the autodiff tape. Weights live in a
// ParameterStore under "<name>.w" (out x in) and "<name>.b" (1 x out);
// inputs are row-major (tokens x features).

#pragma once

#include <string>

#include "som/autodiff.hpp"

namespace som::nn {

void init_linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, bool bias = true);
Var linear(Graph& g, ParameterStore& store, const std::string& name, Var x);

void init_layer_norm(ParameterStore& store, const std::string& name, int width);
Var layer_norm(Graph& g, ParameterStore& store, const std::string& name, Var x);

void init_rms_norm(ParameterStore& store, const std::string& name, int width);
Var rms_norm(Graph& g, ParameterStore& store, const std::string& name, Var x);

// Linear map with a low-rank side branch: "<name>.w" is the base weight,
// "<name>.lora_a" (r x in) and "<name>.lora_b" (out x r, zero at init).
void init_lora_linear(ParameterStore& store, const std::string& name, int in, int out, int rank, Rng& rng);
Var lora_linear(Graph& g, ParameterStore& store, const std::string& name, Var x, double scaling, bool active);

// Multi-head attention with "<name>.q/.k/.v/.o" projections (no bias).
void init_attention(ParameterStore& store, const std::string& name, int width, Rng& rng);
Var self_attention(Graph& g, ParameterStore& store, const std::string& name, Var x, int heads, bool causal);
Var attention(Graph& g, ParameterStore& store, const std::string& name, Var queries, Var context, int heads,
              bool causal);

// Pre-LN encoder block: x + attn(ln(x)), then x + mlp(ln(x)) with GELU.
void init_encoder_block(ParameterStore& store, const std::string& name, int width, int hidden, Rng& rng);
Var encoder_block(Graph& g, ParameterStore& store, const std::string& name, Var x, int heads);

}  // namespace som::nn
