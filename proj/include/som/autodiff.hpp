// SPDX-License-Identifier: Apache-2.0
//
// Small reverse-mode automatic differentiation engine over dense row-major
// matrices of doubles. A Graph records one forward evaluation (one sample)
// and replays it backwards; parameter gradients accumulate into the
// Parameter objects so several graphs can contribute to one optimizer step.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "som/common.hpp"

namespace som::nn {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}
  static Tensor from(int r, int c, std::vector<double> values);
  static Tensor row(std::vector<double> values);

  std::size_t size() const { return data.size(); }
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row_ptr(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row_ptr(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Tensor&) const = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  Tensor adam_m;
  Tensor adam_v;
};

// Named parameters in a stable (lexicographic) order.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, int rows, int cols);
  Parameter& create_normal(const std::string& name, int rows, int cols, double stddev, Rng& rng);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad();
  std::size_t trainable_count() const;
  std::size_t total_count() const;
  // Sets `trainable` on every parameter whose name starts with prefix.
  void set_trainable(const std::string& prefix, bool trainable);
  std::size_t count_with_prefix(const std::string& prefix) const;

  std::map<std::string, Parameter>& all() { return params_; }
  const std::map<std::string, Parameter>& all() const { return params_; }

 private:
  std::map<std::string, Parameter> params_;
};

class Graph;

struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  int rows() const { return value().rows; }
  int cols() const { return value().cols; }
};

class Graph {
 public:
  using Backward = std::function<void(const Tensor& out_grad, const Tensor& out_value)>;

  explicit Graph(bool training = false, std::uint64_t dropout_seed = 0)
      : training_(training), dropout_rng_(dropout_seed) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);

  const Tensor& value(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  // Gradient buffer of a node, allocated on first use.
  Tensor& grad(int id);

  // Records an op. `backward` receives d(loss)/d(output) and the output value;
  // it is only kept when some input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward);

  // Seeds d(out)/d(out) = 1 (out must be 1x1) and runs the tape in reverse.
  void backward(Var out);

  bool training() const { return training_; }
  Rng& dropout_rng() { return dropout_rng_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;  // parameter value, not copied
    Tensor grad;
    Tensor* param_grad = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  std::vector<Node> nodes_;
  bool training_;
  Rng dropout_rng_;
};

// --- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);     // a (n x k) . b (k x m)
Var matmul_nt(Var a, Var b);  // a (n x k) . b^T, b (m x k)
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast a 1 x m row over every row of a
Var scale(Var a, double s);

Var relu(Var a);
Var gelu(Var a);  // tanh approximation
Var silu(Var a);
Var sigmoid(Var a);

Var softmax_rows(Var a, bool causal = false);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var rms_norm(Var x, Var gain, double eps = 1e-6);

Var mean_rows(Var a);  // n x m -> 1 x m
Var max_rows(Var a);   // n x m -> 1 x m, gradient to the first maximum
// Max over consecutive row groups: rows [offsets[g], offsets[g+1]) -> row g.
Var group_max(Var a, const std::vector<int>& offsets);
Var sum_all(Var a);    // -> 1 x 1

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, int begin, int count);
Var slice_rows(Var a, int begin, int count);
Var gather_rows(Var table, const std::vector<int>& indices);

// Zero-padded 1-D convolution along the columns of a 1 x C row with an odd
// 1 x k kernel; output width C.
Var conv1d_same(Var x, Var kernel);

// Inverted dropout driven by the graph's RNG; identity outside training.
Var dropout(Var a, double rate);

// -log softmax(logits)[label] for a 1 x C row.
Var cross_entropy(Var logits, int label);

// --- plain tensor helpers --------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& t);

}  // namespace som::nn
