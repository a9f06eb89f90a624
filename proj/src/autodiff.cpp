// SPDX-License-Identifier: Apache-2.0

#include "som/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace som::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

CMap cmap(const Tensor& t) { return CMap(t.data.data(), t.rows, t.cols); }
MMap mmap(Tensor& t) { return MMap(t.data.data(), t.rows, t.cols); }

Graph& graph_of(Var v) {
  if (v.graph == nullptr) throw ShapeError("autodiff: unbound variable");
  return *v.graph;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                     " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
}

template <typename F, typename D>
Var unary(Var a, F f, D df) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  Tensor out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
  const int ia = a.id;
  return g.record(std::move(out), {a}, [&g, ia, df](const Tensor& go, const Tensor& y) {
    const Tensor& xv = g.value(ia);
    Tensor& ga = g.grad(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i] * df(xv.data[i], y.data[i]);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor Tensor::from(int r, int c, std::vector<double> values) {
  if (values.size() != static_cast<std::size_t>(r) * static_cast<std::size_t>(c))
    throw ShapeError("Tensor::from: size mismatch");
  Tensor t;
  t.rows = r;
  t.cols = c;
  t.data = std::move(values);
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return from(1, n, std::move(values));
}

// --- ParameterStore ------------------------------------------------------

Parameter& ParameterStore::create(const std::string& name, int rows, int cols) {
  if (params_.count(name) != 0) throw ConfigError("duplicate parameter: " + name);
  Parameter& p = params_[name];
  p.name = name;
  p.value = Tensor(rows, cols);
  p.grad = Tensor(rows, cols);
  return p;
}

Parameter& ParameterStore::create_normal(const std::string& name, int rows, int cols, double stddev, Rng& rng) {
  Parameter& p = create(name, rows, cols);
  for (double& v : p.value.data) v = stddev * rng.normal();
  return p;
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.trainable ? p.value.size() : 0;
  return n;
}

std::size_t ParameterStore::total_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

void ParameterStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& [name, p] : params_) {
    if (name.rfind(prefix, 0) == 0) p.trainable = trainable;
  }
}

std::size_t ParameterStore::count_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) {
    if (name.rfind(prefix, 0) == 0) n += p.value.size();
  }
  return n;
}

// --- Graph ---------------------------------------------------------------

const Tensor& Var::value() const { return graph_of(*this).value(id); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Parameter& p) {
  Node n;
  n.ref = &p.value;
  n.requires_grad = p.trainable;
  if (p.trainable) {
    if (!p.grad.same_shape(p.value)) p.grad = Tensor(p.value.rows, p.value.cols);
    n.param_grad = &p.grad;
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.ref != nullptr ? *n.ref : n.value;
}

Tensor& Graph::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.param_grad != nullptr) return *n.param_grad;
  if (n.grad.size() == 0 && (n.grad.rows == 0)) {
    const Tensor& v = n.ref != nullptr ? *n.ref : n.value;
    n.grad = Tensor(v.rows, v.cols);
  }
  return n.grad;
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.graph != this) throw ShapeError("autodiff: variable from another graph");
    n.requires_grad = n.requires_grad || requires_grad(v.id);
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var out) {
  if (out.graph != this) throw ShapeError("autodiff: backward on foreign variable");
  const Tensor& v = value(out.id);
  if (v.rows != 1 || v.cols != 1) throw ShapeError("autodiff: backward needs a scalar output");
  if (!requires_grad(out.id)) return;
  grad(out.id).data[0] += 1.0;
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(n.grad, n.ref != nullptr ? *n.ref : n.value);
  }
}

// --- ops -------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols != B.rows) throw ShapeError("matmul: inner dimensions differ");
  Tensor out(A.rows, B.cols);
  mmap(out).noalias() = cmap(A) * cmap(B);
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {a, b}, [&g, ia, ib](const Tensor& go, const Tensor&) {
    if (g.requires_grad(ia)) mmap(g.grad(ia)).noalias() += cmap(go) * cmap(g.value(ib)).transpose();
    if (g.requires_grad(ib)) mmap(g.grad(ib)).noalias() += cmap(g.value(ia)).transpose() * cmap(go);
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols != B.cols) throw ShapeError("matmul_nt: inner dimensions differ");
  Tensor out(A.rows, B.rows);
  mmap(out).noalias() = cmap(A) * cmap(B).transpose();
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {a, b}, [&g, ia, ib](const Tensor& go, const Tensor&) {
    if (g.requires_grad(ia)) mmap(g.grad(ia)).noalias() += cmap(go) * cmap(g.value(ib));
    if (g.requires_grad(ib)) mmap(g.grad(ib)).noalias() += cmap(go).transpose() * cmap(g.value(ia));
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  Tensor out(A.cols, A.rows);
  mmap(out) = cmap(A).transpose();
  const int ia = a.id;
  return g.record(std::move(out), {a}, [&g, ia](const Tensor& go, const Tensor&) {
    mmap(g.grad(ia)) += cmap(go).transpose();
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  mmap(out) += cmap(b.value());
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {a, b}, [&g, ia, ib](const Tensor& go, const Tensor&) {
    if (g.requires_grad(ia)) mmap(g.grad(ia)) += cmap(go);
    if (g.requires_grad(ib)) mmap(g.grad(ib)) += cmap(go);
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  mmap(out) -= cmap(b.value());
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {a, b}, [&g, ia, ib](const Tensor& go, const Tensor&) {
    if (g.requires_grad(ia)) mmap(g.grad(ia)) += cmap(go);
    if (g.requires_grad(ib)) mmap(g.grad(ib)) -= cmap(go);
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  mmap(out) = cmap(out).cwiseProduct(cmap(b.value()));
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {a, b}, [&g, ia, ib](const Tensor& go, const Tensor&) {
    if (g.requires_grad(ia)) mmap(g.grad(ia)) += cmap(go).cwiseProduct(cmap(g.value(ib)));
    if (g.requires_grad(ib)) mmap(g.grad(ib)) += cmap(go).cwiseProduct(cmap(g.value(ia)));
  });
}

Var add_row(Var a, Var row) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  if (R.rows != 1 || R.cols != A.cols) throw ShapeError("add_row: row must be 1 x cols");
  Tensor out = A;
  mmap(out).rowwise() += cmap(R).row(0);
  const int ia = a.id, ir = row.id;
  return g.record(std::move(out), {a, row}, [&g, ia, ir](const Tensor& go, const Tensor&) {
    if (g.requires_grad(ia)) mmap(g.grad(ia)) += cmap(go);
    if (g.requires_grad(ir)) mmap(g.grad(ir)) += cmap(go).colwise().sum();
  });
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  Tensor out = a.value();
  mmap(out) *= s;
  const int ia = a.id;
  return g.record(std::move(out), {a}, [&g, ia, s](const Tensor& go, const Tensor&) {
    mmap(g.grad(ia)) += s * cmap(go);
  });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(c * (x + k * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
      });
}

Var silu(Var a) {
  return unary(
      a, [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        const double s = sigmoid_scalar(x);
        return s + x * s * (1.0 - s);
      });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return sigmoid_scalar(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var softmax_rows(Var a, bool causal) {
  Graph& g = graph_of(a);
  const Tensor& X = a.value();
  Tensor out(X.rows, X.cols);
  const int offset = X.cols - X.rows;
  for (int r = 0; r < X.rows; ++r) {
    const int limit = causal ? std::min(X.cols, r + offset + 1) : X.cols;
    if (limit <= 0) throw ShapeError("softmax_rows: fully masked row");
    const double* x = X.row_ptr(r);
    double* y = out.row_ptr(r);
    double m = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < limit; ++c) m = std::max(m, x[c]);
    double s = 0.0;
    for (int c = 0; c < limit; ++c) {
      y[c] = std::exp(x[c] - m);
      s += y[c];
    }
    for (int c = 0; c < limit; ++c) y[c] /= s;
  }
  const int ia = a.id;
  return g.record(std::move(out), {a}, [&g, ia](const Tensor& go, const Tensor& y) {
    Tensor& ga = g.grad(ia);
    for (int r = 0; r < y.rows; ++r) {
      const double* yr = y.row_ptr(r);
      const double* gr = go.row_ptr(r);
      double dotp = 0.0;
      for (int c = 0; c < y.cols; ++c) dotp += yr[c] * gr[c];
      double* out_r = ga.row_ptr(r);
      for (int c = 0; c < y.cols; ++c) out_r[c] += yr[c] * (gr[c] - dotp);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  if (G.rows != 1 || G.cols != X.cols || !G.same_shape(B)) throw ShapeError("layer_norm: parameter shape");
  Tensor out(X.rows, X.cols);
  Tensor xhat(X.rows, X.cols);
  std::vector<double> inv_std(static_cast<std::size_t>(X.rows));
  const double n = X.cols;
  for (int r = 0; r < X.rows; ++r) {
    const double* xr = X.row_ptr(r);
    double mean = 0.0;
    for (int c = 0; c < X.cols; ++c) mean += xr[c];
    mean /= n;
    double var = 0.0;
    for (int c = 0; c < X.cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (int c = 0; c < X.cols; ++c) {
      const double h = (xr[c] - mean) * is;
      xhat(r, c) = h;
      out(r, c) = h * G.data[static_cast<std::size_t>(c)] + B.data[static_cast<std::size_t>(c)];
    }
  }
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return g.record(std::move(out), {x, gain, bias},
                  [&g, ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Tensor& go,
                                                                                        const Tensor&) {
                    const Tensor& Gv = g.value(ig);
                    const int cols = go.cols;
                    if (g.requires_grad(ig)) mmap(g.grad(ig)) += cmap(go).cwiseProduct(cmap(xhat)).colwise().sum();
                    if (g.requires_grad(ib)) mmap(g.grad(ib)) += cmap(go).colwise().sum();
                    if (!g.requires_grad(ix)) return;
                    Tensor& gx = g.grad(ix);
                    std::vector<double> dh(static_cast<std::size_t>(cols));
                    for (int r = 0; r < go.rows; ++r) {
                      double mean_dh = 0.0, mean_dhh = 0.0;
                      for (int c = 0; c < cols; ++c) {
                        dh[static_cast<std::size_t>(c)] = go(r, c) * Gv.data[static_cast<std::size_t>(c)];
                        mean_dh += dh[static_cast<std::size_t>(c)];
                        mean_dhh += dh[static_cast<std::size_t>(c)] * xhat(r, c);
                      }
                      mean_dh /= cols;
                      mean_dhh /= cols;
                      const double is = inv_std[static_cast<std::size_t>(r)];
                      for (int c = 0; c < cols; ++c)
                        gx(r, c) += is * (dh[static_cast<std::size_t>(c)] - mean_dh - xhat(r, c) * mean_dhh);
                    }
                  });
}

Var rms_norm(Var x, Var gain, double eps) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  const Tensor& G = gain.value();
  if (G.rows != 1 || G.cols != X.cols) throw ShapeError("rms_norm: gain shape");
  Tensor out(X.rows, X.cols);
  Tensor xhat(X.rows, X.cols);
  std::vector<double> inv_rms(static_cast<std::size_t>(X.rows));
  for (int r = 0; r < X.rows; ++r) {
    const double* xr = X.row_ptr(r);
    double ms = 0.0;
    for (int c = 0; c < X.cols; ++c) ms += xr[c] * xr[c];
    ms /= X.cols;
    const double ir = 1.0 / std::sqrt(ms + eps);
    inv_rms[static_cast<std::size_t>(r)] = ir;
    for (int c = 0; c < X.cols; ++c) {
      xhat(r, c) = xr[c] * ir;
      out(r, c) = xhat(r, c) * G.data[static_cast<std::size_t>(c)];
    }
  }
  const int ix = x.id, ig = gain.id;
  return g.record(std::move(out), {x, gain},
                  [&g, ix, ig, xhat = std::move(xhat), inv_rms = std::move(inv_rms)](const Tensor& go, const Tensor&) {
                    const Tensor& Gv = g.value(ig);
                    const int cols = go.cols;
                    if (g.requires_grad(ig)) mmap(g.grad(ig)) += cmap(go).cwiseProduct(cmap(xhat)).colwise().sum();
                    if (!g.requires_grad(ix)) return;
                    Tensor& gx = g.grad(ix);
                    for (int r = 0; r < go.rows; ++r) {
                      double mean_dhh = 0.0;
                      for (int c = 0; c < cols; ++c) mean_dhh += go(r, c) * Gv.data[static_cast<std::size_t>(c)] * xhat(r, c);
                      mean_dhh /= cols;
                      const double ir = inv_rms[static_cast<std::size_t>(r)];
                      for (int c = 0; c < cols; ++c)
                        gx(r, c) += ir * (go(r, c) * Gv.data[static_cast<std::size_t>(c)] - xhat(r, c) * mean_dhh);
                    }
                  });
}

Var mean_rows(Var a) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  if (A.rows == 0) throw ShapeError("mean_rows: empty input");
  Tensor out(1, A.cols);
  mmap(out) = cmap(A).colwise().mean();
  const int ia = a.id;
  const double inv = 1.0 / A.rows;
  return g.record(std::move(out), {a}, [&g, ia, inv](const Tensor& go, const Tensor&) {
    mmap(g.grad(ia)).rowwise() += inv * cmap(go).row(0);
  });
}

Var max_rows(Var a) { return group_max(a, {0, a.rows()}); }

Var group_max(Var a, const std::vector<int>& offsets) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != A.rows)
    throw ShapeError("group_max: offsets must span the input rows");
  const int groups = static_cast<int>(offsets.size()) - 1;
  Tensor out(groups, A.cols);
  std::vector<int> arg(static_cast<std::size_t>(groups) * A.cols);
  for (int gi = 0; gi < groups; ++gi) {
    const int r0 = offsets[static_cast<std::size_t>(gi)];
    const int r1 = offsets[static_cast<std::size_t>(gi) + 1];
    if (r1 <= r0) throw ShapeError("group_max: empty group");
    for (int c = 0; c < A.cols; ++c) {
      int best = r0;
      for (int r = r0 + 1; r < r1; ++r) {
        if (A(r, c) > A(best, c)) best = r;
      }
      out(gi, c) = A(best, c);
      arg[static_cast<std::size_t>(gi) * A.cols + c] = best;
    }
  }
  const int ia = a.id;
  return g.record(std::move(out), {a}, [&g, ia, arg = std::move(arg)](const Tensor& go, const Tensor&) {
    Tensor& ga = g.grad(ia);
    for (int gi = 0; gi < go.rows; ++gi) {
      for (int c = 0; c < go.cols; ++c) ga(arg[static_cast<std::size_t>(gi) * go.cols + c], c) += go(gi, c);
    }
  });
}

Var sum_all(Var a) {
  Graph& g = graph_of(a);
  Tensor out(1, 1);
  out.data[0] = cmap(a.value()).sum();
  const int ia = a.id;
  return g.record(std::move(out), {a}, [&g, ia](const Tensor& go, const Tensor&) {
    mmap(g.grad(ia)).array() += go.data[0];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Graph& g = graph_of(parts.front());
  const int rows = parts.front().rows();
  int cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::vector<int> ids, widths;
  int at = 0;
  for (const Var& p : parts) {
    mmap(out).middleCols(at, p.cols()) = cmap(p.value());
    at += p.cols();
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  return g.record(std::move(out), parts, [&g, ids, widths](const Tensor& go, const Tensor&) {
    int at2 = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (g.requires_grad(ids[i])) mmap(g.grad(ids[i])) += cmap(go).middleCols(at2, widths[i]);
      at2 += widths[i];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Graph& g = graph_of(parts.front());
  const int cols = parts.front().cols();
  int rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::vector<int> ids, heights;
  int at = 0;
  for (const Var& p : parts) {
    mmap(out).middleRows(at, p.rows()) = cmap(p.value());
    at += p.rows();
    ids.push_back(p.id);
    heights.push_back(p.rows());
  }
  return g.record(std::move(out), parts, [&g, ids, heights](const Tensor& go, const Tensor&) {
    int at2 = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (g.requires_grad(ids[i])) mmap(g.grad(ids[i])) += cmap(go).middleRows(at2, heights[i]);
      at2 += heights[i];
    }
  });
}

Var slice_cols(Var a, int begin, int count) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  if (begin < 0 || count < 0 || begin + count > A.cols) throw ShapeError("slice_cols: out of range");
  Tensor out(A.rows, count);
  mmap(out) = cmap(A).middleCols(begin, count);
  const int ia = a.id;
  return g.record(std::move(out), {a}, [&g, ia, begin, count](const Tensor& go, const Tensor&) {
    mmap(g.grad(ia)).middleCols(begin, count) += cmap(go);
  });
}

Var slice_rows(Var a, int begin, int count) {
  Graph& g = graph_of(a);
  const Tensor& A = a.value();
  if (begin < 0 || count < 0 || begin + count > A.rows) throw ShapeError("slice_rows: out of range");
  Tensor out(count, A.cols);
  mmap(out) = cmap(A).middleRows(begin, count);
  const int ia = a.id;
  return g.record(std::move(out), {a}, [&g, ia, begin, count](const Tensor& go, const Tensor&) {
    mmap(g.grad(ia)).middleRows(begin, count) += cmap(go);
  });
}

Var gather_rows(Var table, const std::vector<int>& indices) {
  Graph& g = graph_of(table);
  const Tensor& T = table.value();
  Tensor out(static_cast<int>(indices.size()), T.cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int r = indices[i];
    if (r < 0 || r >= T.rows) throw ShapeError("gather_rows: index out of range");
    std::copy(T.row_ptr(r), T.row_ptr(r) + T.cols, out.row_ptr(static_cast<int>(i)));
  }
  const int it = table.id;
  return g.record(std::move(out), {table}, [&g, it, indices](const Tensor& go, const Tensor&) {
    Tensor& gt = g.grad(it);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      double* dst = gt.row_ptr(indices[i]);
      const double* src = go.row_ptr(static_cast<int>(i));
      for (int c = 0; c < go.cols; ++c) dst[c] += src[c];
    }
  });
}

Var conv1d_same(Var x, Var kernel) {
  Graph& g = graph_of(x);
  const Tensor& X = x.value();
  const Tensor& K = kernel.value();
  if (X.rows != 1 || K.rows != 1) throw ShapeError("conv1d_same: expects 1 x C input and 1 x k kernel");
  const int k = K.cols;
  if (k % 2 == 0) throw ConfigError("conv1d_same: kernel size must be odd");
  const int c = X.cols;
  const int half = k / 2;
  Tensor out(1, c);
  for (int i = 0; i < c; ++i) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      const int src = i + j - half;
      if (src >= 0 && src < c) s += K.data[static_cast<std::size_t>(j)] * X.data[static_cast<std::size_t>(src)];
    }
    out.data[static_cast<std::size_t>(i)] = s;
  }
  const int ix = x.id, ik = kernel.id;
  return g.record(std::move(out), {x, kernel}, [&g, ix, ik, k, c, half](const Tensor& go, const Tensor&) {
    const Tensor& Xv = g.value(ix);
    const Tensor& Kv = g.value(ik);
    const bool gx = g.requires_grad(ix), gk = g.requires_grad(ik);
    for (int i = 0; i < c; ++i) {
      const double d = go.data[static_cast<std::size_t>(i)];
      for (int j = 0; j < k; ++j) {
        const int src = i + j - half;
        if (src < 0 || src >= c) continue;
        if (gx) g.grad(ix).data[static_cast<std::size_t>(src)] += Kv.data[static_cast<std::size_t>(j)] * d;
        if (gk) g.grad(ik).data[static_cast<std::size_t>(j)] += Xv.data[static_cast<std::size_t>(src)] * d;
      }
    }
  });
}

Var dropout(Var a, double rate) {
  Graph& g = graph_of(a);
  if (!g.training() || rate <= 0.0) return a;
  if (rate >= 1.0) throw ConfigError("dropout: rate must be < 1");
  const Tensor& A = a.value();
  Tensor mask(A.rows, A.cols);
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask.data) m = g.dropout_rng().uniform() >= rate ? keep : 0.0;
  return mul(a, g.constant(std::move(mask)));
}

Var cross_entropy(Var logits, int label) {
  Graph& g = graph_of(logits);
  const Tensor& Z = logits.value();
  if (Z.rows != 1 || label < 0 || label >= Z.cols) throw ShapeError("cross_entropy: bad logits or label");
  double m = -std::numeric_limits<double>::infinity();
  for (double z : Z.data) m = std::max(m, z);
  double s = 0.0;
  for (double z : Z.data) s += std::exp(z - m);
  const double lse = m + std::log(s);
  Tensor out(1, 1);
  out.data[0] = lse - Z.data[static_cast<std::size_t>(label)];
  const int iz = logits.id;
  return g.record(std::move(out), {logits}, [&g, iz, label, lse](const Tensor& go, const Tensor&) {
    const Tensor& Zv = g.value(iz);
    Tensor& gz = g.grad(iz);
    for (int c = 0; c < Zv.cols; ++c) {
      const double p = std::exp(Zv.data[static_cast<std::size_t>(c)] - lse);
      gz.data[static_cast<std::size_t>(c)] += go.data[0] * (p - (c == label ? 1.0 : 0.0));
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
  Tensor out(a.rows, b.cols);
  mmap(out).noalias() = cmap(a) * cmap(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols != b.cols) throw ShapeError("matmul_nt: inner dimensions differ");
  Tensor out(a.rows, b.rows);
  mmap(out).noalias() = cmap(a) * cmap(b).transpose();
  return out;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace som::nn
