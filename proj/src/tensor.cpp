#include "affdec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "affdec/random.hpp"

namespace affdec {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_matrix(const char* op, const Tensor& t) {
  if (!t.defined()) throw DimensionError(op, "undefined tensor");
  if (t.rank() > 2) {
    throw DimensionError(op, "expected rank <= 2, got " + shape_str(t.shape()));
  }
}

// Builds the result node and wires it into the graph when any parent tracks
// gradients and recording is enabled.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node_ptr());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

// Gradient buffer of a parent, or nullptr when it does not track gradients.
double* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  return b.size() == a.cols() && b.rows() == 1 && a.shape() != b.shape();
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value.assign(shape_size(shape), v);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("Tensor::from", "shape " + shape_str(shape) +
                                             " does not match " +
                                             std::to_string(values.size()) +
                                             " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from(Shape{}, {v}, requires_grad);
}

std::size_t Tensor::rows() const {
  return rank() == 2 ? node_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 0) return 1;
  return node_->shape.back();
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item", "tensor has " + std::to_string(size()) +
                                     " elements");
  }
  return node_->value[0];
}

Tensor Tensor::detach(bool requires_grad) const {
  return from(shape(), node_->value, requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t n = a.rows(), k = a.cols();
  const std::size_t bk = transpose_b ? b.cols() : b.rows();
  const std::size_t m = transpose_b ? b.rows() : b.cols();
  if (bk != k) {
    throw DimensionError("matmul", "inner dimensions differ: " +
                                       shape_str(a.shape()) + " x " +
                                       shape_str(b.shape()) +
                                       (transpose_b ? "^T" : ""));
  }
  std::vector<double> out(n * m, 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  if (transpose_b) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* ai = A + i * k;
      for (std::size_t j = 0; j < m; ++j) {
        const double* bj = B + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
        out[i * m + j] = acc;
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double* oi = out.data() + i * m;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double* bp = B + p * m;
        for (std::size_t j = 0; j < m; ++j) oi[j] += aip * bp[j];
      }
    }
  }
  return make_result(
      "matmul", Shape{n, m}, std::move(out), {a, b},
      [n, k, m, transpose_b](Node& self) {
        const double* G = self.grad.data();
        const double* A = self.parents[0]->value.data();
        const double* B = self.parents[1]->value.data();
        if (double* dA = grad_of(self, 0)) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
              const double g = G[i * m + j];
              if (g == 0.0) continue;
              if (transpose_b) {
                const double* bj = B + j * k;
                for (std::size_t p = 0; p < k; ++p) dA[i * k + p] += g * bj[p];
              } else {
                for (std::size_t p = 0; p < k; ++p)
                  dA[i * k + p] += g * B[p * m + j];
              }
            }
          }
        }
        if (double* dB = grad_of(self, 1)) {
          for (std::size_t i = 0; i < n; ++i) {
            if (transpose_b) {
              const double* ai = A + i * k;
              for (std::size_t j = 0; j < m; ++j) {
                const double g = G[i * m + j];
                if (g == 0.0) continue;
                for (std::size_t p = 0; p < k; ++p) dB[j * k + p] += g * ai[p];
              }
            } else {
              const double* gi = G + i * m;
              for (std::size_t p = 0; p < k; ++p) {
                const double aip = A[i * k + p];
                if (aip == 0.0) continue;
                for (std::size_t j = 0; j < m; ++j) dB[p * m + j] += aip * gi[j];
              }
            }
          }
        }
      });
}

namespace {

enum class Binary { add, mul };

Tensor binary_op(const char* op, Binary kind, const Tensor& a,
                 const Tensor& b) {
  require_matrix(op, a);
  require_matrix(op, b);
  const bool broadcast = is_row_broadcast(a, b);
  if (!broadcast && a.shape() != b.shape()) {
    throw DimensionError(op, "incompatible shapes " + shape_str(a.shape()) +
                                 " and " + shape_str(b.shape()));
  }
  const std::size_t n = a.size();
  const std::size_t cols = a.cols();
  std::vector<double> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double y = broadcast ? bv[i % cols] : bv[i];
    out[i] = kind == Binary::add ? av[i] + y : av[i] * y;
  }
  return make_result(op, a.shape(), std::move(out), {a, b},
                     [kind, broadcast, n, cols](Node& self) {
                       const double* G = self.grad.data();
                       const double* A = self.parents[0]->value.data();
                       const double* B = self.parents[1]->value.data();
                       if (double* dA = grad_of(self, 0)) {
                         for (std::size_t i = 0; i < n; ++i) {
                           const double y = broadcast ? B[i % cols] : B[i];
                           dA[i] += kind == Binary::add ? G[i] : G[i] * y;
                         }
                       }
                       if (double* dB = grad_of(self, 1)) {
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t j = broadcast ? i % cols : i;
                           dB[j] += kind == Binary::add ? G[i] : G[i] * A[i];
                         }
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op("add", Binary::add, a, b);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op("mul", Binary::mul, a, b);
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= s;
  return make_result("scale", a.shape(), std::move(out), {a}, [s](Node& self) {
    if (double* dA = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        dA[i] += s * self.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return make_result("sum", Shape{}, {acc}, {a}, [](Node& self) {
    if (double* dA = grad_of(self, 0)) {
      const double g = self.grad[0];
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i)
        dA[i] += g;
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat", "no inputs");
  if (axis > 1) throw DimensionError("concat", "axis must be 0 or 1");
  for (const auto& p : parts) require_matrix("concat", p);
  const std::size_t rows0 = parts[0].rows(), cols0 = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (axis == 0 && p.cols() != cols0)
      throw DimensionError("concat", "column counts differ");
    if (axis == 1 && p.rows() != rows0)
      throw DimensionError("concat", "row counts differ");
    total += axis == 0 ? p.rows() : p.cols();
  }
  const std::size_t out_rows = axis == 0 ? total : rows0;
  const std::size_t out_cols = axis == 0 ? cols0 : total;
  std::vector<double> out(out_rows * out_cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto v = p.values();
    if (axis == 0) {
      std::copy(v.begin(), v.end(), out.begin() + off * out_cols);
      off += p.rows();
    } else {
      const std::size_t c = p.cols();
      for (std::size_t r = 0; r < rows0; ++r)
        std::copy_n(v.begin() + r * c, c, out.begin() + r * out_cols + off);
      off += c;
    }
  }
  return make_result(
      "concat", Shape{out_rows, out_cols}, std::move(out), parts,
      [axis, offsets, out_cols](Node& self) {
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
          double* dP = grad_of(self, pi);
          if (!dP) continue;
          const Node& p = *self.parents[pi];
          if (axis == 0) {
            const std::size_t base = offsets[pi] * out_cols;
            for (std::size_t i = 0; i < p.value.size(); ++i)
              dP[i] += self.grad[base + i];
          } else {
            const std::size_t c = p.shape.empty() ? 1 : p.shape.back();
            const std::size_t r_count = p.value.size() / c;
            for (std::size_t r = 0; r < r_count; ++r)
              for (std::size_t j = 0; j < c; ++j)
                dP[r * c + j] += self.grad[r * out_cols + offsets[pi] + j];
          }
        }
      });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  require_matrix("slice", a);
  if (axis > 1) throw DimensionError("slice", "axis must be 0 or 1");
  const std::size_t rows = a.rows(), cols = a.cols();
  const std::size_t extent = axis == 0 ? rows : cols;
  if (begin > end || end > extent) {
    throw DimensionError("slice", "range [" + std::to_string(begin) + "," +
                                      std::to_string(end) +
                                      ") out of bounds for " +
                                      shape_str(a.shape()));
  }
  const std::size_t out_rows = axis == 0 ? end - begin : rows;
  const std::size_t out_cols = axis == 0 ? cols : end - begin;
  std::vector<double> out(out_rows * out_cols);
  const auto v = a.values();
  for (std::size_t r = 0; r < out_rows; ++r)
    for (std::size_t c = 0; c < out_cols; ++c)
      out[r * out_cols + c] = axis == 0 ? v[(begin + r) * cols + c]
                                        : v[r * cols + begin + c];
  return make_result("slice", Shape{out_rows, out_cols}, std::move(out), {a},
                     [axis, begin, cols, out_rows, out_cols](Node& self) {
                       double* dA = grad_of(self, 0);
                       if (!dA) return;
                       for (std::size_t r = 0; r < out_rows; ++r)
                         for (std::size_t c = 0; c < out_cols; ++c) {
                           const std::size_t src =
                               axis == 0 ? (begin + r) * cols + c
                                         : r * cols + begin + c;
                           dA[src] += self.grad[r * out_cols + c];
                         }
                     });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2)
    throw DimensionError("embedding_lookup", "table must be rank 2");
  const std::size_t n_rows = table.rows(), d = table.cols();
  std::vector<int> idx(ids.begin(), ids.end());
  for (int id : idx) {
    if (id < 0 || static_cast<std::size_t>(id) >= n_rows) {
      throw DimensionError("embedding_lookup",
                           "id " + std::to_string(id) + " outside table of " +
                               std::to_string(n_rows) + " rows");
    }
  }
  std::vector<double> out(idx.size() * d);
  const auto v = table.values();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(v.begin() + static_cast<std::size_t>(idx[i]) * d, d,
                out.begin() + i * d);
  Shape shape{idx.size(), d};  // before idx is moved into the closure
  return make_result("embedding_lookup", std::move(shape), std::move(out),
                     {table}, [idx = std::move(idx), d](Node& self) {
                       double* dT = grad_of(self, 0);
                       if (!dT) return;
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         double* row = dT + static_cast<std::size_t>(idx[i]) * d;
                         for (std::size_t j = 0; j < d; ++j)
                           row[j] += self.grad[i * d + j];
                       }
                     });
}

Tensor add_indexed_rows(const Tensor& x, const Tensor& table,
                        std::span<const int> index) {
  require_matrix("add_indexed_rows", x);
  require_matrix("add_indexed_rows", table);
  const std::size_t n = x.rows(), m = x.cols(), k = table.rows();
  if (table.cols() != m)
    throw DimensionError("add_indexed_rows", "column counts differ");
  if (index.size() != n)
    throw DimensionError("add_indexed_rows", "index length != rows");
  std::vector<int> idx(index.begin(), index.end());
  for (int i : idx)
    if (i < 0 || static_cast<std::size_t>(i) >= k)
      throw DimensionError("add_indexed_rows", "index out of range");
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto t = table.values();
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t base = static_cast<std::size_t>(idx[r]) * m;
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] += t[base + c];
  }
  return make_result("add_indexed_rows", x.shape(), std::move(out), {x, table},
                     [idx = std::move(idx), m](Node& self) {
                       if (double* dX = grad_of(self, 0)) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           dX[i] += self.grad[i];
                       }
                       if (double* dT = grad_of(self, 1)) {
                         for (std::size_t r = 0; r < idx.size(); ++r) {
                           double* row = dT + static_cast<std::size_t>(idx[r]) * m;
                           for (std::size_t c = 0; c < m; ++c)
                             row[c] += self.grad[r * m + c];
                         }
                       }
                     });
}

namespace {

// Iteration layout for a reduction along one axis of a rank ≤ 2 tensor.
struct AxisLayout {
  std::size_t groups;
  std::size_t length;
  std::size_t stride;
  std::size_t group_step;
};

AxisLayout axis_layout(const Tensor& a, std::size_t axis, const char* op) {
  require_matrix(op, a);
  if (axis > 1) throw DimensionError(op, "axis must be 0 or 1");
  if (a.rank() < 2 || axis == 1) return {a.rows(), a.cols(), 1, a.cols()};
  return {a.cols(), a.rows(), a.cols(), 1};
}

}  // namespace

Tensor softmax(const Tensor& a, std::size_t axis) {
  const AxisLayout L = axis_layout(a, axis, "softmax");
  std::vector<double> out(a.size());
  const auto v = a.values();
  for (std::size_t g = 0; g < L.groups; ++g) {
    const std::size_t base = g * L.group_step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < L.length; ++i)
      mx = std::max(mx, v[base + i * L.stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < L.length; ++i) {
      const double e = std::exp(v[base + i * L.stride] - mx);
      out[base + i * L.stride] = e;
      z += e;
    }
    for (std::size_t i = 0; i < L.length; ++i) out[base + i * L.stride] /= z;
  }
  return make_result("softmax", a.shape(), std::move(out), {a},
                     [L](Node& self) {
                       double* dA = grad_of(self, 0);
                       if (!dA) return;
                       const double* Y = self.value.data();
                       const double* G = self.grad.data();
                       for (std::size_t g = 0; g < L.groups; ++g) {
                         const std::size_t base = g * L.group_step;
                         double dot = 0.0;
                         for (std::size_t i = 0; i < L.length; ++i) {
                           const std::size_t j = base + i * L.stride;
                           dot += Y[j] * G[j];
                         }
                         for (std::size_t i = 0; i < L.length; ++i) {
                           const std::size_t j = base + i * L.stride;
                           dA[j] += Y[j] * (G[j] - dot);
                         }
                       }
                     });
}

Tensor log_softmax(const Tensor& a) {
  require_matrix("log_softmax", a);
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.size());
  const auto v = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = v.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] - lse;
  }
  return make_result("log_softmax", a.shape(), std::move(out), {a},
                     [rows, cols](Node& self) {
                       double* dA = grad_of(self, 0);
                       if (!dA) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = self.value.data() + r * cols;
                         const double* g = self.grad.data() + r * cols;
                         double gs = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) gs += g[c];
                         for (std::size_t c = 0; c < cols; ++c)
                           dA[r * cols + c] += g[c] - std::exp(y[c]) * gs;
                       }
                     });
}

Tensor layer_norm(const Tensor& x, double eps) {
  require_matrix("layer_norm", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  std::vector<double> inv_std(rows);
  const auto v = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = v.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (xr[c] - mean) * is;
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x},
      [rows, cols, inv_std = std::move(inv_std)](Node& self) {
        double* dX = grad_of(self, 0);
        if (!dX) return;
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = self.value.data() + r * cols;
          const double* g = self.grad.data() + r * cols;
          double g_mean = 0.0, gy_mean = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            g_mean += g[c];
            gy_mean += g[c] * y[c];
          }
          g_mean /= n;
          gy_mean /= n;
          for (std::size_t c = 0; c < cols; ++c)
            dX[r * cols + c] += inv_std[r] * (g[c] - g_mean - y[c] * gy_mean);
        }
      });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  std::vector<double> out(x.size());
  const auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * v[i] * (1.0 + std::erf(v[i] * inv_sqrt2));
  return make_result("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
    double* dX = grad_of(self, 0);
    if (!dX) return;
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    const double* X = self.parents[0]->value.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(X[i] * inv_sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * X[i] * X[i]);
      dX[i] += self.grad[i] * (cdf + X[i] * pdf);
    }
  });
}

Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64* rng) {
  if (p < 0.0 || p >= 1.0) throw DimensionError("dropout", "p must be in [0,1)");
  if (!train || p == 0.0) return x;
  if (!rng) throw std::invalid_argument("dropout: training mode needs an rng");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = uniform01(*rng) < p ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  const auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * mask[i];
  return make_result("dropout", x.shape(), std::move(out), {x},
                     [mask = std::move(mask)](Node& self) {
                       double* dX = grad_of(self, 0);
                       if (!dX) return;
                       for (std::size_t i = 0; i < mask.size(); ++i)
                         dX[i] += self.grad[i] * mask[i];
                     });
}

Tensor causal_mask_fill(const Tensor& scores, double fill) {
  require_matrix("causal_mask_fill", scores);
  const std::size_t n = scores.rows(), m = scores.cols();
  if (n != m) throw DimensionError("causal_mask_fill", "scores must be square");
  std::vector<double> out(scores.values().begin(), scores.values().end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out[i * n + j] = fill;
  return make_result("causal_mask_fill", scores.shape(), std::move(out),
                     {scores}, [n](Node& self) {
                       double* dS = grad_of(self, 0);
                       if (!dS) return;
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j <= i; ++j)
                           dS[i * n + j] += self.grad[i * n + j];
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const std::uint8_t> mask, Reduction reduction) {
  require_matrix("cross_entropy", logits);
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (targets.size() != rows || mask.size() != rows) {
    throw DimensionError("cross_entropy",
                         "targets/mask length must equal logit rows (" +
                             std::to_string(rows) + ")");
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!msk[r]) continue;
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= cols)
      throw DimensionError("cross_entropy", "target id out of range");
    ++count;
  }
  if (reduction == Reduction::mean && count == 0)
    throw std::invalid_argument("cross_entropy: no unmasked rows");
  const auto v = logits.values();
  std::vector<double> lse(rows, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!msk[r]) continue;
    const double* x = v.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    lse[r] = mx + std::log(z);
    total += lse[r] - x[tgt[r]];
  }
  const double norm =
      reduction == Reduction::mean ? 1.0 / static_cast<double>(count) : 1.0;
  return make_result(
      "cross_entropy", Shape{}, {total * norm}, {logits},
      [rows, cols, norm, tgt = std::move(tgt), msk = std::move(msk),
       lse = std::move(lse)](Node& self) {
        double* dL = grad_of(self, 0);
        if (!dL) return;
        const double g = self.grad[0] * norm;
        const double* X = self.parents[0]->value.data();
        for (std::size_t r = 0; r < rows; ++r) {
          if (!msk[r]) continue;
          for (std::size_t c = 0; c < cols; ++c)
            dL[r * cols + c] += g * std::exp(X[r * cols + c] - lse[r]);
          dL[r * cols + static_cast<std::size_t>(tgt[r])] -= g;
        }
      });
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw DimensionError("backward", "loss must be a scalar");
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // Post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace affdec
