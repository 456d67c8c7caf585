// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "dpl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "dpl/error.hpp"

namespace dpl::ad {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto data = std::make_shared<TensorData>();
  data->value.assign(shape_size(shape), 0.0);
  data->shape = std::move(shape);
  data->requires_grad = requires_grad;
  return Tensor(std::move(data));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto data = std::make_shared<TensorData>();
  data->shape = std::move(shape);
  data->value = std::move(values);
  data->requires_grad = requires_grad;
  return Tensor(std::move(data));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return from({rows, cols}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const {
  return data_->shape.size() >= 2 ? data_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  return data_->shape.empty() ? 1 : data_->shape.back();
}

std::span<double> Tensor::grad_slot() const {
  if (data_->grad.size() != data_->value.size()) data_->grad.assign(data_->value.size(), 0.0);
  return data_->grad;
}

void Tensor::zero_grad() const {
  std::fill(data_->grad.begin(), data_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return from(data_->shape, data_->value, data_->requires_grad);
}

// ---- Tape -------------------------------------------------------------------

void Tape::record(std::function<void()> backward_fn) {
  entries_.push_back(std::move(backward_fn));
}

void Tape::backward(Tensor loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward called on a loss that is not on the tape");
  }
  loss.grad_slot()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  for (auto* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " expects a matrix, got " + shape_to_string(t.shape()));
  }
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

Tensor make_output(Shape shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

}  // namespace

// ---- operations -------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul inner dimensions differ: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Tensor out = make_output({m, n}, any_requires_grad({&a, &b}));
  gemm_nn(m, k, n, a.values().data(), b.values().data(), out.mutable_values().data());
  if (out.requires_grad()) {
    tape.record([a, b, out, m, k, n]() mutable {
      if (out.grad().empty()) return;
      const double* g = out.grad().data();
      if (a.requires_grad()) gemm_nt(m, n, k, g, b.values().data(), a.grad_slot().data());
      if (b.requires_grad()) gemm_tn(m, k, n, a.values().data(), g, b.grad_slot().data());
    });
  }
  return out;
}

Tensor matmul_bt(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_bt");
  require_matrix(b, "matmul_bt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_bt inner dimensions differ: " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()) + "^T");
  }
  Tensor out = make_output({m, n}, any_requires_grad({&a, &b}));
  gemm_nt(m, k, n, a.values().data(), b.values().data(), out.mutable_values().data());
  if (out.requires_grad()) {
    tape.record([a, b, out, m, k, n]() mutable {
      if (out.grad().empty()) return;
      const double* g = out.grad().data();
      if (a.requires_grad()) gemm_nn(m, n, k, g, b.values().data(), a.grad_slot().data());
      if (b.requires_grad()) gemm_tn(m, n, k, g, a.values().data(), b.grad_slot().data());
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add shape mismatch: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  Tensor out = make_output(a.shape(), any_requires_grad({&a, &b}));
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_slot();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_slot();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * factor;
  if (out.requires_grad()) {
    tape.record([a, out, factor]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      auto ga = a.grad_slot();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor add_row_vector(Tape& tape, const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_row_vector");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.size() != n) {
    throw DimensionError("add_row_vector: bias " + shape_to_string(bias.shape()) +
                         " does not match rows of " + shape_to_string(a.shape()));
  }
  Tensor out = make_output(a.shape(), any_requires_grad({&a, &bias}));
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = a[i * n + j] + bias[j];
  if (out.requires_grad()) {
    tape.record([a, bias, out, m, n]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_slot();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_slot();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_rows");
  require_matrix(b, "concat_rows");
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows width mismatch: " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const std::size_t na = a.size();
  Tensor out = make_output({a.rows() + b.rows(), a.cols()}, any_requires_grad({&a, &b}));
  auto o = out.mutable_values();
  std::copy(a.values().begin(), a.values().end(), o.begin());
  std::copy(b.values().begin(), b.values().end(), o.begin() + static_cast<std::ptrdiff_t>(na));
  if (out.requires_grad()) {
    tape.record([a, b, out, na]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_slot();
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_slot();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
      }
    });
  }
  return out;
}

Tensor row(Tape& tape, const Tensor& a, std::size_t r) {
  if (r >= a.rows()) {
    throw IndexError("row " + std::to_string(r) + " out of range for " + shape_to_string(a.shape()));
  }
  const std::size_t n = a.cols();
  Tensor out = make_output({1, n}, a.requires_grad());
  auto o = out.mutable_values();
  for (std::size_t j = 0; j < n; ++j) o[j] = a[r * n + j];
  if (out.requires_grad()) {
    tape.record([a, out, r, n]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      auto ga = a.grad_slot();
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += g[j];
    });
  }
  return out;
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> rows) {
  if (rows.empty()) throw ContractError("stack_rows needs at least one row");
  const std::size_t n = rows.front().size();
  bool rg = false;
  for (const auto& r : rows) {
    if (r.size() != n) {
      throw DimensionError("stack_rows: row of shape " + shape_to_string(r.shape()) +
                           " does not match width " + std::to_string(n));
    }
    rg = rg || r.requires_grad();
  }
  Tensor out = make_output({rows.size(), n}, rg);
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].values().begin(), rows[i].values().end(), o.begin() + static_cast<std::ptrdiff_t>(i * n));
  if (rg) {
    std::vector<Tensor> parts(rows.begin(), rows.end());
    tape.record([parts, out, n]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!parts[i].requires_grad()) continue;
        auto gp = parts[i].grad_slot();
        for (std::size_t j = 0; j < n; ++j) gp[j] += g[i * n + j];
      }
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = make_output(a.shape(), a.requires_grad());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.values().data() + i * n;
    double* oi = o.data() + i * n;
    double mx = ai[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, ai[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      oi[j] = std::exp(ai[j] - mx);
      z += oi[j];
    }
    for (std::size_t j = 0; j < n; ++j) oi[j] /= z;
  }
  if (out.requires_grad()) {
    tape.record([a, out, m, n]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      auto y = out.values();
      auto ga = a.grad_slot();
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y[i * n + j] * (g[i * n + j] - s);
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm requires eps > 0");
  const std::size_t m = a.rows(), n = a.cols();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_to_string(gain.shape()) + "/" +
                         shape_to_string(bias.shape()) + " do not match " + shape_to_string(a.shape()));
  }
  Tensor out = make_output(a.shape(), any_requires_grad({&a, &gain, &bias}));
  std::vector<double> xhat(a.size());
  std::vector<double> inv_std(m);
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.values().data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += ai[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (ai[j] - mean) * (ai[j] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (ai[j] - mean) * inv;
      xhat[i * n + j] = xh;
      o[i * n + j] = gain[j] * xh + bias[j];
    }
  }
  if (out.requires_grad()) {
    tape.record([a, gain, bias, out, m, n, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      if (gain.requires_grad()) {
        auto gg = gain.grad_slot();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_slot();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
      if (a.requires_grad()) {
        auto ga = a.grad_slot();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[i * n + j] * gain[j];
            mean_d += d;
            mean_dx += d * xhat[i * n + j];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[i * n + j] * gain[j];
            ga[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
          }
        }
      }
    });
  }
  return out;
}

Tensor quick_gelu(Tape& tape, const Tensor& a) {
  constexpr double k = 1.702;
  Tensor out = make_output(a.shape(), a.requires_grad());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] / (1.0 + std::exp(-k * a[i]));
  if (out.requires_grad()) {
    tape.record([a, out]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      auto ga = a.grad_slot();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = a[i];
        const double s = 1.0 / (1.0 + std::exp(-k * x));
        ga[i] += g[i] * (s + k * x * s * (1.0 - s));
      }
    });
  }
  return out;
}

Tensor l2_normalize_rows(Tape& tape, const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = make_output(a.shape(), a.requires_grad());
  std::vector<double> norms(m);
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * a[i * n + j];
    norms[i] = std::max(std::sqrt(s), kLogFloor);
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = a[i * n + j] / norms[i];
  }
  if (out.requires_grad()) {
    tape.record([a, out, m, n, norms = std::move(norms)]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      auto y = out.values();
      auto ga = a.grad_slot();
      for (std::size_t i = 0; i < m; ++i) {
        double yg = 0.0;
        for (std::size_t j = 0; j < n; ++j) yg += y[i * n + j] * g[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          ga[i * n + j] += (g[i * n + j] - y[i * n + j] * yg) / norms[i];
      }
    });
  }
  return out;
}

Tensor attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  const std::size_t nq = q.rows(), nk = k.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != nk) {
    throw DimensionError("attention: q " + shape_to_string(q.shape()) + ", k " +
                         shape_to_string(k.shape()) + ", v " + shape_to_string(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw ContractError("attention: " + std::to_string(heads) + " heads do not divide width " +
                        std::to_string(d));
  }
  if (nk == 0) throw ContractError("attention over an empty key set");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out = make_output({nq, d}, any_requires_grad({&q, &k, &v}));
  // probs laid out [head][nq][nk]
  std::vector<double> probs(heads * nq * nk);
  auto o = out.mutable_values();
  const double* qv = q.values().data();
  const double* kv = k.values().data();
  const double* vv = v.values().data();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < nq; ++i) {
      double* p = probs.data() + (h * nq + i) * nk;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < nk; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qv[i * d + off + c] * kv[j * d + off + c];
        p[j] = s * inv_sqrt;
        mx = std::max(mx, p[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      for (std::size_t j = 0; j < nk; ++j) p[j] /= z;
      double* oi = o.data() + i * d + off;
      for (std::size_t j = 0; j < nk; ++j) {
        const double pj = p[j];
        const double* vj = vv + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += pj * vj[c];
      }
    }
  }
  if (out.requires_grad()) {
    tape.record([q, k, v, out, nq, nk, d, heads, dh, inv_sqrt, probs = std::move(probs)]() mutable {
      if (out.grad().empty()) return;
      const double* g = out.grad().data();
      const double* qv = q.values().data();
      const double* kv = k.values().data();
      const double* vv = v.values().data();
      double* gq = q.requires_grad() ? q.grad_slot().data() : nullptr;
      double* gk = k.requires_grad() ? k.grad_slot().data() : nullptr;
      double* gv = v.requires_grad() ? v.grad_slot().data() : nullptr;
      std::vector<double> dp(nk);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < nq; ++i) {
          const double* p = probs.data() + (h * nq + i) * nk;
          const double* gi = g + i * d + off;
          double s = 0.0;
          for (std::size_t j = 0; j < nk; ++j) {
            double acc = 0.0;
            const double* vj = vv + j * d + off;
            for (std::size_t c = 0; c < dh; ++c) acc += gi[c] * vj[c];
            dp[j] = acc;
            s += acc * p[j];
            if (gv) {
              double* gvj = gv + j * d + off;
              for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * gi[c];
            }
          }
          for (std::size_t j = 0; j < nk; ++j) {
            const double ds = p[j] * (dp[j] - s) * inv_sqrt;
            if (ds == 0.0) continue;
            if (gq) {
              const double* kj = kv + j * d + off;
              double* gqi = gq + i * d + off;
              for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
            }
            if (gk) {
              const double* qi = qv + i * d + off;
              double* gkj = gk + j * d + off;
              for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor weighted_sum(Tape& tape, std::span<const Tensor> parts, const Tensor& weights) {
  if (parts.empty()) throw ContractError("weighted_sum needs at least one part");
  if (weights.size() != parts.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(parts.size()) + " parts but weights " +
                         shape_to_string(weights.shape()));
  }
  const Shape& shape = parts.front().shape();
  bool rg = weights.requires_grad();
  for (const auto& p : parts) {
    if (p.shape() != shape) {
      throw DimensionError("weighted_sum: part " + shape_to_string(p.shape()) + " differs from " +
                           shape_to_string(shape));
    }
    rg = rg || p.requires_grad();
  }
  Tensor out = make_output(shape, rg);
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double w = weights[i];
    auto pv = parts[i].values();
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += w * pv[j];
  }
  if (rg) {
    std::vector<Tensor> ps(parts.begin(), parts.end());
    tape.record([ps, weights, out]() mutable {
      if (out.grad().empty()) return;
      auto g = out.grad();
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps[i].requires_grad()) {
          auto gp = ps[i].grad_slot();
          const double w = weights[i];
          for (std::size_t j = 0; j < g.size(); ++j) gp[j] += w * g[j];
        }
      }
      if (weights.requires_grad()) {
        auto gw = weights.grad_slot();
        for (std::size_t i = 0; i < ps.size(); ++i) {
          auto pv = ps[i].values();
          double s = 0.0;
          for (std::size_t j = 0; j < g.size(); ++j) s += g[j] * pv[j];
          gw[i] += s;
        }
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  Tensor out = make_output({1}, a.requires_grad());
  double s = 0.0;
  for (double x : a.values()) s += x;
  out.mutable_values()[0] = s;
  if (out.requires_grad()) {
    tape.record([a, out]() mutable {
      if (out.grad().empty()) return;
      const double g = out.grad()[0];
      for (double& x : a.grad_slot()) x += g;
    });
  }
  return out;
}

Tensor dot(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot size mismatch: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  Tensor out = make_output({1}, any_requires_grad({&a, &b}));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  out.mutable_values()[0] = s;
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      if (out.grad().empty()) return;
      const double g = out.grad()[0];
      if (a.requires_grad()) {
        auto ga = a.grad_slot();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_slot();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * a[i];
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& probs, std::span<const std::size_t> labels) {
  const std::size_t b = probs.rows(), c = probs.cols();
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         shape_to_string(probs.shape()));
  }
  if (b == 0) throw ContractError("cross_entropy over an empty batch");
  for (auto y : labels) {
    if (y >= c) {
      throw IndexError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(c) + ")");
    }
  }
  Tensor out = make_output({1}, probs.requires_grad());
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) loss -= std::log(std::max(probs[i * c + labels[i]], kLogFloor));
  out.mutable_values()[0] = loss / static_cast<double>(b);
  if (out.requires_grad()) {
    std::vector<std::size_t> ys(labels.begin(), labels.end());
    tape.record([probs, out, b, c, ys]() mutable {
      if (out.grad().empty()) return;
      const double g = out.grad()[0] / static_cast<double>(b);
      auto gp = probs.grad_slot();
      for (std::size_t i = 0; i < b; ++i) {
        const double p = probs[i * c + ys[i]];
        if (p > kLogFloor) gp[i * c + ys[i]] -= g / p;
      }
    });
  }
  return out;
}

Tensor kl_divergence(Tape& tape, const Tensor& teacher, const Tensor& student) {
  if (teacher.shape() != student.shape()) {
    throw DimensionError("kl_divergence shape mismatch: teacher " + shape_to_string(teacher.shape()) +
                         " vs student " + shape_to_string(student.shape()));
  }
  const std::size_t b = student.rows(), c = student.cols();
  if (b == 0) throw ContractError("kl_divergence over an empty batch");
  Tensor out = make_output({1}, student.requires_grad());
  double loss = 0.0;
  for (std::size_t i = 0; i < b * c; ++i) {
    const double t = teacher[i];
    if (t <= 0.0) continue;
    loss += t * (std::log(std::max(t, kLogFloor)) - std::log(std::max(student[i], kLogFloor)));
  }
  out.mutable_values()[0] = loss / static_cast<double>(b);
  if (out.requires_grad()) {
    tape.record([teacher, student, out, b, c]() mutable {
      if (out.grad().empty()) return;
      const double g = out.grad()[0] / static_cast<double>(b);
      auto gs = student.grad_slot();
      for (std::size_t i = 0; i < b * c; ++i) {
        const double s = student[i];
        if (teacher[i] > 0.0 && s > kLogFloor) gs[i] -= g * teacher[i] / s;
      }
    });
  }
  return out;
}

// ---- optimisation -------------------------------------------------------------

void sgd_step(std::span<Tensor> params, const SgdConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ContractError("sgd learning rate must be finite and non-negative");
  }
  for (const auto& p : params) {
    if (!p.has_grad()) {
      throw ContractError("sgd_step: parameter of shape " + shape_to_string(p.shape()) +
                          " has no populated gradient");
    }
  }
  for (auto& p : params) {
    auto v = p.mutable_values();
    auto g = p.grad_slot();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.learning_rate * g[i];
    p.zero_grad();
  }
}

std::uint64_t checksum(std::span<const double> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char byte : bytes) {
      h ^= byte;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace dpl::ad
