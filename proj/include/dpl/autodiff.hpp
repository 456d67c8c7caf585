// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode automatic differentiation over dense row-major
// tensors of doubles. Operations append a backward closure to an explicit
// Tape whenever one of their inputs requires a gradient; Tape::backward
// replays the closures in reverse order and accumulates into grad slots.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dpl::ad {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass reaches the tensor
  bool requires_grad = false;
};

// Shared handle; copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  std::size_t size() const { return data_->value.size(); }
  std::size_t rank() const { return data_->shape.size(); }
  // Leading and trailing extents of a rank-2 tensor; a rank-1 tensor of
  // length n is treated as 1 x n.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return data_->value; }
  std::span<double> mutable_values() { return data_->value; }
  double operator[](std::size_t i) const { return data_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return data_->value[r * cols() + c]; }

  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool on) { data_->requires_grad = on; }

  bool has_grad() const { return !data_->grad.empty() || data_->value.empty(); }
  std::span<const double> grad() const { return data_->grad; }
  // Allocates a zero-filled grad slot on first use.
  std::span<double> grad_slot() const;
  void zero_grad() const;
  void clear_grad() const { data_->grad.clear(); }

  // Independent copy of the values (no grad, requires_grad preserved).
  Tensor clone() const;

  const TensorData* id() const { return data_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorData> data) : data_(std::move(data)) {}
  std::shared_ptr<TensorData> data_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays every recorded closure in exact
  // reverse order. Throws ContractError for a non-scalar loss or one that
  // does not require a gradient.
  void backward(Tensor loss);

 private:
  std::vector<std::function<void()>> entries_;
};

// ---- differentiable operations -------------------------------------------

// [m x k] * [k x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// [m x k] * [n x k]^T
Tensor matmul_bt(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
// Adds the length-n vector `bias` to every row of an [m x n] tensor.
Tensor add_row_vector(Tape& tape, const Tensor& a, const Tensor& bias);
// Vertical concatenation [a; b]; either side may have zero rows.
Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b);
// Row r of an [m x n] tensor as a 1 x n tensor.
Tensor row(Tape& tape, const Tensor& a, std::size_t r);
// Stacks 1 x n tensors into an [m x n] tensor.
Tensor stack_rows(Tape& tape, std::span<const Tensor> rows);
Tensor softmax_rows(Tape& tape, const Tensor& a);
Tensor layer_norm(Tape& tape, const Tensor& a, const Tensor& gain, const Tensor& bias, double eps);
// x * sigmoid(1.702 x)
Tensor quick_gelu(Tape& tape, const Tensor& a);
Tensor l2_normalize_rows(Tape& tape, const Tensor& a);
// Multi-head scaled dot-product attention. q: [n_q x d], k and v: [n_kv x d].
// Heads split the feature axis evenly; scores are scaled by 1/sqrt(d/heads).
Tensor attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);
// sum_i weights[i] * parts[i]; parts share a shape, weights has parts.size()
// entries.
Tensor weighted_sum(Tape& tape, std::span<const Tensor> parts, const Tensor& weights);
Tensor sum(Tape& tape, const Tensor& a);
Tensor dot(Tape& tape, const Tensor& a, const Tensor& b);

// Probability floor applied before every logarithm in the losses.
inline constexpr double kLogFloor = 1e-12;

// Mean over rows of -log max(p[label], floor).
Tensor cross_entropy(Tape& tape, const Tensor& probs, std::span<const std::size_t> labels);
// Mean over rows of sum_c t log(t / s), both clamped at the floor. The
// teacher is treated as a constant.
Tensor kl_divergence(Tape& tape, const Tensor& teacher, const Tensor& student);

// ---- optimisation ----------------------------------------------------------

struct SgdConfig {
  double learning_rate = 3.5e-3;
};

// param <- param - lr * grad, then the grad is zeroed. Throws ContractError
// when a parameter has no populated grad or lr is negative.
void sgd_step(std::span<Tensor> params, const SgdConfig& cfg);

// FNV-1a over the raw bytes of the values; used for determinism checks.
std::uint64_t checksum(std::span<const double> values, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace dpl::ad
