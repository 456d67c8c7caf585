// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "dpl/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dpl/error.hpp"
#include "dpl/supprompt.hpp"

namespace dpl {

void DominanceConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw ContractError("dominance delta must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ContractError("fragility epsilon must be > 0");
}

namespace {

std::vector<double> row_softmax(const ad::Tensor& alpha) {
  ad::Tape tape;
  ad::Tensor a = ad::Tensor::from(alpha.shape(), {alpha.values().begin(), alpha.values().end()});
  auto beta = ad::softmax_rows(tape, a);
  return {beta.values().begin(), beta.values().end()};
}

}  // namespace

double alpha_difference(const ad::Tensor& alpha) {
  const std::size_t rows = alpha.rows(), cols = alpha.cols();
  const auto beta = row_softmax(alpha);
  const auto top = argmax_rows(alpha);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double bk = beta[r * cols + top[r]];
    for (std::size_t j = 0; j < cols; ++j) total += std::abs(beta[r * cols + j] - bk);
  }
  return total;
}

std::size_t num_dominants(const ad::Tensor& alpha, const DominanceConfig& cfg) {
  cfg.validate();
  const std::size_t rows = alpha.rows(), cols = alpha.cols();
  const auto beta = row_softmax(alpha);
  const auto top = argmax_rows(alpha);
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double bk = beta[r * cols + top[r]];
    for (std::size_t j = 0; j < cols; ++j) {
      if (j != top[r] && bk - beta[r * cols + j] >= cfg.delta) ++count;
    }
  }
  return count;
}

bool is_single_dominant(const ad::Tensor& alpha, const DominanceConfig& cfg) {
  return num_dominants(alpha, cfg) == alpha.rows() * (alpha.cols() - 1);
}

std::vector<std::size_t> fragile_rows(const ad::Tensor& alpha, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractError("fragility epsilon must be > 0");
  const std::size_t rows = alpha.rows(), cols = alpha.cols();
  std::vector<std::size_t> out;
  if (cols < 2) return out;
  for (std::size_t r = 0; r < rows; ++r) {
    double first = -INFINITY, second = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = alpha.at(r, c);
      if (v > first) {
        second = first;
        first = v;
      } else if (v > second) {
        second = v;
      }
    }
    const double margin = epsilon * std::max({std::abs(first), std::abs(second), 1.0});
    if (first - second < margin) out.push_back(r);
  }
  return out;
}

}  // namespace dpl
