// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Convergence and confidence diagnostics over alpha matrices. All functions
// are pure; the softmax is taken row-wise.

#pragma once

#include <vector>

#include "dpl/autodiff.hpp"

namespace dpl {

struct DominanceConfig {
  // Minimum softmax gap beta_max - beta_j that counts as a dominant pair.
  double delta = 0.3;
  // Relative margin below which the top two raw logits count as fragile.
  double epsilon = 0.05;

  void validate() const;
};

double alpha_difference(const ad::Tensor& alpha);
std::size_t num_dominants(const ad::Tensor& alpha, const DominanceConfig& cfg = {});
bool is_single_dominant(const ad::Tensor& alpha, const DominanceConfig& cfg = {});
std::vector<std::size_t> fragile_rows(const ad::Tensor& alpha, double epsilon);

}  // namespace dpl
