// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test binaries: seeded tensors, a small model
// configuration and a central finite-difference gradient oracle.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dpl/autodiff.hpp"
#include "dpl/encoder.hpp"

namespace dpl::testing {

inline ad::Tensor random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double std = 1.0,
                                bool requires_grad = false) {
  std::normal_distribution<double> n(0.0, std);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return ad::Tensor::matrix(rows, cols, std::move(v), requires_grad);
}

// Random probability rows.
inline ad::Tensor random_probs(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  ad::Tape tape;
  return ad::softmax_rows(tape, random_tensor(rng, rows, cols, 2.0));
}

// Two layers, width 16, two heads. Short sequences keep finite differences
// cheap.
inline ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.text = {2, 16, 2, 5};
  cfg.image = {2, 16, 2, 5};
  cfg.embed_dim = 16;
  return cfg;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// entries whose true gradient is ~0 from dividing round-off by round-off.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares the tape gradient of `loss_fn` against central differences for
// every entry of every tensor in `params`.
inline GradCheck check_gradients(const std::function<ad::Tensor(ad::Tape&)>& loss_fn,
                                 const std::vector<ad::Tensor>& params, double step = 1e-5) {
  for (const auto& p : params) p.clear_grad();
  {
    ad::Tape tape;
    tape.backward(loss_fn(tape));
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
    if (analytic.back().empty()) analytic.back().assign(p.size(), 0.0);
  }
  auto eval = [&] {
    ad::Tape tape;
    return loss_fn(tape)[0];
  };
  GradCheck out;
  for (std::size_t t = 0; t < params.size(); ++t) {
    ad::Tensor p = params[t];
    auto v = p.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + step;
      const double up = eval();
      v[i] = keep - step;
      const double down = eval();
      v[i] = keep;
      const double numeric = (up - down) / (2.0 * step);
      out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[t][i], numeric));
      ++out.entries;
    }
  }
  return out;
}

inline double max_abs_diff(const ad::Tensor& a, const ad::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace dpl::testing
