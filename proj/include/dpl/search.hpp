// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bilevel search: per batch pair, one descent step on both alpha matrices
// from the validation loss, then one descent step on every candidate prompt
// from the training loss (first-order alternation).

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dpl/data.hpp"
#include "dpl/metrics.hpp"
#include "dpl/supprompt.hpp"

namespace dpl {

struct SearchConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 4;
  double lr_alpha = 3.5e-3;
  double lr_prompts = 3.5e-3;
  std::uint64_t seed = 0;
  DominanceConfig dominance;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  Tensor alpha_text;      // snapshots
  Tensor alpha_image;
  double alpha_diff_text = 0.0;
  double alpha_diff_image = 0.0;
  std::size_t dominants_text = 0;
  std::size_t dominants_image = 0;
  double train_loss = 0.0;  // mean over the epoch's steps
  double val_loss = 0.0;
};

struct SearchTrace {
  std::vector<EpochRecord> epochs;
};

enum class UpdateTarget { kAlpha, kPrompts };
enum class SplitKind { kSearchTrain, kSearchVal };

// Emitted after every parameter update; lets callers audit which split fed
// which gradient.
struct UpdateEvent {
  UpdateTarget target;
  SplitKind source;
  std::vector<std::size_t> samples;  // indices into FewShotTask::train
};
using SearchObserver = std::function<void(const UpdateEvent&)>;

struct SearchState {
  Supprompt supprompt;
  std::size_t steps = 0;
};

SearchState init_search_state(const Model& model, const SearchSpace& space, const SearchConfig& cfg);

struct StepLosses {
  double val_loss = 0.0;
  double train_loss = 0.0;
};

StepLosses search_step(SearchState& state, const Model& model, const TaskInputs& inputs,
                       std::span<const std::size_t> train_batch, std::span<const std::size_t> val_batch,
                       const SearchConfig& cfg, const SearchObserver& observer = {});

struct SearchResult {
  PromptConfiguration config;
  SearchTrace trace;
  Supprompt supprompt;
};

SearchResult run_search(const Model& model, const FewShotTask& task, const SearchSpace& space,
                        const SearchConfig& cfg, const SearchObserver& observer = {});

}  // namespace dpl
