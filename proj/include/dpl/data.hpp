// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic few-shot classification tasks with an optional planted prompt
// configuration, plus the splitting and batching used by search and training.

#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dpl/autodiff.hpp"
#include "dpl/encoder.hpp"
#include "dpl/supprompt.hpp"

namespace dpl {

struct Sample {
  Tensor patches;  // content_len x d_img
  std::size_t label = 0;
};

// A ground-truth configuration. Labels are assigned by a teacher: the frozen
// model carrying random prompts of exactly these lengths at these layers, so
// the label signal lives where the planted prompts attach.
struct PlantedSpec {
  PromptConfiguration config;
  // Samples are kept only when the teacher's top class beats the runner-up by
  // at least this much probability.
  double margin = 0.2;
};

struct TaskParams {
  std::size_t num_labels = 4;
  std::size_t shots = 16;
  std::size_t test_per_label = 32;
  std::uint64_t seed = 0;
  double noise = 0.6;
  std::optional<PlantedSpec> planted;
  // Planted tasks: zero-shot test accuracy must not exceed this.
  double max_zero_shot_acc = 0.8;
  // Planted tasks: the planted configuration must reach this test accuracy.
  double min_planted_acc = 0.9;
  std::size_t max_retries = 10;
  // Training budget used when verifying a planted task.
  std::size_t verify_epochs = 40;
  double verify_lr = 3.5e-3;
  // Lets odd (including single) shot counts reuse search-train as search-val.
  bool reuse_train_as_val = false;

  void validate() const;
};

struct PlantedVerification {
  double zero_shot_acc = 0.0;
  double planted_acc = 0.0;
  std::size_t attempts = 0;
};

struct FewShotTask {
  TaskParams params;
  std::size_t text_content_len = 0;
  std::size_t text_dim = 0;
  std::size_t image_patches = 0;
  std::size_t image_dim = 0;
  std::vector<Tensor> prototypes;   // per label, image_patches x image_dim
  std::vector<Tensor> text_tokens;  // per label, text_content_len x text_dim
  std::vector<Sample> train;        // label-major: shots per label
  std::vector<Sample> test;
  std::optional<PlantedVerification> verification;

  std::size_t num_labels() const { return params.num_labels; }
  std::uint64_t checksum() const;
};

// Frozen-model inputs for every sample, assembled once.
struct TaskInputs {
  std::vector<Tensor> text;  // per label, seq_len x d_txt
  std::vector<Tensor> train;
  std::vector<Tensor> test;
  std::vector<std::size_t> train_labels;
  std::vector<std::size_t> test_labels;
};

TaskInputs assemble_task(const Model& model, const FewShotTask& task);

// Throws ContractError on invalid parameters (odd shots without the reuse
// flag, fewer than two labels) and GenerationError when a planted task
// cannot be verified within params.max_retries attempts.
FewShotTask generate_task(const Model& model, const TaskParams& params);

// A planted configuration with a non-zero length at every layer, drawn
// uniformly per layer. Zero lengths are left out on purpose: an extra prompt
// never raises the trained validation loss, so a planted 0 cannot be the
// optimum.
PromptConfiguration draw_planted_config(const ModelConfig& model, const SearchSpace& space, std::uint64_t seed);

struct SearchSplit {
  std::vector<std::size_t> train;  // indices into FewShotTask::train
  std::vector<std::size_t> val;
};

// Per label, even-positioned shots go to search-train, odd ones to search-val.
SearchSplit split_for_search(const FewShotTask& task);

std::uint64_t epoch_key(std::uint64_t task_seed, std::uint64_t epoch, std::uint64_t stream);

// Deterministic shuffle keyed by `epoch_seed`, chunked into batches; the final
// partial batch is kept.
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> split,
                                                   std::size_t batch_size, std::uint64_t epoch_seed);

}  // namespace dpl
