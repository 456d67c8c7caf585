// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training stage: fresh prompts of the searched lengths are fitted with
// L_total = cross_entropy + lambda * KL(zero_shot || prediction), the frozen
// zero-shot model acting as the distillation teacher.

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dpl/data.hpp"
#include "dpl/supprompt.hpp"

namespace dpl {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 4;
  double lr = 3.5e-3;
  double lambda = 0.0;
  // Route the loss through the distillation path even when lambda == 0.
  bool distill = false;
  std::uint64_t seed = 0;

  bool uses_distillation() const { return distill || lambda > 0.0; }
  void validate() const;
};

// One prompt per layer and branch; undefined where the length is 0.
struct TrainedPrompts {
  PromptConfiguration config;
  std::vector<Tensor> text;
  std::vector<Tensor> image;

  std::vector<Tensor> parameters() const;
  std::size_t num_params() const;
};

TrainedPrompts init_trained_prompts(const PromptConfiguration& config, const ModelConfig& model,
                                    std::mt19937_64& rng);

// Class probabilities (b x C) for the given image inputs under optional prompts.
Tensor predict(Tape& tape, const Model& model, std::span<const Tensor> image_inputs,
               std::span<const Tensor> text_inputs, const TrainedPrompts* prompts);

// Prompt-free prediction; never recorded on a tape.
Tensor zero_shot_predict(const Model& model, std::span<const Tensor> image_inputs,
                         std::span<const Tensor> text_inputs);

Tensor total_loss(Tape& tape, const Tensor& pred, std::span<const std::size_t> labels,
                  const Tensor& teacher, double lambda);

struct TrainStepEvent {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::vector<std::size_t> samples;
  double cross_entropy = 0.0;
  double kl = 0.0;  // 0 on the vanilla path
  double total = 0.0;
  Tensor teacher;   // undefined on the vanilla path
};
using TrainObserver = std::function<void(const TrainStepEvent&)>;

struct TrainResult {
  TrainedPrompts prompts;
  std::vector<double> epoch_loss;  // mean L_total per epoch
  double initial_loss = 0.0;       // full-train-set L_total before the first step
  double final_loss = 0.0;         // and after the last
};

TrainResult train_subprompt(const Model& model, const FewShotTask& task, const PromptConfiguration& config,
                            const TrainConfig& cfg, const TrainObserver& observer = {});

// Same, restricted to `subset` (indices into inputs.train); batches are keyed
// by `data_seed`.
TrainResult train_subprompt(const Model& model, const TaskInputs& inputs, std::span<const std::size_t> subset,
                            std::uint64_t data_seed, const PromptConfiguration& config, const TrainConfig& cfg,
                            const TrainObserver& observer = {});

// Mean cross-entropy of the prompted model over inputs.train[subset].
double mean_loss(const Model& model, const TaskInputs& inputs, std::span<const std::size_t> subset,
                 const TrainedPrompts* prompts);

// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Tensor& probs, std::span<const std::size_t> labels);

// Test-split accuracy; `prompts` may be null for the zero-shot model.
double evaluate(const Model& model, const FewShotTask& task, const TrainedPrompts* prompts);
double evaluate(const Model& model, const TaskInputs& inputs, const TrainedPrompts* prompts);

inline constexpr std::size_t kShallowLength = 16;

// Length-16 prompt at layer 1 only, in both branches.
PromptConfiguration shallow_configuration(const ModelConfig& model, std::size_t length = kShallowLength);

struct ShallowResult {
  double accuracy = 0.0;
  std::size_t num_params = 0;
};
ShallowResult shallow_baseline(const Model& model, const FewShotTask& task, const TrainConfig& cfg);

}  // namespace dpl
