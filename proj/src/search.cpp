// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "dpl/search.hpp"

#include <random>

#include "dpl/error.hpp"

namespace dpl {

void SearchConfig::validate() const {
  if (batch_size < 1) throw ContractError("search batch size must be >= 1");
  if (!(lr_alpha >= 0.0) || !(lr_prompts >= 0.0)) {
    throw ContractError("search learning rates must be non-negative");
  }
  dominance.validate();
}

SearchState init_search_state(const Model& model, const SearchSpace& space, const SearchConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  return SearchState{init_supprompt(model.cfg, space, rng), 0};
}

namespace {

double batch_loss_and_backward(const Model& model, const TaskInputs& inputs,
                               std::span<const std::size_t> batch, const Supprompt& sp) {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  images.reserve(batch.size());
  for (auto i : batch) {
    images.push_back(inputs.train.at(i));
    labels.push_back(inputs.train_labels.at(i));
  }
  Tape tape;
  Tensor probs = supprompt_forward(tape, model, images, inputs.text, sp);
  Tensor loss = ad::cross_entropy(tape, probs, labels);
  tape.backward(loss);
  return loss[0];
}

void clear_grads(std::span<Tensor> ts) {
  for (auto& t : ts) t.clear_grad();
}

}  // namespace

StepLosses search_step(SearchState& state, const Model& model, const TaskInputs& inputs,
                       std::span<const std::size_t> train_batch, std::span<const std::size_t> val_batch,
                       const SearchConfig& cfg, const SearchObserver& observer) {
  if (train_batch.empty() || val_batch.empty()) throw ContractError("search_step needs non-empty batches");
  auto alphas = state.supprompt.alphas();
  auto prompts = state.supprompt.prompt_tensors();
  StepLosses losses;

  // Upper level: alpha descends the validation loss.
  clear_grads(alphas);
  clear_grads(prompts);
  losses.val_loss = batch_loss_and_backward(model, inputs, val_batch, state.supprompt);
  ad::sgd_step(alphas, ad::SgdConfig{cfg.lr_alpha});
  clear_grads(prompts);
  if (observer) observer({UpdateTarget::kAlpha, SplitKind::kSearchVal, {val_batch.begin(), val_batch.end()}});

  // Lower level: prompts descend the training loss under the updated alpha.
  clear_grads(alphas);
  losses.train_loss = batch_loss_and_backward(model, inputs, train_batch, state.supprompt);
  ad::sgd_step(prompts, ad::SgdConfig{cfg.lr_prompts});
  clear_grads(alphas);
  if (observer) {
    observer({UpdateTarget::kPrompts, SplitKind::kSearchTrain, {train_batch.begin(), train_batch.end()}});
  }
  ++state.steps;
  return losses;
}

SearchResult run_search(const Model& model, const FewShotTask& task, const SearchSpace& space,
                        const SearchConfig& cfg, const SearchObserver& observer) {
  cfg.validate();
  const SearchSplit split = split_for_search(task);
  if (split.train.empty() || split.val.empty()) throw ContractError("search needs non-empty train and val splits");
  const TaskInputs inputs = assemble_task(model, task);
  SearchState state = init_search_state(model, space, cfg);
  SearchResult result;

  const std::uint64_t task_seed = task.params.seed;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto train_batches = make_batches(split.train, cfg.batch_size, epoch_key(task_seed, epoch, 0));
    auto val_batches = make_batches(split.val, cfg.batch_size, epoch_key(task_seed, epoch, 1));
    double train_sum = 0.0, val_sum = 0.0;
    for (std::size_t b = 0; b < train_batches.size(); ++b) {
      const auto& vb = val_batches[b % val_batches.size()];
      StepLosses l = search_step(state, model, inputs, train_batches[b], vb, cfg, observer);
      train_sum += l.train_loss;
      val_sum += l.val_loss;
    }
    const double n = static_cast<double>(train_batches.size());
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.alpha_text = state.supprompt.text.alpha.clone();
    rec.alpha_image = state.supprompt.image.alpha.clone();
    rec.alpha_text.set_requires_grad(false);
    rec.alpha_image.set_requires_grad(false);
    rec.alpha_diff_text = alpha_difference(rec.alpha_text);
    rec.alpha_diff_image = alpha_difference(rec.alpha_image);
    rec.dominants_text = num_dominants(rec.alpha_text, cfg.dominance);
    rec.dominants_image = num_dominants(rec.alpha_image, cfg.dominance);
    rec.train_loss = train_sum / n;
    rec.val_loss = val_sum / n;
    result.trace.epochs.push_back(std::move(rec));
  }
  result.config = extract_subprompt(state.supprompt.text.alpha, state.supprompt.image.alpha, space);
  result.supprompt = std::move(state.supprompt);
  return result;
}

}  // namespace dpl
