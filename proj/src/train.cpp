// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "dpl/train.hpp"

#include <algorithm>

#include "dpl/error.hpp"

namespace dpl {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ContractError("train batch size must be >= 1");
  if (!(lr >= 0.0)) throw ContractError("train learning rate must be non-negative");
  if (!(lambda >= 0.0)) throw ContractError("distillation weight lambda must be >= 0");
}

std::vector<Tensor> TrainedPrompts::parameters() const {
  std::vector<Tensor> out;
  for (const auto* branch : {&text, &image})
    for (const auto& p : *branch)
      if (p.defined()) out.push_back(p);
  return out;
}

std::size_t TrainedPrompts::num_params() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

TrainedPrompts init_trained_prompts(const PromptConfiguration& config, const ModelConfig& model,
                                    std::mt19937_64& rng) {
  if (config.text.size() != model.text.depth || config.image.size() != model.image.depth) {
    throw ContractError("prompt configuration depths do not match the model");
  }
  std::normal_distribution<double> dist(0.0, kPromptInitStd);
  TrainedPrompts tp;
  tp.config = config;
  auto fill = [&](const std::vector<std::size_t>& lengths, std::size_t d, std::vector<Tensor>& out) {
    out.resize(lengths.size());
    for (std::size_t l = 0; l < lengths.size(); ++l) {
      if (lengths[l] == 0) continue;
      std::vector<double> v(lengths[l] * d);
      for (double& x : v) x = dist(rng);
      out[l] = Tensor::matrix(lengths[l], d, std::move(v), true);
    }
  };
  fill(config.text, model.text.hidden_dim, tp.text);
  fill(config.image, model.image.hidden_dim, tp.image);
  return tp;
}

namespace {

std::vector<Tensor> no_prompts(std::size_t depth) { return std::vector<Tensor>(depth); }

Tensor encode_texts(Tape& tape, const Model& model, std::span<const Tensor> text_inputs,
                    const TrainedPrompts* prompts) {
  const auto empty = no_prompts(model.text.cfg.depth);
  std::span<const Tensor> p = prompts ? std::span<const Tensor>(prompts->text) : std::span<const Tensor>(empty);
  std::vector<Tensor> embs;
  embs.reserve(text_inputs.size());
  for (const auto& x : text_inputs) embs.push_back(encode_branch(tape, model.text, x, p, model.cfg.ln_eps));
  return ad::stack_rows(tape, embs);
}

Tensor predict_with_texts(Tape& tape, const Model& model, std::span<const Tensor> image_inputs,
                          const Tensor& text_embs, const TrainedPrompts* prompts) {
  const auto empty = no_prompts(model.image.cfg.depth);
  std::span<const Tensor> p =
      prompts ? std::span<const Tensor>(prompts->image) : std::span<const Tensor>(empty);
  std::vector<Tensor> embs;
  embs.reserve(image_inputs.size());
  for (const auto& x : image_inputs) embs.push_back(encode_branch(tape, model.image, x, p, model.cfg.ln_eps));
  return class_probabilities(tape, ad::stack_rows(tape, embs), text_embs, model.cfg.tau);
}

bool has_text_prompts(const TrainedPrompts& tp) {
  return std::any_of(tp.text.begin(), tp.text.end(), [](const Tensor& t) { return t.defined(); });
}

std::vector<Tensor> gather(std::span<const Tensor> all, std::span<const std::size_t> idx) {
  std::vector<Tensor> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

std::vector<std::size_t> gather_labels(std::span<const std::size_t> all, std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> idx) {
  const std::size_t c = m.cols();
  std::vector<double> v;
  v.reserve(idx.size() * c);
  for (auto i : idx)
    for (std::size_t j = 0; j < c; ++j) v.push_back(m.at(i, j));
  return Tensor::matrix(idx.size(), c, std::move(v));
}

}  // namespace

Tensor predict(Tape& tape, const Model& model, std::span<const Tensor> image_inputs,
               std::span<const Tensor> text_inputs, const TrainedPrompts* prompts) {
  Tensor text_embs = encode_texts(tape, model, text_inputs, prompts);
  return predict_with_texts(tape, model, image_inputs, text_embs, prompts);
}

Tensor zero_shot_predict(const Model& model, std::span<const Tensor> image_inputs,
                         std::span<const Tensor> text_inputs) {
  Tape tape;
  Tensor out = predict(tape, model, image_inputs, text_inputs, nullptr);
  if (tape.size() != 0) throw ContractError("zero-shot prediction recorded gradient state");
  return out;
}

Tensor total_loss(Tape& tape, const Tensor& pred, std::span<const std::size_t> labels,
                  const Tensor& teacher, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("distillation weight lambda must be >= 0");
  Tensor ce = ad::cross_entropy(tape, pred, labels);
  Tensor kl = ad::kl_divergence(tape, teacher, pred);
  return ad::add(tape, ce, ad::scale(tape, kl, lambda));
}

double accuracy(const Tensor& probs, std::span<const std::size_t> labels) {
  const std::size_t b = probs.rows(), c = probs.cols();
  if (b == 0 || labels.size() != b) throw ContractError("accuracy needs one label per non-empty row");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(b);
}

double evaluate(const Model& model, const TaskInputs& inputs, const TrainedPrompts* prompts) {
  if (inputs.test.empty()) throw ContractError("evaluation needs a non-empty test split");
  constexpr std::size_t kChunk = 64;
  Tensor text_embs;
  {
    Tape tape;
    text_embs = encode_texts(tape, model, inputs.text, prompts);
  }
  std::size_t correct = 0;
  for (std::size_t start = 0; start < inputs.test.size(); start += kChunk) {
    const std::size_t end = std::min(start + kChunk, inputs.test.size());
    Tape tape;
    Tensor probs = predict_with_texts(
        tape, model, std::span<const Tensor>(inputs.test).subspan(start, end - start), text_embs, prompts);
    auto labels = std::span<const std::size_t>(inputs.test_labels).subspan(start, end - start);
    correct += static_cast<std::size_t>(accuracy(probs, labels) * static_cast<double>(end - start) + 0.5);
  }
  return static_cast<double>(correct) / static_cast<double>(inputs.test.size());
}

double evaluate(const Model& model, const FewShotTask& task, const TrainedPrompts* prompts) {
  return evaluate(model, assemble_task(model, task), prompts);
}

TrainResult train_subprompt(const Model& model, const FewShotTask& task, const PromptConfiguration& config,
                            const TrainConfig& cfg, const TrainObserver& observer) {
  const TaskInputs inputs = assemble_task(model, task);
  std::vector<std::size_t> all(inputs.train.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return train_subprompt(model, inputs, all, task.params.seed, config, cfg, observer);
}

double mean_loss(const Model& model, const TaskInputs& inputs, std::span<const std::size_t> subset,
                 const TrainedPrompts* prompts) {
  if (subset.empty()) throw ContractError("mean_loss needs a non-empty subset");
  Tape tape;
  Tensor texts = encode_texts(tape, model, inputs.text, prompts);
  Tensor pred = predict_with_texts(tape, model, gather(inputs.train, subset), texts, prompts);
  return ad::cross_entropy(tape, pred, gather_labels(inputs.train_labels, subset))[0];
}

TrainResult train_subprompt(const Model& model, const TaskInputs& full, std::span<const std::size_t> subset,
                            std::uint64_t data_seed, const PromptConfiguration& config, const TrainConfig& cfg,
                            const TrainObserver& observer) {
  cfg.validate();
  if (config.text.size() != model.cfg.text.depth || config.image.size() != model.cfg.image.depth) {
    throw ContractError("prompt configuration depths do not match the model");
  }
  if (subset.empty()) throw ContractError("training needs a non-empty train split");
  TaskInputs inputs;
  inputs.text = full.text;
  inputs.train = gather(full.train, subset);
  inputs.train_labels = gather_labels(full.train_labels, subset);
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  result.prompts = init_trained_prompts(config, model.cfg, rng);
  TrainedPrompts& tp = result.prompts;
  auto params = tp.parameters();
  const bool distill = cfg.uses_distillation();
  const bool text_trainable = has_text_prompts(tp);

  Tensor frozen_text_embs;
  if (!text_trainable) {
    Tape tape;
    frozen_text_embs = encode_texts(tape, model, inputs.text, &tp);
  }
  Tensor teacher_all;
  if (distill) teacher_all = zero_shot_predict(model, inputs.train, inputs.text);

  std::vector<std::size_t> all(inputs.train.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  // L_total over the whole training set without touching any gradient.
  auto full_loss = [&]() {
    Tape tape;
    Tensor texts = text_trainable ? encode_texts(tape, model, inputs.text, &tp) : frozen_text_embs;
    Tensor pred = predict_with_texts(tape, model, inputs.train, texts, &tp);
    Tensor loss = distill ? total_loss(tape, pred, inputs.train_labels, teacher_all, cfg.lambda)
                          : ad::cross_entropy(tape, pred, inputs.train_labels);
    return loss[0];
  };
  result.initial_loss = full_loss();

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = make_batches(all, cfg.batch_size, epoch_key(data_seed, epoch, 2));
    double sum = 0.0;
    for (const auto& batch : batches) {
      Tape tape;
      auto images = gather(inputs.train, batch);
      auto labels = gather_labels(inputs.train_labels, batch);
      Tensor texts = text_trainable ? encode_texts(tape, model, inputs.text, &tp) : frozen_text_embs;
      Tensor pred = predict_with_texts(tape, model, images, texts, &tp);
      TrainStepEvent ev;
      ev.epoch = epoch;
      ev.step = step;
      for (auto i : batch) ev.samples.push_back(subset[i]);
      Tensor loss;
      if (distill) {
        ev.teacher = gather_rows(teacher_all, batch);
        Tensor ce = ad::cross_entropy(tape, pred, labels);
        Tensor kl = ad::kl_divergence(tape, ev.teacher, pred);
        loss = ad::add(tape, ce, ad::scale(tape, kl, cfg.lambda));
        ev.cross_entropy = ce[0];
        ev.kl = kl[0];
      } else {
        loss = ad::cross_entropy(tape, pred, labels);
        ev.cross_entropy = loss[0];
      }
      ev.total = loss[0];
      sum += loss[0];
      if (!params.empty()) {
        tape.backward(loss);
        ad::sgd_step(params, ad::SgdConfig{cfg.lr});
      }
      if (observer) observer(ev);
      ++step;
    }
    result.epoch_loss.push_back(sum / static_cast<double>(batches.size()));
  }
  result.final_loss = full_loss();
  return result;
}

PromptConfiguration shallow_configuration(const ModelConfig& model, std::size_t length) {
  PromptConfiguration cfg;
  cfg.text.assign(model.text.depth, 0);
  cfg.image.assign(model.image.depth, 0);
  cfg.text[0] = length;
  cfg.image[0] = length;
  cfg.space = {0, length};
  return cfg;
}

ShallowResult shallow_baseline(const Model& model, const FewShotTask& task, const TrainConfig& cfg) {
  const auto config = shallow_configuration(model.cfg);
  TrainResult tr = train_subprompt(model, task, config, cfg);
  return {evaluate(model, task, &tr.prompts), tr.prompts.num_params()};
}

}  // namespace dpl
