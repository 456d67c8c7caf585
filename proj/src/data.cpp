// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "dpl/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dpl/error.hpp"
#include "dpl/train.hpp"

namespace dpl {

void TaskParams::validate() const {
  if (num_labels < 2) throw ContractError("a task needs at least two labels");
  if (shots < 1) throw ContractError("a task needs at least one shot per label");
  if (shots % 2 != 0 && !reuse_train_as_val) {
    throw ContractError("shots must be even so search-train and search-val split 50/50 (got " +
                        std::to_string(shots) + ")");
  }
  if (shots < 2 && !reuse_train_as_val) throw ContractError("shots must be >= 2");
  if (test_per_label < 1) throw ContractError("test split needs at least one sample per label");
  if (!(noise >= 0.0)) throw ContractError("noise must be non-negative");
  if (planted && !(planted->margin >= 0.0 && planted->margin < 1.0)) {
    throw ContractError("planted margin must lie in [0, 1)");
  }
}

std::uint64_t FewShotTask::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix(params.num_labels);
  mix(params.shots);
  mix(params.seed);
  mix(text_content_len);
  mix(text_dim);
  mix(image_patches);
  mix(image_dim);
  if (params.planted) {
    for (auto c : params.planted->config.text) mix(c);
    for (auto c : params.planted->config.image) mix(c);
  }
  for (const auto& t : prototypes) h = ad::checksum(t.values(), h);
  for (const auto& t : text_tokens) h = ad::checksum(t.values(), h);
  for (const auto* split : {&train, &test}) {
    for (const auto& s : *split) {
      h = ad::checksum(s.patches.values(), h);
      mix(s.label);
    }
  }
  return h;
}

TaskInputs assemble_task(const Model& model, const FewShotTask& task) {
  if (task.text_dim != model.cfg.text.hidden_dim || task.image_dim != model.cfg.image.hidden_dim ||
      task.text_content_len != model.text.content_len() || task.image_patches != model.image.content_len()) {
    throw DimensionError("task dimensions do not match the model");
  }
  Tape tape;
  TaskInputs in;
  for (const auto& t : task.text_tokens) in.text.push_back(assemble_input(tape, model.text, t));
  for (const auto& s : task.train) {
    in.train.push_back(assemble_input(tape, model.image, s.patches));
    in.train_labels.push_back(s.label);
  }
  for (const auto& s : task.test) {
    in.test.push_back(assemble_input(tape, model.image, s.patches));
    in.test_labels.push_back(s.label);
  }
  return in;
}

namespace {

Tensor gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor::matrix(rows, cols, std::move(v));
}

bool all_zero(const PromptConfiguration& cfg) {
  auto zero = [](std::size_t c) { return c == 0; };
  return std::all_of(cfg.text.begin(), cfg.text.end(), zero) &&
         std::all_of(cfg.image.begin(), cfg.image.end(), zero);
}

struct Verdict {
  std::size_t label = 0;
  double margin = 0.0;
};

constexpr std::size_t kCandidateBatch = 32;
constexpr std::size_t kClimbSteps = 200;
constexpr double kClimbStep = 1.0;
constexpr double kPrototypeMargin = 0.95;
constexpr std::size_t kMaxSampleDrawFactor = 64;

// One frozen model under a fixed prompt set (none = zero-shot), with the class
// text embeddings precomputed.
class Judge {
 public:
  Judge(const Model& model, std::span<const Tensor> text_inputs, const TrainedPrompts* prompts)
      : model_(model), image_prompts_(model.image.cfg.depth) {
    std::vector<Tensor> text_prompts(model.text.cfg.depth);
    if (prompts) {
      text_prompts = prompts->text;
      image_prompts_ = prompts->image;
    }
    Tape tape;
    std::vector<Tensor> embs;
    for (const auto& x : text_inputs)
      embs.push_back(encode_branch(tape, model.text, x, text_prompts, model.cfg.ln_eps));
    text_embs_ = ad::stack_rows(tape, embs);
  }

  Tensor probabilities(Tape& tape, std::span<const Tensor> patches) const {
    std::vector<Tensor> embs;
    for (const auto& x : patches) {
      embs.push_back(encode_branch(tape, model_.image, assemble_input(tape, model_.image, x), image_prompts_,
                                   model_.cfg.ln_eps));
    }
    return class_probabilities(tape, ad::stack_rows(tape, embs), text_embs_, model_.cfg.tau);
  }

  std::vector<Verdict> operator()(std::span<const Tensor> patches) const {
    Tape tape;
    Tensor probs = probabilities(tape, patches);
    std::vector<Verdict> out(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) out[i] = verdict(probs, i);
    return out;
  }

  static Verdict verdict(const Tensor& probs, std::size_t i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.cols(); ++j)
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    double second = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j)
      if (j != best) second = std::max(second, probs.at(i, j));
    return {best, probs.at(i, best) - second};
  }

 private:
  const Model& model_;
  std::vector<Tensor> image_prompts_;
  Tensor text_embs_;
};

// Normalized gradient descent on the patches until the teacher assigns
// `label` and the zero-shot model assigns `zero_shot_label`, both by at least
// `margin`. Undefined when the budget runs out.
Tensor climb(const Judge& teacher, const Judge& zero_shot, Tensor x, std::size_t label,
             std::size_t zero_shot_label, double margin) {
  const std::size_t t_labels[] = {label};
  const std::size_t z_labels[] = {zero_shot_label};
  for (std::size_t step = 0; step <= kClimbSteps; ++step) {
    x.set_requires_grad(true);
    Tape tape;
    const Tensor xs[] = {x};
    Tensor pt = teacher.probabilities(tape, xs);
    Tensor pz = zero_shot.probabilities(tape, xs);
    const Verdict vt = Judge::verdict(pt, 0), vz = Judge::verdict(pz, 0);
    if (vt.label == label && vt.margin >= margin && vz.label == zero_shot_label && vz.margin >= margin) {
      x.set_requires_grad(false);
      x.clear_grad();
      return x;
    }
    if (step == kClimbSteps) break;
    Tensor loss = ad::add(tape, ad::cross_entropy(tape, pt, t_labels), ad::cross_entropy(tape, pz, z_labels));
    tape.backward(loss);
    auto g = x.grad();
    double norm = 0.0;
    for (double v : g) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    std::vector<double> next(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= kClimbStep * g[i] / norm;
    x = Tensor::matrix(x.rows(), x.cols(), std::move(next));
  }
  return Tensor();
}

// One generation attempt; false when a prototype or enough samples could not
// be found.
bool draw_task(const Judge& label_of, const Judge& zero_shot, bool hide, double margin, std::mt19937_64& rng,
               FewShotTask& task) {
  const auto& p = task.params;
  const std::size_t n = task.image_patches, d = task.image_dim;

  // Prototypes: a random grid per label, pushed uphill on the teacher's
  // probability of that label until it sits well inside the label's region.
  task.prototypes.clear();
  for (std::size_t c = 0; c < p.num_labels; ++c) {
    // The first half of the labels is hidden from the zero-shot model, which
    // is steered to the next label instead.
    const std::size_t zs_label = hide && c < p.num_labels / 2 ? (c + 1) % p.num_labels : c;
    Tensor proto = climb(label_of, zero_shot, gaussian(rng, n, d, 1.0), c, zs_label, kPrototypeMargin);
    if (!proto.defined()) return false;
    task.prototypes.push_back(proto);
  }

  // Samples: prototype plus noise, kept when the teacher agrees with the
  // prototype's label.
  std::normal_distribution<double> noise(0.0, p.noise);
  auto sample_label = [&](std::size_t c, std::size_t count, std::vector<Sample>& out) {
    std::size_t kept = 0;
    const std::size_t limit = count * kMaxSampleDrawFactor;
    for (std::size_t drawn = 0; kept < count && drawn < limit; drawn += kCandidateBatch) {
      std::vector<Tensor> cand;
      for (std::size_t i = 0; i < kCandidateBatch; ++i) {
        auto base = task.prototypes[c].values();
        std::vector<double> v(base.begin(), base.end());
        for (double& x : v) x += noise(rng);
        cand.push_back(Tensor::matrix(n, d, std::move(v)));
      }
      auto verdicts = label_of(cand);
      for (std::size_t i = 0; i < cand.size() && kept < count; ++i) {
        if (verdicts[i].label == c && verdicts[i].margin >= margin) {
          out.push_back({cand[i], c});
          ++kept;
        }
      }
    }
    return kept == count;
  };
  task.train.clear();
  task.test.clear();
  for (std::size_t c = 0; c < p.num_labels; ++c)
    if (!sample_label(c, p.shots, task.train)) return false;
  std::vector<std::vector<Sample>> test_by_label(p.num_labels);
  for (std::size_t c = 0; c < p.num_labels; ++c)
    if (!sample_label(c, p.test_per_label, test_by_label[c])) return false;
  // Test samples interleave labels so evaluation chunks stay balanced.
  for (std::size_t i = 0; i < p.test_per_label; ++i)
    for (std::size_t c = 0; c < p.num_labels; ++c) task.test.push_back(test_by_label[c][i]);
  return true;
}

}  // namespace

FewShotTask generate_task(const Model& model, const TaskParams& params) {
  params.validate();
  FewShotTask task;
  task.params = params;
  task.text_content_len = model.text.content_len();
  task.text_dim = model.cfg.text.hidden_dim;
  task.image_patches = model.image.content_len();
  task.image_dim = model.cfg.image.hidden_dim;
  if (params.planted) {
    params.planted->config.validate(model.cfg);
  }

  std::mt19937_64 rng(params.seed);
  for (std::size_t c = 0; c < params.num_labels; ++c) {
    task.text_tokens.push_back(gaussian(rng, task.text_content_len, task.text_dim, 1.0));
  }
  std::vector<Tensor> text_inputs;
  {
    Tape tape;
    for (const auto& t : task.text_tokens) text_inputs.push_back(assemble_input(tape, model.text, t));
  }

  const bool planted = params.planted && !all_zero(params.planted->config);
  const double margin = params.planted ? params.planted->margin : 0.0;
  const std::size_t attempts = planted ? params.max_retries : 1;
  PlantedVerification best;
  for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
    std::optional<TrainedPrompts> teacher;
    if (planted) {
      // Teacher prompts at unit scale, the same scale a token has.
      TrainedPrompts t;
      t.config = params.planted->config;
      t.text.resize(t.config.text.size());
      t.image.resize(t.config.image.size());
      for (std::size_t l = 0; l < t.config.text.size(); ++l)
        if (t.config.text[l] > 0) t.text[l] = gaussian(rng, t.config.text[l], task.text_dim, 1.0);
      for (std::size_t l = 0; l < t.config.image.size(); ++l)
        if (t.config.image[l] > 0) t.image[l] = gaussian(rng, t.config.image[l], task.image_dim, 1.0);
      teacher = std::move(t);
    }
    Judge zero_shot(model, text_inputs, nullptr);
    Judge label_of(model, text_inputs, teacher ? &*teacher : nullptr);
    if (!draw_task(label_of, zero_shot, planted, margin, rng, task)) continue;
    if (!planted) {
      if (params.planted) task.verification = PlantedVerification{evaluate(model, task, nullptr), 1.0, attempt};
      return task;
    }

    PlantedVerification v;
    v.attempts = attempt;
    v.zero_shot_acc = evaluate(model, task, nullptr);
    const double floor = 1.0 / static_cast<double>(params.num_labels);
    if (v.zero_shot_acc > params.max_zero_shot_acc || v.zero_shot_acc < floor) continue;
    TrainConfig tc;
    tc.epochs = params.verify_epochs;
    tc.lr = params.verify_lr;
    tc.seed = params.seed ^ 0x5eed;
    TrainResult tr = train_subprompt(model, task, params.planted->config, tc);
    v.planted_acc = evaluate(model, task, &tr.prompts);
    best = v;
    if (v.planted_acc >= params.min_planted_acc && v.planted_acc - v.zero_shot_acc >= 0.1) {
      task.verification = v;
      return task;
    }
  }
  throw GenerationError("could not generate a verifiable planted task in " + std::to_string(attempts) +
                        " attempts (last zero-shot acc " + std::to_string(best.zero_shot_acc) +
                        ", planted acc " + std::to_string(best.planted_acc) + ")");
}

PromptConfiguration draw_planted_config(const ModelConfig& model, const SearchSpace& space, std::uint64_t seed) {
  space.validate();
  if (space.size() < 2) throw ContractError("planting needs at least one non-zero length in the space");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(1, space.size() - 1);
  PromptConfiguration cfg;
  cfg.space = space.lengths;
  for (std::size_t l = 0; l < model.text.depth; ++l) cfg.text.push_back(space.lengths[pick(rng)]);
  for (std::size_t l = 0; l < model.image.depth; ++l) cfg.image.push_back(space.lengths[pick(rng)]);
  return cfg;
}

SearchSplit split_for_search(const FewShotTask& task) {
  const auto& p = task.params;
  if (p.shots % 2 != 0 && !p.reuse_train_as_val) {
    throw ContractError("search split needs an even shot count (got " + std::to_string(p.shots) + ")");
  }
  SearchSplit split;
  for (std::size_t c = 0; c < p.num_labels; ++c) {
    const std::size_t first_val = split.val.size();
    for (std::size_t s = 0; s < p.shots; ++s) {
      const std::size_t idx = c * p.shots + s;
      (s % 2 == 0 ? split.train : split.val).push_back(idx);
    }
    if (split.val.size() == first_val) {
      // Single shot: the lone sample serves both levels.
      split.val.push_back(c * p.shots);
    }
  }
  return split;
}

std::uint64_t epoch_key(std::uint64_t task_seed, std::uint64_t epoch, std::uint64_t stream) {
  // splitmix64 finalizer over a combination of the three inputs.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(task_seed) ^ epoch) ^ (stream * 0x632be59bd9b4e019ULL));
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> split, std::size_t batch_size,
                                                   std::uint64_t epoch_seed) {
  if (batch_size < 1) throw ContractError("batch size must be >= 1");
  std::vector<std::size_t> order(split.begin(), split.end());
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(i + batch_size, order.size())));
  }
  return out;
}

}  // namespace dpl
