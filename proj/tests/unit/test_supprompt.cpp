// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "dpl/error.hpp"
#include "dpl/supprompt.hpp"
#include "dpl/train.hpp"
#include "test_util.hpp"

using namespace dpl;
using dpl::testing::max_abs_diff;
using dpl::testing::random_tensor;

namespace {

Tensor beta_row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor::from({n}, std::move(values));
}

std::vector<Tensor> option_prompts(const SearchSpace& space, std::size_t dim, std::mt19937_64& rng) {
  std::vector<Tensor> out(space.size());
  for (std::size_t i = 1; i < space.size(); ++i) out[i] = random_tensor(rng, space.lengths[i], dim, 0.5);
  return out;
}

// alpha rows one-hot at column `col` with a large margin.
Tensor one_hot_alpha(std::size_t rows, std::size_t cols, std::size_t col, double high = 60.0) {
  std::vector<double> v(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) v[r * cols + col] = high;
  return Tensor::matrix(rows, cols, v, true);
}

}  // namespace

TEST_CASE("search space parsing") {
  CHECK(SearchSpace::parse("0,2,4,6").lengths == std::vector<std::size_t>{0, 2, 4, 6});
  CHECK(SearchSpace::parse(" 0, 8 ").to_string() == "0,8");
  CHECK_THROWS_AS(SearchSpace::parse("2,4"), ContractError);
  CHECK_THROWS_AS(SearchSpace::parse("0,4,2"), ContractError);
  CHECK_THROWS_AS(SearchSpace::parse("0,x"), ContractError);
  CHECK(SearchSpace{}.contains(4));
  CHECK_FALSE(SearchSpace{}.contains(3));
}

TEST_CASE("beta is the row softmax of alpha") {
  Tape tape;
  Tensor b = beta_from_alpha(tape, Tensor::matrix(2, 4, {1, 1, 1, 1, std::log(3.0), 0, 0, 0}));
  for (std::size_t c = 0; c < 4; ++c) CHECK(b.at(0, c) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(b.at(1, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(b.at(1, 3) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));

  std::mt19937_64 rng(1);
  Tensor a = random_tensor(rng, 3, 4);
  std::vector<double> shifted(a.values().begin(), a.values().end());
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) shifted[r * 4 + c] += 2.5 * static_cast<double>(r) - 1.0;
  }
  Tensor b1 = beta_from_alpha(tape, a);
  Tensor b2 = beta_from_alpha(tape, Tensor::matrix(3, 4, shifted));
  CHECK(max_abs_diff(b1, b2) <= 1e-15);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += b1.at(r, c);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("mixed block forward degenerates to single options") {
  const Model model = init_pretrained(4, ModelConfig{});
  const SearchSpace space;
  std::mt19937_64 rng(5);
  Tensor x = random_tensor(rng, 8, 32);
  auto options = option_prompts(space, 32, rng);
  const auto& block = model.text.blocks[1];
  Tape tape;
  for (std::size_t i = 0; i < space.size(); ++i) {
    std::vector<double> w(space.size(), 0.0);
    w[i] = 1.0;
    Tensor mixed = mixed_block_forward(tape, block, x, options, beta_row(w), 4);
    Tensor single = block_forward(tape, block, x, options[i].defined() ? &options[i] : nullptr, 4);
    CHECK(max_abs_diff(mixed, single) <= 1e-12);
  }
  // Option 0 is the zero-shot block.
  Tensor mixed = mixed_block_forward(tape, block, x, options, beta_row({1, 0, 0, 0}), 4);
  CHECK(max_abs_diff(mixed, block_forward(tape, block, x, nullptr, 4)) <= 1e-12);
}

TEST_CASE("mixing is linear in beta") {
  const Model model = init_pretrained(4, ModelConfig{});
  const SearchSpace space;
  std::mt19937_64 rng(6);
  Tensor x = random_tensor(rng, 17, 32);
  auto options = option_prompts(space, 32, rng);
  const auto& block = model.image.blocks[0];
  Tape tape;
  const Tensor h1 = block_forward(tape, block, x, &options[1], 4);
  const Tensor h3 = block_forward(tape, block, x, &options[3], 4);
  for (double lam : {0.0, 0.25, 0.5, 0.9}) {
    Tensor mixed = mixed_block_forward(tape, block, x, options, beta_row({0, lam, 0, 1.0 - lam}), 4);
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      CHECK(std::abs(mixed[i] - (lam * h1[i] + (1.0 - lam) * h3[i])) <= 1e-12);
    }
  }
  // Uniform beta over a two-option space is the arithmetic mean.
  const SearchSpace two{{0, 4}};
  std::vector<Tensor> opts2{Tensor{}, options[2]};
  Tensor mean = mixed_block_forward(tape, block, x, opts2, beta_row({0.5, 0.5}), 4);
  const Tensor h0 = block_forward(tape, block, x, nullptr, 4);
  const Tensor h2 = block_forward(tape, block, x, &options[2], 4);
  for (std::size_t i = 0; i < mean.size(); ++i) CHECK(std::abs(mean[i] - 0.5 * (h0[i] + h2[i])) <= 1e-12);
}

TEST_CASE("all-option-0 supprompt equals the zero-shot model") {
  const Model model = init_pretrained(8, ModelConfig{});
  std::mt19937_64 rng(9);
  Supprompt sp = init_supprompt(model.cfg, SearchSpace{}, rng);
  sp.text.alpha = one_hot_alpha(4, 4, 0, 1000.0);
  sp.image.alpha = one_hot_alpha(4, 4, 0, 1000.0);
  Tape tape;
  std::vector<Tensor> images, texts;
  for (int i = 0; i < 3; ++i) {
    images.push_back(assemble_input(tape, model.image, random_tensor(rng, 16, 32)));
  }
  for (int c = 0; c < 4; ++c) texts.push_back(assemble_input(tape, model.text, random_tensor(rng, 6, 32)));
  Tensor mixed = supprompt_forward(tape, model, images, texts, sp);
  Tensor zs = zero_shot_predict(model, images, texts);
  CHECK(max_abs_diff(mixed, zs) <= 1e-12);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += mixed.at(r, c);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("supprompt alpha gradient is nonzero and matches finite differences") {
  const ModelConfig cfg = dpl::testing::tiny_config();
  const Model model = init_pretrained(10, cfg);
  const SearchSpace space{{0, 1, 3}};
  std::mt19937_64 rng(11);
  Supprompt sp = init_supprompt(cfg, space, rng);
  std::vector<Tensor> images, texts;
  {
    Tape tape;
    for (int i = 0; i < 2; ++i) images.push_back(assemble_input(tape, model.image, random_tensor(rng, 4, 16)));
    for (int c = 0; c < 3; ++c) texts.push_back(assemble_input(tape, model.text, random_tensor(rng, 3, 16)));
  }
  const std::vector<std::size_t> labels{1, 2};
  auto loss = [&](Tape& t) { return ad::cross_entropy(t, supprompt_forward(t, model, images, texts, sp), labels); };
  const auto r = dpl::testing::check_gradients(loss, sp.alphas(), 1e-4);
  CHECK(r.max_rel_error < 1e-4);
  double g = 0.0;
  for (const auto& a : sp.alphas()) {
    for (double v : a.grad()) g += std::abs(v);
  }
  CHECK(g > 0.0);
}

TEST_CASE("extract_subprompt") {
  const SearchSpace space;
  auto cfg = extract_subprompt(one_hot_alpha(4, 4, 0), one_hot_alpha(4, 4, 0), space);
  CHECK(cfg.text == std::vector<std::size_t>(4, 0));
  CHECK(cfg.image == std::vector<std::size_t>(4, 0));

  Tensor a = Tensor::matrix(2, 4, {0.1, 0.9, 0.2, 0.3, 0.0, 0.5, 0.1, 0.5});
  cfg = extract_subprompt(a, a, space);
  CHECK(cfg.text == std::vector<std::size_t>{2, 2});
  CHECK(cfg.space == space.lengths);

  // Shifting or positively scaling a row never changes the choice.
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor r = random_tensor(rng, 3, 4);
    std::vector<double> v(r.values().begin(), r.values().end());
    for (auto& x : v) x = std::abs(x);
    Tensor pos = Tensor::matrix(3, 4, v);
    std::vector<double> moved = v;
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = 3.0 * moved[i] + (i / 4 == 1 ? -7.0 : 2.0);
    CHECK(argmax_rows(pos) == argmax_rows(Tensor::matrix(3, 4, moved)));
  }
}

TEST_CASE("search space size") {
  CHECK(search_space_size(SearchSpace{}, 2, 2) == "256");
  CHECK(search_space_size(SearchSpace{{0}}, 5, 7) == "1");
  CHECK(search_space_size(SearchSpace{}, 4, 4) == "65536");
  CHECK(search_space_size(SearchSpace{}, 12, 12) == "281474976710656");
}

TEST_CASE("parameter accounting") {
  const SearchSpace space;
  CHECK(supprompt_prompt_params(space, 4, 32, 4, 32) == 3072);
  CHECK(alpha_params(space, 4, 4) == 32);
  const std::vector<std::size_t> one{2, 0, 6, 4};
  CHECK(branch_prompt_params(one, 32) == 384);
  PromptConfiguration empty{{0, 0, 0, 0}, {0, 0, 0, 0}, space.lengths};
  CHECK(subprompt_params(empty, 32, 32) == 0);

  // The supprompt bounds every subprompt drawn from the same space.
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> pick(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    PromptConfiguration c{{}, {}, space.lengths};
    for (int l = 0; l < 4; ++l) {
      c.text.push_back(space.lengths[pick(rng)]);
      c.image.push_back(space.lengths[pick(rng)]);
    }
    CHECK(subprompt_params(c, 32, 32) <= supprompt_prompt_params(space, 4, 32, 4, 32));
  }
}

TEST_CASE("prompt configuration validation") {
  const ModelConfig model;
  PromptConfiguration ok{{0, 2, 4, 6}, {6, 6, 0, 0}, {0, 2, 4, 6}};
  CHECK_NOTHROW(ok.validate(model));
  PromptConfiguration bad_len = ok;
  bad_len.text[0] = 3;
  CHECK_THROWS_AS(bad_len.validate(model), ContractError);
  PromptConfiguration bad_depth = ok;
  bad_depth.image.pop_back();
  CHECK_THROWS_AS(bad_depth.validate(model), ContractError);
}

TEST_CASE("supprompt initialisation") {
  const ModelConfig model;
  std::mt19937_64 rng(14);
  Supprompt sp = init_supprompt(model, SearchSpace{}, rng);
  CHECK(sp.text.alpha.shape() == ad::Shape{4, 4});
  CHECK(sp.text.alpha.requires_grad());
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK_FALSE(sp.text.prompts[l][0].defined());
    for (std::size_t i = 1; i < 4; ++i) {
      CHECK(sp.image.prompts[l][i].shape() == ad::Shape{SearchSpace{}.lengths[i], 32});
    }
  }
  // Options hold independent storage.
  CHECK(sp.text.prompts[0][1].id() != sp.text.prompts[0][2].id());
  CHECK(sp.prompt_tensors().size() == 24);
}
