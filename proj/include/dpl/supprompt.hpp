// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Search-space layer: candidate prompts for every (layer, context length)
// option, the alpha logits that weight them, the relaxed forward pass that
// mixes all options, and extraction of the discrete configuration.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dpl/autodiff.hpp"
#include "dpl/encoder.hpp"

namespace dpl {

// Ordered candidate context lengths; the first is always 0 ("no prompt").
struct SearchSpace {
  std::vector<std::size_t> lengths{0, 2, 4, 6};

  std::size_t size() const { return lengths.size(); }
  void validate() const;
  bool contains(std::size_t length) const;

  // "0,2,4,6"
  static SearchSpace parse(std::string_view text);
  std::string to_string() const;
};

// Per-branch chosen context length for every layer.
struct PromptConfiguration {
  std::vector<std::size_t> text;
  std::vector<std::size_t> image;
  std::vector<std::size_t> space;

  bool operator==(const PromptConfiguration&) const = default;

  // Throws ContractError when a length is not in `space` or the depths do not
  // match the model.
  void validate(const ModelConfig& model) const;
};

// Candidate prompts and the alpha logits of one branch. prompts[l][i] is the
// option-i prompt at layer l; option 0 is left undefined.
struct BranchSupprompt {
  Tensor alpha;  // depth x t, requires_grad
  std::vector<std::vector<Tensor>> prompts;

  std::vector<Tensor> prompt_tensors() const;
};

struct Supprompt {
  SearchSpace space;
  BranchSupprompt text;
  BranchSupprompt image;

  std::vector<Tensor> alphas() const { return {text.alpha, image.alpha}; }
  std::vector<Tensor> prompt_tensors() const;
};

inline constexpr double kAlphaInitStd = 0.01;
inline constexpr double kPromptInitStd = 0.02;

Supprompt init_supprompt(const ModelConfig& model, const SearchSpace& space, std::mt19937_64& rng);

// Row-wise softmax of alpha.
Tensor beta_from_alpha(Tape& tape, const Tensor& alpha);

// sum_i beta_i * block_forward(x, option_i). `options` has one entry per
// search-space option; an undefined entry means "no prompt".
Tensor mixed_block_forward(Tape& tape, const BlockParams& block, const Tensor& x,
                           std::span<const Tensor> options, const Tensor& beta_row, std::size_t heads,
                           double eps = 1e-5);

// Mixed pass over a whole branch for one input sequence (1 x e embedding).
Tensor supprompt_encode(Tape& tape, const Branch& branch, const Tensor& x0, const BranchSupprompt& sp,
                        const Tensor& beta, double eps);

// Batch of assembled inputs through both branches, returning b x C class
// probabilities. image_inputs: one seq_len x d tensor per sample;
// text_inputs: one per label.
Tensor supprompt_forward(Tape& tape, const Model& model, std::span<const Tensor> image_inputs,
                         std::span<const Tensor> text_inputs, const Supprompt& sp);

// Per-row argmax of alpha (ties go to the lowest option index).
std::vector<std::size_t> argmax_rows(const Tensor& alpha);
PromptConfiguration extract_subprompt(const Tensor& alpha_text, const Tensor& alpha_image,
                                      const SearchSpace& space);

// t^(depth_text + depth_image) as a decimal string.
std::string search_space_size(const SearchSpace& space, std::size_t depth_text, std::size_t depth_image);

// sum over branches, layers and non-zero options of c_i * d.
std::size_t supprompt_prompt_params(const SearchSpace& space, std::size_t depth_text,
                                    std::size_t dim_text, std::size_t depth_image, std::size_t dim_image);
// (depth_text + depth_image) * t
std::size_t alpha_params(const SearchSpace& space, std::size_t depth_text, std::size_t depth_image);
std::size_t branch_prompt_params(std::span<const std::size_t> lengths, std::size_t dim);
std::size_t subprompt_params(const PromptConfiguration& cfg, std::size_t dim_text, std::size_t dim_image);

}  // namespace dpl
