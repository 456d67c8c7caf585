// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "dpl/supprompt.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <charconv>
#include <sstream>

#include "dpl/error.hpp"

namespace dpl {

void SearchSpace::validate() const {
  if (lengths.empty()) throw ContractError("search space must contain at least one option");
  if (lengths.front() != 0) throw ContractError("search space must start with the no-prompt option 0");
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    if (lengths[i] <= lengths[i - 1]) {
      throw ContractError("search space lengths must be strictly increasing: " + to_string());
    }
  }
}

bool SearchSpace::contains(std::size_t length) const {
  for (auto c : lengths)
    if (c == length) return true;
  return false;
}

SearchSpace SearchSpace::parse(std::string_view text) {
  SearchSpace s;
  s.lengths.clear();
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    auto tok = text.substr(pos, comma - pos);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ContractError("invalid search space entry '" + std::string(tok) + "'");
    }
    s.lengths.push_back(v);
    pos = comma + 1;
  }
  s.validate();
  return s;
}

std::string SearchSpace::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < lengths.size(); ++i) os << (i ? "," : "") << lengths[i];
  return os.str();
}

void PromptConfiguration::validate(const ModelConfig& model) const {
  if (text.size() != model.text.depth || image.size() != model.image.depth) {
    throw ContractError("prompt configuration depths (" + std::to_string(text.size()) + ", " +
                        std::to_string(image.size()) + ") do not match model depths (" +
                        std::to_string(model.text.depth) + ", " + std::to_string(model.image.depth) + ")");
  }
  SearchSpace s{space};
  s.validate();
  for (const auto* branch : {&text, &image}) {
    for (auto c : *branch) {
      if (!s.contains(c)) {
        throw ContractError("context length " + std::to_string(c) + " is not in the search space " +
                            s.to_string());
      }
    }
  }
}

std::vector<Tensor> BranchSupprompt::prompt_tensors() const {
  std::vector<Tensor> out;
  for (const auto& layer : prompts)
    for (const auto& p : layer)
      if (p.defined()) out.push_back(p);
  return out;
}

std::vector<Tensor> Supprompt::prompt_tensors() const {
  auto out = text.prompt_tensors();
  auto img = image.prompt_tensors();
  out.insert(out.end(), img.begin(), img.end());
  return out;
}

namespace {

BranchSupprompt init_branch_supprompt(const BranchConfig& cfg, const SearchSpace& space,
                                      std::mt19937_64& rng) {
  const std::size_t t = space.size();
  BranchSupprompt b;
  std::normal_distribution<double> alpha_dist(0.0, kAlphaInitStd);
  std::vector<double> a(cfg.depth * t);
  for (double& v : a) v = alpha_dist(rng);
  b.alpha = Tensor::matrix(cfg.depth, t, std::move(a), true);

  std::normal_distribution<double> prompt_dist(0.0, kPromptInitStd);
  b.prompts.resize(cfg.depth);
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    b.prompts[l].resize(t);
    for (std::size_t i = 1; i < t; ++i) {
      std::vector<double> v(space.lengths[i] * cfg.hidden_dim);
      for (double& x : v) x = prompt_dist(rng);
      b.prompts[l][i] = Tensor::matrix(space.lengths[i], cfg.hidden_dim, std::move(v), true);
    }
  }
  return b;
}

}  // namespace

Supprompt init_supprompt(const ModelConfig& model, const SearchSpace& space, std::mt19937_64& rng) {
  space.validate();
  Supprompt sp;
  sp.space = space;
  sp.text = init_branch_supprompt(model.text, space, rng);
  sp.image = init_branch_supprompt(model.image, space, rng);
  return sp;
}

Tensor beta_from_alpha(Tape& tape, const Tensor& alpha) {
  return ad::softmax_rows(tape, alpha);
}

Tensor mixed_block_forward(Tape& tape, const BlockParams& block, const Tensor& x,
                           std::span<const Tensor> options, const Tensor& beta_row, std::size_t heads,
                           double eps) {
  if (beta_row.size() != options.size()) {
    throw DimensionError("mixed_block_forward: " + std::to_string(options.size()) +
                         " options but beta has " + std::to_string(beta_row.size()) + " entries");
  }
  // LN1 and the sequence projections do not depend on the prompt.
  PreparedInput in = prepare_block_input(tape, block, x, eps);
  std::vector<Tensor> outs;
  outs.reserve(options.size());
  for (const auto& opt : options) {
    outs.push_back(attend_with_prompt(tape, block, in, opt.defined() ? &opt : nullptr, heads, eps));
  }
  return ad::weighted_sum(tape, outs, beta_row);
}

Tensor supprompt_encode(Tape& tape, const Branch& branch, const Tensor& x0, const BranchSupprompt& sp,
                        const Tensor& beta, double eps) {
  const std::size_t heads = branch.cfg.num_heads;
  return encode_with(tape, branch, x0, [&](Tape& t, std::size_t l, const Tensor& x) {
    Tensor beta_row = ad::row(t, beta, l);
    return mixed_block_forward(t, branch.blocks[l], x, sp.prompts[l], beta_row, heads, eps);
  });
}

Tensor supprompt_forward(Tape& tape, const Model& model, std::span<const Tensor> image_inputs,
                         std::span<const Tensor> text_inputs, const Supprompt& sp) {
  const double eps = model.cfg.ln_eps;
  Tensor beta_text = beta_from_alpha(tape, sp.text.alpha);
  Tensor beta_image = beta_from_alpha(tape, sp.image.alpha);

  std::vector<Tensor> text_embs;
  text_embs.reserve(text_inputs.size());
  for (const auto& x : text_inputs) text_embs.push_back(supprompt_encode(tape, model.text, x, sp.text, beta_text, eps));
  std::vector<Tensor> image_embs;
  image_embs.reserve(image_inputs.size());
  for (const auto& x : image_inputs)
    image_embs.push_back(supprompt_encode(tape, model.image, x, sp.image, beta_image, eps));

  return class_probabilities(tape, ad::stack_rows(tape, image_embs), ad::stack_rows(tape, text_embs),
                             model.cfg.tau);
}

std::vector<std::size_t> argmax_rows(const Tensor& alpha) {
  const std::size_t rows = alpha.rows(), cols = alpha.cols();
  std::vector<std::size_t> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (alpha.at(r, c) > alpha.at(r, best)) best = c;
    out[r] = best;
  }
  return out;
}

PromptConfiguration extract_subprompt(const Tensor& alpha_text, const Tensor& alpha_image,
                                      const SearchSpace& space) {
  space.validate();
  for (const Tensor* a : {&alpha_text, &alpha_image}) {
    if (a->cols() != space.size()) {
      throw DimensionError("alpha matrix " + ad::shape_to_string(a->shape()) + " does not have " +
                           std::to_string(space.size()) + " option columns");
    }
  }
  PromptConfiguration cfg;
  cfg.space = space.lengths;
  for (auto i : argmax_rows(alpha_text)) cfg.text.push_back(space.lengths[i]);
  for (auto i : argmax_rows(alpha_image)) cfg.image.push_back(space.lengths[i]);
  return cfg;
}

std::string search_space_size(const SearchSpace& space, std::size_t depth_text, std::size_t depth_image) {
  using boost::multiprecision::cpp_int;
  cpp_int result = 1;
  const cpp_int t = space.size();
  for (std::size_t i = 0; i < depth_text + depth_image; ++i) result *= t;
  return result.str();
}

std::size_t supprompt_prompt_params(const SearchSpace& space, std::size_t depth_text,
                                    std::size_t dim_text, std::size_t depth_image, std::size_t dim_image) {
  std::size_t per_layer = 0;
  for (std::size_t i = 1; i < space.size(); ++i) per_layer += space.lengths[i];
  return depth_text * per_layer * dim_text + depth_image * per_layer * dim_image;
}

std::size_t alpha_params(const SearchSpace& space, std::size_t depth_text, std::size_t depth_image) {
  return (depth_text + depth_image) * space.size();
}

std::size_t branch_prompt_params(std::span<const std::size_t> lengths, std::size_t dim) {
  std::size_t n = 0;
  for (auto c : lengths) n += c * dim;
  return n;
}

std::size_t subprompt_params(const PromptConfiguration& cfg, std::size_t dim_text, std::size_t dim_image) {
  return branch_prompt_params(cfg.text, dim_text) + branch_prompt_params(cfg.image, dim_image);
}

}  // namespace dpl
