// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "dpl/encoder.hpp"

#include <cmath>
#include <random>
#include <string>

#include "dpl/error.hpp"

namespace dpl {

void BranchConfig::validate(const char* branch) const {
  const std::string name(branch);
  if (depth < 1) throw ContractError(name + " branch depth must be >= 1");
  if (hidden_dim < 1 || num_heads < 1 || hidden_dim % num_heads != 0) {
    throw ContractError(name + " branch: " + std::to_string(num_heads) +
                        " heads must divide hidden dim " + std::to_string(hidden_dim));
  }
  if (seq_len < 2) throw ContractError(name + " branch sequence length must be >= 2");
}

void ModelConfig::validate() const {
  text.validate("text");
  image.validate("image");
  if (text.seq_len < 3) throw ContractError("text sequence needs room for SOS, a token and EOS");
  if (embed_dim < 1) throw ContractError("embedding dimension must be >= 1");
  if (!(tau > 0.0)) throw ContractError("temperature tau must be > 0");
  if (!(ln_eps > 0.0)) throw ContractError("layer-norm eps must be > 0");
}

std::vector<Tensor> Model::weights() const {
  std::vector<Tensor> out;
  for (const Branch* b : {&text, &image}) {
    out.push_back(b->start_token);
    if (b->end_token.defined()) out.push_back(b->end_token);
    out.push_back(b->positional);
    for (const auto& blk : b->blocks) {
      for (const Tensor* t : {&blk.ln1_gain, &blk.ln1_bias, &blk.w_q, &blk.w_k, &blk.w_v, &blk.w_o,
                              &blk.ln2_gain, &blk.ln2_bias, &blk.w_fc1, &blk.w_fc2}) {
        out.push_back(*t);
      }
    }
    out.push_back(b->projection);
  }
  return out;
}

std::uint64_t Model::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& w : weights()) h = ad::checksum(w.values(), h);
  return h;
}

namespace {

Tensor gaussian(std::mt19937_64& rng, ad::Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), false);
}

Tensor constant(ad::Shape shape, double value) {
  std::vector<double> v(ad::shape_size(shape), value);
  return Tensor::from(std::move(shape), std::move(v), false);
}

Branch init_branch(std::mt19937_64& rng, BranchKind kind, const BranchConfig& cfg,
                   std::size_t embed_dim) {
  const std::size_t d = cfg.hidden_dim;
  const double width_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double proj_std = width_std / std::sqrt(2.0 * static_cast<double>(cfg.depth));
  const double fc_std = 1.0 / std::sqrt(2.0 * static_cast<double>(d));

  Branch b;
  b.kind = kind;
  b.cfg = cfg;
  if (kind == BranchKind::kText) {
    b.start_token = gaussian(rng, {1, d}, 0.02);
    b.end_token = gaussian(rng, {1, d}, 0.02);
    b.positional = gaussian(rng, {cfg.seq_len, d}, 0.01);
  } else {
    b.start_token = gaussian(rng, {1, d}, width_std);
    b.positional = gaussian(rng, {cfg.seq_len, d}, width_std);
  }
  b.blocks.reserve(cfg.depth);
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    BlockParams blk;
    blk.ln1_gain = constant({d}, 1.0);
    blk.ln1_bias = constant({d}, 0.0);
    blk.w_q = gaussian(rng, {d, d}, width_std);
    blk.w_k = gaussian(rng, {d, d}, width_std);
    blk.w_v = gaussian(rng, {d, d}, width_std);
    blk.w_o = gaussian(rng, {d, d}, proj_std);
    blk.ln2_gain = constant({d}, 1.0);
    blk.ln2_bias = constant({d}, 0.0);
    blk.w_fc1 = gaussian(rng, {d, 4 * d}, fc_std);
    blk.w_fc2 = gaussian(rng, {4 * d, d}, proj_std);
    b.blocks.push_back(std::move(blk));
  }
  b.projection = gaussian(rng, {d, embed_dim}, width_std);
  return b;
}

}  // namespace

Model init_pretrained(std::uint64_t seed, const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.cfg = cfg;
  m.seed = seed;
  m.text = init_branch(rng, BranchKind::kText, cfg.text, cfg.embed_dim);
  m.image = init_branch(rng, BranchKind::kImage, cfg.image, cfg.embed_dim);
  return m;
}

PreparedInput prepare_block_input(Tape& tape, const BlockParams& block, const Tensor& x, double eps) {
  PreparedInput in;
  in.x = x;
  in.normed = ad::layer_norm(tape, x, block.ln1_gain, block.ln1_bias, eps);
  in.q = ad::matmul(tape, in.normed, block.w_q);
  in.k = ad::matmul(tape, in.normed, block.w_k);
  in.v = ad::matmul(tape, in.normed, block.w_v);
  return in;
}

Tensor attend_with_prompt(Tape& tape, const BlockParams& block, const PreparedInput& in,
                          const Tensor* prompt, std::size_t heads, double eps) {
  const std::size_t d = in.x.cols();
  Tensor k = in.k;
  Tensor v = in.v;
  if (prompt != nullptr && prompt->defined()) {
    if (prompt->rank() != 2 || prompt->cols() != d) {
      throw DimensionError("prompt of shape " + ad::shape_to_string(prompt->shape()) +
                           " does not match hidden width " + std::to_string(d));
    }
    if (prompt->rows() > 0) {
      Tensor pn = ad::layer_norm(tape, *prompt, block.ln1_gain, block.ln1_bias, eps);
      k = ad::concat_rows(tape, ad::matmul(tape, pn, block.w_k), in.k);
      v = ad::concat_rows(tape, ad::matmul(tape, pn, block.w_v), in.v);
    }
  }
  Tensor att = ad::attention(tape, in.q, k, v, heads);
  Tensor y = ad::add(tape, in.x, ad::matmul(tape, att, block.w_o));
  Tensor h = ad::layer_norm(tape, y, block.ln2_gain, block.ln2_bias, eps);
  h = ad::quick_gelu(tape, ad::matmul(tape, h, block.w_fc1));
  return ad::add(tape, y, ad::matmul(tape, h, block.w_fc2));
}

Tensor block_forward(Tape& tape, const BlockParams& block, const Tensor& x, const Tensor* prompt,
                     std::size_t heads, double eps) {
  if (prompt != nullptr && prompt->defined() && (prompt->rank() != 2 || prompt->cols() != x.cols())) {
    throw DimensionError("prompt of shape " + ad::shape_to_string(prompt->shape()) +
                         " does not match hidden width " + std::to_string(x.cols()));
  }
  PreparedInput in = prepare_block_input(tape, block, x, eps);
  return attend_with_prompt(tape, block, in, prompt, heads, eps);
}

Tensor assemble_input(Tape& tape, const Branch& branch, const Tensor& content) {
  const std::size_t d = branch.cfg.hidden_dim;
  if (content.rank() != 2 || content.cols() != d || content.rows() != branch.content_len()) {
    throw DimensionError("branch input expects " + std::to_string(branch.content_len()) + "x" +
                         std::to_string(d) + " content, got " + ad::shape_to_string(content.shape()));
  }
  Tensor seq = ad::concat_rows(tape, branch.start_token, content);
  if (branch.kind == BranchKind::kText) seq = ad::concat_rows(tape, seq, branch.end_token);
  return ad::add(tape, seq, branch.positional);
}

Tensor encode_with(Tape& tape, const Branch& branch, const Tensor& x0, const LayerFn& layer_fn) {
  if (x0.rank() != 2 || x0.rows() != branch.cfg.seq_len || x0.cols() != branch.cfg.hidden_dim) {
    throw DimensionError("branch expects a " + std::to_string(branch.cfg.seq_len) + "x" +
                         std::to_string(branch.cfg.hidden_dim) + " sequence, got " +
                         ad::shape_to_string(x0.shape()));
  }
  Tensor x = x0;
  for (std::size_t l = 0; l < branch.cfg.depth; ++l) x = layer_fn(tape, l, x);
  Tensor pooled = ad::row(tape, x, branch.pool_index());
  return ad::l2_normalize_rows(tape, ad::matmul(tape, pooled, branch.projection));
}

Tensor encode_branch(Tape& tape, const Branch& branch, const Tensor& x0,
                     std::span<const Tensor> prompts, double eps) {
  if (prompts.size() != branch.cfg.depth) {
    throw ContractError("encode_branch: " + std::to_string(prompts.size()) + " prompts for depth " +
                        std::to_string(branch.cfg.depth));
  }
  const std::size_t heads = branch.cfg.num_heads;
  return encode_with(
      tape, branch, x0,
      [&](Tape& t, std::size_t l, const Tensor& x) {
        const Tensor* p = prompts[l].defined() ? &prompts[l] : nullptr;
        return block_forward(t, branch.blocks[l], x, p, heads, eps);
      });
}

Tensor class_probabilities(Tape& tape, const Tensor& image_embs, const Tensor& text_embs, double tau) {
  if (!(tau > 0.0)) throw ContractError("temperature tau must be > 0");
  Tensor sims = ad::matmul_bt(tape, image_embs, text_embs);
  return ad::softmax_rows(tape, ad::scale(tape, sims, 1.0 / tau));
}

}  // namespace dpl
