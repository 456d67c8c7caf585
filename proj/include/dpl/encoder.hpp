// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Miniature dual-branch (text / image) transformer. Every block uses
// cross-attention: queries come from the running sequence only, keys and
// values from [prompt; sequence], so a prompt of any length can be attached
// at any layer without changing the sequence length.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dpl/autodiff.hpp"

namespace dpl {

using ad::Tape;
using ad::Tensor;

struct BranchConfig {
  std::size_t depth = 4;
  std::size_t hidden_dim = 32;
  std::size_t num_heads = 4;
  // Full input length including SOS/EOS (text) or CLS (image).
  std::size_t seq_len = 8;

  void validate(const char* branch) const;
};

struct ModelConfig {
  BranchConfig text{4, 32, 4, 8};
  BranchConfig image{4, 32, 4, 17};
  std::size_t embed_dim = 32;
  double tau = 0.07;
  double ln_eps = 1e-5;

  void validate() const;
};

struct BlockParams {
  Tensor ln1_gain, ln1_bias;
  Tensor w_q, w_k, w_v, w_o;  // d x d
  Tensor ln2_gain, ln2_bias;
  Tensor w_fc1;  // d x 4d
  Tensor w_fc2;  // 4d x d
};

enum class BranchKind { kText, kImage };

struct Branch {
  BranchKind kind = BranchKind::kText;
  BranchConfig cfg;
  // Text: start/end token embeddings; image: the class token (start only).
  Tensor start_token;  // 1 x d
  Tensor end_token;    // 1 x d, text only
  Tensor positional;   // seq_len x d
  std::vector<BlockParams> blocks;
  Tensor projection;  // d x embed_dim

  // Row pooled into the branch embedding: EOS for text, CLS for image.
  std::size_t pool_index() const { return kind == BranchKind::kText ? cfg.seq_len - 1 : 0; }
  // Number of task-supplied rows between the special tokens.
  std::size_t content_len() const {
    return kind == BranchKind::kText ? cfg.seq_len - 2 : cfg.seq_len - 1;
  }
};

// The frozen surrogate for a pre-trained vision-language model.
struct Model {
  ModelConfig cfg;
  std::uint64_t seed = 0;
  Branch text;
  Branch image;

  // Every weight tensor, text branch first, in serialisation order.
  std::vector<Tensor> weights() const;
  std::uint64_t checksum() const;
};

// Deterministic, frozen weights from `seed` (CLIP-style scaled Gaussians).
Model init_pretrained(std::uint64_t seed, const ModelConfig& cfg);

// Keys/values for the sequence part are shared across prompt options; this
// holds everything a block computes before the prompt is attached.
struct PreparedInput {
  Tensor x;       // c_l x d, residual stream
  Tensor normed;  // LN1(x)
  Tensor q, k, v;
};

PreparedInput prepare_block_input(Tape& tape, const BlockParams& block, const Tensor& x, double eps);

// Finishes the block for one prompt option (nullptr or zero rows = no prompt).
Tensor attend_with_prompt(Tape& tape, const BlockParams& block, const PreparedInput& in,
                          const Tensor* prompt, std::size_t heads, double eps);

// One transformer block. Output has the same number of rows as `x`.
Tensor block_forward(Tape& tape, const BlockParams& block, const Tensor& x, const Tensor* prompt,
                     std::size_t heads, double eps = 1e-5);

// Assembles [special tokens + content] + positional embeddings.
Tensor assemble_input(Tape& tape, const Branch& branch, const Tensor& content);

using LayerFn = std::function<Tensor(Tape&, std::size_t layer, const Tensor& x)>;

// Runs `layer_fn` for each block, pools, projects and L2-normalises (1 x e).
Tensor encode_with(Tape& tape, const Branch& branch, const Tensor& x0, const LayerFn& layer_fn);

// Plain chain of block_forward. `prompts` has one (possibly undefined) tensor
// per layer.
Tensor encode_branch(Tape& tape, const Branch& branch, const Tensor& x0,
                     std::span<const Tensor> prompts, double eps = 1e-5);

// Softmax over cosine similarity / tau. image_embs: b x e, text_embs: C x e.
Tensor class_probabilities(Tape& tape, const Tensor& image_embs, const Tensor& text_embs, double tau);

}  // namespace dpl
