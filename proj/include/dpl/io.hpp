// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk artifacts. Binary files are an 8-byte magic, a little-endian u64
// header length, a JSON header and then raw little-endian f64 values.

#pragma once

#include <filesystem>
#include <string>

#include "dpl/data.hpp"
#include "dpl/search.hpp"
#include "dpl/train.hpp"

namespace dpl::io {

namespace fs = std::filesystem;

// JSON text <-> configuration structs. Missing keys keep their defaults;
// unknown keys are rejected with ContractError.
ModelConfig model_config_from_json(const std::string& text, std::uint64_t* seed = nullptr);
std::string model_config_to_json(const ModelConfig& cfg, std::uint64_t seed);
TaskParams task_params_from_json(const std::string& text, const ModelConfig& model);
std::string task_params_to_json(const TaskParams& params);
SearchConfig search_config_from_json(const std::string& text);
std::string search_config_to_json(const SearchConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);

std::string prompt_config_to_json(const PromptConfiguration& cfg);
PromptConfiguration prompt_config_from_json(const std::string& text);

void save_model(const Model& model, const fs::path& path);
Model load_model(const fs::path& path);

void save_task(const FewShotTask& task, const fs::path& path);
FewShotTask load_task(const fs::path& path);

void save_prompts(const TrainedPrompts& prompts, const TrainConfig& cfg, const fs::path& path);
TrainedPrompts load_prompts(const fs::path& path, const ModelConfig& model);

// config.json, alpha_trace_text.csv, alpha_trace_image.csv and metrics.csv.
void write_search_artifacts(const SearchResult& result, const fs::path& dir);
// train_loss.csv: epoch, mean total loss.
void write_train_history(const TrainResult& result, const fs::path& path);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// Human-readable summary of any artifact above, or of a report/config JSON.
std::string inspect(const fs::path& path);

}  // namespace dpl::io
