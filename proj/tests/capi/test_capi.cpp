// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exercises the shared library strictly through its C header.

#include <cstdio>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "dpl/dpl.h"

namespace fs = std::filesystem;

namespace {

template <typename F>
std::string text_of(F&& call) {
  std::size_t needed = 0;
  REQUIRE(call(nullptr, 0, &needed) == DPL_OK);
  std::string buf(needed, '\0');
  REQUIRE(call(buf.data(), buf.size(), &needed) == DPL_OK);
  buf.resize(needed - 1);
  return buf;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "dpl_capi_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::string(dpl_status_name(DPL_OK)) == "ok");
  CHECK(std::string(dpl_version()) == "0.1.0");
  dpl_model* model = nullptr;
  CHECK(dpl_model_create(R"({"text": {"depth": 0}})", &model) == DPL_ERR_INVALID_ARGUMENT);
  CHECK(model == nullptr);
  CHECK(std::string(dpl_last_error()).size() > 0);
  CHECK(dpl_model_create("{not json", &model) == DPL_ERR_FORMAT);
  CHECK(dpl_model_load("/nonexistent/model.bin", &model) == DPL_ERR_IO);
  CHECK(dpl_model_create(nullptr, nullptr) == DPL_ERR_INVALID_ARGUMENT);
  REQUIRE(dpl_model_create(nullptr, &model) == DPL_OK);
  CHECK(std::string(dpl_last_error()).empty());
  dpl_model_free(model);
}

TEST_CASE("accounting through the C API") {
  const std::string size = text_of([](char* b, std::size_t c, std::size_t* n) {
    return dpl_search_space_size("0,2,4,6", 12, 12, b, c, n);
  });
  CHECK(size == "281474976710656");
  std::uint64_t params = 0;
  CHECK(dpl_subprompt_params(R"({"text":[2,0,6,4],"image":[0,0,0,0],"space":[0,2,4,6]})", 32, 32, &params) ==
        DPL_OK);
  CHECK(params == 384);
  CHECK(dpl_search_space_size("1,2", 1, 1, nullptr, 0, nullptr) == DPL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("resolve fills defaults") {
  const std::string resolved = text_of([](char* b, std::size_t c, std::size_t* n) {
    return dpl_resolve_config(R"({"task": {"shots": 8}})", b, c, n);
  });
  CHECK(contains(resolved, "\"shots\": 8"));
  CHECK(contains(resolved, "\"lr_alpha\""));
  CHECK(contains(resolved, "\"space\": \"0,2,4,6\""));
}

TEST_CASE("end-to-end pipeline") {
  const fs::path dir = scratch();
  dpl_model* model = nullptr;
  REQUIRE(dpl_model_create(R"({"seed": 1})", &model) == DPL_OK);
  dpl_task* task = nullptr;
  REQUIRE(dpl_task_generate(model, R"({"seed": 2, "shots": 2, "test_per_label": 4})", &task) == DPL_OK);
  std::uint64_t c1 = 0, c2 = 0;
  REQUIRE(dpl_task_checksum(task, &c1) == DPL_OK);
  REQUIRE(dpl_task_save(task, (dir / "task.bin").c_str()) == DPL_OK);
  dpl_task* again = nullptr;
  REQUIRE(dpl_task_load((dir / "task.bin").c_str(), &again) == DPL_OK);
  REQUIRE(dpl_task_checksum(again, &c2) == DPL_OK);
  CHECK(c1 == c2);
  dpl_task_free(again);

  CHECK(dpl_task_generate(model, R"({"shots": 3})", &again) == DPL_ERR_INVALID_ARGUMENT);
  CHECK(contains(dpl_last_error(), "even"));

  dpl_search* search = nullptr;
  REQUIRE(dpl_search_run(model, task, "0,2,4,6", R"({"epochs": 1})", &search) == DPL_OK);
  const std::string cfg = text_of([&](char* b, std::size_t c, std::size_t* n) {
    return dpl_search_config_json(search, b, c, n);
  });
  CHECK(contains(cfg, "\"text\""));
  const std::string summary = text_of([&](char* b, std::size_t c, std::size_t* n) {
    return dpl_search_summary_json(search, b, c, n);
  });
  CHECK(contains(summary, "alpha_diff_text"));
  REQUIRE(dpl_search_write(search, (dir / "search").c_str()) == DPL_OK);
  CHECK(fs::exists(dir / "search" / "metrics.csv"));
  dpl_search_free(search);

  dpl_prompts* prompts = nullptr;
  REQUIRE(dpl_train_run(model, task, cfg.c_str(), R"({"epochs": 1})", &prompts) == DPL_OK);
  double acc = -1.0, zs = -1.0;
  REQUIRE(dpl_evaluate(model, task, prompts, &acc) == DPL_OK);
  REQUIRE(dpl_evaluate(model, task, nullptr, &zs) == DPL_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(zs >= 0.0);
  REQUIRE(dpl_prompts_save(prompts, (dir / "prompts.bin").c_str()) == DPL_OK);
  dpl_prompts* loaded = nullptr;
  REQUIRE(dpl_prompts_load(model, (dir / "prompts.bin").c_str(), &loaded) == DPL_OK);
  double acc2 = -1.0;
  REQUIRE(dpl_evaluate(model, task, loaded, &acc2) == DPL_OK);
  CHECK(acc == acc2);
  std::uint64_t n1 = 0, n2 = 0;
  dpl_prompts_num_params(prompts, &n1);
  dpl_prompts_num_params(loaded, &n2);
  CHECK(n1 == n2);
  dpl_prompts_free(loaded);
  dpl_prompts_free(prompts);

  CHECK(dpl_train_run(model, task, R"({"text":[2],"image":[2],"space":[0,2]})", nullptr, &prompts) ==
        DPL_ERR_INVALID_ARGUMENT);

  const std::string info = text_of([&](char* b, std::size_t c, std::size_t* n) {
    return dpl_inspect((dir / "task.bin").c_str(), b, c, n);
  });
  CHECK(contains(info, "task: 4 labels"));

  // Buffer too small: nothing copied, size still reported.
  char tiny[4] = {'x', 'x', 'x', 'x'};
  std::size_t needed = 0;
  CHECK(dpl_inspect((dir / "task.bin").c_str(), tiny, sizeof tiny, &needed) == DPL_OK);
  CHECK(needed > sizeof tiny);

  dpl_task_free(task);
  dpl_model_free(model);
}
