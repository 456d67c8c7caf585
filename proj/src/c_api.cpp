// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "dpl/dpl.h"

#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "dpl/error.hpp"
#include "dpl/io.hpp"
#include "dpl/metrics.hpp"

struct dpl_model {
  dpl::Model model;
};
struct dpl_task {
  dpl::FewShotTask task;
};
struct dpl_search {
  dpl::SearchResult result;
  dpl::SearchConfig config;
};
struct dpl_prompts {
  dpl::TrainedPrompts prompts;
  dpl::TrainConfig config;
  dpl::TrainResult history;
};

namespace {

thread_local std::string g_last_error;

dpl_status fail(dpl_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Maps every exception escaping the core onto a status code.
template <class F>
dpl_status guard(F&& f) {
  try {
    g_last_error.clear();
    f();
    return DPL_OK;
  } catch (const dpl::DimensionError& e) {
    return fail(DPL_ERR_DIMENSION, e.what());
  } catch (const dpl::IoError& e) {
    return fail(DPL_ERR_IO, e.what());
  } catch (const dpl::FormatError& e) {
    return fail(DPL_ERR_FORMAT, e.what());
  } catch (const dpl::GenerationError& e) {
    return fail(DPL_ERR_GENERATION, e.what());
  } catch (const dpl::ContractError& e) {
    return fail(DPL_ERR_INVALID_ARGUMENT, e.what());
  } catch (const dpl::IndexError& e) {
    return fail(DPL_ERR_INVALID_ARGUMENT, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(DPL_ERR_FORMAT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DPL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DPL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DPL_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) throw dpl::ContractError(std::string(name) + " must not be NULL");
}

std::string str(const char* s) { return s ? std::string(s) : std::string(); }

void copy_out(const std::string& text, char* buf, std::size_t cap, std::size_t* needed) {
  require(needed, "needed");
  *needed = text.size() + 1;
  if (buf != nullptr && cap >= text.size() + 1) std::memcpy(buf, text.c_str(), text.size() + 1);
}

}  // namespace

extern "C" {

const char* dpl_version(void) { return "0.1.0"; }

const char* dpl_last_error(void) { return g_last_error.c_str(); }

const char* dpl_status_name(dpl_status status) {
  switch (status) {
    case DPL_OK: return "ok";
    case DPL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DPL_ERR_DIMENSION: return "dimension mismatch";
    case DPL_ERR_IO: return "i/o error";
    case DPL_ERR_FORMAT: return "format error";
    case DPL_ERR_GENERATION: return "generation error";
    case DPL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

dpl_status dpl_resolve_config(const char* run_json, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    using nlohmann::json;
    const std::string text = str(run_json);
    json in = text.empty() ? json::object() : json::parse(text);
    if (!in.is_object()) throw dpl::ContractError("run configuration must be a JSON object");
    for (const auto& [key, _] : in.items()) {
      if (key != "model" && key != "task" && key != "space" && key != "search" && key != "train") {
        throw dpl::ContractError("unknown key '" + key + "' in run configuration");
      }
    }
    auto section = [&](const char* key) { return in.contains(key) ? in[key].dump() : std::string(); };
    std::uint64_t seed = 0;
    const auto model = dpl::io::model_config_from_json(section("model"), &seed);
    dpl::SearchSpace space;
    if (in.contains("space")) {
      if (!in["space"].is_string()) throw dpl::ContractError("space must be a string such as \"0,2,4,6\"");
      space = dpl::SearchSpace::parse(in["space"].get<std::string>());
    }
    json task = in.contains("task") ? in["task"] : json::object();
    if (task.is_object() && task.value("planted", json()) == "random" && !task.contains("planted_space")) {
      task["planted_space"] = space.lengths;
    }
    json out = {{"model", json::parse(dpl::io::model_config_to_json(model, seed))},
                {"task", json::parse(dpl::io::task_params_to_json(dpl::io::task_params_from_json(task.dump(), model)))},
                {"space", space.to_string()},
                {"search", json::parse(dpl::io::search_config_to_json(dpl::io::search_config_from_json(section("search"))))},
                {"train", json::parse(dpl::io::train_config_to_json(dpl::io::train_config_from_json(section("train"))))}};
    copy_out(out.dump(2), buf, cap, needed);
  });
}

dpl_status dpl_model_create(const char* config_json, dpl_model** out) {
  return guard([&] {
    require(out, "out");
    std::uint64_t seed = 0;
    auto cfg = dpl::io::model_config_from_json(str(config_json), &seed);
    *out = new dpl_model{dpl::init_pretrained(seed, cfg)};
  });
}

dpl_status dpl_model_load(const char* path, dpl_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new dpl_model{dpl::io::load_model(path)};
  });
}

dpl_status dpl_model_save(const dpl_model* model, const char* path) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    dpl::io::save_model(model->model, path);
  });
}

dpl_status dpl_model_checksum(const dpl_model* model, uint64_t* out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    *out = model->model.checksum();
  });
}

dpl_status dpl_model_config_json(const dpl_model* model, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    require(model, "model");
    copy_out(dpl::io::model_config_to_json(model->model.cfg, model->model.seed), buf, cap, needed);
  });
}

void dpl_model_free(dpl_model* model) { delete model; }

dpl_status dpl_task_generate(const dpl_model* model, const char* params_json, dpl_task** out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    auto params = dpl::io::task_params_from_json(str(params_json), model->model.cfg);
    *out = new dpl_task{dpl::generate_task(model->model, params)};
  });
}

dpl_status dpl_task_load(const char* path, dpl_task** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new dpl_task{dpl::io::load_task(path)};
  });
}

dpl_status dpl_task_save(const dpl_task* task, const char* path) {
  return guard([&] {
    require(task, "task");
    require(path, "path");
    dpl::io::save_task(task->task, path);
  });
}

dpl_status dpl_task_checksum(const dpl_task* task, uint64_t* out) {
  return guard([&] {
    require(task, "task");
    require(out, "out");
    *out = task->task.checksum();
  });
}

dpl_status dpl_task_info_json(const dpl_task* task, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    require(task, "task");
    const auto& t = task->task;
    nlohmann::json j = nlohmann::json::parse(dpl::io::task_params_to_json(t.params));
    j["train_size"] = t.train.size();
    j["test_size"] = t.test.size();
    if (t.verification) {
      j["zero_shot_acc"] = t.verification->zero_shot_acc;
      j["planted_acc"] = t.verification->planted_acc;
      j["attempts"] = t.verification->attempts;
    }
    copy_out(j.dump(), buf, cap, needed);
  });
}

void dpl_task_free(dpl_task* task) { delete task; }

dpl_status dpl_search_run(const dpl_model* model, const dpl_task* task, const char* space,
                          const char* search_json, dpl_search** out) {
  return guard([&] {
    require(model, "model");
    require(task, "task");
    require(out, "out");
    dpl::SearchSpace sp = space && *space ? dpl::SearchSpace::parse(space) : dpl::SearchSpace{};
    auto cfg = dpl::io::search_config_from_json(str(search_json));
    *out = new dpl_search{dpl::run_search(model->model, task->task, sp, cfg), cfg};
  });
}

dpl_status dpl_search_config_json(const dpl_search* search, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    require(search, "search");
    copy_out(dpl::io::prompt_config_to_json(search->result.config), buf, cap, needed);
  });
}

dpl_status dpl_search_summary_json(const dpl_search* search, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    require(search, "search");
    const auto& sp = search->result.supprompt;
    const auto& dc = search->config.dominance;
    nlohmann::json j = {{"epochs", search->result.trace.epochs.size()},
                        {"alpha_diff_text", dpl::alpha_difference(sp.text.alpha)},
                        {"alpha_diff_image", dpl::alpha_difference(sp.image.alpha)},
                        {"dominants_text", dpl::num_dominants(sp.text.alpha, dc)},
                        {"dominants_image", dpl::num_dominants(sp.image.alpha, dc)},
                        {"single_dominant_text", dpl::is_single_dominant(sp.text.alpha, dc)},
                        {"single_dominant_image", dpl::is_single_dominant(sp.image.alpha, dc)}};
    copy_out(j.dump(), buf, cap, needed);
  });
}

dpl_status dpl_search_write(const dpl_search* search, const char* out_dir) {
  return guard([&] {
    require(search, "search");
    require(out_dir, "out_dir");
    dpl::io::write_search_artifacts(search->result, out_dir);
  });
}

void dpl_search_free(dpl_search* search) { delete search; }

dpl_status dpl_train_run(const dpl_model* model, const dpl_task* task, const char* prompt_config_json,
                         const char* train_json, dpl_prompts** out) {
  return guard([&] {
    require(model, "model");
    require(task, "task");
    require(prompt_config_json, "prompt_config_json");
    require(out, "out");
    auto pc = dpl::io::prompt_config_from_json(prompt_config_json);
    pc.validate(model->model.cfg);
    auto cfg = dpl::io::train_config_from_json(str(train_json));
    auto result = dpl::train_subprompt(model->model, task->task, pc, cfg);
    *out = new dpl_prompts{result.prompts, cfg, result};
  });
}

dpl_status dpl_prompts_save(const dpl_prompts* prompts, const char* path) {
  return guard([&] {
    require(prompts, "prompts");
    require(path, "path");
    dpl::io::save_prompts(prompts->prompts, prompts->config, path);
  });
}

dpl_status dpl_prompts_load(const dpl_model* model, const char* path, dpl_prompts** out) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    require(out, "out");
    *out = new dpl_prompts{dpl::io::load_prompts(path, model->model.cfg), {}, {}};
  });
}

dpl_status dpl_prompts_write_history(const dpl_prompts* prompts, const char* path) {
  return guard([&] {
    require(prompts, "prompts");
    require(path, "path");
    dpl::io::write_train_history(prompts->history, path);
  });
}

dpl_status dpl_prompts_num_params(const dpl_prompts* prompts, uint64_t* out) {
  return guard([&] {
    require(prompts, "prompts");
    require(out, "out");
    *out = prompts->prompts.num_params();
  });
}

void dpl_prompts_free(dpl_prompts* prompts) { delete prompts; }

dpl_status dpl_evaluate(const dpl_model* model, const dpl_task* task, const dpl_prompts* prompts,
                        double* accuracy) {
  return guard([&] {
    require(model, "model");
    require(task, "task");
    require(accuracy, "accuracy");
    *accuracy = dpl::evaluate(model->model, task->task, prompts ? &prompts->prompts : nullptr);
  });
}

dpl_status dpl_shallow_baseline(const dpl_model* model, const dpl_task* task, const char* train_json,
                                double* accuracy) {
  return guard([&] {
    require(model, "model");
    require(task, "task");
    require(accuracy, "accuracy");
    auto cfg = dpl::io::train_config_from_json(str(train_json));
    *accuracy = dpl::shallow_baseline(model->model, task->task, cfg).accuracy;
  });
}

dpl_status dpl_inspect(const char* path, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    require(path, "path");
    copy_out(dpl::io::inspect(path), buf, cap, needed);
  });
}

dpl_status dpl_search_space_size(const char* space, size_t depth_text, size_t depth_image, char* buf, size_t cap,
                                 size_t* needed) {
  return guard([&] {
    require(space, "space");
    copy_out(dpl::search_space_size(dpl::SearchSpace::parse(space), depth_text, depth_image), buf, cap, needed);
  });
}

dpl_status dpl_subprompt_params(const char* prompt_config_json, size_t dim_text, size_t dim_image, uint64_t* out) {
  return guard([&] {
    require(prompt_config_json, "prompt_config_json");
    require(out, "out");
    *out = dpl::subprompt_params(dpl::io::prompt_config_from_json(prompt_config_json), dim_text, dim_image);
  });
}

}  // extern "C"
