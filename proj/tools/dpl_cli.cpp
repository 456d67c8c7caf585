// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// dpl: generate / search / train / eval / inspect. Exit codes: 0 success,
// 2 usage or input error, 1 internal error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpl/dpl.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

struct Failure : std::runtime_error {
  Failure(int code, const std::string& msg) : std::runtime_error(msg), code(code) {}
  int code;
};

void check(dpl_status s, const std::string& what) {
  if (s == DPL_OK) return;
  throw Failure(s == DPL_ERR_INTERNAL ? kExitInternal : kExitUsage, what + ": " + dpl_last_error());
}

template <class F>
std::string fetch(F&& f, const std::string& what) {
  std::size_t needed = 0;
  check(f(nullptr, 0, &needed), what);
  std::string buf(needed, '\0');
  check(f(buf.data(), buf.size(), &needed), what);
  buf.resize(needed - 1);
  return buf;
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ModelPtr = std::unique_ptr<dpl_model, Deleter<dpl_model, dpl_model_free>>;
using TaskPtr = std::unique_ptr<dpl_task, Deleter<dpl_task, dpl_task_free>>;
using SearchPtr = std::unique_ptr<dpl_search, Deleter<dpl_search, dpl_search_free>>;
using PromptsPtr = std::unique_ptr<dpl_prompts, Deleter<dpl_prompts, dpl_prompts_free>>;

struct Options {
  std::string config_path;
  std::string out = "dpl_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> shots;
  std::optional<std::size_t> epochs_search;
  std::optional<std::size_t> epochs_train;
  std::optional<double> lambda;
  std::optional<std::string> space;
  std::optional<std::string> planted;
  bool shallow = false;
  std::size_t repeat = 1;
  std::string task_path;
  std::string model_path;
  std::string prompt_config_path;
  std::string prompts_path;
  std::string artifact;
};

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Failure(kExitUsage, "cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os << text;
  if (!os) throw Failure(kExitUsage, "cannot write '" + p.string() + "'");
}

// Config file, then flags, then defaults for everything still missing.
json resolve_run_config(const Options& o) {
  json run = json::object();
  if (!o.config_path.empty()) {
    try {
      run = json::parse(read_file(o.config_path));
    } catch (const json::exception& e) {
      throw Failure(kExitUsage, "malformed config '" + o.config_path + "': " + e.what());
    }
    if (!run.is_object()) throw Failure(kExitUsage, "config '" + o.config_path + "' must hold a JSON object");
  }
  std::string out = o.out;
  std::size_t repeat = o.repeat;
  bool shallow = o.shallow;
  if (run.contains("out") && o.out == "dpl_out") out = run["out"].get<std::string>();
  if (run.contains("repeat") && o.repeat == 1) repeat = run["repeat"].get<std::size_t>();
  if (run.contains("shallow_baseline")) shallow = shallow || run["shallow_baseline"].get<bool>();
  run.erase("out");
  run.erase("repeat");
  run.erase("shallow_baseline");
  if (o.seed) {
    run["task"]["seed"] = *o.seed;
    run["search"]["seed"] = *o.seed;
    run["train"]["seed"] = *o.seed;
  }
  if (o.shots) run["task"]["shots"] = *o.shots;
  if (o.epochs_search) run["search"]["epochs"] = *o.epochs_search;
  if (o.epochs_train) run["train"]["epochs"] = *o.epochs_train;
  if (o.lambda) run["train"]["lambda"] = *o.lambda;
  if (o.space) run["space"] = *o.space;
  if (o.planted) {
    if (*o.planted == "none") {
      run["task"]["planted"] = nullptr;
    } else if (*o.planted == "random") {
      run["task"]["planted"] = "random";
    } else {
      throw Failure(kExitUsage, "--planted must be 'random' or 'none'");
    }
  }
  const std::string text = run.dump();
  json resolved = json::parse(fetch(
      [&](char* b, std::size_t c, std::size_t* n) { return dpl_resolve_config(text.c_str(), b, c, n); },
      "invalid configuration"));
  resolved["out"] = out;
  resolved["repeat"] = repeat;
  resolved["shallow_baseline"] = shallow;
  return resolved;
}

fs::path prepare_out(const json& run) {
  fs::path dir = run["out"].get<std::string>();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Failure(kExitUsage, "cannot create output directory '" + dir.string() + "'");
  write_file(dir / "run_config.json", run.dump(2) + "\n");
  return dir;
}

ModelPtr open_model(const Options& o, const json& run) {
  dpl_model* m = nullptr;
  fs::path path = o.model_path;
  if (path.empty() && !o.task_path.empty()) {
    fs::path sibling = fs::path(o.task_path).parent_path() / "model.bin";
    if (fs::exists(sibling)) path = sibling;
  }
  if (!path.empty()) {
    check(dpl_model_load(path.string().c_str(), &m), "cannot load model");
  } else {
    check(dpl_model_create(run["model"].dump().c_str(), &m), "cannot build model");
  }
  return ModelPtr(m);
}

TaskPtr open_task(const Options& o) {
  if (o.task_path.empty()) throw Failure(kExitUsage, "--task is required");
  if (!fs::exists(o.task_path)) throw Failure(kExitUsage, "task file '" + o.task_path + "' does not exist");
  dpl_task* t = nullptr;
  check(dpl_task_load(o.task_path.c_str(), &t), "cannot load task");
  return TaskPtr(t);
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int cmd_generate(const Options& o) {
  json run = resolve_run_config(o);
  fs::path dir = prepare_out(run);
  dpl_model* m = nullptr;
  check(dpl_model_create(run["model"].dump().c_str(), &m), "cannot build model");
  ModelPtr model(m);
  dpl_task* t = nullptr;
  check(dpl_task_generate(model.get(), run["task"].dump().c_str(), &t), "cannot generate task");
  TaskPtr task(t);
  check(dpl_model_save(model.get(), (dir / "model.bin").string().c_str()), "cannot save model");
  check(dpl_task_save(task.get(), (dir / "task.bin").string().c_str()), "cannot save task");
  std::uint64_t sum = 0;
  check(dpl_task_checksum(task.get(), &sum), "checksum");
  std::cout << "task: " << (dir / "task.bin").string() << "\n";
  std::cout << "checksum: " << hex(sum) << "\n";
  json info = json::parse(fetch([&](char* b, std::size_t c, std::size_t* n) { return dpl_task_info_json(task.get(), b, c, n); },
                                "task info"));
  if (info.contains("zero_shot_acc")) {
    std::cout << "zero-shot acc: " << info["zero_shot_acc"] << ", planted acc: " << info["planted_acc"] << "\n";
  }
  return 0;
}

int cmd_search(const Options& o) {
  json run = resolve_run_config(o);
  TaskPtr task = open_task(o);
  ModelPtr model = open_model(o, run);
  fs::path dir = prepare_out(run);
  dpl_search* s = nullptr;
  check(dpl_search_run(model.get(), task.get(), run["space"].get<std::string>().c_str(), run["search"].dump().c_str(), &s),
        "search failed");
  SearchPtr search(s);
  check(dpl_search_write(search.get(), dir.string().c_str()), "cannot write search artifacts");
  json summary = json::parse(fetch(
      [&](char* b, std::size_t c, std::size_t* n) { return dpl_search_summary_json(search.get(), b, c, n); }, "summary"));
  std::cout << "config: "
            << fetch([&](char* b, std::size_t c, std::size_t* n) { return dpl_search_config_json(search.get(), b, c, n); },
                     "config")
            << "\n";
  std::printf("alpha difference: text %.6f, image %.6f\n", summary["alpha_diff_text"].get<double>(),
              summary["alpha_diff_image"].get<double>());
  std::cout << "dominants: text " << summary["dominants_text"] << ", image " << summary["dominants_image"] << "\n";
  return 0;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

int cmd_train(const Options& o) {
  json run = resolve_run_config(o);
  if (o.prompt_config_path.empty()) throw Failure(kExitUsage, "--prompt-config is required");
  const std::string prompt_config = read_file(o.prompt_config_path);
  TaskPtr task = open_task(o);
  ModelPtr model = open_model(o, run);
  const std::size_t repeat = run["repeat"].get<std::size_t>();
  if (repeat < 1) throw Failure(kExitUsage, "--repeat must be >= 1");
  fs::path dir = prepare_out(run);

  double zero_shot = 0.0;
  check(dpl_evaluate(model.get(), task.get(), nullptr, &zero_shot), "zero-shot evaluation failed");
  const bool shallow = run["shallow_baseline"].get<bool>();
  std::vector<double> dpl_acc, shallow_acc;
  json runs = json::array();
  std::uint64_t num_params = 0;
  for (std::size_t r = 0; r < repeat; ++r) {
    json train = run["train"];
    train["seed"] = train["seed"].get<std::uint64_t>() + r;
    fs::path rdir = repeat == 1 ? dir : dir / ("run_" + std::to_string(r + 1));
    fs::create_directories(rdir);
    dpl_prompts* p = nullptr;
    check(dpl_train_run(model.get(), task.get(), prompt_config.c_str(), train.dump().c_str(), &p), "training failed");
    PromptsPtr prompts(p);
    check(dpl_prompts_save(prompts.get(), (rdir / "prompts.bin").string().c_str()), "cannot save prompts");
    check(dpl_prompts_write_history(prompts.get(), (rdir / "train_loss.csv").string().c_str()),
          "cannot write loss history");
    check(dpl_prompts_num_params(prompts.get(), &num_params), "prompt count");
    double acc = 0.0;
    check(dpl_evaluate(model.get(), task.get(), prompts.get(), &acc), "evaluation failed");
    dpl_acc.push_back(acc);
    json entry = {{"seed", train["seed"]}, {"dpl_acc", acc}};
    if (shallow) {
      double sacc = 0.0;
      check(dpl_shallow_baseline(model.get(), task.get(), train.dump().c_str(), &sacc), "shallow baseline failed");
      shallow_acc.push_back(sacc);
      entry["shallow_acc"] = sacc;
    }
    runs.push_back(entry);
  }

  json report = {{"zero_shot_acc", zero_shot},
                 {"dpl_acc", mean(dpl_acc)},
                 {"lambda", run["train"]["lambda"]},
                 {"repeat", repeat},
                 {"prompt_params", num_params},
                 {"runs", runs}};
  if (shallow) report["shallow_acc"] = mean(shallow_acc);
  if (repeat > 1) {
    report["dpl_acc_mean"] = mean(dpl_acc);
    report["dpl_acc_std"] = stddev(dpl_acc);
    if (shallow) {
      report["shallow_acc_mean"] = mean(shallow_acc);
      report["shallow_acc_std"] = stddev(shallow_acc);
    }
  }
  write_file(dir / "report.json", report.dump(2) + "\n");
  std::printf("zero-shot acc: %.4f\n", zero_shot);
  std::printf("dpl acc: %.4f", mean(dpl_acc));
  if (repeat > 1) std::printf(" +- %.4f over %zu runs", stddev(dpl_acc), repeat);
  std::printf("\n");
  if (shallow) std::printf("shallow acc: %.4f\n", mean(shallow_acc));
  std::printf("lambda: %g\n", run["train"]["lambda"].get<double>());
  return 0;
}

int cmd_eval(const Options& o) {
  json run = resolve_run_config(o);
  TaskPtr task = open_task(o);
  ModelPtr model = open_model(o, run);
  PromptsPtr prompts;
  if (!o.prompts_path.empty()) {
    dpl_prompts* p = nullptr;
    check(dpl_prompts_load(model.get(), o.prompts_path.c_str(), &p), "cannot load prompts");
    prompts.reset(p);
  }
  double acc = 0.0;
  check(dpl_evaluate(model.get(), task.get(), prompts.get(), &acc), "evaluation failed");
  std::printf("%s acc: %.4f\n", prompts ? "prompted" : "zero-shot", acc);
  return 0;
}

int cmd_inspect(const Options& o) {
  if (!fs::exists(o.artifact)) throw Failure(kExitUsage, "no such file: '" + o.artifact + "'");
  std::cout << fetch([&](char* b, std::size_t c, std::size_t* n) { return dpl_inspect(o.artifact.c_str(), b, c, n); },
                     "cannot inspect '" + o.artifact + "'");
  return 0;
}

void add_run_flags(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config_path, "JSON run configuration");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--seed", o.seed, "seed for task, search and training");
  sub->add_option("--shots", o.shots, "shots per label");
  sub->add_option("--epochs-search", o.epochs_search, "search epochs");
  sub->add_option("--epochs-train", o.epochs_train, "training epochs");
  sub->add_option("--lambda", o.lambda, "distillation weight");
  sub->add_option("--space", o.space, "candidate lengths, e.g. \"0,2,4,6\"");
  sub->add_option("--planted", o.planted, "planted configuration: random or none");
  sub->add_flag("--shallow-baseline", o.shallow, "also train the length-16 first-layer baseline");
  sub->add_option("--repeat", o.repeat, "training runs with consecutive seeds");
  sub->add_option("--model", o.model_path, "model checkpoint (default: model.bin beside the task)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable prompt-length search on a miniature dual encoder"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "generate a synthetic few-shot task");
  add_run_flags(gen, o);
  auto* search = app.add_subcommand("search", "search per-layer prompt lengths");
  add_run_flags(search, o);
  search->add_option("--task", o.task_path, "task file")->required();
  auto* train = app.add_subcommand("train", "train and evaluate a searched configuration");
  add_run_flags(train, o);
  train->add_option("--task", o.task_path, "task file")->required();
  train->add_option("--prompt-config", o.prompt_config_path, "config.json from search")->required();
  auto* eval = app.add_subcommand("eval", "test accuracy of the zero-shot model or of trained prompts");
  add_run_flags(eval, o);
  eval->add_option("--task", o.task_path, "task file")->required();
  eval->add_option("--prompts", o.prompts_path, "prompts.bin from train");
  auto* inspect = app.add_subcommand("inspect", "summarize an artifact");
  inspect->add_option("artifact", o.artifact, "file to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*search) return cmd_search(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*inspect) return cmd_inspect(o);
  } catch (const Failure& f) {
    std::cerr << "dpl: " << f.what() << "\n";
    return f.code;
  } catch (const json::exception& e) {
    std::cerr << "dpl: bad configuration value: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "dpl: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
