// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "dpl/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "dpl/error.hpp"
#include "dpl/metrics.hpp"

namespace dpl::io {

using json = nlohmann::json;

namespace {

constexpr char kModelMagic[8] = {'D', 'P', 'L', 'M', 'O', 'D', 'E', 'L'};
constexpr char kTaskMagic[8] = {'D', 'P', 'L', 'T', 'A', 'S', 'K', '\0'};
constexpr char kPromptsMagic[8] = {'D', 'P', 'L', 'P', 'R', 'M', 'P', 'T'};
constexpr int kFormatVersion = 1;

json parse_json(const std::string& text, const char* what) {
  try {
    return text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed ") + what + " JSON: " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ContractError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ContractError(std::string("unknown key '") + key + "' in " + what);
    }
  }
}

template <class T>
void read_key(const json& j, const char* key, T& out, const char* what) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_integer() || it->template get<long long>() < 0) throw ContractError("");
    }
    out = it->template get<T>();
  } catch (const std::exception&) {
    throw ContractError(std::string("bad value for '") + key + "' in " + what + ": " + it->dump());
  }
}

std::vector<std::size_t> read_lengths(const json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array()) {
    throw ContractError(std::string(what) + " needs an integer array '" + key + "'");
  }
  std::vector<std::size_t> out;
  for (const auto& v : *it) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ContractError(std::string("'") + key + "' in " + what + " must hold non-negative integers");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

json branch_to_json(const BranchConfig& b) {
  return {{"depth", b.depth}, {"hidden_dim", b.hidden_dim}, {"num_heads", b.num_heads}, {"seq_len", b.seq_len}};
}

void branch_from_json(const json& j, BranchConfig& b, const char* what) {
  reject_unknown(j, {"depth", "hidden_dim", "num_heads", "seq_len"}, what);
  read_key(j, "depth", b.depth, what);
  read_key(j, "hidden_dim", b.hidden_dim, what);
  read_key(j, "num_heads", b.num_heads, what);
  read_key(j, "seq_len", b.seq_len, what);
}

json model_json(const ModelConfig& cfg, std::uint64_t seed) {
  return {{"seed", seed},
          {"text", branch_to_json(cfg.text)},
          {"image", branch_to_json(cfg.image)},
          {"embed_dim", cfg.embed_dim},
          {"tau", cfg.tau},
          {"ln_eps", cfg.ln_eps}};
}

json prompt_json(const PromptConfiguration& cfg) {
  return {{"text", cfg.text}, {"image", cfg.image}, {"space", cfg.space}};
}

PromptConfiguration prompt_from(const json& j, const char* what) {
  reject_unknown(j, {"text", "image", "space"}, what);
  PromptConfiguration cfg;
  cfg.text = read_lengths(j, "text", what);
  cfg.image = read_lengths(j, "image", what);
  cfg.space = read_lengths(j, "space", what);
  SearchSpace{cfg.space}.validate();
  for (const auto* branch : {&cfg.text, &cfg.image}) {
    for (auto c : *branch) {
      if (!SearchSpace{cfg.space}.contains(c)) {
        throw ContractError("length " + std::to_string(c) + " in " + what + " is not in the space " +
                            SearchSpace{cfg.space}.to_string());
      }
    }
  }
  return cfg;
}

json task_params_json(const TaskParams& p) {
  json j = {{"num_labels", p.num_labels},
            {"shots", p.shots},
            {"test_per_label", p.test_per_label},
            {"seed", p.seed},
            {"noise", p.noise},
            {"max_zero_shot_acc", p.max_zero_shot_acc},
            {"min_planted_acc", p.min_planted_acc},
            {"max_retries", p.max_retries},
            {"verify_epochs", p.verify_epochs},
            {"verify_lr", p.verify_lr},
            {"reuse_train_as_val", p.reuse_train_as_val}};
  if (p.planted) {
    json pj = prompt_json(p.planted->config);
    pj["margin"] = p.planted->margin;
    j["planted"] = pj;
  } else {
    j["planted"] = nullptr;
  }
  return j;
}

// ---- binary container -------------------------------------------------------

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
  os.write(b, 8);
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_container(const fs::path& path, const char (&magic)[8], const json& header,
                     const std::vector<double>& values) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string h = header.dump();
  os.write(magic, 8);
  put_u64(os, h.size());
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (double v : values) put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Container {
  json header;
  std::vector<double> values;
};

Container read_container(const fs::path& path, const char (&magic)[8], const char* what) {
  const std::string bytes = read_bytes(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), magic, 8) != 0) {
    throw FormatError("'" + path.string() + "' is not a " + what + " file");
  }
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t hlen = get_u64(u + 8);
  if (hlen > bytes.size() - 16) throw FormatError("truncated header in '" + path.string() + "'");
  Container c;
  c.header = parse_json(bytes.substr(16, hlen), what);
  const std::size_t body = bytes.size() - 16 - hlen;
  if (body % 8 != 0) throw FormatError("payload of '" + path.string() + "' is not a whole number of f64s");
  c.values.resize(body / 8);
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    c.values[i] = std::bit_cast<double>(get_u64(u + 16 + hlen + 8 * i));
  }
  if (!c.header.is_object() || c.header.value("version", 0) != kFormatVersion) {
    throw FormatError("unsupported " + std::string(what) + " version in '" + path.string() + "'");
  }
  if (c.header.value("num_values", std::size_t{0}) != c.values.size()) {
    throw FormatError("value count mismatch in '" + path.string() + "'");
  }
  return c;
}

void append(std::vector<double>& out, const Tensor& t) { out.insert(out.end(), t.values().begin(), t.values().end()); }

Tensor take(const std::vector<double>& values, std::size_t& pos, std::size_t rows, std::size_t cols) {
  if (pos + rows * cols > values.size()) throw FormatError("payload shorter than its header declares");
  std::vector<double> v(values.begin() + static_cast<std::ptrdiff_t>(pos),
                        values.begin() + static_cast<std::ptrdiff_t>(pos + rows * cols));
  pos += rows * cols;
  return Tensor::matrix(rows, cols, std::move(v));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int prec = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

}  // namespace

// ---- configuration JSON -----------------------------------------------------

ModelConfig model_config_from_json(const std::string& text, std::uint64_t* seed) {
  const json j = parse_json(text, "model config");
  reject_unknown(j, {"seed", "text", "image", "embed_dim", "tau", "ln_eps"}, "model config");
  ModelConfig cfg;
  if (j.contains("text")) branch_from_json(j["text"], cfg.text, "model.text");
  if (j.contains("image")) branch_from_json(j["image"], cfg.image, "model.image");
  read_key(j, "embed_dim", cfg.embed_dim, "model config");
  read_key(j, "tau", cfg.tau, "model config");
  read_key(j, "ln_eps", cfg.ln_eps, "model config");
  if (seed) read_key(j, "seed", *seed, "model config");
  cfg.validate();
  return cfg;
}

std::string model_config_to_json(const ModelConfig& cfg, std::uint64_t seed) { return model_json(cfg, seed).dump(); }

TaskParams task_params_from_json(const std::string& text, const ModelConfig& model) {
  const json j = parse_json(text, "task config");
  reject_unknown(j,
                 {"num_labels", "shots", "test_per_label", "seed", "noise", "planted", "planted_space",
                  "planted_margin", "max_zero_shot_acc", "min_planted_acc", "max_retries", "verify_epochs",
                  "verify_lr", "reuse_train_as_val"},
                 "task config");
  TaskParams p;
  read_key(j, "num_labels", p.num_labels, "task config");
  read_key(j, "shots", p.shots, "task config");
  read_key(j, "test_per_label", p.test_per_label, "task config");
  read_key(j, "seed", p.seed, "task config");
  read_key(j, "noise", p.noise, "task config");
  read_key(j, "max_zero_shot_acc", p.max_zero_shot_acc, "task config");
  read_key(j, "min_planted_acc", p.min_planted_acc, "task config");
  read_key(j, "max_retries", p.max_retries, "task config");
  read_key(j, "verify_epochs", p.verify_epochs, "task config");
  read_key(j, "verify_lr", p.verify_lr, "task config");
  read_key(j, "reuse_train_as_val", p.reuse_train_as_val, "task config");
  double margin = PlantedSpec{}.margin;
  read_key(j, "planted_margin", margin, "task config");
  auto it = j.find("planted");
  if (it != j.end() && !it->is_null()) {
    PlantedSpec ps;
    ps.margin = margin;
    if (it->is_string() && *it == "random") {
      SearchSpace space;
      if (j.contains("planted_space")) space = SearchSpace{read_lengths(j, "planted_space", "task config")};
      ps.config = draw_planted_config(model, space, p.seed);
    } else if (it->is_object()) {
      json pj = *it;
      if (pj.contains("margin")) {
        read_key(pj, "margin", ps.margin, "task.planted");
        pj.erase("margin");
      }
      ps.config = prompt_from(pj, "task.planted");
    } else {
      throw ContractError("task.planted must be null, \"random\" or a prompt configuration object");
    }
    ps.config.validate(model);
    p.planted = ps;
  }
  p.validate();
  return p;
}

std::string task_params_to_json(const TaskParams& params) { return task_params_json(params).dump(); }

SearchConfig search_config_from_json(const std::string& text) {
  const json j = parse_json(text, "search config");
  reject_unknown(j, {"epochs", "batch_size", "lr_alpha", "lr_prompts", "seed", "delta", "epsilon"}, "search config");
  SearchConfig c;
  read_key(j, "epochs", c.epochs, "search config");
  read_key(j, "batch_size", c.batch_size, "search config");
  read_key(j, "lr_alpha", c.lr_alpha, "search config");
  read_key(j, "lr_prompts", c.lr_prompts, "search config");
  read_key(j, "seed", c.seed, "search config");
  read_key(j, "delta", c.dominance.delta, "search config");
  read_key(j, "epsilon", c.dominance.epsilon, "search config");
  c.validate();
  return c;
}

std::string search_config_to_json(const SearchConfig& c) {
  return json{{"epochs", c.epochs},     {"batch_size", c.batch_size}, {"lr_alpha", c.lr_alpha},
              {"lr_prompts", c.lr_prompts}, {"seed", c.seed},          {"delta", c.dominance.delta},
              {"epsilon", c.dominance.epsilon}}
      .dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = parse_json(text, "train config");
  reject_unknown(j, {"epochs", "batch_size", "lr", "lambda", "distill", "seed"}, "train config");
  TrainConfig c;
  read_key(j, "epochs", c.epochs, "train config");
  read_key(j, "batch_size", c.batch_size, "train config");
  read_key(j, "lr", c.lr, "train config");
  read_key(j, "lambda", c.lambda, "train config");
  read_key(j, "distill", c.distill, "train config");
  read_key(j, "seed", c.seed, "train config");
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr},
              {"lambda", c.lambda}, {"distill", c.distill},       {"seed", c.seed}}
      .dump();
}

std::string prompt_config_to_json(const PromptConfiguration& cfg) { return prompt_json(cfg).dump(); }

PromptConfiguration prompt_config_from_json(const std::string& text) {
  return prompt_from(parse_json(text, "prompt configuration"), "prompt configuration");
}

// ---- model ------------------------------------------------------------------

void save_model(const Model& model, const fs::path& path) {
  std::vector<double> values;
  for (const auto& w : model.weights()) append(values, w);
  json h = {{"format", "dpl-model"}, {"version", kFormatVersion}, {"model", model_json(model.cfg, model.seed)},
            {"num_values", values.size()}};
  write_container(path, kModelMagic, h, values);
}

Model load_model(const fs::path& path) {
  Container c = read_container(path, kModelMagic, "model");
  std::uint64_t seed = 0;
  ModelConfig cfg = model_config_from_json(c.header.at("model").dump(), &seed);
  Model model = init_pretrained(seed, cfg);
  std::size_t pos = 0;
  for (auto& w : model.weights()) {
    auto dst = w.mutable_values();
    if (pos + dst.size() > c.values.size()) throw FormatError("model payload too short");
    std::copy_n(c.values.begin() + static_cast<std::ptrdiff_t>(pos), dst.size(), dst.begin());
    pos += dst.size();
  }
  if (pos != c.values.size()) throw FormatError("model payload has trailing values");
  return model;
}

// ---- task -------------------------------------------------------------------

void save_task(const FewShotTask& task, const fs::path& path) {
  std::vector<double> values;
  std::vector<std::size_t> train_labels, test_labels;
  for (const auto& t : task.prototypes) append(values, t);
  for (const auto& t : task.text_tokens) append(values, t);
  for (const auto& s : task.train) {
    append(values, s.patches);
    train_labels.push_back(s.label);
  }
  for (const auto& s : task.test) {
    append(values, s.patches);
    test_labels.push_back(s.label);
  }
  json h = {{"format", "dpl-task"},
            {"version", kFormatVersion},
            {"params", task_params_json(task.params)},
            {"text_content_len", task.text_content_len},
            {"text_dim", task.text_dim},
            {"image_patches", task.image_patches},
            {"image_dim", task.image_dim},
            {"train_labels", train_labels},
            {"test_labels", test_labels},
            {"num_values", values.size()}};
  if (task.verification) {
    h["verification"] = {{"zero_shot_acc", task.verification->zero_shot_acc},
                         {"planted_acc", task.verification->planted_acc},
                         {"attempts", task.verification->attempts}};
  } else {
    h["verification"] = nullptr;
  }
  write_container(path, kTaskMagic, h, values);
}

FewShotTask load_task(const fs::path& path) {
  Container c = read_container(path, kTaskMagic, "task");
  const json& h = c.header;
  FewShotTask task;
  try {
    const json& pj = h.at("params");
    TaskParams& p = task.params;
    p.num_labels = pj.at("num_labels");
    p.shots = pj.at("shots");
    p.test_per_label = pj.at("test_per_label");
    p.seed = pj.at("seed");
    p.noise = pj.at("noise");
    p.max_zero_shot_acc = pj.at("max_zero_shot_acc");
    p.min_planted_acc = pj.at("min_planted_acc");
    p.max_retries = pj.at("max_retries");
    p.verify_epochs = pj.at("verify_epochs");
    p.verify_lr = pj.at("verify_lr");
    p.reuse_train_as_val = pj.at("reuse_train_as_val");
    if (!pj.at("planted").is_null()) {
      json planted = pj.at("planted");
      PlantedSpec ps;
      ps.margin = planted.at("margin");
      planted.erase("margin");
      ps.config = prompt_from(planted, "task.planted");
      p.planted = ps;
    }
    task.text_content_len = h.at("text_content_len");
    task.text_dim = h.at("text_dim");
    task.image_patches = h.at("image_patches");
    task.image_dim = h.at("image_dim");
    const auto train_labels = h.at("train_labels").get<std::vector<std::size_t>>();
    const auto test_labels = h.at("test_labels").get<std::vector<std::size_t>>();
    std::size_t pos = 0;
    for (std::size_t i = 0; i < p.num_labels; ++i)
      task.prototypes.push_back(take(c.values, pos, task.image_patches, task.image_dim));
    for (std::size_t i = 0; i < p.num_labels; ++i)
      task.text_tokens.push_back(take(c.values, pos, task.text_content_len, task.text_dim));
    for (auto l : train_labels) task.train.push_back({take(c.values, pos, task.image_patches, task.image_dim), l});
    for (auto l : test_labels) task.test.push_back({take(c.values, pos, task.image_patches, task.image_dim), l});
    if (pos != c.values.size()) throw FormatError("task payload has trailing values");
    if (!h.at("verification").is_null()) {
      const json& v = h.at("verification");
      task.verification = PlantedVerification{v.at("zero_shot_acc"), v.at("planted_acc"), v.at("attempts")};
    }
  } catch (const json::exception& e) {
    throw FormatError("bad task header in '" + path.string() + "': " + e.what());
  }
  return task;
}

// ---- prompts ----------------------------------------------------------------

void save_prompts(const TrainedPrompts& prompts, const TrainConfig& cfg, const fs::path& path) {
  std::vector<double> values;
  for (const auto& t : prompts.parameters()) append(values, t);
  json h = {{"format", "dpl-prompts"},
            {"version", kFormatVersion},
            {"config", prompt_json(prompts.config)},
            {"train", json::parse(train_config_to_json(cfg))},
            {"num_values", values.size()}};
  write_container(path, kPromptsMagic, h, values);
}

TrainedPrompts load_prompts(const fs::path& path, const ModelConfig& model) {
  Container c = read_container(path, kPromptsMagic, "prompts");
  TrainedPrompts tp;
  tp.config = prompt_from(c.header.at("config"), "prompts config");
  tp.config.validate(model);
  std::size_t pos = 0;
  auto fill = [&](const std::vector<std::size_t>& lengths, std::size_t d, std::vector<Tensor>& out) {
    out.resize(lengths.size());
    for (std::size_t l = 0; l < lengths.size(); ++l)
      if (lengths[l] > 0) out[l] = take(c.values, pos, lengths[l], d);
  };
  fill(tp.config.text, model.text.hidden_dim, tp.text);
  fill(tp.config.image, model.image.hidden_dim, tp.image);
  if (pos != c.values.size()) throw FormatError("prompts payload does not match its configuration");
  return tp;
}

// ---- text artifacts ---------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) { return read_bytes(path); }

void write_search_artifacts(const SearchResult& result, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  write_text(dir / "config.json", prompt_config_to_json(result.config) + "\n");
  const auto& space = result.supprompt.space.lengths;
  auto alpha_csv = [&](bool text) {
    std::string s = "epoch,layer";
    for (auto c : space) s += ",len_" + std::to_string(c);
    s += "\n";
    for (const auto& rec : result.trace.epochs) {
      const Tensor& a = text ? rec.alpha_text : rec.alpha_image;
      for (std::size_t l = 0; l < a.rows(); ++l) {
        s += std::to_string(rec.epoch) + "," + std::to_string(l + 1);
        for (std::size_t j = 0; j < a.cols(); ++j) s += "," + fmt(a.at(l, j));
        s += "\n";
      }
    }
    return s;
  };
  write_text(dir / "alpha_trace_text.csv", alpha_csv(true));
  write_text(dir / "alpha_trace_image.csv", alpha_csv(false));
  std::string m = "epoch,alpha_diff_txt,alpha_diff_img,dominants_txt,dominants_img,train_loss,val_loss\n";
  for (const auto& r : result.trace.epochs) {
    m += std::to_string(r.epoch) + "," + fmt(r.alpha_diff_text) + "," + fmt(r.alpha_diff_image) + "," +
         std::to_string(r.dominants_text) + "," + std::to_string(r.dominants_image) + "," + fmt(r.train_loss) + "," +
         fmt(r.val_loss) + "\n";
  }
  write_text(dir / "metrics.csv", m);
}

void write_train_history(const TrainResult& result, const fs::path& path) {
  std::string s = "epoch,train_loss\n";
  s += "0," + fmt(result.initial_loss) + "\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) s += std::to_string(e + 1) + "," + fmt(result.epoch_loss[e]) + "\n";
  write_text(path, s);
}

// ---- inspect ----------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("not a number in CSV: '" + s + "'");
  }
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

// Rows are options, columns are layers; cells are the softmax weights.
std::string alpha_table(const Tensor& alpha, const std::vector<std::string>& option_names) {
  std::ostringstream os;
  os << pad("option", 8);
  for (std::size_t l = 0; l < alpha.rows(); ++l) os << pad("L" + std::to_string(l + 1), 9);
  os << "\n";
  std::vector<std::vector<double>> beta(alpha.rows());
  for (std::size_t l = 0; l < alpha.rows(); ++l) {
    double mx = alpha.at(l, 0);
    for (std::size_t j = 1; j < alpha.cols(); ++j) mx = std::max(mx, alpha.at(l, j));
    double z = 0.0;
    for (std::size_t j = 0; j < alpha.cols(); ++j) z += std::exp(alpha.at(l, j) - mx);
    for (std::size_t j = 0; j < alpha.cols(); ++j) beta[l].push_back(std::exp(alpha.at(l, j) - mx) / z);
  }
  for (std::size_t j = 0; j < alpha.cols(); ++j) {
    os << pad(option_names[j], 8);
    for (std::size_t l = 0; l < alpha.rows(); ++l) os << pad(fixed(beta[l][j]), 9);
    os << "\n";
  }
  return os.str();
}

std::string alpha_summary(const Tensor& alpha, const DominanceConfig& dc) {
  std::ostringstream os;
  os << "alpha difference: " << fixed(alpha_difference(alpha)) << "\n";
  os << "dominants: " << num_dominants(alpha, dc) << " of " << alpha.rows() * (alpha.cols() - 1) << "\n";
  os << "single-dominant: " << (is_single_dominant(alpha, dc) ? "true" : "false") << "\n";
  auto fragile = fragile_rows(alpha, dc.epsilon);
  os << "fragile rows:";
  if (fragile.empty()) os << " none";
  for (auto r : fragile) os << " L" << r + 1;
  os << "\n";
  return os.str();
}

std::string inspect_alpha_trace(const std::vector<std::vector<std::string>>& rows) {
  const auto& header = rows.front();
  std::vector<std::string> options;
  for (std::size_t i = 2; i < header.size(); ++i) {
    if (header[i].rfind("len_", 0) != 0) throw FormatError("unexpected alpha trace column '" + header[i] + "'");
    options.push_back(header[i].substr(4));
  }
  if (options.empty()) throw FormatError("alpha trace has no option columns");
  std::vector<std::pair<std::size_t, std::vector<double>>> epochs;  // epoch -> flattened rows
  std::size_t depth = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) throw FormatError("ragged alpha trace row " + std::to_string(r + 1));
    const auto epoch = static_cast<std::size_t>(to_double(rows[r][0]));
    if (epochs.empty() || epochs.back().first != epoch) epochs.push_back({epoch, {}});
    for (std::size_t i = 2; i < rows[r].size(); ++i) epochs.back().second.push_back(to_double(rows[r][i]));
  }
  if (epochs.empty()) return "alpha trace: no epochs recorded\n";
  depth = epochs.front().second.size() / options.size();
  auto tensor = [&](const std::vector<double>& v) {
    if (v.size() != depth * options.size()) throw FormatError("alpha trace epochs differ in depth");
    return Tensor::matrix(depth, options.size(), v);
  };
  const Tensor first = tensor(epochs.front().second), last = tensor(epochs.back().second);
  std::ostringstream os;
  os << "alpha trace: " << epochs.size() << " epochs, " << depth << " layers, options {";
  for (std::size_t j = 0; j < options.size(); ++j) os << (j ? "," : "") << options[j];
  os << "}\n";
  os << "first alpha difference (epoch " << epochs.front().first << "): " << fixed(alpha_difference(first)) << "\n";
  os << "last alpha difference (epoch " << epochs.back().first << "): " << fixed(alpha_difference(last)) << "\n";
  os << "final softmax(alpha):\n" << alpha_table(last, options);
  os << alpha_summary(last, DominanceConfig{});
  return os.str();
}

std::string inspect_metrics(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  os << "search metrics: " << rows.size() - 1 << " epochs\n";
  if (rows.size() < 2) return os.str();
  const auto& f = rows[1];
  const auto& l = rows.back();
  os << "alpha difference text: " << fixed(to_double(f[1])) << " -> " << fixed(to_double(l[1])) << "\n";
  os << "alpha difference image: " << fixed(to_double(f[2])) << " -> " << fixed(to_double(l[2])) << "\n";
  os << "dominants text/image (last): " << l[3] << " / " << l[4] << "\n";
  os << "train/val loss (last): " << fixed(to_double(l[5])) << " / " << fixed(to_double(l[6])) << "\n";
  return os.str();
}

ModelConfig sibling_model_config(const fs::path& path) {
  const fs::path run = path.parent_path() / "run_config.json";
  if (fs::exists(run)) {
    json j = parse_json(read_text(run), "run config");
    if (j.contains("model")) return model_config_from_json(j["model"].dump());
  }
  return ModelConfig{};
}

std::string inspect_prompt_config(const PromptConfiguration& cfg, const ModelConfig& model) {
  std::ostringstream os;
  auto lengths = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
    return s;
  };
  const std::size_t pt = branch_prompt_params(cfg.text, model.text.hidden_dim);
  const std::size_t pi = branch_prompt_params(cfg.image, model.image.hidden_dim);
  os << "prompt configuration, space {" << SearchSpace{cfg.space}.to_string() << "}\n";
  os << "text lengths:  " << lengths(cfg.text) << "  (" << pt << " params, d=" << model.text.hidden_dim << ")\n";
  os << "image lengths: " << lengths(cfg.image) << "  (" << pi << " params, d=" << model.image.hidden_dim << ")\n";
  os << "total prompt parameters: " << pt + pi << "\n";
  return os.str();
}

}  // namespace

std::string inspect(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: '" + path.string() + "'");
  const std::string bytes = read_bytes(path);
  auto starts = [&](const char (&m)[8]) { return bytes.size() >= 8 && std::memcmp(bytes.data(), m, 8) == 0; };
  std::ostringstream os;
  if (starts(kModelMagic)) {
    Model m = load_model(path);
    os << "model: seed " << m.seed << ", checksum " << m.checksum() << "\n";
    for (const auto* b : {&m.cfg.text, &m.cfg.image}) {
      os << (b == &m.cfg.text ? "text" : "image") << " branch: depth " << b->depth << ", width " << b->hidden_dim
         << ", heads " << b->num_heads << ", seq_len " << b->seq_len << "\n";
    }
    std::size_t n = 0;
    for (const auto& w : m.weights()) n += w.size();
    os << "frozen parameters: " << n << "\n";
    return os.str();
  }
  if (starts(kTaskMagic)) {
    FewShotTask t = load_task(path);
    os << "task: " << t.num_labels() << " labels, " << t.params.shots << " shots, " << t.test.size()
       << " test samples, seed " << t.params.seed << ", checksum " << t.checksum() << "\n";
    if (t.params.planted) {
      os << "planted " << inspect_prompt_config(t.params.planted->config, sibling_model_config(path));
    }
    if (t.verification) {
      os << "verification: zero-shot acc " << fixed(t.verification->zero_shot_acc) << ", planted acc "
         << fixed(t.verification->planted_acc) << ", attempts " << t.verification->attempts << "\n";
    }
    return os.str();
  }
  if (starts(kPromptsMagic)) {
    const ModelConfig model = sibling_model_config(path);
    TrainedPrompts tp = load_prompts(path, model);
    os << "trained prompts: " << tp.num_params() << " values\n" << inspect_prompt_config(tp.config, model);
    return os.str();
  }
  const std::string ext = path.extension().string();
  if (ext == ".json") {
    json j = parse_json(bytes, "artifact");
    if (j.is_object() && j.contains("text") && j.contains("image") && j.contains("space")) {
      return inspect_prompt_config(prompt_from(j, path.filename().string().c_str()), sibling_model_config(path));
    }
    return j.dump(2) + "\n";
  }
  if (ext == ".csv") {
    const auto rows = parse_csv(bytes);
    if (rows.empty()) throw FormatError("empty CSV '" + path.string() + "'");
    const auto& h = rows.front();
    if (h.size() >= 3 && h[0] == "epoch" && h[1] == "layer") return inspect_alpha_trace(rows);
    if (h.size() == 7 && h[0] == "epoch" && h[1] == "alpha_diff_txt") return inspect_metrics(rows);
    if (h.size() == 2 && h[0] == "epoch" && h[1] == "train_loss") {
      os << "training loss: " << fixed(to_double(rows[1][1])) << " -> " << fixed(to_double(rows.back()[1])) << " over "
         << rows.size() - 2 << " epochs\n";
      return os.str();
    }
  }
  throw FormatError("unrecognized artifact format: '" + path.string() + "'");
}

}  // namespace dpl::io
