// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Drives the built `dpl` executable as a subprocess.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#ifndef DPL_CLI_PATH
#error "DPL_CLI_PATH must name the dpl executable"
#endif

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "dpl_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run dpl(const std::string& args) {
  const fs::path log = workdir() / "last_output.txt";
  const std::string cmd = "cd '" + workdir().string() + "' && '" + std::string(DPL_CLI_PATH) + "' " + args + " > '" +
                          log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(log);
  return r;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

// Shared small task: two shots per label keeps every command fast.
const fs::path& small_task() {
  static const fs::path task = [] {
    const Run r = dpl("generate --out gen_small --shots 2 --seed 3");
    REQUIRE(r.code == 0);
    return workdir() / "gen_small" / "task.bin";
  }();
  return task;
}

}  // namespace

TEST_CASE("generate writes a reloadable task with a stable checksum") {
  const Run a = dpl("generate --out gen_a");
  const Run b = dpl("generate --out gen_b");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(contains(a.out, "checksum: "));
  const auto sum = a.out.substr(a.out.find("checksum: "));
  CHECK(sum == b.out.substr(b.out.find("checksum: ")));
  CHECK(fs::exists(workdir() / "gen_a" / "task.bin"));
  CHECK(fs::exists(workdir() / "gen_a" / "run_config.json"));
  const Run info = dpl("inspect gen_a/task.bin");
  CHECK(info.code == 0);
  CHECK(contains(info.out, "task: 4 labels, 16 shots"));
}

TEST_CASE("generate reports usage errors with exit code 2") {
  const Run odd = dpl("generate --out gen_odd --shots 3");
  CHECK(odd.code == 2);
  CHECK(contains(odd.out, "even"));
  CHECK(dpl("generate --out /proc/dpl_cannot_write").code == 2);
  CHECK(dpl("generate --no-such-flag").code == 2);
  CHECK(dpl("").code == 2);
}

TEST_CASE("search artifacts") {
  const std::string task = small_task().string();
  const Run zero = dpl("search --task '" + task + "' --out s0 --epochs-search 0");
  REQUIRE(zero.code == 0);
  CHECK(fs::exists(workdir() / "s0" / "config.json"));
  CHECK(contains(zero.out, "dominants"));

  const Run a = dpl("search --task '" + task + "' --out s1 --epochs-search 2 --seed 5");
  const Run b = dpl("search --task '" + task + "' --out s2 --epochs-search 2 --seed 5");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(workdir() / "s1" / "config.json") == slurp(workdir() / "s2" / "config.json"));
  CHECK(slurp(workdir() / "s1" / "alpha_trace_text.csv") == slurp(workdir() / "s2" / "alpha_trace_text.csv"));
  CHECK(count_lines(workdir() / "s1" / "metrics.csv") == 1 + 2);
  CHECK(fs::exists(workdir() / "s1" / "run_config.json"));

  const Run cfg = dpl("inspect s1/config.json");
  CHECK(cfg.code == 0);
  CHECK(contains(cfg.out, "total prompt parameters"));
  const Run trace = dpl("inspect s1/alpha_trace_image.csv");
  CHECK(trace.code == 0);
  CHECK(contains(trace.out, "first alpha difference"));
  CHECK(contains(trace.out, "last alpha difference"));
  CHECK(contains(trace.out, "single-dominant: "));

  CHECK(dpl("search --task missing.bin --out s3").code == 2);
}

TEST_CASE("train writes a report") {
  const std::string task = small_task().string();
  {
    std::ofstream cfg(workdir() / "cfg.json");
    cfg << R"({"text": [2, 0, 0, 4], "image": [0, 6, 0, 0], "space": [0, 2, 4, 6]})";
  }
  const Run r = dpl("train --task '" + task + "' --prompt-config cfg.json --out t1 --epochs-train 1");
  REQUIRE(r.code == 0);
  const std::string report = slurp(workdir() / "t1" / "report.json");
  CHECK(contains(report, "\"zero_shot_acc\""));
  CHECK(contains(report, "\"dpl_acc\""));
  CHECK(contains(report, "\"lambda\": 0"));
  CHECK(fs::exists(workdir() / "t1" / "prompts.bin"));
  CHECK(fs::exists(workdir() / "t1" / "train_loss.csv"));
  CHECK(count_lines(workdir() / "t1" / "train_loss.csv") == 1 + 2);

  const Run rep = dpl("train --task '" + task +
                      "' --prompt-config cfg.json --out t2 --epochs-train 1 --repeat 3 --lambda 1 --shallow-baseline");
  REQUIRE(rep.code == 0);
  const std::string r3 = slurp(workdir() / "t2" / "report.json");
  CHECK(contains(r3, "\"dpl_acc_mean\""));
  CHECK(contains(r3, "\"dpl_acc_std\""));
  CHECK(contains(r3, "\"shallow_acc\""));
  CHECK(contains(r3, "\"lambda\": 1"));
  CHECK(fs::exists(workdir() / "t2" / "run_3" / "prompts.bin"));

  const Run ev = dpl("eval --task '" + task + "' --prompts t1/prompts.bin");
  CHECK(ev.code == 0);
  CHECK(contains(dpl("inspect t1/prompts.bin").out, "trained prompts"));

  {
    std::ofstream bad(workdir() / "bad_cfg.json");
    bad << R"({"text": [2, 0], "image": [0, 6], "space": [0, 2, 4, 6]})";
  }
  CHECK(dpl("train --task '" + task + "' --prompt-config bad_cfg.json --out t3").code == 2);
}

TEST_CASE("inspect rejects unknown formats") {
  {
    std::ofstream junk(workdir() / "junk.dat");
    junk << "neither json nor a known artifact";
  }
  CHECK(dpl("inspect junk.dat").code == 2);
  CHECK(dpl("inspect does_not_exist.bin").code == 2);
}

TEST_CASE("inspect of a one-hot alpha trace reports single dominance") {
  {
    std::ofstream csv(workdir() / "alpha_trace_text.csv");
    csv << "epoch,layer,len_0,len_2,len_4,len_6\n";
    for (int l = 1; l <= 4; ++l) csv << "1," << l << ",0,0,0,40\n";
  }
  const Run r = dpl("inspect alpha_trace_text.csv");
  CHECK(r.code == 0);
  CHECK(contains(r.out, "single-dominant: true"));
}
