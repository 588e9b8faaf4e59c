/*
 * Copyright 2026 The msprog Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "msprog/io.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(MSPROG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config(const char* name) { return (fs::path(MSPROG_SOURCE_DIR) / "configs" / name).string(); }

fs::path tmp(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("msprog_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Cli, HelpAndUsage) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("synth"), 2);
}

TEST(Cli, StagesSucceed) {
  const auto out = tmp("stages");
  const std::string common = " --config " + config("quick.json") + " --out " + out.string();
  EXPECT_EQ(run("synth" + common), 0);
  EXPECT_TRUE(fs::exists(out / "cohort.jsonl"));
  EXPECT_EQ(run("label" + common), 0);
  EXPECT_EQ(run("featurize" + common), 0);
  EXPECT_EQ(run("sparsity" + common), 0);
  EXPECT_TRUE(fs::exists(out / "sparsity.csv"));
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto dir = tmp("badcfg");
  fs::create_directories(dir);
  msprog::io::write_file_atomic(dir / "bad.json", R"({"cohort":{"synth":{}},"tasks":["nonsense"]})");
  EXPECT_EQ(run("synth --config " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run("synth --config " + (dir / "absent.json").string()), 2);
  msprog::io::write_file_atomic(dir / "broken.json", "{");
  EXPECT_EQ(run("synth --config " + (dir / "broken.json").string()), 2);
}

TEST(Cli, DataErrorsExitThree) {
  const auto out = tmp("data");
  EXPECT_EQ(run("train --config " + config("quick.json") + " --out " + out.string()), 3);
  fs::create_directories(out);
  msprog::io::write_file_atomic(out / "cohort.jsonl", "{\"v\":1,\"subject_id\":\n");
  EXPECT_EQ(run("label --config " + config("quick.json") + " --out " + out.string()), 3);
}
