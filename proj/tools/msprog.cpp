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

#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "msprog/error.hpp"
#include "msprog/log.hpp"
#include "msprog/pipeline.hpp"

namespace {

using msprog::pipeline::ExperimentConfig;

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

int fail(msprog::ErrorKind kind, const std::string& code, const std::string& message) {
  const char* k = kind == msprog::ErrorKind::Config ? "config" : kind == msprog::ErrorKind::Data ? "data" : "internal";
  std::fprintf(stderr, "msprog: error kind=%s code=%s message=%s\n", k, code.c_str(), quote(message).c_str());
  return msprog::exit_code_for(kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msprog: longitudinal MS cohort pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  app.set_version_flag("--version", std::string(msprog::pipeline::kVersion));

  using Stage = std::function<void(const ExperimentConfig&)>;
  const std::map<std::string, std::pair<std::string, Stage>> commands{
      {"synth", {"generate a synthetic cohort", msprog::pipeline::stage_cohort}},
      {"ingest", {"map CSV sources onto the common format", msprog::pipeline::stage_cohort}},
      {"label", {"annotate trigger events with task labels", msprog::pipeline::stage_label}},
      {"featurize", {"build tabular and sequence instances", msprog::pipeline::stage_featurize}},
      {"train", {"cross-validate every model on every task", msprog::pipeline::stage_train}},
      {"evaluate", {"compute per-fold and subgroup metrics", msprog::pipeline::stage_evaluate}},
      {"ablate", {"cross-validate per feature group", msprog::pipeline::stage_ablate}},
      {"sparsity", {"count subjects observing each feature per time bucket", msprog::pipeline::stage_sparsity}},
      {"report", {"join metrics into summary tables", msprog::pipeline::stage_report}},
      {"run", {"run every stage", msprog::pipeline::run_all}},
  };
  std::map<std::string, CLI::App*> subs;
  std::string run_target = "all";
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config,-c", config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "override the experiment seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--jobs,-j", jobs, "worker threads for folds");
    if (name == "run") sub->add_option("target", run_target, "stage set (only `all`)")->check(CLI::IsMember({"all"}));
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(msprog::ErrorKind::Config, "USAGE", e.what());
  }

  try {
    (void)msprog::log::threshold();
    auto config = msprog::pipeline::load_experiment(config_path);
    if (seed) {
      config.seed = *seed;
      config.seed_overridden = true;
    }
    if (out) config.out_dir = *out;
    if (jobs) config.jobs = std::max<std::size_t>(1, *jobs);
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      using Kind = msprog::pipeline::CohortSource::Kind;
      if (name == "synth" && config.cohort.kind != Kind::Synth)
        throw msprog::config_error("WRONG_COHORT_SOURCE", "`synth` needs a synth cohort source");
      if (name == "ingest" && config.cohort.kind != Kind::Ingest)
        throw msprog::config_error("WRONG_COHORT_SOURCE", "`ingest` needs an ingest cohort source");
      msprog::log::info("running " + name);
      commands.at(name).second(config);
    }
  } catch (const msprog::Error& e) {
    return fail(e.kind(), e.code(), e.what());
  } catch (const std::exception& e) {
    return fail(msprog::ErrorKind::Internal, "UNEXPECTED", e.what());
  }
  return 0;
}
