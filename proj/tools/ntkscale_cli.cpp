// Copyright 2026 The ntkscale Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver: run, validate, list-kinds.

#include "CLI11.hpp"
#include "json.hpp"
#include "ntkscale/experiment.hpp"

#include <fstream>
#include <iostream>

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

nlohmann::json load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ntkscale::InvalidParameter("cannot open config " + path);
  return nlohmann::json::parse(in);
}

int report(const ntkscale::ValidationReport& r) {
  for (const auto& i : r.issues) {
    const bool err = i.severity == ntkscale::ValidationIssue::Severity::kError;
    std::cerr << (err ? "error: " : "warning: ") << i.message << '\n';
  }
  return r.ok() ? kOk : kInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel spectra and loss scaling lab"};
  app.require_subcommand(1);
  std::string config_path;
  std::string output_root;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config_path, "Path to a JSON config")->required();
  run->add_option("-o,--output-root", output_root,
                  std::string("Output root (default $") + ntkscale::kOutputRootEnv + ")");
  run->add_flag("-q,--quiet", quiet, "Suppress stage log");

  auto* validate = app.add_subcommand("validate", "Validate a config without running it");
  validate->add_option("config", config_path, "Path to a JSON config")->required();

  app.add_subcommand("list-kinds", "List experiment kinds");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("list-kinds")) {
    for (const auto& k : ntkscale::experiment_kinds()) std::cout << k << '\n';
    return kOk;
  }

  nlohmann::json config;
  try {
    config = load(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  const int status = report(ntkscale::validate_config(config));
  if (status != kOk || app.got_subcommand("validate")) {
    if (status == kOk) std::cout << "ok\n";
    return status;
  }
  if (!output_root.empty() && !config.contains("output_dir")) {
    const std::string name = config.value("name", config.value("kind", std::string("run")));
    config["output_dir"] = (std::filesystem::path(output_root) / name).string();
  }
  try {
    const auto result = ntkscale::run_experiment(config, quiet ? nullptr : &std::cerr);
    std::cout << result.output_dir.string() << '\n';
  } catch (const ntkscale::StageError& e) {
    std::cerr << "error in stage " << e.stage() << ": " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
