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

#include "doctest.h"
#include "ntkscale/experiment.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ntkscale;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json base_config(const std::string& kind) {
  return {{"kind", kind},
          {"seed", 1},
          {"M", 200},
          {"mc_samples", 5000},
          {"surface_samples", 5000},
          {"distribution", {{"type", "gaussian_mixture"}, {"dim", 2}, {"n_g", 8}, {"sigma", 0.5}}},
          {"kernel", {{"type", "shallow_relu_ntk"}, {"sigma_w", 1.0}, {"sigma_b", 1.0}}},
          {"target", {{"type", "ball_indicator"}, {"radius", 0.5}, {"jump", 1.0}}}};
}

bool has_error(const ValidationReport& r, const std::string& needle) {
  for (const auto& i : r.issues)
    if (i.severity == ValidationIssue::Severity::kError && i.message.find(needle) != std::string::npos)
      return true;
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  return fs::temp_directory_path() / "ntkscale_unit" / name;
}

}  // namespace

TEST_CASE("experiment kinds") {
  const auto& k = experiment_kinds();
  CHECK(k.size() == 8);
  CHECK(std::find(k.begin(), k.end(), "degeneracy") != k.end());
}

TEST_CASE("valid config gives an empty report") {
  for (const auto& kind : {"spectrum", "coefficients", "linearized-loss"})
    CHECK(validate_config(base_config(kind)).issues.empty());
}

TEST_CASE("validation errors") {
  json c = base_config("linearized-loss");
  c["time_grid"] = {{"t_min", 1.0}, {"t_max", 10.0}, {"count", 0}};
  CHECK(has_error(validate_config(c), "empty time grid"));
  c["time_grid"] = json::array();
  CHECK(has_error(validate_config(c), "empty time grid"));

  json q = base_config("q-sweep");
  q["kernel"] = {{"type", "relu_power_q"}, {"q", 1.0}};
  q["q_values"] = {0.75, 1.5};
  CHECK(has_error(validate_config(q), "half-integer"));
  json qs = base_config("spectrum");
  qs["kernel"] = {{"type", "relu_power_q"}, {"q", 2.5}};
  CHECK(has_error(validate_config(qs), "half-integer"));

  json unknown = base_config("spectrum");
  unknown["kind"] = "bogus";
  CHECK_FALSE(validate_config(unknown).ok());

  json window = base_config("spectrum");
  window["fit_window"] = {{"n_min", 10}, {"n_max", 15}};
  CHECK(has_error(validate_config(window), "fit_window"));

  json bad_dist = base_config("spectrum");
  bad_dist["distribution"]["sigma"] = -1.0;
  CHECK(has_error(validate_config(bad_dist), "distribution"));

  json ft = base_config("finite-training");
  ft["training"] = {{"width", 100}};
  ft["kernel"]["type"] = "shallow_relu_cov";
  CHECK(has_error(validate_config(ft), "shallow_relu_ntk"));

  CHECK_FALSE(validate_config(json::array()).ok());
}

TEST_CASE("large M warns without failing") {
  json c = base_config("spectrum");
  c["M"] = 6000;
  const auto r = validate_config(c);
  CHECK(r.ok());
  REQUIRE(r.issues.size() == 1);
  CHECK(r.issues[0].severity == ValidationIssue::Severity::kWarning);
}

TEST_CASE("run rejects an invalid config before computing") {
  json c = base_config("linearized-loss");
  c["time_grid"] = {{"t_min", 1.0}, {"t_max", 10.0}, {"count", 0}};
  c["output_dir"] = scratch("never").string();
  CHECK_THROWS_AS(run_experiment(c), InvalidParameter);
  CHECK_FALSE(fs::exists(scratch("never")));
}

TEST_CASE("linearized-loss run writes versioned artifacts reproducibly") {
  json c = base_config("linearized-loss");
  c["output_dir"] = scratch("loss_a").string();
  const RunResult a = run_experiment(c);
  c["output_dir"] = scratch("loss_b").string();
  const RunResult b = run_experiment(c);
  for (const char* f : {"eigenvalues.csv", "coefficients.csv", "loss.csv", "fits.csv"}) {
    const std::string text = slurp(a.output_dir / f);
    CHECK(text.rfind("# ntkscale artifact=", 0) == 0);
    CHECK(text.find("version=1") != std::string::npos);
    CHECK(text == slurp(b.output_dir / f));
  }
  CHECK(slurp(a.output_dir / "fits.csv").find("rel_dev_exponent") != std::string::npos);
  const json s = json::parse(slurp(a.output_dir / "summary.json"));
  CHECK(s["prediction"]["xi"].get<double>() ==
        s["prediction"]["kappa"].get<double>() / s["prediction"]["nu"].get<double>());
  CHECK(s["fitted"].contains("xi"));
  CHECK(s["relative_deviation"].contains("C"));
  CHECK(s["artifact_version"] == 1);
}

TEST_CASE("runtime failures name the stage") {
  json c = base_config("spectrum");
  c["kernel"] = {{"type", "mf_empirical"}, {"checkpoint", "/nonexistent/ckpt.txt"}};
  CHECK_FALSE(validate_config(c).ok());

  json d = base_config("coefficients");
  d["target"] = {{"type", "gp"},
                 {"covariance", {{"type", "shallow_relu_cov"}, {"sigma_w", 2.0}, {"sigma_b", 1.0}}}};
  d["output_dir"] = scratch("fail").string();
  REQUIRE(validate_config(d).ok());
  try {
    run_experiment(d);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "theory");
  }
}

TEST_CASE("default output root follows the environment") {
  setenv(kOutputRootEnv, "/tmp/ntkscale_env_root", 1);
  CHECK(default_output_root() == fs::path("/tmp/ntkscale_env_root"));
  unsetenv(kOutputRootEnv);
  CHECK(default_output_root() == fs::path("ntkscale_out"));
}
