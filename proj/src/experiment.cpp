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

#include "ntkscale/experiment.hpp"

#include "ntkscale/gram.hpp"
#include "ntkscale/rng.hpp"
#include "ntkscale/spectral.hpp"
#include "ntkscale/theory.hpp"
#include "ntkscale/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

namespace ntkscale {

namespace fs = std::filesystem;
using json = nlohmann::json;

bool ValidationReport::ok() const {
  return std::none_of(issues.begin(), issues.end(), [](const ValidationIssue& i) {
    return i.severity == ValidationIssue::Severity::kError;
  });
}

StageError::StageError(std::string stage, const std::string& what)
    : Error(stage + ": " + what), stage_(std::move(stage)) {}

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {
      "spectrum",         "coefficients", "linearized-loss", "finite-training",
      "mf-training",      "q-sweep",      "depth-sweep",     "degeneracy"};
  return kinds;
}

namespace {

template <class T>
T value_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double rel_dev(double fitted, double predicted) {
  if (!std::isfinite(fitted) || !std::isfinite(predicted) || predicted == 0.0)
    return std::numeric_limits<double>::quiet_NaN();
  return std::abs(fitted / predicted - 1.0);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::string& artifact,
            const std::vector<std::string>& columns)
      : out_(path) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
    out_ << "# ntkscale artifact=" << artifact << " version=" << kArtifactVersion << '\n';
    row(columns);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

struct Seeds {
  std::uint64_t data = 0;
  std::uint64_t target = 0;
  std::uint64_t network = 0;
  std::uint64_t mc = 0;
};

Seeds parse_seeds(const json& c) {
  const auto s = value_or<std::uint64_t>(c, "seed", 0);
  Seeds out;
  out.data = value_or<std::uint64_t>(c, "data_seed", s);
  out.target = value_or<std::uint64_t>(c, "target_seed", derive_seed(s, Stream::kTarget));
  out.network = value_or<std::uint64_t>(c, "network_seed", derive_seed(s, Stream::kNetwork));
  out.mc = value_or<std::uint64_t>(c, "mc_seed", derive_seed(s, Stream::kMonteCarlo));
  return out;
}

template <class F>
auto run_stage(const char* name, std::ostream* log, F&& f) -> decltype(f()) {
  if (log) *log << "[" << name << "]" << std::endl;
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

json fit_json(const PowerLawFit& f) {
  return {{"coefficient", num(f.coefficient)},
          {"exponent", num(f.exponent)},
          {"n_min", f.n_min},
          {"n_max", f.n_max},
          {"residual", num(f.residual)}};
}

json provenance_json(const std::map<std::string, std::string>& p) {
  json out = json::object();
  for (const auto& [k, v] : p) out[k] = v;
  return out;
}

std::string scenario_name(const TargetSpec& t) {
  return std::holds_alternative<BallIndicator>(t) ? "indicator" : "gp";
}

struct Context {
  json config;
  Seeds seeds;
  std::ostream* log = nullptr;
  fs::path out_dir;
  std::size_t m = 0;
  std::size_t mc_samples = 100000;
  std::size_t surface_samples = 100000;
  std::vector<json> fit_rows;
};

struct SpectrumRun {
  Dataset data;
  KernelSpec kernel;
  SpectralDecomposition decomp;
  FitWindow window;
  PowerLawFit fit;
  std::optional<EigenvalueAsymptote> eig;
  std::optional<Dataset> mc;
};

FitWindow window_for(const Context& ctx, int d) {
  FitWindow w = default_window(ctx.m, d);
  if (ctx.config.contains("fit_window")) {
    const json& fw = ctx.config.at("fit_window");
    w.n_min = value_or<std::size_t>(fw, "n_min", w.n_min);
    w.n_max = value_or<std::size_t>(fw, "n_max", w.n_max);
  }
  return w;
}

Dataset sample_data(const Context& ctx, const DistributionSpec& mu) {
  const bool sym = value_or<bool>(ctx.config, "symmetrize", false) && is_symmetric(mu);
  return sym ? sample_symmetrized(mu, ctx.m, ctx.seeds.data) : sample(mu, ctx.m, ctx.seeds.data);
}

SpectrumRun run_spectrum(Context& ctx, const KernelSpec& kernel, const DistributionSpec& mu,
                         bool theory) {
  SpectrumRun run;
  run.kernel = kernel;
  run.data = run_stage("sample", ctx.log, [&] { return sample_data(ctx, mu); });
  run.decomp = run_stage("eigendecompose", ctx.log, [&] {
    return eigendecompose(build_operator_matrix(run.data, kernel));
  });
  run.window = window_for(ctx, mu.dim);
  run.fit = run_stage("fit", ctx.log, [&] { return fit_eigenvalues(run.decomp, run.window); });
  if (theory) {
    run.mc = run_stage("sample", ctx.log, [&] { return sample(mu, ctx.mc_samples, ctx.seeds.mc); });
    run.eig = run_stage("theory", ctx.log, [&] { return eigenvalue_asymptote(kernel, *run.mc); });
  }
  return run;
}

void write_eigenvalues(CsvWriter& csv, const std::string& label, const SpectrumRun& run) {
  const double nu = run.eig ? run.eig->nu : std::numeric_limits<double>::quiet_NaN();
  const double lam = run.eig ? run.eig->lambda : std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index n = 0; n < run.decomp.size(); ++n) {
    const double pred = n == 0 ? std::numeric_limits<double>::quiet_NaN()
                               : lam * std::pow(static_cast<double>(n), -nu);
    const double val = run.decomp.eigenvalues[n];
    csv.row({label, std::to_string(n), fmt(val), fmt(pred), fmt(rel_dev(val, pred))});
  }
}

void add_fit_row(Context& ctx, const std::string& label, const std::string& quantity,
                 const PowerLawFit& fit, double pred_coef, double pred_exp) {
  ctx.fit_rows.push_back({{"label", label},
                          {"quantity", quantity},
                          {"coefficient", fit.coefficient},
                          {"exponent", fit.exponent},
                          {"n_min", fit.n_min},
                          {"n_max", fit.n_max},
                          {"residual", fit.residual},
                          {"predicted_coefficient", pred_coef},
                          {"predicted_exponent", pred_exp}});
}

void write_fits(const Context& ctx) {
  CsvWriter csv(ctx.out_dir / "fits.csv", "fits",
                {"label", "quantity", "coefficient", "exponent", "window_min", "window_max",
                 "residual", "predicted_coefficient", "predicted_exponent",
                 "rel_dev_coefficient", "rel_dev_exponent"});
  for (const auto& r : ctx.fit_rows) {
    const double c = r["coefficient"], e = r["exponent"];
    const double pc = r["predicted_coefficient"], pe = r["predicted_exponent"];
    csv.row({r["label"].get<std::string>(), r["quantity"].get<std::string>(), fmt(c), fmt(e),
             std::to_string(r["n_min"].get<std::size_t>()),
             std::to_string(r["n_max"].get<std::size_t>()), fmt(r["residual"]), fmt(pc), fmt(pe),
             fmt(rel_dev(c, pc)), fmt(rel_dev(e, pe))});
  }
}

// Prediction, fitted values and relative deviations for one configuration.
struct Comparison {
  std::map<std::string, double> predicted;
  std::map<std::string, double> fitted;
  std::map<std::string, std::string> provenance;

  json to_json() const {
    json p = json::object();
    for (const auto& [k, v] : predicted) p[k] = num(v);
    p["provenance"] = provenance_json(provenance);
    json f = json::object();
    json d = json::object();
    for (const auto& [k, v] : fitted) {
      f[k] = num(v);
      if (predicted.count(k)) d[k] = num(rel_dev(v, predicted.at(k)));
    }
    return {{"prediction", p}, {"fitted", f}, {"relative_deviation", d}};
  }
};

Comparison spectrum_comparison(const SpectrumRun& run) {
  Comparison cmp;
  cmp.fitted["nu"] = run.fit.exponent;
  cmp.fitted["Lambda"] = run.fit.coefficient;
  if (run.eig) {
    cmp.predicted["nu"] = run.eig->nu;
    cmp.predicted["Lambda"] = run.eig->lambda;
    cmp.provenance = run.eig->provenance;
  }
  return cmp;
}

struct TargetRun {
  TargetSpec spec;
  Eigen::VectorXd g;
  CoefficientProfile profile;
  PowerLawFit fit;
  std::optional<LossCoefficient> loss;
  std::optional<CoefficientAsymptote> coef;
  double jitter = 0.0;
};

std::optional<LossCoefficient> target_theory(Context& ctx, const SpectrumRun& run,
                                             const TargetSpec& target) {
  if (!run.eig || !std::isfinite(run.eig->lambda)) return std::nullopt;
  if (const auto* ball = std::get_if<BallIndicator>(&target)) {
    return loss_coefficient_indicator(run.kernel, run.data.spec, ball->radius, ball->jump,
                                      ctx.surface_samples, ctx.seeds.mc);
  }
  const auto& gp = std::get<GpDraw>(target);
  if (!std::holds_alternative<ShallowReluCov>(gp.covariance.family)) return std::nullopt;
  const double floor = value_or<double>(ctx.config, "density_floor", 1e-6);
  return loss_coefficient_gp(run.kernel, gp.covariance, *run.mc, floor);
}

TargetRun run_target(Context& ctx, const SpectrumRun& run, const Eigen::VectorXd* g_override) {
  TargetRun tr;
  tr.spec = parse_target(ctx.config.at("target"), run.kernel, ctx.seeds.target);
  if (g_override) {
    tr.g = *g_override;
  } else {
    const TargetRealization real =
        run_stage("target", ctx.log, [&] { return realize_target_detailed(tr.spec, run.data); });
    tr.g = real.g;
    tr.jitter = real.jitter;
  }
  tr.profile = expansion_coefficients(tr.g, run.decomp);
  tr.fit = run_stage("fit", ctx.log, [&] {
    return fit_tail_band({tr.profile.s.data(), static_cast<std::size_t>(tr.profile.s.size())},
                         run.window);
  });
  tr.loss = run_stage("theory", ctx.log, [&] { return target_theory(ctx, run, tr.spec); });
  if (tr.loss) {
    const double beta = std::holds_alternative<GpDraw>(tr.spec)
                            ? singularity_info(std::get<GpDraw>(tr.spec).covariance).degree
                            : 0.0;
    tr.coef = coefficient_asymptote(*tr.loss, run.data.dim(),
                                    singularity_info(run.kernel).degree, beta,
                                    run.eig->lambda_integral.mean);
  }
  return tr;
}

void add_target_prediction(Comparison& cmp, const SpectrumRun& run, const TargetRun& tr) {
  cmp.fitted["kappa"] = tr.fit.exponent;
  cmp.fitted["K"] = tr.fit.coefficient;
  if (tr.loss && tr.coef) {
    const AsymptoticPrediction p = assemble_prediction(*run.eig, *tr.coef, *tr.loss);
    cmp.predicted["nu"] = p.nu;
    cmp.predicted["Lambda"] = p.lambda;
    cmp.predicted["kappa"] = p.kappa;
    cmp.predicted["K"] = p.k;
    cmp.predicted["xi"] = p.xi;
    cmp.predicted["C"] = p.c;
    cmp.provenance = p.provenance;
  }
}

void write_coefficients(const Context& ctx, const TargetRun& tr) {
  CsvWriter csv(ctx.out_dir / "coefficients.csv", "coefficients",
                {"n", "g_coefficient", "tail_sum", "predicted_tail_sum", "rel_dev"});
  const double k = tr.coef ? tr.coef->k : std::numeric_limits<double>::quiet_NaN();
  const double kappa = tr.coef ? tr.coef->kappa : std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index n = 0; n < tr.profile.c.size(); ++n) {
    const double pred = n == 0 ? std::numeric_limits<double>::quiet_NaN()
                               : k * std::pow(static_cast<double>(n), -kappa);
    csv.row({std::to_string(n), fmt(tr.profile.c[n]), fmt(tr.profile.s[n]), fmt(pred),
             fmt(rel_dev(tr.profile.s[n], pred))});
  }
}

std::vector<double> time_grid(const Context& ctx, const SpectrumRun& run) {
  if (ctx.config.contains("time_grid")) {
    const json& tg = ctx.config.at("time_grid");
    return log_space(tg.at("t_min").get<double>(), tg.at("t_max").get<double>(),
                     tg.at("count").get<std::size_t>());
  }
  const double lo = 0.5 / run.decomp.eigenvalues[static_cast<Eigen::Index>(run.fit.n_min)];
  const double hi = 0.5 / run.decomp.eigenvalues[static_cast<Eigen::Index>(run.fit.n_max - 1)];
  return log_space(lo, hi, 60);
}

struct LossFit {
  PowerLawFit fit;
  double c_fixed_exponent = std::numeric_limits<double>::quiet_NaN();
};

// Fits L(t) - L(2t); the coefficient is rescaled to L(t) ~ C t^{-xi}.
LossFit fit_loss_band(const std::vector<double>& t, const std::vector<double>& l,
                      const std::vector<double>& l2, double xi_theory) {
  std::vector<double> band(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) band[i] = l[i] - l2[i];
  LossFit out;
  out.fit = fit_power_law_xy(t, band);
  out.fit.coefficient /= 1.0 - std::pow(2.0, -out.fit.exponent);
  if (std::isfinite(xi_theory)) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += std::log(band[i] * std::pow(t[i], xi_theory));
    out.c_fixed_exponent = std::exp(acc / static_cast<double>(t.size())) /
                           (1.0 - std::pow(2.0, -xi_theory));
  }
  return out;
}

json summary_header(const Context& ctx) {
  return {{"artifact_version", kArtifactVersion},
          {"kind", ctx.config.at("kind")},
          {"config", ctx.config}};
}

json run_spectral_kind(Context& ctx, const std::string& kind) {
  const DistributionSpec mu = parse_distribution(ctx.config.at("distribution"), ctx.seeds.data);
  const KernelSpec kernel = parse_kernel(ctx.config.at("kernel"));
  const bool theory = !singularity_info(kernel).empirical_only;
  SpectrumRun run = run_spectrum(ctx, kernel, mu, theory);
  {
    CsvWriter csv(ctx.out_dir / "eigenvalues.csv", "eigenvalues",
                  {"label", "n", "lambda", "predicted_lambda", "rel_dev"});
    write_eigenvalues(csv, kind_name(kernel), run);
  }
  Comparison cmp = spectrum_comparison(run);
  add_fit_row(ctx, kind_name(kernel), "eigenvalues", run.fit,
              run.eig ? run.eig->lambda : NAN, run.eig ? run.eig->nu : NAN);
  json diag = {{"eigenvalue_fit", fit_json(run.fit)},
               {"clamped_negative_eigenvalues", run.decomp.clamped_negative},
               {"most_negative_eigenvalue", run.decomp.most_negative}};
  if (run.eig && run.eig->closed_form)
    diag["Lambda_closed_form_deviation"] = run.eig->closed_form_deviation;

  if (kind != "spectrum") {
    const TargetRun tr = run_target(ctx, run, nullptr);
    write_coefficients(ctx, tr);
    add_target_prediction(cmp, run, tr);
    add_fit_row(ctx, scenario_name(tr.spec), "tail_sums", tr.fit,
                tr.coef ? tr.coef->k : NAN, tr.coef ? tr.coef->kappa : NAN);
    diag["tail_fit"] = fit_json(tr.fit);
    diag["target_jitter"] = tr.jitter;
    if (tr.loss) {
      diag["loss_integral"] = {{"mean", tr.loss->integral.mean},
                               {"std_error", tr.loss->integral.std_error}};
      diag["density_floor_truncated_fraction"] = tr.loss->truncated_fraction;
    }
    if (kind == "linearized-loss") {
      const std::vector<double> t = time_grid(ctx, run);
      std::vector<double> t2(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) t2[i] = 2.0 * t[i];
      const auto l = loss_trajectory(run.decomp, tr.profile.c, t);
      const auto l2 = loss_trajectory(run.decomp, tr.profile.c, t2);
      const double xi_pred = cmp.predicted.count("xi") ? cmp.predicted["xi"] : NAN;
      const double c_pred = cmp.predicted.count("C") ? cmp.predicted["C"] : NAN;
      const LossFit lf = run_stage("fit", ctx.log, [&] { return fit_loss_band(t, l, l2, xi_pred); });
      CsvWriter csv(ctx.out_dir / "loss.csv", "linearized_loss",
                    {"t", "loss", "predicted_loss", "rel_dev"});
      const double l0 = loss_trajectory(run.decomp, tr.profile.c, std::vector<double>{0.0})[0];
      csv.row({"0", fmt(l0), "nan", "nan"});
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double pred = c_pred * std::pow(t[i], -xi_pred);
        csv.row({fmt(t[i]), fmt(l[i]), fmt(pred), fmt(rel_dev(l[i], pred))});
      }
      cmp.fitted["xi"] = lf.fit.exponent;
      cmp.fitted["C"] = lf.c_fixed_exponent;
      cmp.fitted["C_free_exponent"] = lf.fit.coefficient;
      add_fit_row(ctx, scenario_name(tr.spec), "loss", lf.fit, c_pred, xi_pred);
      diag["loss_fit"] = fit_json(lf.fit);
      diag["time_window"] = {t.front(), t.back()};
    }
  }
  json s = summary_header(ctx);
  s.update(cmp.to_json());
  s["diagnostics"] = diag;
  return s;
}

json run_sweep(Context& ctx, const std::string& kind) {
  const DistributionSpec mu = parse_distribution(ctx.config.at("distribution"), ctx.seeds.data);
  const KernelSpec base = parse_kernel(ctx.config.at("kernel"));
  std::vector<std::pair<std::string, KernelSpec>> kernels;
  if (kind == "q-sweep") {
    for (double q : ctx.config.at("q_values").get<std::vector<double>>()) {
      KernelSpec k = base;
      k.family = ReluPowerQ{q};
      kernels.emplace_back("q=" + fmt(q), k);
    }
  } else {
    for (int depth : ctx.config.at("depths").get<std::vector<int>>()) {
      KernelSpec k = base;
      k.family = DeepRelu{depth};
      kernels.emplace_back("L=" + std::to_string(depth), k);
    }
  }
  CsvWriter csv(ctx.out_dir / "eigenvalues.csv", "eigenvalues",
                {"label", "n", "lambda", "predicted_lambda", "rel_dev"});
  json runs = json::array();
  json diag = json::object();
  for (const auto& [label, kernel] : kernels) {
    if (ctx.log) *ctx.log << "-- " << label << std::endl;
    const SpectrumRun run = run_spectrum(ctx, kernel, mu, true);
    write_eigenvalues(csv, label, run);
    add_fit_row(ctx, label, "eigenvalues", run.fit, run.eig->lambda, run.eig->nu);
    json entry = spectrum_comparison(run).to_json();
    entry["label"] = label;
    entry["eigenvalue_fit"] = fit_json(run.fit);
    if (run.eig->closed_form) entry["Lambda_closed_form_deviation"] = run.eig->closed_form_deviation;
    runs.push_back(entry);
    if (kind == "depth-sweep" && std::get<DeepRelu>(kernel.family).depth == 2) {
      double worst = 0.0;
      const Eigen::Index n = std::min<Eigen::Index>(run.data.size(), 200);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
          const double deep = evaluate(kernel, run.data.point(i), run.data.point(j));
          const double shallow =
              ntk_shallow_relu(geometry(run.data.point(i), run.data.point(j), kernel.sigma_w,
                                        kernel.sigma_b),
                               kernel.sigma_w)
                  .theta;
          worst = std::max(worst, std::abs(deep / shallow - 1.0));
        }
      }
      diag["depth2_vs_shallow_max_rel_dev"] = worst;
    }
  }
  json s = summary_header(ctx);
  s["runs"] = runs;
  s["diagnostics"] = diag;
  return s;
}

std::size_t count_near_degenerate(const SpectralDecomposition& d, std::size_t top, double gap) {
  std::size_t count = 0;
  const std::size_t n = std::min<std::size_t>(top, static_cast<std::size_t>(d.size()));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double a = d.eigenvalues[static_cast<Eigen::Index>(i)];
    const double b = d.eigenvalues[static_cast<Eigen::Index>(i + 1)];
    if (a > 0.0 && (a - b) / a < gap) ++count;
  }
  return count;
}

json run_degeneracy(Context& ctx) {
  const KernelSpec kernel = parse_kernel(ctx.config.at("kernel"));
  const json& dj = ctx.config.at("degeneracy");
  const std::size_t top = value_or<std::size_t>(dj, "top", 200);
  const double gap = value_or<double>(dj, "gap", 1e-3);
  CsvWriter csv(ctx.out_dir / "degeneracy.csv", "degeneracy",
                {"distribution", "n", "lambda", "relative_gap"});
  json runs = json::array();
  for (const json& spec_json : dj.at("distributions")) {
    const DistributionSpec mu = parse_distribution(spec_json, ctx.seeds.data);
    const std::string label = kind_name(mu);
    if (ctx.log) *ctx.log << "-- " << label << std::endl;
    const SpectrumRun run = run_spectrum(ctx, kernel, mu, false);
    const std::size_t count = count_near_degenerate(run.decomp, top, gap);
    for (Eigen::Index n = 0; n < run.decomp.size(); ++n) {
      const double a = run.decomp.eigenvalues[n];
      const double rg = n + 1 < run.decomp.size() && a > 0.0
                            ? (a - run.decomp.eigenvalues[n + 1]) / a
                            : std::numeric_limits<double>::quiet_NaN();
      csv.row({label, std::to_string(n), fmt(a), fmt(rg)});
    }
    add_fit_row(ctx, label, "eigenvalues", run.fit, NAN,
                eigen_exponent(mu.dim, singularity_info(kernel).degree));
    Comparison cmp;
    cmp.fitted["nu"] = run.fit.exponent;
    cmp.predicted["nu"] = eigen_exponent(mu.dim, singularity_info(kernel).degree);
    json entry = cmp.to_json();
    entry["label"] = label;
    entry["symmetrized"] = value_or<bool>(ctx.config, "symmetrize", false) && is_symmetric(mu);
    entry["near_degenerate_pairs"] = count;
    runs.push_back(entry);
  }
  json s = summary_header(ctx);
  s["runs"] = runs;
  s["diagnostics"] = {{"top", top}, {"gap", gap}};
  return s;
}

std::vector<std::size_t> log_steps(std::size_t lo, std::size_t hi, std::size_t count) {
  std::set<std::size_t> s;
  for (double v : log_space(static_cast<double>(lo), static_cast<double>(hi), count))
    s.insert(static_cast<std::size_t>(std::llround(v)));
  return {s.begin(), s.end()};
}

json run_finite_training(Context& ctx) {
  const DistributionSpec mu = parse_distribution(ctx.config.at("distribution"), ctx.seeds.data);
  const KernelSpec kernel = parse_kernel(ctx.config.at("kernel"));
  const json& tj = ctx.config.at("training");
  SpectrumRun run = run_spectrum(ctx, kernel, mu, true);
  const TargetSpec target = parse_target(ctx.config.at("target"), kernel, ctx.seeds.target);
  const Eigen::VectorXd f =
      run_stage("target", ctx.log, [&] { return realize_target(target, run.data); });
  ShallowNet net = init(Parametrization::kNtk, value_or<Eigen::Index>(tj, "width", 2000),
                        mu.dim, kernel.sigma_w, kernel.sigma_b, ctx.seeds.network);
  const Eigen::VectorXd g = forward_batch(net, run.data.points) - f;
  const TargetRun tr = run_target(ctx, run, &g);
  const double eta = value_or<double>(tj, "lr_factor", 0.9) * critical_lr(run.decomp);
  const double decades = value_or<double>(tj, "decades", 3.0);

  const auto lin_at = [&](std::size_t k) {
    const std::size_t kk[1] = {k};
    return loss_trajectory_discrete(run.decomp, tr.profile.c, eta, kk)[0];
  };
  const double l0 = lin_at(0);
  const double l_end = l0 * std::pow(10.0, -decades);
  std::size_t steps = value_or<std::size_t>(tj, "steps", 0);
  if (steps == 0) {
    const std::size_t cap = value_or<std::size_t>(tj, "max_steps", 200000);
    std::size_t hi = 1;
    while (hi < cap && lin_at(hi) > l_end) hi *= 2;
    std::size_t lo = hi / 2;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      (lin_at(mid) > l_end ? lo : hi) = mid;
    }
    steps = std::min(hi, cap);
  }
  const TrainLog log = run_stage("train", ctx.log, [&] {
    return train(net, run.data, f, eta, steps, std::span<const std::size_t>{});
  });
  std::vector<std::size_t> all(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) all[k] = k;
  const auto lin = loss_trajectory_discrete(run.decomp, tr.profile.c, eta, all);
  double worst = 0.0;
  std::size_t compared = 0;
  for (std::size_t k = 0; k <= steps; ++k) {
    if (lin[k] < l_end) break;
    worst = std::max(worst, std::abs(log.loss[k] / lin[k] - 1.0));
    ++compared;
  }
  {
    CsvWriter csv(ctx.out_dir / "training_loss.csv", "finite_training_loss",
                  {"step", "t", "loss_train", "loss_linearized", "rel_dev"});
    std::vector<std::size_t> rows = log_steps(1, std::max<std::size_t>(steps, 2), 300);
    rows.insert(rows.begin(), 0);
    for (std::size_t k : rows) {
      if (k > steps) continue;
      csv.row({std::to_string(k), fmt(eta * static_cast<double>(k)), fmt(log.loss[k]),
               fmt(lin[k]), fmt(rel_dev(log.loss[k], lin[k]))});
    }
  }
  Comparison cmp = spectrum_comparison(run);
  add_target_prediction(cmp, run, tr);
  cmp.fitted.erase("Lambda");
  cmp.fitted.erase("nu");
  cmp.fitted.erase("kappa");
  cmp.fitted.erase("K");
  json s = summary_header(ctx);
  s.update(cmp.to_json());
  s["diagnostics"] = {{"eta", eta},
                      {"critical_lr", critical_lr(run.decomp)},
                      {"steps", steps},
                      {"initial_loss_linearized", l0},
                      {"initial_loss_train", log.loss.front()},
                      {"decades", decades},
                      {"compared_steps", compared},
                      {"max_rel_dev_train_vs_linearized", worst}};
  return s;
}

json run_mf_training(Context& ctx) {
  const DistributionSpec mu = parse_distribution(ctx.config.at("distribution"), ctx.seeds.data);
  const json& tj = ctx.config.at("training");
  const Dataset data = run_stage("sample", ctx.log, [&] { return sample_data(ctx, mu); });
  KernelSpec cov_default{ShallowReluCov{}};
  const TargetSpec target = parse_target(ctx.config.at("target"), cov_default, ctx.seeds.target);
  const Eigen::VectorXd f = run_stage("target", ctx.log, [&] { return realize_target(target, data); });
  ShallowNet net = init(Parametrization::kMeanField, value_or<Eigen::Index>(tj, "width", 2000),
                        mu.dim, 1.0, 1.0, ctx.seeds.network);
  const double m = static_cast<double>(data.size());
  const SpectralDecomposition d0 = run_stage("eigendecompose", ctx.log, [&] {
    return eigendecompose(empirical_ntk(net, data.points) / m);
  });
  const double eta = value_or<double>(tj, "lr_factor", 0.9) * critical_lr(d0);
  const std::size_t steps = tj.at("steps").get<std::size_t>();
  std::vector<std::size_t> snaps = value_or<std::vector<std::size_t>>(
      tj, "snapshots", std::vector<std::size_t>{0, steps / 8, steps / 2, steps});
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  const ShallowNet initial = net;
  const TrainLog log = run_stage("train", ctx.log, [&] { return train(net, data, f, eta, steps, snaps); });

  {
    CsvWriter csv(ctx.out_dir / "training_loss.csv", "mf_training_loss", {"step", "loss"});
    for (std::size_t k = 0; k < log.loss.size(); ++k)
      csv.row({std::to_string(k), fmt(log.loss[k])});
  }
  const FitWindow window = window_for(ctx, mu.dim);
  const double alpha = 1.0;
  const double beta = std::holds_alternative<GpDraw>(target)
                          ? singularity_info(std::get<GpDraw>(target).covariance).degree
                          : 0.0;
  const Scenario scenario =
      std::holds_alternative<GpDraw>(target) ? Scenario::kGp : Scenario::kIndicator;
  const double nu_pred = eigen_exponent(mu.dim, alpha);
  const double kappa_pred = tail_exponent(scenario, mu.dim, beta);

  const Eigen::MatrixXd ntk0 = empirical_ntk(initial, data.points);
  CsvWriter spectra(ctx.out_dir / "mf_spectra.csv", "mf_spectra",
                    {"step", "n", "lambda", "predicted_lambda_slope_only"});
  json runs = json::array();
  for (std::size_t i = 0; i < log.snapshots.size(); ++i) {
    const ShallowNet& snap = log.snapshots[i];
    const std::string ckpt = "checkpoint_step" + std::to_string(log.snapshot_steps[i]) + ".txt";
    write_checkpoint(snap, (ctx.out_dir / ckpt).string());
    const KernelSpec mf{MfEmpirical{std::make_shared<const MfParams>(to_mf_params(snap))}};
    const SpectralDecomposition dk = run_stage("eigendecompose", ctx.log, [&] {
      return eigendecompose(gram_matrix(mf, data.points) / m);
    });
    const PowerLawFit fit = fit_eigenvalues(dk, window);
    for (Eigen::Index n = 0; n < dk.size(); ++n) {
      const double pred = n == 0 ? NAN
                                 : fit.coefficient * std::pow(static_cast<double>(n), -nu_pred);
      spectra.row({std::to_string(log.snapshot_steps[i]), std::to_string(n),
                   fmt(dk.eigenvalues[n]), fmt(pred)});
    }
    const double drift = (empirical_ntk(snap, data.points) - ntk0).norm() / ntk0.norm();
    Comparison cmp;
    cmp.fitted["nu"] = fit.exponent;
    cmp.predicted["nu"] = nu_pred;
    json entry = cmp.to_json();
    entry["label"] = "step=" + std::to_string(log.snapshot_steps[i]);
    entry["step"] = log.snapshot_steps[i];
    entry["eigenvalue_fit"] = fit_json(fit);
    entry["kernel_drift"] = drift;
    entry["checkpoint"] = ckpt;
    runs.push_back(entry);
    add_fit_row(ctx, entry["label"], "eigenvalues", fit, NAN, nu_pred);
  }

  // Loss exponent over the step window set by the initial spectrum.
  const double k_lo = 0.5 / (eta * d0.eigenvalues[static_cast<Eigen::Index>(window.n_min)]);
  const double k_hi = std::min(
      0.5 / (eta * d0.eigenvalues[static_cast<Eigen::Index>(std::min<std::size_t>(
                       window.n_max, static_cast<std::size_t>(d0.size())) - 1)]),
      static_cast<double>(steps / 2));
  Comparison loss_cmp;
  loss_cmp.predicted["nu"] = nu_pred;
  loss_cmp.predicted["kappa"] = kappa_pred;
  loss_cmp.predicted["xi"] = kappa_pred / nu_pred;
  loss_cmp.provenance["xi"] = "kappa/nu; amplitudes unavailable for the empirical kernel";
  json loss_diag = {{"step_window", {k_lo, k_hi}}};
  if (k_hi > k_lo * 1.5) {
    // Even steps only: at the stability edge the loss carries a period-2 oscillation.
    std::vector<std::size_t> ks;
    for (std::size_t k : log_steps(static_cast<std::size_t>(std::ceil(k_lo)),
                                   static_cast<std::size_t>(std::floor(k_hi)), 40)) {
      const std::size_t even = std::max<std::size_t>(2, k - k % 2);
      if (ks.empty() || ks.back() != even) ks.push_back(even);
    }
    if (ks.size() >= 10) {
      std::vector<double> t, l, l2;
      for (std::size_t k : ks) {
        t.push_back(static_cast<double>(k));
        l.push_back(log.loss[k]);
        l2.push_back(log.loss[2 * k]);
      }
      const LossFit lf = run_stage("fit", ctx.log, [&] { return fit_loss_band(t, l, l2, NAN); });
      loss_cmp.fitted["xi"] = lf.fit.exponent;
      loss_diag["loss_fit"] = fit_json(lf.fit);
      add_fit_row(ctx, "mf", "loss", lf.fit, NAN, kappa_pred / nu_pred);
    }
  }
  json s = summary_header(ctx);
  s.update(loss_cmp.to_json());
  s["runs"] = runs;
  loss_diag["eta"] = eta;
  loss_diag["steps"] = steps;
  s["diagnostics"] = loss_diag;
  return s;
}

}  // namespace

DistributionSpec parse_distribution(const json& j, std::uint64_t seed) {
  const std::string type = j.at("type").get<std::string>();
  const int d = j.at("dim").get<int>();
  if (type == "gaussian_mixture") {
    const double sigma = value_or<double>(j, "sigma", 0.5);
    if (j.contains("centers")) {
      std::vector<Eigen::VectorXd> centers;
      for (const auto& c : j.at("centers")) {
        const auto v = c.get<std::vector<double>>();
        centers.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
      }
      DistributionSpec spec = make_mixture(std::move(centers), sigma);
      require(spec.dim == d, "distribution: centers do not match dim");
      return spec;
    }
    return make_mixture(d, value_or<int>(j, "n_g", 8), sigma,
                        value_or<std::uint64_t>(j, "center_seed", seed));
  }
  if (type == "uniform_cube") return make_uniform_cube(d, value_or<double>(j, "half_width", 1.0));
  if (type == "isotropic_gaussian") return make_isotropic_gaussian(d, value_or<double>(j, "sigma", 1.0));
  throw InvalidParameter("distribution: unknown type '" + type + "'");
}

KernelSpec parse_kernel(const json& j) {
  KernelSpec k;
  k.sigma_w = value_or<double>(j, "sigma_w", 1.0);
  k.sigma_b = value_or<double>(j, "sigma_b", 1.0);
  const std::string type = j.at("type").get<std::string>();
  if (type == "shallow_relu_ntk") {
    k.family = ShallowReluNtk{};
  } else if (type == "shallow_relu_cov") {
    k.family = ShallowReluCov{};
  } else if (type == "relu_power_q") {
    k.family = ReluPowerQ{j.at("q").get<double>()};
  } else if (type == "deep_relu") {
    k.family = DeepRelu{j.at("depth").get<int>()};
  } else if (type == "mf_empirical") {
    k.family = MfEmpirical{
        std::make_shared<const MfParams>(read_mf_checkpoint(j.at("checkpoint").get<std::string>()))};
  } else {
    throw InvalidParameter("kernel: unknown type '" + type + "'");
  }
  validate(k);
  return k;
}

TargetSpec parse_target(const json& j, const KernelSpec& kernel, std::uint64_t seed) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "ball_indicator") {
    TargetSpec t = BallIndicator{value_or<double>(j, "radius", 0.5), value_or<double>(j, "jump", 1.0)};
    validate(t);
    return t;
  }
  if (type == "gp") {
    GpDraw gp;
    if (j.contains("covariance")) {
      gp.covariance = parse_kernel(j.at("covariance"));
    } else {
      gp.covariance = KernelSpec{ShallowReluCov{}, kernel.sigma_w, kernel.sigma_b};
    }
    gp.seed = seed;
    const std::string sampler = value_or<std::string>(j, "sampler", "cholesky");
    if (sampler == "cholesky") {
      gp.sampler = GpSampler::kCholesky;
    } else if (sampler == "wide_network") {
      gp.sampler = GpSampler::kWideNetwork;
      gp.width = value_or<Eigen::Index>(j, "width", 100000);
    } else {
      throw InvalidParameter("target: unknown sampler '" + sampler + "'");
    }
    TargetSpec t = gp;
    validate(t);
    return t;
  }
  throw InvalidParameter("target: unknown type '" + type + "'");
}

ValidationReport validate_config(const json& c) {
  ValidationReport report;
  auto error = [&](const std::string& m) {
    report.issues.push_back({ValidationIssue::Severity::kError, m});
  };
  auto warn = [&](const std::string& m) {
    report.issues.push_back({ValidationIssue::Severity::kWarning, m});
  };
  if (!c.is_object()) {
    error("config must be a JSON object");
    return report;
  }
  const auto& kinds = experiment_kinds();
  const std::string kind = value_or<std::string>(c, "kind", "");
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    error("unknown or missing experiment kind '" + kind + "'");
    return report;
  }
  std::size_t m = 0;
  try {
    m = c.at("M").get<std::size_t>();
    if (m < 1) error("M must be >= 1");
    if (m > 5000) warn("M > 5000: dense O(M^3) diagonalization will be slow");
  } catch (const std::exception&) {
    error("M must be a positive integer");
  }
  const std::uint64_t seed = value_or<std::uint64_t>(c, "seed", 0);
  int d = 0;
  auto check_distribution = [&](const json& j) {
    try {
      const DistributionSpec mu = parse_distribution(j, seed);
      d = mu.dim;
      if (value_or<bool>(c, "symmetrize", false) && is_symmetric(mu) && m > 0 &&
          m % symmetry_group_order(mu.dim) != 0)
        warn("M is not a multiple of the symmetry group order; the last orbit is truncated");
    } catch (const std::exception& e) {
      error(std::string("distribution: ") + e.what());
    }
  };
  if (kind == "degeneracy") {
    if (!c.contains("degeneracy") || !c["degeneracy"].contains("distributions") ||
        !c["degeneracy"]["distributions"].is_array() || c["degeneracy"]["distributions"].empty())
      error("degeneracy: need a non-empty 'degeneracy.distributions' list");
    else
      for (const auto& j : c["degeneracy"]["distributions"]) check_distribution(j);
  } else if (!c.contains("distribution")) {
    error("missing 'distribution'");
  } else {
    check_distribution(c["distribution"]);
  }

  const bool wants_asymptote = kind != "degeneracy";
  std::optional<KernelSpec> kernel;
  if (kind != "mf-training") {
    if (!c.contains("kernel")) {
      error("missing 'kernel'");
    } else {
      try {
        kernel = parse_kernel(c["kernel"]);
        if (const auto* p = std::get_if<ReluPowerQ>(&kernel->family))
          if (wants_asymptote && is_half_integer(p->q))
            error("kernel: half-integer q has no singularity; asymptotes undefined");
      } catch (const std::exception& e) {
        error(std::string("kernel: ") + e.what());
      }
    }
  }
  if (kind == "q-sweep") {
    if (!c.contains("q_values") || !c["q_values"].is_array() || c["q_values"].empty()) {
      error("q-sweep: need a non-empty 'q_values' list");
    } else {
      for (const auto& q : c["q_values"]) {
        const double v = q.get<double>();
        if (v <= 0.5) error("q-sweep: q must exceed 1/2 for a finite diagonal, got " + fmt(v));
        else if (is_half_integer(v)) error("q-sweep: half-integer q = " + fmt(v) + " has no singularity");
      }
    }
  }
  if (kind == "depth-sweep") {
    if (!c.contains("depths") || !c["depths"].is_array() || c["depths"].empty()) {
      error("depth-sweep: need a non-empty 'depths' list");
    } else {
      for (const auto& l : c["depths"])
        if (l.get<int>() < 2) error("depth-sweep: depth must be >= 2");
    }
  }
  const bool needs_target = kind == "coefficients" || kind == "linearized-loss" ||
                            kind == "finite-training" || kind == "mf-training";
  if (needs_target) {
    if (!c.contains("target")) {
      error("missing 'target'");
    } else {
      try {
        const TargetSpec t = parse_target(c["target"], kernel.value_or(KernelSpec{}), seed);
        if (const auto* gp = std::get_if<GpDraw>(&t)) {
          if (!std::holds_alternative<ShallowReluCov>(gp->covariance.family))
            warn("target: no loss-coefficient prediction for this covariance");
          if (gp->sampler == GpSampler::kWideNetwork && gp->width > 1000000)
            warn("target: wide-network width above 1e6 is expensive");
        }
      } catch (const std::exception& e) {
        error(std::string("target: ") + e.what());
      }
    }
  }
  if (c.contains("time_grid")) {
    const json& tg = c["time_grid"];
    if (tg.is_array() || !tg.is_object() || value_or<std::size_t>(tg, "count", 0) == 0) {
      error("time_grid: empty time grid");
    } else {
      const double lo = value_or<double>(tg, "t_min", 0.0);
      const double hi = value_or<double>(tg, "t_max", 0.0);
      if (!(lo > 0.0 && hi > lo)) error("time_grid: need 0 < t_min < t_max");
      if (value_or<std::size_t>(tg, "count", 0) < 2) error("time_grid: need at least 2 points");
    }
  }
  if (c.contains("fit_window") && m > 0) {
    const std::size_t lo = value_or<std::size_t>(c["fit_window"], "n_min", 0);
    const std::size_t hi = value_or<std::size_t>(c["fit_window"], "n_max", 0);
    if (lo < 1 || hi > m || hi < lo + 10) error("fit_window: need 1 <= n_min, n_min + 10 <= n_max <= M");
  } else if (m > 0 && d > 0) {
    const FitWindow w = default_window(m, d);
    if (w.n_max < w.n_min + 10) error("M too small for the default fit window");
  }
  if (kind == "finite-training" || kind == "mf-training") {
    if (!c.contains("training") || !c["training"].is_object()) {
      error("missing 'training' block");
    } else {
      const json& tj = c["training"];
      if (value_or<long long>(tj, "width", 2000) < 1) error("training: width must be >= 1");
      const double f = value_or<double>(tj, "lr_factor", 0.9);
      if (f <= 0.0) error("training: lr_factor must be positive");
      else if (f >= 1.0) warn("training: step size at or above the critical value");
      if (kind == "mf-training" && value_or<long long>(tj, "steps", 0) < 1)
        error("training: mf-training needs a positive 'steps' budget");
    }
    if (kind == "finite-training" && kernel && !std::holds_alternative<ShallowReluNtk>(kernel->family))
      error("finite-training: kernel must be shallow_relu_ntk");
  }
  if (value_or<long long>(c, "mc_samples", 100000) < 1) error("mc_samples must be positive");
  if (c.contains("output_dir")) {
    const fs::path p = c["output_dir"].get<std::string>();
    if (fs::exists(p) && !fs::is_directory(p)) error("output_dir exists and is not a directory");
  }
  return report;
}

fs::path default_output_root() {
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return "ntkscale_out";
}

RunResult run_experiment(const json& config, std::ostream* log) {
  const ValidationReport report = validate_config(config);
  if (!report.ok()) {
    std::string msg;
    for (const auto& i : report.issues)
      if (i.severity == ValidationIssue::Severity::kError) msg += (msg.empty() ? "" : "; ") + i.message;
    throw InvalidParameter("invalid config: " + msg);
  }
  Context ctx;
  ctx.config = config;
  ctx.seeds = parse_seeds(config);
  ctx.log = log;
  ctx.m = config.at("M").get<std::size_t>();
  ctx.mc_samples = value_or<std::size_t>(config, "mc_samples", 100000);
  ctx.surface_samples = value_or<std::size_t>(config, "surface_samples", 100000);
  const std::string kind = config.at("kind").get<std::string>();
  ctx.out_dir = config.contains("output_dir")
                    ? fs::path(config.at("output_dir").get<std::string>())
                    : default_output_root() / value_or<std::string>(config, "name", kind);
  run_stage("write", log, [&] {
    fs::create_directories(ctx.out_dir);
    return 0;
  });

  json summary;
  if (kind == "spectrum" || kind == "coefficients" || kind == "linearized-loss")
    summary = run_spectral_kind(ctx, kind);
  else if (kind == "q-sweep" || kind == "depth-sweep")
    summary = run_sweep(ctx, kind);
  else if (kind == "degeneracy")
    summary = run_degeneracy(ctx);
  else if (kind == "finite-training")
    summary = run_finite_training(ctx);
  else
    summary = run_mf_training(ctx);

  run_stage("write", log, [&] {
    write_fits(ctx);
    std::ofstream out(ctx.out_dir / "summary.json");
    if (!out) throw Error("cannot write summary.json");
    out << summary.dump(2) << '\n';
    return 0;
  });
  return {ctx.out_dir, summary};
}

}  // namespace ntkscale
