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

#include "ntkscale/kernels.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

namespace ntkscale {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kClampTolerance = 1e-12;
constexpr double kQuadratureTolerance = 1e-8;
constexpr double kQuadratureTarget = 1e-10;

double clamp_cos(double c) {
  if (c > 1.0) return 1.0;
  if (c < -1.0) return -1.0;
  return c;
}

double dot(ConstPoint a, ConstPoint b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void check_dims(ConstPoint x, ConstPoint y) {
  require(x.size() == y.size(), "kernel: point dimension mismatch");
}

// Diagonal moment <(z)+^{2s}> for Var z = r^2.
double diagonal_moment(double s, double r) {
  if (s + 0.5 <= 0.0) {
    std::ostringstream os;
    os << "relu moment: diagonal diverges for s = " << s;
    throw NumericalError(os.str());
  }
  return std::pow(r, 2.0 * s) * std::pow(2.0, s - 1.0) * std::tgamma(s + 0.5) /
         std::sqrt(kPi);
}

}  // namespace

double extended_norm(ConstPoint x, double sigma_w, double sigma_b) {
  return std::sqrt(sigma_w * sigma_w * dot(x, x) + sigma_b * sigma_b);
}

Geometry geometry(ConstPoint x, ConstPoint x_prime, double sigma_w, double sigma_b) {
  require(sigma_w > 0.0, "geometry: sigma_w must be positive");
  require(sigma_b > 0.0, "geometry: sigma_b must be positive");
  check_dims(x, x_prime);
  Geometry g;
  g.r = extended_norm(x, sigma_w, sigma_b);
  g.r_prime = extended_norm(x_prime, sigma_w, sigma_b);
  bool same = true;
  for (std::size_t k = 0; k < x.size() && same; ++k) same = x[k] == x_prime[k];
  if (same) return g;
  const double c = (sigma_w * sigma_w * dot(x, x_prime) + sigma_b * sigma_b) / (g.r * g.r_prime);
  g.cos_phi = clamp_cos(c);
  g.phi = std::acos(g.cos_phi);
  return g;
}

ReluKernelValue ntk_shallow_relu(const Geometry& g, double sigma_w) {
  const double pre = sigma_w * sigma_w / (2.0 * kPi) * (g.r * g.r_prime);
  const double s = std::sin(g.phi);
  const double cterm = g.cos_phi * (kPi - g.phi);
  ReluKernelValue v;
  v.sigma_cov = pre * (s + cterm);
  v.theta = v.sigma_cov + pre * cterm;
  return v;
}

double angular_integral(double s, double phi) {
  require(s > -1.0, "angular_integral: s must exceed -1");
  thread_local boost::math::quadrature::tanh_sinh<double> integrator;
  const double c = std::cos(phi);
  const double sh_phi = std::sin(0.5 * phi);
  const double one_minus_c = 2.0 * sh_phi * sh_phi;
  // 1 - cos(phi) cos(psi) = 2 sin^2(phi/2) + 2 cos(phi) sin^2(psi/2).
  auto f = [&](double psi, double psic) {
    double cos_psi;
    double sh;
    if (psic <= 0.0) {
      const double p = -psic;
      cos_psi = std::cos(p);
      sh = std::sin(0.5 * p);
    } else {
      cos_psi = std::sin(psic);
      sh = std::sin(0.5 * psi);
    }
    const double denom = one_minus_c + 2.0 * c * sh * sh;
    return std::pow(cos_psi, s) / std::pow(denom, s + 1.0);
  };
  double err = 0.0;
  double l1 = 0.0;
  std::size_t levels = 0;
  const double value =
      integrator.integrate(f, 0.0, kPi / 2.0, kQuadratureTarget, &err, &l1, &levels);
  if (!std::isfinite(value) || err > kQuadratureTolerance * std::abs(value)) {
    std::ostringstream os;
    os << "angular_integral: tolerance not met (s = " << s << ", phi = " << phi
       << ", relative error " << err / std::abs(value) << ")";
    throw NumericalError(os.str());
  }
  return value;
}

double relu_moment(double s, const Geometry& g) {
  if (g.phi == 0.0) {
    if (g.r != g.r_prime) return diagonal_moment(s, std::sqrt(g.r * g.r_prime));
    return diagonal_moment(s, g.r);
  }
  const double sp = std::sin(g.phi);
  return std::pow(g.r * g.r_prime, s) * std::tgamma(s + 1.0) * std::pow(sp, 2.0 * s + 1.0) *
         angular_integral(s, g.phi) / (2.0 * kPi);
}

double cov_relu_q(const Geometry& g, double q, double sigma_w) {
  require(q > 0.0, "relu^q: q must be positive");
  return sigma_w * sigma_w * relu_moment(q, g);
}

double ntk_relu_q(const Geometry& g, double q, double sigma_w) {
  require(q > 0.0, "relu^q: q must be positive");
  const double w2 = sigma_w * sigma_w;
  const double pair = g.r * g.r_prime * g.cos_phi;
  return w2 * relu_moment(q, g) + w2 * pair * q * q * relu_moment(q - 1.0, g);
}

namespace {

struct DeepState {
  double r = 0.0;
  double rp = 0.0;
  double cos_phi = 1.0;
  double phi = 0.0;
};

double next_cos(double sigma_next, double r, double rp) {
  const double c = sigma_next / (r * rp);
  if (std::abs(c) > 1.0 + kClampTolerance) {
    std::ostringstream os;
    os << "deep relu: cos(phi) = " << c << " outside [-1, 1]";
    throw NumericalError(os.str());
  }
  return clamp_cos(c);
}

}  // namespace

double ntk_deep_relu(ConstPoint x, ConstPoint x_prime, int depth, double sigma_w,
                     double sigma_b) {
  require(depth >= 2, "deep relu: depth must be >= 2");
  const Geometry g0 = geometry(x, x_prime, sigma_w, sigma_b);
  const double w2 = sigma_w * sigma_w;
  const double b2 = sigma_b * sigma_b;
  DeepState st{g0.r, g0.r_prime, g0.cos_phi, g0.phi};
  double theta = st.r * st.rp * st.cos_phi;
  for (int l = 1; l < depth; ++l) {
    const bool output = l + 1 == depth;
    const double sigma_next =
        w2 / (2.0 * kPi) * (st.r * st.rp) *
            (std::sin(st.phi) + st.cos_phi * (kPi - st.phi)) +
        (output ? 0.0 : b2);
    theta = sigma_next + theta * w2 / (2.0 * kPi) * (kPi - st.phi);
    if (output) break;
    const double r_next = std::sqrt(0.5 * w2 * st.r * st.r + b2);
    const double rp_next = std::sqrt(0.5 * w2 * st.rp * st.rp + b2);
    if (st.phi == 0.0 && st.r == st.rp) {
      st = {r_next, rp_next, 1.0, 0.0};
    } else {
      const double c = next_cos(sigma_next, r_next, rp_next);
      st = {r_next, rp_next, c, std::acos(c)};
    }
  }
  return theta;
}

double deep_relu_diagonal(ConstPoint x, int depth, double sigma_w, double sigma_b) {
  require(depth >= 2, "deep relu: depth must be >= 2");
  const double w2 = sigma_w * sigma_w;
  const double b2 = sigma_b * sigma_b;
  double r2 = w2 * dot(x, x) + b2;
  double theta = r2;
  for (int l = 1; l < depth; ++l) {
    const bool output = l + 1 == depth;
    const double sigma_next = 0.5 * w2 * r2 + (output ? 0.0 : b2);
    theta = sigma_next + 0.5 * w2 * theta;
    r2 = sigma_next;
  }
  return theta;
}

double deep_relu_singular_amplitude(ConstPoint x, int depth, double sigma_w, double sigma_b) {
  require(depth >= 2, "deep relu: depth must be >= 2");
  const double w2 = sigma_w * sigma_w;
  const double b2 = sigma_b * sigma_b;
  double r2 = w2 * dot(x, x) + b2;
  double theta_diag = r2;
  double sing = 0.0;
  double phi_ratio = 1.0;
  for (int l = 1; l < depth; ++l) {
    const bool output = l + 1 == depth;
    sing = -w2 / (2.0 * kPi) * theta_diag * phi_ratio + 0.5 * w2 * sing;
    const double sigma_next = 0.5 * w2 * r2 + (output ? 0.0 : b2);
    theta_diag = sigma_next + 0.5 * w2 * theta_diag;
    if (output) break;
    phi_ratio *= std::sqrt(0.5 * w2 * r2 / sigma_next);
    r2 = sigma_next;
  }
  return sing;
}

double ntk_mf_empirical(const MfParams& params, ConstPoint x, ConstPoint x_prime) {
  const Eigen::Index n = params.size();
  require(n >= 1, "mf kernel: empty parameter set");
  require(static_cast<int>(x.size()) == params.dim(), "mf kernel: point dimension mismatch");
  check_dims(x, x_prime);
  const double xx = 1.0 + dot(x, x_prime);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const ConstPoint w = row_span(params.w, i);
    const double z = dot(w, x) + params.b[i];
    const double zp = dot(w, x_prime) + params.b[i];
    if (z <= 0.0 || zp <= 0.0) continue;
    acc += z * zp + params.c[i] * params.c[i] * xx;
  }
  return acc / static_cast<double>(n);
}

bool is_half_integer(double q) {
  const double t = q - 0.5;
  return t >= -1e-12 && std::abs(t - std::round(t)) < 1e-12;
}

void validate(const KernelSpec& spec) {
  require(spec.sigma_w > 0.0, "kernel: sigma_w must be positive");
  require(spec.sigma_b > 0.0, "kernel: sigma_b must be positive");
  if (const auto* p = std::get_if<ReluPowerQ>(&spec.family)) {
    require(p->q > 0.0, "kernel: q must be positive");
  } else if (const auto* dr = std::get_if<DeepRelu>(&spec.family)) {
    require(dr->depth >= 2, "kernel: depth must be >= 2");
  } else if (const auto* mf = std::get_if<MfEmpirical>(&spec.family)) {
    require(mf->params && mf->params->size() >= 1, "kernel: empty mean-field parameter set");
  }
}

std::string kind_name(const KernelSpec& spec) {
  struct Visitor {
    std::string operator()(const ShallowReluNtk&) const { return "shallow_relu_ntk"; }
    std::string operator()(const ShallowReluCov&) const { return "shallow_relu_cov"; }
    std::string operator()(const ReluPowerQ&) const { return "relu_power_q"; }
    std::string operator()(const DeepRelu&) const { return "deep_relu"; }
    std::string operator()(const MfEmpirical&) const { return "mf_empirical"; }
  };
  return std::visit(Visitor{}, spec.family);
}

bool is_covariance(const KernelSpec& spec) {
  return std::holds_alternative<ShallowReluCov>(spec.family);
}

double evaluate(const KernelSpec& spec, ConstPoint x, ConstPoint x_prime) {
  const double sw = spec.sigma_w;
  const double sb = spec.sigma_b;
  if (std::holds_alternative<ShallowReluNtk>(spec.family))
    return ntk_shallow_relu(geometry(x, x_prime, sw, sb), sw).theta;
  if (std::holds_alternative<ShallowReluCov>(spec.family))
    return ntk_shallow_relu(geometry(x, x_prime, sw, sb), sw).sigma_cov;
  if (const auto* p = std::get_if<ReluPowerQ>(&spec.family))
    return ntk_relu_q(geometry(x, x_prime, sw, sb), p->q, sw);
  if (const auto* dr = std::get_if<DeepRelu>(&spec.family))
    return ntk_deep_relu(x, x_prime, dr->depth, sw, sb);
  const auto& mf = std::get<MfEmpirical>(spec.family);
  require(static_cast<bool>(mf.params), "kernel: empty mean-field parameter set");
  return ntk_mf_empirical(*mf.params, x, x_prime);
}

double relu_q_amplitude_coefficient(double q) {
  require(q > 0.0, "a_q: q must be positive");
  if (is_half_integer(q)) {
    std::ostringstream os;
    os << "relu^q: half-integer q = " << q << " has no singularity";
    throw InvalidParameter(os.str());
  }
  const double gq = std::tgamma(q);
  return gq * gq * std::tgamma(0.5 - q) / (std::sqrt(kPi) * std::pow(2.0, q));
}

SingularityInfo singularity_info(const KernelSpec& spec) {
  validate(spec);
  const double sw = spec.sigma_w;
  const double sb = spec.sigma_b;
  const double w2 = sw * sw;
  SingularityInfo info;
  if (std::holds_alternative<ShallowReluNtk>(spec.family)) {
    info.degree = 1.0;
    info.amplitude = [=](ConstPoint x) {
      const double r = extended_norm(x, sw, sb);
      return -w2 * r * r / (2.0 * kPi);
    };
  } else if (std::holds_alternative<ShallowReluCov>(spec.family)) {
    info.degree = 3.0;
    info.amplitude = [=](ConstPoint x) {
      const double r = extended_norm(x, sw, sb);
      return w2 * r * r / (6.0 * kPi);
    };
  } else if (const auto* p = std::get_if<ReluPowerQ>(&spec.family)) {
    const double q = p->q;
    const double aq = relu_q_amplitude_coefficient(q);
    info.degree = 2.0 * q - 1.0;
    info.amplitude = [=](ConstPoint x) {
      const double r = extended_norm(x, sw, sb);
      return w2 / (2.0 * kPi) * std::pow(r, 2.0 * q) * q * q * aq;
    };
  } else if (const auto* dr = std::get_if<DeepRelu>(&spec.family)) {
    const int depth = dr->depth;
    info.degree = 1.0;
    info.amplitude = [=](ConstPoint x) {
      return deep_relu_singular_amplitude(x, depth, sw, sb);
    };
    info.note = "sum of per-layer singular weights referred to the first-layer angle";
  } else {
    info.degree = 1.0;
    info.empirical_only = true;
    info.note = "empirical only";
  }
  return info;
}

}  // namespace ntkscale
