#include "rrn/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rrn/parallel.hpp"

namespace rrn {

using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double gauss_log_density(double r, double var) {
  return -0.5 * (kLog2Pi + std::log(var)) - r * r / (2.0 * var);
}

inline double laplace_log_density(double r, double beta) {
  return -std::log(2.0 * beta) - std::fabs(r) / beta;
}

// Per-pixel log weights log(pi_k) + sum_c log dens(r_c | k, c).
struct LogWeightEval {
  std::vector<double> a1, a2;  // per-band additive constants
  std::vector<double> b1, b2;  // per-band residual multipliers
  double lp1, lp2;
  bool gaussian;

  explicit LogWeightEval(const MixtureParams& p) {
    gaussian = p.family == NoiseFamily::Gaussian;
    lp1 = std::log(p.pi[0]);
    lp2 = std::log(p.pi[1]);
    for (const auto& s : p.scales) {
      if (gaussian) {
        a1.push_back(-0.5 * (kLog2Pi + std::log(s[0])));
        a2.push_back(-0.5 * (kLog2Pi + std::log(s[1])));
        b1.push_back(1.0 / (2.0 * s[0]));
        b2.push_back(1.0 / (2.0 * s[1]));
      } else {
        a1.push_back(-std::log(2.0 * s[0]));
        a2.push_back(-std::log(2.0 * s[1]));
        b1.push_back(1.0 / s[0]);
        b2.push_back(1.0 / s[1]);
      }
    }
  }

  void eval(const double* r, int bands, double& lw1, double& lw2) const {
    double s1 = lp1, s2 = lp2;
    for (int c = 0; c < bands; ++c) {
      const double m = gaussian ? r[c] * r[c] : std::fabs(r[c]);
      s1 += a1[c] - m * b1[c];
      s2 += a2[c] - m * b2[c];
    }
    lw1 = s1;
    lw2 = s2;
  }
};

}  // namespace

const char* family_name(NoiseFamily f) {
  return f == NoiseFamily::Gaussian ? "gaussian" : "laplace";
}

double MixtureParams::mean_scale(int component) const {
  double s = 0.0;
  for (const auto& b : scales) s += b[component];
  return s / static_cast<double>(scales.size());
}

void MixtureParams::validate() const {
  if (scales.empty())
    fail(ErrorKind::InvalidArgument, "mixture params need at least one band");
  const double psum = pi[0] + pi[1];
  if (!(pi[0] > 0.0 && pi[1] > 0.0 && std::fabs(psum - 1.0) < 1e-9))
    fail(ErrorKind::InvalidArgument, "mixing weights must be in (0,1) and sum to 1");
  for (const auto& s : scales)
    if (!(s[0] > 0.0) || !(s[1] > 0.0) || !std::isfinite(s[0]) ||
        !std::isfinite(s[1]))
      fail(ErrorKind::InvalidArgument, "scales must be positive and finite");
  if (mean_scale(0) > mean_scale(1) + 1e-12)
    fail(ErrorKind::InvalidArgument,
         "component 1 must carry the smaller mean scale");
}

json MixtureParams::to_json() const {
  json scales_j = json::array();
  for (const auto& s : scales) scales_j.push_back({s[0], s[1]});
  return json{{"family", family_name(family)},
              {"pi", {pi[0], pi[1]}},
              {"scales", scales_j}};
}

MixtureParams MixtureParams::from_json(const json& j) {
  MixtureParams p;
  const std::string fam = j.at("family").get<std::string>();
  if (fam == "gaussian") p.family = NoiseFamily::Gaussian;
  else if (fam == "laplace") p.family = NoiseFamily::Laplace;
  else fail(ErrorKind::InvalidArgument, "unknown noise family: " + fam);
  p.pi[0] = j.at("pi").at(0).get<double>();
  p.pi[1] = j.at("pi").at(1).get<double>();
  for (const auto& s : j.at("scales"))
    p.scales.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  p.validate();
  return p;
}

void ResidualField::validate() const {
  if (count == 0 || bands <= 0)
    fail(ErrorKind::InvalidArgument, "empty residual field");
  if (r.size() != count * static_cast<std::size_t>(bands))
    fail(ErrorKind::InvalidArgument, "residual field size mismatch");
  for (double v : r)
    if (!std::isfinite(v))
      fail(ErrorKind::NumericFailure, "non-finite residual");
}

double log_density(double residual, int component, int band,
                   const MixtureParams& params) {
  params.validate();
  if (component < 1 || component > 2)
    fail(ErrorKind::InvalidArgument, "component must be 1 or 2");
  if (band < 0 || band >= params.bands())
    fail(ErrorKind::InvalidArgument, "band index out of range");
  if (!std::isfinite(residual))
    fail(ErrorKind::NumericFailure, "non-finite residual");
  const double s = params.scales[band][component - 1];
  return params.family == NoiseFamily::Gaussian
             ? gauss_log_density(residual, s)
             : laplace_log_density(residual, s);
}

ResponsibilityField e_step(const ResidualField& residuals,
                           const MixtureParams& params, int threads) {
  residuals.validate();
  params.validate();
  if (params.bands() != residuals.bands)
    fail(ErrorKind::InvalidArgument, "band count mismatch");

  const LogWeightEval ev(params);
  const std::size_t n = residuals.count;
  const int C = residuals.bands;
  ResponsibilityField out;
  out.g1.resize(n);
  out.g2.resize(n);
  std::vector<std::size_t> underflow(chunk_count(n), 0);

  for_each_chunk(n, threads, [&](std::size_t ci, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double lw1, lw2;
      ev.eval(&residuals.r[i * C], C, lw1, lw2);
      const double m = std::max(lw1, lw2);
      if (!std::isfinite(m)) {
        out.g1[i] = 0.5;
        out.g2[i] = 0.5;
        ++underflow[ci];
        continue;
      }
      const double w1 = std::exp(lw1 - m);
      const double w2 = std::exp(lw2 - m);
      const double tot = w1 + w2;
      out.g1[i] = w1 / tot;
      out.g2[i] = w2 / tot;
    }
  });
  for (std::size_t u : underflow) out.underflow_count += u;
  return out;
}

MixtureParams m_step_mixture(const ResidualField& residuals,
                             ResponsibilityField& gammas, NoiseFamily family,
                             int threads) {
  residuals.validate();
  const std::size_t n = residuals.count;
  const int C = residuals.bands;
  if (gammas.size() != n)
    fail(ErrorKind::InvalidArgument, "gammas and residuals are misaligned");

  const bool gaussian = family == NoiseFamily::Gaussian;
  const std::size_t nchunks = chunk_count(n);
  const std::size_t stride = 2 + 2 * static_cast<std::size_t>(C);
  std::vector<double> partial(nchunks * stride, 0.0);

  for_each_chunk(n, threads, [&](std::size_t ci, std::size_t b, std::size_t e) {
    double* acc = &partial[ci * stride];
    for (std::size_t i = b; i < e; ++i) {
      const double y1 = gammas.g1[i];
      const double y2 = gammas.g2[i];
      acc[0] += y1;
      acc[1] += y2;
      const double* r = &residuals.r[i * C];
      for (int c = 0; c < C; ++c) {
        const double m = gaussian ? r[c] * r[c] : std::fabs(r[c]);
        acc[2 + 2 * c] += y1 * m;
        acc[2 + 2 * c + 1] += y2 * m;
      }
    }
  });

  std::vector<double> sums(stride, 0.0);
  for (std::size_t ci = 0; ci < nchunks; ++ci)
    for (std::size_t k = 0; k < stride; ++k) sums[k] += partial[ci * stride + k];

  const double n1 = sums[0];
  const double n2 = sums[1];
  if (n1 <= 0.0 && n2 <= 0.0)
    fail(ErrorKind::NumericFailure,
         "mixture collapsed: no responsibility mass; re-initialize");

  MixtureParams p;
  p.family = family;
  p.pi[0] = std::max(n1 / static_cast<double>(n), MixtureParams::kPiFloor);
  p.pi[1] = std::max(n2 / static_cast<double>(n), MixtureParams::kPiFloor);
  const double psum = p.pi[0] + p.pi[1];
  p.pi[0] /= psum;
  p.pi[1] /= psum;

  p.scales.resize(C);
  for (int c = 0; c < C; ++c) {
    const double s1 = n1 > 0.0 ? sums[2 + 2 * c] / n1 : 0.0;
    const double s2 = n2 > 0.0 ? sums[2 + 2 * c + 1] / n2 : 0.0;
    p.scales[c][0] = std::max(s1, MixtureParams::kScaleFloor);
    p.scales[c][1] = std::max(s2, MixtureParams::kScaleFloor);
  }
  // A component with no responsibility mass keeps its sibling's scales: it
  // stays alive at the same noise level instead of collapsing to the floor
  // and stealing the no-change label on reorder.
  if (n1 <= 0.0 || n2 <= 0.0) {
    const int live = n1 > 0.0 ? 0 : 1;
    for (auto& s : p.scales) s[1 - live] = s[live];
  }

  // Keep component 1 as the small-noise (no-change) component; relabel the
  // gammas with it so downstream weights stay consistent.
  if (p.mean_scale(0) > p.mean_scale(1)) {
    std::swap(p.pi[0], p.pi[1]);
    for (auto& s : p.scales) std::swap(s[0], s[1]);
    gammas.swap_components();
  }
  p.validate();
  return p;
}

double mean_log_likelihood(const ResidualField& residuals,
                           const MixtureParams& params, int threads) {
  residuals.validate();
  params.validate();
  if (params.bands() != residuals.bands)
    fail(ErrorKind::InvalidArgument, "band count mismatch");

  const LogWeightEval ev(params);
  const std::size_t n = residuals.count;
  const int C = residuals.bands;
  std::vector<double> partial(chunk_count(n), 0.0);

  for_each_chunk(n, threads, [&](std::size_t ci, std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      double lw1, lw2;
      ev.eval(&residuals.r[i * C], C, lw1, lw2);
      const double m = std::max(lw1, lw2);
      acc += m + std::log(std::exp(lw1 - m) + std::exp(lw2 - m));
    }
    partial[ci] = acc;
  });

  const double total = reduce_ordered(partial);
  if (!std::isfinite(total))
    fail(ErrorKind::NumericFailure, "non-finite log-likelihood");
  return total / static_cast<double>(n);
}

std::vector<double> fit_single_scales(const ResidualField& residuals,
                                      NoiseFamily family, int threads) {
  residuals.validate();
  const std::size_t n = residuals.count;
  const int C = residuals.bands;
  const bool gaussian = family == NoiseFamily::Gaussian;
  const std::size_t nchunks = chunk_count(n);
  std::vector<double> partial(nchunks * C, 0.0);

  for_each_chunk(n, threads, [&](std::size_t ci, std::size_t b, std::size_t e) {
    double* acc = &partial[ci * C];
    for (std::size_t i = b; i < e; ++i) {
      const double* r = &residuals.r[i * C];
      for (int c = 0; c < C; ++c)
        acc[c] += gaussian ? r[c] * r[c] : std::fabs(r[c]);
    }
  });

  std::vector<double> scales(C, 0.0);
  for (std::size_t ci = 0; ci < nchunks; ++ci)
    for (int c = 0; c < C; ++c) scales[c] += partial[ci * C + c];
  for (double& s : scales)
    s = std::max(s / static_cast<double>(n), MixtureParams::kScaleFloor);
  return scales;
}

double single_mean_log_likelihood(const ResidualField& residuals,
                                  const std::vector<double>& scales,
                                  NoiseFamily family, int threads) {
  residuals.validate();
  if (static_cast<int>(scales.size()) != residuals.bands)
    fail(ErrorKind::InvalidArgument, "band count mismatch");
  const std::size_t n = residuals.count;
  const int C = residuals.bands;
  const bool gaussian = family == NoiseFamily::Gaussian;

  std::vector<double> a(C), b(C);
  for (int c = 0; c < C; ++c) {
    if (gaussian) {
      a[c] = -0.5 * (kLog2Pi + std::log(scales[c]));
      b[c] = 1.0 / (2.0 * scales[c]);
    } else {
      a[c] = -std::log(2.0 * scales[c]);
      b[c] = 1.0 / scales[c];
    }
  }

  std::vector<double> partial(chunk_count(n), 0.0);
  for_each_chunk(n, threads, [&](std::size_t ci, std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double* r = &residuals.r[i * C];
      for (int c = 0; c < C; ++c) {
        const double m = gaussian ? r[c] * r[c] : std::fabs(r[c]);
        acc += a[c] - m * b[c];
      }
    }
    partial[ci] = acc;
  });

  const double total = reduce_ordered(partial);
  if (!std::isfinite(total))
    fail(ErrorKind::NumericFailure, "non-finite log-likelihood");
  return total / static_cast<double>(n);
}

}  // namespace rrn
