#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rrn/errors.hpp"

namespace rrn {

enum class NoiseFamily { Gaussian, Laplace };

const char* family_name(NoiseFamily f);

// Two-component noise mixture over per-band residuals. Component 1 is the
// no-change component: its mean scale across bands never exceeds component
// 2's. Scales are variances for the Gaussian family and scale parameters for
// the Laplace family.
struct MixtureParams {
  NoiseFamily family = NoiseFamily::Gaussian;
  std::array<double, 2> pi{0.5, 0.5};
  std::vector<std::array<double, 2>> scales;  // [band][component]

  static constexpr double kScaleFloor = 1e-4;
  static constexpr double kPiFloor = 1e-6;

  int bands() const { return static_cast<int>(scales.size()); }
  double mean_scale(int component) const;
  void validate() const;

  nlohmann::json to_json() const;
  static MixtureParams from_json(const nlohmann::json& j);
};

// Per-pixel, per-band residuals y - f(x), pixel-major: r[i * bands + c].
struct ResidualField {
  std::size_t count = 0;
  int bands = 0;
  std::vector<double> r;

  double at(std::size_t i, int c) const { return r[i * bands + c]; }
  void validate() const;
};

// Per-pixel posteriors of the latent change indicator. g1 + g2 == 1.
struct ResponsibilityField {
  std::vector<double> g1, g2;
  std::size_t underflow_count = 0;

  std::size_t size() const { return g1.size(); }
  void swap_components() { g1.swap(g2); }
};

// log N(r | 0, sigma^2) or log L(r | 0, beta); component is 1 or 2.
double log_density(double residual, int component, int band,
                   const MixtureParams& params);

ResponsibilityField e_step(const ResidualField& residuals,
                           const MixtureParams& params, int threads = 1);

// Closed-form weighted-moment updates for pi and the per-band scales, with
// floors applied, then a label reorder so component 1 keeps the smaller mean
// scale. On reorder the gammas are swapped in place to stay consistent.
MixtureParams m_step_mixture(const ResidualField& residuals,
                             ResponsibilityField& gammas, NoiseFamily family,
                             int threads = 1);

// (1/n) * sum_i log sum_k pi_k * prod_c dens(r_ic | k, c), log-sum-exp
// stabilized.
double mean_log_likelihood(const ResidualField& residuals,
                           const MixtureParams& params, int threads = 1);

// Single-component moment fit and likelihood, used by the unweighted
// baselines which treat every pixel as no-change.
std::vector<double> fit_single_scales(const ResidualField& residuals,
                                      NoiseFamily family, int threads = 1);
double single_mean_log_likelihood(const ResidualField& residuals,
                                  const std::vector<double>& scales,
                                  NoiseFamily family, int threads = 1);

}  // namespace rrn
