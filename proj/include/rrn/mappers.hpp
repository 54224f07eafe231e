#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "rrn/noise_model.hpp"
#include "rrn/raster.hpp"

namespace rrn {

struct AffineCoef {
  double w = 1.0;
  double b = 0.0;
};

// Per-band normalization mapping: affine coefficients or a monotone
// non-decreasing lookup table over {0..T}.
class MappingFamily {
 public:
  enum class Kind { Affine, MonotoneLut };

  MappingFamily() = default;  // empty affine placeholder, assign before use

  static MappingFamily affine(std::vector<AffineCoef> coefs);
  static MappingFamily monotone_lut(
      std::vector<std::vector<std::uint16_t>> tables);

  Kind kind() const { return kind_; }
  int bands() const;
  int lut_t_max() const;  // MonotoneLut only

  // Unrounded mapped value; rounding and clamping happen at apply time.
  double eval(int band, std::uint16_t code) const;

  const std::vector<AffineCoef>& affine_coefs() const;
  const std::vector<std::vector<std::uint16_t>>& tables() const;

  nlohmann::json to_json() const;
  static MappingFamily from_json(const nlohmann::json& j);

 private:
  Kind kind_ = Kind::Affine;
  std::vector<AffineCoef> coefs_;
  std::vector<std::vector<std::uint16_t>> tables_;
};

struct WeightedHistogram {
  std::vector<double> bins;  // length t_max + 1
  double total = 0.0;

  int t_max() const { return static_cast<int>(bins.size()) - 1; }
};

// bins[t] = sum of weights of pixels with value t. All weights must be
// non-negative with a positive sum.
WeightedHistogram build_weighted_histogram(std::span<const std::uint16_t> values,
                                           std::span<const double> weights,
                                           int t_max, int threads = 1);

// L1 distance between cumulative histograms: sum_t |cum_f(t) - cum_y(t)|.
double match_distance(const WeightedHistogram& hist_f,
                      const WeightedHistogram& hist_y);

// Weighted histogram matching: maps each source code to the target code whose
// cumulative profile first reaches the source profile. Codes below the first
// populated source bin inherit that bin's target. Result is monotone
// non-decreasing.
std::vector<std::uint16_t> fit_monotone_lut(const WeightedHistogram& hist_x,
                                            const WeightedHistogram& hist_y);

// Minimizes sum_i weights[i] * (y[i] - w*x[i] - b)^2 via the 2x2 normal
// equations in double precision.
AffineCoef fit_affine_wls(std::span<const std::uint16_t> x,
                          std::span<const std::uint16_t> y,
                          std::span<const double> weights, int threads = 1);

// Applies the mapping band by band: affine values are rounded and clamped to
// [0, t_max]; lut values are table lookups.
Raster apply_mapping(const MappingFamily& mapping, const Raster& source_codes,
                     int t_max, int threads = 1);

// Histogram weights for the Laplace M-step: g_i = sum_k gamma_k / beta_ck.
std::vector<double> case2_weights(const ResponsibilityField& gammas,
                                  const MixtureParams& params, int band);

// Surrogate histogram weights for the Gaussian M-step: g_i = gamma_1 / sigma_c1^2.
std::vector<double> case3_weights(const ResponsibilityField& gammas,
                                  const MixtureParams& params, int band);

}  // namespace rrn
