#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rrn/mappers.hpp"
#include "rrn/raster.hpp"

namespace rrn {

enum class ChangeKind { CloudBlobs, RandomReplacement, LandcoverPatches };

const char* change_kind_name(ChangeKind k);
std::optional<ChangeKind> parse_change_kind(const std::string& name);

// Synthetic bitemporal scene: a textured target, a source produced by the
// inverse of the true mapping plus small noise on no-change pixels, and
// change pixels rewritten per change_kind with large noise.
struct SceneSpec {
  int width = 128;
  int height = 128;
  int bands = 3;
  int t_max = 255;
  bool affine_mapping = false;
  std::vector<double> gamma = {0.75, 1.3, 0.85};  // per band, cycled
  std::vector<AffineCoef> affine;                 // per band, cycled
  double change_fraction = 0.2;
  ChangeKind change_kind = ChangeKind::CloudBlobs;
  double noise_sigma_nc = 2.0;
  double noise_sigma_change = 8.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SceneTruth {
  Mask nc_mask;
  MappingFamily mapping;  // true source -> target mapping
};

struct Scene {
  RasterPair pair;
  SceneTruth truth;
};

Scene generate(const SceneSpec& spec);

// Exhaustive search over all monotone maps {0..T} -> {0..T}; returns the
// minimal weighted L1 objective. Test-only oracle; T <= 8, n <= 20.
double oracle_monotone_lut(std::span<const std::uint16_t> x,
                           std::span<const std::uint16_t> y,
                           std::span<const double> weights, int t_max,
                           std::vector<std::uint16_t>* best_lut = nullptr);

// Independent high-precision normal-equation solve (long double, uncentered).
AffineCoef oracle_wls(std::span<const double> x, std::span<const double> y,
                      std::span<const double> weights);

// Direct sum of g * |y - f| over rank-paired sorted sequences; rejects
// unsorted input.
double oracle_match_distance(std::span<const std::uint16_t> f_values,
                             std::span<const std::uint16_t> y_values,
                             std::span<const double> weights, int t_max);

}  // namespace rrn
