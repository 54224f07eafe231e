#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rrn/em_engine.hpp"
#include "rrn/raster.hpp"

namespace rrn {

// Which band index plays each spectral role; -1 = absent.
struct BandRoles {
  int blue = -1;
  int green = -1;
  int red = -1;
  int nir = -1;
};

// Normalized-difference index with per-pixel degenerate (zero denominator)
// flags; degenerate pixels carry index 0 and are excluded from masked RMSE.
struct IndexField {
  std::vector<double> v;
  std::vector<std::uint8_t> degenerate;
  std::size_t degenerate_count = 0;
};

// RMSE over masked pixels only.
double nc_rmse(std::span<const double> a, std::span<const double> b,
               const Mask& mask);

IndexField ndvi(std::span<const double> nir, std::span<const double> red);
IndexField ndwi(std::span<const double> green, std::span<const double> nir);

struct EvalReport {
  struct Entry {
    std::string name;
    double before = 0.0;
    double after = 0.0;
    bool present = false;
  };

  std::string method;
  std::optional<double> mll;
  double ncr = 0.0;
  Entry band_b{"B"}, band_g{"G"}, band_r{"R"}, band_n{"N"};
  Entry index_ndvi{"NDVI"}, index_ndwi{"NDWI"};
  std::size_t nc_pixels = 0;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Before/after no-change RMSE per band role plus NDVI/NDWI consistency, all
// on the given no-change mask and the rasters' native scale.
EvalReport evaluate_pair(const RasterPair& pair,
                         const Raster& normalized_source,
                         const NoChangeMask& mask, const BandRoles& roles);

}  // namespace rrn
