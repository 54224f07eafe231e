#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rrn/mappers.hpp"
#include "rrn/noise_model.hpp"
#include "rrn/raster.hpp"

namespace rrn {

// The five normalization methods: two unweighted baselines and three
// stochastic-EM mixture variants.
enum class Method { LRrn, HmRrn, LRrnMog, HmRrnMol, HmRrnMog };

const char* method_name(Method m);
std::optional<Method> parse_method(std::string name);
bool method_is_baseline(Method m);
bool method_is_linear(Method m);
NoiseFamily method_family(Method m);

struct EmConfig {
  Method method = Method::HmRrnMog;
  double delta = 1e-4;                  // convergence tolerance on mean LL
  int max_iters = 10;                   // cap on stochastic iterations
  std::size_t subsample_size = 100000;  // 0 = full batch
  std::uint64_t seed = 0;
  double gamma_threshold = 0.5;         // no-change classification cutoff

  void validate() const;
};

struct NoChangeMask {
  Mask mask;
  double ncr = 0.0;  // fraction of the overlap set classified no-change
};

struct FitResult {
  Method method = Method::HmRrnMog;
  MappingFamily mapping;
  MixtureParams params;                  // mixture methods
  std::vector<double> baseline_scales;   // single-component fit, baselines
  ResponsibilityField gammas;            // final full-overlap posteriors
  std::vector<std::uint32_t> omega;      // linear pixel ids of the overlap
  NoChangeMask nc_mask;
  std::vector<double> trace;             // per-iteration mean log-likelihood
  int iterations = 0;
  double mll = 0.0;
  double wall_time_s = 0.0;
  double gamma_threshold = 0.5;
  std::uint64_t seed = 0;

  nlohmann::json report() const;
};

// Unweighted mapping fit plus a median-split scale initialization. The codes
// pair must hold quantized rasters; requires at least 100 overlap pixels.
std::pair<MappingFamily, MixtureParams> initialize(const RasterPair& codes,
                                                   int t_max,
                                                   const EmConfig& config);

// Runs the configured method end to end. Baselines do a single unweighted fit
// with every pixel treated as no-change; mixture methods iterate the
// stochastic EM loop and always finish with a full-batch turn.
FitResult run(const RasterPair& codes, int t_max, const EmConfig& config,
              int threads = 1);

NoChangeMask extract_nc_mask(const ResponsibilityField& gammas,
                             std::span<const std::uint32_t> omega, int width,
                             int height, double threshold);

}  // namespace rrn
