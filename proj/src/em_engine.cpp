#include "rrn/em_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "rrn/parallel.hpp"
#include "rrn/rng.hpp"

namespace rrn {

using nlohmann::json;

const char* method_name(Method m) {
  switch (m) {
    case Method::LRrn: return "L-RRN";
    case Method::HmRrn: return "HM-RRN";
    case Method::LRrnMog: return "L-RRN-MoG";
    case Method::HmRrnMol: return "HM-RRN-MoL";
    case Method::HmRrnMog: return "HM-RRN-MoG";
  }
  return "?";
}

std::optional<Method> parse_method(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (name == "l-rrn" || name == "linear-rrn") return Method::LRrn;
  if (name == "hm-rrn") return Method::HmRrn;
  if (name == "l-mog" || name == "l-rrn-mog" || name == "linear-rrn-mog")
    return Method::LRrnMog;
  if (name == "hm-mol" || name == "hm-rrn-mol") return Method::HmRrnMol;
  if (name == "hm-mog" || name == "hm-rrn-mog") return Method::HmRrnMog;
  return std::nullopt;
}

bool method_is_baseline(Method m) {
  return m == Method::LRrn || m == Method::HmRrn;
}

bool method_is_linear(Method m) {
  return m == Method::LRrn || m == Method::LRrnMog;
}

NoiseFamily method_family(Method m) {
  // HM-RRN reports Laplace scales (mean absolute residual), everything else
  // is Gaussian except the Laplace mixture.
  return (m == Method::HmRrn || m == Method::HmRrnMol) ? NoiseFamily::Laplace
                                                       : NoiseFamily::Gaussian;
}

void EmConfig::validate() const {
  if (!(delta > 0.0)) fail(ErrorKind::InvalidArgument, "delta must be > 0");
  if (max_iters < 1) fail(ErrorKind::InvalidArgument, "max_iters must be >= 1");
  if (!(gamma_threshold > 0.0 && gamma_threshold < 1.0))
    fail(ErrorKind::InvalidArgument, "gamma_threshold must be in (0,1)");
  if (subsample_size != 0 && subsample_size < 1000)
    fail(ErrorKind::InvalidArgument,
         "subsample_size must be 0 (full) or >= 1000");
}

namespace {

// Overlap pixels gathered into band-major code arrays.
struct Gathered {
  int bands = 0;
  int t_max = 0;
  int width = 0, height = 0;
  std::vector<std::uint32_t> omega;
  std::vector<std::vector<std::uint16_t>> x, y;  // [band][i]

  std::size_t n() const { return omega.size(); }
};

Gathered gather(const RasterPair& codes, int t_max) {
  if (codes.source.dtype() == Dtype::F32 || codes.target.dtype() == Dtype::F32)
    fail(ErrorKind::InvalidArgument, "run expects quantized code rasters");
  Gathered g;
  g.bands = codes.source.bands();
  g.t_max = t_max;
  g.width = codes.source.width();
  g.height = codes.source.height();
  const std::size_t npx = codes.source.pixels();
  g.omega.reserve(codes.valid.count());
  for (std::size_t p = 0; p < npx; ++p)
    if (codes.valid.get(p)) g.omega.push_back(static_cast<std::uint32_t>(p));
  g.x.resize(g.bands);
  g.y.resize(g.bands);
  for (int b = 0; b < g.bands; ++b) {
    g.x[b].resize(g.omega.size());
    g.y[b].resize(g.omega.size());
    for (std::size_t i = 0; i < g.omega.size(); ++i) {
      g.x[b][i] = static_cast<std::uint16_t>(codes.source.at(b, g.omega[i]));
      g.y[b][i] = static_cast<std::uint16_t>(codes.target.at(b, g.omega[i]));
    }
  }
  return g;
}

// Codes restricted to a subset of overlap positions; empty subset = all.
struct Subset {
  std::vector<std::vector<std::uint16_t>> x, y;
  std::size_t n = 0;
};

Subset take_subset(const Gathered& g, std::span<const std::uint32_t> idx) {
  Subset s;
  if (idx.empty()) {
    s.x = g.x;
    s.y = g.y;
    s.n = g.n();
    return s;
  }
  s.n = idx.size();
  s.x.resize(g.bands);
  s.y.resize(g.bands);
  for (int b = 0; b < g.bands; ++b) {
    s.x[b].resize(idx.size());
    s.y[b].resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      s.x[b][i] = g.x[b][idx[i]];
      s.y[b][i] = g.y[b][idx[i]];
    }
  }
  return s;
}

ResidualField residuals_of(const Subset& s, const MappingFamily& mapping,
                           int threads) {
  ResidualField rf;
  rf.count = s.n;
  rf.bands = static_cast<int>(s.x.size());
  rf.r.resize(rf.count * rf.bands);
  for (int c = 0; c < rf.bands; ++c) {
    const auto& xs = s.x[c];
    const auto& ys = s.y[c];
    for_each_chunk(rf.count, threads,
                   [&](std::size_t, std::size_t lo, std::size_t hi) {
                     for (std::size_t i = lo; i < hi; ++i)
                       rf.r[i * rf.bands + c] =
                           static_cast<double>(ys[i]) - mapping.eval(c, xs[i]);
                   });
  }
  return rf;
}

MappingFamily unweighted_fit(const Subset& s, bool linear, int t_max,
                             int threads) {
  const int bands = static_cast<int>(s.x.size());
  std::vector<double> ones(s.n, 1.0);
  if (linear) {
    std::vector<AffineCoef> coefs;
    for (int c = 0; c < bands; ++c)
      coefs.push_back(fit_affine_wls(s.x[c], s.y[c], ones, threads));
    return MappingFamily::affine(std::move(coefs));
  }
  std::vector<std::vector<std::uint16_t>> tables;
  for (int c = 0; c < bands; ++c) {
    const auto hx = build_weighted_histogram(s.x[c], ones, t_max, threads);
    const auto hy = build_weighted_histogram(s.y[c], ones, t_max, threads);
    tables.push_back(fit_monotone_lut(hx, hy));
  }
  return MappingFamily::monotone_lut(std::move(tables));
}

MappingFamily weighted_refit(const Subset& s, const ResponsibilityField& gam,
                             const MixtureParams& params, Method method,
                             int t_max, int threads) {
  const int bands = static_cast<int>(s.x.size());
  if (method == Method::LRrnMog) {
    std::vector<AffineCoef> coefs;
    std::vector<double> g(s.n);
    for (int c = 0; c < bands; ++c) {
      const double i1 = 1.0 / (2.0 * params.scales[c][0]);
      const double i2 = 1.0 / (2.0 * params.scales[c][1]);
      for (std::size_t i = 0; i < s.n; ++i)
        g[i] = gam.g1[i] * i1 + gam.g2[i] * i2;
      coefs.push_back(fit_affine_wls(s.x[c], s.y[c], g, threads));
    }
    return MappingFamily::affine(std::move(coefs));
  }
  std::vector<std::vector<std::uint16_t>> tables;
  for (int c = 0; c < bands; ++c) {
    const auto g = method == Method::HmRrnMol ? case2_weights(gam, params, c)
                                              : case3_weights(gam, params, c);
    const auto hx = build_weighted_histogram(s.x[c], g, t_max, threads);
    const auto hy = build_weighted_histogram(s.y[c], g, t_max, threads);
    tables.push_back(fit_monotone_lut(hx, hy));
  }
  return MappingFamily::monotone_lut(std::move(tables));
}

MixtureParams median_split_init(const ResidualField& rf, NoiseFamily family) {
  MixtureParams p;
  p.family = family;
  p.pi = {0.5, 0.5};
  const bool gaussian = family == NoiseFamily::Gaussian;
  std::vector<double> mags(rf.count);
  for (int c = 0; c < rf.bands; ++c) {
    for (std::size_t i = 0; i < rf.count; ++i)
      mags[i] = std::fabs(rf.at(i, c));
    std::vector<double> sorted = mags;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                     sorted.end());
    const double med = sorted[sorted.size() / 2];
    double s1 = 0, s2 = 0;
    std::size_t n1 = 0, n2 = 0;
    for (double m : mags) {
      const double v = gaussian ? m * m : m;
      if (m <= med) {
        s1 += v;
        ++n1;
      } else {
        s2 += v;
        ++n2;
      }
    }
    std::array<double, 2> sc;
    sc[0] = std::max(n1 ? s1 / n1 : 0.0, MixtureParams::kScaleFloor);
    sc[1] = std::max(n2 ? s2 / n2 : 0.0, MixtureParams::kScaleFloor);
    p.scales.push_back(sc);
  }
  if (p.mean_scale(0) > p.mean_scale(1)) {
    std::swap(p.pi[0], p.pi[1]);
    for (auto& s : p.scales) std::swap(s[0], s[1]);
  }
  p.validate();
  return p;
}

struct EstepResult {
  ResponsibilityField gammas;
  double mll = 0.0;
};

// Fused pass: responsibilities plus the mean log-likelihood of the same
// parameters on the same pixels.
EstepResult e_step_with_mll(const ResidualField& rf, const MixtureParams& p,
                            int threads) {
  EstepResult out;
  out.gammas = e_step(rf, p, threads);
  out.mll = mean_log_likelihood(rf, p, threads);
  return out;
}

}  // namespace

NoChangeMask extract_nc_mask(const ResponsibilityField& gammas,
                             std::span<const std::uint32_t> omega, int width,
                             int height, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    fail(ErrorKind::InvalidArgument, "threshold must be in (0,1)");
  if (gammas.size() != omega.size())
    fail(ErrorKind::InvalidArgument, "gammas and overlap set are misaligned");
  NoChangeMask out{Mask(width, height, false), 0.0};
  std::size_t kept = 0;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    if (gammas.g1[i] >= threshold) {
      out.mask.set(omega[i], true);
      ++kept;
    }
  }
  out.ncr = omega.empty() ? 0.0
                          : static_cast<double>(kept) /
                                static_cast<double>(omega.size());
  return out;
}

std::pair<MappingFamily, MixtureParams> initialize(const RasterPair& codes,
                                                   int t_max,
                                                   const EmConfig& config) {
  config.validate();
  const Gathered g = gather(codes, t_max);
  if (g.n() < 100)
    fail(ErrorKind::InvalidArgument,
         "overlap set too small to fit a mixture (need >= 100 pixels)");
  const Subset all = take_subset(g, {});
  MappingFamily mapping =
      unweighted_fit(all, method_is_linear(config.method), t_max, 1);
  const ResidualField rf = residuals_of(all, mapping, 1);
  MixtureParams params = median_split_init(rf, method_family(config.method));
  return {std::move(mapping), std::move(params)};
}

FitResult run(const RasterPair& codes, int t_max, const EmConfig& config,
              int threads) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();

  const Gathered g = gather(codes, t_max);
  if (g.n() < 100)
    fail(ErrorKind::InvalidArgument,
         "overlap set too small to fit a mixture (need >= 100 pixels)");
  const Subset all = take_subset(g, {});

  FitResult res;
  res.method = config.method;
  res.omega = g.omega;
  res.gamma_threshold = config.gamma_threshold;
  res.seed = config.seed;

  if (method_is_baseline(config.method)) {
    res.mapping = unweighted_fit(all, method_is_linear(config.method), t_max,
                                 threads);
    const ResidualField rf = residuals_of(all, res.mapping, threads);
    const NoiseFamily family = method_family(config.method);
    res.baseline_scales = fit_single_scales(rf, family, threads);
    res.mll =
        single_mean_log_likelihood(rf, res.baseline_scales, family, threads);
    res.trace = {res.mll};
    res.iterations = 1;
    res.gammas.g1.assign(g.n(), 1.0);
    res.gammas.g2.assign(g.n(), 0.0);
    // every pixel counts as no-change for the unweighted baselines
    res.params.family = family;
    res.params.pi = {1.0 - MixtureParams::kPiFloor, MixtureParams::kPiFloor};
    for (double s : res.baseline_scales) res.params.scales.push_back({s, s});
  } else {
    auto [mapping, params] = [&] {
      // initialize() regathers; reuse the local gather instead.
      const Subset& full = all;
      MappingFamily m =
          unweighted_fit(full, method_is_linear(config.method), t_max, threads);
      const ResidualField rf = residuals_of(full, m, threads);
      MixtureParams p = median_split_init(rf, method_family(config.method));
      return std::pair<MappingFamily, MixtureParams>(std::move(m),
                                                     std::move(p));
    }();
    const NoiseFamily family = method_family(config.method);
    Rng rng(config.seed);
    const bool full_batch =
        config.subsample_size == 0 || config.subsample_size >= g.n();

    for (int it = 0; it < config.max_iters; ++it) {
      Subset drawn;
      if (!full_batch) {
        const auto idx = sample_without_replacement(
            rng, static_cast<std::uint32_t>(g.n()),
            static_cast<std::uint32_t>(config.subsample_size));
        drawn = take_subset(g, idx);
      }
      const Subset& sub = full_batch ? all : drawn;
      const ResidualField rf_old = residuals_of(sub, mapping, threads);
      auto es = e_step_with_mll(rf_old, params, threads);
      params = m_step_mixture(rf_old, es.gammas, family, threads);
      mapping = weighted_refit(sub, es.gammas, params, config.method, t_max,
                               threads);
      const ResidualField rf_new = residuals_of(sub, mapping, threads);
      const double mll_new = mean_log_likelihood(rf_new, params, threads);
      if (!std::isfinite(mll_new))
        fail(ErrorKind::NumericFailure, "non-finite mean log-likelihood");
      res.trace.push_back(mll_new);
      if (std::fabs(mll_new - es.mll) < config.delta) break;
    }

    // Final turn on the whole overlap set.
    {
      const ResidualField rf_old = residuals_of(all, mapping, threads);
      ResponsibilityField gam = e_step(rf_old, params, threads);
      params = m_step_mixture(rf_old, gam, family, threads);
      mapping =
          weighted_refit(all, gam, params, config.method, t_max, threads);
      const ResidualField rf_final = residuals_of(all, mapping, threads);
      res.gammas = e_step(rf_final, params, threads);
      res.mll = mean_log_likelihood(rf_final, params, threads);
      res.trace.push_back(res.mll);
    }
    res.iterations = static_cast<int>(res.trace.size());
    res.mapping = std::move(mapping);
    res.params = std::move(params);
  }

  res.nc_mask = extract_nc_mask(res.gammas, res.omega, g.width, g.height,
                                config.gamma_threshold);
  res.iterations = static_cast<int>(res.trace.size());
  res.wall_time_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t_start)
                        .count();
  return res;
}

json FitResult::report() const {
  json pi_j, scales_j = json::array();
  if (method_is_baseline(method)) {
    pi_j = json::array({1.0});
    for (double s : baseline_scales) scales_j.push_back(json::array({s}));
  } else {
    pi_j = json::array({params.pi[0], params.pi[1]});
    for (const auto& s : params.scales)
      scales_j.push_back(json::array({s[0], s[1]}));
  }
  return json{{"method", method_name(method)},
              {"mll", mll},
              {"ncr", nc_mask.ncr},
              {"pi", pi_j},
              {"scales", scales_j},
              {"iterations", iterations},
              {"trace", trace},
              {"wall_time_s", wall_time_s},
              {"gamma_threshold", gamma_threshold},
              {"seed", seed}};
}

}  // namespace rrn
