#include "rrn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rrn/rng.hpp"

namespace rrn {

const char* change_kind_name(ChangeKind k) {
  switch (k) {
    case ChangeKind::CloudBlobs: return "cloud-blobs";
    case ChangeKind::RandomReplacement: return "random-replacement";
    case ChangeKind::LandcoverPatches: return "landcover-patches";
  }
  return "?";
}

std::optional<ChangeKind> parse_change_kind(const std::string& name) {
  if (name == "cloud-blobs" || name == "clouds") return ChangeKind::CloudBlobs;
  if (name == "random-replacement" || name == "random")
    return ChangeKind::RandomReplacement;
  if (name == "landcover-patches" || name == "patches")
    return ChangeKind::LandcoverPatches;
  return std::nullopt;
}

void SceneSpec::validate() const {
  if (width < 8 || height < 8)
    fail(ErrorKind::InvalidArgument, "scene must be at least 8x8");
  if (bands < 1) fail(ErrorKind::InvalidArgument, "need at least one band");
  if (t_max < 1 || t_max > 65535)
    fail(ErrorKind::InvalidArgument, "t_max must be in [1, 65535]");
  if (!(change_fraction >= 0.0 && change_fraction < 1.0))
    fail(ErrorKind::InvalidArgument, "change_fraction must be in [0,1)");
  if (!(noise_sigma_nc < noise_sigma_change))
    fail(ErrorKind::InvalidArgument,
         "no-change noise must be smaller than change noise");
  if (!affine_mapping && gamma.empty())
    fail(ErrorKind::InvalidArgument, "gamma mapping needs exponents");
  if (affine_mapping && affine.empty())
    fail(ErrorKind::InvalidArgument, "affine mapping needs coefficients");
  if (!affine_mapping)
    for (double g : gamma)
      if (!(g > 0.0))
        fail(ErrorKind::InvalidArgument, "gamma exponents must be positive");
  if (affine_mapping)
    for (const auto& c : affine)
      if (c.w == 0.0)
        fail(ErrorKind::InvalidArgument, "affine slope must be nonzero");
}

namespace {

// Bilinear value-noise lattice shared across bands.
struct ValueNoise {
  int gw, gh, cell;
  std::vector<double> lattice;

  ValueNoise(int width, int height, int cell_px, Rng& rng) : cell(cell_px) {
    gw = (width + cell - 1) / cell + 1;
    gh = (height + cell - 1) / cell + 1;
    lattice.resize(static_cast<std::size_t>(gw) * gh);
    for (double& v : lattice) v = rng.uniform();
  }

  double at(int x, int y) const {
    const double fx = static_cast<double>(x) / cell;
    const double fy = static_cast<double>(y) / cell;
    const int ix = std::min(static_cast<int>(fx), gw - 2);
    const int iy = std::min(static_cast<int>(fy), gh - 2);
    const double tx = fx - ix, ty = fy - iy;
    auto l = [&](int i, int j) {
      return lattice[static_cast<std::size_t>(j) * gw + i];
    };
    const double top = l(ix, iy) * (1 - tx) + l(ix + 1, iy) * tx;
    const double bot = l(ix, iy + 1) * (1 - tx) + l(ix + 1, iy + 1) * tx;
    return top * (1 - ty) + bot * ty;
  }
};

double forward_map(const SceneSpec& spec, int band, double x) {
  const double t = spec.t_max;
  if (spec.affine_mapping) {
    const AffineCoef& c = spec.affine[band % spec.affine.size()];
    return c.w * x + c.b;
  }
  const double g = spec.gamma[band % spec.gamma.size()];
  return t * std::pow(x / t, g);
}

double inverse_map(const SceneSpec& spec, int band, double y) {
  const double t = spec.t_max;
  if (spec.affine_mapping) {
    const AffineCoef& c = spec.affine[band % spec.affine.size()];
    return (y - c.b) / c.w;
  }
  const double g = spec.gamma[band % spec.gamma.size()];
  return t * std::pow(y / t, 1.0 / g);
}

}  // namespace

Scene generate(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int w = spec.width, h = spec.height, C = spec.bands;
  const double T = spec.t_max;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const Dtype dtype = spec.t_max <= 255 ? Dtype::U8 : Dtype::U16;

  const ValueNoise base(w, h, 16, rng);
  const ValueNoise detail(w, h, 4, rng);
  std::vector<double> band_gain(C), band_bias(C);
  for (int c = 0; c < C; ++c) {
    band_gain[c] = rng.uniform(0.60, 0.85);
    band_bias[c] = rng.uniform(0.04, 0.12);
  }

  Raster target(w, h, C, dtype);
  Raster source(w, h, C, dtype);
  auto clamp_code = [&](double v) {
    return std::clamp(std::round(v), 0.0, T);
  };

  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const double v = band_bias[c] + band_gain[c] * base.at(x, y) +
                         0.18 * detail.at(x, y);
        const double ty = clamp_code(v * T);
        target.set(c, p, ty);
        source.set(c, p,
                   clamp_code(inverse_map(spec, c, ty) +
                              spec.noise_sigma_nc * rng.normal()));
      }
    }
  }

  Mask changed(w, h, false);
  const std::size_t target_count =
      static_cast<std::size_t>(std::llround(spec.change_fraction * n));

  if (target_count > 0) {
    switch (spec.change_kind) {
      case ChangeKind::RandomReplacement: {
        const auto idx = sample_without_replacement(
            rng, static_cast<std::uint32_t>(n),
            static_cast<std::uint32_t>(target_count));
        for (std::uint32_t p : idx) {
          changed.set(p, true);
          for (int c = 0; c < C; ++c)
            source.set(c, p,
                       clamp_code(static_cast<double>(rng.below(spec.t_max + 1)) +
                                  spec.noise_sigma_change * rng.normal()));
        }
        break;
      }
      case ChangeKind::CloudBlobs: {
        const double rmax =
            std::max(4.0, std::sqrt(0.015 * static_cast<double>(n) /
                                    3.14159265358979));
        std::size_t cnt = 0;
        for (int guard = 0; cnt < target_count && guard < 20000; ++guard) {
          const double cx = rng.uniform(0.0, w);
          const double cy = rng.uniform(0.0, h);
          const double rx = rng.uniform(rmax * 0.45, rmax);
          const double ry = rng.uniform(rmax * 0.45, rmax);
          const int x0 = std::max(0, static_cast<int>(cx - rx));
          const int x1 = std::min(w - 1, static_cast<int>(cx + rx));
          const int y0 = std::max(0, static_cast<int>(cy - ry));
          const int y1 = std::min(h - 1, static_cast<int>(cy + ry));
          for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
              const double dx = (x - cx) / rx, dy = (y - cy) / ry;
              const double q = 1.0 - (dx * dx + dy * dy);
              if (q <= 0.15) continue;
              const std::size_t p = static_cast<std::size_t>(y) * w + x;
              if (!changed.get(p)) {
                changed.set(p, true);
                ++cnt;
              }
              for (int c = 0; c < C; ++c) {
                // bright ellipse saturating toward T
                const double v = source.at(c, p);
                source.set(c, p,
                           clamp_code(v + (T - v) * std::min(1.0, 1.4 * q) +
                                      spec.noise_sigma_change * rng.normal()));
              }
            }
          }
        }
        break;
      }
      case ChangeKind::LandcoverPatches: {
        std::size_t cnt = 0;
        const int dim = std::min(w, h);
        for (int guard = 0; cnt < target_count && guard < 20000; ++guard) {
          const int pw = std::max(
              3, static_cast<int>(dim * rng.uniform(0.05, 0.16)));
          const int ph = std::max(
              3, static_cast<int>(dim * rng.uniform(0.05, 0.16)));
          const int x0 = static_cast<int>(rng.below(std::max(1, w - pw)));
          const int y0 = static_cast<int>(rng.below(std::max(1, h - ph)));
          std::vector<double> level(C);
          for (int c = 0; c < C; ++c)
            level[c] = static_cast<double>(rng.below(spec.t_max + 1));
          for (int y = y0; y < y0 + ph && y < h; ++y) {
            for (int x = x0; x < x0 + pw && x < w; ++x) {
              const std::size_t p = static_cast<std::size_t>(y) * w + x;
              if (!changed.get(p)) {
                changed.set(p, true);
                ++cnt;
              }
              for (int c = 0; c < C; ++c)
                source.set(c, p,
                           clamp_code(level[c] + 18.0 * detail.at(x, y) +
                                      spec.noise_sigma_change * rng.normal()));
            }
          }
        }
        break;
      }
    }
  }

  SceneTruth truth{Mask(w, h, false), MappingFamily()};
  for (std::size_t p = 0; p < n; ++p) truth.nc_mask.set(p, !changed.get(p));

  if (spec.affine_mapping) {
    std::vector<AffineCoef> coefs;
    for (int c = 0; c < C; ++c)
      coefs.push_back(spec.affine[c % spec.affine.size()]);
    truth.mapping = MappingFamily::affine(std::move(coefs));
  } else {
    std::vector<std::vector<std::uint16_t>> tables(C);
    for (int c = 0; c < C; ++c) {
      tables[c].resize(spec.t_max + 1);
      for (int t = 0; t <= spec.t_max; ++t)
        tables[c][t] = static_cast<std::uint16_t>(
            clamp_code(forward_map(spec, c, static_cast<double>(t))));
    }
    truth.mapping = MappingFamily::monotone_lut(std::move(tables));
  }

  Scene scene{make_raster_pair(std::move(source), std::move(target)),
              std::move(truth)};
  return scene;
}

double oracle_monotone_lut(std::span<const std::uint16_t> x,
                           std::span<const std::uint16_t> y,
                           std::span<const double> weights, int t_max,
                           std::vector<std::uint16_t>* best_lut) {
  if (t_max > 8) fail(ErrorKind::InvalidArgument, "oracle limited to T <= 8");
  if (x.size() > 20 || x.empty())
    fail(ErrorKind::InvalidArgument, "oracle limited to 1 <= n <= 20");
  if (x.size() != y.size() || x.size() != weights.size())
    fail(ErrorKind::InvalidArgument, "inputs are misaligned");

  // cost[t][v] = weighted L1 cost of sending source code t to target code v
  const int T = t_max;
  std::vector<std::vector<double>> cost(T + 1,
                                        std::vector<double>(T + 1, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > T || y[i] > T)
      fail(ErrorKind::InvalidArgument, "codes exceed t_max");
    for (int v = 0; v <= T; ++v)
      cost[x[i]][v] += weights[i] * std::abs(static_cast<int>(y[i]) - v);
  }

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::uint16_t> lut(T + 1, 0), best_found(T + 1, 0);
  auto recurse = [&](auto&& self, int t, int min_v, double acc) -> void {
    if (t > T) {
      if (acc < best) {
        best = acc;
        best_found = lut;
      }
      return;
    }
    for (int v = min_v; v <= T; ++v) {
      lut[t] = static_cast<std::uint16_t>(v);
      self(self, t + 1, v, acc + cost[t][v]);
    }
  };
  recurse(recurse, 0, 0, 0.0);
  if (best_lut) *best_lut = best_found;
  return best;
}

AffineCoef oracle_wls(std::span<const double> x, std::span<const double> y,
                      std::span<const double> weights) {
  if (x.size() != y.size() || x.size() != weights.size() || x.size() < 2)
    fail(ErrorKind::InvalidArgument, "inputs are misaligned or too small");
  long double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double g = weights[i];
    sw += g;
    sx += g * x[i];
    sy += g * y[i];
    sxx += g * x[i] * x[i];
    sxy += g * x[i] * y[i];
  }
  const long double det = sxx * sw - sx * sx;
  if (!(std::fabs(static_cast<double>(det)) >
        1e-14 * std::max(1.0, static_cast<double>(sxx))))
    fail(ErrorKind::NumericFailure, "singular normal matrix");
  AffineCoef c;
  c.w = static_cast<double>((sxy * sw - sx * sy) / det);
  c.b = static_cast<double>((sxx * sy - sx * sxy) / det);
  return c;
}

double oracle_match_distance(std::span<const std::uint16_t> f_values,
                             std::span<const std::uint16_t> y_values,
                             std::span<const double> weights, int t_max) {
  if (f_values.size() != y_values.size() ||
      f_values.size() != weights.size() || f_values.empty())
    fail(ErrorKind::InvalidArgument, "inputs are misaligned");
  for (std::size_t i = 0; i + 1 < f_values.size(); ++i)
    if (f_values[i] > f_values[i + 1] || y_values[i] > y_values[i + 1])
      fail(ErrorKind::InvalidArgument,
           "sequences must be sorted (color sort assumption)");
  double s = 0.0;
  for (std::size_t i = 0; i < f_values.size(); ++i) {
    if (f_values[i] > t_max || y_values[i] > t_max)
      fail(ErrorKind::InvalidArgument, "codes exceed t_max");
    s += weights[i] *
         std::abs(static_cast<int>(y_values[i]) - static_cast<int>(f_values[i]));
  }
  return s;
}

}  // namespace rrn
