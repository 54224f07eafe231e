#include "rrn/mappers.hpp"

#include <algorithm>
#include <cmath>

#include "rrn/parallel.hpp"

namespace rrn {

using nlohmann::json;

MappingFamily MappingFamily::affine(std::vector<AffineCoef> coefs) {
  if (coefs.empty())
    fail(ErrorKind::InvalidArgument, "mapping needs at least one band");
  for (const auto& c : coefs)
    if (!std::isfinite(c.w) || !std::isfinite(c.b))
      fail(ErrorKind::InvalidArgument, "non-finite affine coefficients");
  MappingFamily m;
  m.kind_ = Kind::Affine;
  m.coefs_ = std::move(coefs);
  return m;
}

MappingFamily MappingFamily::monotone_lut(
    std::vector<std::vector<std::uint16_t>> tables) {
  if (tables.empty())
    fail(ErrorKind::InvalidArgument, "mapping needs at least one band");
  const std::size_t len = tables.front().size();
  if (len < 2)
    fail(ErrorKind::InvalidArgument, "lut tables need at least two entries");
  for (const auto& t : tables) {
    if (t.size() != len)
      fail(ErrorKind::InvalidArgument, "lut tables must share one length");
    for (std::size_t i = 0; i + 1 < t.size(); ++i)
      if (t[i] > t[i + 1])
        fail(ErrorKind::InvalidArgument, "lut tables must be non-decreasing");
    for (std::uint16_t v : t)
      if (v >= len)
        fail(ErrorKind::InvalidArgument, "lut values must stay in {0..T}");
  }
  MappingFamily m;
  m.kind_ = Kind::MonotoneLut;
  m.tables_ = std::move(tables);
  return m;
}

int MappingFamily::bands() const {
  return kind_ == Kind::Affine ? static_cast<int>(coefs_.size())
                               : static_cast<int>(tables_.size());
}

int MappingFamily::lut_t_max() const {
  if (kind_ != Kind::MonotoneLut)
    fail(ErrorKind::InvalidArgument, "not a lut mapping");
  return static_cast<int>(tables_.front().size()) - 1;
}

double MappingFamily::eval(int band, std::uint16_t code) const {
  if (kind_ == Kind::Affine) {
    const AffineCoef& c = coefs_[band];
    return c.w * static_cast<double>(code) + c.b;
  }
  return static_cast<double>(tables_[band][code]);
}

const std::vector<AffineCoef>& MappingFamily::affine_coefs() const {
  if (kind_ != Kind::Affine)
    fail(ErrorKind::InvalidArgument, "not an affine mapping");
  return coefs_;
}

const std::vector<std::vector<std::uint16_t>>& MappingFamily::tables() const {
  if (kind_ != Kind::MonotoneLut)
    fail(ErrorKind::InvalidArgument, "not a lut mapping");
  return tables_;
}

json MappingFamily::to_json() const {
  if (kind_ == Kind::Affine) {
    json params = json::array();
    for (const auto& c : coefs_) params.push_back({c.w, c.b});
    return json{{"variant", "affine"}, {"params", params}};
  }
  json tables = json::array();
  for (const auto& t : tables_) tables.push_back(t);
  return json{{"variant", "lut"}, {"tables", tables}};
}

MappingFamily MappingFamily::from_json(const json& j) {
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "affine") {
    std::vector<AffineCoef> coefs;
    for (const auto& p : j.at("params"))
      coefs.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return affine(std::move(coefs));
  }
  if (variant == "lut") {
    std::vector<std::vector<std::uint16_t>> tables;
    for (const auto& t : j.at("tables"))
      tables.push_back(t.get<std::vector<std::uint16_t>>());
    return monotone_lut(std::move(tables));
  }
  fail(ErrorKind::InvalidArgument, "unknown mapping variant: " + variant);
}

WeightedHistogram build_weighted_histogram(std::span<const std::uint16_t> values,
                                           std::span<const double> weights,
                                           int t_max, int threads) {
  if (values.size() != weights.size())
    fail(ErrorKind::InvalidArgument, "values and weights are misaligned");
  if (values.empty())
    fail(ErrorKind::InvalidArgument, "empty weighted pixel set");
  if (t_max < 1) fail(ErrorKind::InvalidArgument, "t_max must be >= 1");

  const std::size_t nbins = static_cast<std::size_t>(t_max) + 1;
  const std::size_t nchunks = chunk_count(values.size());
  std::vector<double> partial(nchunks * nbins, 0.0);

  for_each_chunk(values.size(), threads,
                 [&](std::size_t ci, std::size_t b, std::size_t e) {
                   double* h = &partial[ci * nbins];
                   for (std::size_t i = b; i < e; ++i) {
                     if (values[i] > t_max)
                       fail(ErrorKind::InvalidArgument,
                            "value exceeds t_max");
                     if (weights[i] < 0.0 || !std::isfinite(weights[i]))
                       fail(ErrorKind::InvalidArgument,
                            "weights must be finite and non-negative");
                     h[values[i]] += weights[i];
                   }
                 });

  WeightedHistogram out;
  out.bins.assign(nbins, 0.0);
  for (std::size_t ci = 0; ci < nchunks; ++ci)
    for (std::size_t t = 0; t < nbins; ++t)
      out.bins[t] += partial[ci * nbins + t];
  for (double v : out.bins) out.total += v;
  if (!(out.total > 0.0))
    fail(ErrorKind::NumericFailure, "all weights are zero");
  return out;
}

double match_distance(const WeightedHistogram& hist_f,
                      const WeightedHistogram& hist_y) {
  if (hist_f.bins.size() != hist_y.bins.size())
    fail(ErrorKind::InvalidArgument, "histogram length mismatch");
  double cum = 0.0, d = 0.0;
  for (std::size_t t = 0; t < hist_f.bins.size(); ++t) {
    cum += hist_f.bins[t] - hist_y.bins[t];
    d += std::fabs(cum);
  }
  return d;
}

std::vector<std::uint16_t> fit_monotone_lut(const WeightedHistogram& hist_x,
                                            const WeightedHistogram& hist_y) {
  if (!(hist_x.total > 0.0) || !(hist_y.total > 0.0))
    fail(ErrorKind::InvalidArgument, "histograms must carry positive mass");
  if (hist_x.bins.size() != hist_y.bins.size())
    fail(ErrorKind::InvalidArgument, "histogram length mismatch");

  const int t_max = hist_x.t_max();
  std::vector<double> cpy(hist_y.bins.size());
  double cum = 0.0;
  for (std::size_t i = 0; i < hist_y.bins.size(); ++i) {
    cum += hist_y.bins[i];
    cpy[i] = cum / hist_y.total;
  }

  // CP crossings can differ by rounding noise between the two profiles even
  // when the underlying masses agree, so the quantile comparison carries a
  // small slack.
  constexpr double kCpTol = 1e-12;

  std::vector<std::uint16_t> lut(hist_x.bins.size(), 0);
  int first_populated = -1;
  double cumx = 0.0;
  int j = 0;
  for (int t = 0; t <= t_max; ++t) {
    cumx += hist_x.bins[t];
    if (first_populated < 0) {
      if (hist_x.bins[t] <= 0.0) continue;  // leading empty codes filled below
      first_populated = t;
    }
    const double v = cumx / hist_x.total;
    while (j < t_max && cpy[j] + kCpTol < v) ++j;
    lut[t] = static_cast<std::uint16_t>(j);
  }
  // Codes below the first populated source bin carry no mass; give them the
  // first populated code's target so the table stays monotone.
  for (int t = 0; t < first_populated; ++t) lut[t] = lut[first_populated];
  return lut;
}

AffineCoef fit_affine_wls(std::span<const std::uint16_t> x,
                          std::span<const std::uint16_t> y,
                          std::span<const double> weights, int threads) {
  if (x.size() != y.size() || x.size() != weights.size())
    fail(ErrorKind::InvalidArgument, "inputs are misaligned");
  if (x.size() < 2)
    fail(ErrorKind::InvalidArgument, "need at least two pixels");

  const std::size_t nchunks = chunk_count(x.size());
  std::vector<double> partial(nchunks * 5, 0.0);
  for_each_chunk(x.size(), threads,
                 [&](std::size_t ci, std::size_t b, std::size_t e) {
                   double* acc = &partial[ci * 5];
                   for (std::size_t i = b; i < e; ++i) {
                     const double g = weights[i];
                     if (g < 0.0 || !std::isfinite(g))
                       fail(ErrorKind::InvalidArgument,
                            "weights must be finite and non-negative");
                     const double xi = x[i], yi = y[i];
                     acc[0] += g;
                     acc[1] += g * xi;
                     acc[2] += g * yi;
                     acc[3] += g * xi * xi;
                     acc[4] += g * xi * yi;
                   }
                 });
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t ci = 0; ci < nchunks; ++ci) {
    sw += partial[ci * 5 + 0];
    sx += partial[ci * 5 + 1];
    sy += partial[ci * 5 + 2];
    sxx += partial[ci * 5 + 3];
    sxy += partial[ci * 5 + 4];
  }
  if (!(sw > 0.0))
    fail(ErrorKind::InvalidArgument, "no pixel carries positive weight");

  const double varx = sxx - sx * sx / sw;
  const double cov = sxy - sx * sy / sw;
  if (!(varx > 1e-12 * std::max(1.0, sxx)))
    fail(ErrorKind::NumericFailure,
         "singular normal matrix: weighted x is constant; consider the "
         "fallback b = weighted mean of (y - x)");
  AffineCoef c;
  c.w = cov / varx;
  c.b = (sy - c.w * sx) / sw;
  return c;
}

Raster apply_mapping(const MappingFamily& mapping, const Raster& source_codes,
                     int t_max, int threads) {
  if (mapping.bands() != source_codes.bands())
    fail(ErrorKind::InvalidArgument, "band count mismatch");
  if (source_codes.dtype() == Dtype::F32)
    fail(ErrorKind::InvalidArgument, "code rasters are integer typed");
  if (mapping.kind() == MappingFamily::Kind::MonotoneLut &&
      mapping.lut_t_max() != t_max)
    fail(ErrorKind::InvalidArgument, "lut length does not match t_max");

  Raster out(source_codes.width(), source_codes.height(),
             source_codes.bands(), source_codes.dtype());
  const std::size_t n = source_codes.pixels();
  for (int b = 0; b < source_codes.bands(); ++b) {
    for_each_chunk(n, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
      for (std::size_t p = lo; p < hi; ++p) {
        const double code = source_codes.at(b, p);
        if (code > t_max)
          fail(ErrorKind::InvalidArgument, "code exceeds t_max");
        double v = mapping.eval(b, static_cast<std::uint16_t>(code));
        if (mapping.kind() == MappingFamily::Kind::Affine)
          v = std::clamp(std::round(v), 0.0, static_cast<double>(t_max));
        out.set(b, p, v);
      }
    });
  }
  return out;
}

std::vector<double> case2_weights(const ResponsibilityField& gammas,
                                  const MixtureParams& params, int band) {
  if (params.family != NoiseFamily::Laplace)
    fail(ErrorKind::InvalidArgument, "case 2 weights need the Laplace family");
  if (band < 0 || band >= params.bands())
    fail(ErrorKind::InvalidArgument, "band index out of range");
  const double inv1 = 1.0 / params.scales[band][0];
  const double inv2 = 1.0 / params.scales[band][1];
  std::vector<double> g(gammas.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = gammas.g1[i] * inv1 + gammas.g2[i] * inv2;
  return g;
}

std::vector<double> case3_weights(const ResponsibilityField& gammas,
                                  const MixtureParams& params, int band) {
  if (params.family != NoiseFamily::Gaussian)
    fail(ErrorKind::InvalidArgument, "case 3 weights need the Gaussian family");
  if (band < 0 || band >= params.bands())
    fail(ErrorKind::InvalidArgument, "band index out of range");
  const double inv = 1.0 / params.scales[band][0];
  std::vector<double> g(gammas.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = gammas.g1[i] * inv;
  return g;
}

}  // namespace rrn
