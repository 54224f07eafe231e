#include "rrn/metrics.hpp"

#include <cmath>
#include <sstream>

namespace rrn {

using nlohmann::json;

double nc_rmse(std::span<const double> a, std::span<const double> b,
               const Mask& mask) {
  if (a.size() != b.size() || a.size() != mask.size())
    fail(ErrorKind::InvalidArgument, "fields and mask are misaligned");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (!mask.get(p)) continue;
    const double d = a[p] - b[p];
    s += d * d;
    ++n;
  }
  if (n == 0) fail(ErrorKind::InvalidArgument, "empty no-change mask");
  return std::sqrt(s / static_cast<double>(n));
}

namespace {

IndexField normalized_difference(std::span<const double> a,
                                 std::span<const double> b) {
  if (a.size() != b.size())
    fail(ErrorKind::InvalidArgument, "bands are misaligned");
  IndexField out;
  out.v.resize(a.size());
  out.degenerate.assign(a.size(), 0);
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (a[p] < 0.0 || b[p] < 0.0)
      fail(ErrorKind::InvalidArgument,
           "spectral indices need non-negative band values");
    const double denom = a[p] + b[p];
    if (denom == 0.0) {
      out.v[p] = 0.0;
      out.degenerate[p] = 1;
      ++out.degenerate_count;
    } else {
      out.v[p] = (a[p] - b[p]) / denom;
    }
  }
  return out;
}

Mask without_degenerate(const Mask& mask, const IndexField& a,
                        const IndexField& b) {
  Mask m = mask;
  for (std::size_t p = 0; p < m.size(); ++p)
    if (a.degenerate[p] || b.degenerate[p]) m.set(p, false);
  return m;
}

}  // namespace

IndexField ndvi(std::span<const double> nir, std::span<const double> red) {
  return normalized_difference(nir, red);
}

IndexField ndwi(std::span<const double> green, std::span<const double> nir) {
  return normalized_difference(green, nir);
}

json EvalReport::to_json() const {
  json bands = json::object();
  for (const Entry* e : {&band_b, &band_g, &band_r, &band_n}) {
    if (!e->present) continue;
    bands[e->name] = {{"before", e->before}, {"after", e->after}};
  }
  json indices = json::object();
  for (const Entry* e : {&index_ndvi, &index_ndwi}) {
    if (!e->present) continue;
    indices[e->name] = {{"before", e->before}, {"after", e->after}};
  }
  json j{{"method", method},
         {"ncr", ncr},
         {"nc_pixels", nc_pixels},
         {"bands", bands},
         {"indices", indices},
         {"notes", notes}};
  if (mll) j["mll"] = *mll;
  return j;
}

std::string EvalReport::csv_header() {
  return "method,mll,ncr,"
         "rmse_B_before,rmse_B_after,rmse_G_before,rmse_G_after,"
         "rmse_R_before,rmse_R_after,rmse_N_before,rmse_N_after,"
         "rmse_NDVI_before,rmse_NDVI_after,rmse_NDWI_before,rmse_NDWI_after";
}

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << method << ',';
  if (mll) os << *mll;
  os << ',' << ncr;
  for (const Entry* e : {&band_b, &band_g, &band_r, &band_n, &index_ndvi,
                         &index_ndwi}) {
    os << ',';
    if (e->present) os << e->before;
    os << ',';
    if (e->present) os << e->after;
  }
  return os.str();
}

EvalReport evaluate_pair(const RasterPair& pair,
                         const Raster& normalized_source,
                         const NoChangeMask& mask, const BandRoles& roles) {
  if (!pair.source.same_shape(normalized_source))
    fail(ErrorKind::InvalidArgument, "normalized raster shape mismatch");
  if (mask.mask.width() != pair.source.width() ||
      mask.mask.height() != pair.source.height())
    fail(ErrorKind::InvalidArgument, "mask shape mismatch");
  const int bands = pair.source.bands();
  for (int idx : {roles.blue, roles.green, roles.red, roles.nir})
    if (idx >= bands)
      fail(ErrorKind::InvalidArgument, "band role index out of range");

  EvalReport rep;
  rep.ncr = mask.ncr;
  rep.nc_pixels = mask.mask.count();
  if (rep.nc_pixels == 0)
    fail(ErrorKind::InvalidArgument, "empty no-change mask");

  struct RoleBand {
    EvalReport::Entry* entry;
    int band;
    std::vector<double> src, tgt, norm;
  };
  std::vector<RoleBand> role_bands;
  auto add_role = [&](EvalReport::Entry& e, int band) {
    if (band < 0) return;
    RoleBand rb{&e, band, {}, {}, {}};
    rb.src = band_values(pair.source, band);
    rb.tgt = band_values(pair.target, band);
    rb.norm = band_values(normalized_source, band);
    e.before = nc_rmse(rb.src, rb.tgt, mask.mask);
    e.after = nc_rmse(rb.norm, rb.tgt, mask.mask);
    e.present = true;
    role_bands.push_back(std::move(rb));
  };
  add_role(rep.band_b, roles.blue);
  add_role(rep.band_g, roles.green);
  add_role(rep.band_r, roles.red);
  add_role(rep.band_n, roles.nir);

  auto find_role = [&](int band) -> const RoleBand* {
    for (const auto& rb : role_bands)
      if (rb.band == band) return &rb;
    return nullptr;
  };

  auto add_index = [&](EvalReport::Entry& entry, const RoleBand* a,
                       const RoleBand* b) {
    const auto tgt = normalized_difference(a->tgt, b->tgt);
    const auto src = normalized_difference(a->src, b->src);
    const auto nrm = normalized_difference(a->norm, b->norm);
    const Mask before_mask = without_degenerate(mask.mask, src, tgt);
    const Mask after_mask = without_degenerate(mask.mask, nrm, tgt);
    const std::size_t excluded =
        2 * mask.mask.count() - before_mask.count() - after_mask.count();
    if (before_mask.count() == 0 || after_mask.count() == 0) {
      rep.notes.push_back(entry.name +
                          " skipped: every masked pixel is degenerate");
      return;
    }
    if (excluded > 0)
      rep.notes.push_back(entry.name + ": excluded " +
                          std::to_string(excluded) +
                          " degenerate pixel comparisons");
    entry.before = nc_rmse(src.v, tgt.v, before_mask);
    entry.after = nc_rmse(nrm.v, tgt.v, after_mask);
    entry.present = true;
  };

  if (roles.nir >= 0 && roles.red >= 0) {
    add_index(rep.index_ndvi, find_role(roles.nir), find_role(roles.red));
  } else {
    rep.notes.push_back("NDVI skipped: NIR or red band role missing");
  }

  if (roles.nir >= 0 && roles.green >= 0) {
    add_index(rep.index_ndwi, find_role(roles.green), find_role(roles.nir));
  } else {
    rep.notes.push_back("NDWI skipped: NIR or green band role missing");
  }

  return rep;
}

}  // namespace rrn
