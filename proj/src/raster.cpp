#include "rrn/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace rrn {

using nlohmann::json;

const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::BadHeader: return "BadHeader";
    case ErrorKind::Truncated: return "Truncated";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::InputNotFound: return "InputNotFound";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NumericFailure: return "NumericFailure";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

const char* dtype_name(Dtype d) {
  switch (d) {
    case Dtype::U8: return "u8";
    case Dtype::U16: return "u16";
    case Dtype::F32: return "f32";
  }
  return "?";
}

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::U8: return 1;
    case Dtype::U16: return 2;
    case Dtype::F32: return 4;
  }
  return 0;
}

std::optional<Dtype> dtype_from_name(const std::string& name) {
  if (name == "u8") return Dtype::U8;
  if (name == "u16") return Dtype::U16;
  if (name == "f32") return Dtype::F32;
  return std::nullopt;
}

Raster::Raster(int width, int height, int bands, Dtype dtype,
               std::optional<double> nodata)
    : width_(width), height_(height), bands_(bands), dtype_(dtype),
      nodata_(nodata) {
  if (width <= 0 || height <= 0 || bands <= 0)
    fail(ErrorKind::InvalidArgument, "raster dimensions must be positive");
  const std::size_t n = samples();
  switch (dtype) {
    case Dtype::U8: data_ = std::vector<std::uint8_t>(n, 0); break;
    case Dtype::U16: data_ = std::vector<std::uint16_t>(n, 0); break;
    case Dtype::F32: data_ = std::vector<float>(n, 0.0f); break;
  }
}

double Raster::at(int band, std::size_t pixel) const {
  const std::size_t i = static_cast<std::size_t>(band) * pixels() + pixel;
  switch (dtype_) {
    case Dtype::U8: return std::get<std::vector<std::uint8_t>>(data_)[i];
    case Dtype::U16: return std::get<std::vector<std::uint16_t>>(data_)[i];
    case Dtype::F32: return std::get<std::vector<float>>(data_)[i];
  }
  return 0.0;
}

void Raster::set(int band, std::size_t pixel, double value) {
  const std::size_t i = static_cast<std::size_t>(band) * pixels() + pixel;
  switch (dtype_) {
    case Dtype::U8:
      std::get<std::vector<std::uint8_t>>(data_)[i] =
          static_cast<std::uint8_t>(value);
      break;
    case Dtype::U16:
      std::get<std::vector<std::uint16_t>>(data_)[i] =
          static_cast<std::uint16_t>(value);
      break;
    case Dtype::F32:
      std::get<std::vector<float>>(data_)[i] = static_cast<float>(value);
      break;
  }
}

bool Raster::is_nodata_sample(double v) const {
  if (std::isnan(v)) return true;
  return nodata_ && v == *nodata_;
}

Mask::Mask(int width, int height, bool fill)
    : width_(width), height_(height),
      v_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {
  if (width <= 0 || height <= 0)
    fail(ErrorKind::InvalidArgument, "mask dimensions must be positive");
}

std::size_t Mask::count() const {
  std::size_t c = 0;
  for (std::uint8_t b : v_) c += b;
  return c;
}

Raster Mask::to_raster() const {
  Raster r(width_, height_, 1, Dtype::U8);
  auto out = r.data<std::uint8_t>();
  for (std::size_t p = 0; p < v_.size(); ++p) out[p] = v_[p] ? 255 : 0;
  return r;
}

Mask Mask::from_raster(const Raster& r) {
  if (r.bands() != 1 || r.dtype() != Dtype::U8)
    fail(ErrorKind::InvalidArgument, "mask rasters must be 1-band u8");
  Mask m(r.width(), r.height());
  auto in = r.data<std::uint8_t>();
  for (std::size_t p = 0; p < in.size(); ++p) m.set(p, in[p] != 0);
  return m;
}

namespace {

void collect_invalid(const Raster& r, Mask& valid) {
  const std::size_t n = r.pixels();
  for (int b = 0; b < r.bands(); ++b)
    for (std::size_t p = 0; p < n; ++p)
      if (r.is_nodata_sample(r.at(b, p))) valid.set(p, false);
}

}  // namespace

RasterPair make_raster_pair(Raster source, Raster target) {
  Mask all(source.width(), source.height(), true);
  return make_raster_pair(std::move(source), std::move(target),
                          std::move(all));
}

RasterPair make_raster_pair(Raster source, Raster target, Mask valid) {
  if (!source.same_shape(target))
    fail(ErrorKind::InvalidArgument,
         "source and target must have identical width, height and bands");
  if (valid.width() != source.width() || valid.height() != source.height())
    fail(ErrorKind::InvalidArgument, "valid mask shape mismatch");
  collect_invalid(source, valid);
  collect_invalid(target, valid);
  if (valid.count() == 0)
    fail(ErrorKind::InvalidArgument, "overlap set is empty");
  return RasterPair{std::move(source), std::move(target), std::move(valid)};
}

bool QuantizationSpec::any_constant() const {
  for (const auto& b : bands)
    if (b.constant) return true;
  return false;
}

void QuantizationSpec::validate(int expected_bands) const {
  if (static_cast<int>(bands.size()) != expected_bands)
    fail(ErrorKind::InvalidArgument, "quantization spec band count mismatch");
  if (t_max < 1 || t_max > 65535)
    fail(ErrorKind::InvalidArgument, "t_max must be in [1, 65535]");
  for (const auto& b : bands)
    if (!b.constant && !(b.hi > b.lo))
      fail(ErrorKind::InvalidArgument, "non-constant band needs hi > lo");
}

QuantizationSpec quantization_spec(const Raster& raster, const Mask& over,
                                   int t_max) {
  if (over.width() != raster.width() || over.height() != raster.height())
    fail(ErrorKind::InvalidArgument, "mask shape mismatch");
  QuantizationSpec spec;
  spec.t_max = t_max;
  const std::size_t n = raster.pixels();
  for (int b = 0; b < raster.bands(); ++b) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < n; ++p) {
      if (!over.get(p)) continue;
      const double v = raster.at(b, p);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    BandRange r;
    if (!(lo <= hi)) {  // no pixel in the set
      r.lo = r.hi = 0.0;
      r.constant = true;
    } else {
      r.lo = lo;
      r.hi = hi;
      r.constant = (hi == lo);
    }
    spec.bands.push_back(r);
  }
  spec.validate(raster.bands());
  return spec;
}

Raster quantize(const Raster& raster, const QuantizationSpec& spec) {
  spec.validate(raster.bands());
  const Dtype out_dtype = spec.t_max <= 255 ? Dtype::U8 : Dtype::U16;
  Raster out(raster.width(), raster.height(), raster.bands(), out_dtype);
  const std::size_t n = raster.pixels();
  const double t = spec.t_max;
  for (int b = 0; b < raster.bands(); ++b) {
    const BandRange& r = spec.bands[b];
    const double span = r.hi - r.lo;
    for (std::size_t p = 0; p < n; ++p) {
      const double v = raster.at(b, p);
      if (raster.nodata() && v == *raster.nodata())
        continue;  // stays 0, masked out anyway
      if (std::isnan(v))
        fail(ErrorKind::NumericFailure,
             "NaN sample at band " + std::to_string(b) + " pixel " +
                 std::to_string(p));
      double code = 0.0;
      if (!r.constant) {
        code = std::round(t * (v - r.lo) / span);
        code = std::clamp(code, 0.0, t);
      }
      out.set(b, p, code);
    }
  }
  return out;
}

Raster dequantize(const Raster& codes, const QuantizationSpec& spec) {
  spec.validate(codes.bands());
  if (codes.dtype() == Dtype::F32)
    fail(ErrorKind::InvalidArgument, "code rasters are integer typed");
  Raster out(codes.width(), codes.height(), codes.bands(), Dtype::F32);
  const std::size_t n = codes.pixels();
  const double t = spec.t_max;
  for (int b = 0; b < codes.bands(); ++b) {
    const BandRange& r = spec.bands[b];
    for (std::size_t p = 0; p < n; ++p) {
      const double code = codes.at(b, p);
      if (code > t)
        fail(ErrorKind::InvalidArgument,
             "code " + std::to_string(code) + " exceeds t_max");
      out.set(b, p, r.lo + code * (r.hi - r.lo) / t);
    }
  }
  return out;
}

namespace {

void put_u32le(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

template <typename T>
void encode_samples(std::string& buf, std::span<const T> v) {
  for (T s : v) {
    std::uint32_t bits;
    if constexpr (sizeof(T) == 1) {
      buf.push_back(static_cast<char>(s));
      continue;
    } else if constexpr (sizeof(T) == 2) {
      bits = static_cast<std::uint16_t>(s);
      buf.push_back(static_cast<char>(bits & 0xff));
      buf.push_back(static_cast<char>((bits >> 8) & 0xff));
      continue;
    } else {
      bits = std::bit_cast<std::uint32_t>(s);
      buf.push_back(static_cast<char>(bits & 0xff));
      buf.push_back(static_cast<char>((bits >> 8) & 0xff));
      buf.push_back(static_cast<char>((bits >> 16) & 0xff));
      buf.push_back(static_cast<char>((bits >> 24) & 0xff));
    }
  }
}

template <typename T>
void decode_samples(std::span<T> out, const unsigned char* p) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    if constexpr (sizeof(T) == 1) {
      out[i] = static_cast<T>(p[i]);
    } else if constexpr (sizeof(T) == 2) {
      out[i] = static_cast<T>(static_cast<std::uint16_t>(p[2 * i]) |
                              (static_cast<std::uint16_t>(p[2 * i + 1]) << 8));
    } else {
      const std::uint32_t bits = get_u32le(p + 4 * i);
      out[i] = std::bit_cast<float>(bits);
    }
  }
}

}  // namespace

void write_raster(const Raster& raster, const std::string& path) {
  json header = {{"width", raster.width()},
                 {"height", raster.height()},
                 {"bands", raster.bands()},
                 {"dtype", dtype_name(raster.dtype())}};
  if (raster.nodata()) header["nodata"] = *raster.nodata();
  const std::string hdr = header.dump();

  std::string buf;
  buf.reserve(8 + hdr.size() + raster.samples() * dtype_size(raster.dtype()));
  buf += "RRNR";
  put_u32le(buf, static_cast<std::uint32_t>(hdr.size()));
  buf += hdr;
  switch (raster.dtype()) {
    case Dtype::U8: encode_samples(buf, raster.data<std::uint8_t>()); break;
    case Dtype::U16: encode_samples(buf, raster.data<std::uint16_t>()); break;
    case Dtype::F32: encode_samples(buf, raster.data<float>()); break;
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::IoError, "cannot open " + tmp + " for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) fail(ErrorKind::IoError, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::IoError, "rename failed: " + ec.message());
}

Raster read_raster(const std::string& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorKind::InputNotFound, "no such file: " + path);
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::IoError, "cannot open " + path);
  std::string blob((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());

  if (blob.size() < 8) fail(ErrorKind::Truncated, "file shorter than header");
  if (std::memcmp(blob.data(), "RRNR", 4) != 0)
    fail(ErrorKind::BadMagic, "bad magic in " + path);
  const std::uint32_t hlen = get_u32le(p + 4);
  if (blob.size() < 8 + static_cast<std::size_t>(hlen))
    fail(ErrorKind::Truncated, "header extends past end of file");

  json header;
  try {
    header = json::parse(blob.substr(8, hlen));
  } catch (const json::exception& e) {
    fail(ErrorKind::BadHeader, std::string("header is not valid JSON: ") +
                                   e.what());
  }
  if (!header.contains("width") || !header.contains("height") ||
      !header.contains("bands") || !header.contains("dtype"))
    fail(ErrorKind::BadHeader, "header missing required keys");
  int width, height, bands;
  std::string dname;
  try {
    width = header.at("width").get<int>();
    height = header.at("height").get<int>();
    bands = header.at("bands").get<int>();
    dname = header.at("dtype").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::BadHeader, std::string("malformed header field: ") +
                                   e.what());
  }
  const auto dtype = dtype_from_name(dname);
  if (!dtype) fail(ErrorKind::BadHeader, "unknown dtype: " + dname);
  if (width <= 0 || height <= 0 || bands <= 0)
    fail(ErrorKind::BadHeader, "non-positive dimensions in header");

  std::optional<double> nodata;
  if (header.contains("nodata")) {
    if (!header["nodata"].is_number())
      fail(ErrorKind::BadHeader, "nodata must be numeric");
    nodata = header["nodata"].get<double>();
  }

  Raster raster(width, height, bands, *dtype, nodata);
  const std::size_t payload =
      raster.samples() * dtype_size(*dtype);
  const std::size_t have = blob.size() - 8 - hlen;
  if (have < payload) fail(ErrorKind::Truncated, "payload shorter than header declares");
  if (have > payload)
    fail(ErrorKind::SizeMismatch, "payload size does not match header");

  const unsigned char* body = p + 8 + hlen;
  switch (*dtype) {
    case Dtype::U8: decode_samples(raster.data<std::uint8_t>(), body); break;
    case Dtype::U16: decode_samples(raster.data<std::uint16_t>(), body); break;
    case Dtype::F32: decode_samples(raster.data<float>(), body); break;
  }
  return raster;
}

std::vector<double> band_values(const Raster& raster, int band) {
  if (band < 0 || band >= raster.bands())
    fail(ErrorKind::InvalidArgument, "band index out of range");
  std::vector<double> out(raster.pixels());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = raster.at(band, p);
  return out;
}

std::vector<std::uint16_t> band_codes(const Raster& raster, int band) {
  if (raster.dtype() == Dtype::F32)
    fail(ErrorKind::InvalidArgument, "code rasters are integer typed");
  if (band < 0 || band >= raster.bands())
    fail(ErrorKind::InvalidArgument, "band index out of range");
  std::vector<std::uint16_t> out(raster.pixels());
  for (std::size_t p = 0; p < out.size(); ++p)
    out[p] = static_cast<std::uint16_t>(raster.at(band, p));
  return out;
}

Raster raster_cast(const Raster& source, Dtype dtype) {
  if (dtype == source.dtype() && dtype == Dtype::F32) return source;
  Raster out(source.width(), source.height(), source.bands(), dtype,
             source.nodata());
  const std::size_t n = source.pixels();
  double hi = dtype == Dtype::U8 ? 255.0 : 65535.0;
  for (int b = 0; b < source.bands(); ++b) {
    for (std::size_t p = 0; p < n; ++p) {
      double v = source.at(b, p);
      if (dtype != Dtype::F32) v = std::clamp(std::round(v), 0.0, hi);
      out.set(b, p, v);
    }
  }
  return out;
}

}  // namespace rrn
