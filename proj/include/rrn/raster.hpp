#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rrn/errors.hpp"

namespace rrn {

enum class Dtype { U8, U16, F32 };

const char* dtype_name(Dtype d);
std::size_t dtype_size(Dtype d);
std::optional<Dtype> dtype_from_name(const std::string& name);

// Multi-band raster with band-sequential storage: sample (band b, pixel p)
// lives at data[b * width * height + p].
class Raster {
 public:
  Raster(int width, int height, int bands, Dtype dtype,
         std::optional<double> nodata = std::nullopt);

  int width() const { return width_; }
  int height() const { return height_; }
  int bands() const { return bands_; }
  Dtype dtype() const { return dtype_; }
  const std::optional<double>& nodata() const { return nodata_; }
  void set_nodata(std::optional<double> v) { nodata_ = v; }

  std::size_t pixels() const {
    return static_cast<std::size_t>(width_) * height_;
  }
  std::size_t samples() const { return pixels() * bands_; }

  double at(int band, std::size_t pixel) const;
  void set(int band, std::size_t pixel, double value);

  template <typename T>
  std::span<const T> data() const {
    return std::get<std::vector<T>>(data_);
  }
  template <typename T>
  std::span<T> data() {
    return std::get<std::vector<T>>(data_);
  }

  bool same_shape(const Raster& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           bands_ == other.bands_;
  }

  // true for the nodata sentinel and for NaN samples
  bool is_nodata_sample(double v) const;

 private:
  int width_, height_, bands_;
  Dtype dtype_;
  std::optional<double> nodata_;
  std::variant<std::vector<std::uint8_t>, std::vector<std::uint16_t>,
               std::vector<float>>
      data_;
};

// Single-band boolean raster. Serialized form is a 1-band u8 raster with
// values {0, 255}.
class Mask {
 public:
  Mask() : width_(0), height_(0) {}
  Mask(int width, int height, bool fill = false);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return v_.size(); }
  bool get(std::size_t p) const { return v_[p] != 0; }
  void set(std::size_t p, bool b) { v_[p] = b ? 1 : 0; }
  std::size_t count() const;

  Raster to_raster() const;
  static Mask from_raster(const Raster& r);

  bool operator==(const Mask&) const = default;

 private:
  int width_, height_;
  std::vector<std::uint8_t> v_;
};

// Two co-registered rasters plus the overlap pixel set.
struct RasterPair {
  Raster source;
  Raster target;
  Mask valid;
};

// Builds the overlap mask: a pixel is excluded when any band of either raster
// holds the nodata sentinel or NaN. Swapping source and target yields the same
// mask. Requires at least one valid pixel.
RasterPair make_raster_pair(Raster source, Raster target);
RasterPair make_raster_pair(Raster source, Raster target, Mask valid);

struct BandRange {
  double lo = 0.0;
  double hi = 0.0;
  bool constant = false;  // hi == lo; band quantizes to all zeros
};

struct QuantizationSpec {
  std::vector<BandRange> bands;
  int t_max = 255;

  bool any_constant() const;
  void validate(int expected_bands) const;
};

// Per-band min/max over the given pixel set.
QuantizationSpec quantization_spec(const Raster& raster, const Mask& over,
                                   int t_max = 255);

// code = round(t_max * (x - lo) / (hi - lo)), clamped to [0, t_max].
// Output dtype is u8 for t_max <= 255, u16 otherwise. Nodata samples are left
// as code 0 (they stay outside the overlap mask); any other NaN sample is an
// error naming the pixel.
Raster quantize(const Raster& raster, const QuantizationSpec& spec);

// value = lo + code * (hi - lo) / t_max, f32 output.
Raster dequantize(const Raster& codes, const QuantizationSpec& spec);

// RRNR container: magic "RRNR", little-endian u32 header length, UTF-8 JSON
// header {"width","height","bands","dtype","nodata"?}, then band-sequential
// little-endian samples. Round trips are bit-exact for all dtypes.
Raster read_raster(const std::string& path);
void write_raster(const Raster& raster, const std::string& path);

std::vector<double> band_values(const Raster& raster, int band);
std::vector<std::uint16_t> band_codes(const Raster& raster, int band);

// Round+clamp f32 values into an integer dtype (no-op for F32 target).
Raster raster_cast(const Raster& source, Dtype dtype);

}  // namespace rrn
