#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rrn/raster.hpp"
#include "rrn/rng.hpp"

using namespace rrn;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

Raster random_raster(Rng& rng, int w, int h, int bands, Dtype dtype,
                     std::optional<double> nodata = std::nullopt) {
  Raster r(w, h, bands, dtype, nodata);
  for (int b = 0; b < bands; ++b)
    for (std::size_t p = 0; p < r.pixels(); ++p) {
      switch (dtype) {
        case Dtype::U8: r.set(b, p, static_cast<double>(rng.below(256))); break;
        case Dtype::U16:
          r.set(b, p, static_cast<double>(rng.below(65536)));
          break;
        case Dtype::F32: r.set(b, p, rng.uniform(-100.0, 1000.0)); break;
      }
    }
  return r;
}

}  // namespace

TEST_CASE("quantize maps codes per the affine rule") {
  Raster r(2, 2, 1, Dtype::U16);
  r.set(0, 0, 128);
  r.set(0, 1, 1023);
  r.set(0, 2, 512);
  r.set(0, 3, 0);

  QuantizationSpec identity{{{0.0, 255.0, false}}, 255};
  CHECK(quantize(r, identity).at(0, 0) == 128);  // range matches: identity

  QuantizationSpec ten_bit{{{0.0, 1023.0, false}}, 255};
  const Raster q = quantize(r, ten_bit);
  CHECK(q.at(0, 1) == 255);  // endpoint maps to T
  CHECK(q.at(0, 2) == 128);  // round(255*512/1023) = round(127.62) = 128
  CHECK(q.dtype() == Dtype::U8);
}

TEST_CASE("quantize edge handling") {
  Raster r(2, 1, 1, Dtype::F32);
  r.set(0, 0, 7.0);
  r.set(0, 1, 7.0);
  const Mask all(2, 1, true);
  const auto spec = quantization_spec(r, all, 255);
  CHECK(spec.bands[0].constant);
  CHECK(spec.any_constant());
  const Raster q = quantize(r, spec);
  CHECK(q.at(0, 0) == 0);
  CHECK(q.at(0, 1) == 0);

  Raster bad(2, 1, 1, Dtype::F32);
  bad.set(0, 0, 1.0);
  bad.set(0, 1, std::nan(""));
  QuantizationSpec s{{{0.0, 10.0, false}}, 255};
  CHECK_THROWS_WITH_AS(quantize(bad, s), doctest::Contains("pixel 1"), Error);

  // values outside the spec range clamp
  Raster wide(2, 1, 1, Dtype::F32);
  wide.set(0, 0, -5.0);
  wide.set(0, 1, 50.0);
  QuantizationSpec narrow{{{0.0, 10.0, false}}, 255};
  const Raster qq = quantize(wide, narrow);
  CHECK(qq.at(0, 0) == 0);
  CHECK(qq.at(0, 1) == 255);
}

TEST_CASE("dequantize endpoints and interior") {
  Raster codes(3, 1, 1, Dtype::U8);
  codes.set(0, 0, 0);
  codes.set(0, 1, 255);
  codes.set(0, 2, 128);
  QuantizationSpec spec{{{0.0, 1023.0, false}}, 255};
  const Raster v = dequantize(codes, spec);
  CHECK(v.at(0, 0) == doctest::Approx(0.0));
  CHECK(v.at(0, 1) == doctest::Approx(1023.0));
  CHECK(v.at(0, 2) == doctest::Approx(128.0 * 1023.0 / 255.0));  // 513.5058...

  Raster over(1, 1, 1, Dtype::U16);
  over.set(0, 0, 300);
  CHECK_THROWS_AS(dequantize(over, spec), Error);
}

TEST_CASE("quantize/dequantize/quantize reproduces codes") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int t_max = trial % 2 ? 255 : 1 + static_cast<int>(rng.below(1000));
    Raster r = random_raster(rng, 9, 7, 2, Dtype::F32);
    const Mask all(9, 7, true);
    const auto spec = quantization_spec(r, all, t_max);
    const Raster q1 = quantize(r, spec);
    const Raster q2 = quantize(dequantize(q1, spec), spec);
    for (int b = 0; b < r.bands(); ++b)
      for (std::size_t p = 0; p < r.pixels(); ++p)
        CHECK(q1.at(b, p) == q2.at(b, p));
  }
}

TEST_CASE("valid mask excludes nodata symmetrically") {
  Rng rng(3);
  Raster a = random_raster(rng, 8, 8, 2, Dtype::F32, -999.0);
  Raster b = random_raster(rng, 8, 8, 2, Dtype::F32, -999.0);
  a.set(0, 5, -999.0);
  b.set(1, 9, -999.0);
  a.set(1, 10, std::nan(""));

  const RasterPair ab = make_raster_pair(a, b);
  const RasterPair ba = make_raster_pair(b, a);
  CHECK(ab.valid == ba.valid);
  CHECK_FALSE(ab.valid.get(5));
  CHECK_FALSE(ab.valid.get(9));
  CHECK_FALSE(ab.valid.get(10));
  CHECK(ab.valid.count() == 64 - 3);
}

TEST_CASE("rrnr round trip is bit-exact") {
  Rng rng(17);
  const std::string path = temp_path("rt.rrnr");

  SUBCASE("u8 3x2x2") {
    const Raster r = random_raster(rng, 3, 2, 2, Dtype::U8);
    write_raster(r, path);
    const Raster back = read_raster(path);
    CHECK(back.dtype() == Dtype::U8);
    CHECK(back.same_shape(r));
    REQUIRE(back.samples() == r.samples());
    for (std::size_t i = 0; i < r.samples(); ++i)
      CHECK(back.data<std::uint8_t>()[i] == r.data<std::uint8_t>()[i]);
  }

  SUBCASE("u16 512x512x4 hashes equal") {
    const Raster r = random_raster(rng, 512, 512, 4, Dtype::U16);
    write_raster(r, path);
    const Raster back = read_raster(path);
    std::uint64_t h1 = 1469598103934665603ull, h2 = h1;
    for (std::uint16_t v : r.data<std::uint16_t>())
      h1 = (h1 ^ v) * 1099511628211ull;
    for (std::uint16_t v : back.data<std::uint16_t>())
      h2 = (h2 ^ v) * 1099511628211ull;
    CHECK(h1 == h2);
  }

  SUBCASE("f32 with nodata keeps bits and sentinel") {
    Raster r = random_raster(rng, 5, 4, 3, Dtype::F32, -9999.5);
    r.set(2, 1, 0.1f);
    write_raster(r, path);
    const Raster back = read_raster(path);
    CHECK(back.nodata() == r.nodata());
    for (std::size_t i = 0; i < r.samples(); ++i)
      CHECK(back.data<float>()[i] == r.data<float>()[i]);
  }

  fs::remove(path);
}

TEST_CASE("rrnr reader rejects malformed files") {
  Rng rng(23);
  const Raster r = random_raster(rng, 4, 4, 1, Dtype::U8);
  const std::string path = temp_path("bad.rrnr");
  write_raster(r, path);

  auto blob = [&] {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
  }();
  auto rewrite = [&](const std::string& s) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << s;
  };
  auto kind_of = [&]() {
    try {
      read_raster(path);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;  // not reached on malformed input
  };

  SUBCASE("wrong magic") {
    std::string s = blob;
    s[0] = 'X';
    rewrite(s);
    CHECK(kind_of() == ErrorKind::BadMagic);
  }
  SUBCASE("truncated payload") {
    rewrite(blob.substr(0, blob.size() - 3));
    CHECK(kind_of() == ErrorKind::Truncated);
  }
  SUBCASE("trailing bytes") {
    rewrite(blob + "xx");
    CHECK(kind_of() == ErrorKind::SizeMismatch);
  }
  SUBCASE("header not json") {
    std::string s = blob;
    s[8] = '!';
    rewrite(s);
    CHECK(kind_of() == ErrorKind::BadHeader);
  }
  SUBCASE("missing file") {
    try {
      read_raster(temp_path("definitely_not_here.rrnr"));
      FAIL("expected InputNotFound");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InputNotFound);
    }
  }

  fs::remove(path);
}

TEST_CASE("mask raster uses 0/255 and round trips") {
  Mask m(3, 2);
  m.set(0, true);
  m.set(4, true);
  const Raster r = m.to_raster();
  CHECK(r.at(0, 0) == 255);
  CHECK(r.at(0, 1) == 0);
  CHECK(Mask::from_raster(r) == m);
  CHECK(m.count() == 2);
}
