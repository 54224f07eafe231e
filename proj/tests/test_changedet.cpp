#include <cmath>

#include "doctest.h"
#include "rrn/changedet.hpp"
#include "rrn/rng.hpp"

using namespace rrn;

namespace {

Mask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
  Mask m(w, h);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      m.set(static_cast<std::size_t>(y) * w + x, true);
  return m;
}

}  // namespace

TEST_CASE("direct difference is the prediction xor") {
  const Mask a = rect_mask(8, 8, 0, 0, 3, 3);
  const Mask b = rect_mask(8, 8, 2, 2, 5, 5);

  SUBCASE("identical predictions") {
    const auto res = direct_difference({a, a, std::nullopt});
    CHECK(res.change.count() == 0);
  }
  SUBCASE("disjoint predictions give the union") {
    const Mask c = rect_mask(8, 8, 5, 5, 7, 7);
    const auto res = direct_difference({a, c, std::nullopt});
    CHECK(res.change.count() == a.count() + c.count());
  }
  SUBCASE("single flip") {
    Mask a2 = a;
    a2.set(40, !a2.get(40));
    const auto res = direct_difference({a, a2, std::nullopt});
    CHECK(res.change.count() == 1);
    CHECK(res.change.get(40));
  }
  SUBCASE("size mismatch") {
    const Mask small(4, 4);
    CHECK_THROWS_AS(direct_difference({a, small, std::nullopt}), Error);
  }
}

TEST_CASE("difference excluding the no-change set") {
  const Mask a = rect_mask(8, 8, 0, 0, 3, 3);
  const Mask b(8, 8);
  const ClassMaskPair masks{a, b, std::nullopt};

  SUBCASE("nc covers everything") {
    const auto res = difference_excluding_nc(masks, Mask(8, 8, true));
    CHECK(res.change.count() == 0);
  }
  SUBCASE("empty nc equals the direct difference") {
    const auto res = difference_excluding_nc(masks, Mask(8, 8, false));
    CHECK(res.change == direct_difference(masks).change);
  }
  SUBCASE("set arithmetic") {
    // xor is the 16-pixel rect; 4 of them sit inside nc
    const Mask nc = rect_mask(8, 8, 0, 0, 1, 1);
    const auto res = difference_excluding_nc(masks, nc);
    CHECK(res.change.count() == 16 - 4);
  }
  SUBCASE("always a subset of the direct difference") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
      Mask p(16, 16), q(16, 16), nc(16, 16);
      for (std::size_t i = 0; i < p.size(); ++i) {
        p.set(i, rng.below(2));
        q.set(i, rng.below(2));
        nc.set(i, rng.below(3) == 0);
      }
      const ClassMaskPair mp{p, q, std::nullopt};
      const Mask direct = direct_difference(mp).change;
      const Mask excl = difference_excluding_nc(mp, nc).change;
      for (std::size_t i = 0; i < direct.size(); ++i)
        CHECK((!excl.get(i) || direct.get(i)));
    }
  }
}

TEST_CASE("component vote deletes high-nc components") {
  // component A: 10 pixels, component B: 10 pixels, 4-disconnected
  const int w = 16, h = 16;
  Mask pred(w, h);
  for (int i = 0; i < 10; ++i) pred.set(static_cast<std::size_t>(i), true);
  for (int i = 0; i < 10; ++i)
    pred.set(static_cast<std::size_t>(5) * w + i, true);
  const ClassMaskPair masks{pred, Mask(w, h), std::nullopt};

  SUBCASE("0.9 nc fraction deletes, 0.1 survives") {
    Mask nc(w, h);
    for (int i = 0; i < 9; ++i) nc.set(static_cast<std::size_t>(i), true);
    nc.set(static_cast<std::size_t>(5) * w + 0, true);
    const auto res = component_vote(masks, nc, 0.8);
    CHECK(res.change.count() == 10);
    CHECK(res.change.get(static_cast<std::size_t>(5) * w + 3));
    CHECK_FALSE(res.change.get(3));
  }
  SUBCASE("exactly the threshold is kept (strict comparison)") {
    Mask nc(w, h);
    for (int i = 0; i < 8; ++i) nc.set(static_cast<std::size_t>(i), true);
    const auto res = component_vote(masks, nc, 0.8);
    CHECK(res.change.count() == 20);  // 8/10 == 0.8 is not "bigger than"
  }
  SUBCASE("survivors are whole components") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      Mask p(24, 24), nc(24, 24);
      for (std::size_t i = 0; i < p.size(); ++i) {
        p.set(i, rng.below(3) == 0);
        nc.set(i, rng.below(2));
      }
      const ClassMaskPair mp{p, Mask(24, 24), std::nullopt};
      const Mask after = component_vote(mp, nc).change;
      int ncomp = 0;
      const auto labels = label_components(mask_xor(p, Mask(24, 24)), 4,
                                           &ncomp);
      // each label is either fully kept or fully dropped
      std::vector<int> seen(ncomp + 1, -1);
      for (std::size_t i = 0; i < after.size(); ++i) {
        if (labels[i] == 0) continue;
        const int present = after.get(i) ? 1 : 0;
        if (seen[labels[i]] == -1) seen[labels[i]] = present;
        CHECK(seen[labels[i]] == present);
      }
    }
  }
}

TEST_CASE("windowed vote refinement") {
  SUBCASE("uniform nc mask is unchanged") {
    const Mask nc(33, 33, true);
    CHECK(refine_nc_windowed(nc, 31, 31, 0.7) == nc);
  }
  SUBCASE("isolated nc pixel is removed") {
    Mask nc(64, 64);
    nc.set(static_cast<std::size_t>(32) * 64 + 32, true);
    CHECK(refine_nc_windowed(nc, 31, 31, 0.7).count() == 0);
  }
  SUBCASE("half-plane boundary pixel is removed") {
    const int w = 64, h = 64;
    Mask nc(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w / 2; ++x)
        nc.set(static_cast<std::size_t>(y) * w + x, true);
    const Mask refined = refine_nc_windowed(nc, 31, 31, 0.7);
    // a pixel on the boundary column sees roughly half nc
    CHECK_FALSE(refined.get(static_cast<std::size_t>(32) * w + (w / 2 - 1)));
    // deep interior stays
    CHECK(refined.get(static_cast<std::size_t>(32) * w + 2));
  }
  SUBCASE("translation equivariance away from borders") {
    Rng rng(19);
    const int w = 96, h = 96;
    Mask nc(w, h);
    for (int y = 30; y < 60; ++y)
      for (int x = 30; x < 60; ++x)
        nc.set(static_cast<std::size_t>(y) * w + x, rng.below(4) != 0);
    const Mask r1 = refine_nc_windowed(nc, 15, 15, 0.7);
    Mask shifted(w, h);
    const int dx = 5, dy = 3;
    for (int y = 0; y < h - dy; ++y)
      for (int x = 0; x < w - dx; ++x)
        shifted.set(static_cast<std::size_t>(y + dy) * w + (x + dx),
                    nc.get(static_cast<std::size_t>(y) * w + x));
    const Mask r2 = refine_nc_windowed(shifted, 15, 15, 0.7);
    for (int y = 20; y < 70; ++y)
      for (int x = 20; x < 70; ++x)
        CHECK(r1.get(static_cast<std::size_t>(y) * w + x) ==
              r2.get(static_cast<std::size_t>(y + dy) * w + (x + dx)));
  }
  SUBCASE("even window is rejected") {
    CHECK_THROWS_AS(refine_nc_windowed(Mask(8, 8, true), 30, 31, 0.7), Error);
  }
}

TEST_CASE("windowed vote difference composes xor with refined nc") {
  const int w = 64, h = 64;
  const Mask pred = rect_mask(w, h, 10, 10, 20, 20);
  Mask nc(w, h, true);
  for (int y = 10; y <= 20; ++y)
    for (int x = 10; x <= 20; ++x)
      nc.set(static_cast<std::size_t>(y) * w + x, false);
  const ClassMaskPair masks{pred, Mask(w, h), std::nullopt};
  const auto res = windowed_vote_difference(masks, nc, 31, 31, 0.7);
  // the predicted change block is not nc, so it survives intact
  CHECK(res.change.count() == pred.count());
}

TEST_CASE("confusion-matrix scores") {
  const int w = 8, h = 8;
  const Mask truth = rect_mask(w, h, 0, 0, 3, 3);

  SUBCASE("perfect prediction") {
    const auto s = score(truth, truth);
    CHECK(s.accuracy == 1.0);
    CHECK(s.recall == 1.0);
    CHECK(s.precision == 1.0);
    CHECK(s.f1 == 1.0);
  }
  SUBCASE("empty prediction against non-empty truth") {
    const auto s = score(Mask(w, h), truth);
    CHECK(s.recall == 0.0);
    CHECK(s.precision == 0.0);
    CHECK(s.f1 == 0.0);
  }
  SUBCASE("balanced mistakes") {
    // TP=5, FP=5, FN=5
    Mask pred(w, h), truth2(w, h);
    for (int i = 0; i < 10; ++i) truth2.set(static_cast<std::size_t>(i), true);
    for (int i = 5; i < 15; ++i) pred.set(static_cast<std::size_t>(i), true);
    const auto s = score(pred, truth2);
    CHECK(s.precision == doctest::Approx(0.5));
    CHECK(s.recall == doctest::Approx(0.5));
    CHECK(s.f1 == doctest::Approx(0.5));
  }
}
