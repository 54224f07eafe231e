#include "rrn/changedet.hpp"

#include <algorithm>
#include <cmath>

namespace rrn {

using nlohmann::json;

namespace {

void require_aligned(const Mask& a, const Mask& b) {
  if (a.width() != b.width() || a.height() != b.height())
    fail(ErrorKind::InvalidArgument, "mask size mismatch");
}

std::optional<Scores> maybe_score(const ClassMaskPair& masks,
                                  const Mask& change) {
  if (!masks.truth) return std::nullopt;
  return score(change, *masks.truth);
}

}  // namespace

json Scores::to_json() const {
  return json{{"accuracy", accuracy},
              {"recall", recall},
              {"precision", precision},
              {"f1", f1}};
}

Mask mask_xor(const Mask& a, const Mask& b) {
  require_aligned(a, b);
  Mask out(a.width(), a.height());
  for (std::size_t p = 0; p < a.size(); ++p) out.set(p, a.get(p) != b.get(p));
  return out;
}

std::vector<std::int32_t> label_components(const Mask& mask, int connectivity,
                                           int* component_count) {
  if (connectivity != 4 && connectivity != 8)
    fail(ErrorKind::InvalidArgument, "connectivity must be 4 or 8");
  const int w = mask.width(), h = mask.height();
  std::vector<std::int32_t> labels(mask.size(), 0);
  std::vector<std::uint32_t> stack;
  std::int32_t next = 0;

  const int dx4[] = {1, -1, 0, 0};
  const int dy4[] = {0, 0, 1, -1};
  const int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1};
  const int dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int* dx = connectivity == 4 ? dx4 : dx8;
  const int* dy = connectivity == 4 ? dy4 : dy8;

  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (!mask.get(seed) || labels[seed] != 0) continue;
    ++next;
    labels[seed] = next;
    stack.assign(1, static_cast<std::uint32_t>(seed));
    while (!stack.empty()) {
      const std::uint32_t p = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      for (int k = 0; k < connectivity; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
        const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
        if (mask.get(q) && labels[q] == 0) {
          labels[q] = next;
          stack.push_back(static_cast<std::uint32_t>(q));
        }
      }
    }
  }
  if (component_count) *component_count = next;
  return labels;
}

Mask refine_nc_windowed(const Mask& nc, int window_w, int window_h,
                        double vote_threshold) {
  if (window_w % 2 == 0 || window_h % 2 == 0 || window_w < 1 || window_h < 1)
    fail(ErrorKind::InvalidArgument, "window dimensions must be odd");
  const int w = nc.width(), h = nc.height();
  const int rx = window_w / 2, ry = window_h / 2;

  // (w+1) x (h+1) summed-area table of the 0/1 mask
  std::vector<std::int64_t> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  for (int y = 0; y < h; ++y) {
    std::int64_t row = 0;
    for (int x = 0; x < w; ++x) {
      row += nc.get(static_cast<std::size_t>(y) * w + x) ? 1 : 0;
      sat[static_cast<std::size_t>(y + 1) * (w + 1) + (x + 1)] =
          sat[static_cast<std::size_t>(y) * (w + 1) + (x + 1)] + row;
    }
  }
  auto box_sum = [&](int x0, int y0, int x1, int y1) {  // inclusive
    return sat[static_cast<std::size_t>(y1 + 1) * (w + 1) + (x1 + 1)] -
           sat[static_cast<std::size_t>(y0) * (w + 1) + (x1 + 1)] -
           sat[static_cast<std::size_t>(y1 + 1) * (w + 1) + x0] +
           sat[static_cast<std::size_t>(y0) * (w + 1) + x0];
  };

  Mask out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      if (!nc.get(p)) continue;
      const int x0 = std::max(0, x - rx), x1 = std::min(w - 1, x + rx);
      const int y0 = std::max(0, y - ry), y1 = std::min(h - 1, y + ry);
      const std::int64_t in_window =
          static_cast<std::int64_t>(x1 - x0 + 1) * (y1 - y0 + 1);
      const std::int64_t nc_count = box_sum(x0, y0, x1, y1);
      if (static_cast<double>(nc_count) >
          vote_threshold * static_cast<double>(in_window))
        out.set(p, true);
    }
  }
  return out;
}

ChangeResult direct_difference(const ClassMaskPair& masks) {
  ChangeResult res{mask_xor(masks.source_pred, masks.target_pred), "direct",
                   std::nullopt};
  res.scores = maybe_score(masks, res.change);
  return res;
}

ChangeResult difference_excluding_nc(const ClassMaskPair& masks,
                                     const Mask& nc) {
  Mask change = mask_xor(masks.source_pred, masks.target_pred);
  require_aligned(change, nc);
  for (std::size_t p = 0; p < change.size(); ++p)
    if (nc.get(p)) change.set(p, false);
  ChangeResult res{std::move(change), "exclude-nc", std::nullopt};
  res.scores = maybe_score(masks, res.change);
  return res;
}

ChangeResult component_vote(const ClassMaskPair& masks, const Mask& nc,
                            double ratio_threshold, int connectivity) {
  Mask change = mask_xor(masks.source_pred, masks.target_pred);
  require_aligned(change, nc);

  int ncomp = 0;
  const auto labels = label_components(change, connectivity, &ncomp);
  std::vector<std::int64_t> total(ncomp + 1, 0), in_nc(ncomp + 1, 0);
  for (std::size_t p = 0; p < change.size(); ++p) {
    const std::int32_t l = labels[p];
    if (l == 0) continue;
    ++total[l];
    if (nc.get(p)) ++in_nc[l];
  }
  std::vector<std::uint8_t> drop(ncomp + 1, 0);
  for (int l = 1; l <= ncomp; ++l) {
    const double ratio =
        static_cast<double>(in_nc[l]) / static_cast<double>(total[l]);
    drop[l] = ratio > ratio_threshold ? 1 : 0;  // strictly bigger than
  }
  for (std::size_t p = 0; p < change.size(); ++p)
    if (labels[p] != 0 && drop[labels[p]]) change.set(p, false);

  ChangeResult res{std::move(change), "component-vote", std::nullopt};
  res.scores = maybe_score(masks, res.change);
  return res;
}

ChangeResult windowed_vote_difference(const ClassMaskPair& masks,
                                      const Mask& nc, int window_w,
                                      int window_h, double vote_threshold) {
  Mask change = mask_xor(masks.source_pred, masks.target_pred);
  require_aligned(change, nc);
  const Mask refined = refine_nc_windowed(nc, window_w, window_h,
                                          vote_threshold);
  for (std::size_t p = 0; p < change.size(); ++p)
    if (refined.get(p)) change.set(p, false);
  ChangeResult res{std::move(change), "window-vote", std::nullopt};
  res.scores = maybe_score(masks, res.change);
  return res;
}

Scores score(const Mask& change, const Mask& truth) {
  require_aligned(change, truth);
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t p = 0; p < change.size(); ++p) {
    const bool c = change.get(p), t = truth.get(p);
    if (c && t) ++tp;
    else if (c && !t) ++fp;
    else if (!c && t) ++fn;
    else ++tn;
  }
  auto ratio = [](std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  Scores s;
  s.accuracy = ratio(tp + tn, tp + fp + fn + tn);
  s.recall = ratio(tp, tp + fn);
  s.precision = ratio(tp, tp + fp);
  s.f1 = (s.precision + s.recall) == 0.0
             ? 0.0
             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

}  // namespace rrn
