#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rrn/raster.hpp"

namespace rrn {

// Per-image class predictions plus optional ground-truth change.
struct ClassMaskPair {
  Mask source_pred;
  Mask target_pred;
  std::optional<Mask> truth;
};

struct Scores {
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;

  nlohmann::json to_json() const;
};

struct ChangeResult {
  Mask change;
  std::string strategy;
  std::optional<Scores> scores;  // present when ground truth was supplied
};

Mask mask_xor(const Mask& a, const Mask& b);

// Flood-fill labeling of true pixels; labels start at 1, 0 = background.
std::vector<std::int32_t> label_components(const Mask& mask, int connectivity,
                                           int* component_count = nullptr);

// Keeps a no-change pixel only when strictly more than vote_threshold of the
// (clipped) window around it is no-change. Summed-area-table implementation.
Mask refine_nc_windowed(const Mask& nc, int window_w, int window_h,
                        double vote_threshold);

// change = XOR(source_pred, target_pred)
ChangeResult direct_difference(const ClassMaskPair& masks);

// change = XOR \ no-change set
ChangeResult difference_excluding_nc(const ClassMaskPair& masks,
                                     const Mask& nc);

// Deletes XOR components whose no-change fraction strictly exceeds
// ratio_threshold.
ChangeResult component_vote(const ClassMaskPair& masks, const Mask& nc,
                            double ratio_threshold = 0.8,
                            int connectivity = 4);

// change = XOR \ windowed-vote-refined no-change set
ChangeResult windowed_vote_difference(const ClassMaskPair& masks,
                                      const Mask& nc, int window_w = 31,
                                      int window_h = 31,
                                      double vote_threshold = 0.7);

// Pixelwise confusion-matrix scores; 0/0 ratios collapse to 0.
Scores score(const Mask& change, const Mask& truth);

}  // namespace rrn
