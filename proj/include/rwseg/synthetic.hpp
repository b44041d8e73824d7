#pragma once

#include <cstdint>

#include "rwseg/nrvf.hpp"
#include "rwseg/walk.hpp"

namespace rwseg {

/// Knobs for a synthetic scene: K Voronoi regions on the grid, per-head
/// features clustered around a class prototype with head-specific noise, and
/// a noisy coarse G that the walk is expected to clean up.
struct SyntheticSpec {
  int grid_h = 24;
  int grid_w = 24;
  int feature_dim = 16;
  int heads = 4;
  int classes = 3;
  double feature_noise = 0.6;  // noise of head 0; later heads get noisier
  double label_strength = 1.5;
  double label_noise = 1.0;
  nrvf::LabelMode label_mode = nrvf::LabelMode::Probabilities;
  std::uint64_t seed = 0;
};

struct SyntheticScene {
  nrvf::BundleFile bundle;
  ClassMask truth;
};

SyntheticScene make_synthetic_scene(const SyntheticSpec& spec);

}  // namespace rwseg
