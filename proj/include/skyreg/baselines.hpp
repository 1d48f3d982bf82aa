#pragma once

#include <cstdint>

#include "skyreg/geometry.hpp"
#include "skyreg/image.hpp"

namespace skyreg {

struct RansacConfig {
  int max_iterations = 1000;
  double inlier_threshold_px = 3.0;
  int min_matches = 8;
  uint64_t seed = 0;
  int orb_features = 1000;
  double ratio_test = 0.8;
};

// The IDENTITY baseline.
Homography identity_estimate(const Image& frame_a, const Image& frame_b);

// ORB keypoints + Hamming ratio-test matching, 4-point RANSAC with a
// pinned sampler, then a least-squares DLT refit on all inliers. Throws
// InsufficientFeatures / NoConsensus.
Homography orb_ransac_estimate(const Image& frame_a, const Image& frame_b,
                               const RansacConfig& config = {});

}  // namespace skyreg
