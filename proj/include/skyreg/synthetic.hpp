#pragma once

#include <array>
#include <string>
#include <vector>

#include "skyreg/evaluation.hpp"
#include "skyreg/geometry.hpp"
#include "skyreg/image.hpp"
#include "skyreg/ingest.hpp"

namespace skyreg {

// Per-step camera motion in frame coordinates: translation in pixels per
// frame, rotation in degrees per frame and a scale factor per frame
// applied about the frame center.
struct MotionStep {
  double dx = 0.0;
  double dy = 0.0;
  double rot_deg = 0.0;
  double scale = 1.0;
};

struct SyntheticSpec {
  Image texture;  // feature-rich source; see default_texture
  int length = 64;
  // One entry (constant motion) or length-1 entries (per step).
  std::vector<MotionStep> program = {MotionStep{}};
  double noise_sigma = 0.0;
  uint64_t seed = 0;
  int frame_width = kEstimationWidth;
  int frame_height = kEstimationHeight;
  std::string video_id = "synthetic";
  int landmark_count = 6;
};

struct SyntheticClip {
  FrameSequence seq;
  std::vector<Homography> truth;   // per pair, frame t -> frame t+1
  LandmarkAnnotation annotations;  // exact projections at 1280x720
};

// Renders the clip by warping the texture through the composed motion
// chain, adds Gaussian intensity noise, and derives exact per-pair
// homographies plus landmark annotations every 30 frames. Throws
// FootprintOverflow when a frame's source window leaves the texture.
SyntheticClip generate(const SyntheticSpec& spec);

// Procedural aerial-style texture: smooth multi-octave value noise with
// field boundaries and road-like streaks; deterministic given seed.
Image default_texture(int width, int height, uint64_t seed);

// Writes the clip in the ingest dataset layout:
//   root/<split>/<video_id>/frame_%06d.png
// plus root/<video_id>_truth.csv (one row per pair, 9 row-major entries)
// and root/<video_id>_annotations.csv.
void write_dataset(const SyntheticClip& clip, const std::string& root,
                   const std::string& split);

}  // namespace skyreg
