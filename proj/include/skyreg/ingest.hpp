#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skyreg/image.hpp"

namespace skyreg {

constexpr int kEstimationWidth = 320;
constexpr int kEstimationHeight = 180;
constexpr int kParentPatchSize = 128;
constexpr int kChildPatchSize = 64;
constexpr int kNetworkInputSize = 128;
constexpr int kSafetyMarginPx = 32;
constexpr int kDefaultEpisodeLen = 16;
constexpr int kDefaultParentsPerEpisode = 2;

// A decoded video at estimation resolution.
struct FrameSequence {
  std::vector<Image> frames;           // all same size, values in [0, 1]
  std::pair<int, int> source_size;     // original (width, height)
  std::string video_id;
  bool aspect_warning = false;         // source was not 16:9

  int width() const { return frames.empty() ? 0 : frames[0].width(); }
  int height() const { return frames.empty() ? 0 : frames[0].height(); }
};

enum class ScaleLevel { Parent, Child };

// One sampled patch location, reused across every frame of its episode.
struct PatchSpec {
  int frame_index = 0;     // episode start frame
  int top_left_u = 0;
  int top_left_v = 0;
  int size = kParentPatchSize;  // 128 (parent) or 64 (child)
  ScaleLevel scale_level = ScaleLevel::Parent;
  std::optional<int> parent_id;  // stream_id of the parent, for children
  int stream_id = 0;

  bool operator==(const PatchSpec&) const = default;
};

// K consecutive frames plus the patch streams sampled for them.
struct EpisodeBatch {
  int episode_start = 0;
  int episode_len = kDefaultEpisodeLen;
  std::vector<PatchSpec> patch_streams;  // parents first, then their children
  uint64_t rng_seed = 0;
  std::string video_id;
};

// Decodes a video file or a directory of numbered image files into
// grayscale frames resized (area-averaging) to target_size and normalized
// to [0, 1]. Throws DecodeFailure / EmptyVideo.
FrameSequence load_video(const std::string& path,
                         std::pair<int, int> target_size = {kEstimationWidth,
                                                            kEstimationHeight});

// Admissible top-left range for a patch of `size` in a frame of extent
// `frame_extent`, with the safety margin reduced symmetrically when the
// frame is too small for the full margin.
std::pair<int, int> patch_placement_range(int frame_extent, int size,
                                          int margin = kSafetyMarginPx);

// Samples n_parents parent streams (128x128), each tiled by 4 child
// streams (64x64). Pure function of (video_id, episode_start, rng_seed).
EpisodeBatch sample_patch_streams(const FrameSequence& seq, int episode_start,
                                  int n_parents, uint64_t rng_seed,
                                  int episode_len = kDefaultEpisodeLen);

// Crops the patch; child patches are upsampled to 128x128 with
// align-corners bilinear interpolation. Throws OutOfBounds.
Image extract_patch(const Image& frame, const PatchSpec& spec);

// Dataset directory layout: root/{train,test}/<video>, where <video> is a
// video file or a directory of frame images; optional root/manifest.txt
// restricts and orders the ids.
std::vector<std::string> list_videos(const std::string& root, const std::string& split);

}  // namespace skyreg
