#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skyreg/geometry.hpp"
#include "skyreg/ingest.hpp"

namespace skyreg {

constexpr int kAnnotationStridePx = 30;   // frames between annotations
constexpr double kFullResScale = 4.0;     // 1280/320 = 720/180
constexpr int kFullResWidth = 1280;
constexpr int kFullResHeight = 720;

// Ground-truth landmark tracks at full (1280x720) resolution, annotated
// every 30 frames. Landmark ids pair positions across annotated frames.
struct LandmarkAnnotation {
  struct Entry {
    int frame_index = 0;
    std::vector<std::pair<int, Vec2>> landmarks;  // (landmark_id, position)
  };
  std::string video_id;
  std::vector<Entry> entries;  // strictly increasing, spaced 30 apart
};

// Validates spacing, ordering and the per-interval correspondence
// invariant (equal landmark id sets, K_t >= 1). Throws ParseError.
void validate_annotation(const LandmarkAnnotation& ann);

// CSV with header: video_id,frame_index,landmark_id,u,v
std::vector<LandmarkAnnotation> parse_annotations(const std::string& path);
void write_annotations(std::span<const LandmarkAnnotation> anns, const std::string& path);

// Rescales each estimation-resolution homography to full resolution,
// composes them in time order and warps the points. Requires exactly 30
// homographies.
std::vector<Vec2> propagate_landmarks(std::span<const Vec2> points_full_res,
                                      std::span<const Homography> hs_estimation,
                                      double scale = kFullResScale);

// predictions[(video_id, end_frame_index)] = predicted positions of the
// interval's landmarks, ordered by ascending landmark id.
using PredictionTable = std::map<std::pair<std::string, int>, std::vector<Vec2>>;

// Runs the interval propagation from each annotated frame to the next one
// using the video's per-pair homography chain (at estimation resolution).
PredictionTable predict_intervals(const LandmarkAnnotation& ann,
                                  std::span<const Homography> per_pair_hs);

struct MaceResult {
  std::vector<std::pair<std::string, double>> per_video;
  double overall = 0.0;
  int n_videos = 0;
  int n_intervals = 0;
};

// Eq.-style aggregation: per interval the mean Euclidean error over its
// K_t landmarks; overall the sum of interval means divided by the total
// interval count. Throws MissingPrediction when an annotated interval has
// no prediction.
MaceResult compute_mace(const PredictionTable& predictions,
                        std::span<const LandmarkAnnotation> annotations);

void write_mace_csv(const MaceResult& result, const std::string& path);

// Landmark ids shared by two consecutive annotated frames, ascending.
std::vector<int> interval_landmark_ids(const LandmarkAnnotation::Entry& a,
                                       const LandmarkAnnotation::Entry& b);

}  // namespace skyreg
