#include "skyreg/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "skyreg/errors.hpp"

namespace skyreg {

void validate_annotation(const LandmarkAnnotation& ann) {
  if (ann.entries.empty()) throw ParseError("annotation for " + ann.video_id + " is empty");
  for (size_t i = 0; i < ann.entries.size(); ++i) {
    if (ann.entries[i].landmarks.empty()) {
      throw ParseError(ann.video_id + ": annotated frame without landmarks");
    }
    if (i > 0) {
      const int prev = ann.entries[i - 1].frame_index;
      const int cur = ann.entries[i].frame_index;
      if (cur - prev != kAnnotationStridePx) {
        throw ParseError(ann.video_id + ": annotated frames must be spaced 30 apart, got " +
                         std::to_string(prev) + " -> " + std::to_string(cur));
      }
      if (interval_landmark_ids(ann.entries[i - 1], ann.entries[i]).empty()) {
        throw ParseError(ann.video_id + ": interval ending at " + std::to_string(cur) +
                         " shares no landmark ids");
      }
    }
  }
}

std::vector<int> interval_landmark_ids(const LandmarkAnnotation::Entry& a,
                                       const LandmarkAnnotation::Entry& b) {
  std::vector<int> ids;
  for (const auto& [id, pos] : a.landmarks) {
    (void)pos;
    for (const auto& [id2, pos2] : b.landmarks) {
      (void)pos2;
      if (id == id2) {
        ids.push_back(id);
        break;
      }
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<LandmarkAnnotation> parse_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open annotation file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty annotation file: " + path);
  // tolerate but do not require the header line
  const bool header = line.find("video_id") != std::string::npos;

  std::map<std::string, std::map<int, std::vector<std::pair<int, Vec2>>>> table;
  int lineno = 1;
  if (!header) in.seekg(0), lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string video, frame_s, id_s, u_s, v_s;
    if (!std::getline(ss, video, ',') || !std::getline(ss, frame_s, ',') ||
        !std::getline(ss, id_s, ',') || !std::getline(ss, u_s, ',') ||
        !std::getline(ss, v_s, ',')) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 5 fields");
    }
    try {
      table[video][std::stoi(frame_s)].emplace_back(std::stoi(id_s),
                                                    Vec2(std::stod(u_s), std::stod(v_s)));
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }

  std::vector<LandmarkAnnotation> out;
  for (auto& [video, frames] : table) {
    LandmarkAnnotation ann;
    ann.video_id = video;
    for (auto& [frame, marks] : frames) {
      std::sort(marks.begin(), marks.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      ann.entries.push_back({frame, std::move(marks)});
    }
    validate_annotation(ann);
    out.push_back(std::move(ann));
  }
  return out;
}

void write_annotations(std::span<const LandmarkAnnotation> anns, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write annotation file: " + path);
  out << "video_id,frame_index,landmark_id,u,v\n";
  char buf[160];
  for (const auto& ann : anns) {
    for (const auto& e : ann.entries) {
      for (const auto& [id, pos] : e.landmarks) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.10g,%.10g\n", ann.video_id.c_str(),
                      e.frame_index, id, pos.x(), pos.y());
        out << buf;
      }
    }
  }
}

std::vector<Vec2> propagate_landmarks(std::span<const Vec2> points_full_res,
                                      std::span<const Homography> hs_estimation,
                                      double scale) {
  if (hs_estimation.size() != kAnnotationStridePx) {
    throw Error("propagate_landmarks requires exactly 30 per-pair homographies, got " +
                std::to_string(hs_estimation.size()));
  }
  std::vector<Homography> full;
  full.reserve(hs_estimation.size());
  for (const auto& h : hs_estimation) {
    full.push_back(rescale_homography(h, scale, scale));
  }
  const Homography chain = compose(full);
  std::vector<Vec2> out;
  out.reserve(points_full_res.size());
  for (const auto& p : points_full_res) out.push_back(warp_point(chain, p));
  return out;
}

PredictionTable predict_intervals(const LandmarkAnnotation& ann,
                                  std::span<const Homography> per_pair_hs) {
  PredictionTable out;
  for (size_t i = 1; i < ann.entries.size(); ++i) {
    const auto& prev = ann.entries[i - 1];
    const auto& cur = ann.entries[i];
    if (prev.frame_index + kAnnotationStridePx >
        static_cast<int>(per_pair_hs.size())) {
      throw MissingPrediction("homography chain too short for interval ending at frame " +
                              std::to_string(cur.frame_index));
    }
    const std::vector<int> ids = interval_landmark_ids(prev, cur);
    std::vector<Vec2> pts;
    for (int id : ids) {
      for (const auto& [lid, pos] : prev.landmarks) {
        if (lid == id) {
          pts.push_back(pos);
          break;
        }
      }
    }
    const auto window = per_pair_hs.subspan(prev.frame_index, kAnnotationStridePx);
    out[{ann.video_id, cur.frame_index}] = propagate_landmarks(pts, window);
  }
  return out;
}

MaceResult compute_mace(const PredictionTable& predictions,
                        std::span<const LandmarkAnnotation> annotations) {
  MaceResult res;
  double grand_sum = 0.0;
  int grand_intervals = 0;
  for (const auto& ann : annotations) {
    double video_sum = 0.0;
    int video_intervals = 0;
    for (size_t i = 1; i < ann.entries.size(); ++i) {
      const auto& prev = ann.entries[i - 1];
      const auto& cur = ann.entries[i];
      const auto it = predictions.find({ann.video_id, cur.frame_index});
      if (it == predictions.end()) {
        throw MissingPrediction(ann.video_id + " frame " + std::to_string(cur.frame_index));
      }
      const std::vector<int> ids = interval_landmark_ids(prev, cur);
      if (it->second.size() != ids.size()) {
        throw MissingPrediction(ann.video_id + " frame " + std::to_string(cur.frame_index) +
                                ": prediction count mismatch");
      }
      double err_sum = 0.0;
      for (size_t j = 0; j < ids.size(); ++j) {
        Vec2 truth(0, 0);
        for (const auto& [lid, pos] : cur.landmarks) {
          if (lid == ids[j]) {
            truth = pos;
            break;
          }
        }
        err_sum += (it->second[j] - truth).norm();
      }
      video_sum += err_sum / static_cast<double>(ids.size());
      ++video_intervals;
    }
    res.per_video.emplace_back(ann.video_id,
                               video_intervals > 0 ? video_sum / video_intervals : 0.0);
    grand_sum += video_sum;
    grand_intervals += video_intervals;
  }
  res.overall = grand_intervals > 0 ? grand_sum / grand_intervals : 0.0;
  res.n_videos = static_cast<int>(annotations.size());
  res.n_intervals = grand_intervals;
  return res;
}

void write_mace_csv(const MaceResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write mace csv: " + path);
  out << "video_id,mace\n";
  char buf[128];
  for (const auto& [video, mace] : result.per_video) {
    std::snprintf(buf, sizeof(buf), "%s,%.10g\n", video.c_str(), mace);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "OVERALL,%.10g\n", result.overall);
  out << buf;
}

}  // namespace skyreg
