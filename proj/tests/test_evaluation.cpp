#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "skyreg/errors.hpp"
#include "skyreg/evaluation.hpp"
#include "skyreg/rng.hpp"

using namespace skyreg;
namespace fs = std::filesystem;

namespace {

Homography small_random_h(Rng& rng) {
  Homography h;
  h.h(0, 2) = rng.uniform(-2, 2);
  h.h(1, 2) = rng.uniform(-2, 2);
  h.h(0, 0) = rng.uniform(0.99, 1.01);
  h.h(1, 1) = rng.uniform(0.99, 1.01);
  h.h(2, 0) = rng.uniform(-1e-5, 1e-5);
  return h;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("propagate through 30 identities keeps points") {
  const std::vector<Homography> hs(30);
  const std::vector<Vec2> pts = {Vec2(100, 200), Vec2(640, 360)};
  const auto out = propagate_landmarks(pts, hs);
  CHECK((out[0] - pts[0]).norm() == 0.0);
  CHECK((out[1] - pts[1]).norm() == 0.0);
}

TEST_CASE("propagate through 30 unit pans moves 120 px at full resolution") {
  const std::vector<Homography> hs(30, Homography::translation(1, 0));
  const std::vector<Vec2> pts = {Vec2(100, 200)};
  const auto out = propagate_landmarks(pts, hs);
  CHECK((out[0] - Vec2(220, 200)).norm() < 1e-9);
}

TEST_CASE("propagate equals sequential per-pair mapping") {
  Rng rng(3);
  std::vector<Homography> hs;
  for (int i = 0; i < 30; ++i) hs.push_back(small_random_h(rng));
  const Vec2 p(412, 377);
  const auto out = propagate_landmarks(std::vector<Vec2>{p}, hs);

  Vec2 q = p;
  for (const auto& h : hs) q = warp_point(rescale_homography(h, 4, 4), q);
  CHECK((out[0] - q).norm() < 1e-8);
}

TEST_CASE("rescale-then-compose equals compose-then-rescale") {
  Rng rng(5);
  std::vector<Homography> hs;
  for (int i = 0; i < 30; ++i) hs.push_back(small_random_h(rng));
  std::vector<Homography> rescaled;
  for (const auto& h : hs) rescaled.push_back(rescale_homography(h, 4, 4));
  const Mat3 a = compose(rescaled).h;
  const Mat3 b = rescale_homography(compose(hs), 4, 4).h;
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("propagate requires exactly 30 homographies") {
  const std::vector<Homography> hs(29);
  CHECK_THROWS_AS(propagate_landmarks(std::vector<Vec2>{Vec2(0, 0)}, hs), Error);
}

TEST_CASE("compute_mace on hand-built tables") {
  LandmarkAnnotation ann;
  ann.video_id = "v1";
  ann.entries.push_back({0, {{0, Vec2(10, 10)}, {1, Vec2(50, 50)}}});
  ann.entries.push_back({30, {{0, Vec2(10, 10)}, {1, Vec2(50, 50)}}});

  PredictionTable perfect;
  perfect[{"v1", 30}] = {Vec2(10, 10), Vec2(50, 50)};
  const LandmarkAnnotation anns[1] = {ann};
  CHECK(compute_mace(perfect, anns).overall == 0.0);

  // one interval, errors 3 and 4 -> 3.5
  PredictionTable off;
  off[{"v1", 30}] = {Vec2(13, 10), Vec2(50, 54)};
  CHECK(compute_mace(off, anns).overall == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("compute_mace matches a brute-force double loop on two videos") {
  Rng rng(9);
  std::vector<LandmarkAnnotation> anns(2);
  PredictionTable preds;
  double brute_sum = 0.0;
  int brute_intervals = 0;
  for (int v = 0; v < 2; ++v) {
    anns[v].video_id = "vid" + std::to_string(v);
    const int n_entries = 3 + v;  // 2 and 3 intervals
    const int n_marks = 2 + v;
    for (int e = 0; e < n_entries; ++e) {
      LandmarkAnnotation::Entry entry;
      entry.frame_index = 30 * e;
      for (int j = 0; j < n_marks; ++j) {
        entry.landmarks.emplace_back(j, Vec2(rng.uniform(0, 1280), rng.uniform(0, 720)));
      }
      anns[v].entries.push_back(entry);
    }
    for (int e = 1; e < n_entries; ++e) {
      std::vector<Vec2> p;
      double err_sum = 0.0;
      for (int j = 0; j < n_marks; ++j) {
        const Vec2 truth = anns[v].entries[e].landmarks[j].second;
        const Vec2 guess = truth + Vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));
        p.push_back(guess);
        err_sum += (guess - truth).norm();
      }
      preds[{anns[v].video_id, 30 * e}] = p;
      brute_sum += err_sum / n_marks;
      ++brute_intervals;
    }
  }
  const MaceResult res = compute_mace(preds, anns);
  CHECK(res.overall == doctest::Approx(brute_sum / brute_intervals).epsilon(1e-12));
  CHECK(res.n_intervals == brute_intervals);
  CHECK(res.per_video.size() == 2);
}

TEST_CASE("compute_mace is invariant to landmark ordering") {
  LandmarkAnnotation ann;
  ann.video_id = "v";
  ann.entries.push_back({0, {{2, Vec2(1, 1)}, {0, Vec2(5, 5)}, {1, Vec2(9, 9)}}});
  ann.entries.push_back({30, {{0, Vec2(6, 5)}, {1, Vec2(9, 11)}, {2, Vec2(1, 1)}}});
  // predictions ordered by ascending id: 0, 1, 2
  PredictionTable preds;
  preds[{"v", 30}] = {Vec2(6, 5), Vec2(9, 11), Vec2(1, 1)};
  const LandmarkAnnotation anns[1] = {ann};
  CHECK(compute_mace(preds, anns).overall == 0.0);
}

TEST_CASE("missing predictions raise") {
  LandmarkAnnotation ann;
  ann.video_id = "v";
  ann.entries.push_back({0, {{0, Vec2(1, 1)}}});
  ann.entries.push_back({30, {{0, Vec2(2, 1)}}});
  const LandmarkAnnotation anns[1] = {ann};
  CHECK_THROWS_AS(compute_mace(PredictionTable{}, anns), MissingPrediction);
}

TEST_CASE("annotation csv round trip and validation") {
  const fs::path dir = fs::temp_directory_path() / "skyreg_tests";
  fs::create_directories(dir);
  const std::string path = (dir / "ann.csv").string();

  std::vector<LandmarkAnnotation> anns(1);
  anns[0].video_id = "clip";
  anns[0].entries.push_back({0, {{0, Vec2(10.5, 20.25)}, {1, Vec2(30, 40)}}});
  anns[0].entries.push_back({30, {{0, Vec2(11.5, 20.25)}, {1, Vec2(31, 40)}}});
  write_annotations(anns, path);

  const auto back = parse_annotations(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].video_id == "clip");
  REQUIRE(back[0].entries.size() == 2);
  CHECK(back[0].entries[1].frame_index == 30);
  CHECK((back[0].entries[0].landmarks[0].second - Vec2(10.5, 20.25)).norm() < 1e-9);

  // bad spacing
  std::ofstream(path) << "video_id,frame_index,landmark_id,u,v\n"
                         "clip,0,0,1,1\n"
                         "clip,20,0,1,1\n";
  CHECK_THROWS_AS(parse_annotations(path), ParseError);

  // malformed row
  std::ofstream(path) << "video_id,frame_index,landmark_id,u,v\n"
                         "clip,0,0,1\n";
  CHECK_THROWS_AS(parse_annotations(path), ParseError);
}

TEST_CASE("mace csv output") {
  MaceResult res;
  res.per_video = {{"a", 1.5}, {"b", 2.5}};
  res.overall = 2.0;
  const fs::path dir = fs::temp_directory_path() / "skyreg_tests";
  fs::create_directories(dir);
  const std::string path = (dir / "mace.csv").string();
  write_mace_csv(res, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "video_id,mace");
  std::getline(in, line);
  CHECK(line == "a,1.5");
  std::getline(in, line);
  std::getline(in, line);
  CHECK(line == "OVERALL,2");
}

}  // TEST_SUITE
