#include <doctest.h>

#include <cmath>

#include "skyreg/errors.hpp"
#include "skyreg/stitcher.hpp"
#include "skyreg/synthetic.hpp"

using namespace skyreg;

namespace {

FrameSequence window_pair(const Image& tex, int shift) {
  FrameSequence seq;
  seq.video_id = "pair";
  for (int k = 0; k < 2; ++k) {
    Image f(320, 180);
    for (int j = 0; j < 180; ++j) {
      for (int i = 0; i < 320; ++i) f.at(i, j) = tex.at(i + 100 + k * shift, j + 60);
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

}  // namespace

TEST_SUITE("stitcher") {

TEST_CASE("single frame stitches to itself with zero offset") {
  const Image tex = default_texture(600, 400, 41);
  FrameSequence seq;
  seq.video_id = "single";
  Image f(320, 180);
  for (int j = 0; j < 180; ++j) {
    for (int i = 0; i < 320; ++i) f.at(i, j) = tex.at(i, j);
  }
  seq.frames.push_back(f);
  const StitchResult res = stitch(seq, {});
  CHECK(res.canvas.width() == 320);
  CHECK(res.canvas.height() == 180);
  CHECK(res.offset.x() == 0.0);
  CHECK(res.offset.y() == 0.0);
  CHECK(res.canvas.data() == f.data());
}

TEST_CASE("identity chain on a static sequence reproduces the frame bit-exactly") {
  const Image tex = default_texture(600, 400, 42);
  FrameSequence seq;
  seq.video_id = "static";
  Image f(320, 180);
  for (int j = 0; j < 180; ++j) {
    for (int i = 0; i < 320; ++i) f.at(i, j) = tex.at(i + 10, j + 20);
  }
  seq.frames.assign(5, f);
  const std::vector<Homography> hs(4);
  const StitchResult res = stitch(seq, hs);
  CHECK(res.canvas.width() == 320);
  CHECK(res.canvas.height() == 180);
  for (int j = 0; j < 180; ++j) {
    for (int i = 0; i < 320; ++i) CHECK(res.canvas.at(i, j) == f.at(i, j));
  }
}

TEST_CASE("two frames under a true 50 px pan give a 370 px canvas") {
  const Image tex = default_texture(700, 400, 43);
  const FrameSequence seq = window_pair(tex, 50);
  // scene content moves by -50 px from frame 0 to frame 1
  const std::vector<Homography> hs = {Homography::translation(-50, 0)};
  const StitchResult res = stitch(seq, hs);
  CHECK(std::abs(res.canvas.width() - 370) <= 1);
  CHECK(res.canvas.height() == 180);

  // overlap region comes out consistent with the underlying texture
  double err = 0.0;
  int count = 0;
  for (int j = 40; j < 140; ++j) {
    for (int i = 60; i < 300; ++i) {
      err += std::abs(res.canvas.at(i, j) - tex.at(i + 100, j + 60));
      ++count;
    }
  }
  CHECK(err / count < 1e-9);
}

TEST_CASE("all warped corners land inside the canvas") {
  const Image tex = default_texture(900, 500, 44);
  FrameSequence seq;
  seq.video_id = "chain";
  for (int k = 0; k < 4; ++k) {
    Image f(320, 180);
    for (int j = 0; j < 180; ++j) {
      for (int i = 0; i < 320; ++i) f.at(i, j) = tex.at(i + 100 + 7 * k, j + 60 + 3 * k);
    }
    seq.frames.push_back(std::move(f));
  }
  const std::vector<Homography> hs(3, Homography::translation(-7, -3));
  const StitchResult res = stitch(seq, hs);

  std::vector<Homography> to_ref(4);
  for (int k = 1; k < 4; ++k) {
    Homography inv;
    inv.h = hs[k - 1].h.inverse();
    Homography chained;
    chained.h = to_ref[k - 1].h * inv.h;
    to_ref[k] = normalize(chained);
  }
  for (int k = 0; k < 4; ++k) {
    const Vec2 corners[4] = {Vec2(0, 0), Vec2(320, 0), Vec2(320, 180), Vec2(0, 180)};
    for (const auto& c : corners) {
      const Vec2 p = warp_point(to_ref[k], c) + res.offset;
      CHECK(p.x() >= -1e-9);
      CHECK(p.y() >= -1e-9);
      CHECK(p.x() <= res.canvas.width() + 1e-9);
      CHECK(p.y() <= res.canvas.height() + 1e-9);
    }
  }
}

TEST_CASE("divergent chains trip the canvas bound") {
  FrameSequence seq;
  seq.video_id = "diverge";
  seq.frames.assign(2, Image(320, 180, 0.5));
  Homography blowup;
  blowup.h(0, 0) = 0.05;  // frame 1 maps to a 20x wider region of the plane
  blowup.h(1, 1) = 0.05;
  const std::vector<Homography> hs = {blowup};
  CHECK_THROWS_AS(stitch(seq, hs), CanvasTooLarge);
}

TEST_CASE("argument validation") {
  FrameSequence seq;
  seq.frames.assign(3, Image(32, 32));
  const std::vector<Homography> hs(1);
  CHECK_THROWS_AS(stitch(seq, hs), Error);          // wrong chain length
  const std::vector<Homography> ok(2);
  CHECK_THROWS_AS(stitch(seq, ok, 5), Error);       // bad reference
}

}  // TEST_SUITE
