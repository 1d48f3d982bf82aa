#include "skyreg/stitcher.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "skyreg/errors.hpp"

namespace skyreg {

namespace {
constexpr double kMaxCanvasAreaRatio = 20.0;
}

StitchResult stitch(const FrameSequence& seq, std::span<const Homography> hs,
                    int reference_index) {
  const int n = static_cast<int>(seq.frames.size());
  if (n == 0) throw Error("stitch: empty sequence");
  if (static_cast<int>(hs.size()) != n - 1) {
    throw Error("stitch: need one homography per consecutive pair");
  }
  if (reference_index < 0 || reference_index >= n) {
    throw Error("stitch: reference index out of range");
  }
  const int w = seq.width(), h = seq.height();

  // to_ref[k] maps frame-k coordinates onto the reference plane.
  std::vector<Homography> to_ref(n);
  to_ref[reference_index] = Homography::identity();
  for (int k = reference_index + 1; k < n; ++k) {
    // hs[k-1] maps frame k-1 -> k; invert to walk back toward the reference.
    Homography inv;
    inv.h = hs[k - 1].h.inverse();
    Homography chained;
    chained.h = to_ref[k - 1].h * inv.h;
    to_ref[k] = normalize(chained);
  }
  for (int k = reference_index - 1; k >= 0; --k) {
    Homography chained;
    chained.h = to_ref[k + 1].h * hs[k].h;
    to_ref[k] = normalize(chained);
  }

  // Canvas bounds: union of warped frame corner quadrilaterals.
  const Vec2 frame_corners[4] = {Vec2(0, 0), Vec2(w, 0), Vec2(w, h), Vec2(0, h)};
  double min_u = 0, max_u = 0, min_v = 0, max_v = 0;
  bool first = true;
  std::vector<std::array<Vec2, 4>> quads(n);
  for (int k = 0; k < n; ++k) {
    for (int c = 0; c < 4; ++c) {
      const Vec2 p = warp_point(to_ref[k], frame_corners[c]);
      quads[k][c] = p;
      if (first) {
        min_u = max_u = p.x();
        min_v = max_v = p.y();
        first = false;
      } else {
        min_u = std::min(min_u, p.x());
        max_u = std::max(max_u, p.x());
        min_v = std::min(min_v, p.y());
        max_v = std::max(max_v, p.y());
      }
    }
  }

  const int canvas_w = static_cast<int>(std::ceil(max_u) - std::floor(min_u));
  const int canvas_h = static_cast<int>(std::ceil(max_v) - std::floor(min_v));
  if (static_cast<double>(canvas_w) * canvas_h > kMaxCanvasAreaRatio * w * h) {
    throw CanvasTooLarge(std::to_string(canvas_w) + "x" + std::to_string(canvas_h) +
                         " exceeds " + std::to_string(kMaxCanvasAreaRatio) +
                         "x the frame area");
  }
  const Vec2 offset(-std::floor(min_u), -std::floor(min_v));

  StitchResult res;
  res.canvas = Image(canvas_w, canvas_h);
  res.offset = offset;

  for (int k = 0; k < n; ++k) {
    const Mat3 inv = to_ref[k].h.inverse();
    // Bounding box of this frame's quad on the canvas.
    double qu0 = quads[k][0].x(), qu1 = qu0, qv0 = quads[k][0].y(), qv1 = qv0;
    for (int c = 1; c < 4; ++c) {
      qu0 = std::min(qu0, quads[k][c].x());
      qu1 = std::max(qu1, quads[k][c].x());
      qv0 = std::min(qv0, quads[k][c].y());
      qv1 = std::max(qv1, quads[k][c].y());
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(qu0 + offset.x())));
    const int x1 = std::min(canvas_w - 1, static_cast<int>(std::ceil(qu1 + offset.x())));
    const int y0 = std::max(0, static_cast<int>(std::floor(qv0 + offset.y())));
    const int y1 = std::min(canvas_h - 1, static_cast<int>(std::ceil(qv1 + offset.y())));
    const Image& frame = seq.frames[k];
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Eigen::Vector3d p =
            inv * Eigen::Vector3d(x - offset.x(), y - offset.y(), 1.0);
        if (std::abs(p.z()) < 1e-9) continue;
        const double su = p.x() / p.z(), sv = p.y() / p.z();
        if (!frame.contains(su, sv)) continue;
        res.canvas.at(x, y) = frame.bilinear(su, sv);
      }
    }
  }
  return res;
}

}  // namespace skyreg
