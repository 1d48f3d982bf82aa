#pragma once

#include <Eigen/Dense>
#include <array>
#include <span>

#include "skyreg/image.hpp"

namespace skyreg {

using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;
using OffsetMat = Eigen::Matrix<double, 2, 4>;  // (du, dv) per corner

// 3x3 projective transform mapping homogeneous pixel coordinates
// [u, v, 1]^T of the source frame to the target frame. Canonical
// representative of the scale class has h(2,2) = 1.
struct Homography {
  Mat3 h = Mat3::Identity();

  static Homography identity() { return {}; }
  static Homography translation(double du, double dv) {
    Homography out;
    out.h(0, 2) = du;
    out.h(1, 2) = dv;
    return out;
  }
};

// Fixes the scale class representative: h(2,2) = 1. Throws
// DegenerateCorrespondence when no such representative exists.
Homography normalize(const Homography& h);

// Four ordered corner points in frame coordinates: top-left, top-right,
// bottom-right, bottom-left.
struct PatchCorners {
  std::array<Vec2, 4> c;

  static PatchCorners square(double u0, double v0, double side) {
    PatchCorners out;
    out.c = {Vec2(u0, v0), Vec2(u0 + side, v0), Vec2(u0 + side, v0 + side),
             Vec2(u0, v0 + side)};
    return out;
  }
  double side() const { return c[1].x() - c[0].x(); }
  double u0() const { return c[0].x(); }
  double v0() const { return c[0].y(); }
};

// Per-corner pixel displacements in the estimation frame; the network's
// regression target (H_4pt).
struct CornerOffsets {
  OffsetMat d = OffsetMat::Zero();

  static CornerOffsets zero() { return {}; }
  // Offsets that map `corners` onto h(corners).
  static CornerOffsets from_homography(const Homography& h, const PatchCorners& corners);
};

constexpr double kMaxCornerOffsetPx = 32.0;

// Saved state for solve_dlt's reverse pass.
struct DltCache {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> x;
  PatchCorners corners;
  CornerOffsets offsets;
};

// Differentiable direct linear transform: the homography mapping each
// corner to corner + offset, with h(2,2) = 1. Offsets are clipped to
// [-max_offset, max_offset] before solving; the clip is inactive in all
// in-contract uses and exists to bound the admissible corner perturbation.
Homography solve_dlt(const PatchCorners& corners, const CornerOffsets& offsets,
                     DltCache* cache = nullptr,
                     double max_offset = kMaxCornerOffsetPx);

// Reverse pass: gradient of a scalar with respect to the (pre-clip)
// offsets, given its gradient with respect to the solved matrix. The
// grad_h(2,2) entry is ignored (the solution is pinned there).
OffsetMat solve_dlt_backward(const DltCache& cache, const Mat3& grad_h,
                             double max_offset = kMaxCornerOffsetPx);

// Product in temporal order: compose({h01, h12, h23}) maps frame-0
// coordinates to frame-3 coordinates. Result is normalized.
Homography compose(std::span<const Homography> hs);

// Perspective-divided mapping of a pixel coordinate. Throws DivergentPoint
// when the homogeneous w component collapses (|w| < 1e-9).
Vec2 warp_point(const Homography& h, const Vec2& x);

struct WarpResult {
  Image image;  // side x side output grid
  Image mask;   // 1 where the source sample fell inside img bounds
};

// Samples img at h * x for every output pixel x in the corner square, by
// bilinear interpolation with zero padding. mask = 0 marks pixels whose
// source coordinates left the image domain (those outputs are 0).
WarpResult warp_image(const Image& img, const Homography& h,
                      const PatchCorners& out_corners);

// Conjugation by S = diag(sx, sy, 1): the returned matrix acts on
// coordinates scaled by (sx, sy) exactly as h acts on unscaled ones.
Homography rescale_homography(const Homography& h, double sx, double sy);

// Exact DLT from four point correspondences (h(2,2) = 1). Shared by
// solve_dlt and the RANSAC minimal solver.
Homography homography_from_points(const std::array<Vec2, 4>& src,
                                  const std::array<Vec2, 4>& dst,
                                  DltCache* cache = nullptr);

}  // namespace skyreg
