#include "skyreg/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "skyreg/errors.hpp"

namespace skyreg {

namespace {

constexpr double kRcondTol = 1e-10;
constexpr double kDetTol = 1e-12;
constexpr double kDivergeTol = 1e-9;

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

}  // namespace

Homography normalize(const Homography& h) {
  const double s = h.h(2, 2);
  if (std::abs(s) < kDetTol) {
    throw DegenerateCorrespondence("normalize: h(2,2) vanishes, no canonical representative");
  }
  Homography out;
  out.h = h.h / s;
  if (std::abs(out.h.determinant()) < kDetTol) {
    throw DegenerateCorrespondence("normalize: matrix is singular");
  }
  return out;
}

CornerOffsets CornerOffsets::from_homography(const Homography& h, const PatchCorners& corners) {
  CornerOffsets out;
  for (int i = 0; i < 4; ++i) {
    const Vec2 mapped = warp_point(h, corners.c[i]);
    out.d(0, i) = mapped.x() - corners.c[i].x();
    out.d(1, i) = mapped.y() - corners.c[i].y();
  }
  return out;
}

Homography homography_from_points(const std::array<Vec2, 4>& src,
                                  const std::array<Vec2, 4>& dst, DltCache* cache) {
  // Unknowns x = (h11 h12 h13 h21 h22 h23 h31 h32), h33 = 1:
  //   u' = (h11 u + h12 v + h13) / (h31 u + h32 v + 1)
  //   v' = (h21 u + h22 v + h23) / (h31 u + h32 v + 1)
  Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double u = src[i].x(), v = src[i].y();
    const double up = dst[i].x(), vp = dst[i].y();
    a(2 * i, 0) = u;
    a(2 * i, 1) = v;
    a(2 * i, 2) = 1.0;
    a(2 * i, 6) = -u * up;
    a(2 * i, 7) = -v * up;
    b(2 * i) = up;
    a(2 * i + 1, 3) = u;
    a(2 * i + 1, 4) = v;
    a(2 * i + 1, 5) = 1.0;
    a(2 * i + 1, 6) = -u * vp;
    a(2 * i + 1, 7) = -v * vp;
    b(2 * i + 1) = vp;
  }

  Eigen::PartialPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  const double rc = lu.rcond();
  // The comparison is written to also reject NaN estimates from exactly
  // singular systems.
  if (!(rc >= kRcondTol)) {
    throw DegenerateCorrespondence("solve_dlt: 8x8 system singular beyond conditioning tolerance");
  }
  const Eigen::Matrix<double, 8, 1> x = lu.solve(b);
  if (!x.allFinite()) {
    throw DegenerateCorrespondence("solve_dlt: non-finite solution");
  }

  Homography out;
  out.h << x(0), x(1), x(2), x(3), x(4), x(5), x(6), x(7), 1.0;
  if (!(std::abs(out.h.determinant()) >= kDetTol)) {
    throw DegenerateCorrespondence("solve_dlt: solved matrix is singular");
  }
  if (cache) {
    cache->a = a;
    cache->x = x;
  }
  return out;
}

Homography solve_dlt(const PatchCorners& corners, const CornerOffsets& offsets,
                     DltCache* cache, double max_offset) {
  std::array<Vec2, 4> dst;
  for (int i = 0; i < 4; ++i) {
    dst[i] = Vec2(corners.c[i].x() + clip(offsets.d(0, i), -max_offset, max_offset),
                  corners.c[i].y() + clip(offsets.d(1, i), -max_offset, max_offset));
  }
  Homography out = homography_from_points(corners.c, dst, cache);
  if (cache) {
    cache->corners = corners;
    cache->offsets = offsets;
  }
  return out;
}

OffsetMat solve_dlt_backward(const DltCache& cache, const Mat3& grad_h, double max_offset) {
  // x = A^-1 b  =>  b_bar = A^-T g,  A_bar = -b_bar x^T. The offsets enter
  // through b(2i) = u'_i, b(2i+1) = v'_i and A's last two columns.
  Eigen::Matrix<double, 8, 1> g;
  g << grad_h(0, 0), grad_h(0, 1), grad_h(0, 2), grad_h(1, 0), grad_h(1, 1), grad_h(1, 2),
      grad_h(2, 0), grad_h(2, 1);
  const Eigen::Matrix<double, 8, 1> y =
      cache.a.transpose().partialPivLu().solve(g);

  OffsetMat out = OffsetMat::Zero();
  for (int i = 0; i < 4; ++i) {
    const double u = cache.corners.c[i].x(), v = cache.corners.c[i].y();
    // d(b row) = 1, d(A row cols 6,7) = (-u, -v); collapses to y * w with
    // w the homogeneous denominator at this corner.
    const double w = 1.0 + cache.x(6) * u + cache.x(7) * v;
    out(0, i) = y(2 * i) * w;
    out(1, i) = y(2 * i + 1) * w;
    // Clipped entries are at the boundary of the admissible set; their
    // subgradient is zero.
    if (std::abs(cache.offsets.d(0, i)) > max_offset) out(0, i) = 0.0;
    if (std::abs(cache.offsets.d(1, i)) > max_offset) out(1, i) = 0.0;
  }
  return out;
}

Homography compose(std::span<const Homography> hs) {
  if (hs.empty()) throw Error("compose: empty list");
  Mat3 acc = hs.front().h;
  for (size_t i = 1; i < hs.size(); ++i) acc = hs[i].h * acc;
  Homography out;
  out.h = acc;
  return normalize(out);
}

Vec2 warp_point(const Homography& h, const Vec2& x) {
  const Eigen::Vector3d p = h.h * Eigen::Vector3d(x.x(), x.y(), 1.0);
  if (std::abs(p.z()) < kDivergeTol) {
    throw DivergentPoint("warp_point: point maps toward the line at infinity");
  }
  return Vec2(p.x() / p.z(), p.y() / p.z());
}

WarpResult warp_image(const Image& img, const Homography& h, const PatchCorners& out_corners) {
  const int side = static_cast<int>(std::lround(out_corners.side()));
  const double u0 = out_corners.u0();
  const double v0 = out_corners.v0();
  WarpResult res{Image(side, side), Image(side, side)};
  for (int j = 0; j < side; ++j) {
    for (int i = 0; i < side; ++i) {
      const double u = u0 + i;
      const double v = v0 + j;
      const Eigen::Vector3d p = h.h * Eigen::Vector3d(u, v, 1.0);
      if (std::abs(p.z()) < kDivergeTol) continue;  // leave zero, mask 0
      const double su = p.x() / p.z();
      const double sv = p.y() / p.z();
      if (!img.contains(su, sv)) continue;
      res.image.at(i, j) = img.bilinear(su, sv);
      res.mask.at(i, j) = 1.0;
    }
  }
  return res;
}

Homography rescale_homography(const Homography& h, double sx, double sy) {
  Mat3 s = Mat3::Identity();
  s(0, 0) = sx;
  s(1, 1) = sy;
  Mat3 sinv = Mat3::Identity();
  sinv(0, 0) = 1.0 / sx;
  sinv(1, 1) = 1.0 / sy;
  Homography out;
  out.h = s * h.h * sinv;
  return normalize(out);
}

}  // namespace skyreg
