#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace skyreg {

// Single-channel intensity grid, values nominally in [0, 1], row-major.
// Coordinates are (u, v) = (column, row) with pixel centers at integer
// positions; the continuous image domain is [0, width-1] x [0, height-1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0)
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  double& at(int u, int v) { return data_[static_cast<size_t>(v) * width_ + u]; }
  double at(int u, int v) const { return data_[static_cast<size_t>(v) * width_ + u]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  // Zero outside the grid.
  double pixel_or_zero(int u, int v) const {
    if (u < 0 || u >= width_ || v < 0 || v >= height_) return 0.0;
    return at(u, v);
  }

  bool contains(double u, double v) const {
    return u >= 0.0 && u <= width_ - 1.0 && v >= 0.0 && v <= height_ - 1.0;
  }

  // Bilinear sample with zero padding. Exact at integer coordinates.
  double bilinear(double u, double v) const {
    const int x0 = static_cast<int>(std::floor(u));
    const int y0 = static_cast<int>(std::floor(v));
    const double fu = u - x0;
    const double fv = v - y0;
    const double p00 = pixel_or_zero(x0, y0);
    const double p10 = pixel_or_zero(x0 + 1, y0);
    const double p01 = pixel_or_zero(x0, y0 + 1);
    const double p11 = pixel_or_zero(x0 + 1, y0 + 1);
    return (1.0 - fv) * ((1.0 - fu) * p00 + fu * p10) +
           fv * ((1.0 - fu) * p01 + fu * p11);
  }

  // d(bilinear)/du and d(bilinear)/dv at (u, v).
  void bilinear_grad(double u, double v, double* du, double* dv) const {
    const int x0 = static_cast<int>(std::floor(u));
    const int y0 = static_cast<int>(std::floor(v));
    const double fu = u - x0;
    const double fv = v - y0;
    const double p00 = pixel_or_zero(x0, y0);
    const double p10 = pixel_or_zero(x0 + 1, y0);
    const double p01 = pixel_or_zero(x0, y0 + 1);
    const double p11 = pixel_or_zero(x0 + 1, y0 + 1);
    *du = (1.0 - fv) * (p10 - p00) + fv * (p11 - p01);
    *dv = (1.0 - fu) * (p01 - p00) + fu * (p11 - p10);
  }

  double mean() const {
    if (data_.empty()) return 0.0;
    double s = 0.0;
    for (double x : data_) s += x;
    return s / static_cast<double>(data_.size());
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

}  // namespace skyreg
