#include "skyreg/imageio.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

#include "skyreg/errors.hpp"

namespace skyreg {

namespace {

Image from_mat8(const cv::Mat& m) {
  Image out(m.cols, m.rows);
  for (int v = 0; v < m.rows; ++v) {
    const uint8_t* row = m.ptr<uint8_t>(v);
    for (int u = 0; u < m.cols; ++u) out.at(u, v) = row[u] / 255.0;
  }
  return out;
}

cv::Mat to_mat8(const Image& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC1);
  for (int v = 0; v < img.height(); ++v) {
    uint8_t* row = m.ptr<uint8_t>(v);
    for (int u = 0; u < img.width(); ++u) {
      const double x = std::clamp(img.at(u, v), 0.0, 1.0);
      row[u] = static_cast<uint8_t>(std::lround(x * 255.0));
    }
  }
  return m;
}

}  // namespace

Image read_image_gray(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DecodeFailure("cannot read image: " + path);
  return from_mat8(m);
}

void write_image_gray8(const Image& img, const std::string& path) {
  if (!cv::imwrite(path, to_mat8(img))) {
    throw Error("cannot write image: " + path);
  }
}

Image resize_area(const Image& img, int width, int height) {
  cv::Mat src(img.height(), img.width(), CV_64FC1);
  for (int v = 0; v < img.height(); ++v) {
    double* row = src.ptr<double>(v);
    for (int u = 0; u < img.width(); ++u) row[u] = img.at(u, v);
  }
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_AREA);
  Image out(width, height);
  for (int v = 0; v < height; ++v) {
    const double* row = dst.ptr<double>(v);
    for (int u = 0; u < width; ++u) out.at(u, v) = row[u];
  }
  return out;
}

Image resize_bilinear(const Image& img, int width, int height) {
  Image out(width, height);
  const double su = width > 1 ? static_cast<double>(img.width() - 1) / (width - 1) : 0.0;
  const double sv = height > 1 ? static_cast<double>(img.height() - 1) / (height - 1) : 0.0;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      out.at(u, v) = img.bilinear(u * su, v * sv);
    }
  }
  return out;
}

void write_heatmap_overlay(const Image& base, const Image& heat, double alpha,
                           const std::string& path) {
  cv::Mat gray = to_mat8(base);
  cv::Mat color;
  cv::cvtColor(gray, color, cv::COLOR_GRAY2BGR);
  cv::Mat heat8 = to_mat8(heat);
  if (heat8.size() != gray.size()) {
    cv::resize(heat8, heat8, gray.size(), 0, 0, cv::INTER_LINEAR);
  }
  cv::Mat jet;
  cv::applyColorMap(heat8, jet, cv::COLORMAP_JET);
  cv::Mat blended;
  cv::addWeighted(jet, alpha, color, 1.0 - alpha, 0.0, blended);
  if (!cv::imwrite(path, blended)) {
    throw Error("cannot write image: " + path);
  }
}

}  // namespace skyreg
