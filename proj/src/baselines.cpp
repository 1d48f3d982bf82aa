#include "skyreg/baselines.hpp"

#include <opencv2/core.hpp>
#include <opencv2/features2d.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "skyreg/errors.hpp"
#include "skyreg/rng.hpp"

namespace skyreg {

namespace {

cv::Mat to_mat8(const Image& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC1);
  for (int v = 0; v < img.height(); ++v) {
    uint8_t* row = m.ptr<uint8_t>(v);
    for (int u = 0; u < img.width(); ++u) {
      row[u] = static_cast<uint8_t>(std::lround(std::clamp(img.at(u, v), 0.0, 1.0) * 255.0));
    }
  }
  return m;
}

// Hartley-normalized least-squares DLT over all correspondences.
Homography refit_least_squares(const std::vector<Vec2>& src, const std::vector<Vec2>& dst) {
  const int n = static_cast<int>(src.size());
  const auto normalizer = [](const std::vector<Vec2>& pts) {
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pts) mean += p;
    mean /= pts.size();
    double dist = 0.0;
    for (const auto& p : pts) dist += (p - mean).norm();
    dist /= pts.size();
    const double s = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
    Mat3 t = Mat3::Identity();
    t(0, 0) = s;
    t(1, 1) = s;
    t(0, 2) = -s * mean.x();
    t(1, 2) = -s * mean.y();
    return t;
  };
  const Mat3 ts = normalizer(src), td = normalizer(dst);

  Eigen::MatrixXd a(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p = ts * Eigen::Vector3d(src[i].x(), src[i].y(), 1.0);
    const Eigen::Vector3d q = td * Eigen::Vector3d(dst[i].x(), dst[i].y(), 1.0);
    const double u = p.x() / p.z(), v = p.y() / p.z();
    const double up = q.x() / q.z(), vp = q.y() / q.z();
    a.row(2 * i) << u, v, 1, 0, 0, 0, -u * up, -v * up, -up;
    a.row(2 * i + 1) << 0, 0, 0, u, v, 1, -u * vp, -v * vp, -vp;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Homography out;
  out.h = td.inverse() * hn * ts;
  return normalize(out);
}

}  // namespace

Homography identity_estimate(const Image&, const Image&) { return Homography::identity(); }

Homography orb_ransac_estimate(const Image& frame_a, const Image& frame_b,
                               const RansacConfig& config) {
  if (frame_a.width() != frame_b.width() || frame_a.height() != frame_b.height()) {
    throw Error("orb_ransac_estimate: frame sizes differ");
  }

  cv::Ptr<cv::ORB> orb = cv::ORB::create(config.orb_features);
  std::vector<cv::KeyPoint> kps_a, kps_b;
  cv::Mat desc_a, desc_b;
  orb->detectAndCompute(to_mat8(frame_a), cv::noArray(), kps_a, desc_a);
  orb->detectAndCompute(to_mat8(frame_b), cv::noArray(), kps_b, desc_b);
  if (desc_a.rows < config.min_matches || desc_b.rows < config.min_matches) {
    throw InsufficientFeatures("found " + std::to_string(desc_a.rows) + " / " +
                               std::to_string(desc_b.rows) + " keypoints");
  }

  cv::BFMatcher matcher(cv::NORM_HAMMING);
  std::vector<std::vector<cv::DMatch>> knn;
  matcher.knnMatch(desc_a, desc_b, knn, 2);
  std::vector<Vec2> src, dst;
  for (const auto& m : knn) {
    if (m.size() == 2 && m[0].distance < config.ratio_test * m[1].distance) {
      const auto& pa = kps_a[m[0].queryIdx].pt;
      const auto& pb = kps_b[m[0].trainIdx].pt;
      src.emplace_back(pa.x, pa.y);
      dst.emplace_back(pb.x, pb.y);
    }
  }
  const int n = static_cast<int>(src.size());
  if (n < config.min_matches) {
    throw InsufficientFeatures(std::to_string(n) + " matches after ratio test, need " +
                               std::to_string(config.min_matches));
  }

  Rng rng(hash_combine(config.seed, 0x0A5ACULL));
  int best_inliers = 0;
  Homography best;
  std::vector<char> best_mask(n, 0), mask(n, 0);
  for (int it = 0; it < config.max_iterations; ++it) {
    std::array<int, 4> idx;
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = static_cast<int>(rng.next_below(n));
        fresh = true;
        for (int j = 0; j < k; ++j) fresh &= idx[j] != idx[k];
      } while (!fresh);
    }
    Homography model;
    try {
      model = homography_from_points({src[idx[0]], src[idx[1]], src[idx[2]], src[idx[3]]},
                                     {dst[idx[0]], dst[idx[1]], dst[idx[2]], dst[idx[3]]});
    } catch (const DegenerateCorrespondence&) {
      continue;
    }
    int inliers = 0;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d p = model.h * Eigen::Vector3d(src[i].x(), src[i].y(), 1.0);
      mask[i] = 0;
      if (std::abs(p.z()) < 1e-9) continue;
      const Vec2 proj(p.x() / p.z(), p.y() / p.z());
      if ((proj - dst[i]).norm() <= config.inlier_threshold_px) {
        mask[i] = 1;
        ++inliers;
      }
    }
    if (inliers > best_inliers) {
      best_inliers = inliers;
      best = model;
      best_mask = mask;
    }
  }
  if (best_inliers < config.min_matches) {
    throw NoConsensus("best consensus has " + std::to_string(best_inliers) +
                      " inliers, need " + std::to_string(config.min_matches));
  }

  // Refit on the consensus set, then again at a tightened threshold:
  // coarse-pyramid keypoints carry quantized positions that otherwise
  // bias the least-squares fit.
  Homography model = normalize(best);
  const double thresholds[2] = {config.inlier_threshold_px,
                                std::min(config.inlier_threshold_px, 1.0)};
  for (const double thresh : thresholds) {
    std::vector<Vec2> in_src, in_dst;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d p = model.h * Eigen::Vector3d(src[i].x(), src[i].y(), 1.0);
      if (std::abs(p.z()) < 1e-9) continue;
      if ((Vec2(p.x() / p.z(), p.y() / p.z()) - dst[i]).norm() <= thresh) {
        in_src.push_back(src[i]);
        in_dst.push_back(dst[i]);
      }
    }
    if (static_cast<int>(in_src.size()) < config.min_matches) break;
    try {
      model = refit_least_squares(in_src, in_dst);
    } catch (const DegenerateCorrespondence&) {
      break;
    }
  }
  return model;
}

}  // namespace skyreg
