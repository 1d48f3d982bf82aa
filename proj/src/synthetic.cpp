#include "skyreg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "skyreg/errors.hpp"
#include "skyreg/imageio.hpp"
#include "skyreg/rng.hpp"

namespace fs = std::filesystem;

namespace skyreg {

namespace {

Mat3 similarity_about(double cx, double cy, double angle_rad, double scale, double dx,
                      double dy) {
  Mat3 t_center = Mat3::Identity(), t_back = Mat3::Identity(), rs = Mat3::Identity(),
       shift = Mat3::Identity();
  t_center(0, 2) = -cx;
  t_center(1, 2) = -cy;
  t_back(0, 2) = cx;
  t_back(1, 2) = cy;
  rs(0, 0) = scale * std::cos(angle_rad);
  rs(0, 1) = -scale * std::sin(angle_rad);
  rs(1, 0) = scale * std::sin(angle_rad);
  rs(1, 1) = scale * std::cos(angle_rad);
  shift(0, 2) = dx;
  shift(1, 2) = dy;
  return shift * t_back * rs * t_center;
}

double lattice_value(uint64_t seed, int octave, int64_t cx, int64_t cy) {
  uint64_t h = hash_combine(seed, static_cast<uint64_t>(octave));
  h = hash_combine(h, static_cast<uint64_t>(cx) * 0x9E3779B1u + 0x7F4A7C15u);
  h = hash_combine(h, static_cast<uint64_t>(cy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(uint64_t seed, int octave, double u, double v, double cell) {
  const double gu = u / cell, gv = v / cell;
  const int64_t x0 = static_cast<int64_t>(std::floor(gu));
  const int64_t y0 = static_cast<int64_t>(std::floor(gv));
  const double fu = smoothstep(gu - x0);
  const double fv = smoothstep(gv - y0);
  const double p00 = lattice_value(seed, octave, x0, y0);
  const double p10 = lattice_value(seed, octave, x0 + 1, y0);
  const double p01 = lattice_value(seed, octave, x0, y0 + 1);
  const double p11 = lattice_value(seed, octave, x0 + 1, y0 + 1);
  return (1 - fv) * ((1 - fu) * p00 + fu * p10) + fv * ((1 - fu) * p01 + fu * p11);
}

}  // namespace

Image default_texture(int width, int height, uint64_t seed) {
  Image img(width, height);
  // Smooth multi-octave base.
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      double x = 0.45;
      double amp = 0.28, cell = 96.0;
      for (int o = 0; o < 5; ++o) {
        x += amp * (value_noise(seed, o, u, v, cell) - 0.5);
        amp *= 0.55;
        cell *= 0.5;
      }
      img.at(u, v) = x;
    }
  }
  // Field patches: rectangular brightness shifts (corner features).
  Rng rng(hash_combine(seed, 0xFEEDULL));
  const int n_fields = std::max(24, width * height / 18000);
  for (int k = 0; k < n_fields; ++k) {
    const int w = rng.next_int(30, 160);
    const int h = rng.next_int(30, 160);
    const int u0 = rng.next_int(0, std::max(0, width - w - 1));
    const int v0 = rng.next_int(0, std::max(0, height - h - 1));
    const double delta = rng.uniform(-0.16, 0.16);
    for (int v = v0; v < v0 + h; ++v) {
      for (int u = u0; u < u0 + w; ++u) img.at(u, v) += delta;
    }
  }
  // Road-like streaks.
  const int n_roads = std::max(6, (width + height) / 250);
  for (int k = 0; k < n_roads; ++k) {
    double u = rng.uniform(0, width);
    double v = rng.uniform(0, height);
    const double angle = rng.uniform(0, 6.2831853);
    const double du = std::cos(angle), dv = std::sin(angle);
    const double bright = rng.uniform(0.12, 0.28);
    const int len = rng.next_int(width / 3, width);
    for (int s = 0; s < len; ++s) {
      const int iu = static_cast<int>(u), iv = static_cast<int>(v);
      for (int t = -1; t <= 1; ++t) {
        const int uu = iu + static_cast<int>(-dv * t);
        const int vv = iv + static_cast<int>(du * t);
        if (uu >= 0 && uu < width && vv >= 0 && vv < height) img.at(uu, vv) += bright * 0.5;
      }
      u += du;
      v += dv;
      if (u < 0 || u >= width || v < 0 || v >= height) break;
    }
  }
  // Building-like discs: strong, well-localized corner features.
  const int n_discs = std::max(60, width * height / 2000);
  for (int k = 0; k < n_discs; ++k) {
    const int cx = rng.next_int(4, width - 5);
    const int cy = rng.next_int(4, height - 5);
    const int r = rng.next_int(2, 6);
    const double delta = rng.uniform(0.18, 0.3) * (rng.next_below(2) ? 1.0 : -1.0);
    for (int v = std::max(0, cy - r); v <= std::min(height - 1, cy + r); ++v) {
      for (int u = std::max(0, cx - r); u <= std::min(width - 1, cx + r); ++u) {
        if ((u - cx) * (u - cx) + (v - cy) * (v - cy) <= r * r) img.at(u, v) += delta;
      }
    }
  }
  // Fine speckle so feature detectors find texture everywhere.
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const double n = lattice_value(seed ^ 0xABCDULL, 9, u, v) - 0.5;
      img.at(u, v) = std::clamp(img.at(u, v) + 0.05 * n, 0.02, 0.98);
    }
  }
  return img;
}

SyntheticClip generate(const SyntheticSpec& spec) {
  if (spec.length < 2) throw Error("synthetic clip needs at least 2 frames");
  if (spec.texture.empty()) throw Error("synthetic spec has no texture");
  if (spec.program.empty()) throw Error("synthetic spec has an empty motion program");
  if (spec.program.size() != 1 &&
      static_cast<int>(spec.program.size()) != spec.length - 1) {
    throw Error("motion program must have 1 or length-1 entries");
  }

  const int w = spec.frame_width, h = spec.frame_height;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;

  // W_t maps frame-t coordinates into the texture; the first window is
  // centered.
  std::vector<Mat3> window(spec.length);
  Mat3 w0 = Mat3::Identity();
  w0(0, 2) = (spec.texture.width() - w) / 2.0;
  w0(1, 2) = (spec.texture.height() - h) / 2.0;
  window[0] = w0;

  std::vector<Homography> truth;
  truth.reserve(spec.length - 1);
  for (int t = 0; t + 1 < spec.length; ++t) {
    const MotionStep& m =
        spec.program.size() == 1 ? spec.program[0] : spec.program[t];
    const Mat3 step = similarity_about(cx, cy, m.rot_deg * M_PI / 180.0, m.scale, m.dx, m.dy);
    window[t + 1] = window[t] * step;
    Homography pair;  // frame t -> frame t+1
    pair.h = step.inverse();
    truth.push_back(normalize(pair));
  }

  // Footprint check.
  for (int t = 0; t < spec.length; ++t) {
    const Vec2 corners[4] = {Vec2(0, 0), Vec2(w - 1, 0), Vec2(w - 1, h - 1), Vec2(0, h - 1)};
    for (const Vec2& c : corners) {
      const Eigen::Vector3d p = window[t] * Eigen::Vector3d(c.x(), c.y(), 1.0);
      const double tu = p.x() / p.z(), tv = p.y() / p.z();
      if (tu < 0 || tu > spec.texture.width() - 1 || tv < 0 ||
          tv > spec.texture.height() - 1) {
        throw FootprintOverflow("frame " + std::to_string(t) +
                                " leaves the texture; enlarge it or shorten the clip");
      }
    }
  }

  SyntheticClip clip;
  clip.seq.video_id = spec.video_id;
  clip.seq.source_size = {kFullResWidth, kFullResHeight};
  clip.seq.frames.reserve(spec.length);
  for (int t = 0; t < spec.length; ++t) {
    Image frame(w, h);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const Eigen::Vector3d p = window[t] * Eigen::Vector3d(u, v, 1.0);
        frame.at(u, v) = spec.texture.bilinear(p.x() / p.z(), p.y() / p.z());
      }
    }
    if (spec.noise_sigma > 0.0) {
      Rng rng(hash_combine(hash_combine(spec.seed, 0xBEEFULL), t));
      for (auto& x : frame.data()) {
        x = std::clamp(x + spec.noise_sigma * rng.next_normal(), 0.0, 1.0);
      }
    }
    clip.seq.frames.push_back(std::move(frame));
  }

  // Landmarks: a ring of texture points around the middle frame's center,
  // projected exactly into every annotated frame at full resolution.
  const int mid = spec.length / 2;
  const double radius = 0.18 * std::min(w, h);
  std::vector<Vec2> tex_points;
  for (int j = 0; j < spec.landmark_count; ++j) {
    const double a = 2.0 * M_PI * j / spec.landmark_count;
    const Eigen::Vector3d p =
        window[mid] *
        Eigen::Vector3d(cx + radius * std::cos(a), cy + radius * std::sin(a), 1.0);
    tex_points.emplace_back(p.x() / p.z(), p.y() / p.z());
  }
  clip.annotations.video_id = spec.video_id;
  for (int t = 0; t < spec.length; t += kAnnotationStridePx) {
    LandmarkAnnotation::Entry entry;
    entry.frame_index = t;
    const Mat3 inv = window[t].inverse();
    for (int j = 0; j < spec.landmark_count; ++j) {
      const Eigen::Vector3d p =
          inv * Eigen::Vector3d(tex_points[j].x(), tex_points[j].y(), 1.0);
      entry.landmarks.emplace_back(
          j, Vec2(kFullResScale * p.x() / p.z(), kFullResScale * p.y() / p.z()));
    }
    clip.annotations.entries.push_back(std::move(entry));
  }
  clip.truth = std::move(truth);
  return clip;
}

void write_dataset(const SyntheticClip& clip, const std::string& root,
                   const std::string& split) {
  const fs::path dir = fs::path(root) / split / clip.seq.video_id;
  fs::create_directories(dir);
  char name[64];
  for (size_t t = 0; t < clip.seq.frames.size(); ++t) {
    std::snprintf(name, sizeof(name), "frame_%06zu.png", t);
    write_image_gray8(clip.seq.frames[t], (dir / name).string());
  }

  std::ofstream truth(fs::path(root) / (clip.seq.video_id + "_truth.csv"), std::ios::trunc);
  truth << "pair_index,h00,h01,h02,h10,h11,h12,h20,h21,h22\n";
  char buf[400];
  for (size_t t = 0; t < clip.truth.size(); ++t) {
    const Mat3& m = clip.truth[t].h;
    std::snprintf(buf, sizeof(buf),
                  "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", t, m(0, 0),
                  m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2));
    truth << buf;
  }

  const LandmarkAnnotation anns[1] = {clip.annotations};
  write_annotations(anns, (fs::path(root) / (clip.seq.video_id + "_annotations.csv")).string());
}

}  // namespace skyreg
