#include "skyreg/ingest.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "skyreg/errors.hpp"
#include "skyreg/imageio.hpp"
#include "skyreg/rng.hpp"

namespace fs = std::filesystem;

namespace skyreg {

namespace {

const char* kImageExts[] = {".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".tif", ".tiff"};

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (const char* e : kImageExts) {
    if (ext == e) return true;
  }
  return false;
}

// Numeric-aware filename ordering so frame_2 sorts before frame_10.
bool natural_less(const std::string& a, const std::string& b) {
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (std::isdigit(static_cast<unsigned char>(a[i])) &&
        std::isdigit(static_cast<unsigned char>(b[j]))) {
      size_t i2 = i, j2 = j;
      while (i2 < a.size() && std::isdigit(static_cast<unsigned char>(a[i2]))) ++i2;
      while (j2 < b.size() && std::isdigit(static_cast<unsigned char>(b[j2]))) ++j2;
      const std::string na = a.substr(i, i2 - i), nb = b.substr(j, j2 - j);
      const long long va = std::stoll(na), vb = std::stoll(nb);
      if (va != vb) return va < vb;
      i = i2;
      j = j2;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() < b.size();
}

Image gray01_from_mat(const cv::Mat& m) {
  cv::Mat gray;
  if (m.channels() == 3) {
    cv::cvtColor(m, gray, cv::COLOR_BGR2GRAY);
  } else if (m.channels() == 4) {
    cv::cvtColor(m, gray, cv::COLOR_BGRA2GRAY);
  } else {
    gray = m;
  }
  Image out(gray.cols, gray.rows);
  for (int v = 0; v < gray.rows; ++v) {
    const uint8_t* row = gray.ptr<uint8_t>(v);
    for (int u = 0; u < gray.cols; ++u) out.at(u, v) = row[u] / 255.0;
  }
  return out;
}

}  // namespace

std::pair<int, int> patch_placement_range(int frame_extent, int size, int margin) {
  if (frame_extent < size) {
    throw OutOfBounds("patch larger than frame extent");
  }
  const int usable = std::min(margin, (frame_extent - size) / 2);
  return {usable, frame_extent - size - usable};
}

FrameSequence load_video(const std::string& path, std::pair<int, int> target_size) {
  FrameSequence seq;
  seq.video_id = fs::path(path).filename().string();

  std::vector<Image> raw;
  int src_w = 0, src_h = 0;

  if (fs::is_directory(path)) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) {
        files.push_back(entry.path().string());
      }
    }
    std::sort(files.begin(), files.end(), natural_less);
    for (const auto& f : files) {
      cv::Mat m = cv::imread(f, cv::IMREAD_GRAYSCALE);
      if (m.empty()) throw DecodeFailure("cannot decode frame image: " + f);
      if (src_w == 0) {
        src_w = m.cols;
        src_h = m.rows;
      }
      raw.push_back(gray01_from_mat(m));
    }
  } else if (fs::is_regular_file(path)) {
    cv::VideoCapture cap(path);
    if (!cap.isOpened()) throw DecodeFailure("cannot open video: " + path);
    cv::Mat frame;
    while (cap.read(frame)) {
      if (frame.empty()) break;
      if (src_w == 0) {
        src_w = frame.cols;
        src_h = frame.rows;
      }
      raw.push_back(gray01_from_mat(frame));
    }
  } else {
    throw DecodeFailure("no such video or frame directory: " + path);
  }

  if (raw.size() < 2) {
    throw EmptyVideo(path + " has " + std::to_string(raw.size()) + " frame(s)");
  }

  seq.source_size = {src_w, src_h};
  if (src_w * 9 != src_h * 16) {
    seq.aspect_warning = true;
    std::cerr << "warning: " << seq.video_id << " aspect ratio " << src_w << "x" << src_h
              << " is not 16:9\n";
  }

  seq.frames.reserve(raw.size());
  for (auto& img : raw) {
    if (img.width() == target_size.first && img.height() == target_size.second) {
      seq.frames.push_back(std::move(img));
    } else {
      seq.frames.push_back(resize_area(img, target_size.first, target_size.second));
    }
  }
  return seq;
}

EpisodeBatch sample_patch_streams(const FrameSequence& seq, int episode_start,
                                  int n_parents, uint64_t rng_seed, int episode_len) {
  if (n_parents < 1) throw Error("sample_patch_streams: n_parents must be >= 1");
  if (episode_start < 0 ||
      episode_start + episode_len > static_cast<int>(seq.frames.size())) {
    throw FrameRangeError("episode [" + std::to_string(episode_start) + ", " +
                          std::to_string(episode_start + episode_len) + ") exceeds " +
                          std::to_string(seq.frames.size()) + " frames");
  }

  const auto [ulo, uhi] = patch_placement_range(seq.width(), kParentPatchSize);
  const auto [vlo, vhi] = patch_placement_range(seq.height(), kParentPatchSize);

  Rng rng(hash_combine(hash_combine(hash_string(seq.video_id), episode_start), rng_seed));

  EpisodeBatch batch;
  batch.episode_start = episode_start;
  batch.episode_len = episode_len;
  batch.rng_seed = rng_seed;
  batch.video_id = seq.video_id;

  for (int p = 0; p < n_parents; ++p) {
    PatchSpec parent;
    parent.frame_index = episode_start;
    parent.top_left_u = rng.next_int(ulo, uhi);
    parent.top_left_v = rng.next_int(vlo, vhi);
    parent.size = kParentPatchSize;
    parent.scale_level = ScaleLevel::Parent;
    parent.stream_id = p;
    batch.patch_streams.push_back(parent);
  }
  // Children tile the parent: top-left, top-right, bottom-left, bottom-right.
  batch.patch_streams.reserve(static_cast<size_t>(n_parents) * 5);
  for (int p = 0; p < n_parents; ++p) {
    const PatchSpec parent = batch.patch_streams[p];  // push_back below reallocates
    const int half = kChildPatchSize;
    const int offs[4][2] = {{0, 0}, {half, 0}, {0, half}, {half, half}};
    for (int k = 0; k < 4; ++k) {
      PatchSpec child;
      child.frame_index = episode_start;
      child.top_left_u = parent.top_left_u + offs[k][0];
      child.top_left_v = parent.top_left_v + offs[k][1];
      child.size = kChildPatchSize;
      child.scale_level = ScaleLevel::Child;
      child.parent_id = parent.stream_id;
      child.stream_id = n_parents + 4 * p + k;
      batch.patch_streams.push_back(child);
    }
  }
  return batch;
}

Image extract_patch(const Image& frame, const PatchSpec& spec) {
  if (spec.top_left_u < 0 || spec.top_left_v < 0 ||
      spec.top_left_u + spec.size > frame.width() ||
      spec.top_left_v + spec.size > frame.height()) {
    throw OutOfBounds("patch at (" + std::to_string(spec.top_left_u) + ", " +
                      std::to_string(spec.top_left_v) + ") size " +
                      std::to_string(spec.size) + " exceeds " +
                      std::to_string(frame.width()) + "x" + std::to_string(frame.height()));
  }
  Image crop(spec.size, spec.size);
  for (int j = 0; j < spec.size; ++j) {
    for (int i = 0; i < spec.size; ++i) {
      crop.at(i, j) = frame.at(spec.top_left_u + i, spec.top_left_v + j);
    }
  }
  if (spec.size == kNetworkInputSize) return crop;
  return resize_bilinear(crop, kNetworkInputSize, kNetworkInputSize);
}

std::vector<std::string> list_videos(const std::string& root, const std::string& split) {
  const fs::path dir = fs::path(root) / split;
  if (!fs::is_directory(dir)) return {};

  std::vector<std::string> ids;
  const fs::path manifest = fs::path(root) / "manifest.txt";
  if (fs::is_regular_file(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) ids.push_back(line);
    }
  }

  std::vector<std::string> out;
  if (!ids.empty()) {
    for (const auto& id : ids) {
      const fs::path p = dir / id;
      if (fs::exists(p)) out.push_back(p.string());
    }
  } else {
    for (const auto& entry : fs::directory_iterator(dir)) {
      out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end(), natural_less);
  }
  return out;
}

}  // namespace skyreg
