#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skyreg/image.hpp"
#include "skyreg/network.hpp"

namespace skyreg {

// Gradient-weighted activation map of the photometric loss for one patch
// pair: per-channel activations weighted by their spatially averaged loss
// gradients, rectified, max-normalized to [0, 1] and upsampled to the
// network input size. Layer is one of conv1..conv8.
Image activation_map(const ModelParams& params, const Image& patch_ref,
                     const Image& patch_tgt, const std::string& layer);

struct Histogram {
  std::vector<int64_t> counts;
  std::vector<double> edges;  // counts.size() + 1 ascending edges
};

// Photometric-loss distribution over n_samples patch pairs sampled from a
// single frame pair; deterministic given seed.
Histogram loss_histogram(const ModelParams& params, const Image& frame_a,
                         const Image& frame_b, int n_samples, int bins, uint64_t seed);

void write_histogram_csv(const Histogram& hist, const std::string& path);

}  // namespace skyreg
