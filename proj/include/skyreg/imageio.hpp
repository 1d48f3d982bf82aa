#pragma once

#include <string>

#include "skyreg/image.hpp"

namespace skyreg {

// Reads any OpenCV-decodable image as grayscale in [0, 1]. Throws
// DecodeFailure on unreadable files.
Image read_image_gray(const std::string& path);

// Writes an 8-bit grayscale PNG (values clamped to [0, 1]).
void write_image_gray8(const Image& img, const std::string& path);

// Area-averaging resize to (width, height).
Image resize_area(const Image& img, int width, int height);

// Bilinear resize with align-corners index mapping (output corner pixels
// coincide with input corner pixels).
Image resize_bilinear(const Image& img, int width, int height);

// Jet-colormapped heat overlay: heat in [0,1] alpha-blended onto the base
// grayscale image, written as an RGB PNG.
void write_heatmap_overlay(const Image& base, const Image& heat, double alpha,
                           const std::string& path);

}  // namespace skyreg
