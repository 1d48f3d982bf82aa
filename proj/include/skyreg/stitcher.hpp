#pragma once

#include <span>

#include "skyreg/geometry.hpp"
#include "skyreg/image.hpp"
#include "skyreg/ingest.hpp"

namespace skyreg {

struct StitchResult {
  Image canvas;   // grayscale panorama
  Vec2 offset;    // translation applied to reference-frame coordinates
};

// Registers every frame into the reference frame's plane through the
// composed per-pair chain and composites last-writer-wins in frame order.
// The canvas is the union of all warped frame quadrilaterals; throws
// CanvasTooLarge past 20x the frame area (a sign of divergent estimates).
StitchResult stitch(const FrameSequence& seq, std::span<const Homography> hs,
                    int reference_index = 0);

}  // namespace skyreg
