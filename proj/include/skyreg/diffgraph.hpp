#pragma once

#include <vector>

#include "skyreg/geometry.hpp"

namespace skyreg::diff {

// Reverse-mode graph over the homography-level part of the pipeline:
// offsets -> tensor DLT -> composition / normalization -> L1 matrix
// distances and photometric warping losses. Leaves are the per-step corner
// offsets regressed by the network; after backward(), each DLT node holds
// the gradient of the root scalar with respect to its (pre-scale) offsets.
//
// Image data referenced by photometric nodes must outlive the graph; the
// per-pixel warp is recomputed in the reverse pass instead of cached.
class Graph {
 public:
  struct MatId { int i = -1; };
  struct ScalarId { int i = -1; };

  // Leaf: tensor DLT of corners and offset_scale * offsets. offset_scale
  // carries the child-patch 0.5 compensation inside the graph so its
  // gradient reaches the raw network output.
  MatId dlt(const PatchCorners& corners, const OffsetMat& offsets, double offset_scale = 1.0);

  MatId constant(const Homography& h);
  MatId mul(MatId a, MatId b);       // value(a) * value(b)
  MatId normalized(MatId a);         // value(a) / value(a)(2,2)

  ScalarId l1_diff(MatId a, MatId b);  // sum |A - B| over all 9 entries

  struct PhotoStats {
    int valid = 0;
    int total = 0;
    bool low_valid = false;  // < min_valid_frac of pixels valid; loss forced to 0
  };

  // Mean absolute intensity difference between ref sampled over `region`
  // and tgt sampled at H * x, over mask-valid pixels. `ref_origin_u/v` give
  // the pixel of `ref` corresponding to region's top-left corner (ref may
  // be a patch crop while region lives in frame coordinates).
  ScalarId photometric(MatId h, const Image& ref, int ref_origin_u, int ref_origin_v,
                       const Image& tgt, const PatchCorners& region,
                       double min_valid_frac = 0.25, PhotoStats* stats = nullptr);

  ScalarId constant_scalar(double v);
  ScalarId add_scaled(ScalarId a, double wa, ScalarId b, double wb);
  ScalarId weighted_sum(const std::vector<ScalarId>& xs, const std::vector<double>& ws);

  double value(ScalarId s) const;
  const Mat3& value(MatId m) const;
  Homography homography(MatId m) const;

  // Backpropagates d(root)/d(everything); seeds root with 1.
  void backward(ScalarId root);

  // Gradient with respect to the raw offsets of a DLT leaf (valid after
  // backward()).
  const OffsetMat& offsets_grad(MatId dlt_node) const;

 private:
  enum class MatOp { Dlt, Const, Mul, Normalized };
  struct MatNode {
    MatOp op;
    Mat3 val;
    Mat3 grad = Mat3::Zero();
    int a = -1, b = -1;
    // Dlt payload
    DltCache cache;
    double offset_scale = 1.0;
    OffsetMat offgrad = OffsetMat::Zero();
  };

  enum class ScalarOp { Const, L1Diff, Photometric, WeightedSum };
  struct ScalarNode {
    ScalarOp op;
    double val = 0.0;
    double grad = 0.0;
    int a = -1, b = -1;
    std::vector<int> terms;
    std::vector<double> weights;
    // Photometric payload
    const Image* ref = nullptr;
    const Image* tgt = nullptr;
    PatchCorners region;
    int ref_u0 = 0, ref_v0 = 0;
    int valid = 0;
    bool low_valid = false;
  };

  int push_mat(MatNode n) { mats_.push_back(std::move(n)); return static_cast<int>(mats_.size()) - 1; }
  int push_scalar(ScalarNode n) { scalars_.push_back(std::move(n)); return static_cast<int>(scalars_.size()) - 1; }

  std::vector<MatNode> mats_;
  std::vector<ScalarNode> scalars_;
};

}  // namespace skyreg::diff
