#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skyreg/geometry.hpp"
#include "skyreg/image.hpp"
#include "skyreg/ingest.hpp"

namespace skyreg {

enum class Variant { Base, Lstm };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::Base;
  int input_size = kNetworkInputSize;
  int hidden_dim = 1024;
  int offset_dim = 8;
  bool center_inputs = true;  // subtract each patch's mean before stacking

  bool operator==(const ModelConfig&) const = default;
};

// One row of the fixed convolutional plan, exposed for conformance checks.
struct PlanEntry {
  std::string name;   // conv1..conv8, pool1..pool3, fc1, lstm, head
  std::string type;   // "conv", "pool", "fc", "lstm"
  int filters = 0;    // conv output channels / fc output width
  int out_h = 0;
  int out_w = 0;
};
std::vector<PlanEntry> layer_plan(const ModelConfig& config);

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
};
std::vector<TensorSpec> tensor_specs(const ModelConfig& config);

// All learnable tensors, in the fixed tensor_specs order. Biases are
// stored as n x 1 matrices.
struct ModelParams {
  ModelConfig config;
  std::vector<Eigen::MatrixXd> tensors;
  int64_t step_counter = 0;

  Eigen::MatrixXd& named(const std::string& name);
  const Eigen::MatrixXd& named(const std::string& name) const;
};

// Zero tensors with the same shapes (gradients, optimizer moments).
ModelParams zeros_like(const ModelParams& p);

// He fan-in initialization for all weight matrices, zero biases.
// Deterministic given seed; each tensor draws from its own stream so the
// values do not depend on initialization order.
ModelParams init_params(const ModelConfig& config, uint64_t seed);

// ---- forward/backward machinery ----

// Feature maps are stored zero-padded by one pixel per side as
// (pixels x channels) matrices; the padding is an implementation detail
// of the conv kernels.
struct TrunkCache {
  Eigen::MatrixXd x0;                    // padded 2-channel stacked input
  std::array<Eigen::MatrixXd, 8> act;    // padded post-ReLU conv outputs
  std::array<Eigen::MatrixXd, 3> pooled; // padded pool outputs
  std::array<std::vector<int>, 3> argmax;
  Eigen::VectorXd flat;                  // flattened final map (fc1 input)
  Eigen::VectorXd features;              // 1024 post-ReLU
  void release();
};

// Stacks the (reference, target) patches as a 2-channel input and applies
// the Table 1 plan. Patches must be input_size x input_size.
Eigen::VectorXd extract_features(const ModelParams& params, const Image& patch_ref,
                                 const Image& patch_tgt, TrunkCache* cache = nullptr);

// Accumulates parameter gradients of the trunk given d(loss)/d(features).
// When capture_layer is in [0, 8), the gradient at that conv's post-ReLU
// feature map (padded, pixels x channels) is copied into *captured.
void trunk_backward(const ModelParams& params, const TrunkCache& cache,
                    const Eigen::VectorXd& dfeatures, ModelParams* grads,
                    int capture_layer = -1, Eigen::MatrixXd* captured = nullptr);

// Interior (side*side pixels x channels) of a padded feature map.
Eigen::MatrixXd map_interior(const Eigen::MatrixXd& padded, int side);

struct RecurrentState {
  Eigen::VectorXd hidden;
  Eigen::VectorXd cell;
  static RecurrentState zeros(int dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim)};
  }
};

struct LstmCache {
  Eigen::VectorXd x, h_prev, c_prev;
  Eigen::VectorXd i, f, g, o, c, tanh_c;
};

// One recurrent integration + regression step. `state` must be present iff
// the variant is LSTM; it is advanced in place.
CornerOffsets step(const ModelParams& params, const Eigen::VectorXd& features,
                   std::optional<RecurrentState>* state, LstmCache* cache = nullptr);

struct LstmBackwardResult {
  Eigen::VectorXd dx;
  Eigen::VectorXd dh_prev;
  Eigen::VectorXd dc_prev;
};
LstmBackwardResult lstm_backward(const ModelParams& params, const LstmCache& cache,
                                 const Eigen::VectorXd& dh, const Eigen::VectorXd& dc_next,
                                 ModelParams* grads);

// d(loss)/d(head input) given d(loss)/d(offsets); accumulates head grads.
Eigen::VectorXd head_backward(const ModelParams& params, const Eigen::VectorXd& head_in,
                              const CornerOffsets& doffsets, ModelParams* grads);

// ---- episode-level forward ----

struct StreamStep {
  CornerOffsets offsets;  // raw network output, 128-pixel input units
  TrunkCache trunk;
  LstmCache lstm;
};

struct EpisodeForward {
  EpisodeBatch batch;
  // steps[s][t]: stream s, frame pair (t, t+1)
  std::vector<std::vector<StreamStep>> steps;
  std::vector<PatchCorners> corners;      // per stream, frame coordinates
  std::vector<double> offset_scale;       // 1.0 parents, 0.5 children
};

// Runs the network over every stream and frame pair of the episode,
// carrying per-stream recurrent state in time order. keep_caches retains
// the activation caches needed for episode_backward.
EpisodeForward run_episode(const ModelParams& params, const FrameSequence& seq,
                           const EpisodeBatch& batch, bool keep_caches);

// Spec surface: homography per (stream_id, t); frame-level matrices
// (child offsets are halved before the tensor DLT).
std::map<std::pair<int, int>, Homography> forward_episode(const ModelParams& params,
                                                          const FrameSequence& seq,
                                                          const EpisodeBatch& batch);

// Backpropagates per-(stream, t) offset gradients through head, LSTM (in
// reverse time order) and trunk. Releases trunk caches as it goes.
void episode_backward(const ModelParams& params, EpisodeForward& fwd,
                      const std::vector<std::vector<OffsetMat>>& doffsets,
                      ModelParams* grads);

// Per-pair homography chain over a whole sequence from a single centered
// parent patch stream. The LSTM variant walks consecutive episodes of
// episode_len frames, resetting its state at each boundary.
std::vector<Homography> estimate_video_chain(const ModelParams& params,
                                             const FrameSequence& seq,
                                             int episode_len = kDefaultEpisodeLen);

// Forward cost of one patch-pair inference, counting one fused
// multiply-add (and one bias add) as a single operation, which is the
// convention the reference constants use.
int64_t count_flops(const ModelConfig& config);

}  // namespace skyreg
