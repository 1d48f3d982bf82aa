#pragma once

#include <string>
#include <vector>

#include "skyreg/network.hpp"

namespace skyreg {

// Single-file checkpoint: format version, ModelConfig, named tensors and
// the step counter; optionally the full training state (Adam moments and
// the iteration index) for bit-exact resumption.
struct Checkpoint {
  ModelParams params;
  bool has_train_state = false;
  std::vector<Eigen::MatrixXd> adam_m;  // aligned with tensor_specs order
  std::vector<Eigen::MatrixXd> adam_v;
  int64_t iteration = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Throws CorruptCheckpoint on truncated or malformed files.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace skyreg
