#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skyreg/checkpoint.hpp"
#include "skyreg/losses.hpp"
#include "skyreg/network.hpp"

namespace skyreg {

enum class TrainVariant { Base, RegP, RegS, RegT, RegAll, Lstm, LstmRegAll };

std::string train_variant_name(TrainVariant v);
TrainVariant train_variant_from_name(const std::string& name);

struct TrainConfig {
  TrainVariant variant = TrainVariant::Base;
  int64_t total_iters = 300000;
  int batch_size = 64;        // parent patch-pair samples (BASE/REG) or episodes (LSTM)
  double lr_initial = 0.001;
  double lr_decay_factor = 0.1;
  int64_t lr_decay_every = 100000;
  uint64_t seed = 0;
  std::string finetune_from;  // required for REG-* and LSTM-* variants
  std::string resume_from;    // full training state to continue from
  int episode_len = 2;        // 2 (BASE), 3 (REG-*), 16 (LSTM-*)
  int n_parents = kDefaultParentsPerEpisode;
  int64_t checkpoint_every = 5000;
  double grad_clip_norm = 10.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  EpisodeLossOptions regularizers() const;
  Variant network_variant() const;
  bool needs_finetune() const;

  // Paper schedules: BASE 300k iters / batch 64 / decay every 100k; REG-*
  // 90k / 32 / 30k; LSTM-* 90k / 8 / 30k.
  static TrainConfig defaults_for(TrainVariant v);

  // key = value pairs; unknown keys are rejected. Values not present keep
  // the variant defaults. variant_override replaces the file's variant
  // (and the defaults it implies) before the remaining keys apply.
  static TrainConfig from_file(const std::string& path,
                               const std::string& variant_override = "");
  void write_resolved(const std::string& path) const;
};

// lr_initial * decay^floor(iteration / decay_every)
double lr_at(const TrainConfig& config, int64_t iteration);

struct TrainState {
  ModelParams params;
  std::vector<Eigen::MatrixXd> adam_m;
  std::vector<Eigen::MatrixXd> adam_v;
  int64_t iteration = 0;
};

// Reconstructs a resumable state from a checkpoint that carries training
// state. Throws CorruptCheckpoint / CheckpointIncompatible.
TrainState resume(const std::string& checkpoint_path);

struct TrainResult {
  std::string final_checkpoint;
  LossReport last_report;
};

// Runs the configured variant's loop over root/train, writing
// out_dir/loss.csv, out_dir/config.resolved and
// out_dir/checkpoints/step_<N>.ckpt. Deterministic given (config, data).
TrainResult train(const TrainConfig& config, const std::string& dataset_root,
                  const std::string& out_dir);

// One optimization step on an explicit batch of (video, episode) draws;
// exposed for tests that need a frozen batch.
struct EpisodeDraw {
  int video_index = 0;
  int episode_start = 0;
  uint64_t patch_seed = 0;
};
struct StepResult {
  LossReport report;
  double grad_norm = 0.0;
};
class Trainer {
 public:
  Trainer(const TrainConfig& config, std::vector<FrameSequence> dataset);

  // Deterministic batch for an iteration index.
  std::vector<EpisodeDraw> draw_batch(int64_t iteration) const;
  StepResult step(int64_t iteration, const std::vector<EpisodeDraw>& batch);

  ModelParams& params() { return state_.params; }
  const ModelParams& params() const { return state_.params; }
  TrainState& state() { return state_; }
  const std::vector<FrameSequence>& dataset() const { return dataset_; }
  const TrainConfig& config() const { return config_; }

  // Loss evaluation without a parameter update (no gradient pass).
  LossReport evaluate(const std::vector<EpisodeDraw>& batch);

 private:
  EpisodeBatch make_episode(const EpisodeDraw& draw) const;

  TrainConfig config_;
  std::vector<FrameSequence> dataset_;
  std::vector<int> eligible_;  // indices of videos long enough for an episode
  TrainState state_;
};

}  // namespace skyreg
