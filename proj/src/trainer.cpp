#include "skyreg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "skyreg/errors.hpp"
#include "skyreg/ingest.hpp"
#include "skyreg/rng.hpp"

namespace fs = std::filesystem;

namespace skyreg {

std::string train_variant_name(TrainVariant v) {
  switch (v) {
    case TrainVariant::Base: return "BASE";
    case TrainVariant::RegP: return "REG-P";
    case TrainVariant::RegS: return "REG-S";
    case TrainVariant::RegT: return "REG-T";
    case TrainVariant::RegAll: return "REG-ALL";
    case TrainVariant::Lstm: return "LSTM";
    case TrainVariant::LstmRegAll: return "LSTM-REG-ALL";
  }
  return "BASE";
}

TrainVariant train_variant_from_name(const std::string& name) {
  if (name == "BASE") return TrainVariant::Base;
  if (name == "REG-P") return TrainVariant::RegP;
  if (name == "REG-S") return TrainVariant::RegS;
  if (name == "REG-T") return TrainVariant::RegT;
  if (name == "REG-ALL") return TrainVariant::RegAll;
  if (name == "LSTM") return TrainVariant::Lstm;
  if (name == "LSTM-REG-ALL") return TrainVariant::LstmRegAll;
  throw Error("unknown training variant: " + name);
}

EpisodeLossOptions TrainConfig::regularizers() const {
  EpisodeLossOptions o;
  switch (variant) {
    case TrainVariant::Base:
    case TrainVariant::Lstm:
      break;
    case TrainVariant::RegP:
      o.use_p = true;
      break;
    case TrainVariant::RegS:
      o.use_s = true;
      break;
    case TrainVariant::RegT:
      o.use_t1 = o.use_t2 = true;
      break;
    case TrainVariant::RegAll:
    case TrainVariant::LstmRegAll:
      o.use_p = o.use_s = o.use_t1 = o.use_t2 = true;
      break;
  }
  return o;
}

Variant TrainConfig::network_variant() const {
  return (variant == TrainVariant::Lstm || variant == TrainVariant::LstmRegAll)
             ? Variant::Lstm
             : Variant::Base;
}

bool TrainConfig::needs_finetune() const { return variant != TrainVariant::Base; }

TrainConfig TrainConfig::defaults_for(TrainVariant v) {
  TrainConfig c;
  c.variant = v;
  switch (v) {
    case TrainVariant::Base:
      c.total_iters = 300000;
      c.batch_size = 64;
      c.lr_decay_every = 100000;
      c.episode_len = 2;
      break;
    case TrainVariant::RegP:
    case TrainVariant::RegS:
    case TrainVariant::RegT:
    case TrainVariant::RegAll:
      c.total_iters = 90000;
      c.batch_size = 32;
      c.lr_decay_every = 30000;
      c.episode_len = 3;
      break;
    case TrainVariant::Lstm:
    case TrainVariant::LstmRegAll:
      c.total_iters = 90000;
      c.batch_size = 8;
      c.lr_decay_every = 30000;
      c.episode_len = kDefaultEpisodeLen;
      break;
  }
  return c;
}

namespace {

void apply_kv(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "variant") c.variant = train_variant_from_name(value);
  else if (key == "total_iters") c.total_iters = std::stoll(value);
  else if (key == "batch_size") c.batch_size = std::stoi(value);
  else if (key == "lr_initial") c.lr_initial = std::stod(value);
  else if (key == "lr_decay_factor") c.lr_decay_factor = std::stod(value);
  else if (key == "lr_decay_every") c.lr_decay_every = std::stoll(value);
  else if (key == "seed") c.seed = std::stoull(value);
  else if (key == "finetune_from") c.finetune_from = value;
  else if (key == "resume_from") c.resume_from = value;
  else if (key == "episode_len") c.episode_len = std::stoi(value);
  else if (key == "n_parents") c.n_parents = std::stoi(value);
  else if (key == "checkpoint_every") c.checkpoint_every = std::stoll(value);
  else if (key == "grad_clip_norm") c.grad_clip_norm = std::stod(value);
  else if (key == "adam_beta1") c.adam_beta1 = std::stod(value);
  else if (key == "adam_beta2") c.adam_beta2 = std::stod(value);
  else if (key == "adam_eps") c.adam_eps = std::stod(value);
  else throw Error("unknown config key: " + key);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

TrainConfig TrainConfig::from_file(const std::string& path,
                                   const std::string& variant_override) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  // First pass: find the variant so defaults are applied first.
  std::vector<std::pair<std::string, std::string>> kvs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw Error(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    kvs.emplace_back(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  TrainVariant v = TrainVariant::Base;
  for (const auto& [k, val] : kvs) {
    if (k == "variant") v = train_variant_from_name(val);
  }
  if (!variant_override.empty()) v = train_variant_from_name(variant_override);
  TrainConfig c = defaults_for(v);
  for (const auto& [k, val] : kvs) {
    if (k != "variant") apply_kv(c, k, val);
  }
  c.variant = v;
  return c;
}

void TrainConfig::write_resolved(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  out << "variant = " << train_variant_name(variant) << "\n"
      << "total_iters = " << total_iters << "\n"
      << "batch_size = " << batch_size << "\n"
      << "lr_initial = " << lr_initial << "\n"
      << "lr_decay_factor = " << lr_decay_factor << "\n"
      << "lr_decay_every = " << lr_decay_every << "\n"
      << "seed = " << seed << "\n"
      << "finetune_from = " << finetune_from << "\n"
      << "resume_from = " << resume_from << "\n"
      << "episode_len = " << episode_len << "\n"
      << "n_parents = " << n_parents << "\n"
      << "checkpoint_every = " << checkpoint_every << "\n"
      << "grad_clip_norm = " << grad_clip_norm << "\n"
      << "adam_beta1 = " << adam_beta1 << "\n"
      << "adam_beta2 = " << adam_beta2 << "\n"
      << "adam_eps = " << adam_eps << "\n";
}

double lr_at(const TrainConfig& config, int64_t iteration) {
  const int64_t decays = iteration / config.lr_decay_every;
  return config.lr_initial * std::pow(config.lr_decay_factor, static_cast<double>(decays));
}

TrainState resume(const std::string& checkpoint_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (!ckpt.has_train_state) {
    throw CheckpointIncompatible(checkpoint_path + " carries no training state");
  }
  TrainState st;
  st.params = std::move(ckpt.params);
  st.adam_m = std::move(ckpt.adam_m);
  st.adam_v = std::move(ckpt.adam_v);
  st.iteration = ckpt.iteration;
  return st;
}

namespace {

// Copies tensors by name from a checkpoint into freshly initialized
// params; tensors absent from the source (the LSTM cell when finetuning
// from BASE) keep their initialization.
ModelParams load_finetune_params(const std::string& path, const ModelConfig& target,
                                 uint64_t seed) {
  const Checkpoint ckpt = load_checkpoint(path);
  const ModelConfig& src_cfg = ckpt.params.config;
  if (src_cfg.input_size != target.input_size || src_cfg.hidden_dim != target.hidden_dim ||
      src_cfg.offset_dim != target.offset_dim ||
      src_cfg.center_inputs != target.center_inputs) {
    throw CheckpointIncompatible("finetune source config does not match target");
  }
  ModelParams params = init_params(target, seed);
  const auto src_specs = tensor_specs(src_cfg);
  const auto dst_specs = tensor_specs(target);
  for (size_t d = 0; d < dst_specs.size(); ++d) {
    for (size_t s = 0; s < src_specs.size(); ++s) {
      if (src_specs[s].name != dst_specs[d].name) continue;
      if (ckpt.params.tensors[s].rows() != params.tensors[d].rows() ||
          ckpt.params.tensors[s].cols() != params.tensors[d].cols()) {
        throw CheckpointIncompatible("tensor shape mismatch for " + dst_specs[d].name);
      }
      params.tensors[d] = ckpt.params.tensors[s];
      break;
    }
  }
  params.step_counter = 0;
  return params;
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, std::vector<FrameSequence> dataset)
    : config_(config), dataset_(std::move(dataset)) {
  for (size_t i = 0; i < dataset_.size(); ++i) {
    if (static_cast<int>(dataset_[i].frames.size()) >= config_.episode_len) {
      eligible_.push_back(static_cast<int>(i));
    }
  }
  if (eligible_.empty()) {
    throw DatasetEmpty("no training video long enough for one episode (K = " +
                       std::to_string(config_.episode_len) + ")");
  }

  ModelConfig mc;
  mc.variant = config_.network_variant();

  if (!config_.resume_from.empty()) {
    state_ = resume(config_.resume_from);
    if (!(state_.params.config == mc)) {
      throw CheckpointIncompatible("resume checkpoint was trained with another config");
    }
    return;
  }

  if (config_.needs_finetune() && config_.finetune_from.empty()) {
    throw CheckpointIncompatible(train_variant_name(config_.variant) +
                                 " requires finetune_from");
  }
  if (!config_.finetune_from.empty()) {
    state_.params = load_finetune_params(config_.finetune_from, mc, config_.seed);
  } else {
    state_.params = init_params(mc, config_.seed);
  }
  const ModelParams z = zeros_like(state_.params);
  state_.adam_m = z.tensors;
  state_.adam_v = z.tensors;
  state_.iteration = 0;
}

std::vector<EpisodeDraw> Trainer::draw_batch(int64_t iteration) const {
  // BASE/REG batch sizes count parent patch-pair samples; LSTM counts
  // episodes.
  int n_episodes;
  if (config_.network_variant() == Variant::Lstm) {
    n_episodes = config_.batch_size;
  } else if (config_.variant == TrainVariant::Base) {
    n_episodes = config_.batch_size;  // one parent per episode
  } else {
    n_episodes = (config_.batch_size + config_.n_parents - 1) / config_.n_parents;
  }

  std::vector<EpisodeDraw> batch;
  batch.reserve(n_episodes);
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng(hash_combine(hash_combine(config_.seed, static_cast<uint64_t>(iteration)),
                         static_cast<uint64_t>(e) ^ 0xE0150DE5ULL));
    EpisodeDraw d;
    d.video_index = eligible_[rng.next_below(eligible_.size())];
    const int max_start =
        static_cast<int>(dataset_[d.video_index].frames.size()) - config_.episode_len;
    d.episode_start = static_cast<int>(rng.next_below(max_start + 1));
    d.patch_seed = rng.next_u64();
    batch.push_back(d);
  }
  return batch;
}

EpisodeBatch Trainer::make_episode(const EpisodeDraw& draw) const {
  const int parents =
      config_.variant == TrainVariant::Base ? 1 : config_.n_parents;
  EpisodeBatch batch =
      sample_patch_streams(dataset_[draw.video_index], draw.episode_start, parents,
                           draw.patch_seed, config_.episode_len);
  if (!config_.regularizers().use_s) {
    // Child streams only feed the scale regularizer; drop them otherwise.
    std::erase_if(batch.patch_streams,
                  [](const PatchSpec& s) { return s.scale_level == ScaleLevel::Child; });
  }
  return batch;
}

StepResult Trainer::step(int64_t iteration, const std::vector<EpisodeDraw>& batch) {
  const EpisodeLossOptions regs = config_.regularizers();
  const int k = config_.episode_len;

  // Term counts are structural, so the Eq.-6 weights are known before any
  // forward pass and each episode can run and backpropagate on its own.
  std::vector<EpisodeBatch> episodes;
  episodes.reserve(batch.size());
  int n_photo = 0, n_p = 0, n_s = 0, n_t1 = 0, n_t2 = 0;
  for (const auto& draw : batch) {
    EpisodeBatch eb = make_episode(draw);
    const int streams = static_cast<int>(eb.patch_streams.size());
    int parents = 0;
    for (const auto& s : eb.patch_streams) {
      if (s.scale_level == ScaleLevel::Parent) ++parents;
    }
    n_photo += streams * (k - 1);
    if (regs.use_p) n_p += (k - 1) * parents * (parents - 1) / 2;
    if (regs.use_s) n_s += parents * 4 * (k - 1);
    if (regs.use_t1 && k >= 3) n_t1 += streams * (k - 2);
    if (regs.use_t2 && k >= 3) n_t2 += streams * (k - 2) * (k - 1) / 2;
    episodes.push_back(std::move(eb));
  }
  const LossWeights w = LossWeights::from_counts(n_p, n_s, n_t1, n_t2);

  ModelParams grads = zeros_like(state_.params);
  LossReport report;
  double valid_sum = 0.0;
  int valid_stats = 0;

  for (size_t e = 0; e < episodes.size(); ++e) {
    const FrameSequence& seq = dataset_[batch[e].video_index];
    EpisodeForward fwd = run_episode(state_.params, seq, episodes[e], /*keep_caches=*/true);

    diff::Graph g;
    EpisodeTerms terms = build_episode_terms(g, seq, fwd, regs);

    std::vector<diff::Graph::ScalarId> parts;
    std::vector<double> coeffs;
    if (terms.photo_sum) {
      parts.push_back(*terms.photo_sum);
      coeffs.push_back(1.0 / n_photo);
      report.photometric += g.value(*terms.photo_sum) / n_photo;
    }
    if (terms.rp) {
      parts.push_back(*terms.rp);
      coeffs.push_back(w.lambda_p);
      report.reg_p += g.value(*terms.rp);
    }
    if (terms.rs) {
      parts.push_back(*terms.rs);
      coeffs.push_back(w.lambda_s);
      report.reg_s += g.value(*terms.rs);
    }
    if (terms.rt1) {
      parts.push_back(*terms.rt1);
      coeffs.push_back(w.lambda_t1);
      report.reg_t1 += g.value(*terms.rt1);
    }
    if (terms.rt2) {
      parts.push_back(*terms.rt2);
      coeffs.push_back(w.lambda_t2);
      report.reg_t2 += g.value(*terms.rt2);
    }
    const auto total = g.weighted_sum(parts, coeffs);
    report.total += g.value(total);
    valid_sum += terms.valid_fraction_sum;
    valid_stats += terms.n_valid_stats;

    g.backward(total);
    std::vector<std::vector<OffsetMat>> doffs(fwd.steps.size());
    for (size_t s = 0; s < fwd.steps.size(); ++s) {
      doffs[s].reserve(fwd.steps[s].size());
      for (size_t t = 0; t < fwd.steps[s].size(); ++t) {
        doffs[s].push_back(g.offsets_grad(terms.hnodes[s][t]));
      }
    }
    episode_backward(state_.params, fwd, doffs, &grads);
  }
  report.valid_pixel_fraction = valid_stats > 0 ? valid_sum / valid_stats : 1.0;

  // Global gradient-norm clip.
  double sq = 0.0;
  for (const auto& t : grads.tensors) sq += t.squaredNorm();
  const double norm = std::sqrt(sq);
  const double clip_scale =
      (config_.grad_clip_norm > 0.0 && norm > config_.grad_clip_norm)
          ? config_.grad_clip_norm / norm
          : 1.0;

  // Adam with bias correction.
  const double lr = lr_at(config_, iteration);
  const double t_adam = static_cast<double>(state_.params.step_counter + 1);
  const double bc1 = 1.0 - std::pow(config_.adam_beta1, t_adam);
  const double bc2 = 1.0 - std::pow(config_.adam_beta2, t_adam);
  for (size_t i = 0; i < grads.tensors.size(); ++i) {
    const Eigen::MatrixXd g = grads.tensors[i] * clip_scale;
    auto& m = state_.adam_m[i];
    auto& v = state_.adam_v[i];
    m = config_.adam_beta1 * m + (1.0 - config_.adam_beta1) * g;
    v = config_.adam_beta2 * v + (1.0 - config_.adam_beta2) * g.cwiseProduct(g);
    state_.params.tensors[i].array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config_.adam_eps);
  }
  state_.params.step_counter += 1;

  StepResult res;
  res.report = report;
  res.grad_norm = norm;
  return res;
}

LossReport Trainer::evaluate(const std::vector<EpisodeDraw>& batch) {
  const EpisodeLossOptions regs = config_.regularizers();
  std::vector<EpisodeTerms> all_terms;
  diff::Graph g;
  std::vector<EpisodeBatch> episodes;
  for (const auto& draw : batch) episodes.push_back(make_episode(draw));
  for (size_t e = 0; e < episodes.size(); ++e) {
    const FrameSequence& seq = dataset_[batch[e].video_index];
    const EpisodeForward fwd =
        run_episode(state_.params, seq, episodes[e], /*keep_caches=*/false);
    all_terms.push_back(build_episode_terms(g, seq, fwd, regs));
  }
  return combine_batch_terms(g, all_terms).report;
}

TrainResult train(const TrainConfig& config, const std::string& dataset_root,
                  const std::string& out_dir) {
  std::vector<FrameSequence> dataset;
  for (const auto& path : list_videos(dataset_root, "train")) {
    try {
      dataset.push_back(load_video(path));
    } catch (const EmptyVideo&) {
      std::cerr << "skipping " << path << ": too short\n";
    }
  }
  if (dataset.empty()) throw DatasetEmpty("no decodable training videos under " + dataset_root);

  fs::create_directories(fs::path(out_dir) / "checkpoints");
  config.write_resolved((fs::path(out_dir) / "config.resolved").string());

  Trainer trainer(config, std::move(dataset));
  const bool resuming = trainer.state().iteration > 0;
  std::ofstream csv((fs::path(out_dir) / "loss.csv").string(),
                    resuming ? std::ios::app : std::ios::trunc);
  if (!resuming) csv << LossReport::csv_header() << "\n";

  const auto save = [&](int64_t iteration) {
    Checkpoint ckpt;
    ckpt.params = trainer.params();
    ckpt.has_train_state = true;
    ckpt.adam_m = trainer.state().adam_m;
    ckpt.adam_v = trainer.state().adam_v;
    ckpt.iteration = iteration;
    const std::string path =
        (fs::path(out_dir) / "checkpoints" / ("step_" + std::to_string(iteration) + ".ckpt"))
            .string();
    save_checkpoint(ckpt, path);
    return path;
  };

  TrainResult result;
  for (int64_t it = trainer.state().iteration; it < config.total_iters; ++it) {
    const auto batch = trainer.draw_batch(it);
    const StepResult sr = trainer.step(it, batch);
    csv << sr.report.csv_row(it) << "\n";
    csv.flush();
    result.last_report = sr.report;
    trainer.state().iteration = it + 1;
    if (config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 &&
        it + 1 < config.total_iters) {
      save(it + 1);
    }
  }
  result.final_checkpoint = save(config.total_iters);
  return result;
}

}  // namespace skyreg
