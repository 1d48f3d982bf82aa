#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "skyreg/baselines.hpp"
#include "skyreg/checkpoint.hpp"
#include "skyreg/diagnostics.hpp"
#include "skyreg/errors.hpp"
#include "skyreg/evaluation.hpp"
#include "skyreg/imageio.hpp"
#include "skyreg/ingest.hpp"
#include "skyreg/stitcher.hpp"
#include "skyreg/synthetic.hpp"
#include "skyreg/trainer.hpp"

namespace fs = std::filesystem;
using namespace skyreg;

namespace {

uint64_t env_seed_fallback() {
  if (const char* s = std::getenv("SKYREG_SEED")) {
    return std::strtoull(s, nullptr, 10);
  }
  return 0;
}

std::vector<Homography> estimate_chain(const std::string& estimator,
                                       const std::string& checkpoint_path,
                                       const FrameSequence& seq, uint64_t seed) {
  const int n = static_cast<int>(seq.frames.size());
  std::vector<Homography> chain;
  if (estimator == "identity") {
    for (int t = 0; t + 1 < n; ++t) {
      chain.push_back(identity_estimate(seq.frames[t], seq.frames[t + 1]));
    }
  } else if (estimator == "orb_ransac") {
    RansacConfig cfg;
    cfg.seed = seed;
    for (int t = 0; t + 1 < n; ++t) {
      chain.push_back(orb_ransac_estimate(seq.frames[t], seq.frames[t + 1], cfg));
    }
  } else if (estimator == "model") {
    if (checkpoint_path.empty()) {
      throw Error("the model estimator needs --checkpoint");
    }
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    chain = estimate_video_chain(ckpt.params, seq);
  } else {
    throw Error("unknown estimator: " + estimator);
  }
  return chain;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::optional<uint64_t> seed,
              std::optional<int64_t> iters, std::optional<int> batch,
              const std::string& variant, const std::string& finetune,
              const std::string& resume_path) {
  TrainConfig cfg;
  if (!config_path.empty()) {
    cfg = TrainConfig::from_file(config_path, variant);
  } else {
    cfg = TrainConfig::defaults_for(
        variant.empty() ? TrainVariant::Base : train_variant_from_name(variant));
  }
  if (seed) cfg.seed = *seed;
  if (iters) cfg.total_iters = *iters;
  if (batch) cfg.batch_size = *batch;
  if (!finetune.empty()) cfg.finetune_from = finetune;
  if (!resume_path.empty()) cfg.resume_from = resume_path;

  const TrainResult res = train(cfg, data_dir, out_dir);
  std::cout << "final checkpoint: " << res.final_checkpoint << "\n";
  std::cout << "final " << LossReport::csv_header() << "\n";
  std::cout << "      " << res.last_report.csv_row(cfg.total_iters - 1) << "\n";
  return 0;
}

int run_eval(const std::string& estimator, const std::string& checkpoint_path,
             const std::string& data_dir, const std::string& annotations_path,
             const std::string& out_dir, uint64_t seed) {
  const auto annotations = parse_annotations(annotations_path);
  const auto videos = list_videos(data_dir, "test");

  PredictionTable predictions;
  for (const auto& ann : annotations) {
    std::string video_path;
    for (const auto& v : videos) {
      if (fs::path(v).filename().string() == ann.video_id) {
        video_path = v;
        break;
      }
    }
    if (video_path.empty()) {
      throw MissingPrediction("no test video named " + ann.video_id + " under " + data_dir);
    }
    const FrameSequence seq = load_video(video_path);
    const auto chain = estimate_chain(estimator, checkpoint_path, seq, seed);
    for (auto& [key, pts] : predict_intervals(ann, chain)) {
      predictions[key] = std::move(pts);
    }
  }

  const MaceResult result = compute_mace(predictions, annotations);
  fs::create_directories(out_dir);
  const std::string csv = (fs::path(out_dir) / "mace.csv").string();
  write_mace_csv(result, csv);
  for (const auto& [video, mace] : result.per_video) {
    std::printf("%-24s MACE %.4f\n", video.c_str(), mace);
  }
  std::printf("%-24s MACE %.4f  (%d videos, %d intervals) -> %s\n", "OVERALL",
              result.overall, result.n_videos, result.n_intervals, csv.c_str());
  return 0;
}

int run_stitch(const std::string& estimator, const std::string& checkpoint_path,
               const std::string& video_path, const std::string& out_png, int reference,
               int max_frames, uint64_t seed) {
  FrameSequence seq = load_video(video_path);
  if (max_frames > 1 && static_cast<int>(seq.frames.size()) > max_frames) {
    seq.frames.resize(max_frames);
  }
  const auto chain = estimate_chain(estimator, checkpoint_path, seq, seed);
  const StitchResult res = stitch(seq, chain, reference);
  write_image_gray8(res.canvas, out_png);
  std::printf("canvas %dx%d, reference offset (%.1f, %.1f) -> %s\n", res.canvas.width(),
              res.canvas.height(), res.offset.x(), res.offset.y(), out_png.c_str());
  return 0;
}

int run_viz_activations(const std::string& checkpoint_path, const std::string& video_path,
                        const std::string& layer, const std::string& out_dir, int frame) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const FrameSequence seq = load_video(video_path);
  if (frame < 0 || frame + 1 >= static_cast<int>(seq.frames.size())) {
    throw FrameRangeError("frame " + std::to_string(frame) + " has no successor");
  }
  const auto [ulo, uhi] = patch_placement_range(seq.width(), kParentPatchSize);
  const auto [vlo, vhi] = patch_placement_range(seq.height(), kParentPatchSize);
  PatchSpec spec;
  spec.top_left_u = (ulo + uhi) / 2;
  spec.top_left_v = (vlo + vhi) / 2;
  spec.size = kParentPatchSize;
  const Image ref = extract_patch(seq.frames[frame], spec);
  const Image tgt = extract_patch(seq.frames[frame + 1], spec);

  const Image map = activation_map(ckpt.params, ref, tgt, layer);
  fs::create_directories(out_dir);
  const std::string overlay = (fs::path(out_dir) / (layer + "_overlay.png")).string();
  const std::string raw = (fs::path(out_dir) / (layer + "_map.png")).string();
  write_heatmap_overlay(ref, map, 0.5, overlay);
  write_image_gray8(map, raw);
  std::printf("wrote %s and %s\n", overlay.c_str(), raw.c_str());
  return 0;
}

int run_viz_loss_hist(const std::string& checkpoint_path, const std::string& video_path,
                      int frame, int samples, int bins, const std::string& out_csv,
                      uint64_t seed) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const FrameSequence seq = load_video(video_path);
  if (frame < 0 || frame + 1 >= static_cast<int>(seq.frames.size())) {
    throw FrameRangeError("frame " + std::to_string(frame) + " has no successor");
  }
  const Histogram hist = loss_histogram(ckpt.params, seq.frames[frame],
                                        seq.frames[frame + 1], samples, bins, seed);
  write_histogram_csv(hist, out_csv);
  std::printf("wrote %s\n", out_csv.c_str());
  return 0;
}

int run_synth(const std::string& out_root, const std::string& split, const std::string& id,
              int length, double dx, double dy, double rot, double scale, double noise,
              uint64_t seed, const std::string& texture_path, int landmarks) {
  SyntheticSpec spec;
  spec.texture = texture_path.empty() ? default_texture(1600, 1000, seed ^ 0x7E57ULL)
                                      : read_image_gray(texture_path);
  spec.length = length;
  spec.program = {MotionStep{dx, dy, rot, scale}};
  spec.noise_sigma = noise;
  spec.seed = seed;
  spec.video_id = id;
  spec.landmark_count = landmarks;
  const SyntheticClip clip = generate(spec);
  write_dataset(clip, out_root, split);
  std::printf("wrote %d frames under %s/%s/%s (+ truth and annotations)\n", length,
              out_root.c_str(), split.c_str(), id.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skyreg: unsupervised sequential homography estimation for aerial video"};
  app.require_subcommand(1);
  app.footer("Seeds default to the SKYREG_SEED environment variable (then 0).\n"
             "Precedence for train settings: variant defaults < config file < flags.");

  uint64_t seed = env_seed_fallback();

  // train
  auto* train_cmd = app.add_subcommand("train", "Run a training schedule");
  std::string tr_config, tr_data, tr_out, tr_variant, tr_finetune, tr_resume;
  std::optional<uint64_t> tr_seed;
  std::optional<int64_t> tr_iters;
  std::optional<int> tr_batch;
  train_cmd->add_option("--config", tr_config, "key = value training config");
  train_cmd->add_option("--data", tr_data, "dataset root (train/ inside)")->required();
  train_cmd->add_option("--out", tr_out, "output directory")->required();
  train_cmd->add_option("--variant", tr_variant,
                        "BASE, REG-P, REG-S, REG-T, REG-ALL, LSTM, LSTM-REG-ALL");
  train_cmd->add_option("--seed", tr_seed, "rng seed");
  train_cmd->add_option("--iters", tr_iters, "total iterations");
  train_cmd->add_option("--batch-size", tr_batch, "batch size");
  train_cmd->add_option("--finetune-from", tr_finetune, "checkpoint to finetune from");
  train_cmd->add_option("--resume-from", tr_resume, "checkpoint to resume from");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "MACE evaluation on annotated test videos");
  std::string ev_ckpt, ev_estimator = "model", ev_data, ev_ann, ev_out;
  eval_cmd->add_option("--checkpoint", ev_ckpt, "model checkpoint");
  eval_cmd->add_option("--estimator", ev_estimator, "model | identity | orb_ransac")
      ->check(CLI::IsMember({"model", "identity", "orb_ransac"}));
  eval_cmd->add_option("--data", ev_data, "dataset root (test/ inside)")->required();
  eval_cmd->add_option("--annotations", ev_ann, "landmark csv")->required();
  eval_cmd->add_option("--out", ev_out, "output directory")->required();
  eval_cmd->add_option("--seed", seed, "rng seed");

  // stitch
  auto* stitch_cmd = app.add_subcommand("stitch", "Stitch a video into a panorama");
  std::string st_ckpt, st_estimator = "model", st_video, st_out;
  int st_reference = 0, st_max_frames = 0;
  stitch_cmd->add_option("--checkpoint", st_ckpt, "model checkpoint");
  stitch_cmd->add_option("--estimator", st_estimator, "model | identity | orb_ransac")
      ->check(CLI::IsMember({"model", "identity", "orb_ransac"}));
  stitch_cmd->add_option("--video", st_video, "video file or frame directory")->required();
  stitch_cmd->add_option("--out", st_out, "output png")->required();
  stitch_cmd->add_option("--reference", st_reference, "reference frame index");
  stitch_cmd->add_option("--max-frames", st_max_frames, "limit the number of frames");
  stitch_cmd->add_option("--seed", seed, "rng seed");

  // viz-activations
  auto* viz_cmd = app.add_subcommand("viz-activations", "Gradient-weighted activation maps");
  std::string va_ckpt, va_video, va_layer = "conv2", va_out;
  int va_frame = 0;
  viz_cmd->add_option("--checkpoint", va_ckpt, "model checkpoint")->required();
  viz_cmd->add_option("--video", va_video, "video file or frame directory")->required();
  viz_cmd->add_option("--layer", va_layer, "conv1..conv8");
  viz_cmd->add_option("--out", va_out, "output directory")->required();
  viz_cmd->add_option("--frame", va_frame, "reference frame index");

  // viz-loss-hist
  auto* hist_cmd = app.add_subcommand("viz-loss-hist", "Photometric loss histogram");
  std::string lh_ckpt, lh_video, lh_out;
  int lh_frame = 0, lh_samples = 1000, lh_bins = 50;
  hist_cmd->add_option("--checkpoint", lh_ckpt, "model checkpoint")->required();
  hist_cmd->add_option("--video", lh_video, "video file or frame directory")->required();
  hist_cmd->add_option("--frame", lh_frame, "reference frame index");
  hist_cmd->add_option("--samples", lh_samples, "number of patch pairs");
  hist_cmd->add_option("--bins", lh_bins, "histogram bins");
  hist_cmd->add_option("--out", lh_out, "output csv")->required();
  hist_cmd->add_option("--seed", seed, "rng seed");

  // flops
  auto* flops_cmd = app.add_subcommand("flops", "Forward cost of one patch-pair inference");
  std::string fl_variant = "BASE";
  flops_cmd->add_option("--variant", fl_variant, "BASE | LSTM")
      ->check(CLI::IsMember({"BASE", "LSTM"}));

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic ground-truth clip");
  std::string sy_out, sy_split = "train", sy_id = "synthetic", sy_texture;
  int sy_length = 64, sy_landmarks = 6;
  double sy_dx = 1.0, sy_dy = 0.0, sy_rot = 0.0, sy_scale = 1.0, sy_noise = 0.01;
  synth_cmd->add_option("--out", sy_out, "dataset root")->required();
  synth_cmd->add_option("--split", sy_split, "train | test");
  synth_cmd->add_option("--id", sy_id, "video id");
  synth_cmd->add_option("--length", sy_length, "frame count");
  synth_cmd->add_option("--dx", sy_dx, "translation px/frame");
  synth_cmd->add_option("--dy", sy_dy, "translation px/frame");
  synth_cmd->add_option("--rot", sy_rot, "rotation deg/frame");
  synth_cmd->add_option("--scale", sy_scale, "scale factor/frame");
  synth_cmd->add_option("--noise", sy_noise, "intensity noise sigma");
  synth_cmd->add_option("--seed", seed, "rng seed");
  synth_cmd->add_option("--texture", sy_texture, "texture image (procedural if omitted)");
  synth_cmd->add_option("--landmarks", sy_landmarks, "landmark count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    if (train_cmd->parsed()) {
      return run_train(tr_config, tr_data, tr_out, tr_seed, tr_iters, tr_batch, tr_variant,
                       tr_finetune, tr_resume);
    }
    if (eval_cmd->parsed()) {
      return run_eval(ev_estimator, ev_ckpt, ev_data, ev_ann, ev_out, seed);
    }
    if (stitch_cmd->parsed()) {
      return run_stitch(st_estimator, st_ckpt, st_video, st_out, st_reference,
                        st_max_frames, seed);
    }
    if (viz_cmd->parsed()) {
      return run_viz_activations(va_ckpt, va_video, va_layer, va_out, va_frame);
    }
    if (hist_cmd->parsed()) {
      return run_viz_loss_hist(lh_ckpt, lh_video, lh_frame, lh_samples, lh_bins, lh_out,
                               seed);
    }
    if (flops_cmd->parsed()) {
      ModelConfig cfg;
      cfg.variant = variant_from_name(fl_variant);
      const int64_t flops = count_flops(cfg);
      std::printf("%lld (%.3f GFLOPs)\n", static_cast<long long>(flops), flops / 1e9);
      return 0;
    }
    if (synth_cmd->parsed()) {
      return run_synth(sy_out, sy_split, sy_id, sy_length, sy_dx, sy_dy, sy_rot, sy_scale,
                       sy_noise, seed, sy_texture, sy_landmarks);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
