#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skyreg/diffgraph.hpp"
#include "skyreg/geometry.hpp"
#include "skyreg/image.hpp"
#include "skyreg/ingest.hpp"
#include "skyreg/network.hpp"

namespace skyreg {

// Elements of a 3x3 homography matrix; the K of the weighting rule.
constexpr int kHomographyElementCount = 9;
constexpr double kMinValidFraction = 0.25;

// Weighting rule: lambda_p = lambda_s = lambda_t1 = 1/(9 N) and
// lambda_t2 = 1/N, with N the number of summands of the respective
// regularizer in the current batch. Terms absent from the batch get
// weight 0.
struct LossWeights {
  double lambda_p = 0.0;
  double lambda_s = 0.0;
  double lambda_t1 = 0.0;
  double lambda_t2 = 0.0;

  static LossWeights from_counts(int n_p, int n_s, int n_t1, int n_t2);
};

struct LossReport {
  double photometric = 0.0;  // mean over the batch's patch-pair terms
  double reg_p = 0.0;        // unweighted regularizer sums
  double reg_s = 0.0;
  double reg_t1 = 0.0;
  double reg_t2 = 0.0;
  double total = 0.0;
  double valid_pixel_fraction = 1.0;

  static std::string csv_header();
  std::string csv_row(int64_t step) const;
};

struct BatchLossInputs {
  double photometric_mean = 0.0;
  double reg_p_sum = 0.0;
  int n_p = 0;
  double reg_s_sum = 0.0;
  int n_s = 0;
  double reg_t1_sum = 0.0;
  int n_t1 = 0;
  double reg_t2_sum = 0.0;
  int n_t2 = 0;
  double valid_pixel_fraction = 1.0;
};

LossReport total_loss(const BatchLossInputs& in);

// Mean absolute intensity difference between the reference patch and the
// target frame warped onto the patch region by h, over mask-valid pixels.
// Returns 0 and sets *low_valid when fewer than kMinValidFraction of the
// pixels stay in the target frame.
double photometric_loss(const Image& patch_ref, const Image& frame_tgt, const Homography& h,
                        const PatchCorners& corners, bool* low_valid = nullptr,
                        double* valid_fraction = nullptr);

// Sum over unordered pairs a != b of ||H_a - H_b||_1 (normalized inputs).
double reg_spatial(std::span<const Homography> hs, int* n_terms = nullptr);

// Sum over the 4 children of ||H_parent - H_child||_1.
double reg_scale(const Homography& parent, std::span<const Homography> children,
                 int* n_terms = nullptr);

// ||H_{t,t+1} - H_{t+1,t+2}||_1 for one stream.
double reg_temporal_smooth(const Homography& h_t, const Homography& h_t1);

// Episode-consistency residual: for every (t, s) with s in [t+2, K-1],
// composes the per-pair chain and accumulates the mean-absolute
// photometric residual between frame t's patch region and frame s.
double reg_temporal_episode(std::span<const Image> frames, std::span<const Homography> hs,
                            const PatchCorners& corners, int* n_terms = nullptr);

// ---- differentiable batch assembly ----

struct EpisodeLossOptions {
  bool use_p = false;
  bool use_s = false;
  bool use_t1 = false;
  bool use_t2 = false;
};

// Unweighted per-episode loss terms on the graph, ready to be combined
// across a batch with LossWeights.
struct EpisodeTerms {
  std::vector<std::vector<diff::Graph::MatId>> hnodes;  // [stream][t]
  std::optional<diff::Graph::ScalarId> photo_sum;
  std::optional<diff::Graph::ScalarId> rp, rs, rt1, rt2;
  int n_photo = 0, n_p = 0, n_s = 0, n_t1 = 0, n_t2 = 0;
  double valid_fraction_sum = 0.0;
  int n_valid_stats = 0;
};

EpisodeTerms build_episode_terms(diff::Graph& g, const FrameSequence& seq,
                                 const EpisodeForward& fwd, const EpisodeLossOptions& opt);

// Combines episode terms into the weighted total (Eq. 6 with the batch's
// term counts) and a LossReport.
struct BatchLoss {
  diff::Graph::ScalarId total;
  LossReport report;
  LossWeights weights;
};
BatchLoss combine_batch_terms(diff::Graph& g, std::span<const EpisodeTerms> episodes);

}  // namespace skyreg
