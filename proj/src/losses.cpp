#include "skyreg/losses.hpp"

#include <cmath>
#include <cstdio>

#include "skyreg/errors.hpp"

namespace skyreg {

LossWeights LossWeights::from_counts(int n_p, int n_s, int n_t1, int n_t2) {
  LossWeights w;
  if (n_p > 0) w.lambda_p = 1.0 / (kHomographyElementCount * n_p);
  if (n_s > 0) w.lambda_s = 1.0 / (kHomographyElementCount * n_s);
  if (n_t1 > 0) w.lambda_t1 = 1.0 / (kHomographyElementCount * n_t1);
  if (n_t2 > 0) w.lambda_t2 = 1.0 / n_t2;
  return w;
}

std::string LossReport::csv_header() {
  return "step,photometric,reg_p,reg_s,reg_t1,reg_t2,total,valid_pixel_fraction";
}

std::string LossReport::csv_row(int64_t step) const {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(step), photometric, reg_p, reg_s, reg_t1, reg_t2,
                total, valid_pixel_fraction);
  return buf;
}

LossReport total_loss(const BatchLossInputs& in) {
  const LossWeights w = LossWeights::from_counts(in.n_p, in.n_s, in.n_t1, in.n_t2);
  LossReport r;
  r.photometric = in.photometric_mean;
  r.reg_p = in.reg_p_sum;
  r.reg_s = in.reg_s_sum;
  r.reg_t1 = in.reg_t1_sum;
  r.reg_t2 = in.reg_t2_sum;
  r.valid_pixel_fraction = in.valid_pixel_fraction;
  r.total = r.photometric + w.lambda_p * r.reg_p + w.lambda_s * r.reg_s +
            w.lambda_t1 * r.reg_t1 + w.lambda_t2 * r.reg_t2;
  return r;
}

double photometric_loss(const Image& patch_ref, const Image& frame_tgt, const Homography& h,
                        const PatchCorners& corners, bool* low_valid,
                        double* valid_fraction) {
  const WarpResult warped = warp_image(frame_tgt, h, corners);
  const int side = warped.image.width();
  double acc = 0.0;
  int valid = 0;
  for (int j = 0; j < side; ++j) {
    for (int i = 0; i < side; ++i) {
      if (warped.mask.at(i, j) == 0.0) continue;
      acc += std::abs(patch_ref.at(i, j) - warped.image.at(i, j));
      ++valid;
    }
  }
  const int total = side * side;
  const bool low = valid < kMinValidFraction * total;
  if (low_valid) *low_valid = low;
  if (valid_fraction) *valid_fraction = static_cast<double>(valid) / total;
  return low ? 0.0 : acc / valid;
}

namespace {

double l1(const Homography& a, const Homography& b) {
  return (a.h - b.h).cwiseAbs().sum();
}

Image crop(const Image& frame, const PatchCorners& corners) {
  const int side = static_cast<int>(std::lround(corners.side()));
  const int u0 = static_cast<int>(std::lround(corners.u0()));
  const int v0 = static_cast<int>(std::lround(corners.v0()));
  Image out(side, side);
  for (int j = 0; j < side; ++j) {
    for (int i = 0; i < side; ++i) out.at(i, j) = frame.at(u0 + i, v0 + j);
  }
  return out;
}

}  // namespace

double reg_spatial(std::span<const Homography> hs, int* n_terms) {
  if (hs.size() < 2) throw Error("reg_spatial needs at least two homographies");
  double acc = 0.0;
  int n = 0;
  for (size_t a = 0; a < hs.size(); ++a) {
    for (size_t b = a + 1; b < hs.size(); ++b) {
      acc += l1(hs[a], hs[b]);
      ++n;
    }
  }
  if (n_terms) *n_terms = n;
  return acc;
}

double reg_scale(const Homography& parent, std::span<const Homography> children,
                 int* n_terms) {
  double acc = 0.0;
  for (const auto& c : children) acc += l1(parent, c);
  if (n_terms) *n_terms = static_cast<int>(children.size());
  return acc;
}

double reg_temporal_smooth(const Homography& h_t, const Homography& h_t1) {
  return l1(h_t, h_t1);
}

double reg_temporal_episode(std::span<const Image> frames, std::span<const Homography> hs,
                            const PatchCorners& corners, int* n_terms) {
  const int k = static_cast<int>(frames.size());
  if (static_cast<int>(hs.size()) != k - 1) {
    throw Error("reg_temporal_episode: need K-1 homographies for K frames");
  }
  double acc = 0.0;
  int n = 0;
  for (int t = 0; t + 2 < k; ++t) {
    const Image ref = crop(frames[t], corners);
    Homography chain = normalize(hs[t]);
    for (int s = t + 2; s < k; ++s) {
      Homography step;
      step.h = hs[s - 1].h * chain.h;
      chain = normalize(step);
      acc += photometric_loss(ref, frames[s], chain, corners);
      ++n;
    }
  }
  if (n_terms) *n_terms = n;
  return acc;
}

EpisodeTerms build_episode_terms(diff::Graph& g, const FrameSequence& seq,
                                 const EpisodeForward& fwd, const EpisodeLossOptions& opt) {
  EpisodeTerms terms;
  const int k = fwd.batch.episode_len;
  const int n_streams = static_cast<int>(fwd.steps.size());
  const int start = fwd.batch.episode_start;

  // DLT nodes for every (stream, t).
  terms.hnodes.resize(n_streams);
  for (int s = 0; s < n_streams; ++s) {
    terms.hnodes[s].reserve(k - 1);
    for (int t = 0; t < k - 1; ++t) {
      terms.hnodes[s].push_back(
          g.dlt(fwd.corners[s], fwd.steps[s][t].offsets.d, fwd.offset_scale[s]));
    }
  }

  // Eq. 1 photometric terms, one per (stream, t), mean-reduced per term.
  std::vector<diff::Graph::ScalarId> photo;
  for (int s = 0; s < n_streams; ++s) {
    for (int t = 0; t < k - 1; ++t) {
      diff::Graph::PhotoStats stats;
      photo.push_back(g.photometric(terms.hnodes[s][t], seq.frames[start + t], 0, 0,
                                    seq.frames[start + t + 1], fwd.corners[s],
                                    kMinValidFraction, &stats));
      terms.valid_fraction_sum += static_cast<double>(stats.valid) / stats.total;
      ++terms.n_valid_stats;
    }
  }
  terms.n_photo = static_cast<int>(photo.size());
  terms.photo_sum = g.weighted_sum(photo, std::vector<double>(photo.size(), 1.0));

  const auto& streams = fwd.batch.patch_streams;

  if (opt.use_p) {
    std::vector<diff::Graph::ScalarId> items;
    for (int t = 0; t < k - 1; ++t) {
      for (int a = 0; a < n_streams; ++a) {
        if (streams[a].scale_level != ScaleLevel::Parent) continue;
        for (int b = a + 1; b < n_streams; ++b) {
          if (streams[b].scale_level != ScaleLevel::Parent) continue;
          items.push_back(g.l1_diff(terms.hnodes[a][t], terms.hnodes[b][t]));
        }
      }
    }
    if (!items.empty()) {
      terms.n_p = static_cast<int>(items.size());
      terms.rp = g.weighted_sum(items, std::vector<double>(items.size(), 1.0));
    }
  }

  if (opt.use_s) {
    std::vector<diff::Graph::ScalarId> items;
    for (int a = 0; a < n_streams; ++a) {
      if (streams[a].scale_level != ScaleLevel::Parent) continue;
      for (int b = 0; b < n_streams; ++b) {
        if (streams[b].scale_level != ScaleLevel::Child ||
            streams[b].parent_id != streams[a].stream_id) {
          continue;
        }
        for (int t = 0; t < k - 1; ++t) {
          items.push_back(g.l1_diff(terms.hnodes[a][t], terms.hnodes[b][t]));
        }
      }
    }
    if (!items.empty()) {
      terms.n_s = static_cast<int>(items.size());
      terms.rs = g.weighted_sum(items, std::vector<double>(items.size(), 1.0));
    }
  }

  if (opt.use_t1 && k >= 3) {
    std::vector<diff::Graph::ScalarId> items;
    for (int s = 0; s < n_streams; ++s) {
      for (int t = 0; t + 1 < k - 1; ++t) {
        items.push_back(g.l1_diff(terms.hnodes[s][t], terms.hnodes[s][t + 1]));
      }
    }
    if (!items.empty()) {
      terms.n_t1 = static_cast<int>(items.size());
      terms.rt1 = g.weighted_sum(items, std::vector<double>(items.size(), 1.0));
    }
  }

  if (opt.use_t2 && k >= 3) {
    std::vector<diff::Graph::ScalarId> items;
    for (int s = 0; s < n_streams; ++s) {
      for (int t = 0; t + 2 < k; ++t) {
        diff::Graph::MatId chain = terms.hnodes[s][t];
        for (int e = t + 2; e < k; ++e) {
          chain = g.normalized(g.mul(terms.hnodes[s][e - 1], chain));
          items.push_back(g.photometric(chain, seq.frames[start + t], 0, 0,
                                        seq.frames[start + e], fwd.corners[s]));
        }
      }
    }
    if (!items.empty()) {
      terms.n_t2 = static_cast<int>(items.size());
      terms.rt2 = g.weighted_sum(items, std::vector<double>(items.size(), 1.0));
    }
  }

  return terms;
}

BatchLoss combine_batch_terms(diff::Graph& g, std::span<const EpisodeTerms> episodes) {
  int n_photo = 0, n_p = 0, n_s = 0, n_t1 = 0, n_t2 = 0;
  double valid_sum = 0.0;
  int valid_stats = 0;
  for (const auto& e : episodes) {
    n_photo += e.n_photo;
    n_p += e.n_p;
    n_s += e.n_s;
    n_t1 += e.n_t1;
    n_t2 += e.n_t2;
    valid_sum += e.valid_fraction_sum;
    valid_stats += e.n_valid_stats;
  }
  const LossWeights w = LossWeights::from_counts(n_p, n_s, n_t1, n_t2);

  std::vector<diff::Graph::ScalarId> parts;
  std::vector<double> coeffs;
  double photo_val = 0.0, rp_val = 0.0, rs_val = 0.0, rt1_val = 0.0, rt2_val = 0.0;
  for (const auto& e : episodes) {
    if (e.photo_sum) {
      parts.push_back(*e.photo_sum);
      coeffs.push_back(1.0 / n_photo);
      photo_val += g.value(*e.photo_sum);
    }
    if (e.rp) {
      parts.push_back(*e.rp);
      coeffs.push_back(w.lambda_p);
      rp_val += g.value(*e.rp);
    }
    if (e.rs) {
      parts.push_back(*e.rs);
      coeffs.push_back(w.lambda_s);
      rs_val += g.value(*e.rs);
    }
    if (e.rt1) {
      parts.push_back(*e.rt1);
      coeffs.push_back(w.lambda_t1);
      rt1_val += g.value(*e.rt1);
    }
    if (e.rt2) {
      parts.push_back(*e.rt2);
      coeffs.push_back(w.lambda_t2);
      rt2_val += g.value(*e.rt2);
    }
  }

  BatchLoss out;
  out.total = g.weighted_sum(parts, coeffs);
  out.weights = w;
  out.report.photometric = n_photo > 0 ? photo_val / n_photo : 0.0;
  out.report.reg_p = rp_val;
  out.report.reg_s = rs_val;
  out.report.reg_t1 = rt1_val;
  out.report.reg_t2 = rt2_val;
  out.report.total = g.value(out.total);
  out.report.valid_pixel_fraction = valid_stats > 0 ? valid_sum / valid_stats : 1.0;
  return out;
}

}  // namespace skyreg
