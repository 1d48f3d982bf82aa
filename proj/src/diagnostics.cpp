#include "skyreg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "skyreg/diffgraph.hpp"
#include "skyreg/errors.hpp"
#include "skyreg/imageio.hpp"
#include "skyreg/losses.hpp"
#include "skyreg/rng.hpp"

namespace skyreg {

namespace {

// Offsets for a patch pair through the network, with the recurrent cell
// (when present) started from a zero state.
CornerOffsets infer_offsets(const ModelParams& params, const Image& ref, const Image& tgt,
                            TrunkCache* trunk, LstmCache* lstm) {
  const Eigen::VectorXd features = extract_features(params, ref, tgt, trunk);
  std::optional<RecurrentState> state;
  if (params.config.variant == Variant::Lstm) {
    state = RecurrentState::zeros(params.config.hidden_dim);
  }
  return step(params, features,
              params.config.variant == Variant::Lstm ? &state : nullptr, lstm);
}

}  // namespace

Image activation_map(const ModelParams& params, const Image& patch_ref,
                     const Image& patch_tgt, const std::string& layer) {
  int layer_index = -1;
  for (int i = 0; i < 8; ++i) {
    if (layer == "conv" + std::to_string(i + 1)) layer_index = i;
  }
  if (layer_index < 0) throw UnknownLayer(layer);

  TrunkCache trunk;
  LstmCache lstm;
  const CornerOffsets offsets = infer_offsets(params, patch_ref, patch_tgt, &trunk, &lstm);

  // Photometric loss in the patch's own coordinate system.
  const int s = params.config.input_size;
  const PatchCorners corners = PatchCorners::square(0, 0, s);
  diff::Graph g;
  const auto h = g.dlt(corners, offsets.d);
  const auto loss = g.photometric(h, patch_ref, 0, 0, patch_tgt, corners);
  g.backward(loss);
  CornerOffsets doff;
  doff.d = g.offsets_grad(h);

  // Chain into the network down to the requested conv activation.
  ModelParams scratch = zeros_like(params);
  Eigen::MatrixXd dact;
  if (params.config.variant == Variant::Lstm) {
    const Eigen::VectorXd h_t = lstm.o.cwiseProduct(lstm.tanh_c);
    const Eigen::VectorXd dh = head_backward(params, h_t, doff, &scratch);
    const Eigen::VectorXd dc = Eigen::VectorXd::Zero(params.config.hidden_dim);
    const LstmBackwardResult r = lstm_backward(params, lstm, dh, dc, &scratch);
    trunk_backward(params, trunk, r.dx, &scratch, layer_index, &dact);
  } else {
    const Eigen::VectorXd dfeat = head_backward(params, trunk.features, doff, &scratch);
    trunk_backward(params, trunk, dfeat, &scratch, layer_index, &dact);
  }

  // Channel weights = spatially averaged gradients; map = relu(sum_c w_c A_c).
  int side = 0;
  for (const auto& e : layer_plan(params.config)) {
    if (e.name == layer) side = e.out_h;
  }
  const Eigen::MatrixXd act = map_interior(trunk.act[layer_index], side);
  const Eigen::VectorXd channel_w = map_interior(dact, side).colwise().mean();
  Eigen::VectorXd cam = (act * channel_w).cwiseMax(0.0);
  const double peak = cam.maxCoeff();
  if (peak > 0.0) cam /= peak;

  Image map(side, side);
  for (int p = 0; p < side * side; ++p) map.data()[p] = cam(p);
  if (side == s) return map;
  return resize_bilinear(map, s, s);
}

Histogram loss_histogram(const ModelParams& params, const Image& frame_a,
                         const Image& frame_b, int n_samples, int bins, uint64_t seed) {
  if (n_samples < 1) throw Error("loss_histogram: n_samples must be >= 1");
  if (bins < 1) throw Error("loss_histogram: bins must be >= 1");
  const auto [ulo, uhi] = patch_placement_range(frame_a.width(), kParentPatchSize);
  const auto [vlo, vhi] = patch_placement_range(frame_a.height(), kParentPatchSize);

  Rng rng(hash_combine(seed, 0x4157ULL));
  std::vector<double> values;
  values.reserve(n_samples);
  for (int k = 0; k < n_samples; ++k) {
    PatchSpec spec;
    spec.top_left_u = rng.next_int(ulo, uhi);
    spec.top_left_v = rng.next_int(vlo, vhi);
    spec.size = kParentPatchSize;
    const Image ref = extract_patch(frame_a, spec);
    const CornerOffsets offsets =
        infer_offsets(params, ref, extract_patch(frame_b, spec), nullptr, nullptr);
    const PatchCorners corners =
        PatchCorners::square(spec.top_left_u, spec.top_left_v, spec.size);
    const Homography h = solve_dlt(corners, offsets);
    values.push_back(photometric_loss(ref, frame_b, h, corners));
  }

  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Degenerate spread (a perfect estimator) still needs a well-formed
  // range; 1e-9 sits far below any meaningful photometric magnitude.
  if (hi - lo < 1e-9) hi = lo + 1e-9;

  Histogram hist;
  hist.counts.assign(bins, 0);
  hist.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) hist.edges[b] = lo + (hi - lo) * b / bins;
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);  // the top edge is inclusive
    ++hist.counts[b];
  }
  return hist;
}

void write_histogram_csv(const Histogram& hist, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write histogram csv: " + path);
  out << "bin_left,bin_right,count\n";
  char buf[128];
  for (size_t b = 0; b < hist.counts.size(); ++b) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%lld\n", hist.edges[b], hist.edges[b + 1],
                  static_cast<long long>(hist.counts[b]));
    out << buf;
  }
}

}  // namespace skyreg
