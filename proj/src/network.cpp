#include "skyreg/network.hpp"

#include <cmath>

#include "skyreg/errors.hpp"
#include "skyreg/rng.hpp"

namespace skyreg {

namespace {

// Fixed Table-1 backbone: (in_channels, out_channels) per conv, pools
// after conv2, conv4, conv6.
constexpr int kConvIn[8] = {2, 64, 64, 64, 64, 128, 128, 128};
constexpr int kConvOut[8] = {64, 64, 64, 64, 128, 128, 128, 128};
constexpr bool kPoolAfter[8] = {false, true, false, true, false, true, false, false};

int flat_dim(int input_size) {
  int s = input_size;
  for (int i = 0; i < 8; ++i) {
    if (kPoolAfter[i]) s /= 2;
  }
  return kConvOut[7] * s * s;
}

// Feature maps are stored zero-padded by one pixel on every side, as
// (pixels x channels) column-major matrices with pixel index
// p = y * (side + 2) + x. The pad ring stays zero, which lets each conv
// tap run as one contiguous shifted GEMM block with correct zero padding
// and no column wrap-around for interior outputs.

void zero_ring(Eigen::MatrixXd& m, int padded) {
  for (int c = 0; c < m.cols(); ++c) {
    auto col = m.col(c);
    col.segment(0, padded).setZero();
    col.segment(static_cast<Eigen::Index>(padded) * (padded - 1), padded).setZero();
    for (int y = 1; y < padded - 1; ++y) {
      col(y * padded) = 0.0;
      col(y * padded + padded - 1) = 0.0;
    }
  }
}

// out = relu(conv(in) + b), both padded. weight is (Cout x Cin*9) with
// column c*9 + ky*3 + kx.
void conv_forward(const Eigen::MatrixXd& in, int side, const Eigen::MatrixXd& weight,
                  const Eigen::MatrixXd& bias, Eigen::MatrixXd& out) {
  const int p = side + 2;
  const Eigen::Index np = static_cast<Eigen::Index>(p) * p;
  const int cin = static_cast<int>(in.cols());
  const int cout = static_cast<int>(weight.rows());
  out.setZero(np, cout);
  Eigen::MatrixXd wk(cin, cout);
  for (int k = 0; k < 9; ++k) {
    for (int c = 0; c < cin; ++c) {
      wk.row(c) = weight.col(c * 9 + k).transpose();
    }
    const Eigen::Index delta = (k / 3 - 1) * p + (k % 3 - 1);
    const Eigen::Index lo = std::max<Eigen::Index>(0, -delta);
    const Eigen::Index n = np - std::abs(delta);
    out.middleRows(lo, n).noalias() += in.middleRows(lo + delta, n) * wk;
  }
  out.rowwise() += bias.col(0).transpose();
  out = out.cwiseMax(0.0);
  zero_ring(out, p);
}

// dout must be ReLU-masked (its ring is zero because the stored
// activations have a zero ring). din, when requested, comes back padded
// with a zeroed ring.
void conv_backward(const Eigen::MatrixXd& in, int side, const Eigen::MatrixXd& weight,
                   const Eigen::MatrixXd& dout, Eigen::MatrixXd* gweight,
                   Eigen::MatrixXd* gbias, Eigen::MatrixXd* din) {
  const int p = side + 2;
  const Eigen::Index np = static_cast<Eigen::Index>(p) * p;
  const int cin = static_cast<int>(in.cols());
  const int cout = static_cast<int>(weight.rows());
  if (din) din->setZero(np, cin);
  Eigen::MatrixXd wk(cin, cout);
  Eigen::MatrixXd gk(cin, cout);
  for (int k = 0; k < 9; ++k) {
    const Eigen::Index delta = (k / 3 - 1) * p + (k % 3 - 1);
    const Eigen::Index lo = std::max<Eigen::Index>(0, -delta);
    const Eigen::Index n = np - std::abs(delta);
    gk.noalias() = in.middleRows(lo + delta, n).transpose() * dout.middleRows(lo, n);
    for (int c = 0; c < cin; ++c) {
      gweight->col(c * 9 + k) += gk.row(c).transpose();
    }
    if (din) {
      for (int c = 0; c < cin; ++c) {
        wk.row(c) = weight.col(c * 9 + k).transpose();
      }
      din->middleRows(lo + delta, n).noalias() +=
          dout.middleRows(lo, n) * wk.transpose();
    }
  }
  gbias->col(0) += dout.colwise().sum().transpose();
  if (din) zero_ring(*din, p);
}

void pool_forward(const Eigen::MatrixXd& in, int side, Eigen::MatrixXd& out,
                  std::vector<int>& argmax) {
  const int p = side + 2;
  const int so = side / 2;
  const int po = so + 2;
  const int c = static_cast<int>(in.cols());
  out.setZero(static_cast<Eigen::Index>(po) * po, c);
  argmax.assign(static_cast<size_t>(so) * so * c, 0);
  for (int ch = 0; ch < c; ++ch) {
    const auto src = in.col(ch);
    auto dst = out.col(ch);
    for (int yo = 0; yo < so; ++yo) {
      for (int xo = 0; xo < so; ++xo) {
        const int p00 = (2 * yo + 1) * p + 2 * xo + 1;
        int best = p00;
        if (src(p00 + 1) > src(best)) best = p00 + 1;
        if (src(p00 + p) > src(best)) best = p00 + p;
        if (src(p00 + p + 1) > src(best)) best = p00 + p + 1;
        dst((yo + 1) * po + xo + 1) = src(best);
        argmax[static_cast<size_t>(ch) * so * so + yo * so + xo] = best;
      }
    }
  }
}

void pool_backward(const Eigen::MatrixXd& dout, int side, const std::vector<int>& argmax,
                   Eigen::MatrixXd& din) {
  const int p = side + 2;
  const int so = side / 2;
  const int po = so + 2;
  const int c = static_cast<int>(dout.cols());
  din.setZero(static_cast<Eigen::Index>(p) * p, c);
  for (int ch = 0; ch < c; ++ch) {
    const auto src = dout.col(ch);
    auto dst = din.col(ch);
    for (int yo = 0; yo < so; ++yo) {
      for (int xo = 0; xo < so; ++xo) {
        dst(argmax[static_cast<size_t>(ch) * so * so + yo * so + xo]) +=
            src((yo + 1) * po + xo + 1);
      }
    }
  }
}

// Interior of the flattened final map, channel-major: c * S^2 + (y-1)*S + (x-1).
void flatten_interior(const Eigen::MatrixXd& padded, int side, Eigen::VectorXd& flat) {
  const int p = side + 2;
  flat.resize(static_cast<Eigen::Index>(padded.cols()) * side * side);
  Eigen::Index idx = 0;
  for (int c = 0; c < padded.cols(); ++c) {
    const auto col = padded.col(c);
    for (int y = 1; y <= side; ++y) {
      flat.segment(idx, side) = col.segment(y * p + 1, side);
      idx += side;
    }
  }
}

void unflatten_interior(const Eigen::VectorXd& flat, int side, int channels,
                        Eigen::MatrixXd& padded) {
  const int p = side + 2;
  padded.setZero(static_cast<Eigen::Index>(p) * p, channels);
  Eigen::Index idx = 0;
  for (int c = 0; c < channels; ++c) {
    auto col = padded.col(c);
    for (int y = 1; y <= side; ++y) {
      col.segment(y * p + 1, side) = flat.segment(idx, side);
      idx += side;
    }
  }
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

// Convolutional stack only (everything before fc1); fills the cache and
// the flattened final activation.
void conv_stack_forward(const ModelParams& params, const Image& patch_ref,
                        const Image& patch_tgt, TrunkCache& cache, Eigen::VectorXd& flat) {
  const int s = params.config.input_size;
  if (patch_ref.width() != s || patch_ref.height() != s || patch_tgt.width() != s ||
      patch_tgt.height() != s) {
    throw ShapeMismatch("extract_features expects " + std::to_string(s) + "x" +
                        std::to_string(s) + " patches");
  }
  const int p = s + 2;
  cache.x0.setZero(static_cast<Eigen::Index>(p) * p, 2);
  const double mean_ref = params.config.center_inputs ? patch_ref.mean() : 0.0;
  const double mean_tgt = params.config.center_inputs ? patch_tgt.mean() : 0.0;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      cache.x0((y + 1) * p + x + 1, 0) = patch_ref.at(x, y) - mean_ref;
      cache.x0((y + 1) * p + x + 1, 1) = patch_tgt.at(x, y) - mean_tgt;
    }
  }

  const Eigen::MatrixXd* in = &cache.x0;
  int side = s;
  int pool_id = 0;
  for (int i = 0; i < 8; ++i) {
    conv_forward(*in, side, params.tensors[2 * i], params.tensors[2 * i + 1], cache.act[i]);
    in = &cache.act[i];
    if (kPoolAfter[i]) {
      pool_forward(*in, side, cache.pooled[pool_id], cache.argmax[pool_id]);
      in = &cache.pooled[pool_id];
      side /= 2;
      ++pool_id;
    }
  }
  flatten_interior(*in, side, flat);
}

// Backward through the conv stack given the gradient at the flattened
// final activation.
void conv_stack_backward(const ModelParams& params, const TrunkCache& cache,
                         const Eigen::VectorXd& dflat, ModelParams* grads,
                         int capture_layer, Eigen::MatrixXd* captured) {
  std::array<int, 8> conv_side;
  int side = params.config.input_size;
  for (int i = 0; i < 8; ++i) {
    conv_side[i] = side;
    if (kPoolAfter[i]) side /= 2;
  }

  Eigen::MatrixXd dcur;
  unflatten_interior(dflat, side, kConvOut[7], dcur);
  Eigen::MatrixXd dprev;
  for (int i = 7; i >= 0; --i) {
    const int h = conv_side[i];
    if (kPoolAfter[i]) {
      // dcur is at the pool output; lift it to the conv's post-ReLU map.
      const int pi = (i - 1) / 2;  // pools sit after convs 2, 4, 6
      Eigen::MatrixXd dunpooled;
      pool_backward(dcur, h, cache.argmax[pi], dunpooled);
      dcur = std::move(dunpooled);
    }
    if (i == capture_layer && captured) *captured = dcur;
    const Eigen::MatrixXd dout =
        dcur.cwiseProduct((cache.act[i].array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd& in =
        (i == 0) ? cache.x0
                 : (kPoolAfter[i - 1] ? cache.pooled[(i - 2) / 2] : cache.act[i - 1]);
    conv_backward(in, h, params.tensors[2 * i], dout, &grads->tensors[2 * i],
                  &grads->tensors[2 * i + 1], i == 0 ? nullptr : &dprev);
    if (i > 0) dcur = std::move(dprev);
  }
}

// fc1 over a batch of flattened activations: one GEMM against the large
// weight matrix instead of one pass per sample.
Eigen::MatrixXd fc1_forward_batch(const ModelParams& params, const Eigen::MatrixXd& flats) {
  Eigen::MatrixXd features =
      (params.named("fc1.weight") * flats).colwise() + params.named("fc1.bias").col(0);
  features = features.cwiseMax(0.0);
  return features;
}

}  // namespace

std::string variant_name(Variant v) { return v == Variant::Base ? "BASE" : "LSTM"; }

Variant variant_from_name(const std::string& name) {
  if (name == "BASE") return Variant::Base;
  if (name == "LSTM") return Variant::Lstm;
  throw Error("unknown network variant: " + name);
}

std::vector<PlanEntry> layer_plan(const ModelConfig& config) {
  std::vector<PlanEntry> plan;
  int side = config.input_size;
  int pool_id = 1;
  for (int i = 0; i < 8; ++i) {
    plan.push_back({"conv" + std::to_string(i + 1), "conv", kConvOut[i], side, side});
    if (kPoolAfter[i]) {
      side /= 2;
      plan.push_back({"pool" + std::to_string(pool_id++), "pool", kConvOut[i], side, side});
    }
  }
  plan.push_back({"fc1", "fc", config.hidden_dim, 1, 1});
  if (config.variant == Variant::Lstm) {
    plan.push_back({"lstm", "lstm", config.hidden_dim, 1, 1});
  }
  plan.push_back({"head", "fc", config.offset_dim, 1, 1});
  return plan;
}

std::vector<TensorSpec> tensor_specs(const ModelConfig& config) {
  std::vector<TensorSpec> specs;
  for (int i = 0; i < 8; ++i) {
    const std::string base = "conv" + std::to_string(i + 1);
    specs.push_back({base + ".weight", kConvOut[i], kConvIn[i] * 9});
    specs.push_back({base + ".bias", kConvOut[i], 1});
  }
  specs.push_back({"fc1.weight", config.hidden_dim, flat_dim(config.input_size)});
  specs.push_back({"fc1.bias", config.hidden_dim, 1});
  specs.push_back({"head.weight", config.offset_dim, config.hidden_dim});
  specs.push_back({"head.bias", config.offset_dim, 1});
  if (config.variant == Variant::Lstm) {
    specs.push_back({"lstm.weight_x", 4 * config.hidden_dim, config.hidden_dim});
    specs.push_back({"lstm.weight_h", 4 * config.hidden_dim, config.hidden_dim});
    specs.push_back({"lstm.bias", 4 * config.hidden_dim, 1});
  }
  return specs;
}

Eigen::MatrixXd& ModelParams::named(const std::string& name) {
  const auto specs = tensor_specs(config);
  for (size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name == name) return tensors[i];
  }
  throw Error("no tensor named " + name);
}

const Eigen::MatrixXd& ModelParams::named(const std::string& name) const {
  return const_cast<ModelParams*>(this)->named(name);
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams out;
  out.config = p.config;
  out.tensors.reserve(p.tensors.size());
  for (const auto& t : p.tensors) {
    out.tensors.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  }
  return out;
}

ModelParams init_params(const ModelConfig& config, uint64_t seed) {
  ModelParams p;
  p.config = config;
  for (const auto& spec : tensor_specs(config)) {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(spec.rows, spec.cols);
    if (spec.cols > 1) {  // weight matrix: He fan-in scaling
      Rng rng(hash_combine(seed, hash_string(spec.name)));
      const double stddev = std::sqrt(2.0 / spec.cols);
      for (int c = 0; c < spec.cols; ++c) {
        for (int r = 0; r < spec.rows; ++r) {
          t(r, c) = stddev * rng.next_normal();
        }
      }
    }
    p.tensors.push_back(std::move(t));
  }
  return p;
}

Eigen::MatrixXd map_interior(const Eigen::MatrixXd& padded, int side) {
  const int p = side + 2;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(side) * side, padded.cols());
  for (int c = 0; c < padded.cols(); ++c) {
    for (int y = 0; y < side; ++y) {
      out.col(c).segment(static_cast<Eigen::Index>(y) * side, side) =
          padded.col(c).segment((y + 1) * p + 1, side);
    }
  }
  return out;
}

void TrunkCache::release() {
  x0.resize(0, 0);
  for (auto& a : act) a.resize(0, 0);
  for (auto& a : pooled) a.resize(0, 0);
  for (auto& a : argmax) a.clear();
  features.resize(0);
  flat.resize(0);
}

Eigen::VectorXd extract_features(const ModelParams& params, const Image& patch_ref,
                                 const Image& patch_tgt, TrunkCache* cache) {
  TrunkCache local;
  TrunkCache& c = cache ? *cache : local;
  conv_stack_forward(params, patch_ref, patch_tgt, c, c.flat);
  c.features = fc1_forward_batch(params, c.flat);
  return c.features;
}

void trunk_backward(const ModelParams& params, const TrunkCache& cache,
                    const Eigen::VectorXd& dfeatures, ModelParams* grads,
                    int capture_layer, Eigen::MatrixXd* captured) {
  Eigen::VectorXd dpre = dfeatures;
  for (int i = 0; i < dpre.size(); ++i) {
    if (cache.features(i) <= 0.0) dpre(i) = 0.0;
  }
  grads->named("fc1.weight").noalias() += dpre * cache.flat.transpose();
  grads->named("fc1.bias").col(0) += dpre;
  const Eigen::VectorXd dflat = params.named("fc1.weight").transpose() * dpre;
  conv_stack_backward(params, cache, dflat, grads, capture_layer, captured);
}

CornerOffsets step(const ModelParams& params, const Eigen::VectorXd& features,
                   std::optional<RecurrentState>* state, LstmCache* cache) {
  const bool want_state = params.config.variant == Variant::Lstm;
  const bool have_state = state != nullptr && state->has_value();
  if (want_state != have_state) {
    throw StateVariantMismatch(want_state ? "LSTM step requires recurrent state"
                                          : "BASE step takes no recurrent state");
  }

  Eigen::VectorXd head_in;
  if (want_state) {
    const int hdim = params.config.hidden_dim;
    RecurrentState& st = state->value();
    Eigen::VectorXd z = params.named("lstm.weight_x") * features +
                        params.named("lstm.weight_h") * st.hidden +
                        params.named("lstm.bias").col(0);
    const Eigen::VectorXd gi = sigmoid(z.segment(0, hdim));
    const Eigen::VectorXd gf = sigmoid(z.segment(hdim, hdim));
    const Eigen::VectorXd gg = z.segment(2 * hdim, hdim).array().tanh();
    const Eigen::VectorXd go = sigmoid(z.segment(3 * hdim, hdim));
    const Eigen::VectorXd c_new = gf.cwiseProduct(st.cell) + gi.cwiseProduct(gg);
    const Eigen::VectorXd tanh_c = c_new.array().tanh();
    if (cache) {
      cache->x = features;
      cache->h_prev = st.hidden;
      cache->c_prev = st.cell;
      cache->i = gi;
      cache->f = gf;
      cache->g = gg;
      cache->o = go;
      cache->c = c_new;
      cache->tanh_c = tanh_c;
    }
    st.cell = c_new;
    st.hidden = go.cwiseProduct(tanh_c);
    head_in = st.hidden;
  } else {
    head_in = features;
  }

  Eigen::VectorXd out = params.named("head.weight") * head_in + params.named("head.bias").col(0);
  CornerOffsets offs;
  for (int i = 0; i < 4; ++i) {
    offs.d(0, i) = out(2 * i);
    offs.d(1, i) = out(2 * i + 1);
  }
  return offs;
}

LstmBackwardResult lstm_backward(const ModelParams& params, const LstmCache& cache,
                                 const Eigen::VectorXd& dh, const Eigen::VectorXd& dc_next,
                                 ModelParams* grads) {
  const int hdim = params.config.hidden_dim;
  const Eigen::VectorXd dgo = dh.cwiseProduct(cache.tanh_c);
  Eigen::VectorXd dc = dc_next;
  dc += dh.cwiseProduct(cache.o)
            .cwiseProduct((1.0 - cache.tanh_c.array().square()).matrix());
  const Eigen::VectorXd dgi = dc.cwiseProduct(cache.g);
  const Eigen::VectorXd dgg = dc.cwiseProduct(cache.i);
  const Eigen::VectorXd dgf = dc.cwiseProduct(cache.c_prev);

  Eigen::VectorXd dz(4 * hdim);
  dz.segment(0, hdim) =
      dgi.cwiseProduct(cache.i).cwiseProduct((1.0 - cache.i.array()).matrix());
  dz.segment(hdim, hdim) =
      dgf.cwiseProduct(cache.f).cwiseProduct((1.0 - cache.f.array()).matrix());
  dz.segment(2 * hdim, hdim) =
      dgg.cwiseProduct((1.0 - cache.g.array().square()).matrix());
  dz.segment(3 * hdim, hdim) =
      dgo.cwiseProduct(cache.o).cwiseProduct((1.0 - cache.o.array()).matrix());

  grads->named("lstm.weight_x").noalias() += dz * cache.x.transpose();
  grads->named("lstm.weight_h").noalias() += dz * cache.h_prev.transpose();
  grads->named("lstm.bias").col(0) += dz;

  LstmBackwardResult res;
  res.dx = params.named("lstm.weight_x").transpose() * dz;
  res.dh_prev = params.named("lstm.weight_h").transpose() * dz;
  res.dc_prev = dc.cwiseProduct(cache.f);
  return res;
}

Eigen::VectorXd head_backward(const ModelParams& params, const Eigen::VectorXd& head_in,
                              const CornerOffsets& doffsets, ModelParams* grads) {
  Eigen::VectorXd g8(8);
  for (int i = 0; i < 4; ++i) {
    g8(2 * i) = doffsets.d(0, i);
    g8(2 * i + 1) = doffsets.d(1, i);
  }
  grads->named("head.weight").noalias() += g8 * head_in.transpose();
  grads->named("head.bias").col(0) += g8;
  return params.named("head.weight").transpose() * g8;
}

EpisodeForward run_episode(const ModelParams& params, const FrameSequence& seq,
                           const EpisodeBatch& batch, bool keep_caches) {
  const int k = batch.episode_len;
  if (k < 2) throw Error("run_episode: episode length must be >= 2");
  if (batch.episode_start + k > static_cast<int>(seq.frames.size())) {
    throw FrameRangeError("episode exceeds sequence length");
  }

  EpisodeForward fwd;
  fwd.batch = batch;
  const int n_streams = static_cast<int>(batch.patch_streams.size());
  fwd.steps.resize(n_streams);
  fwd.corners.reserve(n_streams);
  fwd.offset_scale.reserve(n_streams);

  // Conv stacks for every (stream, t), then one batched fc1 GEMM: the fc1
  // weight matrix is large enough that per-sample passes are bandwidth
  // bound.
  const int n_samples = n_streams * (k - 1);
  Eigen::MatrixXd flats(flat_dim(params.config.input_size), n_samples);
  for (int s = 0; s < n_streams; ++s) {
    const PatchSpec& spec = batch.patch_streams[s];
    fwd.corners.push_back(PatchCorners::square(spec.top_left_u, spec.top_left_v, spec.size));
    fwd.offset_scale.push_back(spec.scale_level == ScaleLevel::Child ? 0.5 : 1.0);
    fwd.steps[s].resize(k - 1);
    for (int t = 0; t < k - 1; ++t) {
      const Image ref = extract_patch(seq.frames[batch.episode_start + t], spec);
      const Image tgt = extract_patch(seq.frames[batch.episode_start + t + 1], spec);
      Eigen::VectorXd flat;
      conv_stack_forward(params, ref, tgt, fwd.steps[s][t].trunk, flat);
      flats.col(s * (k - 1) + t) = flat;
      if (keep_caches) fwd.steps[s][t].trunk.flat = std::move(flat);
    }
  }
  const Eigen::MatrixXd features = fc1_forward_batch(params, flats);

  for (int s = 0; s < n_streams; ++s) {
    std::optional<RecurrentState> state;
    if (params.config.variant == Variant::Lstm) {
      state = RecurrentState::zeros(params.config.hidden_dim);
    }
    for (int t = 0; t < k - 1; ++t) {
      StreamStep& st = fwd.steps[s][t];
      st.trunk.features = features.col(s * (k - 1) + t);
      st.offsets = step(params, st.trunk.features,
                        params.config.variant == Variant::Lstm ? &state : nullptr,
                        params.config.variant == Variant::Lstm ? &st.lstm : nullptr);
      if (!keep_caches) st.trunk.release();
    }
  }
  return fwd;
}

std::map<std::pair<int, int>, Homography> forward_episode(const ModelParams& params,
                                                          const FrameSequence& seq,
                                                          const EpisodeBatch& batch) {
  const EpisodeForward fwd = run_episode(params, seq, batch, /*keep_caches=*/false);
  std::map<std::pair<int, int>, Homography> out;
  for (size_t s = 0; s < fwd.steps.size(); ++s) {
    for (size_t t = 0; t < fwd.steps[s].size(); ++t) {
      CornerOffsets scaled;
      scaled.d = fwd.steps[s][t].offsets.d * fwd.offset_scale[s];
      out[{batch.patch_streams[s].stream_id, static_cast<int>(t)}] =
          solve_dlt(fwd.corners[s], scaled);
    }
  }
  return out;
}

void episode_backward(const ModelParams& params, EpisodeForward& fwd,
                      const std::vector<std::vector<OffsetMat>>& doffsets,
                      ModelParams* grads) {
  const bool lstm = params.config.variant == Variant::Lstm;
  const int n_streams = static_cast<int>(fwd.steps.size());
  if (n_streams == 0) return;
  const int steps = static_cast<int>(fwd.steps[0].size());
  const int n_samples = n_streams * steps;

  // Head and recurrent cell first (reverse time order per stream), leaving
  // the gradient at the fc1 output for a batched fc1 pass.
  Eigen::MatrixXd dfeat(params.config.hidden_dim, n_samples);
  for (int s = 0; s < n_streams; ++s) {
    Eigen::VectorXd dh_next, dc_next;
    if (lstm) {
      dh_next = Eigen::VectorXd::Zero(params.config.hidden_dim);
      dc_next = Eigen::VectorXd::Zero(params.config.hidden_dim);
    }
    for (int t = steps - 1; t >= 0; --t) {
      StreamStep& st = fwd.steps[s][t];
      CornerOffsets g;
      g.d = doffsets[s][t];
      if (lstm) {
        const Eigen::VectorXd h_t = st.lstm.o.cwiseProduct(st.lstm.tanh_c);
        const Eigen::VectorXd dh = head_backward(params, h_t, g, grads) + dh_next;
        const LstmBackwardResult r = lstm_backward(params, st.lstm, dh, dc_next, grads);
        dh_next = r.dh_prev;
        dc_next = r.dc_prev;
        dfeat.col(s * steps + t) = r.dx;
      } else {
        dfeat.col(s * steps + t) = head_backward(params, st.trunk.features, g, grads);
      }
    }
  }

  // Batched fc1 backward.
  for (int b = 0; b < n_samples; ++b) {
    const auto& features = fwd.steps[b / steps][b % steps].trunk.features;
    for (int i = 0; i < dfeat.rows(); ++i) {
      if (features(i) <= 0.0) dfeat(i, b) = 0.0;
    }
  }
  Eigen::MatrixXd flats(flat_dim(params.config.input_size), n_samples);
  for (int b = 0; b < n_samples; ++b) {
    flats.col(b) = fwd.steps[b / steps][b % steps].trunk.flat;
  }
  grads->named("fc1.weight").noalias() += dfeat * flats.transpose();
  grads->named("fc1.bias").col(0) += dfeat.rowwise().sum();
  const Eigen::MatrixXd dflats = params.named("fc1.weight").transpose() * dfeat;

  for (int s = 0; s < n_streams; ++s) {
    for (int t = 0; t < steps; ++t) {
      StreamStep& st = fwd.steps[s][t];
      conv_stack_backward(params, st.trunk, dflats.col(s * steps + t), grads, -1, nullptr);
      st.trunk.release();
    }
  }
}

std::vector<Homography> estimate_video_chain(const ModelParams& params,
                                             const FrameSequence& seq, int episode_len) {
  const int n = static_cast<int>(seq.frames.size());
  if (n < 2) throw EmptyVideo(seq.video_id);
  const auto [ulo, uhi] = patch_placement_range(seq.width(), kParentPatchSize);
  const auto [vlo, vhi] = patch_placement_range(seq.height(), kParentPatchSize);
  PatchSpec center;
  center.top_left_u = (ulo + uhi) / 2;
  center.top_left_v = (vlo + vhi) / 2;
  center.size = kParentPatchSize;

  std::vector<Homography> chain;
  chain.reserve(n - 1);
  int t0 = 0;
  while (t0 < n - 1) {
    const int k = std::min(episode_len, n - t0);
    EpisodeBatch batch;
    batch.episode_start = t0;
    batch.episode_len = k;
    batch.video_id = seq.video_id;
    center.frame_index = t0;
    batch.patch_streams = {center};
    const auto hs = forward_episode(params, seq, batch);
    for (int t = 0; t < k - 1; ++t) chain.push_back(hs.at({center.stream_id, t}));
    t0 += k - 1;
  }
  return chain;
}

int64_t count_flops(const ModelConfig& config) {
  int64_t total = 0;
  int side = config.input_size;
  for (int i = 0; i < 8; ++i) {
    const int64_t n = static_cast<int64_t>(side) * side;
    total += static_cast<int64_t>(kConvOut[i]) * n * (kConvIn[i] * 9 + 1);
    if (kPoolAfter[i]) side /= 2;
  }
  const int64_t flat = flat_dim(config.input_size);
  total += static_cast<int64_t>(config.hidden_dim) * (flat + 1);
  if (config.variant == Variant::Lstm) {
    const int64_t h = config.hidden_dim;
    total += 4 * h * (2 * h + 1);  // gate projections
    total += 9 * h;                // activations and cell/output pointwise ops
  }
  total += static_cast<int64_t>(config.offset_dim) * (config.hidden_dim + 1);
  return total;
}

}  // namespace skyreg
