#include "skyreg/diffgraph.hpp"

#include <cmath>

#include "skyreg/errors.hpp"

namespace skyreg::diff {

namespace {
constexpr double kDivergeTol = 1e-9;
inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace

Graph::MatId Graph::dlt(const PatchCorners& corners, const OffsetMat& offsets,
                        double offset_scale) {
  MatNode n;
  n.op = MatOp::Dlt;
  n.offset_scale = offset_scale;
  CornerOffsets scaled;
  scaled.d = offsets * offset_scale;
  n.val = solve_dlt(corners, scaled, &n.cache).h;
  return {push_mat(std::move(n))};
}

Graph::MatId Graph::constant(const Homography& h) {
  MatNode n;
  n.op = MatOp::Const;
  n.val = h.h;
  return {push_mat(std::move(n))};
}

Graph::MatId Graph::mul(MatId a, MatId b) {
  MatNode n;
  n.op = MatOp::Mul;
  n.a = a.i;
  n.b = b.i;
  n.val = mats_[a.i].val * mats_[b.i].val;
  return {push_mat(std::move(n))};
}

Graph::MatId Graph::normalized(MatId a) {
  const double s = mats_[a.i].val(2, 2);
  if (std::abs(s) < 1e-12) {
    throw DegenerateCorrespondence("normalized: h(2,2) vanishes");
  }
  MatNode n;
  n.op = MatOp::Normalized;
  n.a = a.i;
  n.val = mats_[a.i].val / s;
  return {push_mat(std::move(n))};
}

Graph::ScalarId Graph::l1_diff(MatId a, MatId b) {
  ScalarNode n;
  n.op = ScalarOp::L1Diff;
  n.a = a.i;
  n.b = b.i;
  n.val = (mats_[a.i].val - mats_[b.i].val).cwiseAbs().sum();
  return {push_scalar(std::move(n))};
}

Graph::ScalarId Graph::photometric(MatId h, const Image& ref, int ref_origin_u,
                                   int ref_origin_v, const Image& tgt,
                                   const PatchCorners& region, double min_valid_frac,
                                   PhotoStats* stats) {
  ScalarNode n;
  n.op = ScalarOp::Photometric;
  n.a = h.i;
  n.ref = &ref;
  n.tgt = &tgt;
  n.region = region;
  n.ref_u0 = ref_origin_u;
  n.ref_v0 = ref_origin_v;

  const Mat3& m = mats_[h.i].val;
  const int side = static_cast<int>(std::lround(region.side()));
  const int u0 = static_cast<int>(std::lround(region.u0()));
  const int v0 = static_cast<int>(std::lround(region.v0()));
  double acc = 0.0;
  int valid = 0;
  for (int j = 0; j < side; ++j) {
    for (int i = 0; i < side; ++i) {
      const double u = u0 + i;
      const double v = v0 + j;
      const double w = m(2, 0) * u + m(2, 1) * v + m(2, 2);
      if (std::abs(w) < kDivergeTol) continue;
      const double su = (m(0, 0) * u + m(0, 1) * v + m(0, 2)) / w;
      const double sv = (m(1, 0) * u + m(1, 1) * v + m(1, 2)) / w;
      if (!tgt.contains(su, sv)) continue;
      const double r = ref.at(u0 + i - ref_origin_u, v0 + j - ref_origin_v);
      acc += std::abs(r - tgt.bilinear(su, sv));
      ++valid;
    }
  }
  const int total = side * side;
  n.valid = valid;
  n.low_valid = valid < min_valid_frac * total;
  n.val = n.low_valid ? 0.0 : acc / valid;
  if (stats) {
    stats->valid = valid;
    stats->total = total;
    stats->low_valid = n.low_valid;
  }
  return {push_scalar(std::move(n))};
}

Graph::ScalarId Graph::constant_scalar(double v) {
  ScalarNode n;
  n.op = ScalarOp::Const;
  n.val = v;
  return {push_scalar(std::move(n))};
}

Graph::ScalarId Graph::add_scaled(ScalarId a, double wa, ScalarId b, double wb) {
  return weighted_sum({a, b}, {wa, wb});
}

Graph::ScalarId Graph::weighted_sum(const std::vector<ScalarId>& xs,
                                    const std::vector<double>& ws) {
  ScalarNode n;
  n.op = ScalarOp::WeightedSum;
  double acc = 0.0;
  for (size_t k = 0; k < xs.size(); ++k) {
    n.terms.push_back(xs[k].i);
    n.weights.push_back(ws[k]);
    acc += ws[k] * scalars_[xs[k].i].val;
  }
  n.val = acc;
  return {push_scalar(std::move(n))};
}

double Graph::value(ScalarId s) const { return scalars_[s.i].val; }
const Mat3& Graph::value(MatId m) const { return mats_[m.i].val; }

Homography Graph::homography(MatId m) const {
  Homography h;
  h.h = mats_[m.i].val;
  return h;
}

const OffsetMat& Graph::offsets_grad(MatId dlt_node) const {
  return mats_[dlt_node.i].offgrad;
}

void Graph::backward(ScalarId root) {
  for (auto& m : mats_) {
    m.grad.setZero();
    m.offgrad.setZero();
  }
  for (auto& s : scalars_) s.grad = 0.0;
  scalars_[root.i].grad = 1.0;

  // Scalar nodes only reference earlier scalars and matrices, and matrix
  // nodes only reference earlier matrices, so two reverse sweeps suffice.
  for (int si = static_cast<int>(scalars_.size()) - 1; si >= 0; --si) {
    ScalarNode& n = scalars_[si];
    const double g = n.grad;
    if (g == 0.0) continue;
    switch (n.op) {
      case ScalarOp::Const:
        break;
      case ScalarOp::WeightedSum:
        for (size_t k = 0; k < n.terms.size(); ++k) {
          scalars_[n.terms[k]].grad += g * n.weights[k];
        }
        break;
      case ScalarOp::L1Diff: {
        const Mat3 d = mats_[n.a].val - mats_[n.b].val;
        const Mat3 s = d.unaryExpr([](double x) { return sgn(x); });
        mats_[n.a].grad += g * s;
        mats_[n.b].grad -= g * s;
        break;
      }
      case ScalarOp::Photometric: {
        if (n.low_valid || n.valid == 0) break;
        const Mat3& m = mats_[n.a].val;
        Mat3 gh = Mat3::Zero();
        const int side = static_cast<int>(std::lround(n.region.side()));
        const int u0 = static_cast<int>(std::lround(n.region.u0()));
        const int v0 = static_cast<int>(std::lround(n.region.v0()));
        const double inv_n = 1.0 / n.valid;
        for (int j = 0; j < side; ++j) {
          for (int i = 0; i < side; ++i) {
            const double u = u0 + i;
            const double v = v0 + j;
            const double w = m(2, 0) * u + m(2, 1) * v + m(2, 2);
            if (std::abs(w) < kDivergeTol) continue;
            const double su = (m(0, 0) * u + m(0, 1) * v + m(0, 2)) / w;
            const double sv = (m(1, 0) * u + m(1, 1) * v + m(1, 2)) / w;
            if (!n.tgt->contains(su, sv)) continue;
            const double r = n.ref->at(u0 + i - n.ref_u0, v0 + j - n.ref_v0);
            const double e = r - n.tgt->bilinear(su, sv);
            double dj_du, dj_dv;
            n.tgt->bilinear_grad(su, sv, &dj_du, &dj_dv);
            // d|e|/dJ = -sgn(e); chain through the projective division.
            const double c = -sgn(e) * g * inv_n;
            const double du_w = c * dj_du / w;
            const double dv_w = c * dj_dv / w;
            gh(0, 0) += du_w * u;
            gh(0, 1) += du_w * v;
            gh(0, 2) += du_w;
            gh(1, 0) += dv_w * u;
            gh(1, 1) += dv_w * v;
            gh(1, 2) += dv_w;
            const double dw = -(du_w * su + dv_w * sv);
            gh(2, 0) += dw * u;
            gh(2, 1) += dw * v;
            gh(2, 2) += dw;
          }
        }
        mats_[n.a].grad += gh;
        break;
      }
    }
  }

  for (int mi = static_cast<int>(mats_.size()) - 1; mi >= 0; --mi) {
    MatNode& n = mats_[mi];
    if (n.grad.isZero(0.0)) continue;
    switch (n.op) {
      case MatOp::Const:
        break;
      case MatOp::Mul:
        mats_[n.a].grad += n.grad * mats_[n.b].val.transpose();
        mats_[n.b].grad += mats_[n.a].val.transpose() * n.grad;
        break;
      case MatOp::Normalized: {
        const double s = mats_[n.a].val(2, 2);
        Mat3 ga = n.grad / s;
        ga(2, 2) -= n.grad.cwiseProduct(n.val).sum() / s;
        mats_[n.a].grad += ga;
        break;
      }
      case MatOp::Dlt:
        n.offgrad = solve_dlt_backward(n.cache, n.grad) * n.offset_scale;
        break;
    }
  }
}

}  // namespace skyreg::diff
