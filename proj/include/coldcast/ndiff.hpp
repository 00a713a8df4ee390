#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "coldcast/linalg.hpp"
#include "coldcast/params.hpp"

namespace coldcast {

enum class Act { identity, relu };

template <typename S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

// ---------------------------------------------------------------------------
// Dense layer: activation(W x + b).

template <typename S, typename W, typename B>
Vector<S> dense_forward(const Vector<S>& x, const W& weights, const B& bias, Act act) {
  if (weights.cols() != x.size()) {
    throw ShapeError("dense: weights " + shape_str(weights.rows(), weights.cols()) +
                     " vs input " + shape_str(x.size(), 1));
  }
  Vector<S> out = weights * x + bias.col(0);
  if (act == Act::relu) out = out.cwiseMax(S(0));
  return out;
}

// ---------------------------------------------------------------------------
// GRU cell, gate convention:
//   z = sigma(Wz x + Uz h + bz)
//   r = sigma(Wr x + Ur h + br)
//   n = tanh(Wn x + bn + r .* (Un h + bhn))
//   h' = (1 - z) .* n + z .* h

template <typename S>
struct GruWeights {
  ConstMatrixMap<S> wz, wr, wn, uz, ur, un;
  ConstMatrixMap<S> bz, br, bn, bhn;  // h x 1

  static GruWeights from(const ParamStore<S>& p, const std::string& prefix) {
    return GruWeights{p.view(prefix + ".wz"), p.view(prefix + ".wr"), p.view(prefix + ".wn"),
                      p.view(prefix + ".uz"), p.view(prefix + ".ur"), p.view(prefix + ".un"),
                      p.view(prefix + ".bz"), p.view(prefix + ".br"), p.view(prefix + ".bn"),
                      p.view(prefix + ".bhn")};
  }
};

template <typename S>
struct GruGrads {
  MatrixMap<S> wz, wr, wn, uz, ur, un, bz, br, bn, bhn;

  static GruGrads from(ParamStore<S>& g, const std::string& prefix) {
    return GruGrads{g.view(prefix + ".wz"), g.view(prefix + ".wr"), g.view(prefix + ".wn"),
                    g.view(prefix + ".uz"), g.view(prefix + ".ur"), g.view(prefix + ".un"),
                    g.view(prefix + ".bz"), g.view(prefix + ".br"), g.view(prefix + ".bn"),
                    g.view(prefix + ".bhn")};
  }
};

/// Per-step cache needed by the backward pass.
template <typename S>
struct GruStepCache {
  Vector<S> z, r, n, rec;  // rec = Un h_prev + bhn
};

template <typename S>
Vector<S> gru_step(const Vector<S>& x, const Vector<S>& h_prev, const GruWeights<S>& w,
                   GruStepCache<S>* cache = nullptr) {
  if (w.wz.cols() != x.size() || w.uz.cols() != h_prev.size()) {
    throw ShapeError("gru: input " + shape_str(x.size(), 1) + " hidden " +
                     shape_str(h_prev.size(), 1) + " vs weights " +
                     shape_str(w.wz.rows(), w.wz.cols()));
  }
  Vector<S> z = (w.wz * x + w.uz * h_prev + w.bz.col(0)).unaryExpr([](S v) { return sigmoid(v); });
  Vector<S> r = (w.wr * x + w.ur * h_prev + w.br.col(0)).unaryExpr([](S v) { return sigmoid(v); });
  Vector<S> rec = w.un * h_prev + w.bhn.col(0);
  Vector<S> n = (w.wn * x + w.bn.col(0) + r.cwiseProduct(rec)).array().tanh();
  Vector<S> h = (Vector<S>::Ones(z.size()) - z).cwiseProduct(n) + z.cwiseProduct(h_prev);
  if (cache) {
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->n = std::move(n);
    cache->rec = std::move(rec);
  }
  return h;
}

/// Reverse-mode step: given dL/dh_t, accumulates parameter gradients and
/// returns (dL/dx_t, dL/dh_{t-1}).
template <typename S>
void gru_step_backward(const Vector<S>& x, const Vector<S>& h_prev, const GruWeights<S>& w,
                       const GruStepCache<S>& c, const Vector<S>& dh, GruGrads<S>& g,
                       Vector<S>& dx, Vector<S>& dh_prev) {
  const auto ones = Vector<S>::Ones(dh.size());
  Vector<S> dz = dh.cwiseProduct(h_prev - c.n);
  Vector<S> dn = dh.cwiseProduct(ones - c.z);
  dh_prev = dh.cwiseProduct(c.z);

  Vector<S> dn_pre = dn.cwiseProduct(ones - c.n.cwiseProduct(c.n));
  Vector<S> drec = dn_pre.cwiseProduct(c.r);
  Vector<S> dr = dn_pre.cwiseProduct(c.rec);

  Vector<S> dz_pre = dz.cwiseProduct(c.z.cwiseProduct(ones - c.z));
  Vector<S> dr_pre = dr.cwiseProduct(c.r.cwiseProduct(ones - c.r));

  g.wz.noalias() += dz_pre * x.transpose();
  g.wr.noalias() += dr_pre * x.transpose();
  g.wn.noalias() += dn_pre * x.transpose();
  g.uz.noalias() += dz_pre * h_prev.transpose();
  g.ur.noalias() += dr_pre * h_prev.transpose();
  g.un.noalias() += drec * h_prev.transpose();
  g.bz.col(0) += dz_pre;
  g.br.col(0) += dr_pre;
  g.bn.col(0) += dn_pre;
  g.bhn.col(0) += drec;

  dx.noalias() = w.wz.transpose() * dz_pre;
  dx.noalias() += w.wr.transpose() * dr_pre;
  dx.noalias() += w.wn.transpose() * dn_pre;
  dh_prev.noalias() += w.uz.transpose() * dz_pre;
  dh_prev.noalias() += w.ur.transpose() * dr_pre;
  dh_prev.noalias() += w.un.transpose() * drec;
}

// ---------------------------------------------------------------------------
// Masked squared error, normalized by the number of observed entries so
// sparse and dense seasons produce comparable gradients. Masked-out entries
// are never read: their targets cannot influence loss or gradients.

template <typename S>
struct MaskedLoss {
  double loss = 0.0;
  Matrix<S> d_pred;
};

template <typename S>
MaskedLoss<S> masked_mse(const Matrix<S>& pred, const Matrixd& target,
                         const Matrix<std::uint8_t>& mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
      pred.rows() != mask.rows() || pred.cols() != mask.cols()) {
    throw ShapeError("masked_mse: pred " + shape_str(pred.rows(), pred.cols()) + ", target " +
                     shape_str(target.rows(), target.cols()) + ", mask " +
                     shape_str(mask.rows(), mask.cols()));
  }
  MaskedLoss<S> out;
  out.d_pred.setZero(pred.rows(), pred.cols());
  long count = 0;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (mask(i, j)) ++count;
    }
  }
  if (count == 0) return out;
  double inv = 1.0 / double(count);
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (!mask(i, j)) continue;
      double e = double(pred(i, j)) - target(i, j);
      out.loss += e * e * inv;
      out.d_pred(i, j) = S(2.0 * e * inv);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam with bias correction. One state per ParamStore; update can be
// restricted to a contiguous [lo, hi) coordinate range for head/embedding
// finetuning (everything outside stays bitwise untouched).

template <typename S>
class AdamState {
 public:
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(const ParamStore<S>& params, double lr_ = 1e-3)
      : lr(lr_), m_(params.size(), S(0)), v_(params.size(), S(0)) {}

  long step_count() const { return t_; }

  void step(ParamStore<S>& params, const ParamStore<S>& grads) {
    step_range(params, grads, 0, params.size());
  }

  void step_range(ParamStore<S>& params, const ParamStore<S>& grads, std::size_t lo,
                  std::size_t hi) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw ShapeError("adam: parameter/gradient size mismatch");
    }
    check_finite(grads, lo, hi);
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, double(t_));
    double bc2 = 1.0 - std::pow(beta2, double(t_));
    S* p = params.data();
    const S* g = grads.data();
    for (std::size_t i = lo; i < hi; ++i) {
      m_[i] = S(beta1) * m_[i] + S(1.0 - beta1) * g[i];
      v_[i] = S(beta2) * v_[i] + S(1.0 - beta2) * g[i] * g[i];
      double mhat = double(m_[i]) / bc1;
      double vhat = double(v_[i]) / bc2;
      p[i] -= S(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }

 private:
  void check_finite(const ParamStore<S>& grads, std::size_t lo, std::size_t hi) const {
    const S* g = grads.data();
    for (std::size_t i = lo; i < hi; ++i) {
      if (!std::isfinite(double(g[i]))) {
        throw NumericError("non-finite gradient in block " + grads.block_of(i).name);
      }
    }
  }

  long t_ = 0;
  std::vector<S> m_, v_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient verification. `loss_fn` must be a pure function
// of the parameter store. Coordinates are subsampled deterministically per
// block; the worst offender is reported by block and flat index.

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t worst_coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

template <typename LossFn>
GradCheckReport grad_check(ParamStore<double>& params, const ParamStore<double>& analytic_grads,
                           LossFn&& loss_fn, double epsilon = 1e-5,
                           std::size_t max_coords_per_block = 40) {
  GradCheckReport report;
  for (const auto& b : params.layout().blocks()) {
    std::size_t stride = std::max<std::size_t>(1, b.size() / max_coords_per_block);
    for (std::size_t k = 0; k < b.size(); k += stride) {
      std::size_t i = b.offset + k;
      double saved = params.data()[i];
      params.data()[i] = saved + epsilon;
      double up = loss_fn(params);
      params.data()[i] = saved - epsilon;
      double down = loss_fn(params);
      params.data()[i] = saved;

      double numeric = (up - down) / (2.0 * epsilon);
      double analytic = analytic_grads.data()[i];
      // The floor keeps FD roundoff on near-zero coordinates from reading as
      // error; a genuinely wrong gradient lands orders of magnitude above it.
      double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      double rel = std::abs(numeric - analytic) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_block = b.name;
        report.worst_coord = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace coldcast
