#pragma once

#include <string>
#include <vector>

#include "coldcast/models.hpp"

namespace coldcast {

// ---------------------------------------------------------------------------
// Finite-difference verification of the full model family on a short random
// sequence. Every task is pushed through the loss so all heads and embedding
// rows carry gradient.

struct VariantCheck {
  std::string variant;
  GradCheckReport report;
};

struct GradCheckData {
  std::vector<Matrixd> x;                   // per task
  std::vector<Matrixd> y;
  std::vector<Matrix<std::uint8_t>> mask;
};

inline GradCheckData make_gradcheck_data(std::uint64_t seed, int n_tasks, int T, int input_dim) {
  GradCheckData d;
  Rng rng(mix_seed(seed, "gradcheck-data"));
  for (int task = 0; task < n_tasks; ++task) {
    Matrixd x(T, input_dim), y(T, ModelSpec::output_dim);
    Matrix<std::uint8_t> mask(T, ModelSpec::output_dim);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.next_normal();
    }
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        y(i, j) = -15.0 + 5.0 * rng.next_normal();
        mask(i, j) = rng.next_unit() < 0.7 ? 1 : 0;
      }
    }
    d.x.push_back(std::move(x));
    d.y.push_back(std::move(y));
    d.mask.push_back(std::move(mask));
  }
  return d;
}

inline double gradcheck_loss(const ColdModel<double>& model, const GradCheckData& d) {
  double total = 0.0;
  for (int task = 0; task < model.spec.n_tasks; ++task) {
    Matrixd pred = model.forward(d.x[task], task);
    total += masked_mse(pred, d.y[task], d.mask[task]).loss;
  }
  return total;
}

/// Checks one seeded model; `fault_block` (if set) doubles that block's
/// analytic gradient so the check must fail and name it.
inline GradCheckReport check_model_gradients(ColdModel<double>& model, const GradCheckData& d,
                                             double epsilon = 1e-5,
                                             std::size_t coords_per_block = 30,
                                             const std::string& fault_block = "") {
  ParamStore<double> grads = model.zero_grads();
  ModelCache<double> cache;
  for (int task = 0; task < model.spec.n_tasks; ++task) {
    Matrixd pred = model.forward_cached(d.x[task], task, cache);
    MaskedLoss<double> ml = masked_mse(pred, d.y[task], d.mask[task]);
    model.backward(d.x[task], cache, task, ml.d_pred, grads);
  }
  if (!fault_block.empty()) {
    grads.view(fault_block) *= 2.0;
  }
  return grad_check(
      model.params, grads, [&](ParamStore<double>&) { return gradcheck_loss(model, d); },
      epsilon, coords_per_block);
}

/// Desk-scale check of all five variants with shared data.
inline std::vector<VariantCheck> run_model_gradcheck(std::uint64_t seed, int T = 20,
                                                     double epsilon = 1e-5,
                                                     std::size_t coords_per_block = 30) {
  const int n_tasks = 3;
  GradCheckData data = make_gradcheck_data(seed, n_tasks, T, 12);
  std::vector<VariantCheck> out;
  for (Variant v : {Variant::stl, Variant::multi_head, Variant::add_embed, Variant::concat_embed,
                    Variant::mult_embed}) {
    ModelSpec spec;
    spec.desk_scale();
    spec.variant = v;
    spec.n_tasks = v == Variant::stl ? 1 : n_tasks;
    ColdModel<double> model = ColdModel<double>::seeded(spec, mix_seed(seed, variant_name(v)));
    out.push_back({variant_name(v), check_model_gradients(model, data, epsilon, coords_per_block)});
  }
  return out;
}

}  // namespace coldcast
