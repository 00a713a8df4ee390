#pragma once

#include <string>
#include <vector>

#include "coldcast/dataio.hpp"
#include "coldcast/models.hpp"

namespace coldcast {

// ---------------------------------------------------------------------------
// Training-ready view of a corpus under one train/test split: z-scored
// feature matrices plus label/mask tensors, normalizer fit on train days only.

template <typename S>
struct SeasonTensor {
  int cultivar = 0;
  int season_index = 0;
  int start_year = 0;
  Matrix<S> x;                 // T x F, normalized
  Matrixd y;                   // T x 3, degrees C
  Matrix<std::uint8_t> mask;   // T x 3 label presence
  std::vector<Date> dates;
};

template <typename S>
struct TensorCorpus {
  FeatureStats stats;
  std::vector<std::string> cultivar_names;
  std::vector<std::vector<SeasonTensor<S>>> seasons;  // [cultivar][season_index]
};

template <typename S>
TensorCorpus<S> build_tensor_corpus(const Corpus& corpus,
                                    const std::vector<std::vector<int>>& train_indices) {
  TensorCorpus<S> out;
  out.stats = fit_normalizer(corpus, train_indices);
  for (const auto& c : corpus.cultivars) {
    out.cultivar_names.push_back(c.name);
    std::vector<SeasonTensor<S>> tensors;
    for (std::size_t si = 0; si < c.seasons.size(); ++si) {
      const Season& season = c.seasons[si];
      SeasonTensor<S> st;
      st.cultivar = c.id;
      st.season_index = int(si);
      st.start_year = season.start_year;
      st.x = apply_normalizer(out.stats, season, corpus.features).template cast<S>();
      season_labels(season, st.y, st.mask);
      for (const auto& d : season.days) st.dates.push_back(d.date);
      tensors.push_back(std::move(st));
    }
    out.seasons.push_back(std::move(tensors));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop: epochs of season batches, gradients averaged across the
// batch, Adam per batch. Deterministic in (model init, data, run_seed).

struct TrainConfig {
  double lr = 1e-3;
  int batch = 12;
  int epochs = 400;

  void validate() const {
    if (batch < 1) throw UsageError("batch must be >= 1");
    if (epochs < 0) throw UsageError("epochs must be >= 0");
  }
};

struct TrainResult {
  std::vector<double> epoch_loss;
  long steps = 0;
};

/// (cultivar, season_index) pairs; task_map sends cultivar id to the model's
/// task id (identity for MTL, 0 for single-task training).
struct TrainItem {
  int cultivar;
  int season_index;
};

template <typename S>
TrainResult train_model(ColdModel<S>& model, const TensorCorpus<S>& data,
                        const std::vector<std::vector<int>>& train_indices,
                        const std::vector<int>& task_map, const TrainConfig& cfg,
                        std::uint64_t run_seed, std::size_t trainable_lo = 0,
                        std::size_t trainable_hi = std::size_t(-1)) {
  cfg.validate();
  std::vector<TrainItem> items;
  for (std::size_t c = 0; c < train_indices.size(); ++c) {
    for (int si : train_indices[c]) items.push_back({int(c), si});
  }
  if (items.empty()) throw DataError("no training seasons");

  trainable_hi = std::min(trainable_hi, model.params.size());
  AdamState<S> adam(model.params, cfg.lr);
  ParamStore<S> grads = model.zero_grads();
  ModelCache<S> cache;
  Rng shuffle_rng(mix_seed(run_seed, "shuffle"));

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(items);
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (std::size_t b = 0; b < items.size(); b += cfg.batch) {
      std::size_t end = std::min(items.size(), b + cfg.batch);
      double batch_scale = 1.0 / double(end - b);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t i = b; i < end; ++i) {
        const SeasonTensor<S>& st = data.seasons[items[i].cultivar][items[i].season_index];
        int task = task_map[items[i].cultivar];
        Matrix<S> pred = model.forward_cached(st.x, task, cache);
        MaskedLoss<S> ml = masked_mse(pred, st.y, st.mask);
        batch_loss += ml.loss * batch_scale;
        ml.d_pred *= S(batch_scale);
        model.backward(st.x, cache, task, ml.d_pred, grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(n_batches));
      }
      adam.step_range(model.params, grads, trainable_lo, trainable_hi);
      epoch_loss += batch_loss;
      ++n_batches;
      ++result.steps;
    }
    result.epoch_loss.push_back(epoch_loss / n_batches);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation: pooled RMSE over the observed LTE50 entries of the given
// seasons, in degrees C.

struct EvalResult {
  double rmse = 0.0;
  long n_labels = 0;
};

template <typename S, typename PredictFn>
EvalResult evaluate_with(const TensorCorpus<S>& data,
                         const std::vector<std::vector<int>>& eval_indices,
                         PredictFn&& predict) {
  double sq = 0.0;
  long n = 0;
  for (std::size_t c = 0; c < eval_indices.size(); ++c) {
    for (int si : eval_indices[c]) {
      const SeasonTensor<S>& st = data.seasons[c][si];
      Matrix<S> pred = predict(int(c), st);
      for (Eigen::Index t = 0; t < st.mask.rows(); ++t) {
        if (st.mask(t, kLte50Channel)) {
          double e = double(pred(t, kLte50Channel)) - st.y(t, kLte50Channel);
          sq += e * e;
          ++n;
        }
      }
    }
  }
  if (n == 0) throw DataError("no labeled LTE50 entries in evaluation seasons");
  return {std::sqrt(sq / n), n};
}

template <typename S>
EvalResult evaluate(const ColdModel<S>& model, const TensorCorpus<S>& data,
                    const std::vector<std::vector<int>>& eval_indices,
                    const std::vector<int>& task_map) {
  return evaluate_with<S>(data, eval_indices, [&](int c, const SeasonTensor<S>& st) {
    return model.forward(st.x, task_map[c]);
  });
}

// ---------------------------------------------------------------------------
// Finetune training for the two transfer adapters. The base model is frozen;
// only the new head (range-restricted Adam) or the combination coefficients
// receive updates.

template <typename S>
TrainResult finetune_head(HeadAdapter<S>& adapter, const TensorCorpus<S>& data, int cultivar,
                          const std::vector<int>& train_seasons, const TrainConfig& cfg,
                          std::uint64_t run_seed) {
  std::vector<std::vector<int>> train_idx(data.seasons.size());
  train_idx[cultivar] = train_seasons;
  std::vector<int> task_map(data.seasons.size(), 0);
  task_map[cultivar] = adapter.new_task;
  return train_model(adapter.model, data, train_idx, task_map, cfg, run_seed,
                     adapter.trainable_lo, adapter.trainable_hi);
}

template <typename S>
TrainResult finetune_embedding(EmbedAdapter<S>& adapter, const TensorCorpus<S>& data,
                               int cultivar, const std::vector<int>& train_seasons,
                               const TrainConfig& cfg, std::uint64_t run_seed) {
  cfg.validate();
  if (train_seasons.empty()) throw DataError("no training seasons");
  const ColdModel<S>& base = *adapter.base;

  // Alpha lives in its own single-block store so Adam and the non-finite
  // checks apply unchanged.
  auto layout = std::make_shared<ParamLayout>();
  layout->add("alpha", base.spec.n_tasks, 1);
  ParamStore<S> alpha_store{std::shared_ptr<const ParamLayout>(layout)};
  VectorMap<S>(alpha_store.data(), base.spec.n_tasks) = adapter.alpha;

  AdamState<S> adam(alpha_store, cfg.lr);
  ParamStore<S> alpha_grads{std::shared_ptr<const ParamLayout>(layout)};
  ParamStore<S> scratch = base.zero_grads();
  ModelCache<S> cache;
  Rng shuffle_rng(mix_seed(run_seed, "shuffle"));
  std::vector<int> items = train_seasons;

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(items);
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (std::size_t b = 0; b < items.size(); b += cfg.batch) {
      std::size_t end = std::min(items.size(), b + cfg.batch);
      double batch_scale = 1.0 / double(end - b);
      alpha_grads.set_zero();
      VectorMap<S> dalpha(alpha_grads.data(), base.spec.n_tasks);
      VectorMap<S> alpha(alpha_store.data(), base.spec.n_tasks);
      adapter.alpha = alpha;
      Vector<S> e = adapter.embedding();
      double batch_loss = 0.0;
      for (std::size_t i = b; i < end; ++i) {
        const SeasonTensor<S>& st = data.seasons[cultivar][items[i]];
        Matrix<S> pred = base.forward_cached(st.x, 0, cache, &e);
        MaskedLoss<S> ml = masked_mse(pred, st.y, st.mask);
        batch_loss += ml.loss * batch_scale;
        ml.d_pred *= S(batch_scale);
        Vector<S> d_embed;
        scratch.set_zero();
        base.backward(st.x, cache, 0, ml.d_pred, scratch, &d_embed);
        dalpha += base.params.view("embed") * d_embed;
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite finetune loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(n_batches));
      }
      adam.step(alpha_store, alpha_grads);
      epoch_loss += batch_loss;
      ++n_batches;
      ++result.steps;
    }
    result.epoch_loss.push_back(epoch_loss / n_batches);
  }
  adapter.alpha = VectorMap<S>(alpha_store.data(), base.spec.n_tasks);
  return result;
}

/// Seed for one training run; experiments share this derivation so matched
/// conditions across suites produce bitwise-identical models.
inline std::uint64_t train_seed(std::uint64_t base_seed, int trial, const std::string& tag) {
  return mix_seed(base_seed, "train", std::uint64_t(trial), tag);
}

}  // namespace coldcast
