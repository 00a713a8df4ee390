#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "coldcast/ferguson.hpp"
#include "coldcast/harness.hpp"

namespace coldcast {

// ---------------------------------------------------------------------------
// The four experiment suites. Each emits a long-form report (one row per
// trial x model x cultivar) plus a wide table mirroring the corresponding
// results table, and is bitwise reproducible from (corpus, config, seed).

struct ExperimentSetup {
  int n_trials = 3;
  std::uint64_t split_seed = 42;
  std::uint64_t seed = 0;  // training seed base
  TrainConfig train;
  TrainConfig finetune;
  ModelSpec base_spec;  // dims only; variant/n_tasks filled per run
  FergusonGrid grid;
  int jobs = 1;
  std::string config_hash;
};

struct ReportRow {
  std::string experiment;
  int trial = 0;
  std::string cultivar;
  std::string model;
  double rmse = 0.0;
  long n_test_labels = 0;
  std::uint64_t seed = 0;
};

struct Report {
  std::vector<ReportRow> rows;
  std::string table_csv;
  // file name -> contents, written under the run directory by the CLI
  std::vector<std::pair<std::string, std::string>> extra_files;

  std::string long_csv(const std::string& config_hash) const {
    std::ostringstream out;
    out << "experiment,trial,cultivar,model,rmse_lte50,n_test_labels,seed,config_hash\n";
    for (const auto& r : rows) {
      out << r.experiment << ',' << r.trial << ',' << r.cultivar << ',' << r.model << ','
          << format_double(r.rmse) << ',' << r.n_test_labels << ',' << r.seed << ','
          << config_hash << '\n';
    }
    return out.str();
  }
};

// Column order of the main results table.
inline const std::vector<Variant>& mtl_variants() {
  static const std::vector<Variant> v = {Variant::mult_embed, Variant::concat_embed,
                                         Variant::add_embed, Variant::multi_head};
  return v;
}

inline std::string column_label(Variant v) {
  switch (v) {
    case Variant::mult_embed: return "MultE";
    case Variant::concat_embed: return "ConcatE";
    case Variant::add_embed: return "AddE";
    case Variant::multi_head: return "MultiH";
    case Variant::stl: return "Single";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Corpus projection: subset of cultivars with dense reindexed ids. `members`
// lists original ids in the order they take in the sub-corpus.

inline Corpus project_corpus(const Corpus& full, const std::vector<int>& members) {
  Corpus out;
  out.features = full.features;
  for (std::size_t k = 0; k < members.size(); ++k) {
    CultivarData c = full.cultivars.at(members[k]);
    c.id = int(k);
    for (auto& s : c.seasons) s.cultivar_id = c.id;
    out.cultivars.push_back(std::move(c));
  }
  return out;
}

inline std::vector<std::vector<int>> project_index_lists(
    const std::vector<std::vector<int>>& full, const std::vector<int>& members) {
  std::vector<std::vector<int>> out;
  for (int m : members) out.push_back(full.at(m));
  return out;
}

template <typename S>
ColdModel<S> train_variant(const ExperimentSetup& ex, Variant v, int n_tasks,
                           const TensorCorpus<S>& data,
                           const std::vector<std::vector<int>>& train_idx,
                           const std::vector<int>& task_map, std::uint64_t run_seed) {
  ModelSpec spec = ex.base_spec;
  spec.variant = v;
  spec.n_tasks = n_tasks;
  if (v == Variant::add_embed || v == Variant::mult_embed) spec.embed_dim = spec.input_dim;
  ColdModel<S> model = ColdModel<S>::seeded(spec, mix_seed(run_seed, "init"));
  train_model(model, data, train_idx, task_map, ex.train, run_seed);
  return model;
}

inline std::vector<int> identity_task_map(std::size_t n) {
  std::vector<int> m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = int(i);
  return m;
}

// ---------------------------------------------------------------------------
// Per-day prediction dumps (test seasons), one file per model x trial.

template <typename S>
std::string dump_predictions(const Corpus& corpus, const TensorCorpus<S>& data,
                             const std::vector<std::vector<int>>& test_idx,
                             const std::function<Matrix<S>(int, const SeasonTensor<S>&)>& predict) {
  std::ostringstream out;
  out << "cultivar,season,date,pred_lte10,pred_lte50,pred_lte90,label_lte50\n";
  for (std::size_t c = 0; c < test_idx.size(); ++c) {
    for (int si : test_idx[c]) {
      const SeasonTensor<S>& st = data.seasons[c][si];
      Matrix<S> pred = predict(int(c), st);
      for (Eigen::Index t = 0; t < pred.rows(); ++t) {
        out << corpus.cultivars[c].name << ',' << st.start_year << ',' << to_iso(st.dates[t])
            << ',' << format_double(double(pred(t, 0))) << ','
            << format_double(double(pred(t, 1))) << ',' << format_double(double(pred(t, 2)))
            << ',';
        if (st.mask(t, kLte50Channel)) out << format_double(st.y(t, kLte50Channel));
        out << '\n';
      }
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Main comparison (per-cultivar RMSE of every model family).

struct CellKey {
  int trial;
  std::string model;
  int cultivar;
  bool operator<(const CellKey& o) const {
    return std::tie(trial, model, cultivar) < std::tie(o.trial, o.model, o.cultivar);
  }
};

template <typename S>
Report run_main_comparison(const Corpus& corpus, const ExperimentSetup& ex,
                           bool dump_preds = true) {
  const int C = corpus.n_cultivars();
  if (C < 2) throw DataError("main comparison needs >= 2 cultivars");
  auto splits = make_trial_splits(corpus, ex.n_trials, ex.split_seed);

  Report report;
  std::map<CellKey, EvalResult> cells;
  std::map<CellKey, std::uint64_t> cell_seeds;

  for (int t = 0; t < ex.n_trials; ++t) {
    const auto& split = splits[t];
    TensorCorpus<S> data = build_tensor_corpus<S>(corpus, split.train);
    auto task_map = identity_task_map(C);

    struct Job {
      Variant variant;
      int cultivar;  // -1 = MTL over all
    };
    std::vector<Job> jobs;
    for (Variant v : mtl_variants()) jobs.push_back({v, -1});
    for (int c = 0; c < C; ++c) jobs.push_back({Variant::stl, c});

    std::vector<std::vector<std::pair<CellKey, EvalResult>>> results(jobs.size());
    std::vector<std::string> dumps(jobs.size());
    std::vector<std::uint64_t> seeds(jobs.size());
    parallel_for(jobs.size(), ex.jobs, [&](std::size_t j) {
      const Job& job = jobs[j];
      if (job.cultivar < 0) {
        std::uint64_t rs = train_seed(ex.seed, t, variant_name(job.variant));
        seeds[j] = rs;
        ColdModel<S> model = train_variant<S>(ex, job.variant, C, data, split.train, task_map, rs);
        for (int c = 0; c < C; ++c) {
          std::vector<std::vector<int>> eval_idx(C);
          eval_idx[c] = split.test[c];
          EvalResult r = evaluate(model, data, eval_idx, task_map);
          results[j].push_back({{t, column_label(job.variant), c}, r});
        }
        if (dump_preds) {
          dumps[j] = dump_predictions<S>(corpus, data, split.test,
                                         [&](int c, const SeasonTensor<S>& st) {
                                           return model.forward(st.x, task_map[c]);
                                         });
        }
      } else {
        int c = job.cultivar;
        std::uint64_t rs = train_seed(ex.seed, t, "stl." + std::to_string(c));
        seeds[j] = rs;
        std::vector<std::vector<int>> train_idx(C);
        train_idx[c] = split.train[c];
        std::vector<int> stl_map(C, 0);
        ColdModel<S> model = train_variant<S>(ex, Variant::stl, 1, data, train_idx, stl_map, rs);
        std::vector<std::vector<int>> eval_idx(C);
        eval_idx[c] = split.test[c];
        EvalResult r = evaluate(model, data, eval_idx, stl_map);
        results[j].push_back({{t, "Single", c}, r});
        if (dump_preds) {
          std::vector<std::vector<int>> test_idx(C);
          test_idx[c] = split.test[c];
          dumps[j] = dump_predictions<S>(corpus, data, test_idx,
                                         [&](int, const SeasonTensor<S>& st) {
                                           return model.forward(st.x, 0);
                                         });
        }
      }
    });

    for (std::size_t j = 0; j < jobs.size(); ++j) {
      for (auto& [key, r] : results[j]) {
        cells[key] = r;
        cell_seeds[key] = seeds[j];
      }
      if (dump_preds && !dumps[j].empty()) {
        std::string model_label =
            jobs[j].cultivar < 0 ? column_label(jobs[j].variant)
                                 : "Single." + corpus.cultivars[jobs[j].cultivar].name;
        report.extra_files.push_back(
            {"predictions_" + model_label + "_trial" + std::to_string(t) + ".csv", dumps[j]});
      }
    }

    // Ferguson baseline: grid search per cultivar on its training seasons.
    std::ostringstream ferguson_dump;
    ferguson_dump << "cultivar,season,date,pred_lte10,pred_lte50,pred_lte90,label_lte50\n";
    for (int c = 0; c < C; ++c) {
      std::vector<const Season*> train_seasons, test_seasons;
      for (int si : split.train[c]) train_seasons.push_back(&corpus.cultivars[c].seasons[si]);
      for (int si : split.test[c]) test_seasons.push_back(&corpus.cultivars[c].seasons[si]);
      GridSearchResult gs = grid_search(train_seasons, ex.grid, ex.jobs);
      double rmse = ferguson_rmse(test_seasons, gs.params);
      long n_labels = 0;
      for (const Season* s : test_seasons) {
        auto pred = ferguson_predict(*s, gs.params);
        for (std::size_t i = 0; i < s->days.size(); ++i) {
          const DayRecord& d = s->days[i];
          if (d.label_present(kLte50Channel)) ++n_labels;
          if (dump_preds) {
            ferguson_dump << corpus.cultivars[c].name << ',' << s->start_year << ','
                          << to_iso(d.date) << ",," << format_double(pred[i]) << ",,"
                          << (d.lte[kLte50Channel] ? format_double(*d.lte[kLte50Channel])
                                                   : std::string())
                          << '\n';
          }
        }
      }
      cells[{t, "Ferguson", c}] = {rmse, n_labels};
      cell_seeds[{t, "Ferguson", c}] = 0;
    }
    if (dump_preds) {
      report.extra_files.push_back(
          {"predictions_Ferguson_trial" + std::to_string(t) + ".csv", ferguson_dump.str()});
    }
  }

  // Long-form rows in canonical order.
  std::vector<std::string> columns = {"MultE", "ConcatE", "AddE", "MultiH", "Single", "Ferguson"};
  for (int t = 0; t < ex.n_trials; ++t) {
    for (const auto& m : columns) {
      for (int c = 0; c < C; ++c) {
        const EvalResult& r = cells.at({t, m, c});
        report.rows.push_back({"compare", t, corpus.cultivars[c].name, m, r.rmse, r.n_labels,
                               cell_seeds.at({t, m, c})});
      }
    }
  }

  // Wide table: per-cultivar rows, 3-trial means.
  std::ostringstream table;
  table << "cultivar";
  for (const auto& m : columns) table << ',' << m;
  table << '\n';
  for (int c = 0; c < C; ++c) {
    table << corpus.cultivars[c].name;
    for (const auto& m : columns) {
      double sum = 0.0;
      for (int t = 0; t < ex.n_trials; ++t) sum += cells.at({t, m, c}).rmse;
      table << ',' << format_double(sum / ex.n_trials);
    }
    table << '\n';
  }
  report.table_csv = table.str();
  return report;
}

// ---------------------------------------------------------------------------
// Dataset-size ablation: truncate the target cultivar's training pool to each
// size (nested seeded subsampling), train MultiH and STL, evaluate the target.

template <typename S>
Report run_dataset_size_ablation(const Corpus& corpus, const ExperimentSetup& ex,
                                 const std::vector<int>& targets,
                                 const std::vector<std::string>& sizes) {
  const int C = corpus.n_cultivars();
  auto splits = make_trial_splits(corpus, ex.n_trials, ex.split_seed);
  Report report;

  struct SizedKey {
    int trial, target;
    std::string size, model;
    bool operator<(const SizedKey& o) const {
      return std::tie(trial, target, size, model) < std::tie(o.trial, o.target, o.size, o.model);
    }
  };
  std::map<SizedKey, EvalResult> cells;
  std::map<SizedKey, std::uint64_t> seeds;

  for (int t = 0; t < ex.n_trials; ++t) {
    const auto& split = splits[t];
    for (int target : targets) {
      const auto& pool = split.train[target];
      std::vector<int> shuffled = pool;
      Rng rng(mix_seed(ex.split_seed, "subsample", std::uint64_t(t), std::uint64_t(target)));
      rng.shuffle(shuffled);

      for (const std::string& size : sizes) {
        std::vector<int> subset;
        if (size == "all") {
          subset = pool;
        } else {
          int n = std::stoi(size);
          if (n > int(shuffled.size())) {
            throw DataError("size " + size + " exceeds the " + std::to_string(shuffled.size()) +
                            " training seasons of cultivar " + corpus.cultivars[target].name);
          }
          subset.assign(shuffled.begin(), shuffled.begin() + n);
          std::sort(subset.begin(), subset.end());
        }

        auto train_idx = split.train;
        train_idx[target] = subset;
        TensorCorpus<S> data = build_tensor_corpus<S>(corpus, train_idx);
        auto task_map = identity_task_map(C);
        std::vector<std::vector<int>> eval_idx(C);
        eval_idx[target] = split.test[target];

        std::uint64_t mtl_seed = train_seed(ex.seed, t, "multih");
        ColdModel<S> mtl = train_variant<S>(ex, Variant::multi_head, C, data, train_idx,
                                            task_map, mtl_seed);
        cells[{t, target, size, "MultiH"}] = evaluate(mtl, data, eval_idx, task_map);
        seeds[{t, target, size, "MultiH"}] = mtl_seed;

        std::vector<std::vector<int>> stl_idx(C);
        stl_idx[target] = subset;
        std::vector<int> stl_map(C, 0);
        std::uint64_t stl_seed = train_seed(ex.seed, t, "stl." + std::to_string(target));
        ColdModel<S> stl = train_variant<S>(ex, Variant::stl, 1, data, stl_idx, stl_map, stl_seed);
        cells[{t, target, size, "Single"}] = evaluate(stl, data, eval_idx, stl_map);
        seeds[{t, target, size, "Single"}] = stl_seed;
      }
    }
  }

  for (int t = 0; t < ex.n_trials; ++t) {
    for (int target : targets) {
      for (const auto& model : {std::string("MultiH"), std::string("Single")}) {
        for (const auto& size : sizes) {
          const EvalResult& r = cells.at({t, target, size, model});
          report.rows.push_back({"ablate-size", t, corpus.cultivars[target].name,
                                 model + "[" + size + "]", r.rmse, r.n_labels,
                                 seeds.at({t, target, size, model})});
        }
      }
    }
  }

  std::ostringstream table;
  table << "cultivar";
  for (const auto& size : sizes) table << ',' << (size == "all" ? "All" : size);
  table << '\n';
  for (int target : targets) {
    for (const auto& [model, label] :
         {std::pair<std::string, std::string>{"MultiH", "MTL"}, {"Single", "STL"}}) {
      table << corpus.cultivars[target].name << " (" << label << ")";
      for (const auto& size : sizes) {
        double sum = 0.0;
        for (int t = 0; t < ex.n_trials; ++t) sum += cells.at({t, target, size, model}).rmse;
        table << ',' << format_double(sum / ex.n_trials);
      }
      table << '\n';
    }
  }
  report.table_csv = table.str();
  return report;
}

// ---------------------------------------------------------------------------
// Task-subset ablation: MultiH trained on high/low/mixed season-count halves,
// reported only for member cultivars; All and Single columns for reference.

struct TaskSubsets {
  std::vector<int> ranked;  // cultivar ids, most seasons first
  std::vector<int> high, low, mix;
};

inline TaskSubsets choose_task_subsets(const Corpus& corpus) {
  const int C = corpus.n_cultivars();
  TaskSubsets s;
  s.ranked.resize(C);
  for (int i = 0; i < C; ++i) s.ranked[i] = i;
  std::stable_sort(s.ranked.begin(), s.ranked.end(), [&](int a, int b) {
    return corpus.cultivars[a].seasons.size() > corpus.cultivars[b].seasons.size();
  });
  int k = C >= 20 ? 10 : (C + 1) / 2;
  if (k > C) throw DataError("task subset larger than corpus");
  s.high.assign(s.ranked.begin(), s.ranked.begin() + k);
  s.low.assign(s.ranked.end() - k, s.ranked.end());
  // Alternate the extremes of the ranking until k members are drawn.
  int lo = 0, hi = C - 1;
  while (int(s.mix.size()) < k) {
    s.mix.push_back(s.ranked[lo++]);
    if (int(s.mix.size()) < k) s.mix.push_back(s.ranked[hi--]);
  }
  return s;
}

template <typename S>
Report run_task_subset_ablation(const Corpus& corpus, const ExperimentSetup& ex) {
  const int C = corpus.n_cultivars();
  auto splits = make_trial_splits(corpus, ex.n_trials, ex.split_seed);
  TaskSubsets subsets = choose_task_subsets(corpus);

  struct SubsetRun {
    std::string label;
    std::vector<int> members;
  };
  std::vector<SubsetRun> runs = {{"High", subsets.high},
                                 {"Low", subsets.low},
                                 {"Mix", subsets.mix},
                                 {"All", identity_task_map(C)}};

  Report report;
  std::map<CellKey, EvalResult> cells;
  std::map<CellKey, std::uint64_t> seeds;

  for (int t = 0; t < ex.n_trials; ++t) {
    const auto& split = splits[t];
    for (const auto& run : runs) {
      Corpus sub = project_corpus(corpus, run.members);
      auto train_idx = project_index_lists(split.train, run.members);
      auto test_idx = project_index_lists(split.test, run.members);
      TensorCorpus<S> data = build_tensor_corpus<S>(sub, train_idx);
      auto task_map = identity_task_map(run.members.size());
      std::uint64_t rs = train_seed(ex.seed, t, "multih");
      ColdModel<S> model = train_variant<S>(ex, Variant::multi_head, int(run.members.size()),
                                            data, train_idx, task_map, rs);
      for (std::size_t k = 0; k < run.members.size(); ++k) {
        std::vector<std::vector<int>> eval_idx(run.members.size());
        eval_idx[k] = test_idx[k];
        cells[{t, run.label, run.members[k]}] = evaluate(model, data, eval_idx, task_map);
        seeds[{t, run.label, run.members[k]}] = rs;
      }
    }

    // Single column: per-cultivar STL, matched to the main comparison.
    TensorCorpus<S> data = build_tensor_corpus<S>(corpus, split.train);
    for (int c = 0; c < C; ++c) {
      std::vector<std::vector<int>> train_idx(C), eval_idx(C);
      train_idx[c] = split.train[c];
      eval_idx[c] = split.test[c];
      std::vector<int> stl_map(C, 0);
      std::uint64_t rs = train_seed(ex.seed, t, "stl." + std::to_string(c));
      ColdModel<S> model = train_variant<S>(ex, Variant::stl, 1, data, train_idx, stl_map, rs);
      cells[{t, "Single", c}] = evaluate(model, data, eval_idx, stl_map);
      seeds[{t, "Single", c}] = rs;
    }
  }

  std::vector<std::string> columns = {"High", "Low", "Mix", "All", "Single"};
  for (int t = 0; t < ex.n_trials; ++t) {
    for (const auto& m : columns) {
      for (int c : subsets.ranked) {
        auto it = cells.find({t, m, c});
        if (it == cells.end()) continue;
        std::string model = m == "Single" ? "Single" : "MultiH[" + m + "]";
        report.rows.push_back({"ablate-tasks", t, corpus.cultivars[c].name, model,
                               it->second.rmse, it->second.n_labels, seeds.at({t, m, c})});
      }
    }
  }

  std::ostringstream table;
  table << "cultivar";
  for (const auto& m : columns) table << ',' << m;
  table << '\n';
  for (int c : subsets.ranked) {
    table << corpus.cultivars[c].name;
    for (const auto& m : columns) {
      bool present = cells.count({0, m, c}) > 0;
      table << ',';
      if (present) {
        double sum = 0.0;
        for (int t = 0; t < ex.n_trials; ++t) sum += cells.at({t, m, c}).rmse;
        table << format_double(sum / ex.n_trials);
      }
    }
    table << '\n';
  }
  report.table_csv = table.str();
  return report;
}

// ---------------------------------------------------------------------------
// Transfer: leave one cultivar out, train each MTL variant, finetune its
// adapter on the held-out cultivar, and report (MTL-with-c - finetuned) RMSE
// so positive deltas mean transfer wins.

template <typename S>
Report run_transfer_experiment(const Corpus& corpus, const ExperimentSetup& ex) {
  const int C = corpus.n_cultivars();
  if (C < 3) throw DataError("transfer experiment needs >= 3 cultivars");
  auto splits = make_trial_splits(corpus, ex.n_trials, ex.split_seed);

  // Column order of the transfer table.
  const std::vector<Variant> variants = {Variant::concat_embed, Variant::mult_embed,
                                         Variant::add_embed, Variant::multi_head};

  Report report;
  std::map<CellKey, double> with_c, finetuned;
  std::map<CellKey, std::uint64_t> ft_seeds;

  for (int t = 0; t < ex.n_trials; ++t) {
    const auto& split = splits[t];
    TensorCorpus<S> full_data = build_tensor_corpus<S>(corpus, split.train);
    auto full_map = identity_task_map(C);

    for (Variant v : variants) {
      std::string label = column_label(v);
      std::uint64_t rs = train_seed(ex.seed, t, variant_name(v));
      ColdModel<S> full_model =
          train_variant<S>(ex, v, C, full_data, split.train, full_map, rs);
      for (int c = 0; c < C; ++c) {
        std::vector<std::vector<int>> eval_idx(C);
        eval_idx[c] = split.test[c];
        with_c[{t, label, c}] = evaluate(full_model, full_data, eval_idx, full_map).rmse;
      }

      std::vector<EvalResult> ft_results(C);
      std::vector<std::uint64_t> ft_run_seeds(C);
      parallel_for(std::size_t(C), ex.jobs, [&](std::size_t ci) {
        int c = int(ci);
        // Held-out cultivar goes last so its seasons are normalized with the
        // leave-one-out statistics but contribute nothing to training.
        std::vector<int> members;
        for (int m = 0; m < C; ++m) {
          if (m != c) members.push_back(m);
        }
        members.push_back(c);
        Corpus sub = project_corpus(corpus, members);
        auto train_idx = project_index_lists(split.train, members);
        train_idx.back().clear();
        TensorCorpus<S> data = build_tensor_corpus<S>(sub, train_idx);
        auto task_map = identity_task_map(C);  // last id unused during training

        std::uint64_t loo_seed = train_seed(ex.seed, t, std::string(variant_name(v)) + "/loo" +
                                                            std::to_string(c));
        ColdModel<S> base = train_variant<S>(ex, v, C - 1, data, train_idx, task_map, loo_seed);

        int c_local = C - 1;  // held-out cultivar's position in the sub-corpus
        std::vector<std::vector<int>> ft_train(C), ft_eval(C);
        ft_train[c_local] = split.train[c];
        ft_eval[c_local] = split.test[c];
        std::uint64_t ft_seed = train_seed(ex.seed, t, std::string(variant_name(v)) + "/ft" +
                                                           std::to_string(c));
        ft_run_seeds[ci] = ft_seed;

        if (v == Variant::multi_head) {
          HeadAdapter<S> adapter = add_task_head(base, mix_seed(ft_seed, "init"));
          finetune_head(adapter, data, c_local, ft_train[c_local], ex.finetune, ft_seed);
          std::vector<int> eval_map(C, 0);
          eval_map[c_local] = adapter.new_task;
          ft_results[ci] = evaluate(adapter.model, data, ft_eval, eval_map);
        } else {
          EmbedAdapter<S> adapter = EmbedAdapter<S>::make(base);
          finetune_embedding(adapter, data, c_local, ft_train[c_local], ex.finetune, ft_seed);
          ft_results[ci] = evaluate_with<S>(data, ft_eval, [&](int, const SeasonTensor<S>& st) {
            return adapter.forward(st.x);
          });
        }
      });
      for (int c = 0; c < C; ++c) {
        finetuned[{t, label, c}] = ft_results[c].rmse;
        ft_seeds[{t, label, c}] = ft_run_seeds[c];
        report.rows.push_back({"transfer", t, corpus.cultivars[c].name, label + " FT",
                               ft_results[c].rmse, ft_results[c].n_labels, ft_run_seeds[c]});
        report.rows.push_back({"transfer", t, corpus.cultivars[c].name, label,
                               with_c[{t, label, c}], ft_results[c].n_labels,
                               train_seed(ex.seed, t, variant_name(v))});
      }
    }
  }

  // Wide table: mean-over-trials delta per cultivar, then Median / Mean rows.
  std::ostringstream table;
  table << "cultivar";
  for (Variant v : variants) table << ',' << column_label(v) << " FT";
  table << '\n';
  std::map<std::string, std::vector<double>> column_deltas;
  for (int c = 0; c < C; ++c) {
    table << corpus.cultivars[c].name;
    for (Variant v : variants) {
      std::string label = column_label(v);
      double sum_with = 0.0, sum_ft = 0.0;
      for (int t = 0; t < ex.n_trials; ++t) {
        sum_with += with_c.at({t, label, c});
        sum_ft += finetuned.at({t, label, c});
      }
      double delta = (sum_with - sum_ft) / ex.n_trials;
      column_deltas[label].push_back(delta);
      table << ',' << format_double(delta);
    }
    table << '\n';
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  table << "Median";
  for (Variant v : variants) table << ',' << format_double(median(column_deltas[column_label(v)]));
  table << '\n';
  table << "Mean";
  for (Variant v : variants) {
    const auto& d = column_deltas[column_label(v)];
    double sum = 0.0;
    for (double x : d) sum += x;
    table << ',' << format_double(sum / d.size());
  }
  table << '\n';
  report.table_csv = table.str();
  return report;
}

}  // namespace coldcast
