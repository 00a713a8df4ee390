// coldcast: grape cold-hardiness prediction toolkit.
//
// Subcommands cover the full pipeline: synthetic corpus generation, CSV
// ingestion, model training, scientific-baseline tuning, the four experiment
// suites, per-day prediction, and gradient verification.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coldcast/config.hpp"
#include "coldcast/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace coldcast;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Override {
  std::string section, key, value;
};

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<Override> overrides;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) {
    apply_config_text(cfg, csv::read_file(args.config_path));
  }
  for (const auto& o : args.overrides) {
    apply_config_entry(cfg, o.section, o.key, o.value);
  }
  return cfg;
}

std::string timestamp_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  localtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

/// Creates the run directory (timestamp + config hash unless --out given) and
/// drops the resolved config into it.
fs::path make_run_dir(const CommonArgs& args, const RunConfig& cfg) {
  fs::path dir = args.out_dir.empty()
                     ? fs::path("runs") / (timestamp_now() + "-" + config_hash(cfg).substr(0, 8))
                     : fs::path(args.out_dir);
  fs::create_directories(dir);
  csv::write_file((dir / "resolved.cfg").string(), serialize_config(cfg));
  return dir;
}

/// Adds the config/out/override flags shared by every subcommand.
void add_common_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Run configuration file (INI sections)");
  cmd->add_option("--out", args.out_dir, "Output directory (default runs/<stamp>-<hash>)");
  auto push = [&args](const std::string& section, const std::string& key) {
    return [&args, section, key](const std::string& v) {
      args.overrides.push_back({section, key, v});
    };
  };
  cmd->add_option_function<std::string>("--data", push("data", "csv"), "Weather+LTE CSV path");
  cmd->add_option_function<std::string>("--seed", push("train", "seed"), "Training seed");
  cmd->add_option_function<std::string>("--split-seed", push("data", "split_seed"),
                                        "Train/test split seed");
  cmd->add_option_function<std::string>("--trials", push("data", "n_trials"), "Trial count");
  cmd->add_option_function<std::string>("--epochs", push("train", "epochs"), "Training epochs");
  cmd->add_option_function<std::string>("--batch", push("train", "batch"), "Seasons per batch");
  cmd->add_option_function<std::string>("--lr", push("train", "lr"), "Learning rate");
  cmd->add_option_function<std::string>("--variant", push("model", "variant"),
                                        "Model variant (stl|multih|adde|concate|multe)");
  cmd->add_option_function<std::string>("--scale", push("model", "scale"),
                                        "Dimension preset (paper|desk)");
  cmd->add_option_function<std::string>("--precision", push("train", "precision"),
                                        "Numeric precision (double|single)");
  cmd->add_option_function<std::string>("--jobs", push("experiment", "jobs"),
                                        "Max concurrent evaluations");
}

/// Loads a corpus: CSV when configured, otherwise the synthetic generator.
CorpusBuildResult load_corpus(const RunConfig& cfg) {
  if (!cfg.csv.empty()) {
    auto rows = parse_weather_csv(csv::read_file(cfg.csv));
    return build_corpus(rows, make_feature_set(cfg));
  }
  SynthResult synth = generate_corpus(make_synth_spec(cfg));
  // Round-trip through the public file format so synthetic and ingested
  // corpora take the same path.
  auto rows = parse_weather_csv(synth_corpus_csv(synth));
  auto built = build_corpus(rows, make_feature_set(cfg));
  return built;
}

void write_report(const fs::path& dir, const RunConfig& cfg, const Report& report) {
  csv::write_file((dir / "report.csv").string(), report.long_csv(config_hash(cfg)));
  csv::write_file((dir / "table.csv").string(), report.table_csv);
  for (const auto& [name, content] : report.extra_files) {
    csv::write_file((dir / name).string(), content);
  }
}

int cmd_synth(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  fs::path dir = make_run_dir(args, cfg);
  SynthResult synth = generate_corpus(make_synth_spec(cfg));
  csv::write_file((dir / "weather.csv").string(), synth_corpus_csv(synth));
  csv::write_file((dir / "truth.csv").string(), synth_truth_csv(synth));
  std::cout << "wrote " << (dir / "weather.csv").string() << " ("
            << synth.corpus.n_cultivars() << " cultivars)\n";
  return kExitOk;
}

int cmd_ingest(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  fs::path dir = make_run_dir(args, cfg);
  CorpusBuildResult built = load_corpus(cfg);

  std::ostringstream summary;
  summary << "cultivar,start_year,length,lte50_ratio,temp_ratio,retained\n";
  for (const auto& dec : built.filter_log) {
    summary << built.corpus.cultivars[dec.cultivar_id].name << ',' << dec.start_year << ','
            << season_length(dec.start_year) << ',' << format_double(dec.lte_ratio) << ','
            << format_double(dec.temp_ratio) << ',' << (dec.retained ? "true" : "false") << '\n';
  }
  csv::write_file((dir / "seasons.csv").string(), summary.str());

  auto splits = make_trial_splits(built.corpus, cfg.n_trials, cfg.split_seed);
  std::ostringstream split_csv;
  split_csv << "trial,cultivar,role,season_start_years\n";
  for (const auto& split : splits) {
    for (const auto& c : built.corpus.cultivars) {
      auto emit = [&](const char* role, const std::vector<int>& idx) {
        split_csv << split.trial_index << ',' << c.name << ',' << role << ',';
        for (std::size_t i = 0; i < idx.size(); ++i) {
          if (i) split_csv << ' ';
          split_csv << c.seasons[idx[i]].start_year;
        }
        split_csv << '\n';
      };
      emit("train", split.train[c.id]);
      emit("test", split.test[c.id]);
    }
  }
  csv::write_file((dir / "splits.csv").string(), split_csv.str());

  int retained = 0;
  for (const auto& c : built.corpus.cultivars) retained += int(c.seasons.size());
  std::cout << built.corpus.n_cultivars() << " cultivars, " << retained
            << " retained seasons; details in " << (dir / "seasons.csv").string() << "\n";
  return kExitOk;
}

template <typename S>
int train_and_save(const RunConfig& cfg, const fs::path& dir, int trial, int cultivar) {
  CorpusBuildResult built = load_corpus(cfg);
  const Corpus& corpus = built.corpus;
  auto splits = make_trial_splits(corpus, cfg.n_trials, cfg.split_seed);
  if (trial < 0 || trial >= int(splits.size())) throw UsageError("trial index out of range");
  const auto& split = splits[trial];
  ExperimentSetup ex = make_experiment_setup(cfg);

  TensorCorpus<S> data = build_tensor_corpus<S>(corpus, split.train);
  Variant v = parse_variant(cfg.variant);
  ColdModel<S> model;
  TrainResult tr;
  std::vector<int> task_map;
  std::vector<std::vector<int>> eval_idx(corpus.n_cultivars());

  if (v == Variant::stl) {
    if (cultivar < 0 || cultivar >= corpus.n_cultivars()) {
      throw UsageError("stl training requires --cultivar in range");
    }
    std::vector<std::vector<int>> train_idx(corpus.n_cultivars());
    train_idx[cultivar] = split.train[cultivar];
    task_map.assign(corpus.n_cultivars(), 0);
    std::uint64_t rs = train_seed(ex.seed, trial, "stl." + std::to_string(cultivar));
    ModelSpec spec = ex.base_spec;
    spec.variant = v;
    spec.n_tasks = 1;
    model = ColdModel<S>::seeded(spec, mix_seed(rs, "init"));
    tr = train_model(model, data, train_idx, task_map, ex.train, rs);
    eval_idx[cultivar] = split.test[cultivar];
  } else {
    task_map = identity_task_map(corpus.n_cultivars());
    std::uint64_t rs = train_seed(ex.seed, trial, variant_name(v));
    ModelSpec spec = ex.base_spec;
    spec.variant = v;
    spec.n_tasks = corpus.n_cultivars();
    if (v == Variant::add_embed || v == Variant::mult_embed) spec.embed_dim = spec.input_dim;
    model = ColdModel<S>::seeded(spec, mix_seed(rs, "init"));
    tr = train_model(model, data, split.train, task_map, ex.train, rs);
    for (int c = 0; c < corpus.n_cultivars(); ++c) eval_idx[c] = split.test[c];
  }

  csv::write_file((dir / "checkpoint.ckpt").string(), save_checkpoint(model, data.stats));
  EvalResult eval = evaluate(model, data, eval_idx, task_map);
  std::ostringstream loss_csv;
  loss_csv << "epoch,mean_train_loss\n";
  for (std::size_t e = 0; e < tr.epoch_loss.size(); ++e) {
    loss_csv << e << ',' << format_double(tr.epoch_loss[e]) << '\n';
  }
  csv::write_file((dir / "loss_curve.csv").string(), loss_csv.str());
  std::cout << "test lte50 rmse = " << format_double(eval.rmse) << " over " << eval.n_labels
            << " labels; checkpoint in " << (dir / "checkpoint.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_train(const CommonArgs& args, int trial, int cultivar) {
  RunConfig cfg = resolve_config(args);
  fs::path dir = make_run_dir(args, cfg);
  if (cfg.precision == "single") return train_and_save<float>(cfg, dir, trial, cultivar);
  return train_and_save<double>(cfg, dir, trial, cultivar);
}

int cmd_tune_ferguson(const CommonArgs& args, const std::string& grid_path) {
  RunConfig cfg = resolve_config(args);
  fs::path dir = make_run_dir(args, cfg);
  FergusonGrid grid = grid_path.empty() ? cfg.grid : parse_grid_file(csv::read_file(grid_path));
  CorpusBuildResult built = load_corpus(cfg);
  for (const auto& c : built.corpus.cultivars) {
    std::vector<const Season*> seasons;
    for (const auto& s : c.seasons) seasons.push_back(&s);
    GridSearchResult gs = grid_search(seasons, grid, cfg.jobs);
    csv::write_file((dir / ("ferguson_" + c.name + ".txt")).string(),
                    serialize_params(gs.params, gs.train_rmse));
    std::cout << c.name << ": rmse " << format_double(gs.train_rmse) << " at grid point "
              << gs.flat_index << " (" << gs.evaluated << " evaluated, " << gs.skipped_invalid
              << " invalid)\n";
  }
  return kExitOk;
}

template <typename S>
Report run_suite(const std::string& name, const Corpus& corpus, const ExperimentSetup& ex,
                 const RunConfig& cfg) {
  if (name == "compare") return run_main_comparison<S>(corpus, ex);
  if (name == "ablate-tasks") return run_task_subset_ablation<S>(corpus, ex);
  if (name == "transfer") return run_transfer_experiment<S>(corpus, ex);
  if (name == "ablate-size") {
    std::vector<int> targets = cfg.targets;
    if (targets.empty()) {
      // Default: up to three cultivars with the most retained seasons.
      std::vector<int> ranked(corpus.n_cultivars());
      for (int i = 0; i < corpus.n_cultivars(); ++i) ranked[i] = i;
      std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
        return corpus.cultivars[a].seasons.size() > corpus.cultivars[b].seasons.size();
      });
      targets.assign(ranked.begin(), ranked.begin() + std::min(3, corpus.n_cultivars()));
    }
    return run_dataset_size_ablation<S>(corpus, ex, targets, cfg.sizes);
  }
  throw UsageError("unknown experiment suite " + name);
}

int cmd_experiment(const CommonArgs& args, const std::string& name) {
  RunConfig cfg = resolve_config(args);
  fs::path dir = make_run_dir(args, cfg);
  CorpusBuildResult built = load_corpus(cfg);
  ExperimentSetup ex = make_experiment_setup(cfg);
  Report report = cfg.precision == "single"
                      ? run_suite<float>(name, built.corpus, ex, cfg)
                      : run_suite<double>(name, built.corpus, ex, cfg);
  write_report(dir, cfg, report);
  std::cout << name << ": " << report.rows.size() << " result rows; table in "
            << (dir / "table.csv").string() << "\n";
  return kExitOk;
}

int cmd_predict(const CommonArgs& args, const std::string& checkpoint_path,
                const std::string& weather_path, int cultivar) {
  RunConfig cfg = resolve_config(args);
  fs::path dir = make_run_dir(args, cfg);
  Checkpoint<double> ck = load_checkpoint<double>(csv::read_file(checkpoint_path));
  if (cultivar < 0 || cultivar >= ck.spec.n_tasks) {
    throw UsageError("cultivar/task id out of range for this checkpoint");
  }
  ColdModel<double> model(ck.spec);
  model.params = ck.params;

  FeatureSet fs_used{ck.stats.names.size() == 13};
  auto rows = parse_weather_csv(csv::read_file(weather_path), "unknown");
  std::vector<DayRecord> records;
  for (auto& r : rows) records.push_back(r.record);
  std::sort(records.begin(), records.end(),
            [](const DayRecord& a, const DayRecord& b) { return a.date < b.date; });
  auto seasons = extract_seasons(records);
  if (seasons.empty()) throw DataError("no seasons found in " + weather_path);

  std::ostringstream out;
  out << "cultivar,season,date,pred_lte10,pred_lte50,pred_lte90,label_lte50\n";
  for (auto& season : seasons) {
    interpolate_season_features(season, fs_used);
    Matrixd x = apply_normalizer(ck.stats, season, fs_used);
    Matrixd pred = model.forward(x, cultivar);
    for (int t = 0; t < season.length(); ++t) {
      const auto& d = season.days[t];
      out << cultivar << ',' << season.start_year << ',' << to_iso(d.date) << ','
          << format_double(pred(t, 0)) << ',' << format_double(pred(t, 1)) << ','
          << format_double(pred(t, 2)) << ','
          << (d.lte[kLte50Channel] ? format_double(*d.lte[kLte50Channel]) : std::string())
          << '\n';
    }
  }
  csv::write_file((dir / "predictions.csv").string(), out.str());
  std::cout << "wrote " << (dir / "predictions.csv").string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, double threshold) {
  auto checks = run_model_gradcheck(seed);
  double worst = 0.0;
  for (const auto& c : checks) {
    std::cout << c.variant << ": max rel error " << format_double(c.report.max_rel_error)
              << " (block " << c.report.worst_block << ", " << c.report.coords_checked
              << " coords)\n";
    worst = std::max(worst, c.report.max_rel_error);
  }
  std::cout << "overall max rel error " << format_double(worst) << "\n";
  if (worst >= threshold) {
    std::cerr << "gradient check FAILED (threshold " << threshold << ")\n";
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coldcast: grape cold-hardiness prediction toolkit"};
  app.require_subcommand(1);

  CommonArgs synth_args, ingest_args, train_args, tune_args, predict_args;
  CommonArgs compare_args, size_args, tasks_args, transfer_args;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic weather+LTE corpus");
  add_common_flags(synth, synth_args);
  synth->add_option("--spec", synth_args.config_path, "Alias for --config");

  auto* ingest = app.add_subcommand("ingest", "Parse, window, filter, and split a corpus");
  add_common_flags(ingest, ingest_args);

  int train_trial = 0, train_cultivar = -1;
  auto* train = app.add_subcommand("train", "Train one model and write a checkpoint");
  add_common_flags(train, train_args);
  train->add_option("--trial", train_trial, "Split trial index");
  train->add_option("--cultivar", train_cultivar, "Cultivar id (required for stl)");

  std::string grid_path;
  auto* tune = app.add_subcommand("tune-ferguson", "Grid-search the scientific baseline");
  add_common_flags(tune, tune_args);
  tune->add_option("--grid", grid_path, "Grid file (key = values per line)");

  auto* compare = app.add_subcommand("compare", "Main model comparison table");
  add_common_flags(compare, compare_args);
  auto* ablate_size = app.add_subcommand("ablate-size", "Dataset-size ablation table");
  add_common_flags(ablate_size, size_args);
  auto* ablate_tasks = app.add_subcommand("ablate-tasks", "Task-subset ablation table");
  add_common_flags(ablate_tasks, tasks_args);
  auto* transfer = app.add_subcommand("transfer", "Transfer-vs-MTL delta table");
  add_common_flags(transfer, transfer_args);

  std::string checkpoint_path, weather_path;
  int predict_cultivar = 0;
  auto* predict = app.add_subcommand("predict", "Per-day LTE predictions from a checkpoint");
  add_common_flags(predict, predict_args);
  predict->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  predict->add_option("--weather", weather_path, "Weather CSV")->required();
  predict->add_option("--cultivar", predict_cultivar, "Task id the predictions are for");

  std::uint64_t gc_seed = 1;
  double gc_threshold = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  gradcheck->add_option("--seed", gc_seed, "Seed for the probe model and data");
  gradcheck->add_option("--threshold", gc_threshold, "Failure threshold on max rel error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (ingest->parsed()) return cmd_ingest(ingest_args);
    if (train->parsed()) return cmd_train(train_args, train_trial, train_cultivar);
    if (tune->parsed()) return cmd_tune_ferguson(tune_args, grid_path);
    if (compare->parsed()) return cmd_experiment(compare_args, "compare");
    if (ablate_size->parsed()) return cmd_experiment(size_args, "ablate-size");
    if (ablate_tasks->parsed()) return cmd_experiment(tasks_args, "ablate-tasks");
    if (transfer->parsed()) return cmd_experiment(transfer_args, "transfer");
    if (predict->parsed()) return cmd_predict(predict_args, checkpoint_path, weather_path,
                                              predict_cultivar);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_threshold);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
