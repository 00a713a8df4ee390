// Acceptance suite: one pass/fail line per criterion. Criteria 8 and 9 drive
// the installed CLI binary end to end; everything else exercises the library
// directly. Exit code 0 iff every selected criterion passes.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "coldcast/config.hpp"
#include "coldcast/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace coldcast;

#ifndef COLDCAST_BIN
#define COLDCAST_BIN "coldcast"
#endif

namespace {

struct Check {
  int id;
  std::string name;
  std::function<void()> fn;
};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

int run_cli(const std::string& args, const fs::path& log) {
  std::string cmd = std::string(COLDCAST_BIN) + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  if (status < 0) throw Failure("failed to launch CLI");
  return WEXITSTATUS(status);
}

Matrixd random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrixd m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.next_normal();
  }
  return m;
}

ModelSpec desk_spec(Variant v, int n_tasks) {
  ModelSpec spec;
  spec.desk_scale();
  spec.variant = v;
  spec.n_tasks = n_tasks;
  spec.embed_dim = spec.input_dim;
  return spec;
}

const std::vector<Variant> kAllVariants = {Variant::stl, Variant::multi_head, Variant::add_embed,
                                           Variant::concat_embed, Variant::mult_embed};

// --------------------------------------------------------------------------
// 1. Gradient correctness on desk-scale models, 20-day sequences.

void criterion_gradients() {
  auto checks = run_model_gradcheck(1, 20, 1e-5, 30);
  for (const auto& c : checks) {
    std::cout << "    " << c.variant << ": max rel err " << c.report.max_rel_error << " ("
              << c.report.coords_checked << " coords, worst " << c.report.worst_block << ")\n";
    require(c.report.max_rel_error < 1e-4,
            c.variant + " gradcheck failed: " + std::to_string(c.report.max_rel_error));
  }
  // The CLI must agree (exit 0 below the threshold).
  fs::create_directories("acceptance_tmp");
  int rc = run_cli("gradcheck --seed 1", "acceptance_tmp/gradcheck.log");
  require(rc == 0, "CLI gradcheck exited " + std::to_string(rc));
}

// --------------------------------------------------------------------------
// 2. Mask correctness: masked-out targets influence nothing, bitwise.

void criterion_mask() {
  ColdModel<double> model = ColdModel<double>::seeded(desk_spec(Variant::multi_head, 2), 7);
  Rng rng(70);
  Matrixd x = random_matrix(rng, 30, 12);
  Matrixd target = random_matrix(rng, 30, 3, 5.0);
  Matrix<std::uint8_t> mask(30, 3);
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = rng.next_unit() < 0.5 ? 1 : 0;
  }

  auto run = [&](const Matrixd& tgt) {
    ModelCache<double> cache;
    Matrixd pred = model.forward_cached(x, 1, cache);
    MaskedLoss<double> ml = masked_mse(pred, tgt, mask);
    ParamStore<double> grads = model.zero_grads();
    model.backward(x, cache, 1, ml.d_pred, grads);
    return std::pair(ml.loss, std::move(grads));
  };

  auto [loss_a, grads_a] = run(target);
  Matrixd perturbed = target;
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (!mask(i, j)) perturbed(i, j) += 1000.0 * rng.next_normal();
    }
  }
  auto [loss_b, grads_b] = run(perturbed);

  require(loss_a == loss_b, "loss changed under masked-out target perturbation");
  for (std::size_t i = 0; i < grads_a.size(); ++i) {
    require(grads_a.data()[i] == grads_b.data()[i],
            "gradient changed at coordinate " + std::to_string(i));
  }
}

// --------------------------------------------------------------------------
// 3. Causality on 10 random seeds per variant.

void criterion_causality() {
  for (Variant v : kAllVariants) {
    int n_tasks = v == Variant::stl ? 1 : 3;
    ColdModel<double> model = ColdModel<double>::seeded(desk_spec(v, n_tasks), 31);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      Matrixd x = random_matrix(rng, 40, 12);
      int task = n_tasks - 1;
      Matrixd y = model.forward(x, task);
      Matrixd x2 = x;
      for (Eigen::Index t = 25; t < 40; ++t) {
        for (int j = 0; j < 12; ++j) x2(t, j) += 10.0 + double(t + j);
      }
      Matrixd y2 = model.forward(x2, task);
      for (Eigen::Index t = 0; t < 25; ++t) {
        for (int c = 0; c < 3; ++c) {
          require(y(t, c) == y2(t, c), std::string(variant_name(v)) +
                                           ": day " + std::to_string(t) +
                                           " changed under future perturbation");
        }
      }
    }
  }
}

// --------------------------------------------------------------------------
// 4. Architectural equivalences, bitwise with matched seeds.

void criterion_equivalences() {
  const std::uint64_t seed = 2024;
  Rng rng(5);
  Matrixd x = random_matrix(rng, 60, 12);
  ColdModel<double> stl = ColdModel<double>::seeded(desk_spec(Variant::stl, 1), seed);
  Matrixd y_stl = stl.forward(x, 0);

  ColdModel<double> mh = ColdModel<double>::seeded(desk_spec(Variant::multi_head, 1), seed);
  require((y_stl.array() == mh.forward(x, 0).array()).all(), "STL != MultiH(C=1)");

  ColdModel<double> adde = ColdModel<double>::seeded(desk_spec(Variant::add_embed, 3), seed);
  adde.params.view("embed").row(1).setZero();
  require((y_stl.array() == adde.forward(x, 1).array()).all(), "STL != AddE with zero row");

  ColdModel<double> multe = ColdModel<double>::seeded(desk_spec(Variant::mult_embed, 3), seed);
  multe.params.view("embed").row(2).setOnes();
  require((y_stl.array() == multe.forward(x, 2).array()).all(), "STL != MultE with ones row");
}

// --------------------------------------------------------------------------
// 5. Overfit oracle: one noise-free season, daily labels, 2000 Adam steps.

void criterion_overfit() {
  SynthSpec spec;
  spec.n_cultivars = 1;
  spec.seasons_per_cultivar = {1};
  spec.label_period = 1;
  spec.label_noise_sd = 0.0;
  spec.perturb_scale = 0.0;
  SynthResult synth = generate_corpus(spec);

  std::vector<std::vector<int>> train_idx = {{0}};
  TensorCorpus<double> data = build_tensor_corpus<double>(synth.corpus, train_idx);
  ColdModel<double> model = ColdModel<double>::seeded(desk_spec(Variant::stl, 1), 3);
  TrainResult tr =
      train_model(model, data, train_idx, identity_task_map(1), TrainConfig{1e-3, 12, 2000}, 8);
  require(tr.steps == 2000, "expected exactly 2000 optimizer steps");
  EvalResult r = evaluate(model, data, train_idx, identity_task_map(1));
  std::cout << "    train lte50 rmse after 2000 steps: " << r.rmse << " degC\n";
  require(r.rmse < 0.2, "overfit rmse " + std::to_string(r.rmse) + " >= 0.2");
}

// --------------------------------------------------------------------------
// 6. Ferguson recovery: planted zero-noise exact, noisy within one grid step,
//    verified by exhaustive re-evaluation, jobs = 4.

void criterion_ferguson() {
  FergusonGrid grid;
  grid.t_th = {3, 4, 5, 6, 7};
  grid.k_a_endo = {0.07, 0.1, 0.14};
  grid.k_a_eco = {0.014, 0.02, 0.028};
  grid.k_d_endo = {0.014, 0.02, 0.028};
  grid.k_d_eco = {0.07, 0.1, 0.14};
  grid.h_min = {-29, -27, -25, -23, -21};
  grid.h_max = {-3, -3.5};
  grid.c_star = {-550, -500, -450};
  grid.theta = {1.5, 2, 2.5};

  auto make = [](double noise) {
    SynthSpec spec;
    spec.n_cultivars = 1;
    spec.seasons_per_cultivar = {4};
    spec.perturb_scale = 0.0;
    spec.label_noise_sd = noise;
    spec.label_period = 7;
    return generate_corpus(spec);
  };

  auto seasons_of = [](const SynthResult& synth) {
    std::vector<const Season*> seasons;
    for (const auto& s : synth.corpus.cultivars[0].seasons) seasons.push_back(&s);
    return seasons;
  };

  SynthResult clean = make(0.0);
  auto clean_seasons = seasons_of(clean);
  GridSearchResult gs = grid_search(clean_seasons, grid, 4);
  const FergusonParams& truth = clean.truth.params[0];
  require(gs.train_rmse == 0.0, "zero-noise recovery rmse != 0");
  require(gs.params.t_th == truth.t_th && gs.params.k_a_endo == truth.k_a_endo &&
              gs.params.k_a_eco == truth.k_a_eco && gs.params.k_d_endo == truth.k_d_endo &&
              gs.params.k_d_eco == truth.k_d_eco && gs.params.h_min == truth.h_min &&
              gs.params.h_max == truth.h_max && gs.params.c_star == truth.c_star &&
              gs.params.theta == truth.theta,
          "zero-noise recovery returned wrong parameters");

  SynthResult noisy = make(0.5);
  auto noisy_seasons = seasons_of(noisy);
  GridSearchResult ns = grid_search(noisy_seasons, grid, 4);

  // Exhaustive re-evaluation: independent scan with the same tie-break.
  std::size_t best = grid.size();
  double best_rmse = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    FergusonParams p = grid.at(i);
    if (!p.valid()) continue;
    double r = ferguson_rmse(noisy_seasons, p);
    if (best == grid.size() || r < best_rmse) {
      best = i;
      best_rmse = r;
    }
  }
  require(ns.flat_index == best, "grid_search result differs from exhaustive re-evaluation");

  auto axis_index = [](const std::vector<double>& axis, double v) {
    for (std::size_t i = 0; i < axis.size(); ++i) {
      if (axis[i] == v) return long(i);
    }
    return long(-1);
  };
  auto within_one = [&](const std::vector<double>& axis, double got, double want) {
    return std::abs(axis_index(axis, got) - axis_index(axis, want)) <= 1;
  };
  require(within_one(grid.t_th, ns.params.t_th, truth.t_th) &&
              within_one(grid.k_a_endo, ns.params.k_a_endo, truth.k_a_endo) &&
              within_one(grid.k_a_eco, ns.params.k_a_eco, truth.k_a_eco) &&
              within_one(grid.k_d_endo, ns.params.k_d_endo, truth.k_d_endo) &&
              within_one(grid.k_d_eco, ns.params.k_d_eco, truth.k_d_eco) &&
              within_one(grid.h_min, ns.params.h_min, truth.h_min) &&
              within_one(grid.h_max, ns.params.h_max, truth.h_max) &&
              within_one(grid.c_star, ns.params.c_star, truth.c_star) &&
              within_one(grid.theta, ns.params.theta, truth.theta),
          "noisy recovery strayed more than one grid step on some axis");

  GridSearchResult sequential = grid_search(noisy_seasons, grid, 1);
  require(sequential.flat_index == ns.flat_index, "jobs=4 differs from jobs=1");
}

// --------------------------------------------------------------------------
// 7. MTL benefit on a low-data target: MultiH beats STL in >= 2 of 3 trials.

void criterion_mtl_benefit() {
  SynthSpec spec;
  spec.n_cultivars = 6;
  spec.seasons_per_cultivar = {10, 10, 10, 10, 10, 4};  // target keeps 2 train seasons
  spec.label_period = 7;
  spec.label_noise_sd = 0.3;
  spec.perturb_scale = 0.1;
  SynthResult synth = generate_corpus(spec);
  const int target = 5;

  ExperimentSetup ex;
  ex.n_trials = 3;
  ex.split_seed = 42;
  ex.seed = 0;
  ex.train = TrainConfig{1e-3, 12, 60};
  ex.base_spec = desk_spec(Variant::multi_head, 6);

  auto splits = make_trial_splits(synth.corpus, ex.n_trials, ex.split_seed);
  int wins = 0;
  for (int t = 0; t < ex.n_trials; ++t) {
    const auto& split = splits[t];
    TensorCorpus<double> data = build_tensor_corpus<double>(synth.corpus, split.train);
    auto task_map = identity_task_map(6);
    std::vector<std::vector<int>> eval_idx(6);
    eval_idx[target] = split.test[target];

    ColdModel<double> mtl = train_variant<double>(ex, Variant::multi_head, 6, data, split.train,
                                                  task_map, train_seed(ex.seed, t, "multih"));
    double mtl_rmse = evaluate(mtl, data, eval_idx, task_map).rmse;

    std::vector<std::vector<int>> stl_idx(6);
    stl_idx[target] = split.train[target];
    std::vector<int> stl_map(6, 0);
    ColdModel<double> stl =
        train_variant<double>(ex, Variant::stl, 1, data, stl_idx, stl_map,
                              train_seed(ex.seed, t, "stl." + std::to_string(target)));
    double stl_rmse = evaluate(stl, data, eval_idx, stl_map).rmse;

    std::cout << "    trial " << t << ": MultiH " << mtl_rmse << " vs STL " << stl_rmse
              << " degC\n";
    if (mtl_rmse < stl_rmse) ++wins;
  }
  require(wins >= 2, "MultiH beat STL in only " + std::to_string(wins) + " of 3 trials");
}

// --------------------------------------------------------------------------
// 8. Experiment suites through the CLI: table shapes and bitwise reruns.

std::string suite_config(bool size_ablation) {
  std::string data = size_ablation
                         ? "n_cultivars = 4\nseasons = 24 6 6 6\n"
                         : "n_cultivars = 4\nseasons = 5\n";
  return "[data]\n" + data +
         "label_period = 7\n"
         "label_noise_sd = 0.3\n"
         "perturb_scale = 0.15\n"
         "split_seed = 9\n"
         "[model]\nscale = desk\n"
         "[train]\nepochs = 6\nfinetune_epochs = 12\nseed = 4\n"
         "[ferguson_grid]\n"
         "t_th = 4 5\nk_a_endo = 0.1\nk_a_eco = 0.02\nk_d_endo = 0.02\nk_d_eco = 0.1\n"
         "h_min = -25\nh_max = -3\nc_star = -500\ntheta = 2\n"
         "[experiment]\ntargets = 0\nsizes = 2 5 10 20 all\n";
}

csv::Table load_table(const fs::path& dir) {
  return csv::parse(csv::read_file((dir / "table.csv").string()));
}

void require_same_outputs(const fs::path& a, const fs::path& b) {
  for (const char* name : {"report.csv", "table.csv"}) {
    require(csv::read_file((a / name).string()) == csv::read_file((b / name).string()),
            std::string(name) + " differs between identical runs");
  }
}

void criterion_suites() {
  fs::path root = "acceptance_tmp/suites";
  fs::remove_all(root);
  fs::create_directories(root);
  csv::write_file((root / "main.cfg").string(), suite_config(false));
  csv::write_file((root / "size.cfg").string(), suite_config(true));

  auto run_twice = [&](const std::string& sub, const std::string& cfg) {
    fs::path d1 = root / (sub + "_run1"), d2 = root / (sub + "_run2");
    int rc1 = run_cli(sub + " --config " + (root / cfg).string() + " --out " + d1.string(),
                      root / (sub + "_1.log"));
    int rc2 = run_cli(sub + " --config " + (root / cfg).string() + " --out " + d2.string(),
                      root / (sub + "_2.log"));
    require(rc1 == 0 && rc2 == 0, sub + " CLI exited nonzero");
    require_same_outputs(d1, d2);
    return load_table(d1);
  };

  csv::Table compare = run_twice("compare", "main.cfg");
  require(compare.header == std::vector<std::string>{"cultivar", "MultE", "ConcatE", "AddE",
                                                     "MultiH", "Single", "Ferguson"},
          "compare table columns wrong");
  require(compare.rows.size() == 4, "compare table should have one row per cultivar");
  for (const auto& row : compare.rows) {
    for (std::size_t i = 1; i < row.size(); ++i) {
      require(!row[i].empty(), "compare table has blank cells");
    }
  }
  std::cout << "    compare: 4 rows x 6 model columns, bitwise rerun ok\n";

  csv::Table size = run_twice("ablate-size", "size.cfg");
  require(size.header == std::vector<std::string>{"cultivar", "2", "5", "10", "20", "All"},
          "ablate-size table columns wrong");
  require(size.rows.size() == 2, "ablate-size should have MTL+STL rows for the target");
  require(size.rows[0][0].find("(MTL)") != std::string::npos &&
              size.rows[1][0].find("(STL)") != std::string::npos,
          "ablate-size row labels wrong");
  std::cout << "    ablate-size: MTL/STL rows x sizes 2,5,10,20,All, bitwise rerun ok\n";

  csv::Table tasks = run_twice("ablate-tasks", "main.cfg");
  require(tasks.header ==
              std::vector<std::string>{"cultivar", "High", "Low", "Mix", "All", "Single"},
          "ablate-tasks table columns wrong");
  require(tasks.rows.size() == 4, "ablate-tasks should have one row per cultivar");
  int blanks = 0;
  for (const auto& row : tasks.rows) {
    require(!row[4].empty() && !row[5].empty(), "All/Single columns must be complete");
    for (int col = 1; col <= 3; ++col) blanks += row[col].empty() ? 1 : 0;
  }
  require(blanks > 0, "ablate-tasks table should contain blank subset cells");
  std::cout << "    ablate-tasks: blank-cell semantics ok, bitwise rerun ok\n";

  csv::Table transfer = run_twice("transfer", "main.cfg");
  require(transfer.header == std::vector<std::string>{"cultivar", "ConcatE FT", "MultE FT",
                                                      "AddE FT", "MultiH FT"},
          "transfer table columns wrong");
  require(transfer.rows.size() == 6, "transfer table should be 4 cultivars + Median + Mean");
  require(transfer.rows[4][0] == "Median" && transfer.rows[5][0] == "Mean",
          "transfer table must end with Median and Mean rows");
  std::cout << "    transfer: per-cultivar deltas + Median/Mean rows, bitwise rerun ok\n";
}

// --------------------------------------------------------------------------
// 9. Data pipeline: lengths, filter boundaries, synth -> CSV -> ingest ->
//    train round trip through the CLI.

void criterion_pipeline() {
  require(season_length(2009) == 251, "non-leap season length");
  require(season_length(2011) == 252, "leap season length");

  auto boundary_season = [](int n_lte, int n_temp) {
    Season s;
    s.start_year = 2009;
    s.days.resize(251);
    for (int i = 0; i < 251; ++i) {
      s.days[i].date = add_days(Date{2009, 9, 7}, i);
      if (i < n_temp) {
        s.days[i].min_at = -1;
        s.days[i].avg_at = 0;
        s.days[i].max_at = 1;
      }
      if (i < n_lte) s.days[i].lte[kLte50Channel] = -10;
    }
    return s;
  };
  require(filter_seasons({boundary_season(25, 251)}).retained.empty(), "25/251 must be rejected");
  require(filter_seasons({boundary_season(26, 240)}).retained.size() == 1,
          "26 labels + 240 temps must be retained");
  require(filter_seasons({boundary_season(100, 200)}).retained.empty(),
          "200/251 temperature days must be rejected");

  fs::path root = "acceptance_tmp/pipeline";
  fs::remove_all(root);
  fs::create_directories(root);
  std::string cfg =
      "[data]\nn_cultivars = 2\nseasons = 4\nlabel_period = 7\nlabel_noise_sd = 0.2\n"
      "perturb_scale = 0.1\n[model]\nscale = desk\nvariant = multih\n"
      "[train]\nepochs = 2\n";
  csv::write_file((root / "run.cfg").string(), cfg);

  int rc = run_cli("synth --spec " + (root / "run.cfg").string() + " --out " +
                       (root / "synth").string(),
                   root / "synth.log");
  require(rc == 0, "synth CLI failed");
  require(fs::exists(root / "synth" / "weather.csv") && fs::exists(root / "synth" / "truth.csv"),
          "synth outputs missing");

  std::string data_flag = " --data " + (root / "synth" / "weather.csv").string();
  rc = run_cli("ingest --config " + (root / "run.cfg").string() + data_flag + " --out " +
                   (root / "ingest").string(),
               root / "ingest.log");
  require(rc == 0, "ingest CLI failed");
  require(fs::exists(root / "ingest" / "seasons.csv"), "ingest summary missing");

  rc = run_cli("train --config " + (root / "run.cfg").string() + data_flag + " --out " +
                   (root / "train").string(),
               root / "train.log");
  require(rc == 0, "train CLI failed");
  require(fs::exists(root / "train" / "checkpoint.ckpt"), "checkpoint missing");

  rc = run_cli("predict --checkpoint " + (root / "train" / "checkpoint.ckpt").string() +
                   " --weather " + (root / "synth" / "weather.csv").string() +
                   " --cultivar 1 --out " + (root / "predict").string(),
               root / "predict.log");
  require(rc == 0, "predict CLI failed");
  require(fs::exists(root / "predict" / "predictions.csv"), "predictions missing");

  // Usage and data errors map to the documented exit codes.
  require(run_cli("bogus-subcommand", root / "usage.log") == 1, "usage error should exit 1");
  require(run_cli("ingest --data /nonexistent.csv --out " + (root / "bad").string(),
                  root / "data_err.log") == 2,
          "data error should exit 2");
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Check> checks = {
      {1, "gradient correctness (finite differences, desk scale)", criterion_gradients},
      {2, "mask correctness (bitwise invariance to masked-out targets)", criterion_mask},
      {3, "causality (10 seeds per variant)", criterion_causality},
      {4, "architectural equivalences (matched seeds, bitwise)", criterion_equivalences},
      {5, "overfit oracle (one season, 2000 steps, rmse < 0.2)", criterion_overfit},
      {6, "ferguson recovery (planted grid, exhaustive verification)", criterion_ferguson},
      {7, "MTL benefit on a low-data target (>= 2 of 3 trials)", criterion_mtl_benefit},
      {8, "experiment suite shapes and bitwise reruns", criterion_suites},
      {9, "data pipeline (lengths, filter boundaries, end-to-end)", criterion_pipeline},
  };

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& check : checks) {
    if (!selected.empty() && !selected.count(check.id)) continue;
    auto start = std::chrono::steady_clock::now();
    std::string verdict = "PASS";
    std::string detail;
    try {
      check.fn();
    } catch (const std::exception& e) {
      verdict = "FAIL";
      detail = e.what();
      ++failures;
    }
    auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << verdict << " criterion " << check.id << ": " << check.name << " ["
              << int(secs + 0.5) << "s]";
    if (!detail.empty()) std::cout << " -- " << detail;
    std::cout << "\n";
  }
  return failures == 0 ? 0 : 1;
}
