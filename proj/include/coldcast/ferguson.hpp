#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "coldcast/common.hpp"
#include "coldcast/dataio.hpp"

namespace coldcast {

// ---------------------------------------------------------------------------
// Stage-dependent thermal-time model of daily cold-hardiness change, tuned
// per cultivar by exhaustive grid search. Hardiness H is a lethal temperature
// in degrees C, so "more hardy" means more negative.

struct FergusonParams {
  double t_th = 5.0;        // thermal-time threshold, degrees C
  double k_a_endo = 0.10;   // acclimation rate while endodormant, per degC-day
  double k_a_eco = 0.02;    // acclimation rate while ecodormant
  double k_d_endo = 0.02;   // deacclimation rate while endodormant
  double k_d_eco = 0.10;    // deacclimation rate while ecodormant
  double h_min = -25.0;     // most negative attainable hardiness
  double h_max = -3.0;      // least negative hardiness (late-summer level)
  double c_star = -500.0;   // chilling requirement for the endo->eco switch
  double theta = 2.0;       // deacclimation-potential exponent
  double h_init = -3.0;     // hardiness on Sept 7

  bool valid() const {
    return h_min < h_max && h_max < 0.0 && c_star < 0.0 && theta > 0.0 && k_a_endo >= 0.0 &&
           k_a_eco >= 0.0 && k_d_endo >= 0.0 && k_d_eco >= 0.0 && h_init >= h_min &&
           h_init <= h_max;
  }
};

enum class DormancyStage { endo, eco };

struct FergusonState {
  double hardiness = 0.0;
  double chilling = 0.0;  // accumulated chilling degree-days, <= 0
  DormancyStage stage = DormancyStage::endo;
};

/// Daily heating and chilling degree-days around a shared threshold.
inline std::pair<double, double> thermal_time(double t_mean, double t_th) {
  double dd = t_mean - t_th;
  return {std::max(0.0, dd), std::min(0.0, dd)};
}

inline FergusonState ferguson_init(const FergusonParams& p) {
  return FergusonState{p.h_init, 0.0, DormancyStage::endo};
}

inline FergusonState ferguson_step(const FergusonState& state, double t_mean,
                                   const FergusonParams& p) {
  auto [dd_heat, dd_chill] = thermal_time(t_mean, p.t_th);

  FergusonState next = state;
  next.chilling = state.chilling + dd_chill;
  if (next.chilling <= p.c_star) next.stage = DormancyStage::eco;

  bool eco = next.stage == DormancyStage::eco;
  double k_a = eco ? p.k_a_eco : p.k_a_endo;
  double k_d = eco ? p.k_d_eco : p.k_d_endo;

  // Deacclimation potential ramps in with chilling progress; acclimation and
  // deacclimation both taper as H approaches its respective bound.
  double dp = std::pow(std::min(1.0, std::abs(next.chilling) / std::abs(p.c_star)), p.theta);
  double span = p.h_max - p.h_min;
  double f_accl = (state.hardiness - p.h_min) / span;
  double f_deac = (p.h_max - state.hardiness) / span;

  double dh = k_a * dd_chill * f_accl + k_d * dd_heat * dp * f_deac;
  next.hardiness = std::clamp(state.hardiness + dh, p.h_min, p.h_max);
  return next;
}

/// Runs the dynamics over one season and returns the post-update hardiness
/// (predicted LTE50) for every day. Uses MEAN_AT, deriving it from the
/// extremes when the record carries none.
inline std::vector<double> ferguson_predict(const Season& season, const FergusonParams& p) {
  std::vector<double> out;
  out.reserve(season.days.size());
  FergusonState st = ferguson_init(p);
  for (const auto& d : season.days) {
    double t_mean;
    if (d.mean_at) {
      t_mean = *d.mean_at;
    } else if (d.min_at && d.max_at) {
      t_mean = derive_mean_at(*d.min_at, *d.max_at);
    } else {
      throw DataError("MEAN_AT missing on " + to_iso(d.date) +
                      " (interpolate temperatures before predicting)");
    }
    st = ferguson_step(st, t_mean, p);
    out.push_back(st.hardiness);
  }
  return out;
}

/// Pooled RMSE of predicted vs observed LTE50 over the given seasons.
inline double ferguson_rmse(const std::vector<const Season*>& seasons, const FergusonParams& p) {
  double sq = 0.0;
  long n = 0;
  for (const Season* s : seasons) {
    auto pred = ferguson_predict(*s, p);
    for (std::size_t i = 0; i < s->days.size(); ++i) {
      const auto& label = s->days[i].lte[kLte50Channel];
      if (label) {
        double e = pred[i] - *label;
        sq += e * e;
        ++n;
      }
    }
  }
  if (n == 0) throw DataError("no LTE50 labels in seasons given to ferguson_rmse");
  return std::sqrt(sq / n);
}

// ---------------------------------------------------------------------------
// Grid search. Axes are enumerated in a fixed order; ties are broken toward
// the lexicographically smallest per-axis index vector, which makes the
// result independent of evaluation order and thread count.

struct FergusonGrid {
  std::vector<double> t_th = {0, 3, 5, 7, 10};
  std::vector<double> k_a_endo = {0.02, 0.05, 0.1, 0.2};
  std::vector<double> k_a_eco = {0.02, 0.05, 0.1, 0.2};
  std::vector<double> k_d_endo = {0.02, 0.05, 0.1, 0.2};
  std::vector<double> k_d_eco = {0.02, 0.05, 0.1, 0.2};
  std::vector<double> h_min = {-30, -25, -20};
  std::vector<double> h_max = {-3, -5};
  std::vector<double> c_star = {-300, -500, -700};
  std::vector<double> theta = {1, 2};
  // Empty means "track h_max".
  std::vector<double> h_init = {};

  std::size_t size() const {
    std::size_t n = t_th.size() * k_a_endo.size() * k_a_eco.size() * k_d_endo.size() *
                    k_d_eco.size() * h_min.size() * h_max.size() * c_star.size() * theta.size();
    return n * std::max<std::size_t>(1, h_init.size());
  }

  FergusonParams at(std::size_t flat) const {
    auto pick = [&flat](const std::vector<double>& axis) {
      std::size_t i = flat % axis.size();
      flat /= axis.size();
      return axis[i];
    };
    // Innermost axis last in the struct; decode in reverse declaration order
    // so flat index 0 is the lexicographically smallest index vector.
    FergusonParams p;
    bool track_h_max = h_init.empty();
    if (!track_h_max) p.h_init = pick(h_init);
    p.theta = pick(theta);
    p.c_star = pick(c_star);
    p.h_max = pick(h_max);
    p.h_min = pick(h_min);
    p.k_d_eco = pick(k_d_eco);
    p.k_d_endo = pick(k_d_endo);
    p.k_a_eco = pick(k_a_eco);
    p.k_a_endo = pick(k_a_endo);
    p.t_th = pick(t_th);
    if (track_h_max) p.h_init = p.h_max;
    return p;
  }
};

struct GridSearchResult {
  FergusonParams params;
  double train_rmse = 0.0;
  std::size_t flat_index = 0;
  std::size_t evaluated = 0;
  std::size_t skipped_invalid = 0;
};

inline GridSearchResult grid_search(const std::vector<const Season*>& train_seasons,
                                    const FergusonGrid& grid, int jobs = 1) {
  std::size_t n = grid.size();
  if (n == 0) throw DataError("empty ferguson grid");
  std::vector<double> rmse(n);
  constexpr double kInvalid = std::numeric_limits<double>::infinity();
  parallel_for(n, jobs, [&](std::size_t i) {
    FergusonParams p = grid.at(i);
    if (!p.valid()) {
      rmse[i] = kInvalid;
      return;
    }
    double r = ferguson_rmse(train_seasons, p);
    rmse[i] = std::isfinite(r) ? r : kInvalid;
  });

  GridSearchResult best;
  best.evaluated = n;
  std::size_t best_i = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (rmse[i] == kInvalid) {
      ++best.skipped_invalid;
      continue;
    }
    if (best_i == n || rmse[i] < rmse[best_i]) best_i = i;  // strict < keeps earliest tie
  }
  if (best_i == n) throw DataError("ferguson grid contains no valid parameter combination");
  best.params = grid.at(best_i);
  best.train_rmse = rmse[best_i];
  best.flat_index = best_i;
  return best;
}

// ---------------------------------------------------------------------------
// Grid / parameter file formats: `key = v1 v2 ...` per axis (comma or space
// separated), `key = value` for tuned output.

inline std::vector<double> parse_number_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::string cleaned = text;
  for (char& c : cleaned) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(cleaned);
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
      throw DataError("grid key " + key + ": bad number '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

inline FergusonGrid parse_grid_file(const std::string& text) {
  FergusonGrid grid;
  std::map<std::string, std::vector<double>*> axes = {
      {"t_th", &grid.t_th},       {"k_a_endo", &grid.k_a_endo}, {"k_a_eco", &grid.k_a_eco},
      {"k_d_endo", &grid.k_d_endo}, {"k_d_eco", &grid.k_d_eco},   {"h_min", &grid.h_min},
      {"h_max", &grid.h_max},     {"c_star", &grid.c_star},     {"theta", &grid.theta},
      {"h_init", &grid.h_init}};
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = csv::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw DataError("grid file line " + std::to_string(lineno) + ": expected key = values");
    }
    std::string key = csv::trim(t.substr(0, eq));
    auto it = axes.find(key);
    if (it == axes.end()) {
      throw DataError("grid file line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    auto vals = parse_number_list(t.substr(eq + 1), key);
    if (vals.empty()) {
      throw DataError("grid file line " + std::to_string(lineno) + ": key '" + key +
                      "' has no values");
    }
    *it->second = std::move(vals);
  }
  return grid;
}

inline std::string serialize_params(const FergusonParams& p, double train_rmse) {
  std::ostringstream out;
  out << "t_th = " << format_double(p.t_th) << '\n'
      << "k_a_endo = " << format_double(p.k_a_endo) << '\n'
      << "k_a_eco = " << format_double(p.k_a_eco) << '\n'
      << "k_d_endo = " << format_double(p.k_d_endo) << '\n'
      << "k_d_eco = " << format_double(p.k_d_eco) << '\n'
      << "h_min = " << format_double(p.h_min) << '\n'
      << "h_max = " << format_double(p.h_max) << '\n'
      << "c_star = " << format_double(p.c_star) << '\n'
      << "theta = " << format_double(p.theta) << '\n'
      << "h_init = " << format_double(p.h_init) << '\n'
      << "train_rmse = " << format_double(train_rmse) << '\n';
  return out.str();
}

}  // namespace coldcast
