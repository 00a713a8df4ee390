#pragma once

#include <array>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "coldcast/csv.hpp"
#include "coldcast/date.hpp"
#include "coldcast/linalg.hpp"

namespace coldcast {

// ---------------------------------------------------------------------------
// Daily record schema. All fields optional except the date; absent feature
// values are filled by interpolation later, absent labels stay absent and are
// masked in the loss.

constexpr int kNumLteChannels = 3;  // lte10, lte50, lte90
constexpr int kLte50Channel = 1;

struct DayRecord {
  Date date;
  std::optional<double> min_at, avg_at, max_at, mean_at;
  std::optional<double> min_rh, avg_rh, max_rh;
  std::optional<double> min_dewpt, avg_dewpt, max_dewpt;
  std::optional<double> p_inches;
  std::optional<double> ws_mph, max_ws_mph;
  std::array<std::optional<double>, kNumLteChannels> lte;  // lte10, lte50, lte90

  bool label_present(int channel) const { return lte[channel].has_value(); }
  bool temperature_complete() const {
    return min_at.has_value() && avg_at.has_value() && max_at.has_value();
  }
};

/// MEAN_AT as recorded in the source data: midpoint of the daily extremes.
inline double derive_mean_at(double min_at, double max_at) { return (min_at + max_at) / 2.0; }

// ---------------------------------------------------------------------------
// Feature selection. The model consumes 12 weather features by default;
// MEAN_AT can be switched in as a 13th via `include_mean_at`.

struct FeatureSet {
  bool include_mean_at = false;

  int count() const { return include_mean_at ? 13 : 12; }

  std::vector<std::string> names() const {
    std::vector<std::string> n = {"MIN_AT",    "AVG_AT",    "MAX_AT",    "MIN_RH",
                                  "AVG_RH",    "MAX_RH",    "MIN_DEWPT", "AVG_DEWPT",
                                  "MAX_DEWPT", "P_INCHES",  "WS_MPH",    "MAX_WS_MPH"};
    if (include_mean_at) n.push_back("MEAN_AT");
    return n;
  }

  std::optional<double>& field(DayRecord& r, int i) const {
    std::optional<double>* fields[13] = {&r.min_at,    &r.avg_at,    &r.max_at,    &r.min_rh,
                                         &r.avg_rh,    &r.max_rh,    &r.min_dewpt, &r.avg_dewpt,
                                         &r.max_dewpt, &r.p_inches,  &r.ws_mph,    &r.max_ws_mph,
                                         &r.mean_at};
    return *fields[i];
  }
  const std::optional<double>& field(const DayRecord& r, int i) const {
    return field(const_cast<DayRecord&>(r), i);
  }
};

// ---------------------------------------------------------------------------
// Season: the fixed Sept 7 -> May 15 dormancy window for one cultivar-year.

struct Season {
  int cultivar_id = 0;
  int start_year = 0;
  std::vector<DayRecord> days;

  int length() const { return int(days.size()); }
  Date start_date() const { return Date{start_year, 9, 7}; }
  Date end_date() const { return Date{start_year + 1, 5, 15}; }
};

/// Days in [Sept 7 y, May 15 y+1]: 251, or 252 when February of y+1 is leap.
inline int season_length(int start_year) { return is_leap_year(start_year + 1) ? 252 : 251; }

struct CultivarData {
  int id = 0;
  std::string name;
  std::vector<Season> seasons;
};

struct FeatureStats {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> sd;
};

struct Corpus {
  std::vector<CultivarData> cultivars;
  FeatureSet features;

  int n_cultivars() const { return int(cultivars.size()); }
};

// ---------------------------------------------------------------------------
// CSV parsing. Exact header names; empty cell = absent; CULTIVAR column is
// optional when a default cultivar name is supplied (one file per cultivar).

struct ParsedRow {
  std::string cultivar;
  DayRecord record;
};

inline std::vector<ParsedRow> parse_weather_csv(const std::string& text,
                                                const std::string& default_cultivar = "") {
  csv::Table t = csv::parse(text);
  if (t.header.empty()) throw DataError("empty weather CSV");
  int date_col = t.require_column("DATE");
  int cultivar_col = t.column("CULTIVAR");
  if (cultivar_col < 0 && default_cultivar.empty()) {
    throw DataError("missing mandatory column CULTIVAR (and no default cultivar given)");
  }

  struct NumCol {
    const char* name;
    int index;
  };
  // Column -> field wiring; missing columns simply leave fields absent.
  const char* numeric_names[] = {"MIN_AT",    "AVG_AT",  "MAX_AT", "MEAN_AT",    "MIN_RH",
                                 "AVG_RH",    "MAX_RH",  "MIN_DEWPT", "AVG_DEWPT", "MAX_DEWPT",
                                 "P_INCHES",  "WS_MPH",  "MAX_WS_MPH", "LTE10",    "LTE50",
                                 "LTE90"};
  std::vector<NumCol> cols;
  for (const char* n : numeric_names) cols.push_back({n, t.column(n)});

  std::vector<ParsedRow> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& cells = t.rows[r];
    std::size_t lineno = t.line_numbers[r];
    auto cell = [&](int c) -> std::string {
      return (c >= 0 && std::size_t(c) < cells.size()) ? cells[c] : std::string();
    };

    ParsedRow row;
    row.cultivar = cultivar_col >= 0 && !cell(cultivar_col).empty() ? cell(cultivar_col)
                                                                    : default_cultivar;
    if (row.cultivar.empty()) {
      throw DataError("line " + std::to_string(lineno) + ", column CULTIVAR: empty cell");
    }
    try {
      row.record.date = parse_iso_date(cell(date_col));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ", column DATE: " + e.what());
    }

    std::optional<double> vals[16];
    for (std::size_t i = 0; i < cols.size(); ++i) {
      vals[i] = csv::parse_cell(cell(cols[i].index), lineno, cols[i].name);
    }
    DayRecord& d = row.record;
    d.min_at = vals[0];
    d.avg_at = vals[1];
    d.max_at = vals[2];
    d.mean_at = vals[3];
    d.min_rh = vals[4];
    d.avg_rh = vals[5];
    d.max_rh = vals[6];
    d.min_dewpt = vals[7];
    d.avg_dewpt = vals[8];
    d.max_dewpt = vals[9];
    d.p_inches = vals[10];
    d.ws_mph = vals[11];
    d.max_ws_mph = vals[12];
    d.lte = {vals[13], vals[14], vals[15]};
    out.push_back(std::move(row));
  }
  return out;
}

inline const char* kWeatherHeader =
    "DATE,CULTIVAR,AWN_STATION,MIN_AT,AVG_AT,MAX_AT,MEAN_AT,MIN_RH,AVG_RH,MAX_RH,"
    "MIN_DEWPT,AVG_DEWPT,MAX_DEWPT,P_INCHES,WS_MPH,MAX_WS_MPH,LTE10,LTE50,LTE90";

inline void serialize_weather_row(std::ostream& out, const std::string& cultivar,
                                  const std::string& station, const DayRecord& d) {
  using csv::format_cell;
  out << to_iso(d.date) << ',' << cultivar << ',' << station << ',' << format_cell(d.min_at)
      << ',' << format_cell(d.avg_at) << ',' << format_cell(d.max_at) << ','
      << format_cell(d.mean_at) << ',' << format_cell(d.min_rh) << ',' << format_cell(d.avg_rh)
      << ',' << format_cell(d.max_rh) << ',' << format_cell(d.min_dewpt) << ','
      << format_cell(d.avg_dewpt) << ',' << format_cell(d.max_dewpt) << ','
      << format_cell(d.p_inches) << ',' << format_cell(d.ws_mph) << ','
      << format_cell(d.max_ws_mph) << ',' << format_cell(d.lte[0]) << ','
      << format_cell(d.lte[1]) << ',' << format_cell(d.lte[2]) << '\n';
}

inline std::string serialize_weather_csv(const std::vector<ParsedRow>& rows,
                                         const std::string& station = "SYNTH.1") {
  std::ostringstream out;
  out << kWeatherHeader << '\n';
  for (const auto& r : rows) serialize_weather_row(out, r.cultivar, station, r.record);
  return out.str();
}

// ---------------------------------------------------------------------------
// Interpolation: interior gaps linear between nearest present neighbors,
// leading/trailing gaps held constant at the nearest present value.

inline std::vector<double> interpolate_missing(const std::vector<std::optional<double>>& series,
                                               const std::string& what = "series") {
  const std::size_t n = series.size();
  std::vector<double> out(n, 0.0);
  std::ptrdiff_t first = -1, last = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (series[i]) {
      if (first < 0) first = std::ptrdiff_t(i);
      last = std::ptrdiff_t(i);
    }
  }
  if (first < 0) throw DataError("all values missing in " + what);

  for (std::ptrdiff_t i = 0; i < first; ++i) out[i] = *series[first];
  for (std::ptrdiff_t i = last + 1; i < std::ptrdiff_t(n); ++i) out[i] = *series[last];
  // Interior gaps.
  std::ptrdiff_t prev = first;
  for (std::ptrdiff_t i = first + 1; i <= last; ++i) {
    if (!series[i]) continue;
    if (i > prev + 1) {
      double a = *series[prev], b = *series[i];
      for (std::ptrdiff_t k = prev + 1; k < i; ++k) {
        double frac = double(k - prev) / double(i - prev);
        out[k] = a + (b - a) * frac;
      }
    }
    prev = i;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (series[i]) out[i] = *series[i];  // present values pass through untouched
  }
  return out;
}

// ---------------------------------------------------------------------------
// Season extraction. Records must be sorted by date. A season is emitted for
// every window [Sept 7 y, May 15 y+1] containing at least one source record;
// days with no source row become all-absent records.

inline std::optional<int> season_start_year_for(const Date& d) {
  Date sept7{d.year, 9, 7};
  Date may15{d.year, 5, 15};
  if (d >= sept7) return d.year;
  if (d <= may15) return d.year - 1;
  return std::nullopt;  // May 16 .. Sept 6: outside every window
}

inline std::vector<Season> extract_seasons(const std::vector<DayRecord>& records,
                                           int cultivar_id = 0) {
  std::map<int, std::vector<const DayRecord*>> by_year;
  for (const auto& r : records) {
    if (auto y = season_start_year_for(r.date)) by_year[*y].push_back(&r);
  }
  std::vector<Season> seasons;
  for (const auto& [year, recs] : by_year) {
    Season s;
    s.cultivar_id = cultivar_id;
    s.start_year = year;
    int len = season_length(year);
    s.days.resize(len);
    Date d0 = s.start_date();
    for (int i = 0; i < len; ++i) s.days[i].date = add_days(d0, i);
    for (const DayRecord* r : recs) {
      long idx = day_diff(r->date, d0);
      s.days[idx] = *r;
    }
    seasons.push_back(std::move(s));
  }
  return seasons;
}

// ---------------------------------------------------------------------------
// Season filtering: >= 10% of days carry an LTE50 label and >= 90% of days
// have all three air temperatures present (measured before interpolation).

struct SeasonFilterDecision {
  int cultivar_id = 0;
  int start_year = 0;
  double lte_ratio = 0.0;
  double temp_ratio = 0.0;
  bool retained = false;
};

struct FilterResult {
  std::vector<Season> retained;
  std::vector<SeasonFilterDecision> log;
};

constexpr double kMinLteRatio = 0.10;
constexpr double kMinTempRatio = 0.90;

inline FilterResult filter_seasons(std::vector<Season> seasons) {
  FilterResult result;
  for (auto& s : seasons) {
    int n_lte = 0, n_temp = 0;
    for (const auto& d : s.days) {
      if (d.label_present(kLte50Channel)) ++n_lte;
      if (d.temperature_complete()) ++n_temp;
    }
    SeasonFilterDecision dec;
    dec.cultivar_id = s.cultivar_id;
    dec.start_year = s.start_year;
    dec.lte_ratio = double(n_lte) / s.length();
    dec.temp_ratio = double(n_temp) / s.length();
    dec.retained = dec.lte_ratio >= kMinLteRatio && dec.temp_ratio >= kMinTempRatio;
    if (dec.retained) result.retained.push_back(std::move(s));
    result.log.push_back(dec);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Corpus assembly: group parsed rows by cultivar, extract + filter seasons,
// interpolate features, and derive MEAN_AT where absent.

inline void interpolate_season_features(Season& s, const FeatureSet& features) {
  std::vector<std::optional<double>> series(s.days.size());
  for (int f = 0; f < features.count(); ++f) {
    for (std::size_t i = 0; i < s.days.size(); ++i) series[i] = features.field(s.days[i], f);
    auto filled = interpolate_missing(
        series, "feature " + features.names()[f] + ", cultivar " +
                    std::to_string(s.cultivar_id) + ", season " + std::to_string(s.start_year));
    for (std::size_t i = 0; i < s.days.size(); ++i) features.field(s.days[i], f) = filled[i];
  }
  // MEAN_AT backs the scientific baseline; derive it from the (now complete)
  // extremes wherever the source left it out.
  for (auto& d : s.days) {
    if (!d.mean_at) d.mean_at = derive_mean_at(*d.min_at, *d.max_at);
  }
}

struct CorpusBuildResult {
  Corpus corpus;
  std::vector<SeasonFilterDecision> filter_log;
};

inline CorpusBuildResult build_corpus(const std::vector<ParsedRow>& rows,
                                      const FeatureSet& features = {}) {
  // Cultivar ids are dense 0..C-1 in order of first appearance.
  std::vector<std::string> names;
  std::map<std::string, int> name_to_id;
  std::map<int, std::vector<DayRecord>> records;
  for (const auto& r : rows) {
    auto it = name_to_id.find(r.cultivar);
    int id;
    if (it == name_to_id.end()) {
      id = int(names.size());
      name_to_id[r.cultivar] = id;
      names.push_back(r.cultivar);
    } else {
      id = it->second;
    }
    records[id].push_back(r.record);
  }

  CorpusBuildResult out;
  out.corpus.features = features;
  for (std::size_t id = 0; id < names.size(); ++id) {
    auto& recs = records[int(id)];
    std::sort(recs.begin(), recs.end(),
              [](const DayRecord& a, const DayRecord& b) { return a.date < b.date; });
    auto seasons = extract_seasons(recs, int(id));
    auto filtered = filter_seasons(std::move(seasons));
    for (auto& dec : filtered.log) out.filter_log.push_back(dec);
    CultivarData c;
    c.id = int(id);
    c.name = names[id];
    c.seasons = std::move(filtered.retained);
    for (auto& s : c.seasons) interpolate_season_features(s, features);
    out.corpus.cultivars.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Train/test splits: per cultivar, one seeded shuffle; trial t takes the
// cyclic index pair (2t, 2t+1) as test. Pairs are disjoint whenever the
// cultivar has >= 6 seasons.

struct TrialSplit {
  int trial_index = 0;
  std::uint64_t seed = 0;
  // Per cultivar id: indices into CultivarData::seasons.
  std::vector<std::vector<int>> train;
  std::vector<std::vector<int>> test;
};

inline std::vector<TrialSplit> make_trial_splits(const Corpus& corpus, int n_trials,
                                                 std::uint64_t seed) {
  for (const auto& c : corpus.cultivars) {
    if (c.seasons.size() < 3) {
      throw DataError("cultivar '" + c.name + "' has " + std::to_string(c.seasons.size()) +
                      " retained seasons; need at least 3 to split");
    }
  }
  std::vector<TrialSplit> splits(n_trials);
  for (int t = 0; t < n_trials; ++t) {
    splits[t].trial_index = t;
    splits[t].seed = seed;
    splits[t].train.resize(corpus.cultivars.size());
    splits[t].test.resize(corpus.cultivars.size());
  }
  for (const auto& c : corpus.cultivars) {
    std::vector<int> order(c.seasons.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    Rng rng(mix_seed(seed, "split", std::uint64_t(c.id)));
    rng.shuffle(order);
    for (int t = 0; t < n_trials; ++t) {
      int n = int(order.size());
      int a = order[(2 * t) % n];
      int b = order[(2 * t + 1) % n];
      splits[t].test[c.id] = {a, b};
      for (int i : order) {
        if (i != a && i != b) splits[t].train[c.id].push_back(i);
      }
      std::sort(splits[t].train[c.id].begin(), splits[t].train[c.id].end());
      std::sort(splits[t].test[c.id].begin(), splits[t].test[c.id].end());
    }
  }
  return splits;
}

// ---------------------------------------------------------------------------
// Normalization: global z-score over all training days of all cultivars,
// population (1/N) variance. Labels stay in degrees C.

inline FeatureStats fit_normalizer(const Corpus& corpus,
                                   const std::vector<std::vector<int>>& train_indices) {
  const FeatureSet& fs = corpus.features;
  int F = fs.count();
  FeatureStats stats;
  stats.names = fs.names();
  stats.mean.assign(F, 0.0);
  stats.sd.assign(F, 0.0);

  std::vector<double> sum(F, 0.0), sumsq(F, 0.0);
  long n = 0;
  for (const auto& c : corpus.cultivars) {
    for (int si : train_indices[c.id]) {
      for (const auto& d : c.seasons[si].days) {
        for (int f = 0; f < F; ++f) {
          double v = *fs.field(d, f);
          sum[f] += v;
          sumsq[f] += v * v;
        }
        ++n;
      }
    }
  }
  if (n == 0) throw DataError("no training days to fit normalizer");
  for (int f = 0; f < F; ++f) {
    stats.mean[f] = sum[f] / n;
    double var = sumsq[f] / n - stats.mean[f] * stats.mean[f];
    stats.sd[f] = std::sqrt(std::max(var, 0.0));
    if (stats.sd[f] <= 0.0) {
      throw DataError("feature " + stats.names[f] + " has zero variance in training data");
    }
  }
  return stats;
}

/// T x F matrix of z-scored features for one season.
inline Matrixd apply_normalizer(const FeatureStats& stats, const Season& season,
                                const FeatureSet& fs) {
  int F = fs.count();
  Matrixd x(season.length(), F);
  for (int i = 0; i < season.length(); ++i) {
    for (int f = 0; f < F; ++f) {
      const auto& v = fs.field(season.days[i], f);
      if (!v) {
        throw DataError("feature " + stats.names[f] + " missing after interpolation");
      }
      x(i, f) = (*v - stats.mean[f]) / stats.sd[f];
    }
  }
  return x;
}

/// T x 3 label matrix plus presence mask (absent entries are zero-filled and
/// masked out).
inline void season_labels(const Season& season, Matrixd& y, Matrix<std::uint8_t>& mask) {
  int T = season.length();
  y.setZero(T, kNumLteChannels);
  mask.setZero(T, kNumLteChannels);
  for (int i = 0; i < T; ++i) {
    for (int c = 0; c < kNumLteChannels; ++c) {
      if (season.days[i].lte[c]) {
        y(i, c) = *season.days[i].lte[c];
        mask(i, c) = 1;
      }
    }
  }
}

}  // namespace coldcast
