#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "coldcast/dataio.hpp"
#include "coldcast/ferguson.hpp"

namespace coldcast {

// ---------------------------------------------------------------------------
// Synthetic cultivar families: shared weather per calendar year (one virtual
// station), per-cultivar Ferguson parameters perturbed around a common base,
// labels sampled every `label_period` days with Gaussian noise. The hidden
// parameters and noise-free curves come back alongside the corpus so learning
// and tuning tests have an exact ground truth.

struct SynthSpec {
  int n_cultivars = 6;
  std::vector<int> seasons_per_cultivar = {};  // empty -> 8 each
  int start_year = 2000;
  FergusonParams base;
  double perturb_scale = 0.1;  // 0 = all cultivars share the base parameters
  int label_period = 7;        // days between LTE observations
  double label_noise_sd = 0.0;
  std::uint64_t weather_seed = 1;
  std::uint64_t seed = 1;

  int seasons_for(int cultivar) const {
    if (seasons_per_cultivar.empty()) return 8;
    if (int(seasons_per_cultivar.size()) == 1) return seasons_per_cultivar[0];
    return seasons_per_cultivar.at(cultivar);
  }

  void validate() const {
    if (n_cultivars < 1) throw DataError("synth: n_cultivars must be >= 1");
    if (label_period < 1) throw DataError("synth: label_period must be >= 1");
    if (label_noise_sd < 0) throw DataError("synth: label_noise_sd must be >= 0");
    if (!base.valid()) throw DataError("synth: base ferguson parameters invalid");
    if (!seasons_per_cultivar.empty() && int(seasons_per_cultivar.size()) != 1 &&
        int(seasons_per_cultivar.size()) != n_cultivars) {
      throw DataError("synth: seasons_per_cultivar must have 1 or n_cultivars entries");
    }
  }
};

// Mid-latitude seasonal temperature shape: warm at the September start,
// coldest near mid-January (day ~130 of the window), warming into May.
inline double seasonal_mean_temp(int day_index) {
  constexpr double kMid = 5.0, kAmp = 11.0, kColdestDay = 130.0;
  return kMid - kAmp * std::cos(2.0 * M_PI * (day_index - kColdestDay) / 365.25);
}

/// One season of weather for a given start year; deterministic in (seed,
/// start_year) and shared by every cultivar observed in that year.
inline Season generate_weather(std::uint64_t weather_seed, int start_year) {
  Rng rng(mix_seed(weather_seed, "weather", std::uint64_t(start_year)));
  Season s;
  s.start_year = start_year;
  int len = season_length(start_year);
  s.days.resize(len);
  Date d0 = s.start_date();

  double ar = 0.0;  // autocorrelated temperature anomaly
  for (int i = 0; i < len; ++i) {
    DayRecord& d = s.days[i];
    d.date = add_days(d0, i);

    ar = 0.7 * ar + 2.5 * rng.next_normal();
    double avg = seasonal_mean_temp(i) + ar;
    double spread_lo = 3.0 + 2.0 * rng.next_unit();
    double spread_hi = 3.0 + 2.0 * rng.next_unit();
    d.avg_at = avg;
    d.min_at = avg - spread_lo;
    d.max_at = avg + spread_hi;
    d.mean_at = derive_mean_at(*d.min_at, *d.max_at);

    double rh = std::clamp(70.0 + 12.0 * std::sin(i * 0.11) + 8.0 * rng.next_normal(), 2.0, 98.0);
    double rh_lo = std::min(rh, 12.0 + 5.0 * rng.next_unit());
    double rh_hi = std::min(100.0 - rh, 10.0 + 5.0 * rng.next_unit());
    d.avg_rh = rh;
    d.min_rh = std::clamp(rh - rh_lo, 0.0, 100.0);
    d.max_rh = std::clamp(rh + rh_hi, 0.0, 100.0);

    double dew_gap = 2.0 + std::abs(rng.next_normal());
    d.avg_dewpt = avg - dew_gap;
    d.min_dewpt = *d.avg_dewpt - (1.5 + rng.next_unit());
    d.max_dewpt = *d.avg_dewpt + (1.5 + rng.next_unit());

    double wet = rng.next_unit();
    d.p_inches = wet < 0.25 ? -0.08 * std::log(1.0 - rng.next_unit()) : 0.0;
    double ws = 1.5 + 2.0 * std::abs(rng.next_normal());
    d.ws_mph = ws;
    d.max_ws_mph = ws + 1.0 + 3.0 * rng.next_unit();
  }
  return s;
}

/// Per-cultivar hidden parameters: base perturbed per-field within bounds.
inline FergusonParams perturb_params(const FergusonParams& base, double scale, Rng& rng) {
  if (scale == 0.0) return base;
  auto u = [&rng] { return 2.0 * rng.next_unit() - 1.0; };
  FergusonParams p = base;
  p.t_th = base.t_th + 3.0 * scale * u();
  p.k_a_endo = std::max(0.0, base.k_a_endo * (1.0 + scale * u()));
  p.k_a_eco = std::max(0.0, base.k_a_eco * (1.0 + scale * u()));
  p.k_d_endo = std::max(0.0, base.k_d_endo * (1.0 + scale * u()));
  p.k_d_eco = std::max(0.0, base.k_d_eco * (1.0 + scale * u()));
  p.h_min = base.h_min + 4.0 * scale * u();
  p.h_max = std::min(-0.5, base.h_max + 1.0 * scale * u());
  if (p.h_min >= p.h_max) p.h_min = p.h_max - 10.0;
  p.c_star = std::min(-1.0, base.c_star * (1.0 + 0.3 * scale * u()));
  p.theta = std::max(0.25, base.theta + 0.5 * scale * u());
  p.h_init = std::clamp(base.h_init, p.h_min, p.h_max);
  return p;
}

// LTE10/LTE90 sit at fixed offsets around LTE50; they exist to exercise the
// three-channel head, only LTE50 is evaluated.
constexpr double kLte10Spread = 1.5;
constexpr double kLte90Spread = 1.5;

struct SynthTruth {
  std::vector<FergusonParams> params;                        // per cultivar
  std::vector<std::vector<std::vector<double>>> lte50;       // [cultivar][season][day]
};

struct SynthResult {
  Corpus corpus;
  SynthTruth truth;
};

inline SynthResult generate_corpus(const SynthSpec& spec) {
  spec.validate();
  SynthResult out;
  out.corpus.features = FeatureSet{};

  for (int c = 0; c < spec.n_cultivars; ++c) {
    Rng prng(mix_seed(spec.seed, "params", std::uint64_t(c)));
    FergusonParams params = perturb_params(spec.base, spec.perturb_scale, prng);
    if (!params.valid()) throw DataError("synth: perturbed parameters invalid");
    out.truth.params.push_back(params);

    CultivarData cult;
    cult.id = c;
    char name[24];
    std::snprintf(name, sizeof(name), "Synth%02d", c);
    cult.name = name;

    int n_seasons = spec.seasons_for(c);
    out.truth.lte50.emplace_back();
    for (int k = 0; k < n_seasons; ++k) {
      int year = spec.start_year + k;
      Season s = generate_weather(spec.weather_seed, year);
      s.cultivar_id = c;

      std::vector<double> curve = ferguson_predict(s, params);
      out.truth.lte50.back().push_back(curve);

      Rng label_rng(mix_seed(spec.seed, "labels", std::uint64_t(c), std::uint64_t(k)));
      for (int i = 0; i < s.length(); i += spec.label_period) {
        double noise =
            spec.label_noise_sd > 0.0 ? spec.label_noise_sd * label_rng.next_normal() : 0.0;
        double lte50 = curve[i] + noise;
        s.days[i].lte = {lte50 + kLte10Spread, lte50, lte50 - kLte90Spread};
      }
      cult.seasons.push_back(std::move(s));
    }
    out.corpus.cultivars.push_back(std::move(cult));
  }
  return out;
}

/// Corpus as the ingestion CSV schema (one combined file, CULTIVAR column).
inline std::string synth_corpus_csv(const SynthResult& synth) {
  std::ostringstream out;
  out << kWeatherHeader << '\n';
  for (const auto& c : synth.corpus.cultivars) {
    for (const auto& s : c.seasons) {
      for (const auto& d : s.days) serialize_weather_row(out, c.name, "SYNTH.1", d);
    }
  }
  return out.str();
}

/// Hidden truth: per-cultivar generating parameters, then per-day noise-free
/// LTE50 curves.
inline std::string synth_truth_csv(const SynthResult& synth) {
  std::ostringstream out;
  out << "# generating parameters\n";
  out << "cultivar,t_th,k_a_endo,k_a_eco,k_d_endo,k_d_eco,h_min,h_max,c_star,theta,h_init\n";
  for (std::size_t c = 0; c < synth.truth.params.size(); ++c) {
    const auto& p = synth.truth.params[c];
    out << synth.corpus.cultivars[c].name << ',' << format_double(p.t_th) << ','
        << format_double(p.k_a_endo) << ',' << format_double(p.k_a_eco) << ','
        << format_double(p.k_d_endo) << ',' << format_double(p.k_d_eco) << ','
        << format_double(p.h_min) << ',' << format_double(p.h_max) << ','
        << format_double(p.c_star) << ',' << format_double(p.theta) << ','
        << format_double(p.h_init) << '\n';
  }
  out << "# noise-free curves\n";
  out << "cultivar,season,date,lte50_true\n";
  for (std::size_t c = 0; c < synth.truth.lte50.size(); ++c) {
    const auto& cult = synth.corpus.cultivars[c];
    for (std::size_t k = 0; k < synth.truth.lte50[c].size(); ++k) {
      const auto& season = cult.seasons[k];
      const auto& curve = synth.truth.lte50[c][k];
      for (std::size_t i = 0; i < curve.size(); ++i) {
        out << cult.name << ',' << season.start_year << ',' << to_iso(season.days[i].date) << ','
            << format_double(curve[i]) << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace coldcast
