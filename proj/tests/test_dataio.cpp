#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "coldcast/dataio.hpp"

using namespace coldcast;

namespace {

Season make_season(int start_year, int n_lte50, int n_temp_complete, int cultivar = 0) {
  Season s;
  s.cultivar_id = cultivar;
  s.start_year = start_year;
  int len = season_length(start_year);
  s.days.resize(len);
  Date d0 = s.start_date();
  for (int i = 0; i < len; ++i) {
    s.days[i].date = add_days(d0, i);
    if (i < n_temp_complete) {
      s.days[i].min_at = -2.0 + 0.01 * i;
      s.days[i].avg_at = 1.0 + 0.01 * i;
      s.days[i].max_at = 4.0 + 0.01 * i;
    }
    if (i < n_lte50) s.days[i].lte[kLte50Channel] = -10.0;
  }
  return s;
}

}  // namespace

TEST_CASE("derive_mean_at is the midpoint of the extremes") {
  CHECK(derive_mean_at(0.0, 10.0) == 5.0);
  CHECK(derive_mean_at(-7.0, -7.0) == -7.0);
  CHECK(derive_mean_at(-12.4, 3.2) == Catch::Approx(-4.6).margin(1e-12));
}

TEST_CASE("parse_weather_csv maps cells and absence") {
  std::string csv_text =
      "DATE,CULTIVAR,AWN_STATION,MIN_AT,AVG_AT,MAX_AT,MEAN_AT,MIN_RH,AVG_RH,MAX_RH,"
      "MIN_DEWPT,AVG_DEWPT,MAX_DEWPT,P_INCHES,WS_MPH,MAX_WS_MPH,LTE10,LTE50,LTE90\n"
      "2010-01-05,Merlot,Prosser.NE,-2.0,1.0,4.0,,55,70,85,-5,-3,-1,0.02,3.1,7.4,,-24.1,\n"
      "2010-01-06,Merlot,Prosser.NE,-1.0,2.0,5.0,2.0,50,65,80,-4,-2,0,0,2.0,5.0,,,\n";
  auto rows = parse_weather_csv(csv_text);
  REQUIRE(rows.size() == 2);

  const DayRecord& r0 = rows[0].record;
  CHECK(rows[0].cultivar == "Merlot");
  CHECK(r0.date == Date{2010, 1, 5});
  CHECK(r0.min_at == -2.0);
  CHECK_FALSE(r0.mean_at.has_value());
  CHECK(r0.lte[kLte50Channel] == -24.1);
  CHECK(r0.label_present(1));
  CHECK_FALSE(r0.label_present(0));
  CHECK_FALSE(r0.label_present(2));

  const DayRecord& r1 = rows[1].record;
  CHECK_FALSE(r1.label_present(0));
  CHECK_FALSE(r1.label_present(1));
  CHECK_FALSE(r1.label_present(2));
}

TEST_CASE("parse_weather_csv errors name row and column") {
  std::string bad_date =
      "DATE,CULTIVAR,MIN_AT\n"
      "2010-13-40,Merlot,1.0\n";
  CHECK_THROWS_WITH(parse_weather_csv(bad_date),
                    Catch::Matchers::ContainsSubstring("line 2") &&
                        Catch::Matchers::ContainsSubstring("DATE"));

  std::string bad_cell =
      "DATE,CULTIVAR,MIN_AT\n"
      "2010-01-05,Merlot,oops\n";
  CHECK_THROWS_WITH(parse_weather_csv(bad_cell),
                    Catch::Matchers::ContainsSubstring("line 2") &&
                        Catch::Matchers::ContainsSubstring("MIN_AT"));

  std::string no_date = "CULTIVAR,MIN_AT\nMerlot,1.0\n";
  CHECK_THROWS_WITH(parse_weather_csv(no_date), Catch::Matchers::ContainsSubstring("DATE"));

  std::string no_cultivar = "DATE,MIN_AT\n2010-01-05,1.0\n";
  CHECK_THROWS(parse_weather_csv(no_cultivar));
  CHECK_NOTHROW(parse_weather_csv(no_cultivar, "Merlot"));
}

TEST_CASE("weather csv round-trips values and absence flags") {
  Rng rng(99);
  std::vector<ParsedRow> rows;
  for (int i = 0; i < 60; ++i) {
    ParsedRow r;
    r.cultivar = i % 2 ? "A" : "B";
    r.record.date = add_days(Date{2011, 9, 7}, i);
    auto maybe = [&](double v) {
      return rng.next_unit() < 0.3 ? std::optional<double>() : std::optional<double>(v);
    };
    r.record.min_at = maybe(rng.next_uniform(-20, 5));
    r.record.avg_at = maybe(rng.next_uniform(-15, 10));
    r.record.max_at = maybe(rng.next_uniform(-10, 15));
    r.record.mean_at = maybe(rng.next_uniform(-15, 10));
    r.record.min_rh = maybe(rng.next_uniform(0, 100));
    r.record.p_inches = maybe(rng.next_uniform(0, 2));
    r.record.lte = {maybe(-10), maybe(-12), maybe(-14)};
    rows.push_back(r);
  }
  auto reparsed = parse_weather_csv(serialize_weather_csv(rows));
  REQUIRE(reparsed.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const DayRecord& a = rows[i].record;
    const DayRecord& b = reparsed[i].record;
    CHECK(rows[i].cultivar == reparsed[i].cultivar);
    CHECK(a.date == b.date);
    CHECK(a.min_at == b.min_at);  // %.17g round-trips doubles exactly
    CHECK(a.avg_at == b.avg_at);
    CHECK(a.max_at == b.max_at);
    CHECK(a.mean_at == b.mean_at);
    CHECK(a.min_rh == b.min_rh);
    CHECK(a.p_inches == b.p_inches);
    for (int c = 0; c < 3; ++c) {
      CHECK(a.lte[c].has_value() == b.lte[c].has_value());
      if (a.lte[c]) CHECK(*a.lte[c] == *b.lte[c]);
    }
  }
}

TEST_CASE("interpolate_missing fills gaps and edges") {
  using OV = std::vector<std::optional<double>>;
  CHECK(interpolate_missing(OV{1.0, std::nullopt, 3.0}) == std::vector<double>{1, 2, 3});
  CHECK(interpolate_missing(OV{std::nullopt, std::nullopt, 5.0, 7.0}) ==
        std::vector<double>{5, 5, 5, 7});
  CHECK(interpolate_missing(OV{4.0, std::nullopt, std::nullopt, 10.0}) ==
        std::vector<double>{4, 6, 8, 10});
  CHECK_THROWS_AS(interpolate_missing(OV{std::nullopt, std::nullopt}), DataError);
}

TEST_CASE("interpolation is piecewise linear and preserves present values") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    int n = 10 + int(rng.next_below(40));
    std::vector<std::optional<double>> series(n);
    int present = 0;
    for (auto& v : series) {
      if (rng.next_unit() < 0.4) {
        v = rng.next_uniform(-30, 30);
        ++present;
      }
    }
    if (present == 0) series[rng.next_below(n)] = 1.0;
    auto filled = interpolate_missing(series);
    for (int i = 0; i < n; ++i) {
      if (series[i]) CHECK(filled[i] == *series[i]);
    }
    // Zero second difference strictly inside any gap.
    for (int i = 1; i + 1 < n; ++i) {
      if (!series[i] && !series[i - 1] && !series[i + 1]) {
        CHECK(filled[i + 1] - 2 * filled[i] + filled[i - 1] ==
              Catch::Approx(0.0).margin(1e-9));
      }
    }
  }
}

TEST_CASE("season windows and lengths") {
  CHECK(season_length(2009) == 251);  // Feb 2010 is not leap
  CHECK(season_length(2011) == 252);  // Feb 2012 is leap

  SECTION("full coverage produces one season of the right length") {
    std::vector<DayRecord> records;
    Date d0{2009, 9, 7};
    for (int i = 0; i < 251; ++i) {
      DayRecord r;
      r.date = add_days(d0, i);
      records.push_back(r);
    }
    auto seasons = extract_seasons(records);
    REQUIRE(seasons.size() == 1);
    CHECK(seasons[0].length() == 251);
    CHECK(seasons[0].days.front().date == Date{2009, 9, 7});
    CHECK(seasons[0].days.back().date == Date{2010, 5, 15});
    for (int i = 1; i < seasons[0].length(); ++i) {
      CHECK(day_diff(seasons[0].days[i].date, seasons[0].days[i - 1].date) == 1);
    }
  }

  SECTION("leap-february window has 252 days") {
    std::vector<DayRecord> records(1);
    records[0].date = Date{2012, 2, 29};
    auto seasons = extract_seasons(records);
    REQUIRE(seasons.size() == 1);
    CHECK(seasons[0].start_year == 2011);
    CHECK(seasons[0].length() == 252);
  }

  SECTION("records outside every window produce no seasons") {
    std::vector<DayRecord> records(2);
    records[0].date = Date{2010, 6, 15};
    records[1].date = Date{2010, 7, 1};
    CHECK(extract_seasons(records).empty());
  }

  SECTION("windows partition the source dates") {
    std::vector<DayRecord> records;
    for (int i = 0; i < 900; ++i) {
      DayRecord r;
      r.date = add_days(Date{2009, 1, 1}, i);
      records.push_back(r);
    }
    auto seasons = extract_seasons(records);
    std::map<std::string, int> seen;
    for (const auto& s : seasons) {
      for (const auto& d : s.days) seen[to_iso(d.date)]++;
    }
    for (const auto& [date, count] : seen) CHECK(count == 1);
  }
}

TEST_CASE("filter_seasons thresholds are sharp") {
  SECTION("25 of 251 labeled days is rejected") {
    auto r = filter_seasons({make_season(2009, 25, 251)});
    CHECK(r.retained.empty());
    REQUIRE(r.log.size() == 1);
    CHECK(r.log[0].lte_ratio < kMinLteRatio);
  }
  SECTION("26 labeled and 240 temperature-complete days is retained") {
    auto r = filter_seasons({make_season(2009, 26, 240)});
    CHECK(r.retained.size() == 1);
  }
  SECTION("plenty of labels but 200 temperature days is rejected") {
    auto r = filter_seasons({make_season(2009, 100, 200)});
    CHECK(r.retained.empty());
    CHECK(r.log[0].temp_ratio < kMinTempRatio);
  }
  SECTION("rejection log carries both ratios") {
    auto r = filter_seasons({make_season(2009, 25, 200)});
    CHECK(r.log[0].lte_ratio == Catch::Approx(25.0 / 251));
    CHECK(r.log[0].temp_ratio == Catch::Approx(200.0 / 251));
  }
}

namespace {

Corpus corpus_with_seasons(const std::vector<int>& seasons_per_cultivar) {
  Corpus corpus;
  for (std::size_t c = 0; c < seasons_per_cultivar.size(); ++c) {
    CultivarData cd;
    cd.id = int(c);
    cd.name = "C" + std::to_string(c);
    for (int k = 0; k < seasons_per_cultivar[c]; ++k) {
      cd.seasons.push_back(make_season(2000 + k, 30, season_length(2000 + k), int(c)));
    }
    corpus.cultivars.push_back(std::move(cd));
  }
  return corpus;
}

}  // namespace

TEST_CASE("make_trial_splits cardinality and determinism") {
  Corpus corpus = corpus_with_seasons({4});
  auto splits = make_trial_splits(corpus, 3, 7);
  REQUIRE(splits.size() == 3);
  for (const auto& s : splits) {
    CHECK(s.test[0].size() == 2);
    CHECK(s.train[0].size() == 2);
    // Disjoint and covering.
    std::set<int> all(s.train[0].begin(), s.train[0].end());
    for (int i : s.test[0]) {
      CHECK(all.count(i) == 0);
      all.insert(i);
    }
    CHECK(all.size() == 4);
  }
  auto splits2 = make_trial_splits(corpus, 3, 7);
  for (int t = 0; t < 3; ++t) {
    CHECK(splits[t].train[0] == splits2[t].train[0]);
    CHECK(splits[t].test[0] == splits2[t].test[0]);
  }
}

TEST_CASE("make_trial_splits gives disjoint test pairs for large cultivars") {
  Corpus corpus = corpus_with_seasons({34});
  auto splits = make_trial_splits(corpus, 3, 123);
  std::set<int> test_union;
  for (const auto& s : splits) {
    for (int i : s.test[0]) test_union.insert(i);
  }
  CHECK(test_union.size() == 6);  // three pairwise-disjoint pairs
}

TEST_CASE("make_trial_splits rejects cultivars with fewer than 3 seasons") {
  Corpus corpus = corpus_with_seasons({4, 2});
  CHECK_THROWS_WITH(make_trial_splits(corpus, 3, 1), Catch::Matchers::ContainsSubstring("C1"));
}

TEST_CASE("normalizer fits population statistics and rejects constants") {
  Corpus corpus;
  corpus.features = FeatureSet{};
  CultivarData cd;
  cd.id = 0;
  cd.name = "A";
  Season s;
  s.cultivar_id = 0;
  s.start_year = 2000;
  s.days.resize(2);
  for (int i = 0; i < 2; ++i) {
    DayRecord& d = s.days[i];
    d.date = add_days(Date{2000, 9, 7}, i);
    double v = i == 0 ? 0.0 : 2.0;
    d.min_at = v;
    d.avg_at = v + 1;
    d.max_at = v + 2;
    d.min_rh = 40 + v;
    d.avg_rh = 50 + v;
    d.max_rh = 60 + v;
    d.min_dewpt = v - 3;
    d.avg_dewpt = v - 2;
    d.max_dewpt = v - 1;
    d.p_inches = v;
    d.ws_mph = v + 4;
    d.max_ws_mph = v + 5;
  }
  cd.seasons.push_back(s);
  corpus.cultivars.push_back(cd);

  auto stats = fit_normalizer(corpus, {{0}});
  // MIN_AT takes values {0, 2}: population mean 1, sd 1.
  CHECK(stats.mean[0] == 1.0);
  CHECK(stats.sd[0] == 1.0);
  Matrixd x = apply_normalizer(stats, corpus.cultivars[0].seasons[0], corpus.features);
  CHECK(x(0, 0) == -1.0);
  CHECK(x(1, 0) == 1.0);

  // Un-applying recovers the raw values.
  for (int f = 0; f < corpus.features.count(); ++f) {
    for (int t = 0; t < 2; ++t) {
      double raw = *corpus.features.field(corpus.cultivars[0].seasons[0].days[t], f);
      CHECK(x(t, f) * stats.sd[f] + stats.mean[f] == Catch::Approx(raw).margin(1e-12));
    }
  }

  // A constant feature must be rejected by name.
  for (auto& d : corpus.cultivars[0].seasons[0].days) d.p_inches = 0.25;
  CHECK_THROWS_WITH(fit_normalizer(corpus, {{0}}),
                    Catch::Matchers::ContainsSubstring("P_INCHES"));
}

TEST_CASE("already standardized features pass through unchanged") {
  Corpus corpus;
  corpus.features = FeatureSet{};
  CultivarData cd;
  cd.id = 0;
  cd.name = "A";
  Season s;
  s.cultivar_id = 0;
  s.start_year = 2000;
  s.days.resize(2);
  for (int i = 0; i < 2; ++i) {
    DayRecord& d = s.days[i];
    d.date = add_days(Date{2000, 9, 7}, i);
    double v = i == 0 ? -1.0 : 1.0;  // mean 0, population sd 1
    FeatureSet fs;
    for (int f = 0; f < fs.count(); ++f) fs.field(d, f) = v;
  }
  cd.seasons.push_back(s);
  corpus.cultivars.push_back(cd);
  auto stats = fit_normalizer(corpus, {{0}});
  Matrixd x = apply_normalizer(stats, corpus.cultivars[0].seasons[0], corpus.features);
  CHECK(x(0, 0) == -1.0);
  CHECK(x(1, 0) == 1.0);
}

TEST_CASE("build_corpus groups cultivars, filters, and interpolates") {
  // Two cultivars; one season fully labeled and temperature complete, with a
  // few interior humidity gaps to exercise interpolation; a second cultivar
  // whose season lacks labels and must be dropped.
  std::ostringstream text;
  text << kWeatherHeader << '\n';
  Date d0{2009, 9, 7};
  for (int i = 0; i < 251; ++i) {
    ParsedRow r;
    r.record.date = add_days(d0, i);
    r.record.min_at = -2;
    r.record.avg_at = 0;
    r.record.max_at = 2;
    if (i % 5 != 0) {  // humidity missing every 5th day
      r.record.min_rh = 40;
      r.record.avg_rh = 50;
      r.record.max_rh = 60;
    }
    r.record.min_dewpt = -5;
    r.record.avg_dewpt = -4;
    r.record.max_dewpt = -3;
    r.record.p_inches = i % 7 == 0 ? 0.4 : 0.0;
    r.record.ws_mph = 3;
    r.record.max_ws_mph = 6;
    if (i % 7 == 0) r.record.lte = {-9.0, -10.0, -11.0};
    serialize_weather_row(text, "Good", "S", r.record);
    DayRecord bare;
    bare.date = r.record.date;
    bare.min_at = -2;
    bare.avg_at = 0;
    bare.max_at = 2;
    serialize_weather_row(text, "Bare", "S", bare);
  }
  auto rows = parse_weather_csv(text.str());
  auto built = build_corpus(rows);
  REQUIRE(built.corpus.cultivars.size() == 2);
  CHECK(built.corpus.cultivars[0].name == "Good");
  CHECK(built.corpus.cultivars[0].seasons.size() == 1);
  CHECK(built.corpus.cultivars[1].seasons.empty());  // no labels -> filtered

  const Season& s = built.corpus.cultivars[0].seasons[0];
  for (const auto& d : s.days) {
    CHECK(d.min_rh.has_value());  // gaps filled
    CHECK(*d.min_rh == Catch::Approx(40.0));
    REQUIRE(d.mean_at.has_value());
    CHECK(*d.mean_at == 0.0);  // derived midpoint of -2 and 2
  }
}
