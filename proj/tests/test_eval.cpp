#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "roomabs/error.hpp"
#include "roomabs/eval.hpp"
#include "roomabs/random.hpp"

using namespace roomabs;
using namespace roomabs::eval;
namespace fs = std::filesystem;

namespace {

// Type-7 quantile by selection on an unsorted copy.
double oracle_quantile(std::vector<double> v, double p) {
  const double h = (v.size() - 1) * p;
  const auto j = static_cast<std::size_t>(h);
  std::nth_element(v.begin(), v.begin() + j, v.end());
  const double lo = v[j];
  if (j + 1 >= v.size()) return lo;
  const double hi = *std::min_element(v.begin() + j + 1, v.end());
  return lo + (h - j) * (hi - lo);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

ExperimentConfig small(std::size_t rooms) {
  ExperimentConfig c;
  c.n_rooms = rooms;
  c.seed = 17;
  c.sim.n_rays = 2000;
  return c;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("absolute errors") {
  const std::vector<BandValues> labels{{0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, {1, 1, 1, 1, 1, 1}};
  std::vector<BandEstimates> est(2);
  for (std::size_t b = 0; b < kNumBands; ++b) {
    est[0][b] = labels[0][b];
    est[1][b] = 0.0;
  }
  est[1][3].reset();
  const auto e = absolute_errors(est, labels);
  CHECK(e.records.size() == 11);
  CHECK(e.unavailable == 1);
  for (const auto& r : e.records) {
    CHECK(r.absolute_error == (r.room == 0 ? 0.0 : 1.0));
    CHECK(r.label == labels[r.room][r.band]);
  }
  CHECK_THROWS_AS(absolute_errors(std::vector<BandEstimates>(1), labels), ShapeMismatch);
  const auto per_band = band_stats(e);
  CHECK(per_band[3]->n == 1);
  CHECK(per_band[0]->n == 2);
  CHECK(box_stats(e).n == 11);
}

TEST_CASE("box statistics examples") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  const auto s = box_stats(v);
  CHECK(s.median == 3);
  CHECK(s.q1 == 2);
  CHECK(s.q3 == 4);
  CHECK(s.whisker_low == 1);
  CHECK(s.whisker_high == 5);
  CHECK(s.mean == 3);
  CHECK(s.std == doctest::Approx(std::sqrt(2.0)));

  const std::vector<double> c(7, 0.25);
  const auto k = box_stats(c);
  CHECK(k.median == 0.25);
  CHECK(k.q1 == 0.25);
  CHECK(k.whisker_high == 0.25);
  CHECK(k.std == 0.0);

  // An outlier sits outside the whiskers.
  const std::vector<double> o{1, 2, 3, 4, 100};
  CHECK(box_stats(o).whisker_high == 4);
  CHECK_THROWS_AS(box_stats(std::vector<double>{}), EmptyInput);
}

TEST_CASE("quartiles agree with a selection oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> v(1 + rng.below(60));
    for (auto& x : v) x = rng.uniform() < 0.1 ? rng.uniform(0, 5) : rng.uniform();
    const auto s = box_stats(v);
    REQUIRE(s.median == doctest::Approx(oracle_quantile(v, 0.5)));
    REQUIRE(s.q1 == doctest::Approx(oracle_quantile(v, 0.25)));
    REQUIRE(s.q3 == doctest::Approx(oracle_quantile(v, 0.75)));
    const double iqr = s.q3 - s.q1;
    double lo = 1e9, hi = -1e9;
    for (double x : v) {
      if (x >= s.q1 - 1.5 * iqr) lo = std::min(lo, x);
      if (x <= s.q3 + 1.5 * iqr) hi = std::max(hi, x);
    }
    REQUIRE(s.whisker_low == lo);
    REQUIRE(s.whisker_high == hi);
  }
}

TEST_CASE("method names") {
  for (auto m : {Method::kEyring, Method::kSabine, Method::kCnnRb, Method::kMlpRb, Method::kCnnUnif,
                 Method::kMlpUnif, Method::kCnnSpecular}) {
    CHECK(method_from_name(method_name(m)) == m);
  }
  CHECK(!is_learned(Method::kEyring));
  CHECK(is_learned(Method::kCnnSpecular));
  CHECK_THROWS(method_from_name("nope"));
}

TEST_CASE("learned methods need a model") {
  CHECK_THROWS_AS(run_experiment("realistic", {Method::kCnnRb}, small(2)), MissingModel);
  CHECK_THROWS(run_experiment("no_such_family", {Method::kEyring}, small(2)));
}

TEST_CASE("reports are byte-reproducible") {
  auto cfg = small(3);
  cfg.sim.n_rays = 500;
  cfg.sim.max_time = 0.6;
  const auto base = fs::temp_directory_path() / "roomabs_eval_test";
  fs::remove_all(base);
  for (const char* run : {"a", "b"}) {
    const auto report = run_experiment("cube_like", {Method::kEyring, Method::kSabine}, cfg);
    CHECK(report.rooms.size() == 3);
    CHECK(report.conditions.size() == 1);
    write_report(report, base / run, "seed=17");
  }
  for (const char* f : {"cube_like_eyring.csv", "cube_like_sabine.csv", "cube_like_boxstats.csv",
                        "cube_like_summary.txt"}) {
    const auto a = slurp(base / "a" / f);
    CHECK(!a.empty());
    CHECK(a.rfind("# seed=17", 0) == 0);
    CHECK(a == slurp(base / "b" / f));
  }
}

TEST_CASE("realistic rooms: Sabine is no more accurate than Eyring") {
  const auto report = run_experiment("realistic", {Method::kEyring, Method::kSabine}, small(6));
  const auto& ey = report.result(Method::kEyring).errors;
  const auto& sa = report.result(Method::kSabine).errors;
  REQUIRE(!ey.records.empty());
  CHECK(box_stats(sa).median >= box_stats(ey).median);
}

TEST_CASE("noise sweep: Eyring degrades at low SNR") {
  auto cfg = small(6);
  cfg.snr_levels = {20.0, 50.0};
  const auto report = run_experiment("snr_sweep", {Method::kEyring}, cfg);
  REQUIRE(report.conditions.size() == 2);
  const auto& low = report.result(Method::kEyring, 0).errors;
  const auto& high = report.result(Method::kEyring, 1).errors;
  REQUIRE(!high.records.empty());
  REQUIRE(!low.records.empty());
  CHECK(box_stats(low).median > box_stats(high).median);
}

}
