#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "emerg/errors.hpp"
#include "emerg/metrics.hpp"
#include "json.hpp"
#include "support/oracles.hpp"

using namespace emerg;
using namespace emerg::eval;

TEST_CASE("auc examples") {
  CHECK(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1}) == 0.5);
  CHECK(auc(std::vector<double>{0.8, 0.6, 0.4, 0.2}, std::vector<int>{1, 0, 1, 0}) == 0.75);
  CHECK(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 1}), MetricError);
  CHECK_THROWS_AS(auc(std::vector<double>{}, std::vector<int>{}), MetricError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), DimensionError);
}

TEST_CASE("auc matches the pairwise brute force") {
  std::mt19937_64 rng(11);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> s(n);
    std::vector<int> y(n);
    // coarse scores so that ties are common
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 20) / 20.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    worst = std::max(worst, std::abs(auc(s, y) - testing::pairwise_auc(s, y)));

    // strictly increasing transform leaves it unchanged
    std::vector<double> t(n);
    std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3 * v) - 7; });
    CHECK(auc(t, y) == auc(s, y));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("f1") {
  CHECK(f1(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(f1(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 0}) == 0.0);
  CHECK(f1(std::vector<double>{0.9, 0.4, 0.6}, std::vector<int>{1, 0, 0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(f1(std::vector<double>{0.5}, std::vector<int>{1}) == 1.0);  // threshold inclusive
  CHECK(f1(std::vector<double>{0.9, 0.9}, std::vector<int>{0, 0}) == 0.0);
  CHECK_THROWS_AS(f1(std::vector<double>{}, std::vector<int>{}), ContractError);

  std::mt19937_64 rng(12);
  std::vector<double> s(50);
  std::vector<int> y(50);
  for (std::size_t i = 0; i < 50; ++i) {
    s[i] = std::uniform_real_distribution<double>(0, 1)(rng);
    y[i] = static_cast<int>(rng() % 2);
  }
  CHECK(f1(s, y) == doctest::Approx(testing::confusion_f1(s, y, 0.5)).epsilon(1e-15));
  const double before = f1(s, y);
  std::vector<std::size_t> perm(50);
  for (std::size_t i = 0; i < 50; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> s2;
  std::vector<int> y2;
  for (auto i : perm) {
    s2.push_back(s[i]);
    y2.push_back(y[i]);
  }
  CHECK(f1(s2, y2) == before);
}

TEST_CASE("reports") {
  const auto r = make_report("A", std::vector<double>{0.9, 0.4, 0.6}, std::vector<int>{1, 0, 0}, "fp", 3);
  CHECK(r.n == 3);
  CHECK(r.positives == 1);
  CHECK(r.auc == 1.0);

  std::ostringstream csv;
  write_reports_csv(csv, {r});
  CHECK(csv.str().substr(0, csv.str().find('\n')) == "phase,auc,f1,n,positives");
  CHECK(csv.str().find("A,1,0.6666666666666666,3,1\n") != std::string::npos);

  std::ostringstream js;
  write_reports_json(js, {r}, "fp", 3, {"note"});
  const auto doc = nlohmann::json::parse(js.str());
  CHECK(doc["fingerprint"] == "fp");
  CHECK(doc["seed"] == 3);
  CHECK(doc["phases"][0]["phase"] == "A");
  CHECK(doc["phases"][0]["positives"] == 1);
  CHECK(doc["notes"][0] == "note");
}
