#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "pcp/stats.hpp"

using namespace pcp;

TEST_CASE("derive_seed: distinct streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t m = 0; m < 20; ++m)
    for (std::uint64_t s = 0; s < 20; ++s) seen.insert(derive_seed(m, s));
  CHECK(seen.size() == 400);
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("normal quantile and cdf") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
  CHECK(normal_cdf(0.0) == 0.5);
  for (double p : {0.001, 0.1, 0.5, 0.77, 0.999}) CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p));
}

TEST_CASE("type-7 quantile") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  CHECK(quantile_type7(v, 0.0) == 1.0);
  CHECK(quantile_type7(v, 1.0) == 5.0);
  CHECK(quantile_type7(v, 0.5) == 3.0);
  CHECK(quantile_type7(v, 0.1) == doctest::Approx(1.4));
  const std::vector<double> one{7.0};
  CHECK(quantile_type7(one, 0.3) == 7.0);
}

TEST_CASE("logistic") {
  CHECK(logistic(0.0) == 0.5);
  CHECK(logistic(800.0) == 1.0);
  CHECK(logistic(-800.0) >= 0.0);
  CHECK(logistic(2.0) + logistic(-2.0) == doctest::Approx(1.0));
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; }, 4);
  for (auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("shuffled_indices is a seeded permutation") {
  auto a = shuffled_indices(50, 3);
  auto b = shuffled_indices(50, 3);
  CHECK(a == b);
  CHECK(a != shuffled_indices(50, 4));
  std::sort(a.begin(), a.end());
  std::vector<std::size_t> id(50);
  std::iota(id.begin(), id.end(), std::size_t{0});
  CHECK(a == id);
}
