#include <doctest.h>

#include <cmath>
#include <vector>

#include "qrs/oracle.hpp"
#include "qrs/testbeds.hpp"

using qrs::LogReal;

TEST_SUITE_BEGIN("oracle");

namespace {

const qrs::CategoricalSpace& two_point() {
  static const qrs::CategoricalSpace space = qrs::make_two_point_space();
  return space;
}

// Hand-derived constants for the two-point fixture q=(0.5,0.5), P=(0.2,0.6):
// Z = 0.8, p = (1/4, 3/4); at beta=1, P_beta = (0.2, 0.5), Z_beta = 0.7,
// p_beta = (2/7, 5/7); TVD(p, p_beta) = 3/4 - 5/7 = 1/28; and
// KL(p, p_beta) = 0.25 ln(7/8) + 0.75 ln(21/20).
constexpr double kTwoPointTvd = 1.0 / 28.0;
constexpr double kTwoPointKl = 0.0032097749709433801;

}  // namespace

TEST_CASE("two-point enumeration") {
  const auto& s = two_point();
  const auto table = qrs::enumerate_target(s.target(), s.space());
  REQUIRE(table.entries.size() == 2);
  CHECK(table.entries[0].prob == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(table.entries[1].prob == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(table.truncation_mass == 0.0);
  CHECK(table.log_z == doctest::Approx(std::log(0.8)).epsilon(1e-14));
}

TEST_CASE("zero target is an error") {
  qrs::CategoricalSpace s(1, 2, {0.0, 1.0}, {0.5, 0.5});
  qrs::EnumeratedSpace<std::int32_t> first_only{{0}, 0.0};
  CHECK_THROWS_WITH_AS(qrs::enumerate_target(s.target(), first_only),
                       "zero partition function", std::runtime_error);
}

TEST_CASE("exact p_beta at beta = 1") {
  const auto& s = two_point();
  const auto t = qrs::exact_p_beta(s.target(), s.proposal(), LogReal::one(), s.space());
  CHECK(t.entries[0].prob == doctest::Approx(2.0 / 7.0).epsilon(1e-14));
  CHECK(t.entries[1].prob == doctest::Approx(5.0 / 7.0).epsilon(1e-14));
  CHECK(t.log_z == doctest::Approx(std::log(0.7)).epsilon(1e-14));
}

TEST_CASE("beta above the max ratio reproduces p") {
  const auto& s = two_point();
  const auto p = qrs::enumerate_target(s.target(), s.space());
  const auto t =
      qrs::exact_p_beta(s.target(), s.proposal(), LogReal::from_linear(1.2), s.space());
  const auto [tvd, kl] = qrs::exact_divergences(p, t);
  CHECK(tvd < 1e-14);
  CHECK(kl < 1e-14);
}

TEST_CASE("proposal hole: p_beta collapses onto the support") {
  qrs::CategoricalSpace s(1, 2, {0.2, 0.6}, {1.0, 0.0});
  const auto t =
      qrs::exact_p_beta(s.target(), s.proposal(), LogReal::from_linear(1 << 20), s.space());
  CHECK(t.entries[0].prob == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(t.entries[1].prob == 0.0);
  const auto p = qrs::enumerate_target(s.target(), s.space());
  const auto [tvd, kl] = qrs::exact_divergences(p, t);
  CHECK(tvd == doctest::Approx(0.75).epsilon(1e-12));  // 1 - p(Supp(q))
  CHECK(std::isinf(kl));
  CHECK(qrs::exact_support_mass(s.target(), s.proposal(), s.space()) ==
        doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("exact divergences on the running example") {
  const auto& s = two_point();
  const auto p = qrs::enumerate_target(s.target(), s.space());
  const auto pb = qrs::exact_p_beta(s.target(), s.proposal(), LogReal::one(), s.space());
  const auto [tvd, kl] = qrs::exact_divergences(p, pb);
  CHECK(tvd == doctest::Approx(kTwoPointTvd).epsilon(1e-12));
  CHECK(kl == doctest::Approx(kTwoPointKl).epsilon(1e-12));

  SUBCASE("identical tables") {
    const auto [t0, k0] = qrs::exact_divergences(p, p);
    CHECK(t0 == 0.0);
    CHECK(k0 == 0.0);
  }
  SUBCASE("disjoint supports") {
    qrs::ExactTable<std::int32_t> a, b;
    a.entries = {{0, 1.0}};
    b.entries = {{1, 1.0}};
    const auto [t1, k1] = qrs::exact_divergences(a, b);
    CHECK(t1 == doctest::Approx(1.0));
    CHECK(std::isinf(k1));
  }
}

TEST_CASE("one-sided TVD identity") {
  const auto& s = two_point();
  const auto p = qrs::enumerate_target(s.target(), s.space());
  const auto pb = qrs::exact_p_beta(s.target(), s.proposal(), LogReal::one(), s.space());
  CHECK(qrs::tvd_one_sided_identity(p, pb) == doctest::Approx(kTwoPointTvd).epsilon(1e-12));
  CHECK(qrs::tvd_one_sided_identity(p, p) == 0.0);

  qrs::ExactTable<std::int32_t> a, b;
  a.entries = {{0, 1.0}, {1, 0.0}};
  b.entries = {{0, 0.0}, {1, 1.0}};
  CHECK(qrs::tvd_one_sided_identity(a, b) == doctest::Approx(1.0));
}

TEST_CASE("one-sided identity equals the symmetric definition on random pairs") {
  qrs::RngStream rng(11, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.uniform_below(30);
    qrs::ExactTable<std::int32_t> a, b;
    double za = 0.0, zb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double wa = rng.uniform_open01();
      const double wb = rng.uniform_open01();
      a.entries.push_back({static_cast<std::int32_t>(i), wa});
      b.entries.push_back({static_cast<std::int32_t>(i), wb});
      za += wa;
      zb += wb;
    }
    for (auto& e : a.entries) e.prob /= za;
    for (auto& e : b.entries) e.prob /= zb;
    const auto [tvd, kl] = qrs::exact_divergences(a, b);
    CHECK(std::abs(qrs::tvd_one_sided_identity(a, b) - tvd) < 1e-12);
  }
}

TEST_CASE("exact acceptance rates") {
  const auto& s = two_point();
  CHECK(qrs::exact_ar(s.target(), s.proposal(), LogReal::one(), s.space()) ==
        doctest::Approx(0.7).epsilon(1e-14));
  CHECK(qrs::exact_ar(s.target(), s.proposal(), LogReal::from_linear(2.0), s.space()) ==
        doctest::Approx(0.4).epsilon(1e-14));
  // Below the minimum ratio P_beta = beta q everywhere, so AR = 1.
  CHECK(qrs::exact_ar(s.target(), s.proposal(), LogReal::from_linear(0.1), s.space()) ==
        doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("tvd upper bound on random instances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto law = seed % 2 ? qrs::WeightLaw::heavy_tail : qrs::WeightLaw::uniform_dirichlet;
    const auto space = qrs::make_random_categorical(2, 7, seed, law);
    const auto p = qrs::enumerate_target(space.target(), space.space());
    for (int k = -6; k <= 6; ++k) {
      const LogReal beta = LogReal::from_linear(std::pow(2.0, k));
      const auto pb = qrs::exact_p_beta(space.target(), space.proposal(), beta, space.space());
      const auto [tvd, kl] = qrs::exact_divergences(p, pb);
      const double bound =
          1.0 - qrs::exact_region_mass(space.target(), space.proposal(), beta, space.space());
      CHECK(tvd <= bound + 1e-12);
    }
  }
}

TEST_CASE("large-beta limit with and without support holes") {
  const LogReal huge = LogReal::from_linear(std::pow(2.0, 20));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto full = qrs::make_random_categorical(2, 6, seed, qrs::WeightLaw::uniform_dirichlet);
    const auto p = qrs::enumerate_target(full.target(), full.space());
    const auto pb = qrs::exact_p_beta(full.target(), full.proposal(), huge, full.space());
    CHECK(qrs::exact_divergences(p, pb).first < 1e-10);

    const auto holed = full.with_proposal_holes(0.3, seed);
    const auto hp = qrs::enumerate_target(holed.target(), holed.space());
    const auto hpb = qrs::exact_p_beta(holed.target(), holed.proposal(), huge, holed.space());
    const double floor_mass =
        1.0 - qrs::exact_support_mass(holed.target(), holed.proposal(), holed.space());
    CHECK(std::abs(qrs::exact_divergences(hp, hpb).first - floor_mass) < 1e-10);
  }
}

TEST_CASE("poisson truncated enumeration") {
  const auto pair = qrs::make_poisson_pair(11, 10);
  const auto space = pair.oracle_space(1e-15);
  CHECK(space.points.size() >= 45);
  CHECK(space.points.size() <= 90);

  const auto table = qrs::enumerate_target(pair.target, space);
  double sum = 0.0, mean = 0.0;
  for (const auto& e : table.entries) {
    sum += e.prob;
    mean += e.prob * static_cast<double>(e.point);
  }
  CHECK(sum == doctest::Approx(1.0 - table.truncation_mass).epsilon(1e-12));
  CHECK(std::abs(mean - 11.0) < 1e-9);
}

TEST_CASE("poisson region mass at beta = 1") {
  // Closed form: ratio(x) = e^{-1} 1.1^x <= 1 iff x <= 1/ln(1.1) ~ 10.49,
  // so A_1 = {0..10} and the bound is the Poisson(11) upper tail past 10.
  const auto pair = qrs::make_poisson_pair(11, 10);
  const auto space = pair.oracle_space();
  double tail = 1.0;
  double term = std::exp(-11.0);
  for (int k = 0; k <= 10; ++k) {
    tail -= term;
    term *= 11.0 / static_cast<double>(k + 1);
  }
  const double bound =
      1.0 - qrs::exact_region_mass(pair.target, pair.proposal, LogReal::one(), space);
  CHECK(bound == doctest::Approx(tail).epsilon(1e-10));
  CHECK(bound == doctest::Approx(0.5401112973).epsilon(1e-6));
}

TEST_CASE("imh kernel fixes p on the two-point space") {
  const auto& s = two_point();
  const auto kernel = qrs::imh_exact_kernel(s.target(), s.proposal(), s.space());
  CHECK(kernel.max_row_sum_deviation() < 1e-15);
  const auto p = qrs::table_probs(qrs::enumerate_target(s.target(), s.space()));
  CHECK(kernel.stationarity_deviation(p) < 1e-12);
  CHECK(kernel.detailed_balance_deviation(p) < 1e-12);
}

TEST_CASE("imh kernel with q = p is i.i.d. sampling") {
  qrs::CategoricalSpace s(1, 3, {0.2, 0.3, 0.5}, {0.2, 0.3, 0.5});
  const auto kernel = qrs::imh_exact_kernel(s.target(), s.proposal(), s.space());
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t y = 0; y < 3; ++y)
      CHECK(kernel.at(x, y) ==
            doctest::Approx(qrs::enumerate_target(s.proposal(), s.space()).entries[y].prob)
                .epsilon(1e-12));
}

TEST_CASE("kernel power iteration contracts toward p") {
  const auto& s = two_point();
  const auto kernel = qrs::imh_exact_kernel(s.target(), s.proposal(), s.space());
  const auto p = qrs::table_probs(qrs::enumerate_target(s.target(), s.space()));
  auto dist = qrs::table_probs(qrs::enumerate_target(s.proposal(), s.space()));
  double prev = qrs::tvd_between(dist, p);
  for (int n = 1; n <= 50; ++n) {
    dist = kernel.step(dist);
    const double d = qrs::tvd_between(dist, p);
    CHECK(d <= prev + 1e-15);
    prev = d;
  }
  CHECK(prev < 1e-10);
}

TEST_CASE("local-MH kernels") {
  qrs::CategoricalSpace s(2, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}, {1, 1, 1, 1, 1, 1, 1, 1, 1});
  const auto p = qrs::table_probs(qrs::enumerate_target(s.target(), s.space()));

  SUBCASE("single-site kernel satisfies detailed balance") {
    qrs::SingleSiteKernel kernel(2, 3);
    const auto k = qrs::mh_local_exact_kernel(s.target(), kernel, s.space());
    CHECK(k.max_row_sum_deviation() < 1e-14);
    CHECK(k.detailed_balance_deviation(p) < 1e-12);
    CHECK(k.stationarity_deviation(p) < 1e-12);
  }
  SUBCASE("dirac kernel is the identity") {
    qrs::DiracKernel<std::int32_t> kernel;
    const auto k = qrs::mh_local_exact_kernel(s.target(), kernel, s.space());
    for (std::size_t i = 0; i < k.n; ++i)
      for (std::size_t j = 0; j < k.n; ++j)
        CHECK(k.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
  }
  SUBCASE("global uniform kernel matches IMH with a uniform proposal") {
    qrs::UniformGlobalKernel kernel(9);
    const auto k1 = qrs::mh_local_exact_kernel(s.target(), kernel, s.space());
    const auto k2 = qrs::imh_exact_kernel(s.target(), s.proposal(), s.space());
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t j = 0; j < 9; ++j)
        CHECK(k1.at(i, j) == doctest::Approx(k2.at(i, j)).epsilon(1e-12));
  }
}

namespace {

// Proposes only upward moves; the reverse conditional is zero.
struct OneWayKernel {
  using point_type = std::int32_t;
  std::int32_t n = 0;
  std::int32_t propose(std::int32_t x, qrs::RngStream&) const { return (x + 1) % n; }
  LogReal log_prob(std::int32_t from, std::int32_t to) const {
    return to == (from + 1) % n ? LogReal::one() : LogReal::zero();
  }
};

}  // namespace

TEST_CASE("asymmetric-support kernels are rejected") {
  qrs::CategoricalSpace s(1, 3, {1, 2, 3}, {1, 1, 1});
  OneWayKernel kernel{3};
  CHECK_THROWS_WITH_AS(qrs::mh_local_exact_kernel(s.target(), kernel, s.space()),
                       "kernel violates MH support condition", std::runtime_error);
}

TEST_CASE("kernel analysis is capped at 1000 points") {
  auto big = qrs::make_random_categorical(2, 40, 0, qrs::WeightLaw::uniform_dirichlet);
  CHECK_THROWS_AS(qrs::imh_exact_kernel(big.target(), big.proposal(), big.space()),
                  std::invalid_argument);
}

TEST_SUITE_END();
