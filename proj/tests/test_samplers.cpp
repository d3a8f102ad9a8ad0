#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "qrs/oracle.hpp"
#include "qrs/samplers.hpp"
#include "qrs/testbeds.hpp"

using qrs::LogReal;

TEST_SUITE_BEGIN("samplers");

namespace {

const qrs::CategoricalSpace& two_point() {
  static const qrs::CategoricalSpace space = qrs::make_two_point_space();
  return space;
}

std::vector<double> empirical_freq(const std::vector<std::int32_t>& points, std::size_t n_states) {
  std::vector<double> freq(n_states, 0.0);
  for (auto x : points) freq[static_cast<std::size_t>(x)] += 1.0 / static_cast<double>(points.size());
  return freq;
}

}  // namespace

TEST_CASE("acceptance probability") {
  CHECK(qrs::qrs_acceptance_prob(LogReal::from_linear(1.2), LogReal::one()) == 1.0);
  CHECK(qrs::qrs_acceptance_prob(LogReal::from_linear(0.4), LogReal::one()) ==
        doctest::Approx(0.4).epsilon(1e-14));
  CHECK(qrs::qrs_acceptance_prob(LogReal::zero(), LogReal::one()) == 0.0);
  CHECK(qrs::qrs_acceptance_prob(LogReal::infinity(), LogReal::one()) == 1.0);
  CHECK_THROWS_WITH_AS(qrs::qrs_acceptance_prob(LogReal::one(), LogReal::zero()),
                       "beta must be positive", std::invalid_argument);
  CHECK_THROWS_AS(qrs::qrs_acceptance_prob(LogReal::one(), LogReal::infinity()),
                  std::invalid_argument);
}

TEST_CASE("qrs config validates its beta") {
  CHECK(qrs::QrsConfig(1.5).beta.linear() == doctest::Approx(1.5));
  CHECK_THROWS_WITH_AS(qrs::QrsConfig(0.0), "beta must be positive", std::invalid_argument);
  CHECK_THROWS_AS(qrs::QrsConfig(LogReal::infinity()), std::invalid_argument);

  const auto& s = two_point();
  qrs::RngStream a(19, 0), b(19, 0);
  const auto via_config = qrs::qrs_collect(s.target(), s.proposal(), qrs::QrsConfig(1.0), 100, a);
  const auto via_beta = qrs::qrs_collect(s.target(), s.proposal(), LogReal::one(), 100, b);
  CHECK(via_config.draws == via_beta.draws);
}

TEST_CASE("qrs samples p_beta at beta = 1") {
  const auto& s = two_point();
  qrs::RngStream rng(0, 0);
  const auto run = qrs::qrs_collect(s.target(), s.proposal(), LogReal::one(), 200000, rng);
  const auto freq = empirical_freq(run.points(), 2);
  const double se = std::sqrt((2.0 / 7.0) * (5.0 / 7.0) / 200000.0);
  CHECK(std::abs(freq[0] - 2.0 / 7.0) < 4 * se);
  CHECK(std::abs(freq[1] - 5.0 / 7.0) < 4 * se);

  // Empirical AR within the binomial band around Z_beta / beta = 0.7.
  const double ar_se = std::sqrt(0.7 * 0.3 / static_cast<double>(run.draws));
  CHECK(std::abs(run.empirical_ar() - 0.7) < 4 * ar_se);

  for (const auto& sample : run.samples)
    CHECK(sample.uniform <= qrs::qrs_acceptance_prob(sample.log_ratio, LogReal::one()));
}

TEST_CASE("beta above the sup ratio makes QRS exact") {
  const auto& s = two_point();
  qrs::RngStream rng(1, 0);
  const auto run =
      qrs::qrs_collect(s.target(), s.proposal(), LogReal::from_linear(1.2), 200000, rng);
  const auto freq = empirical_freq(run.points(), 2);
  const double se = std::sqrt(0.25 * 0.75 / 200000.0);
  CHECK(std::abs(freq[0] - 0.25) < 4 * se);
}

TEST_CASE("proposal equal to the target accepts at rate Z") {
  // P = 0.3 q: every ratio equals Z = 0.3.
  qrs::CategoricalSpace s(1, 2, {0.15, 0.15}, {0.5, 0.5});
  qrs::RngStream rng(2, 0);
  const auto run = qrs::qrs_collect(s.target(), s.proposal(), LogReal::one(), 30000, rng);
  const double ar_se = std::sqrt(0.3 * 0.7 / static_cast<double>(run.draws));
  CHECK(std::abs(run.empirical_ar() - 0.3) < 4 * ar_se);
}

TEST_CASE("accepted samples are i.i.d. (lag-1 autocorrelation)") {
  const auto& s = two_point();
  qrs::RngStream rng(3, 0);
  const auto run = qrs::qrs_collect(s.target(), s.proposal(), LogReal::one(), 100000, rng);
  const auto pts = run.points();
  double mean = 0.0;
  for (auto x : pts) mean += static_cast<double>(x);
  mean /= static_cast<double>(pts.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = static_cast<double>(pts[i]) - mean;
    den += d * d;
    if (i + 1 < pts.size()) num += d * (static_cast<double>(pts[i + 1]) - mean);
  }
  CHECK(std::abs(num / den) < 4.0 / std::sqrt(static_cast<double>(pts.size())));
}

TEST_CASE("draw budget carries partial results") {
  const auto& s = two_point();
  qrs::RngStream rng(4, 0);
  try {
    qrs::qrs_collect(s.target(), s.proposal(), LogReal::one(), 1000000, rng,
                     std::uint64_t{500});
    FAIL("expected budget exhaustion");
  } catch (const qrs::BudgetExhaustedError<std::int32_t>& e) {
    CHECK(std::string(e.what()) == "acceptance budget exhausted");
    CHECK(e.partial().draws == 500);
    CHECK(e.partial().samples.size() > 250);  // AR = 0.7
    CHECK(e.partial().samples.size() < 450);
  }
}

TEST_CASE("certified rejection sampling") {
  const auto& s = two_point();
  const auto sup = qrs::exact_sup_log_ratio(s.target(), s.proposal(), s.space());
  CHECK(sup.linear() == doctest::Approx(1.2).epsilon(1e-14));

  qrs::RngStream rng(5, 0);
  const auto run =
      qrs::rs_certified(s.target(), s.proposal(), LogReal::from_linear(1.2), 100000, rng, sup);
  CHECK(run.certified);
  const auto freq = empirical_freq(run.points(), 2);
  CHECK(std::abs(freq[1] - 0.75) < 4 * std::sqrt(0.25 * 0.75 / 100000.0));

  CHECK_THROWS_WITH_AS(
      qrs::rs_certified(s.target(), s.proposal(), LogReal::one(), 10, rng, sup),
      "beta is not a global bound", std::runtime_error);

  const auto pair = qrs::make_poisson_pair(11, 10);
  CHECK_THROWS_WITH_AS(qrs::rs_certified(pair.target, pair.proposal, LogReal::from_linear(100.0),
                                         10, rng, pair.sup_log_ratio()),
                       "beta is not a global bound", std::runtime_error);
}

TEST_CASE("incremental pruning settles at the quantile beta") {
  const auto& s = two_point();
  qrs::RngStream rng(6, 0);
  const auto run = qrs::qrs_incremental(s.target(), s.proposal(), 100000, 0.7, rng);
  // Exact AR(beta) = 0.7 at beta = 1 on this space.
  CHECK(run.beta_final.linear() == doctest::Approx(1.0).epsilon(0.1));
  const double exact =
      qrs::exact_ar(s.target(), s.proposal(), run.beta_final, s.space());
  CHECK(exact == doctest::Approx(0.7).epsilon(0.08));
  CHECK(run.realized_ar == doctest::Approx(0.7).epsilon(0.08));
  CHECK(run.kept.size() == 100000);
}

TEST_CASE("incremental pruning with no pruning pressure") {
  // ar_min = 1: no observed alpha can certify the rate constraint, so the
  // cap never resolves, beta stays at its smallest admissible value (zero),
  // and the output is the raw proposal stream.
  const auto& s = two_point();
  for (std::uint64_t stream = 0; stream < 5; ++stream) {
    qrs::RngStream rng(7, stream);
    const auto run = qrs::qrs_incremental(s.target(), s.proposal(), 5000, 1.0, rng);
    CHECK(run.beta_final.is_zero());
    CHECK(run.realized_ar == 1.0);
    qrs::RngStream replay(7, stream);
    for (const auto& [point, alpha] : run.kept) {
      CHECK(point == s.proposal().draw(replay));
      replay.uniform_open01();  // the accept-test variate
    }
  }
}

TEST_CASE("incremental pruning matches a replayed single QRS pass") {
  const auto& s = two_point();
  const auto pair = qrs::make_poisson_pair(11, 10);

  auto replay_check = [](const auto& target, const auto& proposal, std::uint64_t seed,
                         std::uint64_t stream, double ar_min, std::size_t n) {
    qrs::RngStream rng(seed, stream);
    const auto run = qrs::qrs_incremental(target, proposal, n, ar_min, rng);

    // Replay the identical draw/uniform stream through a single fixed-beta
    // acceptance pass. The final beta is typically an observed alpha, so the
    // boundary sample has u == r exactly and ties must resolve to rejection
    // like the pruning rule does: accept iff alpha > beta.
    qrs::RngStream replay(seed, stream);
    std::vector<std::pair<decltype(proposal.draw(replay)), double>> accepted;
    for (std::uint64_t i = 0; i < run.draws; ++i) {
      const auto x = proposal.draw(replay);
      const auto rec = qrs::make_draw_record(target, proposal, x);
      const double u = replay.uniform_open01();
      const qrs::LogReal alpha = rec.log_ratio / qrs::LogReal::from_linear(u);
      if (alpha > run.beta_final) accepted.push_back({x, u});
    }
    REQUIRE(accepted.size() == run.kept.size());
    for (std::size_t i = 0; i < accepted.size(); ++i)
      CHECK(accepted[i].first == run.kept[i].first);
  };

  replay_check(s.target(), s.proposal(), 8, 0, 0.5, 2000);
  replay_check(s.target(), s.proposal(), 8, 1, 0.25, 2000);
  replay_check(pair.target, pair.proposal, 8, 2, 0.25, 2000);
  replay_check(pair.target, pair.proposal, 8, 3, 0.1, 1000);
}

TEST_CASE("incremental pruning on the poisson pair hits the requested rate") {
  // The realized rate sits at or slightly above the request: beta can only
  // climb through observed ratios, and everything drawn before it reaches
  // its final level is kept.
  const auto pair = qrs::make_poisson_pair(11, 10);
  const auto space = pair.oracle_space();
  const auto p = qrs::enumerate_target(pair.target, space);
  for (std::uint64_t stream = 0; stream < 3; ++stream) {
    qrs::RngStream rng(9, stream);
    const auto run = qrs::qrs_incremental(pair.target, pair.proposal, 10000, 0.25, rng);
    CHECK(run.realized_ar >= 0.225);
    CHECK(run.realized_ar <= 0.31);
    const auto pb = qrs::exact_p_beta(pair.target, pair.proposal, run.beta_final, space);
    CHECK(qrs::exact_divergences(p, pb).first < 1e-3);
  }
}

TEST_CASE("incremental pruning validates ar_min") {
  const auto& s = two_point();
  qrs::RngStream rng(10, 0);
  CHECK_THROWS_AS(qrs::qrs_incremental(s.target(), s.proposal(), 10, 0.0, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(qrs::qrs_incremental(s.target(), s.proposal(), 10, 1.5, rng),
                  std::invalid_argument);
}

TEST_CASE("imh move probabilities") {
  CHECK(qrs::imh_move_prob(LogReal::from_linear(2.0), LogReal::from_linear(1.0)) ==
        doctest::Approx(0.5).epsilon(1e-14));
  CHECK(qrs::imh_move_prob(LogReal::from_linear(1.0), LogReal::from_linear(2.0)) == 1.0);
  CHECK(qrs::imh_move_prob(LogReal::zero(), LogReal::from_linear(2.0)) == 1.0);
  CHECK(qrs::imh_move_prob(LogReal::from_linear(2.0), LogReal::zero()) == 0.0);
}

TEST_CASE("imh with q = p accepts every move and is i.i.d. from p") {
  qrs::CategoricalSpace s(1, 3, {0.2, 0.3, 0.5}, {0.2, 0.3, 0.5});
  qrs::RngStream rng(11, 0);
  const auto chain = qrs::imh_chain(s.target(), s.proposal(), 50000, 0, 1, rng);
  CHECK(chain.move_rate() == 1.0);
  std::vector<std::int32_t> pts;
  for (const auto& c : chain.samples) pts.push_back(c.point);
  const auto freq = empirical_freq(pts, 3);
  CHECK(std::abs(freq[2] - 0.5) < 4 * std::sqrt(0.25 / 50000.0));
}

TEST_CASE("imh long chain converges to p on the two-point space") {
  const auto& s = two_point();
  qrs::RngStream rng(12, 0);
  const auto chain = qrs::imh_chain(s.target(), s.proposal(), 100000, 1000, 1, rng);
  std::vector<std::int32_t> pts;
  for (const auto& c : chain.samples) pts.push_back(c.point);
  const auto freq = empirical_freq(pts, 2);
  // Correlated draws: use a generous band rather than the i.i.d. se.
  CHECK(std::abs(freq[1] - 0.75) < 0.02);
}

TEST_CASE("chain bookkeeping: repeated points are marked as non-moves") {
  const auto& s = two_point();
  qrs::RngStream rng(13, 0);
  const auto chain = qrs::imh_chain(s.target(), s.proposal(), 1000, 0, 1, rng);
  for (std::size_t i = 1; i < chain.samples.size(); ++i)
    if (!chain.samples[i].was_move)
      CHECK(chain.samples[i].point == chain.samples[i - 1].point);
  CHECK(chain.proposal_draws == 1001);  // seed + one per step at thinning 1
  CHECK(chain.acceptance_rate() == doctest::Approx(1000.0 / 1001.0));
}

TEST_CASE("imh thinning consumes proportionally more draws") {
  const auto& s = two_point();
  qrs::RngStream rng(14, 0);
  const auto chain = qrs::imh_chain(s.target(), s.proposal(), 100, 1000, 10, rng);
  CHECK(chain.proposal_draws == 1 + 1000 + 10 * 100);
  CHECK(chain.acceptance_rate() == doctest::Approx(100.0 / 2001.0));
}

TEST_CASE("imh-reset with one step per sample reproduces raw q draws") {
  const auto& s = two_point();
  qrs::RngStream rng(15, 0);
  const auto chain = qrs::imh_reset(s.target(), s.proposal(), 1, 5000, rng);
  qrs::RngStream replay(15, 0);
  for (const auto& c : chain.samples) CHECK(c.point == s.proposal().draw(replay));
}

TEST_CASE("imh-reset converges to p as steps grow") {
  const auto& s = two_point();
  const auto p = qrs::table_probs(qrs::enumerate_target(s.target(), s.space()));
  qrs::RngStream rng(16, 0);
  const auto far = qrs::imh_reset(s.target(), s.proposal(), 64, 20000, rng);
  std::vector<std::int32_t> pts;
  for (const auto& c : far.samples) pts.push_back(c.point);
  const auto freq = empirical_freq(pts, 2);
  CHECK(std::abs(freq[1] - p[1]) < 4 * std::sqrt(0.25 / 20000.0));

  // q = p: i.i.d. from p at any reset period.
  qrs::CategoricalSpace sp(1, 2, {0.25, 0.25}, {0.5, 0.5});
  qrs::RngStream rng2(16, 1);
  const auto direct = qrs::imh_reset(sp.target(), sp.proposal(), 3, 20000, rng2);
  std::vector<std::int32_t> pts2;
  for (const auto& c : direct.samples) pts2.push_back(c.point);
  CHECK(std::abs(empirical_freq(pts2, 2)[1] - 0.5) < 4 * std::sqrt(0.25 / 20000.0));
}

TEST_CASE("local MH with a symmetric kernel reduces to the Metropolis rule") {
  const LogReal sym = LogReal::from_linear(0.125);
  CHECK(qrs::mh_move_prob(LogReal::from_linear(0.4), LogReal::from_linear(0.2), sym, sym) ==
        doctest::Approx(0.5).epsilon(1e-14));
  CHECK(qrs::mh_move_prob(LogReal::from_linear(0.2), LogReal::from_linear(0.4), sym, sym) == 1.0);
}

TEST_CASE("local MH with a global uniform kernel has stationary law p") {
  qrs::CategoricalSpace s(1, 3, {0.1, 0.3, 0.6}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  qrs::UniformGlobalKernel kernel(3);
  qrs::RngStream rng(17, 0);
  const auto chain = qrs::mh_local_chain(s.target(), kernel, 0, 100000, 1000, 1, rng);
  std::vector<std::int32_t> pts;
  for (const auto& c : chain.samples) pts.push_back(c.point);
  const auto freq = empirical_freq(pts, 3);
  CHECK(std::abs(freq[2] - 0.6) < 0.02);
}

TEST_CASE("a dirac kernel never moves") {
  const auto& s = two_point();
  qrs::DiracKernel<std::int32_t> kernel;
  qrs::RngStream rng(18, 0);
  const auto chain = qrs::mh_local_chain(s.target(), kernel, 1, 100, 0, 1, rng);
  for (const auto& c : chain.samples) CHECK(c.point == 1);
}

TEST_SUITE_END();
