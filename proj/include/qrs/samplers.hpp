#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qrs/log_real.hpp"
#include "qrs/model.hpp"
#include "qrs/rng.hpp"

namespace qrs {

namespace detail {

inline void require_valid_beta(LogReal beta) {
  if (beta.is_zero() || beta.is_infinite())
    throw std::invalid_argument("beta must be positive");
}

}  // namespace detail

/// The one tuning knob of quasi rejection sampling. Construction enforces
/// 0 < beta < inf; an infinite beta would never accept anything.
struct QrsConfig {
  LogReal beta;
  explicit QrsConfig(LogReal b) : beta(b) { detail::require_valid_beta(b); }
  explicit QrsConfig(double b) : QrsConfig(LogReal::from_linear(b)) {}
};

/// Acceptance probability of quasi rejection sampling:
/// r_x = min(1, P(x) / (beta q(x))), and 1 for the support-mismatch marker
/// (infinite ratio). A zero score is never accepted.
inline double qrs_acceptance_prob(LogReal log_ratio, LogReal beta) {
  detail::require_valid_beta(beta);
  if (log_ratio.is_infinite()) return 1.0;
  const LogReal r = log_ratio / beta;
  return r >= LogReal::one() ? 1.0 : r.linear();
}

template <typename X>
double qrs_acceptance_prob(const DrawRecord<X>& record, LogReal beta) {
  return qrs_acceptance_prob(record.log_ratio, beta);
}

/// One accepted QRS output. uniform is the accept-test variate, kept so the
/// accept decision can be replayed exactly; draw_index is the 1-based index
/// of the proposal draw that produced it.
template <typename X>
struct AcceptedSample {
  X point{};
  LogReal log_ratio;
  double uniform = 0.0;
  std::uint64_t draw_index = 0;
};

template <typename X>
struct QrsResult {
  std::vector<AcceptedSample<X>> samples;
  std::uint64_t draws = 0;
  bool certified = false;  // true when produced by certified rejection sampling

  double empirical_ar() const {
    return draws == 0 ? 0.0
                      : static_cast<double>(samples.size()) / static_cast<double>(draws);
  }
  std::vector<X> points() const {
    std::vector<X> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.point);
    return out;
  }
};

/// Thrown when a draw budget runs out before the requested sample count;
/// carries everything accepted so far.
template <typename X>
class BudgetExhaustedError : public std::runtime_error {
 public:
  explicit BudgetExhaustedError(QrsResult<X> partial)
      : std::runtime_error("acceptance budget exhausted"), partial_(std::move(partial)) {}
  const QrsResult<X>& partial() const { return partial_; }

 private:
  QrsResult<X> partial_;
};

/// Quasi rejection sampling: draw x ~ q, accept with probability
/// min(1, P(x)/(beta q(x))). Outputs are i.i.d. from p_beta. The empirical
/// acceptance rate converges to Z_beta / beta.
template <typename P, typename Q>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q>
QrsResult<typename Q::point_type> qrs_collect(
    const P& target, const Q& proposal, LogReal beta, std::size_t n_samples,
    RngStream& rng, std::optional<std::uint64_t> max_draws = std::nullopt) {
  detail::require_valid_beta(beta);
  if (n_samples < 1) throw std::invalid_argument("need at least one sample");
  QrsResult<typename Q::point_type> result;
  result.samples.reserve(n_samples);
  while (result.samples.size() < n_samples) {
    if (max_draws && result.draws >= *max_draws)
      throw BudgetExhaustedError<typename Q::point_type>(std::move(result));
    ++result.draws;
    const auto x = proposal.draw(rng);
    const auto rec = make_draw_record(target, proposal, x);
    const double r = qrs_acceptance_prob(rec.log_ratio, beta);
    const double u = rng.uniform_open01();
    if (u <= r)
      result.samples.push_back({x, rec.log_ratio, u, result.draws});
  }
  return result;
}

template <typename P, typename Q>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q>
QrsResult<typename Q::point_type> qrs_collect(
    const P& target, const Q& proposal, QrsConfig config, std::size_t n_samples,
    RngStream& rng, std::optional<std::uint64_t> max_draws = std::nullopt) {
  return qrs_collect(target, proposal, config.beta, n_samples, rng, max_draws);
}

/// Standard rejection sampling: QRS run with a beta that is certified to be a
/// global bound on the importance ratio, so the output law is exactly p.
/// When the exact sup of the ratio is known (enumerable spaces), it must be
/// passed in and is verified; an infinite sup always fails.
template <typename P, typename Q>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q>
QrsResult<typename Q::point_type> rs_certified(
    const P& target, const Q& proposal, LogReal beta_bound, std::size_t n_samples,
    RngStream& rng, std::optional<LogReal> verified_sup_ratio = std::nullopt,
    std::optional<std::uint64_t> max_draws = std::nullopt) {
  detail::require_valid_beta(beta_bound);
  if (verified_sup_ratio && *verified_sup_ratio > beta_bound)
    throw std::runtime_error("beta is not a global bound");
  auto result = qrs_collect(target, proposal, beta_bound, n_samples, rng, max_draws);
  result.certified = true;
  return result;
}

// ---------------------------------------------------------------------------
// Incremental pruning
// ---------------------------------------------------------------------------

/// Running estimate of the beta cap for a minimum acceptance rate: the cap
/// is the largest beta with empirical P(alpha > beta) >= ar_min, i.e. the
/// (1 - ar_min)-quantile of all observed rejection coefficients. Note the
/// orientation: the acceptance rate is the mass of the UPPER alpha tail, so
/// a bottom-ar_min quantile would invert the constraint and cap beta near
/// the minimum coefficient. Because the pruning loop only ever ratchets beta
/// upward, it would latch onto any upward excursion of the raw quantile
/// estimate on a short history, so the cap served here is a lower confidence
/// bound: the order statistic at rank floor(m(1-ar) - 3 sqrt(m ar(1-ar))).
/// The margin vanishes relative to m, so the cap is consistent for the same
/// quantile. While no rank resolves (small m, or ar_min = 1 on any history)
/// the cap is zero: beta must not rise on an uncertified constraint.
/// Maintained incrementally with two multisets.
class RunningArQuantile {
 public:
  explicit RunningArQuantile(double ar_min) : ar_min_(ar_min) {
    if (!(ar_min > 0.0 && ar_min <= 1.0))
      throw std::invalid_argument("minimum acceptance rate must be in (0, 1]");
  }

  std::size_t size() const { return low_.size() + high_.size(); }

  void insert(double log_alpha) {
    if (!low_.empty() && log_alpha <= *low_.rbegin())
      low_.insert(log_alpha);
    else
      high_.insert(log_alpha);
    rebalance();
  }

  /// The cap in log domain; -inf while the rank is unresolved.
  double cap_log() const {
    if (low_.empty()) return -std::numeric_limits<double>::infinity();
    return *low_.rbegin();
  }

 private:
  void rebalance() {
    const auto m = static_cast<double>(size());
    const double raw =
        m * (1.0 - ar_min_) - 3.0 * std::sqrt(m * ar_min_ * (1.0 - ar_min_));
    const auto k = raw < 1.0 ? std::size_t{0} : static_cast<std::size_t>(raw);
    while (low_.size() > k) {
      const auto it = std::prev(low_.end());
      high_.insert(*it);
      low_.erase(it);
    }
    while (low_.size() < k && !high_.empty()) {
      const auto it = high_.begin();
      low_.insert(*it);
      high_.erase(it);
    }
  }

  double ar_min_;
  std::multiset<double> low_;   // the k smallest
  std::multiset<double> high_;  // the rest
};

template <typename X>
struct IncrementalResult {
  std::vector<std::pair<X, LogReal>> kept;  // (point, alpha), in draw order
  LogReal beta_final;
  double realized_ar = 0.0;
  std::uint64_t draws = 0;

  std::vector<X> points() const {
    std::vector<X> out;
    out.reserve(kept.size());
    for (const auto& [x, a] : kept) out.push_back(x);
    return out;
  }
};

/// QRS with incremental pruning: beta rises online toward the largest value
/// whose projected acceptance rate stays above ar_min, pruning previously
/// kept samples whenever it rises. Per draw, alpha = ratio / u; a sample is
/// kept while alpha exceeds the current beta strictly, so the final kept set
/// equals what a single QRS pass at the final beta would have accepted from
/// the same uniforms, with the tie u == r resolving to rejection. The tie is
/// not hypothetical: the final beta is usually itself an observed alpha (the
/// cap is an order statistic of the history), so exactly the boundary sample
/// sits at u == r. The cap follows the acceptance-rate percentile rule served as a
/// lower confidence bound (see RunningArQuantile), so short-history noise
/// cannot ratchet beta above the target quantile; with ar_min = 1 the cap
/// never resolves, beta stays at zero, and every positive-score draw is kept.
template <typename P, typename Q>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q>
IncrementalResult<typename Q::point_type> qrs_incremental(
    const P& target, const Q& proposal, std::size_t n_samples, double ar_min,
    RngStream& rng, std::optional<std::uint64_t> max_draws = std::nullopt) {
  if (!(ar_min > 0.0 && ar_min <= 1.0))
    throw std::invalid_argument("minimum acceptance rate must be in (0, 1]");
  if (n_samples < 1) throw std::invalid_argument("need at least one sample");

  RunningArQuantile history(ar_min);
  IncrementalResult<typename Q::point_type> result;
  result.beta_final = LogReal::zero();

  while (result.kept.size() < n_samples) {
    if (max_draws && result.draws >= *max_draws)
      throw std::runtime_error("acceptance budget exhausted");
    ++result.draws;
    const auto x = proposal.draw(rng);
    const auto rec = make_draw_record(target, proposal, x);
    const LogReal ratio = rec.log_ratio;

    const LogReal cap = LogReal::from_log(history.cap_log());
    const LogReal candidate = ratio < cap ? ratio : cap;
    if (candidate > result.beta_final) {
      result.beta_final = candidate;
      const LogReal b = result.beta_final;
      std::erase_if(result.kept, [b](const auto& e) { return !(e.second > b); });
    }

    const double u = rng.uniform_open01();
    const LogReal alpha = ratio / LogReal::from_linear(u);
    if (alpha > result.beta_final) result.kept.push_back({x, alpha});
    history.insert(alpha.log());
  }

  result.realized_ar =
      static_cast<double>(result.kept.size()) / static_cast<double>(result.draws);
  if (result.kept.size() > n_samples) result.kept.resize(n_samples);
  return result;
}

// ---------------------------------------------------------------------------
// Markov chain samplers
// ---------------------------------------------------------------------------

/// Independent-MH move probability: min(1, w(x')/w(x)) with w = P/q.
inline double imh_move_prob(LogReal w_current, LogReal w_proposed) {
  const LogReal r = w_proposed / w_current;
  return r >= LogReal::one() ? 1.0 : r.linear();
}

/// General MH move probability with a local kernel:
/// min(1, P(x') k(x|x') / (P(x) k(x'|x))).
inline double mh_move_prob(LogReal lp_current, LogReal lp_proposed, LogReal lk_forward,
                           LogReal lk_reverse) {
  const LogReal r = (lp_proposed * lk_reverse) / (lp_current * lk_forward);
  return r >= LogReal::one() ? 1.0 : r.linear();
}

template <typename X>
struct ChainSample {
  X point{};
  std::uint64_t step_index = 0;
  bool was_move = false;  // proposal accepted at this step
};

template <typename X>
struct ChainResult {
  std::vector<ChainSample<X>> samples;
  std::uint64_t proposal_draws = 0;  // q draws (IMH) or kernel proposals (local MH)
  std::uint64_t steps = 0;
  std::uint64_t moves = 0;

  /// The chain "acceptance rate": outputs per proposal draw. This is a cost
  /// proxy for comparing chains with QRS at matched budgets, not the
  /// Metropolis move probability, which move_rate() reports.
  double acceptance_rate() const {
    return proposal_draws == 0
               ? 0.0
               : static_cast<double>(samples.size()) / static_cast<double>(proposal_draws);
  }
  double move_rate() const {
    return steps == 0 ? 0.0 : static_cast<double>(moves) / static_cast<double>(steps);
  }
};

/// Independent Metropolis-Hastings: proposals are global q draws; the move
/// probability is the ratio of importance ratios. The chain outputs every
/// step; burn_in steps are discarded and every thinning-th output is kept
/// until n_outputs samples have been collected.
template <typename P, typename Q>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q>
ChainResult<typename Q::point_type> imh_chain(const P& target, const Q& proposal,
                                              std::size_t n_outputs, std::size_t burn_in,
                                              std::size_t thinning, RngStream& rng) {
  if (thinning < 1) throw std::invalid_argument("thinning must be at least 1");
  ChainResult<typename Q::point_type> result;
  result.samples.reserve(n_outputs);

  auto x = proposal.draw(rng);
  ++result.proposal_draws;
  LogReal w = make_draw_record(target, proposal, x).log_ratio;

  while (result.samples.size() < n_outputs) {
    const auto prop = proposal.draw(rng);
    ++result.proposal_draws;
    const LogReal w_prop = make_draw_record(target, proposal, prop).log_ratio;
    const double r = imh_move_prob(w, w_prop);
    const double u = rng.uniform_open01();
    const bool moved = u <= r;
    if (moved) {
      x = prop;
      w = w_prop;
      ++result.moves;
    }
    ++result.steps;
    if (result.steps > burn_in && (result.steps - burn_in) % thinning == 0)
      result.samples.push_back({x, result.steps, moved});
  }
  return result;
}

/// IMH with chain resets: each output comes from a fresh chain seeded with a
/// q draw and advanced for steps_per_sample - 1 transitions, so outputs are
/// i.i.d. With steps_per_sample = 1 the outputs are raw q draws.
template <typename P, typename Q>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q>
ChainResult<typename Q::point_type> imh_reset(const P& target, const Q& proposal,
                                              std::size_t steps_per_sample,
                                              std::size_t n_samples, RngStream& rng) {
  if (steps_per_sample < 1) throw std::invalid_argument("steps_per_sample must be at least 1");
  ChainResult<typename Q::point_type> result;
  result.samples.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    auto x = proposal.draw(rng);
    ++result.proposal_draws;
    LogReal w = make_draw_record(target, proposal, x).log_ratio;
    for (std::size_t t = 1; t < steps_per_sample; ++t) {
      const auto prop = proposal.draw(rng);
      ++result.proposal_draws;
      const LogReal w_prop = make_draw_record(target, proposal, prop).log_ratio;
      ++result.steps;
      if (rng.uniform_open01() <= imh_move_prob(w, w_prop)) {
        x = prop;
        w = w_prop;
        ++result.moves;
      }
    }
    result.samples.push_back({x, result.steps, false});
  }
  return result;
}

/// General Metropolis-Hastings with a user-supplied local kernel. Same
/// burn-in and thinning semantics as imh_chain. The kernel must satisfy the
/// MH support condition; on enumerable spaces check_kernel_support verifies
/// it (the CLI and oracle battery do this before running).
template <typename P, typename K>
  requires Scorable<P> && LocalKernel<K> && SamePoint<P, K>
ChainResult<typename P::point_type> mh_local_chain(const P& target, const K& kernel,
                                                   typename P::point_type init,
                                                   std::size_t n_outputs, std::size_t burn_in,
                                                   std::size_t thinning, RngStream& rng) {
  if (thinning < 1) throw std::invalid_argument("thinning must be at least 1");
  ChainResult<typename P::point_type> result;
  result.samples.reserve(n_outputs);

  auto x = init;
  LogReal lp = target.log_score(x);

  while (result.samples.size() < n_outputs) {
    const auto prop = kernel.propose(x, rng);
    ++result.proposal_draws;
    const LogReal lp_prop = target.log_score(prop);
    const LogReal fwd = kernel.log_prob(x, prop);
    const LogReal rev = kernel.log_prob(prop, x);
    const double r = mh_move_prob(lp, lp_prop, fwd, rev);
    const double u = rng.uniform_open01();
    const bool moved = u <= r;
    if (moved) {
      x = prop;
      lp = lp_prop;
      ++result.moves;
    }
    ++result.steps;
    if (result.steps > burn_in && (result.steps - burn_in) % thinning == 0)
      result.samples.push_back({x, result.steps, moved});
  }
  return result;
}

}  // namespace qrs
