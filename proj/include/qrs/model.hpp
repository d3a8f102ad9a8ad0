#pragma once

#include <concepts>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qrs/log_real.hpp"
#include "qrs/rng.hpp"

namespace qrs {

/// An unnormalized nonnegative score function over a discrete sample space.
/// Scoring must be deterministic: the same point always yields the same score.
template <typename D>
concept Scorable = requires(const D& d, const typename D::point_type& x) {
  typename D::point_type;
  { d.log_score(x) } -> std::convertible_to<LogReal>;
};

/// A global proposal: scorable, sampleable, and able to report its exact
/// normalized log-probability for any point.
template <typename Q>
concept GlobalProposal =
    Scorable<Q> && requires(const Q& q, const typename Q::point_type& x, RngStream& rng) {
      { q.draw(rng) } -> std::same_as<typename Q::point_type>;
      { q.log_prob(x) } -> std::convertible_to<LogReal>;
    };

/// A local proposal kernel q(x'|x) for Metropolis-Hastings: can propose a
/// move from any point and score the conditional probability of any move.
template <typename K>
concept LocalKernel = requires(const K& k, const typename K::point_type& x, RngStream& rng) {
  typename K::point_type;
  { k.propose(x, rng) } -> std::same_as<typename K::point_type>;
  { k.log_prob(x, x) } -> std::convertible_to<LogReal>;
};

template <typename P, typename Q>
concept SamePoint = std::same_as<typename P::point_type, typename Q::point_type>;

/// The importance ratio P(x)/q(x) with the support-mismatch convention:
/// a zero score always gives a zero ratio; a positive score over a zero
/// proposal density gives an infinite ratio (representable, not an error).
inline LogReal log_importance_ratio(LogReal log_p_unnorm, LogReal log_q) {
  if (log_p_unnorm.is_zero()) return LogReal::zero();
  if (log_q.is_zero()) return LogReal::infinity();
  return log_p_unnorm / log_q;
}

/// One proposal draw with its scores cached. log_ratio is computed once at
/// construction and reused by every sampler and estimator downstream.
template <typename X>
struct DrawRecord {
  X point{};
  LogReal log_q;         // normalized proposal log-probability
  LogReal log_p_unnorm;  // unnormalized target score
  LogReal log_ratio;     // log_p_unnorm - log_q, with support conventions
};

template <typename P, typename Q>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q>
DrawRecord<typename Q::point_type> make_draw_record(const P& target, const Q& proposal,
                                                    const typename Q::point_type& x) {
  DrawRecord<typename Q::point_type> rec;
  rec.point = x;
  rec.log_q = proposal.log_prob(x);
  rec.log_p_unnorm = target.log_score(x);
  rec.log_ratio = log_importance_ratio(rec.log_p_unnorm, rec.log_q);
  return rec;
}

/// A named test function f : X -> R whose expectation under p_beta is
/// estimated by self-normalized importance sampling.
template <typename X>
struct MomentSpec {
  std::string name;
  std::function<double(const X&)> f;
};

}  // namespace qrs
