#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "qrs/log_real.hpp"
#include "qrs/model.hpp"

namespace qrs {

/// A finite, sorted list of points standing in for the (possibly countable)
/// sample space. For truncated countable spaces, tail_mass_bound is an upper
/// bound on the normalized probability mass outside the list, for every
/// distribution the space was built for; it is 0 for genuinely finite spaces.
/// Factories for countable spaces must supply a monotone tail bound; a space
/// without one cannot be represented here.
template <typename X>
struct EnumeratedSpace {
  std::vector<X> points;  // strictly increasing
  double tail_mass_bound = 0.0;
};

/// Full enumeration of a distribution: normalized probabilities per point,
/// sorted by point order. Probabilities sum to 1 - truncation_mass.
template <typename X>
struct ExactTable {
  struct Entry {
    X point;
    double prob;
  };
  std::vector<Entry> entries;
  double truncation_mass = 0.0;
  double log_z = 0.0;  // log of the enumerated (unnormalized) score mass

  double prob_of(const X& x) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), x,
                               [](const Entry& e, const X& p) { return e.point < p; });
    return (it != entries.end() && it->point == x) ? it->prob : 0.0;
  }
};

namespace detail {

template <typename X, typename ScoreFn>
ExactTable<X> normalize_scores(const EnumeratedSpace<X>& space, ScoreFn&& score,
                               double mass_tol) {
  std::vector<double> ls(space.points.size());
  for (std::size_t i = 0; i < space.points.size(); ++i)
    ls[i] = score(space.points[i]).log();
  const double lz = log_sum_exp(std::span<const double>(ls));
  if (std::isinf(lz) && lz < 0) throw std::runtime_error("zero partition function");

  ExactTable<X> table;
  table.log_z = lz;
  // Treat the tail bound as actual outside mass so that probabilities sum to
  // exactly 1 - truncation_mass; the bound is tighter than every tolerance
  // the oracle is used with.
  double log_total = lz;
  if (space.tail_mass_bound > 0.0)
    log_total = (LogReal::from_log(lz) + LogReal::from_linear(space.tail_mass_bound)).log();
  table.truncation_mass = space.tail_mass_bound > 0.0
                              ? space.tail_mass_bound / std::exp(log_total)
                              : 0.0;
  if (table.truncation_mass > mass_tol)
    throw std::runtime_error("truncation mass exceeds tolerance");
  table.entries.reserve(space.points.size());
  for (std::size_t i = 0; i < space.points.size(); ++i)
    table.entries.push_back({space.points[i], std::exp(ls[i] - log_total)});
  return table;
}

}  // namespace detail

/// Exact normalized table of an unnormalized target over an enumerated space.
template <typename P>
  requires Scorable<P>
ExactTable<typename P::point_type> enumerate_target(
    const P& target, const EnumeratedSpace<typename P::point_type>& space,
    double mass_tol = 1e-15) {
  return detail::normalize_scores(space, [&](const auto& x) { return target.log_score(x); },
                                  mass_tol);
}

/// Exact truncated target p_beta = P_beta / Z_beta with P_beta = min(P, beta q).
/// Returns the normalized table; its log_z field is the exact log Z_beta.
template <typename P, typename Q>
  requires Scorable<P> && Scorable<Q> && SamePoint<P, Q>
ExactTable<typename P::point_type> exact_p_beta(
    const P& target, const Q& proposal, LogReal beta,
    const EnumeratedSpace<typename P::point_type>& space, double mass_tol = 1e-15) {
  // The truncated score min(P, beta q) has outside mass bounded by
  // min(tail_P, beta tail_q) <= min(1, beta) * tail_mass_bound.
  EnumeratedSpace<typename P::point_type> scaled{space.points, space.tail_mass_bound};
  if (beta < LogReal::one()) scaled.tail_mass_bound *= beta.linear();
  return detail::normalize_scores(
      scaled,
      [&](const auto& x) {
        const LogReal bq = beta * proposal.log_score(x);
        const LogReal p = target.log_score(x);
        return p < bq ? p : bq;
      },
      mass_tol);
}

/// Exact (TVD, KL) between two aligned tables. Missing points count as zero
/// mass; KL is +inf when p1 puts mass where p2 has none; 0*log(0/.) == 0.
template <typename X>
std::pair<double, double> exact_divergences(const ExactTable<X>& p1, const ExactTable<X>& p2) {
  double tvd = 0.0, kl = 0.0;
  std::size_t i = 0, j = 0;
  auto account = [&](double a, double b) {
    tvd += 0.5 * std::abs(a - b);
    if (a > 0.0) {
      if (b > 0.0)
        kl += a * std::log(a / b);
      else
        kl = std::numeric_limits<double>::infinity();
    }
  };
  while (i < p1.entries.size() || j < p2.entries.size()) {
    if (j >= p2.entries.size() ||
        (i < p1.entries.size() && p1.entries[i].point < p2.entries[j].point)) {
      account(p1.entries[i].prob, 0.0);
      ++i;
    } else if (i >= p1.entries.size() || p2.entries[j].point < p1.entries[i].point) {
      account(0.0, p2.entries[j].prob);
      ++j;
    } else {
      account(p1.entries[i].prob, p2.entries[j].prob);
      ++i;
      ++j;
    }
  }
  return {tvd, kl};
}

/// The one-sided TVD identity: sum over {x : p1(x) >= p2(x)} of p1 - p2.
/// Must agree with the symmetric definition to machine precision.
template <typename X>
double tvd_one_sided_identity(const ExactTable<X>& p1, const ExactTable<X>& p2) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  auto account = [&](double a, double b) {
    if (a >= b) s += a - b;
  };
  while (i < p1.entries.size() || j < p2.entries.size()) {
    if (j >= p2.entries.size() ||
        (i < p1.entries.size() && p1.entries[i].point < p2.entries[j].point)) {
      account(p1.entries[i].prob, 0.0);
      ++i;
    } else if (i >= p1.entries.size() || p2.entries[j].point < p1.entries[i].point) {
      account(0.0, p2.entries[j].prob);
      ++j;
    } else {
      account(p1.entries[i].prob, p2.entries[j].prob);
      ++i;
      ++j;
    }
  }
  return s;
}

/// Exact acceptance rate Z_beta / beta (q normalized over the space).
template <typename P, typename Q>
  requires Scorable<P> && Scorable<Q> && SamePoint<P, Q>
double exact_ar(const P& target, const Q& proposal, LogReal beta,
                const EnumeratedSpace<typename P::point_type>& space) {
  std::vector<double> ls(space.points.size());
  for (std::size_t i = 0; i < space.points.size(); ++i) {
    const LogReal bq = beta * proposal.log_score(space.points[i]);
    const LogReal p = target.log_score(space.points[i]);
    ls[i] = (p < bq ? p : bq).log();
  }
  const double lzb = log_sum_exp(std::span<const double>(ls));
  return std::exp(lzb - beta.log());
}

/// Exact p(A_beta): target mass of the set where P(x)/q(x) <= beta.
template <typename P, typename Q>
  requires Scorable<P> && Scorable<Q> && SamePoint<P, Q>
double exact_region_mass(const P& target, const Q& proposal, LogReal beta,
                         const EnumeratedSpace<typename P::point_type>& space) {
  const auto p = enumerate_target(target, space);
  double mass = 0.0;
  for (std::size_t i = 0; i < space.points.size(); ++i) {
    const LogReal ratio = log_importance_ratio(target.log_score(space.points[i]),
                                               proposal.log_score(space.points[i]));
    if (ratio <= beta) mass += p.entries[i].prob;
  }
  return mass;
}

/// Exact sup of the importance ratio over the space; infinite when the
/// proposal has a hole inside the target support.
template <typename P, typename Q>
  requires Scorable<P> && Scorable<Q> && SamePoint<P, Q>
LogReal exact_sup_log_ratio(const P& target, const Q& proposal,
                            const EnumeratedSpace<typename P::point_type>& space) {
  LogReal sup = LogReal::zero();
  for (const auto& x : space.points) {
    const LogReal r = log_importance_ratio(target.log_score(x), proposal.log_score(x));
    if (r > sup) sup = r;
  }
  return sup;
}

/// Target mass of the proposal's support (the TVD floor of the generalized
/// large-beta limit).
template <typename P, typename Q>
  requires Scorable<P> && Scorable<Q> && SamePoint<P, Q>
double exact_support_mass(const P& target, const Q& proposal,
                          const EnumeratedSpace<typename P::point_type>& space) {
  const auto p = enumerate_target(target, space);
  double mass = 0.0;
  for (std::size_t i = 0; i < space.points.size(); ++i)
    if (!proposal.log_score(space.points[i]).is_zero()) mass += p.entries[i].prob;
  return mass;
}

template <typename X, typename F>
double exact_moment(const ExactTable<X>& table, F&& f) {
  double s = 0.0;
  for (const auto& e : table.entries) s += e.prob * f(e.point);
  return s;
}

/// Smallest enumerated beta achieving exact AR <= target (betas ordered by the
/// observed ratio ladder). Used by tests to pin betas at prescribed exact ARs;
/// bisects on the continuous AR curve, which is decreasing in beta.
template <typename P, typename Q>
  requires Scorable<P> && Scorable<Q> && SamePoint<P, Q>
LogReal oracle_beta_for_ar(const P& target, const Q& proposal,
                           const EnumeratedSpace<typename P::point_type>& space,
                           double target_ar, int iters = 200) {
  if (!(target_ar > 0.0 && target_ar <= 1.0))
    throw std::invalid_argument("target acceptance rate must be in (0, 1]");
  double lo = -700.0, hi = 700.0;  // log beta bracket
  for (int it = 0; it < iters; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (exact_ar(target, proposal, LogReal::from_log(mid), space) > target_ar)
      lo = mid;
    else
      hi = mid;
  }
  return LogReal::from_log(0.5 * (lo + hi));
}

// ---------------------------------------------------------------------------
// Exact Markov kernel analysis (dense; capped at |X| <= 1000)
// ---------------------------------------------------------------------------

/// A dense row-stochastic transition matrix over an enumerated space.
struct ExactKernel {
  std::size_t n = 0;
  std::vector<double> m;  // row-major

  double at(std::size_t i, std::size_t j) const { return m[i * n + j]; }
  double& at(std::size_t i, std::size_t j) { return m[i * n + j]; }

  double max_row_sum_deviation() const {
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += at(i, j);
      dev = std::max(dev, std::abs(s - 1.0));
    }
    return dev;
  }

  /// max_x | sum_y p(y) K(y,x) - p(x) |
  double stationarity_deviation(const std::vector<double>& p) const {
    double dev = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
      double s = 0.0;
      for (std::size_t y = 0; y < n; ++y) s += p[y] * at(y, x);
      dev = std::max(dev, std::abs(s - p[x]));
    }
    return dev;
  }

  /// max_{x,y} | p(x) K(x,y) - p(y) K(y,x) |
  double detailed_balance_deviation(const std::vector<double>& p) const {
    double dev = 0.0;
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t y = x + 1; y < n; ++y)
        dev = std::max(dev, std::abs(p[x] * at(x, y) - p[y] * at(y, x)));
    return dev;
  }

  std::vector<double> step(const std::vector<double>& dist) const {
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = dist[i];
      if (d == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[j] += d * at(i, j);
    }
    return out;
  }
};

inline double tvd_between(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

namespace detail {

constexpr std::size_t kKernelSpaceCap = 1000;

inline double move_prob(LogReal num, LogReal den) {
  const LogReal r = num / den;
  return r >= LogReal::one() ? 1.0 : r.linear();
}

}  // namespace detail

/// Exact transition kernel of the independent-MH chain with proposal q:
/// K(x, x') = q(x') min(1, w(x')/w(x)) off-diagonal, with w = P/q, and the
/// diagonal absorbing the residual mass (rows sum to exactly 1).
template <typename P, typename Q>
  requires Scorable<P> && Scorable<Q> && SamePoint<P, Q>
ExactKernel imh_exact_kernel(const P& target, const Q& proposal,
                             const EnumeratedSpace<typename P::point_type>& space) {
  const std::size_t n = space.points.size();
  if (n > detail::kKernelSpaceCap)
    throw std::invalid_argument("kernel analysis capped at 1000 points");
  const auto q = enumerate_target(proposal, space);
  std::vector<LogReal> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = log_importance_ratio(target.log_score(space.points[i]),
                                proposal.log_score(space.points[i]));
  ExactKernel k;
  k.n = n;
  k.m.assign(n * n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    double off = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      if (y == x) continue;
      const double v = q.entries[y].prob * detail::move_prob(w[y], w[x]);
      k.at(x, y) = v;
      off += v;
    }
    k.at(x, x) = 1.0 - off;
  }
  return k;
}

/// Verifies the MH support condition for a local kernel on an enumerated
/// space: k(y|x) > 0 iff k(x|y) > 0. Throws on violation.
template <typename K>
  requires LocalKernel<K>
void check_kernel_support(const K& kernel,
                          const EnumeratedSpace<typename K::point_type>& space) {
  const std::size_t n = space.points.size();
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = x + 1; y < n; ++y) {
      const bool fwd = !kernel.log_prob(space.points[x], space.points[y]).is_zero();
      const bool rev = !kernel.log_prob(space.points[y], space.points[x]).is_zero();
      if (fwd != rev) throw std::runtime_error("kernel violates MH support condition");
    }
}

/// Exact transition kernel of general MH with a local proposal kernel:
/// K(x, x') = k(x'|x) min(1, P(x') k(x|x') / (P(x) k(x'|x))) off-diagonal.
template <typename P, typename K>
  requires Scorable<P> && LocalKernel<K> && SamePoint<P, K>
ExactKernel mh_local_exact_kernel(const P& target, const K& kernel,
                                  const EnumeratedSpace<typename P::point_type>& space) {
  const std::size_t n = space.points.size();
  if (n > detail::kKernelSpaceCap)
    throw std::invalid_argument("kernel analysis capped at 1000 points");
  check_kernel_support(kernel, space);
  std::vector<LogReal> lp(n);
  for (std::size_t i = 0; i < n; ++i) lp[i] = target.log_score(space.points[i]);
  ExactKernel k;
  k.n = n;
  k.m.assign(n * n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    double off = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      if (y == x) continue;
      const LogReal fwd = kernel.log_prob(space.points[x], space.points[y]);
      if (fwd.is_zero()) continue;
      const LogReal rev = kernel.log_prob(space.points[y], space.points[x]);
      const double v = fwd.linear() * detail::move_prob(lp[y] * rev, lp[x] * fwd);
      k.at(x, y) = v;
      off += v;
    }
    k.at(x, x) = 1.0 - off;
  }
  return k;
}

template <typename X>
std::vector<double> table_probs(const ExactTable<X>& t) {
  std::vector<double> p;
  p.reserve(t.entries.size());
  for (const auto& e : t.entries) p.push_back(e.prob);
  return p;
}

}  // namespace qrs
