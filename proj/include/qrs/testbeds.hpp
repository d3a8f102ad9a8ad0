#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qrs/log_real.hpp"
#include "qrs/model.hpp"
#include "qrs/oracle.hpp"
#include "qrs/rng.hpp"

namespace qrs {

// ---------------------------------------------------------------------------
// Poisson pair (the two-Poissons experiment)
// ---------------------------------------------------------------------------

/// A Poisson distribution usable both as a normalized proposal and as an
/// unnormalized target whose partition function is analytically 1.
/// Sampling uses inversion by sequential search, which is exact and adequate
/// for the rates used here (lambda <= 30 or so).
class PoissonDist {
 public:
  using point_type = std::int64_t;

  explicit PoissonDist(double lambda) : lambda_(lambda), log_lambda_(std::log(lambda)) {
    if (!(lambda > 0.0)) throw std::invalid_argument("Poisson rate must be positive");
  }

  double lambda() const { return lambda_; }

  LogReal log_prob(point_type k) const {
    if (k < 0) return LogReal::zero();
    const double kd = static_cast<double>(k);
    return LogReal::from_log(-lambda_ + kd * log_lambda_ - std::lgamma(kd + 1.0));
  }
  LogReal log_score(point_type k) const { return log_prob(k); }

  point_type draw(RngStream& rng) const {
    const double u = rng.uniform_open01();
    // Hard cap guards the astronomically unlikely case where u exceeds the
    // accumulated mass representable in double.
    const point_type cap =
        static_cast<point_type>(lambda_ + 40.0 * std::sqrt(lambda_ + 1.0) + 60.0);
    double term = std::exp(-lambda_);
    double cum = term;
    point_type k = 0;
    while (u > cum && k < cap) {
      ++k;
      term *= lambda_ / static_cast<double>(k);
      cum += term;
    }
    return k;
  }

 private:
  double lambda_;
  double log_lambda_;
};

/// Target/proposal pair of Poisson distributions.
struct PoissonPair {
  PoissonDist target;
  PoissonDist proposal;

  /// sup_x P(x)/q(x): infinite when lambda_p > lambda_q (the ratio
  /// e^{lambda_q - lambda_p} (lambda_p/lambda_q)^x grows without bound),
  /// attained at x = 0 otherwise.
  LogReal sup_log_ratio() const {
    if (target.lambda() > proposal.lambda()) return LogReal::infinity();
    return LogReal::from_log(proposal.lambda() - target.lambda());
  }

  /// Truncated support {0..K} with K chosen so that both tails are below
  /// mass_tol: enumeration stops only when the cumulative mass has reached
  /// 1 - mass_tol AND the current term is below mass_tol times the cumulative
  /// mass, which cannot trigger left of the mode.
  EnumeratedSpace<std::int64_t> oracle_space(double mass_tol = 1e-15) const {
    auto tail_done = [&](const PoissonDist& d, std::int64_t k, double term, double cum) {
      return k > static_cast<std::int64_t>(d.lambda()) && cum >= 1.0 - mass_tol &&
             term < mass_tol * cum;
    };
    const PoissonDist& a = target;
    const PoissonDist& b = proposal;
    double term_a = std::exp(-a.lambda()), cum_a = term_a;
    double term_b = std::exp(-b.lambda()), cum_b = term_b;
    std::int64_t k = 0;
    while (!(tail_done(a, k, term_a, cum_a) && tail_done(b, k, term_b, cum_b))) {
      ++k;
      term_a *= a.lambda() / static_cast<double>(k);
      cum_a += term_a;
      term_b *= b.lambda() / static_cast<double>(k);
      cum_b += term_b;
      if (k > 100000) throw std::runtime_error("poisson truncation failed to converge");
    }
    // Geometric tail bound: for j > K, term(j) <= term(K+1) r^{j-K-1} with
    // r = lambda/(K+2) < 1.
    auto tail_bound = [&](const PoissonDist& d, double term_k) {
      const double next = term_k * d.lambda() / static_cast<double>(k + 1);
      const double r = d.lambda() / static_cast<double>(k + 2);
      return next / (1.0 - r);
    };
    EnumeratedSpace<std::int64_t> space;
    space.points.resize(static_cast<std::size_t>(k + 1));
    std::iota(space.points.begin(), space.points.end(), std::int64_t{0});
    space.tail_mass_bound = std::max(tail_bound(a, term_a), tail_bound(b, term_b));
    return space;
  }
};

inline PoissonPair make_poisson_pair(double lambda_p, double lambda_q) {
  return PoissonPair{PoissonDist(lambda_p), PoissonDist(lambda_q)};
}

// ---------------------------------------------------------------------------
// Random categorical spaces (fuzzing instances)
// ---------------------------------------------------------------------------

enum class WeightLaw { uniform_dirichlet, heavy_tail };

inline WeightLaw parse_weight_law(const std::string& s) {
  if (s == "uniform-dirichlet") return WeightLaw::uniform_dirichlet;
  if (s == "heavy-tail") return WeightLaw::heavy_tail;
  throw std::invalid_argument("unknown weight law: " + s);
}

/// A fully enumerated toy space of v^k integer-vector points with one target
/// weight and one proposal weight per point. Points are addressed by their
/// index in the most-significant-digit-first encoding, so index order equals
/// lexicographic order of the digit vectors.
class CategoricalSpace {
 public:
  using point_type = std::int32_t;

  class Target {
   public:
    using point_type = std::int32_t;
    explicit Target(const CategoricalSpace* s) : s_(s) {}
    LogReal log_score(point_type x) const { return s_->log_target_w_[static_cast<std::size_t>(x)]; }

   private:
    const CategoricalSpace* s_;
  };

  class Prop {
   public:
    using point_type = std::int32_t;
    explicit Prop(const CategoricalSpace* s) : s_(s) {}
    LogReal log_prob(point_type x) const {
      return s_->log_prop_w_[static_cast<std::size_t>(x)] /
             LogReal::from_linear(s_->prop_total_);
    }
    LogReal log_score(point_type x) const { return log_prob(x); }
    point_type draw(RngStream& rng) const {
      const double u = rng.uniform_open01() * s_->prop_cdf_.back();
      const auto it = std::lower_bound(s_->prop_cdf_.begin(), s_->prop_cdf_.end(), u);
      return static_cast<point_type>(it - s_->prop_cdf_.begin());
    }

   private:
    const CategoricalSpace* s_;
  };

  CategoricalSpace(int positions, int symbols, std::vector<double> target_w,
                   std::vector<double> proposal_w)
      : k_(positions), v_(symbols), target_w_(std::move(target_w)),
        prop_w_(std::move(proposal_w)) {
    const std::size_t n = checked_size(positions, symbols);
    if (target_w_.size() != n || prop_w_.size() != n)
      throw std::invalid_argument("weight table size must equal symbols^positions");
    for (double w : target_w_)
      if (!(w >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
    for (double w : prop_w_)
      if (!(w >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
    rebuild();
    if (target_total_ <= 0.0)
      throw std::invalid_argument("target partition function must be positive");
    if (prop_total_ <= 0.0)
      throw std::invalid_argument("proposal must have positive total mass");
  }

  /// Reproducible random instance. Capped at 10^4 points so every instance
  /// stays oracle-backed.
  static CategoricalSpace random(int positions, int symbols, std::uint64_t seed,
                                 WeightLaw law) {
    const std::size_t n = checked_size(positions, symbols);
    RngStream rng(seed, 0xCA7);
    auto draw_weight = [&]() {
      switch (law) {
        case WeightLaw::uniform_dirichlet:
          // Exp(1) weights: normalizing yields Dirichlet(1,...,1).
          return -std::log(rng.uniform_open01());
        case WeightLaw::heavy_tail: {
          // Log-normal with a wide scale; stresses unbounded-looking ratios.
          const double u1 = rng.uniform_open01();
          const double u2 = rng.uniform_open01();
          const double z =
              std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
          return std::exp(6.0 * z);
        }
      }
      return 1.0;
    };
    std::vector<double> tw(n), pw(n);
    for (auto& w : tw) w = draw_weight();
    for (auto& w : pw) w = draw_weight();
    return CategoricalSpace(positions, symbols, std::move(tw), std::move(pw));
  }

  int positions() const { return k_; }
  int symbols() const { return v_; }
  std::size_t size() const { return target_w_.size(); }
  Target target() const { return Target(this); }
  Prop proposal() const { return Prop(this); }

  EnumeratedSpace<point_type> space() const {
    EnumeratedSpace<point_type> s;
    s.points.resize(size());
    std::iota(s.points.begin(), s.points.end(), point_type{0});
    return s;
  }

  LogReal sup_log_ratio() const {
    return exact_sup_log_ratio(target(), proposal(), space());
  }

  std::vector<std::int32_t> decode(point_type idx) const {
    std::vector<std::int32_t> digits(static_cast<std::size_t>(k_));
    std::int32_t rem = idx;
    for (int i = k_ - 1; i >= 0; --i) {
      digits[static_cast<std::size_t>(i)] = rem % v_;
      rem /= v_;
    }
    return digits;
  }
  point_type encode(const std::vector<std::int32_t>& digits) const {
    point_type idx = 0;
    for (int i = 0; i < k_; ++i) idx = idx * v_ + digits[static_cast<std::size_t>(i)];
    return idx;
  }

  /// Fuzzing utility: zero out the proposal weight on a random fraction of
  /// points (keeping the target as is), producing support-hole instances for
  /// the generalized large-beta limit.
  CategoricalSpace with_proposal_holes(double fraction, std::uint64_t seed) const {
    if (!(fraction >= 0.0 && fraction < 1.0))
      throw std::invalid_argument("hole fraction must be in [0, 1)");
    std::vector<double> pw = prop_w_;
    RngStream rng(seed, 0x401E);
    const auto holes = static_cast<std::size_t>(fraction * static_cast<double>(size()));
    std::vector<std::size_t> idx(size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < holes; ++i) {
      const std::size_t j = i + rng.uniform_below(idx.size() - i);
      std::swap(idx[i], idx[j]);
      pw[idx[i]] = 0.0;
    }
    return CategoricalSpace(k_, v_, target_w_, std::move(pw));
  }

 private:
  static std::size_t checked_size(int positions, int symbols) {
    if (positions < 1 || symbols < 2)
      throw std::invalid_argument("need at least 1 position and 2 symbols");
    double n = 1.0;
    for (int i = 0; i < positions; ++i) n *= symbols;
    if (n > 10000.0) throw std::invalid_argument("space too large for exact enumeration");
    return static_cast<std::size_t>(n);
  }

  void rebuild() {
    const std::size_t n = target_w_.size();
    log_target_w_.resize(n);
    log_prop_w_.resize(n);
    prop_cdf_.resize(n);
    target_total_ = 0.0;
    double cum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      log_target_w_[i] = LogReal::from_linear(target_w_[i]);
      log_prop_w_[i] = LogReal::from_linear(prop_w_[i]);
      target_total_ += target_w_[i];
      cum += prop_w_[i];
      prop_cdf_[i] = cum;
    }
    prop_total_ = cum;
  }

  int k_;
  int v_;
  std::vector<double> target_w_;
  std::vector<double> prop_w_;
  std::vector<LogReal> log_target_w_;
  std::vector<LogReal> log_prop_w_;
  std::vector<double> prop_cdf_;
  double target_total_ = 0.0;
  double prop_total_ = 0.0;
};

inline CategoricalSpace make_random_categorical(int positions, int symbols,
                                                std::uint64_t seed, WeightLaw law) {
  return CategoricalSpace::random(positions, symbols, seed, law);
}

/// The canonical two-point demo instance: q = (0.5, 0.5), P = (0.2, 0.6),
/// so p = (0.25, 0.75), Z = 0.8, and at beta = 1, p_beta = (2/7, 5/7).
inline CategoricalSpace make_two_point_space() {
  return CategoricalSpace(1, 2, {0.2, 0.6}, {0.5, 0.5});
}

// ---------------------------------------------------------------------------
// Constraint EBMs P(x) = a(x) b(x)
// ---------------------------------------------------------------------------

enum class ConstraintMode { pointwise, exponential };

/// An EBM formed by multiplying a base distribution a(x) with a constraint
/// factor b(x): pointwise constraints use b = prod_i phi_i with binary
/// features; exponential tilts use b = exp(lambda . phi).
template <typename Base>
  requires Scorable<Base>
class ConstraintEbm {
 public:
  using point_type = typename Base::point_type;
  struct Feature {
    std::string name;
    std::function<double(const point_type&)> phi;
  };

  ConstraintEbm(Base base, std::vector<Feature> features, std::vector<double> lambdas,
                ConstraintMode mode)
      : base_(std::move(base)), features_(std::move(features)),
        lambdas_(std::move(lambdas)), mode_(mode) {
    if (mode_ == ConstraintMode::exponential && lambdas_.size() != features_.size())
      throw std::invalid_argument("feature/lambda length mismatch");
  }

  const Base& base() const { return base_; }
  const std::vector<Feature>& features() const { return features_; }
  ConstraintMode mode() const { return mode_; }

  LogReal log_b(const point_type& x) const {
    if (mode_ == ConstraintMode::pointwise) {
      for (const auto& feat : features_) {
        const double v = feat.phi(x);
        if (v != 0.0 && v != 1.0)
          throw std::invalid_argument("pointwise constraints require binary features");
        if (v == 0.0) return LogReal::zero();
      }
      return LogReal::one();
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < features_.size(); ++i) dot += lambdas_[i] * features_[i].phi(x);
    return LogReal::from_log(dot);
  }

  LogReal log_score(const point_type& x) const { return base_.log_score(x) * log_b(x); }

 private:
  Base base_;
  std::vector<Feature> features_;
  std::vector<double> lambdas_;
  ConstraintMode mode_;
};

template <typename Base>
ConstraintEbm<Base> make_constraint_ebm(Base base,
                                        std::vector<typename ConstraintEbm<Base>::Feature> features,
                                        std::vector<double> lambdas, ConstraintMode mode) {
  return ConstraintEbm<Base>(std::move(base), std::move(features), std::move(lambdas), mode);
}

template <typename Base>
ConstraintEbm<Base> make_pointwise_ebm(Base base,
                                       std::vector<typename ConstraintEbm<Base>::Feature> features) {
  return ConstraintEbm<Base>(std::move(base), std::move(features), {}, ConstraintMode::pointwise);
}

// ---------------------------------------------------------------------------
// Projected proposal q_proj (the naive filter)
// ---------------------------------------------------------------------------

/// The proposal q restricted to a binary constraint set by filtering:
/// q_proj(x) = q(x) / Z_qproj on {b = 1}, 0 elsewhere, with
/// Z_qproj = sum_x q(x) b(x). Drawing rejects q draws until the filter
/// holds, up to a configurable budget.
template <typename Q>
  requires GlobalProposal<Q>
class ProjectedProposal {
 public:
  using point_type = typename Q::point_type;

  ProjectedProposal(Q base, std::function<double(const point_type&)> filter,
                    LogReal log_z_proj, std::uint64_t draw_budget = 1000000)
      : base_(std::move(base)), filter_(std::move(filter)), log_z_proj_(log_z_proj),
        draw_budget_(draw_budget) {}

  LogReal log_prob(const point_type& x) const {
    if (!passes(x)) return LogReal::zero();
    return base_.log_prob(x) / log_z_proj_;
  }
  LogReal log_score(const point_type& x) const { return log_prob(x); }

  point_type draw(RngStream& rng) const {
    for (std::uint64_t i = 0; i < draw_budget_; ++i) {
      point_type x = base_.draw(rng);
      if (passes(x)) return x;
    }
    throw std::runtime_error("filter never satisfied");
  }

  LogReal log_z_proj() const { return log_z_proj_; }

 private:
  bool passes(const point_type& x) const {
    const double v = filter_(x);
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("filter must be binary");
    return v == 1.0;
  }

  Q base_;
  std::function<double(const point_type&)> filter_;
  LogReal log_z_proj_;
  std::uint64_t draw_budget_;
};

/// Exact construction: Z_qproj computed by enumeration.
template <typename Q>
  requires GlobalProposal<Q>
ProjectedProposal<Q> make_projected_proposal(
    Q base, std::function<double(const typename Q::point_type&)> filter,
    const EnumeratedSpace<typename Q::point_type>& space) {
  LogReal z = LogReal::zero();
  for (const auto& x : space.points)
    if (filter(x) == 1.0) z = z + base.log_prob(x);
  if (z.is_zero()) throw std::runtime_error("filter never satisfied");
  return ProjectedProposal<Q>(std::move(base), std::move(filter), z);
}

/// Estimated construction: Z_qproj estimated as the filter pass rate over
/// n_estimate draws from q. Errors out if the filter never fires.
template <typename Q>
  requires GlobalProposal<Q>
ProjectedProposal<Q> make_projected_proposal(
    Q base, std::function<double(const typename Q::point_type&)> filter, RngStream& rng,
    std::uint64_t n_estimate) {
  std::uint64_t hits = 0;
  for (std::uint64_t i = 0; i < n_estimate; ++i)
    if (filter(base.draw(rng)) == 1.0) ++hits;
  if (hits == 0) throw std::runtime_error("filter never satisfied");
  const LogReal z = LogReal::from_linear(static_cast<double>(hits) /
                                         static_cast<double>(n_estimate));
  return ProjectedProposal<Q>(std::move(base), std::move(filter), z);
}

// ---------------------------------------------------------------------------
// Local kernels for toy spaces
// ---------------------------------------------------------------------------

/// Uniform single-site resample kernel on a categorical space: pick one of
/// the k positions uniformly, then a replacement symbol uniformly (possibly
/// the current one). Symmetric, with exactly computable conditionals.
class SingleSiteKernel {
 public:
  using point_type = std::int32_t;

  SingleSiteKernel(int positions, int symbols) : k_(positions), v_(symbols) {
    if (positions < 1 || symbols < 2)
      throw std::invalid_argument("need at least 1 position and 2 symbols");
    stride_.resize(static_cast<std::size_t>(k_));
    std::int32_t s = 1;
    for (int i = k_ - 1; i >= 0; --i) {
      stride_[static_cast<std::size_t>(i)] = s;
      s *= v_;
    }
  }

  point_type propose(point_type x, RngStream& rng) const {
    const int pos = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(k_)));
    const auto sym = static_cast<std::int32_t>(rng.uniform_below(static_cast<std::uint64_t>(v_)));
    const std::int32_t stride = stride_[static_cast<std::size_t>(pos)];
    const std::int32_t cur = (x / stride) % v_;
    return x + (sym - cur) * stride;
  }

  LogReal log_prob(point_type from, point_type to) const {
    int differing = 0;
    for (int i = 0; i < k_; ++i) {
      const std::int32_t stride = stride_[static_cast<std::size_t>(i)];
      if ((from / stride) % v_ != (to / stride) % v_) ++differing;
    }
    if (differing > 1) return LogReal::zero();
    const double kv = static_cast<double>(k_) * static_cast<double>(v_);
    if (differing == 1) return LogReal::from_linear(1.0 / kv);
    return LogReal::from_linear(1.0 / static_cast<double>(v_));  // k ways to stay
  }

 private:
  int k_;
  int v_;
  std::vector<std::int32_t> stride_;
};

/// Degenerate kernel that always proposes the current point.
template <typename X>
struct DiracKernel {
  using point_type = X;
  X propose(const X& x, RngStream&) const { return x; }
  LogReal log_prob(const X& from, const X& to) const {
    return from == to ? LogReal::one() : LogReal::zero();
  }
};

/// Global uniform kernel over an enumerated space (state-independent), which
/// makes general MH coincide with IMH under a uniform proposal.
class UniformGlobalKernel {
 public:
  using point_type = std::int32_t;
  explicit UniformGlobalKernel(std::int32_t n) : n_(n) {}
  point_type propose(point_type, RngStream& rng) const {
    return static_cast<point_type>(rng.uniform_below(static_cast<std::uint64_t>(n_)));
  }
  LogReal log_prob(point_type, point_type) const {
    return LogReal::from_linear(1.0 / static_cast<double>(n_));
  }

 private:
  std::int32_t n_;
};

// ---------------------------------------------------------------------------
// Exponential-tilt fitting (test utility)
// ---------------------------------------------------------------------------

/// Damped fixed-point solve for tilt parameters lambda so that the tilted
/// distribution base * exp(lambda . phi) matches the target feature moments
/// on an enumerated space. A test utility for building distributional
/// constraint instances; not part of the sampling pipeline.
template <typename Base>
  requires Scorable<Base>
std::vector<double> fit_exponential_tilt(
    const Base& base,
    const std::vector<typename ConstraintEbm<Base>::Feature>& features,
    const std::vector<double>& target_moments,
    const EnumeratedSpace<typename Base::point_type>& space, int iterations = 2000,
    double step = 2.0) {
  if (features.size() != target_moments.size())
    throw std::invalid_argument("feature/target length mismatch");
  std::vector<double> lambdas(features.size(), 0.0);
  for (int it = 0; it < iterations; ++it) {
    ConstraintEbm<Base> ebm(base, features, lambdas, ConstraintMode::exponential);
    const auto table = enumerate_target(ebm, space);
    for (std::size_t i = 0; i < features.size(); ++i) {
      const double m = exact_moment(table, features[i].phi);
      lambdas[i] += step * (target_moments[i] - m);
    }
  }
  return lambdas;
}

}  // namespace qrs
