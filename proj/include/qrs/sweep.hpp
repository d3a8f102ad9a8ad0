#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "qrs/estimators.hpp"
#include "qrs/log_real.hpp"
#include "qrs/model.hpp"
#include "qrs/rng.hpp"
#include "qrs/samplers.hpp"

namespace qrs {

namespace detail {

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Work items are
/// handed out by index, so any output written to slot i lands in a fixed
/// position regardless of the thread count.
inline void parallel_for_index(std::size_t count, unsigned threads,
                               const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Beta sweeps
// ---------------------------------------------------------------------------

template <typename X>
struct SweepPlan {
  std::vector<double> beta_grid;  // strictly increasing, positive
  std::size_t n_draws = 0;
  std::size_t replicates = 1;
  std::uint64_t seed = 0;
  std::vector<MomentSpec<X>> moments;
  std::function<LogReal(const X&)> base_log_prob;  // optional: enables kl_to_base
  unsigned threads = 1;

  void validate() const {
    if (beta_grid.empty()) throw std::invalid_argument("empty beta grid");
    for (double b : beta_grid)
      if (!(b > 0.0)) throw std::invalid_argument("beta grid values must be positive");
    for (std::size_t i = 1; i < beta_grid.size(); ++i)
      if (!(beta_grid[i] > beta_grid[i - 1]))
        throw std::invalid_argument("beta grid must be strictly increasing");
    if (n_draws < 1) throw std::invalid_argument("need at least one draw");
    if (replicates < 1) throw std::invalid_argument("need at least one replicate");
  }
};

/// Replicate-averaged summary of one beta: mean and sample sd across
/// replicates for each headline metric.
struct SweepSummaryRow {
  double beta = 0.0;
  double ar_mean = 0.0, ar_sd = 0.0;
  double tvd_mean = 0.0, tvd_sd = 0.0;
  double tvd_bound_mean = 0.0, tvd_bound_sd = 0.0;
  double kl_mean = 0.0, kl_sd = 0.0;
  double log_z_mean = 0.0, log_z_sd = 0.0;
};

struct SweepReport {
  std::vector<DiagnosticsRow> rows;       // (beta-index major, replicate minor)
  std::vector<SweepSummaryRow> summary;   // one per beta
  TradeoffCurve tradeoff;                 // from replicate-averaged rows
  bool tradeoff_available = false;        // false when the grid has one point
};

/// Runs the full protocol: per replicate, ONE batch of n_draws from q is
/// drawn (stream id = replicate index) and every grid beta is evaluated
/// against that same batch. Rows are emitted in (beta, replicate) order, so
/// the report is byte-stable for a fixed plan regardless of thread count.
template <typename P, typename Q>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q>
SweepReport run_sweep(const SweepPlan<typename Q::point_type>& plan, const P& target,
                      const Q& proposal) {
  plan.validate();
  using X = typename Q::point_type;

  std::vector<std::vector<DiagnosticsRow>> per_replicate(plan.replicates);
  detail::parallel_for_index(plan.replicates, plan.threads, [&](std::size_t r) {
    RngStream rng(plan.seed, r);
    const DrawBatch<X> batch = draw_batch(target, proposal, plan.n_draws, rng);
    const BatchContext<X> ctx = make_batch_context(batch, plan.base_log_prob);
    auto& rows = per_replicate[r];
    rows.reserve(plan.beta_grid.size());
    for (double b : plan.beta_grid) {
      DiagnosticsRow row = diagnostics_row(ctx, LogReal::from_linear(b), plan.moments);
      row.replicate = r;
      row.seed = plan.seed;
      rows.push_back(std::move(row));
    }
  });

  SweepReport report;
  report.rows.reserve(plan.beta_grid.size() * plan.replicates);
  for (std::size_t bi = 0; bi < plan.beta_grid.size(); ++bi)
    for (std::size_t r = 0; r < plan.replicates; ++r)
      report.rows.push_back(per_replicate[r][bi]);

  std::vector<DiagnosticsRow> averaged;
  for (std::size_t bi = 0; bi < plan.beta_grid.size(); ++bi) {
    SweepSummaryRow s;
    s.beta = plan.beta_grid[bi];
    DiagnosticsRow avg;
    avg.beta = plan.beta_grid[bi];
    auto accumulate = [&](auto get, double& mean, double& sd) {
      mean = 0.0;
      for (std::size_t r = 0; r < plan.replicates; ++r) mean += get(per_replicate[r][bi]);
      mean /= static_cast<double>(plan.replicates);
      double ss = 0.0;
      for (std::size_t r = 0; r < plan.replicates; ++r) {
        const double d = get(per_replicate[r][bi]) - mean;
        ss += d * d;
      }
      sd = plan.replicates > 1 ? std::sqrt(ss / static_cast<double>(plan.replicates - 1)) : 0.0;
    };
    accumulate([](const auto& r) { return r.ar; }, s.ar_mean, s.ar_sd);
    accumulate([](const auto& r) { return r.tvd; }, s.tvd_mean, s.tvd_sd);
    accumulate([](const auto& r) { return r.tvd_bound; }, s.tvd_bound_mean, s.tvd_bound_sd);
    accumulate([](const auto& r) { return r.kl; }, s.kl_mean, s.kl_sd);
    accumulate([](const auto& r) { return r.log_z; }, s.log_z_mean, s.log_z_sd);
    report.summary.push_back(s);
    avg.ar = s.ar_mean;
    avg.tvd = s.tvd_mean;
    avg.tvd_bound = s.tvd_bound_mean;
    avg.kl = s.kl_mean;
    averaged.push_back(avg);
  }
  if (averaged.size() >= 2) {
    report.tradeoff = tradeoff_curve(averaged);
    report.tradeoff_available = true;
  }
  return report;
}

/// Finds beta hitting a target acceptance rate: the
/// order statistic of the rejection coefficients alpha = ratio/u over a
/// probe batch, i.e. the largest observed alpha with empirical
/// P(alpha > beta) >= target_ar. P(alpha > beta) equals AR(beta) exactly, so
/// the quantile estimate is consistent for the AR-curve crossing.
template <typename P, typename Q>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q>
LogReal find_beta_for_ar(const P& target, const Q& proposal, double target_ar,
                         std::size_t n_probe, RngStream& rng) {
  if (!(target_ar > 0.0 && target_ar <= 1.0))
    throw std::invalid_argument("target acceptance rate must be in (0, 1]");
  if (static_cast<double>(n_probe) < 10.0 / target_ar)
    throw std::invalid_argument("n_probe too small for target acceptance rate");
  std::vector<double> log_alphas;
  log_alphas.reserve(n_probe);
  for (std::size_t i = 0; i < n_probe; ++i) {
    const auto rec = make_draw_record(target, proposal, proposal.draw(rng));
    const double u = rng.uniform_open01();
    log_alphas.push_back((rec.log_ratio / LogReal::from_linear(u)).log());
  }
  std::sort(log_alphas.begin(), log_alphas.end());
  const auto m = static_cast<double>(n_probe);
  const auto k = static_cast<std::size_t>(std::floor(m * (1.0 - target_ar)));
  const std::size_t idx = k >= 1 ? k - 1 : 0;  // k-th smallest; min as fallback
  return LogReal::from_log(log_alphas[idx]);
}

// ---------------------------------------------------------------------------
// Sampler comparison protocol
// ---------------------------------------------------------------------------

enum class CompareMethod { qrs, imh, imh_reset, mh_local };

inline std::string to_string(CompareMethod m) {
  switch (m) {
    case CompareMethod::qrs: return "qrs";
    case CompareMethod::imh: return "imh";
    case CompareMethod::imh_reset: return "imh-reset";
    case CompareMethod::mh_local: return "mh-local";
  }
  return "?";
}

struct ComparisonRow {
  std::string method;
  double ar_proxy = 0.0;        // requested efficiency level
  double realized_ar = 0.0;     // outputs per proposal draw actually observed
  std::vector<std::pair<std::string, double>> moments;  // empirical means
  double pct_unique = 0.0;
  double lag1_autocorr = 0.0;   // of the first feature over the output series
  std::optional<double> tvd;    // estimable for qrs only
  std::optional<double> kl;
};

namespace detail {

template <typename X>
ComparisonRow summarize_samples(const std::vector<X>& samples,
                                const std::vector<MomentSpec<X>>& moments) {
  ComparisonRow row;
  const auto n = static_cast<double>(samples.size());
  for (const auto& spec : moments) {
    double s = 0.0;
    for (const auto& x : samples) s += spec.f(x);
    row.moments.push_back({spec.name, samples.empty() ? 0.0 : s / n});
  }
  std::unordered_set<X> uniq(samples.begin(), samples.end());
  row.pct_unique = samples.empty() ? 0.0 : 100.0 * static_cast<double>(uniq.size()) / n;
  if (!moments.empty() && samples.size() >= 3) {
    std::vector<double> series;
    series.reserve(samples.size());
    for (const auto& x : samples) series.push_back(moments[0].f(x));
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= n;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
      den += (series[i] - mean) * (series[i] - mean);
      if (i + 1 < series.size()) num += (series[i] - mean) * (series[i + 1] - mean);
    }
    row.lag1_autocorr = den > 0.0 ? num / den : 0.0;
  }
  return row;
}

}  // namespace detail

/// Side-by-side protocol comparison at matched efficiency proxies: QRS gets
/// beta from the acceptance-rate quantile; chains get thinning or reset
/// periods of round(1/ar). Divergence estimates exist for QRS only; MCMC
/// rows carry no tvd/kl (the not-available marker in serialized output).
template <typename P, typename Q, typename K>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q> && LocalKernel<K> &&
           SamePoint<P, K>
std::vector<ComparisonRow> mcmc_compare(const P& target, const Q& proposal, const K& kernel,
                                        std::uint64_t budget,
                                        const std::vector<CompareMethod>& protocols,
                                        const std::vector<double>& ar_proxies,
                                        const std::vector<MomentSpec<typename Q::point_type>>& moments,
                                        std::uint64_t seed, std::size_t burn_in = 1000) {
  using X = typename Q::point_type;
  std::vector<ComparisonRow> rows;
  std::uint64_t stream = 0;
  for (double ar : ar_proxies) {
    if (!(ar > 0.0 && ar <= 1.0))
      throw std::invalid_argument("acceptance-rate proxy must be in (0, 1]");
    const auto n_out = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(static_cast<double>(budget) * ar)));
    const auto period =
        static_cast<std::size_t>(std::max<long long>(1, std::llround(1.0 / ar)));
    for (CompareMethod method : protocols) {
      RngStream rng(seed, stream++);
      ComparisonRow row;
      switch (method) {
        case CompareMethod::qrs: {
          const std::size_t n_probe =
              std::max<std::size_t>(1000, static_cast<std::size_t>(std::ceil(100.0 / ar)));
          const LogReal beta = find_beta_for_ar(target, proposal, ar, n_probe, rng);
          QrsResult<X> result;
          try {
            result = qrs_collect(target, proposal, beta, n_out, rng, 100 * budget);
          } catch (const BudgetExhaustedError<X>& e) {
            result = e.partial();
          }
          row = detail::summarize_samples(result.points(), moments);
          row.realized_ar = result.empirical_ar();
          RngStream est_rng(seed, stream++);
          const auto batch = draw_batch(target, proposal, budget, est_rng);
          const auto ctx = make_batch_context(batch);
          const auto diag = diagnostics_row(ctx, beta);
          row.tvd = diag.tvd;
          row.kl = diag.kl;
          break;
        }
        case CompareMethod::imh: {
          const auto chain = imh_chain(target, proposal, n_out, burn_in, period, rng);
          std::vector<X> pts;
          pts.reserve(chain.samples.size());
          for (const auto& s : chain.samples) pts.push_back(s.point);
          row = detail::summarize_samples(pts, moments);
          row.realized_ar = chain.acceptance_rate();
          break;
        }
        case CompareMethod::imh_reset: {
          const auto chain = imh_reset(target, proposal, period, n_out, rng);
          std::vector<X> pts;
          pts.reserve(chain.samples.size());
          for (const auto& s : chain.samples) pts.push_back(s.point);
          row = detail::summarize_samples(pts, moments);
          row.realized_ar = chain.acceptance_rate();
          break;
        }
        case CompareMethod::mh_local: {
          const auto init = proposal.draw(rng);
          const auto chain =
              mh_local_chain(target, kernel, init, n_out, burn_in, period, rng);
          std::vector<X> pts;
          pts.reserve(chain.samples.size());
          for (const auto& s : chain.samples) pts.push_back(s.point);
          row = detail::summarize_samples(pts, moments);
          row.realized_ar = chain.acceptance_rate();
          break;
        }
      }
      row.method = to_string(method);
      row.ar_proxy = ar;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace qrs
