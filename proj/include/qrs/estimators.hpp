#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qrs/log_real.hpp"
#include "qrs/model.hpp"
#include "qrs/rng.hpp"

namespace qrs {

/// A batch of i.i.d. proposal draws with cached scores. Every estimator in
/// this module is a deterministic function of one batch (plug-in convention:
/// Z and Z_beta estimates from the same batch feed every divergence). The
/// partition estimates are unbiased; the plug-in TVD/KL ratio forms are
/// consistent as the batch grows, not unbiased.
template <typename X>
struct DrawBatch {
  std::vector<DrawRecord<X>> records;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  std::size_t n() const { return records.size(); }
};

template <typename P, typename Q>
  requires Scorable<P> && GlobalProposal<Q> && SamePoint<P, Q>
DrawBatch<typename Q::point_type> draw_batch(const P& target, const Q& proposal,
                                             std::size_t n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("empty estimator batch");
  DrawBatch<typename Q::point_type> batch;
  batch.seed = rng.seed();
  batch.stream_id = rng.stream_id();
  batch.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    batch.records.push_back(make_draw_record(target, proposal, proposal.draw(rng)));
  return batch;
}

/// Per-batch precomputation shared by every beta on a grid: the batch-wide
/// Z estimate and the self-normalized weights w_i = ratio_i / Z_hat, which
/// are bounded by N and therefore safe to accumulate in direct space.
template <typename X>
struct BatchContext {
  const DrawBatch<X>* batch = nullptr;
  double log_z = 0.0;                   // log of the batch-mean importance ratio
  double max_log_ratio = 0.0;
  double sum_w = 0.0;                   // == n up to rounding
  std::vector<double> w;                // exp(log_ratio - log_z)
  std::vector<double> log_base;         // base-model log-prob per record (optional)
  bool has_base = false;

  std::size_t n() const { return batch->n(); }
};

template <typename X>
BatchContext<X> make_batch_context(
    const DrawBatch<X>& batch,
    const std::function<LogReal(const X&)>& base_log_prob = nullptr) {
  if (batch.records.empty()) throw std::invalid_argument("empty estimator batch");
  BatchContext<X> ctx;
  ctx.batch = &batch;
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& r : batch.records) m = std::max(m, r.log_ratio.log());
  ctx.max_log_ratio = m;
  if (std::isinf(m) && m > 0)
    throw std::invalid_argument("batch contains an undrawable support-mismatch record");
  if (std::isinf(m))  // every draw scored zero: nothing can be normalized
    throw std::runtime_error("zero partition function estimate");
  double s = 0.0;
  for (const auto& r : batch.records) s += std::exp(r.log_ratio.log() - m);
  ctx.log_z = m + std::log(s / static_cast<double>(batch.n()));
  ctx.w.resize(batch.n());
  ctx.sum_w = 0.0;
  for (std::size_t i = 0; i < batch.n(); ++i) {
    ctx.w[i] = std::exp(batch.records[i].log_ratio.log() - ctx.log_z);
    ctx.sum_w += ctx.w[i];
  }
  if (base_log_prob) {
    ctx.has_base = true;
    ctx.log_base.resize(batch.n());
    for (std::size_t i = 0; i < batch.n(); ++i)
      ctx.log_base[i] = base_log_prob(batch.records[i].point).log();
  }
  return ctx;
}

struct PartitionEstimates {
  LogReal log_z;
  LogReal log_z_beta;
};

namespace detail {

/// log Z_beta from a context: Z_beta = Z * sum(min(w, b)) / sum(w) with
/// b = exp(log beta - log_z). The ratio-of-sums form makes Z_beta == Z exact
/// once beta dominates every ratio, so log_z_beta <= log_z always holds.
/// When beta sits so far below Z that the weight cap underflows, the sum is
/// taken in the beta-shifted basis instead (exact, just slower).
template <typename X>
double log_z_beta_from_context(const BatchContext<X>& ctx, LogReal beta) {
  const double shift = beta.log() - ctx.log_z;  // log of the weight cap b
  if (shift < -700.0) {
    double s = 0.0;  // sum of min(ratio/beta, 1)
    for (const auto& r : ctx.batch->records)
      s += std::exp(std::min(r.log_ratio.log() - beta.log(), 0.0));
    return beta.log() + std::log(s / static_cast<double>(ctx.n()));
  }
  const double cap = shift > 700.0 ? std::numeric_limits<double>::infinity()
                                   : std::exp(shift);
  double s = 0.0;
  for (double wi : ctx.w) s += std::min(wi, cap);
  return ctx.log_z + std::log(s / ctx.sum_w);
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace detail

/// Partition-function estimates from one batch:
/// Z ~= mean(P/q), Z_beta ~= mean(min(P, beta q)/q).
template <typename X>
PartitionEstimates estimate_partitions(const DrawBatch<X>& batch, LogReal beta) {
  const auto ctx = make_batch_context(batch);
  return {LogReal::from_log(ctx.log_z),
          LogReal::from_log(detail::log_z_beta_from_context(ctx, beta))};
}

/// Acceptance-rate identity AR = Z_beta / beta, clamped to [0, 1]. The
/// unclamped value exceeds 1 only through estimator noise (Z_beta <= beta
/// holds analytically for a normalized proposal).
inline double estimate_ar(LogReal log_z_beta, LogReal beta) {
  if (beta.is_zero() || beta.is_infinite())
    throw std::invalid_argument("beta must be positive");
  return detail::clamp01((log_z_beta / beta).linear());
}

struct RegionMassEstimate {
  double p_a_beta = 0.0;   // importance-sampled p(A_beta), clamped to [0, 1]
  double tvd_bound = 0.0;  // 1 - raw p(A_beta), clamped to [0, 1]
  double raw_p_a_beta = 0.0;
};

/// Importance-sampling estimate of p(A_beta) and the TVD upper bound
/// 1 - p(A_beta), where A_beta = { x : P(x)/q(x) <= beta }.
template <typename X>
RegionMassEstimate estimate_region_mass_and_bound(const DrawBatch<X>& batch, LogReal beta,
                                                  LogReal log_z) {
  if (batch.records.empty()) throw std::invalid_argument("empty estimator batch");
  double s = 0.0;
  for (const auto& r : batch.records)
    if (r.log_ratio <= beta) s += std::exp(r.log_ratio.log() - log_z.log());
  const double raw = s / static_cast<double>(batch.n());
  return {detail::clamp01(raw), detail::clamp01(1.0 - raw), raw};
}

/// Plug-in TVD estimate (half the mean absolute difference between the two
/// self-normalized weight columns), clamped to [0, 1].
template <typename X>
double estimate_tvd(const DrawBatch<X>& batch, LogReal beta, LogReal log_z,
                    LogReal log_z_beta) {
  if (batch.records.empty()) throw std::invalid_argument("empty estimator batch");
  double s = 0.0;
  for (const auto& r : batch.records) {
    const double lr = r.log_ratio.log();
    const double wi = std::exp(lr - log_z.log());
    const double wb = std::exp(std::min(lr, beta.log()) - log_z_beta.log());
    s += std::abs(wi - wb);
  }
  return detail::clamp01(0.5 * s / static_cast<double>(batch.n()));
}

/// Plug-in KL(p, p_beta) estimate in nats:
/// log(Z_beta/Z) + mean(w_i * max(0, log ratio_i - log beta)).
/// Per-term contributions are nonnegative; small negative totals are
/// estimator noise and are clamped at report time (DiagnosticsRow), with the
/// raw value retained there.
template <typename X>
double estimate_kl(const DrawBatch<X>& batch, LogReal beta, LogReal log_z,
                   LogReal log_z_beta) {
  if (batch.records.empty()) throw std::invalid_argument("empty estimator batch");
  double s = 0.0;
  for (const auto& r : batch.records) {
    const double lr = r.log_ratio.log();
    if (lr > beta.log())
      s += std::exp(lr - log_z.log()) * (lr - beta.log());
  }
  return (log_z_beta.log() - log_z.log()) + s / static_cast<double>(batch.n());
}

struct MomentEstimate {
  double value = 0.0;
  double se = 0.0;
};

/// Self-normalized importance-sampling estimate of E_{p_beta}[f] with a
/// delta-method standard error: se^2 = sum_i what_i^2 (f_i - mu)^2 over the
/// normalized weights what_i. f == 1 returns exactly 1 by construction.
template <typename X>
MomentEstimate estimate_moment(const DrawBatch<X>& batch, LogReal beta, LogReal log_z_beta,
                               const MomentSpec<X>& spec) {
  if (batch.records.empty()) throw std::invalid_argument("empty estimator batch");
  double sum_m = 0.0, sum_mf = 0.0;
  std::vector<double> m(batch.n()), f(batch.n());
  for (std::size_t i = 0; i < batch.n(); ++i) {
    const auto& r = batch.records[i];
    m[i] = std::exp(std::min(r.log_ratio.log(), beta.log()) - log_z_beta.log());
    f[i] = spec.f(r.point);
    sum_m += m[i];
    sum_mf += m[i] * f[i];
  }
  if (sum_m <= 0.0) throw std::runtime_error("all importance weights are zero");
  const double value = sum_mf / sum_m;
  double var = 0.0;
  for (std::size_t i = 0; i < batch.n(); ++i) {
    const double wn = m[i] / sum_m;
    var += wn * wn * (f[i] - value) * (f[i] - value);
  }
  return {value, std::sqrt(var)};
}

/// Importance-sampling estimate of KL(p_beta, a) in nats, with a the base
/// model's normalized log-probability:
/// -log Z_beta + mean(wbeta_i * log(P_beta(x_i)/a(x_i))).
template <typename X, typename A>
  requires Scorable<A> && std::same_as<typename A::point_type, X>
double estimate_kl_to_base(const DrawBatch<X>& batch, LogReal beta, LogReal log_z_beta,
                           const A& base) {
  if (batch.records.empty()) throw std::invalid_argument("empty estimator batch");
  double s = 0.0;
  for (const auto& r : batch.records) {
    const LogReal p_beta_over_q =
        r.log_ratio < beta ? r.log_ratio : beta;  // min(P, beta q) / q
    if (p_beta_over_q.is_zero()) continue;
    const LogReal log_p_beta = p_beta_over_q * r.log_q;
    const LogReal la = base.log_score(r.point);
    if (la.is_zero()) throw std::runtime_error("base model support violation");
    const double wb = std::exp(p_beta_over_q.log() - log_z_beta.log());
    s += wb * (log_p_beta.log() - la.log());
  }
  return -log_z_beta.log() + s / static_cast<double>(batch.n());
}

/// Plain Monte Carlo standard error of the Z estimate (in direct space),
/// computed with log-domain variance arithmetic so heavy-tailed ratios do
/// not overflow.
template <typename X>
double estimate_z_se(const BatchContext<X>& ctx) {
  double m2 = -std::numeric_limits<double>::infinity();
  for (const auto& r : ctx.batch->records) m2 = std::max(m2, 2.0 * r.log_ratio.log());
  if (std::isinf(m2)) return 0.0;  // all-zero ratios
  double s = 0.0;
  for (const auto& r : ctx.batch->records) s += std::exp(2.0 * r.log_ratio.log() - m2);
  const double log_mean_r2 = m2 + std::log(s / static_cast<double>(ctx.n()));
  const double d = 2.0 * ctx.log_z - log_mean_r2;  // <= 0 by Jensen
  const double log_var = log_mean_r2 + std::log1p(-std::min(1.0, std::exp(d)));
  return std::exp(0.5 * (log_var - std::log(static_cast<double>(ctx.n()))));
}

// ---------------------------------------------------------------------------
// One-row diagnostics
// ---------------------------------------------------------------------------

/// Every estimator output at one beta, with standard errors. Probability-
/// valued outputs are clamped to their analytic ranges; raw values are kept
/// in the debug sub-struct.
struct DiagnosticsRow {
  double beta = 0.0;
  std::uint64_t replicate = 0;
  double ar = 0.0;
  double ar_se = 0.0;
  double log_z = 0.0;
  double log_z_beta = 0.0;
  double tvd = 0.0;
  double tvd_se = 0.0;
  double tvd_bound = 0.0;
  double kl = 0.0;  // nats
  double kl_se = 0.0;
  std::optional<double> kl_to_base;  // nats
  std::vector<std::pair<std::string, MomentEstimate>> moments;
  std::uint64_t n_draws = 0;
  std::uint64_t seed = 0;

  struct RawValues {
    double ar = 0.0;
    double p_a_beta = 0.0;
    double tvd = 0.0;
    double tvd_bound = 0.0;
    double kl = 0.0;
  } raw;
};

/// Computes a full DiagnosticsRow from a shared batch context in two passes,
/// with no per-record exp calls beyond the cached weights. Standard errors
/// for TVD and KL treat the plug-in partition estimates as constants.
template <typename X>
DiagnosticsRow diagnostics_row(const BatchContext<X>& ctx, LogReal beta,
                               const std::vector<MomentSpec<X>>& moments = {}) {
  const auto& records = ctx.batch->records;
  const auto n = static_cast<double>(ctx.n());
  DiagnosticsRow row;
  row.beta = beta.linear();
  row.n_draws = ctx.n();
  row.seed = ctx.batch->seed;
  row.replicate = ctx.batch->stream_id;
  row.log_z = ctx.log_z;
  row.log_z_beta = detail::log_z_beta_from_context(ctx, beta);

  const double lb = beta.log();
  const double cap = (lb - ctx.log_z) > 700.0 ? std::numeric_limits<double>::infinity()
                                              : std::exp(lb - ctx.log_z);
  const double zr = std::exp(ctx.log_z - row.log_z_beta);  // Z_hat / Z_beta_hat
  // Extreme betas underflow the cached-weight basis; fall back to per-record
  // log-domain arithmetic, which is exact at any scale.
  const bool shifted_basis = !(cap > 0.0) || !std::isfinite(zr);

  double sum_t = 0.0, sum_t2 = 0.0;    // AR terms min(ratio/beta, 1)
  double sum_d = 0.0, sum_d2 = 0.0;    // TVD terms 0.5 |w - wbeta|
  double sum_g = 0.0, sum_g2 = 0.0;    // KL terms w max(0, lr - lb)
  double sum_pa = 0.0;                 // region-mass terms w 1[ratio <= beta]
  double sum_base = 0.0;               // KL-to-base terms
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double wi = ctx.w[i];
    const double lr = records[i].log_ratio.log();
    double t, wbeta;
    if (!shifted_basis) {
      const double mi = std::min(wi, cap);
      t = std::isinf(cap) ? 0.0 : mi / cap;
      wbeta = mi * zr;
    } else {
      t = std::exp(std::min(lr - lb, 0.0));
      wbeta = std::exp(std::min(lr, lb) - row.log_z_beta);
    }
    sum_t += t;
    sum_t2 += t * t;
    const double d = 0.5 * std::abs(wi - wbeta);
    sum_d += d;
    sum_d2 += d * d;
    if (lr <= lb) {
      sum_pa += wi;
    } else {
      const double g = wi * (lr - lb);
      sum_g += g;
      sum_g2 += g * g;
    }
    if (ctx.has_base) {
      if (wbeta > 0.0) {
        const double log_p_beta = std::min(lr, lb) + records[i].log_q.log();
        const double la = ctx.log_base[i];
        if (std::isinf(la) && la < 0)
          throw std::runtime_error("base model support violation");
        sum_base += wbeta * (log_p_beta - la);
      }
    }
  }

  row.raw.ar = std::exp(row.log_z_beta - lb);
  row.ar = detail::clamp01(row.raw.ar);
  row.ar_se = std::isinf(cap) ? 0.0
                              : std::sqrt(std::max(0.0, sum_t2 / n - (sum_t / n) * (sum_t / n)) / n);
  row.raw.p_a_beta = sum_pa / n;
  row.raw.tvd_bound = 1.0 - row.raw.p_a_beta;
  row.tvd_bound = detail::clamp01(row.raw.tvd_bound);
  row.raw.tvd = sum_d / n;
  row.tvd = detail::clamp01(row.raw.tvd);
  row.tvd_se = std::sqrt(std::max(0.0, sum_d2 / n - (sum_d / n) * (sum_d / n)) / n);
  row.raw.kl = (row.log_z_beta - ctx.log_z) + sum_g / n;
  row.kl = std::max(0.0, row.raw.kl);
  row.kl_se = std::sqrt(std::max(0.0, sum_g2 / n - (sum_g / n) * (sum_g / n)) / n);
  if (ctx.has_base) row.kl_to_base = -row.log_z_beta + sum_base / n;

  for (const auto& spec : moments)
    row.moments.push_back(
        {spec.name, estimate_moment(*ctx.batch, beta, LogReal::from_log(row.log_z_beta), spec)});
  return row;
}

// ---------------------------------------------------------------------------
// Replicate statistics and trade-off curves
// ---------------------------------------------------------------------------

/// Per-metric mean and sample standard deviation across R independent rows.
struct ReplicateReport {
  std::size_t replicates = 0;
  std::vector<std::pair<std::string, std::pair<double, double>>> metrics;  // (mean, sd)

  std::pair<double, double> metric(const std::string& name) const {
    for (const auto& [k, v] : metrics)
      if (k == name) return v;
    throw std::out_of_range("no such metric: " + name);
  }
};

/// Runs R independent replicates (stream ids base_stream .. base_stream+R-1)
/// of a row-producing function and reports mean +/- sample sd per metric.
template <typename RowFn>
ReplicateReport replicate_stats(RowFn&& make_row, std::size_t replicates,
                                std::uint64_t base_stream) {
  if (replicates < 2) throw std::invalid_argument("need at least 2 replicates");
  std::vector<DiagnosticsRow> rows;
  rows.reserve(replicates);
  for (std::size_t r = 0; r < replicates; ++r)
    rows.push_back(make_row(base_stream + r));

  std::vector<std::pair<std::string, std::function<double(const DiagnosticsRow&)>>> fields = {
      {"ar", [](const auto& r) { return r.ar; }},
      {"z", [](const auto& r) { return std::exp(r.log_z); }},
      {"z_beta", [](const auto& r) { return std::exp(r.log_z_beta); }},
      {"tvd", [](const auto& r) { return r.tvd; }},
      {"tvd_bound", [](const auto& r) { return r.tvd_bound; }},
      {"kl", [](const auto& r) { return r.kl; }},
  };
  ReplicateReport report;
  report.replicates = replicates;
  auto add_metric = [&](const std::string& name, auto&& get) {
    double mean = 0.0;
    for (const auto& r : rows) mean += get(r);
    mean /= static_cast<double>(replicates);
    double ss = 0.0;
    for (const auto& r : rows) {
      const double d = get(r) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(replicates - 1));
    report.metrics.push_back({name, {mean, sd}});
  };
  for (const auto& [name, get] : fields) add_metric(name, get);
  if (rows[0].kl_to_base)
    add_metric("kl_to_base", [](const auto& r) { return r.kl_to_base.value_or(0.0); });
  for (std::size_t mi = 0; mi < rows[0].moments.size(); ++mi)
    add_metric("moment_" + rows[0].moments[mi].first,
               [mi](const auto& r) { return r.moments[mi].second.value; });
  return report;
}

struct TradeoffPoint {
  double ar = 0.0;
  double tvd = 0.0;
  double kl = 0.0;
};

struct TradeoffCurve {
  std::vector<TradeoffPoint> points;    // in ascending-beta order
  std::size_t isotonic_repairs = 0;     // number of AR values adjusted
};

/// Quality-vs-efficiency pairs from a beta-sorted row sequence. AR is
/// analytically nonincreasing in beta; estimator noise that violates this is
/// repaired by isotonic (pool-adjacent-violators) regression on the AR
/// column for presentation only, and the repair count is reported.
inline TradeoffCurve tradeoff_curve(const std::vector<DiagnosticsRow>& rows) {
  if (rows.size() < 2)
    throw std::invalid_argument("trade-off curve needs at least two rows");
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (!(rows[i].beta > rows[i - 1].beta))
      throw std::invalid_argument("rows must be sorted by strictly increasing beta");

  // Nonincreasing isotonic regression on AR via PAV on the reversed sequence.
  struct Block {
    double sum;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    blocks.push_back({it->ar, 1});
    while (blocks.size() >= 2) {
      auto& a = blocks[blocks.size() - 2];
      auto& b = blocks.back();
      if (b.sum / static_cast<double>(b.count) < a.sum / static_cast<double>(a.count)) {
        a.sum += b.sum;
        a.count += b.count;
        blocks.pop_back();
      } else {
        break;
      }
    }
  }
  std::vector<double> fitted;  // ascending-beta order
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it)
    for (std::size_t c = 0; c < it->count; ++c)
      fitted.push_back(it->sum / static_cast<double>(it->count));

  TradeoffCurve curve;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (fitted[i] != rows[i].ar) ++curve.isotonic_repairs;
    curve.points.push_back({fitted[i], rows[i].tvd, rows[i].kl});
  }
  return curve;
}

}  // namespace qrs
