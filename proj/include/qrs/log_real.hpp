#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace qrs {

/// A nonnegative extended real carried in the natural-log domain.
///
/// The stored value is log(x); -inf encodes an exact zero and +inf encodes an
/// infinite value (the support-mismatch marker for importance ratios). NaN is
/// rejected at construction, so comparisons are total and sorting is safe.
///
/// Arithmetic follows measure-theoretic conventions so that no operation can
/// produce NaN:
///   * products:  0 * anything = 0 (including 0 * inf)
///   * quotients: 0 / anything = 0, positive / 0 = inf, x / inf = 0
class LogReal {
 public:
  constexpr LogReal() = default;  // zero

  static LogReal from_log(double lg) {
    if (std::isnan(lg)) throw std::invalid_argument("LogReal: NaN log value");
    return LogReal(lg);
  }
  static LogReal from_linear(double x) {
    if (std::isnan(x) || x < 0.0)
      throw std::invalid_argument("LogReal: linear value must be nonnegative");
    return LogReal(std::log(x));
  }
  static constexpr LogReal zero() { return LogReal(-kInf); }
  static constexpr LogReal one() { return LogReal(0.0); }
  static constexpr LogReal infinity() { return LogReal(kInf); }

  constexpr double log() const { return log_; }
  double linear() const { return std::exp(log_); }

  constexpr bool is_zero() const { return log_ == -kInf; }
  constexpr bool is_infinite() const { return log_ == kInf; }
  constexpr bool is_finite_positive() const { return !is_zero() && !is_infinite(); }

  friend LogReal operator*(LogReal a, LogReal b) {
    if (a.is_zero() || b.is_zero()) return zero();
    return LogReal(a.log_ + b.log_);
  }
  friend LogReal operator/(LogReal num, LogReal den) {
    if (num.is_zero()) return zero();
    if (den.is_zero()) return infinity();
    if (num.is_infinite()) return infinity();
    if (den.is_infinite()) return zero();
    return LogReal(num.log_ - den.log_);
  }
  /// Linear-space addition via a two-term max-shifted log-sum-exp.
  friend LogReal operator+(LogReal a, LogReal b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.is_infinite() || b.is_infinite()) return infinity();
    const double hi = a.log_ > b.log_ ? a.log_ : b.log_;
    const double lo = a.log_ > b.log_ ? b.log_ : a.log_;
    return LogReal(hi + std::log1p(std::exp(lo - hi)));
  }

  friend constexpr bool operator==(LogReal a, LogReal b) { return a.log_ == b.log_; }
  friend constexpr bool operator!=(LogReal a, LogReal b) { return a.log_ != b.log_; }
  friend constexpr bool operator<(LogReal a, LogReal b) { return a.log_ < b.log_; }
  friend constexpr bool operator<=(LogReal a, LogReal b) { return a.log_ <= b.log_; }
  friend constexpr bool operator>(LogReal a, LogReal b) { return a.log_ > b.log_; }
  friend constexpr bool operator>=(LogReal a, LogReal b) { return a.log_ >= b.log_; }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  explicit constexpr LogReal(double lg) : log_(lg) {}
  double log_ = -kInf;
};

/// log(sum_i exp(v_i)) with a single max shift. Safe for any mix of finite
/// values and -inf; returns -inf for an empty or all-zero input.
inline double log_sum_exp(std::span<const double> logs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logs)
    if (v > m) m = v;
  if (std::isinf(m)) return m;  // all -inf, or a +inf entry dominates
  double s = 0.0;
  for (double v : logs) s += std::exp(v - m);
  return m + std::log(s);
}

/// log((1/N) sum_i exp(v_i)). Throws on empty input.
inline double log_mean_exp(std::span<const double> logs) {
  if (logs.empty()) throw std::invalid_argument("empty estimator batch");
  return log_sum_exp(logs) - std::log(static_cast<double>(logs.size()));
}

inline LogReal log_mean_exp(std::span<const LogReal> values) {
  if (values.empty()) throw std::invalid_argument("empty estimator batch");
  std::vector<double> logs;
  logs.reserve(values.size());
  for (const LogReal& v : values) logs.push_back(v.log());
  return LogReal::from_log(log_mean_exp(std::span<const double>(logs)));
}

}  // namespace qrs
