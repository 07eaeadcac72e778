#ifndef CAPTAIN_STATS_HPP
#define CAPTAIN_STATS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "captain/error.hpp"

namespace captain::stats {

namespace detail {

// Continued fraction for the incomplete beta function, evaluated with the
// modified Lentz method. Converges quickly for x < (a+1)/(a+b+2).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 1000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(Errc::InvalidArgument, "beta parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(Errc::InvalidArgument, "x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Student's t cumulative distribution with `df` degrees of freedom.
inline double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw Error(Errc::InvalidArgument, "degrees of freedom must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

/// Upper tail P(T > t), computed without cancellation for large t.
inline double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw Error(Errc::InvalidArgument, "degrees of freedom must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t > 0.0 ? tail : 1.0 - tail;
}

struct PairedTTestResult {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  double t_stat = 0.0;
  double p_one_sided = 0.5;
  std::size_t df = 0;
};

/// One-sided paired t-test of the alternative mean(a - b) > 0.
///
/// When every difference is identical the statistic is undefined; the
/// result then reports t = 0 / +inf / -inf with p = 0.5 / 0 / 1 according
/// to the sign of the mean difference.
inline PairedTTestResult paired_t_one_sided(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::LengthMismatch, "samples have different lengths");
  if (a.size() < 2) throw Error(Errc::TooFewPairs, "need at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  PairedTTestResult r;
  r.n = n;
  r.df = n - 1;
  r.mean_diff = mean;
  r.sd_diff = std::sqrt(ss / static_cast<double>(n - 1));
  const bool all_equal = std::all_of(d.begin(), d.end(), [&](double x) { return x == d.front(); });
  if (all_equal || r.sd_diff == 0.0) {
    r.sd_diff = 0.0;
    if (mean == 0.0) {
      r.t_stat = 0.0;
      r.p_one_sided = 0.5;
    } else if (mean > 0.0) {
      r.t_stat = std::numeric_limits<double>::infinity();
      r.p_one_sided = 0.0;
    } else {
      r.t_stat = -std::numeric_limits<double>::infinity();
      r.p_one_sided = 1.0;
    }
    return r;
  }
  r.t_stat = mean / (r.sd_diff / std::sqrt(static_cast<double>(n)));
  r.p_one_sided = student_t_sf(r.t_stat, static_cast<double>(r.df));
  return r;
}

}  // namespace captain::stats

#endif  // CAPTAIN_STATS_HPP
