#pragma once

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "diffcap/rng.hpp"
#include "diffcap/types.hpp"

namespace diffcap::stats {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Inverse standard normal CDF, Wichura's AS241 (PPND16); about 1e-16 relative accuracy.
inline double gaussian_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("gaussian_quantile: p must lie in (0,1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852854561 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

struct Interval {
  double lower;
  double upper;
};

/// One-sided Clopper-Pearson bounds for k successes out of n, each at `confidence`.
inline Interval clopper_pearson(std::uint64_t k, std::uint64_t n, double confidence) {
  if (n == 0) throw DomainError("clopper_pearson: n must be > 0");
  if (k > n) throw DomainError("clopper_pearson: k > n");
  if (!(confidence > 0.0 && confidence < 1.0)) throw DomainError("clopper_pearson: confidence in (0,1)");
  const double alpha = 1.0 - confidence;
  const double kd = static_cast<double>(k);
  const double nd = static_cast<double>(n);
  const double lo = k == 0 ? 0.0 : boost::math::ibeta_inv(kd, nd - kd + 1.0, alpha);
  const double hi = k == n ? 1.0 : boost::math::ibeta_inv(kd + 1.0, nd - kd, 1.0 - alpha);
  return {lo, hi};
}

// ---------------------------------------------------------------------------------------------
// Two-sample tests

struct TestResult {
  double statistic;
  double p_value;
};

namespace detail {

/// Kolmogorov survival function Q(lambda) = P(K > lambda).
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // Small-lambda form of the CDF converges fast here.
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double cdf = 0.0;
    for (int k = 1; k <= 20; ++k) cdf += std::exp(-(2.0 * k - 1) * (2.0 * k - 1) * c);
    cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    q += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-300) break;
  }
  return std::clamp(q, 0.0, 1.0);
}

/// P(D >= d) for the two-sample statistic under H0 by lattice-path counting. `dnm` is
/// n*m*D (an integer); paths with |i*m - j*n| < dnm everywhere give P(D < d).
inline double ks_exact_sf(std::int64_t n, std::int64_t m, std::int64_t dnm) {
  if (dnm <= 0) return 1.0;
  // w[i][j] = (#admissible paths to (i,j)) / C(i+j, i), built row by row.
  std::vector<long double> w(static_cast<std::size_t>(m + 1), 0.0L);
  auto ok = [&](std::int64_t i, std::int64_t j) { return std::llabs(i * m - j * n) < dnm; };
  w[0] = 1.0L;
  for (std::int64_t j = 1; j <= m; ++j) w[j] = ok(0, j) ? w[j - 1] : 0.0L;
  for (std::int64_t i = 1; i <= n; ++i) {
    w[0] = ok(i, 0) ? w[0] : 0.0L;
    for (std::int64_t j = 1; j <= m; ++j) {
      if (!ok(i, j)) {
        w[j] = 0.0L;
        continue;
      }
      const long double s = static_cast<long double>(i + j);
      w[j] = w[j] * (static_cast<long double>(i) / s) + w[j - 1] * (static_cast<long double>(j) / s);
    }
  }
  return std::clamp(static_cast<double>(1.0L - w[m]), 0.0, 1.0);
}

}  // namespace detail

/// Two-sample Kolmogorov-Smirnov test. The p-value is exact (lattice-path count) when the
/// smaller sample has fewer than 30 points, otherwise asymptotic with Stephens' correction
/// lambda = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) D, ne = n m / (n + m).
inline TestResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("ks_two_sample: empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const auto n = static_cast<std::int64_t>(x.size());
  const auto m = static_cast<std::int64_t>(y.size());
  std::int64_t i = 0, j = 0, best = 0;
  while (i < n && j < m) {
    const double v = std::min(x[i], y[j]);
    while (i < n && x[i] == v) ++i;
    while (j < m && y[j] == v) ++j;
    best = std::max<std::int64_t>(best, std::llabs(i * m - j * n));
  }
  const double d = static_cast<double>(best) / static_cast<double>(n * m);
  double p;
  if (std::min(n, m) < 30) {
    p = detail::ks_exact_sf(n, m, best);
  } else {
    const double ne = static_cast<double>(n) * m / static_cast<double>(n + m);
    const double sq = std::sqrt(ne);
    p = detail::kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
  }
  return {d, p};
}

/// Two-sided permutation test on the difference of means.
inline TestResult permutation_test(std::span<const double> a, std::span<const double> b, int n_shuffles,
                                   NoiseStream& noise) {
  if (a.empty() || b.empty()) throw DomainError("permutation_test: empty sample");
  if (n_shuffles < 1) throw DomainError("permutation_test: n_shuffles must be >= 1");
  std::vector<double> pool(a.begin(), a.end());
  pool.insert(pool.end(), b.begin(), b.end());
  const auto na = a.size();
  auto mean_diff = [&](const std::vector<double>& v) {
    const double sa = std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
    const double sb = std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(na), v.end(), 0.0);
    return sa / static_cast<double>(na) - sb / static_cast<double>(v.size() - na);
  };
  const double observed = std::abs(mean_diff(pool));
  int extreme = 0;
  for (int s = 0; s < n_shuffles; ++s) {
    std::shuffle(pool.begin(), pool.end(), noise.engine());
    if (std::abs(mean_diff(pool)) >= observed - 1e-15) ++extreme;
  }
  return {observed, (1.0 + extreme) / (1.0 + n_shuffles)};
}

// ---------------------------------------------------------------------------------------------
// Descriptive statistics

struct Summary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0, stddev = 0;
  std::size_t count = 0;
};

/// Linear-interpolation quantile of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Summary summarize(std::span<const double> values) {
  if (values.empty()) throw DomainError("summarize: empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  Summary s;
  s.count = v.size();
  s.min = v.front();
  s.max = v.back();
  s.q1 = sorted_quantile(v, 0.25);
  s.median = sorted_quantile(v, 0.5);
  s.q3 = sorted_quantile(v, 0.75);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

/// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("pearson: need two equal samples of size >= 2");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  return pearson(ra, rb);
}

}  // namespace diffcap::stats
