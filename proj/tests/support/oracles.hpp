#pragma once

// Reference computations used by the tests. None of these call into the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

/// Adaptive Simpson quadrature in long double.
inline long double simpson(const std::function<long double(long double)>& f, long double a, long double b,
                           long double tol = 1e-15L) {
  std::function<long double(long double, long double, long double, long double, long double, long double, int)> rec;
  rec = [&](long double lo, long double hi, long double flo, long double fmid, long double fhi, long double whole,
            int depth) -> long double {
    const long double mid = 0.5L * (lo + hi);
    const long double lm = 0.5L * (lo + mid), rm = 0.5L * (mid + hi);
    const long double flm = f(lm), frm = f(rm);
    const long double left = (mid - lo) / 6.0L * (flo + 4.0L * flm + fmid);
    const long double right = (hi - mid) / 6.0L * (fmid + 4.0L * frm + fhi);
    if (depth <= 0 || std::fabs(left + right - whole) <= 15.0L * tol)
      return left + right + (left + right - whole) / 15.0L;
    return rec(lo, mid, flo, flm, fmid, left, depth - 1) + rec(mid, hi, fmid, frm, fhi, right, depth - 1);
  };
  const long double fa = f(a), fb = f(b), fm = f(0.5L * (a + b));
  return rec(a, b, fa, fm, fb, (b - a) / 6.0L * (fa + 4.0L * fm + fb), 60);
}

inline long double normal_cdf(long double z) { return 0.5L * std::erfc(-z / std::sqrt(2.0L)); }

/// Root of a monotone increasing function by bisection.
inline long double bisect(const std::function<long double(long double)>& f, long double target, long double lo,
                          long double hi, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const long double mid = 0.5L * (lo + hi);
    if (f(mid) < target) lo = mid;
    else hi = mid;
  }
  return 0.5L * (lo + hi);
}

inline long double normal_quantile(long double p) {
  return bisect([](long double z) { return normal_cdf(z); }, p, -40.0L, 40.0L);
}

/// P(X <= k) for X ~ Binomial(n, p), by direct summation in log space.
inline long double binom_cdf(std::uint64_t k, std::uint64_t n, long double p) {
  long double s = 0.0L;
  for (std::uint64_t i = 0; i <= k; ++i) {
    const long double lc = std::lgamma((long double)n + 1) - std::lgamma((long double)i + 1) -
                           std::lgamma((long double)(n - i) + 1);
    s += std::exp(lc + (long double)i * std::log(p) + (long double)(n - i) * std::log1p(-p));
  }
  return s;
}

/// Two-sample KS statistic by evaluating both ECDFs at every sample point.
inline double ks_statistic(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pts(a);
  pts.insert(pts.end(), b.begin(), b.end());
  double d = 0.0;
  for (double x : pts) {
    const double fa = static_cast<double>(std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; })) / a.size();
    const double fb = static_cast<double>(std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; })) / b.size();
    d = std::max(d, std::fabs(fa - fb));
  }
  return d;
}

/// Exact permutation p-value of the KS statistic for tiny samples: enumerates every way of
/// labelling the pooled sample.
inline double ks_exact_pvalue_bruteforce(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pool(a);
  pool.insert(pool.end(), b.begin(), b.end());
  const std::size_t n = a.size(), N = pool.size();
  const double d_obs = ks_statistic(a, b);
  std::vector<int> mask(N, 0);
  std::fill(mask.begin(), mask.begin() + static_cast<long>(n), 1);
  std::sort(mask.begin(), mask.end());
  std::size_t total = 0, extreme = 0;
  do {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < N; ++i) (mask[i] ? x : y).push_back(pool[i]);
    ++total;
    if (ks_statistic(x, y) >= d_obs - 1e-12) ++extreme;
  } while (std::next_permutation(mask.begin(), mask.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

/// Average ranks, then Pearson.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto rank = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, eq = 0;
      for (double w : v) {
        less += w < v[i];
        eq += w == v[i];
      }
      r[i] = less + (eq + 1.0) / 2.0;
    }
    return r;
  };
  const auto ra = rank(a), rb = rank(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// alpha(t) of the linear schedule via quadrature of beta.
inline long double alpha_quadrature(long double bmin, long double bmax, long double t) {
  const long double integral =
      t == 0.0L ? 0.0L : simpson([&](long double s) { return bmin + (bmax - bmin) * s; }, 0.0L, t);
  return std::exp(-integral);
}

/// Smallest t with integral_0^t beta >= M, by bisection on the quadrature.
inline long double t_for_level(long double bmin, long double bmax, long double M) {
  return bisect([&](long double t) { return -std::log(alpha_quadrature(bmin, bmax, t)); }, M, 0.0L, 10.0L, 120);
}

}  // namespace oracle
