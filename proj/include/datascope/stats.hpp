#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "datascope/io.hpp"
#include "datascope/rng.hpp"

namespace datascope {

namespace detail {

/// Regularized incomplete beta function I_x(a, b) by Lentz's continued
/// fraction, the standard route to Student-t tail probabilities.
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
      b * std::log1p(-x);

  auto betacf = [](double a_, double b_, double x_) {
    constexpr int kMaxIters = 300;
    constexpr double kEps = 3e-14, kFpMin = 1e-300;
    const double qab = a_ + b_, qap = a_ + 1.0, qam = a_ - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x_ / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIters; ++m) {
      const int m2 = 2 * m;
      double aa = m * (b_ - m) * x_ / ((qam + m2) * (a_ + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < kFpMin) d = kFpMin;
      c = 1.0 + aa / c;
      if (std::abs(c) < kFpMin) c = kFpMin;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a_ + m) * (qab + m) * x_ / ((a_ + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < kFpMin) d = kFpMin;
      c = 1.0 + aa / c;
      if (std::abs(c) < kFpMin) c = kFpMin;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
  };

  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(ln_front) * betacf(a, b, x) / a;
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                        b * std::log1p(-x) + a * std::log(x)) *
                   betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

/// Two-sided p-value of a correlation r under the t-approximation with
/// n - 2 degrees of freedom.
inline double correlation_t_pvalue(double r, std::size_t n) {
  if (n < 3) return std::numeric_limits<double>::quiet_NaN();
  const double df = static_cast<double>(n - 2);
  const double r2 = std::min(r * r, 1.0 - 1e-15);
  const double t2 = r2 * df / (1.0 - r2);
  return detail::incomplete_beta(df / 2.0, 0.5, df / (df + t2));
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

/// Average ranks (ties share the mean rank).
inline std::vector<double> ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> r(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double mean_rank = 0.5 * (i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = mean_rank;
    i = j + 1;
  }
  return r;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    return std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  return pearson(rx, ry);
}

/// Permutation p-value of |stat| for a correlation statistic: full
/// enumeration for n <= 8, 10^5 seeded permutations for n <= 20; the Student
/// t-approximation beyond that (n! enumeration stops being feasible around
/// n = 9).
template <typename Stat>
double permutation_pvalue(std::span<const double> x, std::span<const double> y,
                          Stat stat, std::uint64_t seed = 0x5EEDULL) {
  const std::size_t n = x.size();
  const double observed = std::abs(stat(x, y));
  if (std::isnan(observed)) return std::numeric_limits<double>::quiet_NaN();

  std::vector<double> perm_y(y.begin(), y.end());
  if (n <= 8) {
    std::sort(perm_y.begin(), perm_y.end());
    std::uint64_t hits = 0, total = 0;
    do {
      ++total;
      if (std::abs(stat(x, perm_y)) >= observed - 1e-12) ++hits;
    } while (std::next_permutation(perm_y.begin(), perm_y.end()));
    return static_cast<double>(hits) / static_cast<double>(total);
  }
  if (n <= 20) {
    constexpr std::uint64_t kResamples = 100000;
    Rng rng(derive_seed(seed, "perm-pvalue"));
    std::uint64_t hits = 0;
    for (std::uint64_t rep = 0; rep < kResamples; ++rep) {
      for (std::size_t i = n; i-- > 1;)
        std::swap(perm_y[i], perm_y[rng.next_below(static_cast<std::uint32_t>(i + 1))]);
      if (std::abs(stat(x, perm_y)) >= observed - 1e-12) ++hits;
    }
    return static_cast<double>(hits + 1) / static_cast<double>(kResamples + 1);
  }
  return correlation_t_pvalue(stat(x, y), n);
}

struct CorrelationEntry {
  std::string x;
  std::string y;
  double pearson_r = std::numeric_limits<double>::quiet_NaN();
  double spearman_rho = std::numeric_limits<double>::quiet_NaN();
  double pearson_p = std::numeric_limits<double>::quiet_NaN();
  double spearman_p = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
  bool defined = true;
  std::string note;  // reason when undefined (e.g. constant column)
};

struct CorrelationTable {
  std::vector<CorrelationEntry> rows;
};

inline CorrelationEntry correlate_pair(const std::string& x_name,
                                       const std::string& y_name,
                                       std::span<const double> x,
                                       std::span<const double> y) {
  CorrelationEntry e;
  e.x = x_name;
  e.y = y_name;
  e.n = x.size();
  auto constant = [](std::span<const double> v) {
    for (double a : v)
      if (a != v[0]) return false;
    return true;
  };
  if (x.size() != y.size() || x.size() < 3) {
    e.defined = false;
    e.note = "need at least 3 paired samples";
    return e;
  }
  if (constant(x) || constant(y)) {
    e.defined = false;
    e.note = "constant column";
    return e;
  }
  e.pearson_r = pearson(x, y);
  e.spearman_rho = spearman(x, y);
  e.pearson_p = permutation_pvalue(x, y, [](auto a, auto b) { return pearson(a, b); });
  e.spearman_p = permutation_pvalue(x, y, [](auto a, auto b) { return spearman(a, b); });
  return e;
}

inline nlohmann::json correlation_table_to_json(const CorrelationTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : t.rows) {
    nlohmann::json j{{"x", e.x}, {"y", e.y}, {"n", e.n}, {"defined", e.defined}};
    if (e.defined) {
      j["pearson_r"] = e.pearson_r;
      j["spearman_rho"] = e.spearman_rho;
      j["pearson_p"] = e.pearson_p;
      j["spearman_p"] = e.spearman_p;
    } else {
      j["pearson_r"] = nullptr;
      j["spearman_rho"] = nullptr;
      j["pearson_p"] = nullptr;
      j["spearman_p"] = nullptr;
      j["note"] = e.note;
    }
    rows.push_back(j);
  }
  return nlohmann::json{{"correlations", rows}};
}

inline std::string correlation_table_csv_header() {
  return "x,y,pearson_r,spearman_rho,pearson_p,spearman_p,n,note";
}

inline std::string correlation_table_to_csv(const CorrelationTable& t) {
  std::string out = correlation_table_csv_header() + "\n";
  auto cell = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  for (const auto& e : t.rows) {
    out += e.x + "," + e.y + "," + cell(e.pearson_r) + "," + cell(e.spearman_rho) + "," +
           cell(e.pearson_p) + "," + cell(e.spearman_p) + "," + std::to_string(e.n) +
           "," + e.note + "\n";
  }
  return out;
}

}  // namespace datascope
