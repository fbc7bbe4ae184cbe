#include "clusterscope/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clusterscope/error.hpp"

namespace clusterscope {

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
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
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw Error(ErrorCode::Numeric, "incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorCode::Domain, "incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::Domain, "incomplete beta needs 0 <= x <= 1");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double f_cdf(double x, double d1, double d2) {
  if (!(d1 >= 1.0) || !(d2 >= 1.0)) throw Error(ErrorCode::Domain, "F distribution needs d1, d2 >= 1");
  if (std::isnan(x) || x < 0.0) throw Error(ErrorCode::Domain, "F distribution is defined for x >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return incomplete_beta(d1 * x / (d1 * x + d2), d1 / 2.0, d2 / 2.0);
}

double f_sf(double x, double d1, double d2) {
  if (!(d1 >= 1.0) || !(d2 >= 1.0)) throw Error(ErrorCode::Domain, "F distribution needs d1, d2 >= 1");
  if (std::isnan(x) || x < 0.0) throw Error(ErrorCode::Domain, "F distribution is defined for x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return incomplete_beta(d2 / (d2 + d1 * x), d2 / 2.0, d1 / 2.0);
}

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw Error(ErrorCode::Parameter, "ANOVA needs at least two groups");
  std::size_t total = 0;
  double sum = 0.0;
  double scale = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw Error(ErrorCode::Parameter, "group " + std::to_string(g) + " is empty");
    for (double v : groups[g]) {
      if (!std::isfinite(v)) throw Error(ErrorCode::Numeric, "ANOVA input contains non-finite values");
      sum += v;
      scale = std::max(scale, std::abs(v));
    }
    total += groups[g].size();
  }
  const std::size_t k = groups.size();
  if (total <= k) throw Error(ErrorCode::InsufficientData, "ANOVA needs more observations than groups");

  AnovaResult res;
  res.grand_mean = sum / static_cast<double>(total);
  for (const auto& g : groups) {
    double s = 0.0;
    for (double v : g) s += v;
    const double mean = s / static_cast<double>(g.size());
    res.group_means.push_back(mean);
    res.group_sizes.push_back(g.size());
    res.ss_between += static_cast<double>(g.size()) * (mean - res.grand_mean) * (mean - res.grand_mean);
    for (double v : g) res.ss_within += (v - mean) * (v - mean);
  }
  res.df_between = k - 1;
  res.df_within = total - k;

  // Sums of squares below rounding noise of the data count as zero.
  const double zero = 1e-24 * static_cast<double>(total) * std::max(1.0, scale * scale);
  const bool no_between = res.ss_between <= zero;
  const bool no_within = res.ss_within <= zero;
  if (no_between && no_within) throw Error(ErrorCode::UndefinedTest, "all values are identical");
  if (no_within) {
    res.f_stat = std::numeric_limits<double>::infinity();
    res.p_value = 0.0;
    res.degenerate = true;
    return res;
  }
  const double ms_between = res.ss_between / static_cast<double>(res.df_between);
  const double ms_within = res.ss_within / static_cast<double>(res.df_within);
  res.f_stat = no_between ? 0.0 : ms_between / ms_within;
  res.p_value = std::clamp(
      f_sf(res.f_stat, static_cast<double>(res.df_between), static_cast<double>(res.df_within)), 0.0, 1.0);
  return res;
}

std::vector<std::vector<double>> groups_from_labels(const std::vector<double>& values,
                                                    const std::vector<std::size_t>& labels,
                                                    const std::vector<std::size_t>& clusters) {
  if (values.size() != labels.size()) throw Error(ErrorCode::Dimension, "values and labels differ in length");
  std::vector<std::vector<double>> groups(clusters.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t g = 0; g < clusters.size(); ++g)
      if (labels[i] == clusters[g]) groups[g].push_back(values[i]);
  return groups;
}

std::optional<double> pearson(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::Dimension, "correlation inputs differ in length");
  if (x.size() == 0) return std::nullopt;
  const Vector dx = x.array() - x.mean();
  const Vector dy = y.array() - y.mean();
  const double sxx = dx.squaredNorm();
  const double syy = dy.squaredNorm();
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<CorrelationEntry> corr_pairs(const TableView& view) {
  if (view.features().size() < 2) throw Error(ErrorCode::InsufficientData, "correlations need at least two features");
  const Matrix X = view.matrix();
  const auto& names = view.features();
  std::vector<CorrelationEntry> out;
  for (std::size_t a = 0; a < names.size(); ++a) {
    for (std::size_t b = a + 1; b < names.size(); ++b) {
      CorrelationEntry e{names[a], names[b], 0.0, false};
      if (auto r = pearson(X.col(static_cast<Eigen::Index>(a)), X.col(static_cast<Eigen::Index>(b)))) {
        e.r = *r;
        e.defined = true;
      }
      out.push_back(std::move(e));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const CorrelationEntry& p, const CorrelationEntry& q) {
    if (p.defined != q.defined) return p.defined;
    if (p.defined && std::abs(p.r) != std::abs(q.r)) return std::abs(p.r) > std::abs(q.r);
    if (p.feature_a != q.feature_a) return p.feature_a < q.feature_a;
    return p.feature_b < q.feature_b;
  });
  return out;
}

std::vector<PointStats> point_stats(const TableView& view) {
  if (view.selected_count() == 0) throw Error(ErrorCode::InsufficientData, "no rows selected");
  const Matrix X = view.matrix();
  std::vector<PointStats> out;
  for (std::size_t j = 0; j < view.features().size(); ++j) {
    const ColumnSummary s = summarize(X.col(static_cast<Eigen::Index>(j)));
    out.push_back({view.features()[j], static_cast<std::size_t>(X.rows()), s.mean, s.std, s.min, s.max});
  }
  return out;
}

}  // namespace clusterscope
