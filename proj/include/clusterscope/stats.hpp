#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clusterscope/data_table.hpp"

namespace clusterscope {

struct AnovaResult {
  double f_stat = 0.0;  // +inf when the within-group variation is zero
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  double p_value = 1.0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  std::vector<double> group_means;
  std::vector<std::size_t> group_sizes;
  double grand_mean = 0.0;
  bool degenerate = false;
};

// One-way ANOVA. Throws Parameter for fewer than two groups or an empty group,
// InsufficientData when N <= groups, UndefinedTest when every value is equal.
AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

// Values of `values` grouped by the cluster ids in `clusters`, in that order.
std::vector<std::vector<double>> groups_from_labels(const std::vector<double>& values,
                                                    const std::vector<std::size_t>& labels,
                                                    const std::vector<std::size_t>& clusters);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double x, double a, double b);

// F distribution CDF and survival function.
double f_cdf(double x, double d1, double d2);
double f_sf(double x, double d1, double d2);

struct CorrelationEntry {
  std::string feature_a;
  std::string feature_b;
  double r = 0.0;
  bool defined = true;  // false when either feature has zero variance
};

std::optional<double> pearson(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y);

// All unordered feature pairs of the view sorted by descending |r|; ties by
// feature names, undefined pairs last.
std::vector<CorrelationEntry> corr_pairs(const TableView& view);

struct PointStats {
  std::string feature;
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

std::vector<PointStats> point_stats(const TableView& view);

}  // namespace clusterscope
