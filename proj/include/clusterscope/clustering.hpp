#pragma once

#include <cstdint>
#include <functional>
#include <stop_token>
#include <string>
#include <vector>

#include "clusterscope/data_table.hpp"
#include "clusterscope/dimred.hpp"
#include "clusterscope/types.hpp"

namespace clusterscope {

enum class ClusterMethod { KMeans, Agglomerative };
enum class Linkage { Single, Complete, Average, Ward };

const char* to_string(ClusterMethod m) noexcept;
const char* to_string(Linkage l) noexcept;
ClusterMethod parse_cluster_method(const std::string& s);
Linkage parse_linkage(const std::string& s);

struct Merge {
  std::size_t a;  // cluster ids: 0..n-1 are points, n+i is the cluster built by merge i
  std::size_t b;
  double height;
};

// Labels are canonical: cluster ids are assigned in order of first appearance
// along the rows.
struct ClusteringModel {
  ClusterMethod method = ClusterMethod::KMeans;
  std::size_t k = 1;
  DistanceMeasure distance = DistanceMeasure::Euclidean;
  Linkage linkage = Linkage::Ward;
  std::uint64_t seed = 0;
  std::vector<std::size_t> labels;
  Matrix centroids;  // k x d, k-means only
  std::vector<Merge> merges;  // full dendrogram, agglomerative only
  std::vector<std::size_t> order;  // cluster ids by descending size, ties by lowest id
  std::size_t iterations = 0;

  std::vector<std::size_t> sizes() const;
};

struct KMeansOptions {
  std::size_t k = 2;
  DistanceMeasure distance = DistanceMeasure::Euclidean;
  std::uint64_t seed = 0;
  std::size_t max_iter = 300;
  // Called with the objective after every update step (WCSS for euclidean,
  // sum of L1 distances for manhattan).
  std::function<void(std::size_t iteration, double objective)> on_iteration;
  std::stop_token stop;
};

// k-means++ seeding, Lloyd iterations, then (euclidean) single-point
// Hartigan moves until no move lowers the WCSS.
ClusteringModel kmeans(const Matrix& X, const KMeansOptions& options);

struct AgglomerativeOptions {
  std::size_t k = 2;
  DistanceMeasure distance = DistanceMeasure::Euclidean;
  Linkage linkage = Linkage::Ward;
  std::stop_token stop;
};

// Lance-Williams merging over the full distance matrix, cut at k clusters.
ClusteringModel agglomerative(const Matrix& X, const AgglomerativeOptions& options);

// Labels after applying the first n - k merges of a dendrogram over n points.
std::vector<std::size_t> cut_dendrogram(const std::vector<Merge>& merges, std::size_t n, std::size_t k);

double wcss(const Matrix& X, const std::vector<std::size_t>& labels, const Matrix& centroids);

// Per-cluster means of X's rows.
Matrix cluster_means(const Matrix& X, const std::vector<std::size_t>& labels, std::size_t k);

// Feature rows x cluster columns; columns follow model.order.
struct ClusterProfile {
  Matrix values;
  std::vector<std::string> features;
  std::vector<std::size_t> cluster_ids;
  std::vector<std::size_t> sizes;
};

ClusterProfile cluster_profile(const ClusteringModel& model, const TableView& view);

}  // namespace clusterscope
