#include "clusterscope/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "clusterscope/error.hpp"

namespace clusterscope {

const char* to_string(ClusterMethod m) noexcept {
  return m == ClusterMethod::KMeans ? "kmeans" : "agglomerative";
}

const char* to_string(Linkage l) noexcept {
  switch (l) {
    case Linkage::Single: return "single";
    case Linkage::Complete: return "complete";
    case Linkage::Average: return "average";
    case Linkage::Ward: return "ward";
  }
  return "?";
}

ClusterMethod parse_cluster_method(const std::string& s) {
  if (s == "kmeans" || s == "k-means") return ClusterMethod::KMeans;
  if (s == "agglomerative" || s == "agglo" || s == "hierarchical") return ClusterMethod::Agglomerative;
  throw Error(ErrorCode::Parameter, "unknown clustering method '" + s + "'");
}

Linkage parse_linkage(const std::string& s) {
  if (s == "single") return Linkage::Single;
  if (s == "complete") return Linkage::Complete;
  if (s == "average") return Linkage::Average;
  if (s == "ward") return Linkage::Ward;
  throw Error(ErrorCode::Parameter, "unknown linkage '" + s + "'");
}

std::vector<std::size_t> ClusteringModel::sizes() const {
  std::vector<std::size_t> out(k, 0);
  for (auto l : labels) ++out[l];
  return out;
}

namespace {

void check_stop(const std::stop_token& stop) {
  if (stop.stop_requested()) throw Error(ErrorCode::Cancelled, "clustering cancelled");
}

void validate_k(std::size_t k, Eigen::Index n) {
  if (k == 0) throw Error(ErrorCode::Parameter, "k must be positive");
  if (static_cast<Eigen::Index>(k) > n)
    throw Error(ErrorCode::Parameter, "k = " + std::to_string(k) + " exceeds the number of rows (" +
                                          std::to_string(n) + ")");
}

std::vector<std::size_t> order_by_size(const std::vector<std::size_t>& labels, std::size_t k) {
  std::vector<std::size_t> sizes(k, 0);
  for (auto l : labels) ++sizes[l];
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  return order;
}

// Renumbers labels by first appearance; returns old -> new.
std::vector<std::size_t> canonicalize(std::vector<std::size_t>& labels, std::size_t k) {
  constexpr auto unset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> remap(k, unset);
  std::size_t next = 0;
  for (auto& l : labels) {
    if (remap[l] == unset) remap[l] = next++;
    l = remap[l];
  }
  for (auto& r : remap)
    if (r == unset) r = next++;
  return remap;
}

double point_distance(const Matrix& X, Eigen::Index i, const Matrix& C, Eigen::Index j, DistanceMeasure m) {
  if (m == DistanceMeasure::Manhattan) return (X.row(i) - C.row(j)).cwiseAbs().sum();
  return (X.row(i) - C.row(j)).squaredNorm();
}

double median(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

void update_centroids(const Matrix& X, const std::vector<std::size_t>& labels, Matrix& C, DistanceMeasure m) {
  const Eigen::Index k = C.rows();
  if (m == DistanceMeasure::Euclidean) {
    C = cluster_means(X, labels, static_cast<std::size_t>(k));
    return;
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      std::vector<double> col;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (static_cast<Eigen::Index>(labels[i]) == c) col.push_back(X(static_cast<Eigen::Index>(i), j));
      if (!col.empty()) C(c, j) = median(col);
    }
  }
}

double objective(const Matrix& X, const std::vector<std::size_t>& labels, const Matrix& C, DistanceMeasure m) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total += point_distance(X, static_cast<Eigen::Index>(i), C, static_cast<Eigen::Index>(labels[i]), m);
  return total;
}

Matrix seed_plus_plus(const Matrix& X, std::size_t k, DistanceMeasure m, std::mt19937_64& rng) {
  const Eigen::Index n = X.rows();
  Matrix C(static_cast<Eigen::Index>(k), X.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  C.row(0) = X.row(pick(rng));
  Vector best = Vector::Constant(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double dist = point_distance(X, i, C, static_cast<Eigen::Index>(c - 1), m);
      if (m == DistanceMeasure::Manhattan) dist *= dist;
      best(i) = std::min(best(i), dist);
    }
    const double total = best.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= best(i);
        if (target < 0.0 && best(i) > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    C.row(static_cast<Eigen::Index>(c)) = X.row(chosen);
  }
  return C;
}

}  // namespace

Matrix cluster_means(const Matrix& X, const std::vector<std::size_t>& labels, std::size_t k) {
  if (static_cast<Eigen::Index>(labels.size()) != X.rows())
    throw Error(ErrorCode::Dimension, "label count does not match row count");
  Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(k), X.cols());
  std::vector<double> counts(k, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) throw Error(ErrorCode::Dimension, "label out of range");
    sums.row(static_cast<Eigen::Index>(labels[i])) += X.row(static_cast<Eigen::Index>(i));
    counts[labels[i]] += 1.0;
  }
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] > 0.0) sums.row(static_cast<Eigen::Index>(c)) /= counts[c];
  return sums;
}

double wcss(const Matrix& X, const std::vector<std::size_t>& labels, const Matrix& centroids) {
  if (static_cast<Eigen::Index>(labels.size()) != X.rows())
    throw Error(ErrorCode::Dimension, "label count does not match row count");
  if (centroids.cols() != X.cols()) throw Error(ErrorCode::Dimension, "centroid width does not match data");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<Eigen::Index>(labels[i]) >= centroids.rows())
      throw Error(ErrorCode::Dimension, "label out of range");
    total += (X.row(static_cast<Eigen::Index>(i)) - centroids.row(static_cast<Eigen::Index>(labels[i]))).squaredNorm();
  }
  return total;
}

ClusteringModel kmeans(const Matrix& X, const KMeansOptions& options) {
  const Eigen::Index n = X.rows();
  validate_k(options.k, n);
  if (!X.allFinite()) throw Error(ErrorCode::Numeric, "k-means input contains non-finite values");
  if (options.distance != DistanceMeasure::Euclidean && options.distance != DistanceMeasure::Manhattan)
    throw Error(ErrorCode::Parameter, "k-means supports euclidean and manhattan distances only");
  const std::size_t k = options.k;
  const DistanceMeasure m = options.distance;

  std::mt19937_64 rng(options.seed);
  Matrix C = seed_plus_plus(X, k, m, rng);
  constexpr auto unassigned = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> labels(static_cast<std::size_t>(n), unassigned);
  std::size_t iteration = 0;

  auto report = [&](double obj) {
    if (options.on_iteration) options.on_iteration(iteration, obj);
  };

  for (; iteration < options.max_iter; ++iteration) {
    check_stop(options.stop);
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& label = labels[static_cast<std::size_t>(i)];
      std::size_t best = label;
      double best_d = label == unassigned ? std::numeric_limits<double>::infinity()
                                          : point_distance(X, i, C, static_cast<Eigen::Index>(label), m);
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = point_distance(X, i, C, static_cast<Eigen::Index>(c), m);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (best != label) {
        label = best;
        changed = true;
      }
    }
    if (!changed) break;

    // Empty clusters take the point farthest from its own centroid.
    std::vector<std::size_t> sizes(k, 0);
    for (auto l : labels) ++sizes[l];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto l = labels[static_cast<std::size_t>(i)];
        if (sizes[l] < 2) continue;
        const double dist = point_distance(X, i, C, static_cast<Eigen::Index>(l), m);
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      --sizes[labels[static_cast<std::size_t>(far)]];
      labels[static_cast<std::size_t>(far)] = c;
      sizes[c] = 1;
      C.row(static_cast<Eigen::Index>(c)) = X.row(far);
    }

    update_centroids(X, labels, C, m);
    report(objective(X, labels, C, m));
  }

  if (m == DistanceMeasure::Euclidean && k > 1) {
    std::vector<double> sizes(k, 0.0);
    for (auto l : labels) sizes[l] += 1.0;
    const double eps = 1e-12 * std::max(1.0, objective(X, labels, C, m));
    for (std::size_t pass = 0; pass < options.max_iter; ++pass) {
      check_stop(options.stop);
      bool moved = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t a = labels[static_cast<std::size_t>(i)];
        if (sizes[a] < 2.0) continue;
        const double cost_out = sizes[a] / (sizes[a] - 1.0) * point_distance(X, i, C, static_cast<Eigen::Index>(a), m);
        std::size_t target = a;
        double best_delta = -eps;
        for (std::size_t b = 0; b < k; ++b) {
          if (b == a) continue;
          const double delta =
              sizes[b] / (sizes[b] + 1.0) * point_distance(X, i, C, static_cast<Eigen::Index>(b), m) - cost_out;
          if (delta < best_delta) {
            best_delta = delta;
            target = b;
          }
        }
        if (target == a) continue;
        const auto ia = static_cast<Eigen::Index>(a);
        const auto ib = static_cast<Eigen::Index>(target);
        C.row(ia) = (C.row(ia) * sizes[a] - X.row(i)) / (sizes[a] - 1.0);
        C.row(ib) = (C.row(ib) * sizes[target] + X.row(i)) / (sizes[target] + 1.0);
        sizes[a] -= 1.0;
        sizes[target] += 1.0;
        labels[static_cast<std::size_t>(i)] = target;
        moved = true;
      }
      if (!moved) break;
      C = cluster_means(X, labels, k);
      ++iteration;
      report(objective(X, labels, C, m));
    }
  }

  update_centroids(X, labels, C, m);
  const auto remap = canonicalize(labels, k);
  Matrix ordered(C.rows(), C.cols());
  for (std::size_t c = 0; c < k; ++c) ordered.row(static_cast<Eigen::Index>(remap[c])) = C.row(static_cast<Eigen::Index>(c));

  ClusteringModel model;
  model.method = ClusterMethod::KMeans;
  model.k = k;
  model.distance = m;
  model.seed = options.seed;
  model.labels = std::move(labels);
  model.centroids = std::move(ordered);
  model.order = order_by_size(model.labels, k);
  model.iterations = iteration;
  return model;
}

std::vector<std::size_t> cut_dendrogram(const std::vector<Merge>& merges, std::size_t n, std::size_t k) {
  if (k == 0 || k > n) throw Error(ErrorCode::Parameter, "cut size out of range");
  if (n - k > merges.size())
    throw Error(ErrorCode::Validation, "dendrogram has too few merges for this cut");
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  // Representative point of every cluster id seen so far.
  std::vector<std::size_t> rep(n);
  std::iota(rep.begin(), rep.end(), 0);
  for (std::size_t s = 0; s < n - k; ++s) {
    const Merge& mg = merges[s];
    if (mg.a >= rep.size() || mg.b >= rep.size()) throw Error(ErrorCode::Validation, "dendrogram references unknown cluster");
    const std::size_t ra = find(rep[mg.a]);
    const std::size_t rb = find(rep[mg.b]);
    parent[std::max(ra, rb)] = std::min(ra, rb);
    rep.push_back(std::min(ra, rb));
  }
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = find(i);
  // Roots are the minimum point index of each component; renumber them.
  std::vector<std::size_t> remap(n, std::numeric_limits<std::size_t>::max());
  std::size_t next = 0;
  for (auto& l : labels) {
    if (remap[l] == std::numeric_limits<std::size_t>::max()) remap[l] = next++;
    l = remap[l];
  }
  return labels;
}

ClusteringModel agglomerative(const Matrix& X, const AgglomerativeOptions& options) {
  const Eigen::Index rows = X.rows();
  validate_k(options.k, rows);
  if (options.linkage == Linkage::Ward && options.distance != DistanceMeasure::Euclidean)
    throw Error(ErrorCode::Parameter, "ward linkage requires the euclidean distance");
  const auto n = static_cast<std::size_t>(rows);
  Matrix D = pairwise_distances(X, options.distance);

  std::vector<bool> active(n, true);
  std::vector<double> size(n, 1.0);
  std::vector<std::size_t> id(n);
  std::iota(id.begin(), id.end(), 0);
  std::vector<std::size_t> nn(n, 0);
  std::vector<double> nn_d(n, std::numeric_limits<double>::infinity());

  auto dist = [&](std::size_t i, std::size_t j) { return D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); };
  auto refresh = [&](std::size_t i) {
    nn_d[i] = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !active[j]) continue;
      if (dist(i, j) < nn_d[i]) {
        nn_d[i] = dist(i, j);
        nn[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i < n; ++i) refresh(i);

  std::vector<Merge> merges;
  merges.reserve(n > 0 ? n - 1 : 0);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    check_stop(options.stop);
    // Lexicographically smallest closest pair.
    std::size_t i = n;
    for (std::size_t c = 0; c < n; ++c)
      if (active[c] && (i == n || nn_d[c] < nn_d[i])) i = c;
    std::size_t j = nn[i];
    if (j < i) std::swap(i, j);
    const double dij = dist(i, j);
    merges.push_back({std::min(id[i], id[j]), std::max(id[i], id[j]), dij});

    const double ni = size[i], nj = size[j];
    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c] || c == i || c == j) continue;
      const double dic = dist(i, c), djc = dist(j, c);
      double v = 0.0;
      switch (options.linkage) {
        case Linkage::Single: v = std::min(dic, djc); break;
        case Linkage::Complete: v = std::max(dic, djc); break;
        case Linkage::Average: v = (ni * dic + nj * djc) / (ni + nj); break;
        case Linkage::Ward: {
          const double nc = size[c];
          const double sq = ((ni + nc) * dic * dic + (nj + nc) * djc * djc - nc * dij * dij) / (ni + nj + nc);
          v = std::sqrt(std::max(0.0, sq));
          break;
        }
      }
      D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
      D(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = v;
    }
    active[j] = false;
    size[i] = ni + nj;
    id[i] = n + step;

    refresh(i);
    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c] || c == i) continue;
      if (nn[c] == i || nn[c] == j) {
        refresh(c);
      } else {
        const double v = dist(c, i);
        if (v < nn_d[c] || (v == nn_d[c] && i < nn[c])) {
          nn_d[c] = v;
          nn[c] = i;
        }
      }
    }
  }

  ClusteringModel model;
  model.method = ClusterMethod::Agglomerative;
  model.k = options.k;
  model.distance = options.distance;
  model.linkage = options.linkage;
  model.labels = cut_dendrogram(merges, n, options.k);
  model.merges = std::move(merges);
  model.order = order_by_size(model.labels, options.k);
  return model;
}

ClusterProfile cluster_profile(const ClusteringModel& model, const TableView& view) {
  if (model.labels.size() != view.selected_count())
    throw Error(ErrorCode::Dimension, "clustering has " + std::to_string(model.labels.size()) +
                                          " labels but the view selects " + std::to_string(view.selected_count()) +
                                          " rows");
  if (model.centroids.size() > 0 && model.centroids.cols() != static_cast<Eigen::Index>(view.features().size()))
    throw Error(ErrorCode::Dimension, "clustering was fitted on a different feature set");
  const Matrix normalized = normalize(view, NormalizeMethod::MinMax);
  const Matrix means = cluster_means(normalized, model.labels, model.k);
  const auto sizes = model.sizes();

  ClusterProfile profile;
  profile.features = view.features();
  profile.values.resize(normalized.cols(), static_cast<Eigen::Index>(model.k));
  for (std::size_t c = 0; c < model.order.size(); ++c) {
    const std::size_t cid = model.order[c];
    profile.values.col(static_cast<Eigen::Index>(c)) = means.row(static_cast<Eigen::Index>(cid)).transpose();
    profile.cluster_ids.push_back(cid);
    profile.sizes.push_back(sizes[cid]);
  }
  return profile;
}

}  // namespace clusterscope
