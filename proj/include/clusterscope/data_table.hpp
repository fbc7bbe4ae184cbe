#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clusterscope/filter.hpp"
#include "clusterscope/types.hpp"

namespace clusterscope {

enum class FeatureKind { Numeric, Categorical };

// Per-column summary. Statistics use the population convention (divisor n)
// and are only meaningful for numeric columns.
struct FeatureMeta {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t missing_count = 0;
};

struct ColumnSummary {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Two-pass population summary. `values` must be non-empty.
ColumnSummary summarize(const Eigen::Ref<const Vector>& values);

using RowMask = std::vector<bool>;

// Immutable rectangular dataset. Numeric columns live in a dense n x d matrix;
// categorical columns are kept as strings and excluded from numeric math.
class DataTable {
 public:
  DataTable(std::string id_name, bool ids_synthesized, std::vector<std::string> row_ids,
            std::vector<FeatureMeta> columns, Matrix numeric,
            std::vector<std::vector<std::string>> categorical);

  std::size_t rows() const noexcept { return row_ids_.size(); }
  std::size_t numeric_count() const noexcept { return numeric_columns_.size(); }

  const std::string& id_name() const noexcept { return id_name_; }
  bool ids_synthesized() const noexcept { return ids_synthesized_; }
  const std::vector<std::string>& row_ids() const noexcept { return row_ids_; }
  std::optional<std::size_t> row_index(std::string_view id) const;

  // All non-id columns in file order.
  const std::vector<FeatureMeta>& columns() const noexcept { return columns_; }

  std::vector<std::string> numeric_names() const;
  const FeatureMeta& numeric_meta(std::size_t j) const { return columns_[numeric_columns_[j]]; }
  std::optional<std::size_t> numeric_index(std::string_view name) const;
  const Matrix& values() const noexcept { return numeric_; }

  std::vector<std::string> categorical_names() const;
  std::optional<std::size_t> categorical_index(std::string_view name) const;
  const std::vector<std::string>& categorical_values(std::size_t j) const { return categorical_[j]; }

  // Position of column `c` (an index into columns()) inside the numeric matrix
  // or the categorical list, depending on its kind.
  std::size_t storage_index(std::size_t c) const { return storage_index_[c]; }

 private:
  std::string id_name_;
  bool ids_synthesized_;
  std::vector<std::string> row_ids_;
  std::vector<FeatureMeta> columns_;
  Matrix numeric_;
  std::vector<std::vector<std::string>> categorical_;
  std::vector<std::size_t> numeric_columns_;
  std::vector<std::size_t> categorical_columns_;
  std::vector<std::size_t> storage_index_;
};

using TablePtr = std::shared_ptr<const DataTable>;

// A row mask plus an ordered numeric feature subset over a shared table.
class TableView {
 public:
  explicit TableView(TablePtr base);
  TableView(TablePtr base, RowMask mask, std::vector<std::string> features);

  const DataTable& base() const noexcept { return *base_; }
  const TablePtr& base_ptr() const noexcept { return base_; }
  const RowMask& row_mask() const noexcept { return mask_; }
  const std::vector<std::string>& features() const noexcept { return features_; }
  const std::vector<std::size_t>& feature_columns() const noexcept { return feature_columns_; }

  TableView with_mask(RowMask mask) const;
  TableView with_features(std::vector<std::string> features) const;

  std::vector<std::size_t> selected_rows() const;
  std::size_t selected_count() const;

  // Selected rows x selected features.
  Matrix matrix() const;

  // Throws InsufficientData unless at least one row and one feature remain.
  void require_nonempty() const;

 private:
  TablePtr base_;
  RowMask mask_;
  std::vector<std::string> features_;
  std::vector<std::size_t> feature_columns_;
};

struct CsvOptions {
  char delimiter = ',';
  bool header_row = true;
  std::optional<std::string> id_column;
};

DataTable load_csv(std::string_view source, const CsvOptions& options = {});
DataTable load_csv_file(const std::string& path, const CsvOptions& options = {});

RowMask keyword_filter(const DataTable& table, std::string_view query);
RowMask apply_filter(const DataTable& table, const filter::FilterExpr& expr);

enum class NormalizeMethod { MinMax, ZScore };

Matrix normalize(const TableView& view, NormalizeMethod method);
// Column-wise normalization of an arbitrary matrix with the same rules.
Matrix normalize(const Matrix& values, NormalizeMethod method);

std::string export_csv(const TableView& view, char delimiter = ',');

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace clusterscope
