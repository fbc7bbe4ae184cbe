#include "clusterscope/data_table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "clusterscope/error.hpp"

namespace clusterscope {

ColumnSummary summarize(const Eigen::Ref<const Vector>& values) {
  ColumnSummary s;
  const auto n = values.size();
  if (n == 0) return s;
  s.mean = values.mean();
  s.std = std::sqrt((values.array() - s.mean).square().sum() / static_cast<double>(n));
  s.min = values.minCoeff();
  s.max = values.maxCoeff();
  return s;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// DataTable

DataTable::DataTable(std::string id_name, bool ids_synthesized, std::vector<std::string> row_ids,
                     std::vector<FeatureMeta> columns, Matrix numeric,
                     std::vector<std::vector<std::string>> categorical)
    : id_name_(std::move(id_name)),
      ids_synthesized_(ids_synthesized),
      row_ids_(std::move(row_ids)),
      columns_(std::move(columns)),
      numeric_(std::move(numeric)),
      categorical_(std::move(categorical)) {
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (columns_[c].kind == FeatureKind::Numeric) {
      storage_index_.push_back(numeric_columns_.size());
      numeric_columns_.push_back(c);
    } else {
      storage_index_.push_back(categorical_columns_.size());
      categorical_columns_.push_back(c);
    }
  }
  const auto n = static_cast<Eigen::Index>(row_ids_.size());
  if (numeric_.rows() != n || numeric_.cols() != static_cast<Eigen::Index>(numeric_columns_.size()))
    throw Error(ErrorCode::Structural, "numeric matrix shape does not match table metadata");
  if (categorical_.size() != categorical_columns_.size())
    throw Error(ErrorCode::Structural, "categorical column count does not match table metadata");
  for (const auto& col : categorical_)
    if (col.size() != row_ids_.size())
      throw Error(ErrorCode::Structural, "categorical column length does not match row count");
}

std::optional<std::size_t> DataTable::row_index(std::string_view id) const {
  for (std::size_t i = 0; i < row_ids_.size(); ++i)
    if (row_ids_[i] == id) return i;
  return std::nullopt;
}

std::vector<std::string> DataTable::numeric_names() const {
  std::vector<std::string> out;
  out.reserve(numeric_columns_.size());
  for (auto c : numeric_columns_) out.push_back(columns_[c].name);
  return out;
}

std::optional<std::size_t> DataTable::numeric_index(std::string_view name) const {
  for (std::size_t j = 0; j < numeric_columns_.size(); ++j)
    if (columns_[numeric_columns_[j]].name == name) return j;
  return std::nullopt;
}

std::vector<std::string> DataTable::categorical_names() const {
  std::vector<std::string> out;
  for (auto c : categorical_columns_) out.push_back(columns_[c].name);
  return out;
}

std::optional<std::size_t> DataTable::categorical_index(std::string_view name) const {
  for (std::size_t j = 0; j < categorical_columns_.size(); ++j)
    if (columns_[categorical_columns_[j]].name == name) return j;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// TableView

TableView::TableView(TablePtr base)
    : TableView(base, RowMask(base->rows(), true), base->numeric_names()) {}

TableView::TableView(TablePtr base, RowMask mask, std::vector<std::string> features)
    : base_(std::move(base)), mask_(std::move(mask)), features_(std::move(features)) {
  if (mask_.size() != base_->rows())
    throw Error(ErrorCode::Dimension, "row mask length " + std::to_string(mask_.size()) +
                                          " does not match table rows " + std::to_string(base_->rows()));
  std::vector<std::string> unknown;
  std::unordered_set<std::string> seen;
  for (const auto& f : features_) {
    if (!seen.insert(f).second) throw Error(ErrorCode::Naming, "feature listed twice: " + f);
    if (auto j = base_->numeric_index(f))
      feature_columns_.push_back(*j);
    else
      unknown.push_back(f);
  }
  if (!unknown.empty()) throw NameResolutionError(std::move(unknown));
}

TableView TableView::with_mask(RowMask mask) const { return TableView(base_, std::move(mask), features_); }

TableView TableView::with_features(std::vector<std::string> features) const {
  return TableView(base_, mask_, std::move(features));
}

std::vector<std::size_t> TableView::selected_rows() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask_.size(); ++i)
    if (mask_[i]) out.push_back(i);
  return out;
}

std::size_t TableView::selected_count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), true));
}

Matrix TableView::matrix() const {
  const auto rows = selected_rows();
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_columns_.size()));
  const Matrix& v = base_->values();
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < feature_columns_.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          v(static_cast<Eigen::Index>(rows[r]), static_cast<Eigen::Index>(feature_columns_[c]));
  return out;
}

void TableView::require_nonempty() const {
  if (selected_count() == 0) throw Error(ErrorCode::InsufficientData, "no rows selected");
  if (features_.empty()) throw Error(ErrorCode::InsufficientData, "no features selected");
}

// ---------------------------------------------------------------------------
// CSV

namespace {

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) || cp > 0x10FFFF ||
        (cp >= 0xD800 && cp <= 0xDFFF))
      return false;
    i += len;
  }
  return true;
}

struct Record {
  std::size_t line;  // 1-based line where the record starts
  std::vector<std::string> cells;
  std::vector<bool> quoted;
};

std::vector<Record> split_records(std::string_view in, char delim) {
  std::vector<Record> out;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < in.size()) {
    Record rec{line, {}, {}};
    std::string cell;
    bool quoted = false;
    bool any = false;
    for (;;) {
      if (i < in.size() && in[i] == '"' && cell.empty() && !quoted) {
        quoted = true;
        any = true;
        ++i;
        for (;;) {
          if (i >= in.size()) throw Error(ErrorCode::Structural, "unterminated quoted field starting on line " + std::to_string(rec.line));
          const char c = in[i++];
          if (c == '"') {
            if (i < in.size() && in[i] == '"') {
              cell.push_back('"');
              ++i;
              continue;
            }
            break;
          }
          if (c == '\n') ++line;
          cell.push_back(c);
        }
      }
      if (i >= in.size() || in[i] == '\n' || (in[i] == '\r' && i + 1 < in.size() && in[i + 1] == '\n') ||
          (in[i] == '\r' && i + 1 == in.size())) {
        rec.cells.push_back(std::move(cell));
        rec.quoted.push_back(quoted);
        if (i < in.size()) {
          i += in[i] == '\r' ? 2 : 1;
          if (i > in.size()) i = in.size();
        }
        ++line;
        break;
      }
      if (in[i] == delim) {
        rec.cells.push_back(std::move(cell));
        rec.quoted.push_back(quoted);
        cell.clear();
        quoted = false;
        any = true;
        ++i;
        continue;
      }
      if (quoted)
        throw Error(ErrorCode::Structural, "unexpected character after closing quote on line " + std::to_string(line));
      cell.push_back(in[i++]);
      any = true;
    }
    const bool blank = !any && rec.cells.size() == 1 && rec.cells[0].empty();
    if (!blank) out.push_back(std::move(rec));
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_decimal(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::string_view body = s;
  if (body.front() == '+') body.remove_prefix(1);
  std::string_view digits = body;
  if (!digits.empty() && digits.front() == '-') digits.remove_prefix(1);
  if (digits.empty() || !(std::isdigit(static_cast<unsigned char>(digits.front())) || digits.front() == '.'))
    return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(body.data(), body.data() + body.size(), v, std::chars_format::general);
  if (res.ec != std::errc() || res.ptr != body.data() + body.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

}  // namespace

DataTable load_csv(std::string_view source, const CsvOptions& options) {
  if (source.size() >= 3 && source.substr(0, 3) == "\xEF\xBB\xBF") source.remove_prefix(3);
  if (!valid_utf8(source)) throw Error(ErrorCode::Structural, "input is not valid UTF-8");

  auto records = split_records(source, options.delimiter);
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no rows in input");

  const std::size_t width = records.front().cells.size();
  for (const auto& r : records)
    if (r.cells.size() != width)
      throw Error(ErrorCode::Structural, "line " + std::to_string(r.line) + " has " + std::to_string(r.cells.size()) +
                                             " fields, expected " + std::to_string(width));

  std::vector<std::string> names;
  std::size_t first_data = 0;
  if (options.header_row) {
    for (const auto& c : records.front().cells) names.emplace_back(trim(c));
    first_data = 1;
  } else {
    for (std::size_t c = 0; c < width; ++c) names.push_back("col" + std::to_string(c));
  }
  const std::size_t n = records.size() - first_data;
  if (n == 0) throw Error(ErrorCode::EmptyInput, "no data rows in input");

  {
    std::unordered_set<std::string> seen;
    for (const auto& name : names)
      if (!seen.insert(name).second) throw Error(ErrorCode::Naming, "duplicate column name '" + name + "'");
  }

  auto cell = [&](std::size_t row, std::size_t col) -> const std::string& {
    return records[first_data + row].cells[col];
  };

  // A column is numeric iff it has at least one non-empty cell and every
  // non-empty cell parses as a decimal number.
  std::vector<bool> numeric(width, false);
  for (std::size_t c = 0; c < width; ++c) {
    bool any = false, all = true;
    for (std::size_t r = 0; r < n && all; ++r) {
      if (trim(cell(r, c)).empty()) continue;
      any = true;
      all = parse_decimal(cell(r, c)).has_value();
    }
    numeric[c] = any && all;
  }

  std::optional<std::size_t> id_col;
  if (options.id_column) {
    for (std::size_t c = 0; c < width; ++c)
      if (names[c] == *options.id_column) id_col = c;
    if (!id_col) throw NameResolutionError({*options.id_column});
  } else if (width > 0 && !numeric[0]) {
    std::unordered_set<std::string> seen;
    bool unique = true;
    for (std::size_t r = 0; r < n && unique; ++r) unique = seen.insert(cell(r, 0)).second;
    if (unique) id_col = 0;
  }

  std::vector<std::string> row_ids;
  std::string id_name;
  if (id_col) {
    id_name = names[*id_col];
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < n; ++r) {
      if (!seen.insert(cell(r, *id_col)).second)
        throw Error(ErrorCode::Naming, "duplicate row id '" + cell(r, *id_col) + "' in column '" + id_name + "'");
      row_ids.push_back(cell(r, *id_col));
    }
  } else {
    id_name = "id";
    while (std::find(names.begin(), names.end(), id_name) != names.end()) id_name = "_" + id_name;
    for (std::size_t r = 0; r < n; ++r) row_ids.push_back(std::to_string(r));
  }

  std::vector<FeatureMeta> columns;
  std::vector<std::size_t> numeric_src;
  std::vector<std::vector<std::string>> categorical;
  for (std::size_t c = 0; c < width; ++c) {
    if (id_col && c == *id_col) continue;
    FeatureMeta meta;
    meta.name = names[c];
    if (numeric[c]) {
      meta.kind = FeatureKind::Numeric;
      numeric_src.push_back(c);
    } else {
      meta.kind = FeatureKind::Categorical;
      std::vector<std::string> col;
      col.reserve(n);
      for (std::size_t r = 0; r < n; ++r) {
        if (trim(cell(r, c)).empty()) ++meta.missing_count;
        col.push_back(cell(r, c));
      }
      categorical.push_back(std::move(col));
    }
    columns.push_back(std::move(meta));
  }

  Matrix values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(numeric_src.size()));
  std::size_t nj = 0;
  for (auto& meta : columns) {
    if (meta.kind != FeatureKind::Numeric) continue;
    const std::size_t c = numeric_src[nj];
    const auto j = static_cast<Eigen::Index>(nj);
    std::vector<std::size_t> missing;
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (auto v = parse_decimal(cell(r, c))) {
        values(static_cast<Eigen::Index>(r), j) = *v;
        sum += *v;
      } else {
        missing.push_back(r);
      }
    }
    const double fill = sum / static_cast<double>(n - missing.size());
    for (auto r : missing) values(static_cast<Eigen::Index>(r), j) = fill;
    meta.missing_count = missing.size();
    const ColumnSummary s = summarize(values.col(j));
    meta.mean = s.mean;
    meta.std = s.std;
    meta.min = s.min;
    meta.max = s.max;
    ++nj;
  }

  return DataTable(std::move(id_name), !id_col.has_value(), std::move(row_ids), std::move(columns),
                   std::move(values), std::move(categorical));
}

DataTable load_csv_file(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Validation, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_csv(ss.str(), options);
}

RowMask keyword_filter(const DataTable& table, std::string_view query) {
  const std::size_t n = table.rows();
  if (query.empty()) return RowMask(n, true);
  const std::string q = to_lower(query);
  auto contains = [&](std::string_view s) { return to_lower(s).find(q) != std::string::npos; };

  for (const auto& col : table.columns())
    if (contains(col.name)) return RowMask(n, true);
  if (contains(table.id_name())) return RowMask(n, true);

  RowMask mask(n, false);
  const Matrix& v = table.values();
  const auto cats = table.categorical_names().size();
  for (std::size_t i = 0; i < n; ++i) {
    bool hit = contains(table.row_ids()[i]);
    for (Eigen::Index j = 0; !hit && j < v.cols(); ++j) hit = contains(format_double(v(static_cast<Eigen::Index>(i), j)));
    for (std::size_t j = 0; !hit && j < cats; ++j) hit = contains(table.categorical_values(j)[i]);
    mask[i] = hit;
  }
  return mask;
}

RowMask apply_filter(const DataTable& table, const filter::FilterExpr& expr) {
  std::vector<std::string> unknown;
  for (const auto& name : expr.identifiers())
    if (!table.numeric_index(name) && !table.categorical_index(name)) unknown.push_back(name);
  if (!unknown.empty()) throw NameResolutionError(std::move(unknown));

  RowMask mask(table.rows(), false);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const filter::RowLookup lookup = [&](std::string_view name) -> std::optional<filter::Value> {
      if (auto j = table.numeric_index(name))
        return table.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*j));
      if (auto j = table.categorical_index(name)) return table.categorical_values(*j)[i];
      return std::nullopt;
    };
    mask[i] = filter::eval(expr, lookup);
  }
  return mask;
}

Matrix normalize(const Matrix& values, NormalizeMethod method) {
  Matrix out(values.rows(), values.cols());
  if (values.rows() == 0) return out;
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const ColumnSummary s = summarize(values.col(j));
    if (method == NormalizeMethod::MinMax) {
      const double range = s.max - s.min;
      if (range > 0.0)
        out.col(j) = ((values.col(j).array() - s.min) / range).cwiseMax(0.0).cwiseMin(1.0);
      else
        out.col(j).setConstant(0.5);
    } else {
      if (s.std > 0.0)
        out.col(j) = (values.col(j).array() - s.mean) / s.std;
      else
        out.col(j).setZero();
    }
  }
  return out;
}

Matrix normalize(const TableView& view, NormalizeMethod method) {
  if (view.selected_count() == 0) throw Error(ErrorCode::InsufficientData, "no rows selected");
  return normalize(view.matrix(), method);
}

namespace {

std::string csv_field(std::string_view s, char delim) {
  const bool needs = s.find_first_of(std::string{delim, '"', '\r', '\n'}) != std::string_view::npos ||
                     (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.back() == ' ' || s.back() == '\t'));
  if (!needs) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string export_csv(const TableView& view, char delimiter) {
  const DataTable& t = view.base();
  std::vector<std::size_t> cols;  // indices into t.columns()
  for (std::size_t c = 0; c < t.columns().size(); ++c) {
    const auto& meta = t.columns()[c];
    if (meta.kind == FeatureKind::Categorical ||
        std::find(view.features().begin(), view.features().end(), meta.name) != view.features().end())
      cols.push_back(c);
  }

  std::string out = csv_field(t.id_name(), delimiter);
  for (auto c : cols) {
    out.push_back(delimiter);
    out += csv_field(t.columns()[c].name, delimiter);
  }
  out += "\r\n";

  for (auto r : view.selected_rows()) {
    out += csv_field(t.row_ids()[r], delimiter);
    for (auto c : cols) {
      out.push_back(delimiter);
      const auto k = t.storage_index(c);
      if (t.columns()[c].kind == FeatureKind::Numeric)
        out += format_double(t.values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)));
      else
        out += csv_field(t.categorical_values(k)[r], delimiter);
    }
    out += "\r\n";
  }
  return out;
}

}  // namespace clusterscope
