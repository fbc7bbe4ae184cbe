#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "clusterscope/data_table.hpp"
#include "clusterscope/error.hpp"

using namespace clusterscope;

namespace {

TablePtr table_of(std::string_view csv, const CsvOptions& opts = {}) {
  return std::make_shared<const DataTable>(load_csv(csv, opts));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Validation;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("loads a small table with an id column") {
  const auto t = table_of("id,a,b\nr1,1,2\nr2,3,4");
  CHECK(t->rows() == 2);
  CHECK(t->numeric_count() == 2);
  CHECK(t->id_name() == "id");
  CHECK_FALSE(t->ids_synthesized());
  CHECK(t->row_ids() == std::vector<std::string>{"r1", "r2"});
  CHECK(t->numeric_meta(0).mean == doctest::Approx(2.0));
  CHECK(t->row_index("r2") == 1u);
  CHECK_FALSE(t->row_index("r3").has_value());
}

TEST_CASE("non-numeric column becomes categorical") {
  const auto t = table_of("id,a\nr1,x\nr2,y");
  CHECK(t->numeric_count() == 0);
  REQUIRE(t->categorical_names() == std::vector<std::string>{"a"});
  CHECK(t->columns()[0].kind == FeatureKind::Categorical);
}

TEST_CASE("population summary") {
  const auto t = table_of("id,v\na,2\nb,4\nc,6");
  const auto& m = t->numeric_meta(0);
  CHECK(m.mean == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(m.std == doctest::Approx(std::sqrt(8.0 / 3.0)).epsilon(1e-12));
  CHECK(m.std == doctest::Approx(1.632993).epsilon(1e-6));
  CHECK(m.min == 2.0);
  CHECK(m.max == 6.0);
}

TEST_CASE("synthesized ids, quoting, BOM, blank lines and missing values") {
  const auto t = table_of("\xEF\xBB\xBF" "a,\" b \",name\n1,2,\"x, \"\"y\"\"\"\n\n3,,z\r\n5,8,w\n");
  CHECK(t->ids_synthesized());
  CHECK(t->id_name() == "id");
  CHECK(t->row_ids() == std::vector<std::string>{"0", "1", "2"});
  CHECK(t->numeric_names() == std::vector<std::string>{"a", "b"});
  CHECK(t->categorical_values(0)[0] == "x, \"y\"");
  CHECK(t->columns()[1].missing_count == 1);
  CHECK(t->values()(1, 1) == doctest::Approx(5.0));
}

TEST_CASE("id column name clash gets a prefix") {
  const auto t = table_of("id,x\n1,2\n1,3");
  CHECK(t->id_name() == "_id");
  CHECK(t->numeric_names() == std::vector<std::string>{"id", "x"});
}

TEST_CASE("explicit id column and headerless input") {
  const auto t = table_of("k,v\n10,1\n20,2", CsvOptions{',', true, std::string("k")});
  CHECK(t->row_ids() == std::vector<std::string>{"10", "20"});
  CHECK(t->numeric_names() == std::vector<std::string>{"v"});
  const auto h = table_of("1;2\n3;4", CsvOptions{';', false, std::nullopt});
  CHECK(h->numeric_names() == std::vector<std::string>{"col0", "col1"});
  CHECK(h->rows() == 2);
}

TEST_CASE("load errors") {
  CHECK(code_of([] { load_csv("id,a\nr1,1,2"); }) == ErrorCode::Structural);
  CHECK(code_of([] { load_csv("id,a,a\nr1,1,2"); }) == ErrorCode::Naming);
  CHECK(code_of([] { load_csv(" a ,a\n1,2"); }) == ErrorCode::Naming);
  CHECK(code_of([] { load_csv(""); }) == ErrorCode::EmptyInput);
  CHECK(code_of([] { load_csv("id,a\n"); }) == ErrorCode::EmptyInput);
  CHECK(code_of([] { load_csv("id,a\nr1,\"1\n"); }) == ErrorCode::Structural);
  CHECK(code_of([] { load_csv("id,a\nr1,\xff\xfe"); }) == ErrorCode::Structural);
  CHECK_THROWS_AS(load_csv("a,b\n1,2", CsvOptions{',', true, std::string("zzz")}), NameResolutionError);
  try {
    load_csv("id,a\nr1,1\nr2,1,3");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("keyword filter") {
  const auto t = table_of("id,v\nr1,14\nr2,2\nr3,40");
  CHECK(keyword_filter(*t, "") == RowMask{true, true, true});
  CHECK(keyword_filter(*t, "4") == RowMask{true, false, true});
  CHECK(keyword_filter(*t, "r2") == RowMask{false, true, false});
  CHECK(keyword_filter(*t, "V") == RowMask{true, true, true});
  CHECK(keyword_filter(*t, "nothing") == RowMask{false, false, false});
}

TEST_CASE("expression filter over table rows") {
  const auto t = table_of("id,age,weight,country\np,50,170,Chile\nq,50,190,Peru\nr,30,150,Chile");
  CHECK(apply_filter(*t, filter::parse("age > 40 & weight<180")) == RowMask{true, false, false});
  CHECK(apply_filter(*t, filter::parse("country == \"Chile\"")) == RowMask{true, false, true});
  try {
    apply_filter(*t, filter::parse("zzz > 1 | age > 1"));
    FAIL("expected name resolution error");
  } catch (const NameResolutionError& e) {
    CHECK(e.names() == std::vector<std::string>{"zzz"});
  }
}

TEST_CASE("normalization") {
  Matrix m(3, 2);
  m << 2, 5, 4, 5, 6, 5;
  const Matrix mm = normalize(m, NormalizeMethod::MinMax);
  CHECK(mm(0, 0) == 0.0);
  CHECK(mm(1, 0) == doctest::Approx(0.5));
  CHECK(mm(2, 0) == 1.0);
  CHECK(mm.col(1).isConstant(0.5));
  const Matrix z = normalize(m, NormalizeMethod::ZScore);
  CHECK(z(0, 0) == doctest::Approx(-1.224745).epsilon(1e-6));
  CHECK(z(1, 0) == doctest::Approx(0.0));
  CHECK(z(2, 0) == doctest::Approx(1.224745).epsilon(1e-6));
  CHECK(z.col(1).isZero());

  const auto t = table_of("id,v\na,2\nb,4\nc,6");
  TableView view(t);
  CHECK(normalize(view.with_mask({false, true, true}), NormalizeMethod::MinMax)(0, 0) == 0.0);
  CHECK_THROWS_AS(normalize(view.with_mask({false, false, false}), NormalizeMethod::MinMax), Error);
}

TEST_CASE("views") {
  const auto t = table_of("id,a,b,c\nr1,1,2,3\nr2,4,5,6\nr3,7,8,9");
  const TableView view = TableView(t).with_mask({true, false, true}).with_features({"c", "a"});
  const Matrix m = view.matrix();
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 2);
  CHECK(m(0, 0) == 3);
  CHECK(m(1, 1) == 7);
  CHECK(view.selected_rows() == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(TableView(t).with_features({"a", "zz"}), NameResolutionError);
  CHECK_THROWS_AS(TableView(t).with_features({"a", "a"}), Error);
  CHECK_THROWS_AS(TableView(t).with_mask({true}), Error);
  CHECK_THROWS_AS(TableView(t).with_features({}).require_nonempty(), Error);
}

TEST_CASE("export") {
  const std::string src = "id,a,cat,b\nr1,1.5,\"x,y\",2\nr2,3,plain,4\n";
  const auto t = table_of(src);
  const TableView full(t);
  const std::string out = export_csv(full);
  CHECK(out.rfind("id,a,cat,b\r\n", 0) == 0);
  CHECK(out == "id,a,cat,b\r\nr1,1.5,\"x,y\",2\r\nr2,3,plain,4\r\n");

  CHECK(export_csv(full.with_mask({false, false})) == "id,a,cat,b\r\n");
  CHECK(export_csv(full.with_features({"a"})).rfind("id,a,cat\r\n", 0) == 0);

  const auto numeric_only = table_of("id,a,b\nr1,1,2\nr2,3,4");
  const std::string sub = export_csv(TableView(numeric_only).with_features({"a"}));
  CHECK(sub == "id,a\r\nr1,1\r\nr2,3\r\n");
}

TEST_CASE("export round trip preserves numeric content") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 1e3);
  std::string csv = "name,x,y,z\n";
  for (int i = 0; i < 40; ++i)
    csv += "row" + std::to_string(i) + "," + format_double(nd(rng)) + "," + format_double(nd(rng) * 1e-7) + "," +
           format_double(nd(rng)) + "\n";
  const auto t1 = table_of(csv);
  const auto t2 = table_of(export_csv(TableView(t1)));
  const auto t3 = table_of(export_csv(TableView(t2)));
  CHECK(t1->row_ids() == t2->row_ids());
  CHECK(t1->numeric_names() == t3->numeric_names());
  CHECK((t1->values() - t2->values()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((t2->values() - t3->values()).cwiseAbs().maxCoeff() == 0.0);

  const auto synth = table_of("a,b\n1,2\n3,4");
  const auto back = table_of(export_csv(TableView(synth)), CsvOptions{',', true, std::string("id")});
  CHECK(back->numeric_names() == synth->numeric_names());
  CHECK(back->values() == synth->values());
}

TEST_CASE("format_double is shortest round trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(3.0) == "3");
  CHECK(format_double(-2.5e-8) == "-2.5e-08");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(-1e9, 1e9);
  for (int i = 0; i < 200; ++i) {
    const double v = ud(rng);
    CHECK(std::stod(format_double(v)) == v);
  }
}

}  // TEST_SUITE
