#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <sstream>
#include <thread>

#include "clusterscope/http_server.hpp"
#include "clusterscope/service.hpp"

#include <httplib.h>

using namespace clusterscope;

namespace {

const char* kPeople =
    "name,age,weight,height,city\n"
    "a,45,170,180,Oslo\n"
    "b,30,200,175,Rome\n"
    "c,50,190,182,Oslo\n"
    "d,41,150,160,Paris\n"
    "e,22,130,165,Rome\n"
    "f,60,175,170,Oslo\n"
    "g,35,160,171,Paris\n"
    "h,28,185,178,Rome\n";

struct Client {
  Service service;

  explicit Client(ServiceOptions opts = {}) : service(std::move(opts)) {}

  Response call(const std::string& method, const std::string& path, const json& body = nullptr,
                std::map<std::string, std::string> query = {}) {
    Request req{method, path, std::move(query), body.is_null() ? "" : body.dump(), "application/json"};
    return service.handle(req);
  }

  std::string create(const std::string& csv = kPeople) {
    json body = {{"csv", csv}};
    if (csv == kPeople) body["id_column"] = "name";
    const Response r = call("POST", "/sessions", body);
    REQUIRE(r.status == 201);
    return r.json_body()["session_id"].get<std::string>();
  }
};

std::string big_csv(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::ostringstream ss;
  ss << "x,y,z\n";
  ss.precision(17);
  for (std::size_t i = 0; i < n; ++i) ss << nd(rng) << ',' << nd(rng) + (i % 3) << ',' << nd(rng) << '\n';
  return ss.str();
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("create session from csv text and raw body") {
  Client c;
  const Response r = c.call("POST", "/sessions", {{"csv", kPeople}, {"id_column", "name"}});
  CHECK(r.status == 201);
  const json j = r.json_body();
  CHECK(j["revision"] == 1);
  CHECK(j["table"]["rows"] == 8);
  CHECK(j["table"]["numeric_features"] == 3);

  Request raw{"POST", "/sessions", {{"delimiter", ";"}}, "p;q\n1;2\n3;5\n", "text/csv"};
  const Response r2 = c.service.handle(raw);
  CHECK(r2.status == 201);
  CHECK(r2.json_body()["table"]["rows"] == 2);
  CHECK(c.service.session_count() == 2);
}

TEST_CASE("unknown session and unknown route give 404") {
  Client c;
  CHECK(c.call("GET", "/sessions/nope/table").status == 404);
  const std::string id = c.create();
  CHECK(c.call("GET", "/sessions/" + id + "/nothing").status == 404);
  CHECK(c.call("GET", "/elsewhere").status == 404);
  CHECK(c.call("PATCH", "/sessions").status == 405);
}

TEST_CASE("malformed JSON body is a 400") {
  Client c;
  const std::string id = c.create();
  Request req{"PUT", "/sessions/" + id + "/filter", {}, "{not json", "application/json"};
  const Response r = c.service.handle(req);
  CHECK(r.status == 400);
  CHECK(r.json_body()["error"] == "bad_json");
}

TEST_CASE("filter parse error passes the offset through") {
  Client c;
  const std::string id = c.create();
  const Response r = c.call("PUT", "/sessions/" + id + "/filter", {{"expr", "age >"}});
  CHECK(r.status == 422);
  const json j = r.json_body();
  CHECK(j["error"] == "syntax");
  CHECK(j["offset"] == 5);
  CHECK(j.contains("expected"));
}

TEST_CASE("filter bumps the revision and reports the match count") {
  Client c;
  const std::string id = c.create();
  json j = c.call("PUT", "/sessions/" + id + "/filter", {{"expr", "age > 40 & weight<180"}}).json_body();
  CHECK(j["revision"] == 2);
  CHECK(j["match_count"] == 3);
  CHECK(j["total"] == 8);

  j = c.call("PUT", "/sessions/" + id + "/filter", {{"keyword", "oslo"}}).json_body();
  CHECK(j["revision"] == 3);
  CHECK(j["match_count"] == 3);

  j = c.call("PUT", "/sessions/" + id + "/filter", json::object()).json_body();
  CHECK(j["match_count"] == 8);

  const Response unknown = c.call("PUT", "/sessions/" + id + "/filter", {{"expr", "shoe > 3"}});
  CHECK(unknown.status == 422);
  CHECK(unknown.json_body()["error"] == "name_resolution");
}

TEST_CASE("feature selection") {
  Client c;
  const std::string id = c.create();
  Response r = c.call("PUT", "/sessions/" + id + "/features", {{"names", {"age", "height"}}});
  CHECK(r.status == 200);
  CHECK(r.json_body()["features"] == json({"age", "height"}));
  CHECK(c.call("PUT", "/sessions/" + id + "/features", {{"names", json::array()}}).status == 422);
  CHECK(c.call("PUT", "/sessions/" + id + "/features", {{"names", {"city"}}}).status == 422);
  CHECK(c.call("PUT", "/sessions/" + id + "/features", {{"names", "age"}}).status == 422);
}

TEST_CASE("clustering then table page carries labels") {
  Client c;
  const std::string id = c.create();
  const Response r = c.call("POST", "/sessions/" + id + "/clustering", {{"method", "kmeans"}, {"k", 3}, {"seed", 7}});
  REQUIRE(r.status == 200);
  const json fit = r.json_body();
  CHECK(fit["model"]["k"] == 3);
  CHECK(fit["profile"]["clusters"].size() == 3);

  const json page = c.call("GET", "/sessions/" + id + "/table", nullptr, {{"limit", "100"}}).json_body();
  REQUIRE(page["rows"].size() == 8);
  for (const auto& row : page["rows"]) {
    REQUIRE(row["label"].is_number_integer());
    CHECK(row["label"].get<int>() >= 0);
    CHECK(row["label"].get<int>() <= 2);
  }
}

TEST_CASE("table paging and sorting") {
  Client c;
  const std::string id = c.create();
  json page = c.call("GET", "/sessions/" + id + "/table", nullptr,
                     {{"sort_by", "age"}, {"dir", "desc"}, {"offset", "1"}, {"limit", "2"}})
                  .json_body();
  REQUIRE(page["rows"].size() == 2);
  CHECK(page["rows"][0]["id"] == "c");
  CHECK(page["rows"][1]["id"] == "a");
  CHECK(page["rows"][0]["label"].is_null());
  CHECK(page["rows"][0]["values"]["city"] == "Oslo");

  page = c.call("GET", "/sessions/" + id + "/table", nullptr, {{"sort_by", "city"}}).json_body();
  CHECK(page["rows"][0]["values"]["city"] == "Oslo");
  CHECK(page["rows"][7]["values"]["city"] == "Rome");

  CHECK(c.call("GET", "/sessions/" + id + "/table", nullptr, {{"sort_by", "shoe"}}).status == 422);
  CHECK(c.call("GET", "/sessions/" + id + "/table", nullptr, {{"dir", "up"}}).status == 422);
  CHECK(c.call("GET", "/sessions/" + id + "/table", nullptr, {{"limit", "x"}}).status == 422);
  CHECK(c.call("GET", "/sessions/" + id + "/table", nullptr, {{"sort_by", "label"}}).status == 409);
}

TEST_CASE("interaction routes need a projection") {
  Client c;
  const std::string id = c.create();
  const json req = {{"point", "a"}, {"delta_y", {1, 0}}};
  Response r = c.call("POST", "/sessions/" + id + "/backward", req);
  CHECK(r.status == 409);
  CHECK(r.json_body()["reason"] == "no_projection");
  CHECK(c.call("POST", "/sessions/" + id + "/forward", {{"point", "a"}, {"delta", json::object()}}).status == 409);
  CHECK(c.call("POST", "/sessions/" + id + "/prolines", {{"point", "a"}}).status == 409);
}

TEST_CASE("projection staleness after a view change") {
  Client c;
  const std::string id = c.create();
  REQUIRE(c.call("POST", "/sessions/" + id + "/projection", {{"method", "pca"}}).status == 200);
  REQUIRE(c.call("PUT", "/sessions/" + id + "/filter", {{"expr", "age > 25"}}).status == 200);
  const Response r = c.call("POST", "/sessions/" + id + "/forward", {{"point", "a"}, {"delta", {{"age", 1}}}});
  CHECK(r.status == 409);
  const json j = r.json_body();
  CHECK(j["reason"] == "stale_model");
  CHECK(j["model_revision"] == 1);
  CHECK(j["revision"] == 2);
  CHECK(j.contains("hint"));

  // Stale clustering drops out of the projection/table join instead of mixing revisions.
  Client d;
  const std::string id2 = d.create();
  REQUIRE(d.call("POST", "/sessions/" + id2 + "/clustering", {{"k", 2}}).status == 200);
  REQUIRE(d.call("PUT", "/sessions/" + id2 + "/filter", {{"expr", "age > 25"}}).status == 200);
  const json proj = d.call("POST", "/sessions/" + id2 + "/projection", {{"method", "pca"}}).json_body();
  for (const auto& p : proj["points"]) CHECK(p["label"].is_null());
  const json page = d.call("GET", "/sessions/" + id2 + "/table").json_body();
  for (const auto& row : page["rows"]) CHECK(row["label"].is_null());
  const Response anova = d.call("POST", "/sessions/" + id2 + "/stats/anova", {{"feature", "age"}, {"cluster_ids", {0, 1}}});
  CHECK(anova.status == 409);
  CHECK(anova.json_body()["reason"] == "stale_model");
}

TEST_CASE("projection joins current cluster labels") {
  Client c;
  const std::string id = c.create();
  const json fit = c.call("POST", "/sessions/" + id + "/clustering", {{"k", 2}, {"seed", 3}}).json_body();
  const json proj = c.call("POST", "/sessions/" + id + "/projection", {{"method", "pca"}}).json_body();
  REQUIRE(proj["points"].size() == 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(proj["points"][i]["label"] == fit["model"]["labels"][i]);
  CHECK(proj["linear"] == true);
  CHECK(proj["revision"] == 1);
}

TEST_CASE("fits are idempotent") {
  Client c;
  const std::string id = c.create();
  const json kreq = {{"method", "kmeans"}, {"k", 3}, {"seed", 11}};
  CHECK(c.call("POST", "/sessions/" + id + "/clustering", kreq).body ==
        c.call("POST", "/sessions/" + id + "/clustering", kreq).body);
  const json preq = {{"method", "cmds"}, {"distance", "manhattan"}};
  CHECK(c.call("POST", "/sessions/" + id + "/projection", preq).body ==
        c.call("POST", "/sessions/" + id + "/projection", preq).body);
  const json areq = {{"method", "agglomerative"}, {"k", 2}, {"linkage", "average"}};
  CHECK(c.call("POST", "/sessions/" + id + "/clustering", areq).body ==
        c.call("POST", "/sessions/" + id + "/clustering", areq).body);
}

TEST_CASE("projection parameter errors") {
  Client c;
  const std::string id = c.create();
  CHECK(c.call("POST", "/sessions/" + id + "/projection", {{"method", "pca"}, {"distance", "cosine"}}).status == 422);
  CHECK(c.call("POST", "/sessions/" + id + "/projection", {{"method", "tsne"}}).status == 422);
  CHECK(c.call("POST", "/sessions/" + id + "/projection", {{"method", "cmds"}, {"standardize", true}}).status == 422);
  CHECK(c.call("POST", "/sessions/" + id + "/clustering", {{"method", "kmeans"}}).status == 422);
  CHECK(c.call("POST", "/sessions/" + id + "/clustering", {{"k", -1}}).status == 422);
  CHECK(c.call("POST", "/sessions/" + id + "/clustering", {{"k", 2}, {"method", "agglo"}, {"distance", "manhattan"}}).status == 422);
}

TEST_CASE("non-euclidean CMDS has no linear model") {
  Client c;
  const std::string id = c.create();
  const json proj = c.call("POST", "/sessions/" + id + "/projection", {{"method", "cmds"}, {"distance", "correlation"}}).json_body();
  CHECK(proj["linear"] == false);
  CHECK(proj["model"].is_null());
  const Response r = c.call("POST", "/sessions/" + id + "/forward", {{"point", "a"}, {"delta", json::object()}});
  CHECK(r.status == 409);
  CHECK(r.json_body()["reason"] == "nonlinear_projection");
}

TEST_CASE("euclidean CMDS matches PCA coordinates up to sign") {
  Client c;
  const std::string id = c.create();
  const json pca = c.call("POST", "/sessions/" + id + "/projection", {{"method", "pca"}}).json_body();
  const json cmds = c.call("POST", "/sessions/" + id + "/projection", {{"method", "cmds"}}).json_body();
  for (const char* axis : {"x", "y"}) {
    double same = 0.0, flipped = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      const double a = pca["points"][i][axis].get<double>(), b = cmds["points"][i][axis].get<double>();
      same = std::max(same, std::abs(a - b));
      flipped = std::max(flipped, std::abs(a + b));
    }
    CHECK(std::min(same, flipped) < 1e-8);
  }
}

TEST_CASE("forward, prolines and backward") {
  Client c;
  const std::string id = c.create();
  const json proj = c.call("POST", "/sessions/" + id + "/projection", {{"method", "pca"}}).json_body();
  const json& p0 = proj["points"][0];

  const json fwd = c.call("POST", "/sessions/" + id + "/forward", {{"point", "a"}, {"delta", {{"age", 2.0}}}}).json_body();
  CHECK(fwd["y"][0].get<double>() == doctest::Approx(p0["x"].get<double>()).epsilon(1e-12));
  CHECK(fwd["y"][1].get<double>() == doctest::Approx(p0["y"].get<double>()).epsilon(1e-12));
  CHECK(fwd["new_y"][0].get<double>() == doctest::Approx(fwd["y"][0].get<double>() + fwd["delta_y"][0].get<double>()));

  const json by_map = c.call("POST", "/sessions/" + id + "/forward",
                             {{"point", {{"age", 45}, {"weight", 170}, {"height", 180}}}, {"delta", {{"age", 2.0}}}})
                          .json_body();
  CHECK(by_map == fwd);
  CHECK(c.call("POST", "/sessions/" + id + "/forward", {{"point", {{"age", 45}}}, {"delta", json::object()}}).status == 422);
  CHECK(c.call("POST", "/sessions/" + id + "/forward", {{"point", "zz"}, {"delta", json::object()}}).status == 422);
  CHECK(c.call("POST", "/sessions/" + id + "/forward", {{"point", "a"}, {"delta", {{"shoe", 1}}}}).status == 422);

  const json pl = c.call("POST", "/sessions/" + id + "/prolines", {{"point", {{"row_id", "a"}}}}).json_body();
  REQUIRE(pl["prolines"].size() == 3);
  CHECK(pl["prolines"][0]["length"].get<double>() >= pl["prolines"][1]["length"].get<double>());
  CHECK(pl["prolines"][0]["path"].size() == 17);
  const json one = c.call("POST", "/sessions/" + id + "/prolines", {{"point", "a"}, {"features", {"height"}}}).json_body();
  REQUIRE(one["prolines"].size() == 1);
  CHECK(one["prolines"][0]["feature"] == "height");
  CHECK(c.call("POST", "/sessions/" + id + "/prolines", {{"point", "a"}, {"features", {"shoe"}}}).status == 422);

  const json back = c.call("POST", "/sessions/" + id + "/backward", {{"point", "a"}, {"delta_y", {1.0, -0.5}}}).json_body();
  CHECK(back["mode"] == "unconstrained");
  CHECK(back["status"] == "optimal");
  CHECK(back["objective"].get<double>() < 1e-20);
  const json check = c.call("POST", "/sessions/" + id + "/forward", {{"point", "a"}, {"delta", back["delta_x"]}}).json_body();
  CHECK(check["delta_y"][0].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(check["delta_y"][1].get<double>() == doctest::Approx(-0.5).epsilon(1e-10));

  const json constrained = c.call("POST", "/sessions/" + id + "/backward",
                                  {{"point", "a"},
                                   {"delta_y", {{"x", 1.0}, {"y", -0.5}}},
                                   {"constraints", {{"fixed", {"age"}}, {"bounds", {{{"feature", "weight"}, {"lb", -1}, {"ub", 1}}}}}}})
                               .json_body();
  CHECK(constrained["mode"] == "constrained");
  CHECK(constrained["delta_x"]["age"].get<double>() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(constrained["delta_x"]["weight"].get<double>() <= 1.0 + 1e-9);
  CHECK(constrained["delta_x"]["weight"].get<double>() >= -1.0 - 1e-9);
  CHECK(constrained["direction"]["age"] == "unchanged");
  CHECK(constrained["kkt_residual"].get<double>() < 1e-8);
  CHECK(constrained["active"].contains("weight"));

  const Response infeasible = c.call("POST", "/sessions/" + id + "/backward",
                                     {{"point", "a"},
                                      {"delta_y", {1, 0}},
                                      {"constraints", {{"bounds", {{{"feature", "age"}, {"lb", 1}, {"ub", -1}}}}}}});
  CHECK(infeasible.status == 200);
  CHECK(infeasible.json_body()["status"] == "infeasible");
  CHECK(c.call("POST", "/sessions/" + id + "/backward", {{"point", "a"}, {"delta_y", {1}}}).status == 422);
}

TEST_CASE("anova and correlation routes") {
  Client c;
  const std::string id = c.create();
  CHECK(c.call("POST", "/sessions/" + id + "/stats/anova", {{"feature", "age"}, {"cluster_ids", {0, 1}}}).json_body()["reason"] ==
        "no_clustering");
  REQUIRE(c.call("POST", "/sessions/" + id + "/clustering", {{"k", 2}}).status == 200);
  const Response r = c.call("POST", "/sessions/" + id + "/stats/anova", {{"feature", "age"}, {"cluster_ids", {0, 1}}});
  REQUIRE(r.status == 200);
  const json a = r.json_body();
  CHECK(a["df1"] == 1);
  CHECK(a["df2"] == 6);
  CHECK(a["p"].get<double>() >= 0.0);
  CHECK(a["p"].get<double>() <= 1.0);
  CHECK(c.call("POST", "/sessions/" + id + "/stats/anova", {{"feature", "age"}, {"cluster_ids", {0, 5}}}).status == 422);
  CHECK(c.call("POST", "/sessions/" + id + "/stats/anova", {{"feature", "age"}, {"cluster_ids", {0, 0}}}).status == 422);
  CHECK(c.call("POST", "/sessions/" + id + "/stats/anova", {{"feature", "city"}, {"cluster_ids", {0, 1}}}).status == 422);
  CHECK(c.call("POST", "/sessions/" + id + "/stats/anova", {{"feature", "age"}, {"cluster_ids", {0}}}).status == 422);

  const json corr = c.call("GET", "/sessions/" + id + "/stats/correlations").json_body();
  REQUIRE(corr["correlations"].size() == 3);
  CHECK(std::abs(corr["correlations"][0]["r"].get<double>()) >= std::abs(corr["correlations"][2]["r"].get<double>()));
  const json pts = c.call("GET", "/sessions/" + id + "/stats/points").json_body();
  CHECK(pts["stats"].size() == 3);
}

TEST_CASE("export follows the current view") {
  Client c;
  const std::string id = c.create();
  c.call("PUT", "/sessions/" + id + "/filter", {{"expr", "city == \"Oslo\""}});
  const Response r = c.call("GET", "/sessions/" + id + "/export.csv");
  CHECK(r.status == 200);
  CHECK(r.content_type.rfind("text/csv", 0) == 0);
  CHECK(r.body == "name,age,weight,height,city\r\na,45,170,180,Oslo\r\nc,50,190,182,Oslo\r\nf,60,175,170,Oslo\r\n");
}

TEST_CASE("no route mutates the base table") {
  Client c;
  const std::string id = c.create();
  const std::string before = c.call("GET", "/sessions/" + id + "/table").body;
  c.call("POST", "/sessions/" + id + "/projection", {{"method", "pca"}});
  c.call("POST", "/sessions/" + id + "/backward", {{"point", "a"}, {"delta_y", {5, 5}}});
  c.call("POST", "/sessions/" + id + "/forward", {{"point", "a"}, {"delta", {{"age", 10}}}});
  CHECK(c.call("GET", "/sessions/" + id + "/table").body == before);
}

TEST_CASE("delete session") {
  Client c;
  const std::string id = c.create();
  CHECK(c.call("DELETE", "/sessions/" + id).status == 200);
  CHECK(c.call("GET", "/sessions/" + id).status == 404);
  CHECK(c.call("DELETE", "/sessions/" + id).status == 404);
  CHECK(c.service.session_count() == 0);
}

TEST_CASE("deleting a session cancels a running fit") {
  Client c;
  const std::string id = c.create(big_csv(4000, 5));
  auto fut = std::async(std::launch::async, [&] {
    return c.call("POST", "/sessions/" + id + "/clustering", {{"method", "agglomerative"}, {"k", 3}, {"linkage", "average"}});
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(30));
  CHECK(c.call("DELETE", "/sessions/" + id).status == 200);
  const Response r = fut.get();
  CHECK(r.status == 410);
  CHECK(r.json_body()["error"] == "cancelled");
}

TEST_CASE("sessions are isolated under concurrent requests") {
  Client c;
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(c.create(big_csv(300, 100 + i)));
  std::vector<std::string> expected;
  for (const auto& id : ids)
    expected.push_back(c.call("POST", "/sessions/" + id + "/clustering", {{"k", 3}, {"seed", 1}}).body);
  std::vector<std::future<std::string>> futs;
  for (int round = 0; round < 3; ++round)
    for (std::size_t i = 0; i < ids.size(); ++i)
      futs.push_back(std::async(std::launch::async, [&, i] {
        return c.call("POST", "/sessions/" + ids[i] + "/clustering", {{"k", 3}, {"seed", 1}}).body;
      }));
  for (std::size_t f = 0; f < futs.size(); ++f) CHECK(futs[f].get() == expected[f % ids.size()]);
}

TEST_CASE("snapshot round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "clusterscope_snapshot_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  Client c(ServiceOptions{dir.string()});
  const std::string id = c.create();
  c.call("PUT", "/sessions/" + id + "/filter", {{"expr", "age > 25"}});
  const json fit = c.call("POST", "/sessions/" + id + "/clustering", {{"k", 2}, {"seed", 4}}).json_body();
  const json proj = c.call("POST", "/sessions/" + id + "/projection", {{"method", "pca"}}).json_body();
  const Response snap = c.call("POST", "/sessions/" + id + "/snapshot");
  REQUIRE(snap.status == 200);

  const Response restored = c.call("POST", "/sessions", {{"snapshot", snap.json_body()["snapshot"]}});
  REQUIRE(restored.status == 201);
  const std::string id2 = restored.json_body()["session_id"];
  CHECK(id2 != id);
  CHECK(restored.json_body()["revision"] == 2);
  CHECK(c.call("GET", "/sessions/" + id2 + "/table").body == c.call("GET", "/sessions/" + id + "/table").body);
  CHECK(c.call("GET", "/sessions/" + id2 + "/projection").json_body() == proj);
  const json fit2 = c.call("GET", "/sessions/" + id2 + "/clustering").json_body();
  CHECK(fit2["model"] == fit["model"]);
  CHECK(fit2["profile"] == fit["profile"]);
  const json req = {{"point", "a"}, {"delta", {{"age", 1}}}};
  CHECK(c.call("POST", "/sessions/" + id2 + "/forward", req).body == c.call("POST", "/sessions/" + id + "/forward", req).body);

  std::ofstream(dir / "people.csv") << kPeople;
  CHECK(c.call("POST", "/sessions", {{"path", "people.csv"}}).status == 201);
  CHECK(c.call("POST", "/sessions", {{"path", "../etc/passwd"}}).status == 422);
  CHECK(c.call("POST", "/sessions", {{"path", "/etc/passwd"}}).status == 422);
  std::filesystem::remove_all(dir);
}

TEST_CASE("load errors are 422") {
  Client c;
  CHECK(c.call("POST", "/sessions", {{"csv", "a,b\n1,2,3\n"}}).status == 422);
  CHECK(c.call("POST", "/sessions", {{"csv", ""}}).status == 422);
  CHECK(c.call("POST", "/sessions", {{"path", "x.csv"}}).status == 422);
  CHECK(c.call("POST", "/sessions", json::object()).status == 422);
}

TEST_CASE("http loopback with CORS and multipart upload") {
  Service service;
  HttpServer server(service, HttpOptions{"127.0.0.1", 0, "*"});
  const int port = server.bind();
  std::thread t([&] { server.run(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto created = cli.Post("/sessions", json{{"csv", kPeople}, {"id_column", "name"}}.dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  CHECK(created->get_header_value("Access-Control-Allow-Origin") == "*");
  const std::string id = json::parse(created->body)["session_id"];

  auto bad = cli.Put("/sessions/" + id + "/filter", json{{"expr", "age >"}}.dump(), "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 422);
  CHECK(json::parse(bad->body)["offset"] == 5);

  auto page = cli.Get("/sessions/" + id + "/table?limit=2&sort_by=age&dir=asc");
  REQUIRE(page);
  CHECK(json::parse(page->body)["rows"][0]["id"] == "e");

  auto pre = cli.Options("/sessions/" + id + "/projection");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  httplib::MultipartFormDataItems items = {{"file", "a,b\n1,2\n3,4\n5,7\n", "data.csv", "text/csv"}};
  auto up = cli.Post("/sessions", items);
  REQUIRE(up);
  CHECK(up->status == 201);
  CHECK(json::parse(up->body)["table"]["rows"] == 3);

  auto exported = cli.Get("/sessions/" + id + "/export.csv");
  REQUIRE(exported);
  CHECK(exported->get_header_value("Content-Type").rfind("text/csv", 0) == 0);

  server.stop();
  t.join();
}

TEST_CASE("port from environment") {
  ::setenv("CLUSTERSCOPE_PORT", "9123", 1);
  CHECK(port_from_env(8080) == 9123);
  ::setenv("CLUSTERSCOPE_PORT", "nope", 1);
  CHECK(port_from_env(8080) == 8080);
  ::unsetenv("CLUSTERSCOPE_PORT");
  CHECK(port_from_env(8080) == 8080);
}

}
