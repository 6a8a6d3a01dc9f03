#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "biasbound/dgp_lab.hpp"
#include "biasbound/error.hpp"
#include "biasbound/report.hpp"
#include "biasbound/service.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that collides with Eigen parameter names.
#include <httplib.h>

using namespace bb;

namespace {

json example2_report() {
  const Example2Data ex = example2_dataset();
  AnalyzeOptions opt;
  opt.subsample_ids = ex.subsample.member_ids();
  return analyze(ex.sample, opt);
}

json example1_report(double p) {
  AnalyzeOptions opt;
  opt.map = "constant";
  return analyze(example1_sample(p), opt);
}

json spec_a_knots(double p) {
  return json::array({json{{"t", 0.0}, {"h", -2.0 * p}}, json{{"t", 1.0}, {"h", 1.0 - 2.0 * p}}});
}

struct TestServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit TestServer(const json& report) {
    register_routes(server, report);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~TestServer() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST_CASE("analyze: example 2 balance before and after the subsample") {
  const json r = example2_report();
  CHECK(r["schema"] == kReportSchema);
  CHECK(r["balance"]["pre"]["ks"].get<double>() == doctest::Approx(1.0 / 3.0));
  CHECK(r["balance"]["post"]["ks"].get<double>() == doctest::Approx(1.0 / 6.0));
  CHECK(r["design"]["n"] == 12);
  CHECK(r["inference"]["trapezoid"].size() == 21);
  CHECK(r["inference"]["m_values"].contains("0"));
  CHECK(r["bounds"]["ks"]["skipped"] == "no perturbation supplied");
}

TEST_CASE("analyze: matching, strata and index maps run end to end") {
  const Sample pool = synthetic_pool(3, 60, 140);
  for (const char* map : {"identity", "index", "strata", "constant"}) {
    AnalyzeOptions opt;
    opt.map = map;
    opt.match = "nn";
    opt.summaries = {"1", "index", "negmodel"};
    const json r = analyze(pool, opt);
    CHECK(r["design"]["pairs"].size() == 60);
    CHECK(r["c"]["md"].size() == 3);
    CHECK(r["support"].size() > 0);
  }
  AnalyzeOptions bad;
  bad.summaries = {"cubic"};
  CHECK_THROWS_AS(analyze(pool, bad), Error);
}

TEST_CASE("analyze: the index can be refitted on the matched subsample") {
  const Sample pool = synthetic_pool(5, 50, 120);
  AnalyzeOptions opt;
  opt.map = "index";
  opt.match = "nn";
  const json full = analyze(pool, opt);
  opt.refit_index = true;
  const json refit = analyze(pool, opt);
  CHECK(full["index"]["note"] == "index fitted on the full sample");
  CHECK(refit["index"]["note"] == "index refitted on the analyzed subsample");
  CHECK(full["fit"]["theta"] != refit["fit"]["theta"]);
}

TEST_CASE("report: json round trip and validation") {
  const json r = example2_report();
  const json back = json::parse(r.dump());
  CHECK(back == r);
  const ImbalanceVector c = imbalance_from_json(r["c"]);
  CHECK(to_json(c) == r["c"]);
  json broken = r;
  broken["inference"].erase("se");
  CHECK_THROWS_WITH(validate_report(broken), "report is missing 'inference.se'");
  broken = r;
  broken["schema"] = "other/9";
  CHECK_THROWS_AS(validate_report(broken), Error);
}

TEST_CASE("perturb: example 1 spec A gives m_ks = 1 and the exact bias") {
  const double p = 0.1;
  const json r = example1_report(p);
  const json out = perturb(r, {{"knots", spec_a_knots(p)}});
  CHECK(out["m"]["ks"].get<double>() == doctest::Approx(1.0));
  CHECK(out["families"]["ks"]["bound"].get<double>() == doctest::Approx(std::abs(1.0 - 4.0 * p)));
  CHECK(out["families"]["ks"]["available"] == true);
}

TEST_CASE("perturb: deterministic, zero perturbation, missing knots") {
  const json r = example2_report();
  const json req = json::parse(R"({"knots": [{"t": -1.0, "h": 0.2}, {"t": 1.0, "h": -0.1}], "families": ["ks", "tv", "md"]})");
  CHECK(perturb(r, req).dump() == perturb(r, req).dump());

  const json zero = perturb(r, json::parse(R"({"knots": [{"t": 0.0, "h": 0.0}]})"));
  for (const char* f : {"ks", "mkw", "tv", "dr", "lp"}) CHECK(zero["families"][f]["bound"].get<double>() == 0.0);
  CHECK(zero["families"]["ks"]["interval"] == zero["classical"]);

  CHECK_THROWS_WITH(perturb(r, {{"knots", json::array()}}), "knots required");
  CHECK_THROWS_WITH(perturb(r, json::object()), "knots required");
  CHECK_THROWS_AS(perturb(r, {{"knots", spec_a_knots(0.1)}, {"families", json::array({"bogus"})}}), Error);
}

TEST_CASE("perturb: a steep spike separates the mkw and tv bounds") {
  const json r = example2_report();
  const json req = json::parse(R"({"knots": [{"t": 0.150, "h": 0.0}, {"t": 0.155, "h": 0.05}, {"t": 0.160, "h": 0.0}]})");
  const json out = perturb(r, req);
  const double mkw = out["families"]["mkw"]["bound"].get<double>();
  const double tv = out["families"]["tv"]["bound"].get<double>();
  CHECK(out["m"]["lip"].get<double>() == doctest::Approx(10.0));
  CHECK(mkw > 5.0 * tv);
}

TEST_CASE("trapezoid endpoint") {
  const json r = example2_report();
  const json t = trapezoid(r, "tv", 0.1, 10);
  CHECK(t["points"].size() == 11);
  CHECK(t["alpha"] == 0.1);
  CHECK_THROWS_AS(trapezoid(r, "md", std::nullopt), Error);
  CHECK_THROWS_AS(trapezoid(r, "zz", std::nullopt), Error);
}

TEST_CASE("http: report, perturb, trapezoid, cors") {
  const double p = 0.1;
  const json report = example1_report(p);
  TestServer ts(report);
  httplib::Client cli("127.0.0.1", ts.port);

  auto res = cli.Get("/api/report", {{"Origin", "http://localhost:5173"}});
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  const json got = json::parse(res->body);
  CHECK_NOTHROW(validate_report(got));
  CHECK(got == report);

  res = cli.Get("/api/report", {{"Origin", "http://evil.example"}});
  CHECK_FALSE(res->has_header("Access-Control-Allow-Origin"));

  res = cli.Post("/api/perturb", R"({"knots": []})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["error"] == "knots required");

  res = cli.Post("/api/perturb", "{not json", "application/json");
  CHECK(res->status == 400);
  CHECK(json::parse(res->body).contains("error"));

  const std::string body = json{{"knots", spec_a_knots(p)}}.dump();
  res = cli.Post("/api/perturb", body, "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["m"]["ks"].get<double>() == doctest::Approx(1.0));
  const auto again = cli.Post("/api/perturb", body, "application/json");
  CHECK(again->body == res->body);

  res = cli.Get("/api/trapezoid?family=ks&alpha=0.1");
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["alpha"] == 0.1);
  CHECK(cli.Get("/api/trapezoid?family=ks&alpha=2")->status == 400);

  res = cli.Options("/api/perturb", {{"Origin", "http://127.0.0.1:3000"}});
  CHECK(res->status == 204);
  CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
}

TEST_CASE("http: concurrent posts are independent") {
  const json report = example1_report(0.25);
  TestServer ts(report);
  std::vector<std::string> bodies(6);
  std::vector<std::thread> workers;
  for (int i = 0; i < 6; ++i)
    workers.emplace_back([&, i] {
      httplib::Client cli("127.0.0.1", ts.port);
      const double scale = 1.0 + i % 2;
      const json req = {{"knots", json::array({json{{"t", 0.0}, {"h", -0.5 * scale}}, json{{"t", 1.0}, {"h", 0.5 * scale}}})}};
      if (auto res = cli.Post("/api/perturb", req.dump(), "application/json")) bodies[i] = res->body;
    });
  for (auto& w : workers) w.join();
  for (int i = 2; i < 6; ++i) CHECK(bodies[i] == bodies[i % 2]);
  CHECK(bodies[0] != bodies[1]);
}

TEST_CASE("register_routes refuses an invalid report") {
  httplib::Server server;
  CHECK_THROWS_AS(register_routes(server, json{{"schema", "x"}}), Error);
}

#ifdef BB_CLI_PATH
namespace {

struct CliRun {
  int code;
  std::string err;
};

CliRun run_cli(const std::string& args) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto err_path = dir / "bb_cli_stderr.txt";
  const std::string cmd = std::string(BB_CLI_PATH) + " " + args + " > /dev/null 2> " + err_path.string();
  const int status = std::system(cmd.c_str());
  std::ifstream in(err_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

}  // namespace

TEST_CASE("cli: exit codes and messages") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto bad = dir / "bb_missing_y.csv";
  std::ofstream(bad) << "id,d,x1\nT1,1,0\nU1,0,1\n";
  CliRun run = run_cli("analyze " + bad.string());
  CHECK(run.code == 2);
  CHECK(run.err.find("'y'") != std::string::npos);
  CHECK(run.err.find("sample_core") != std::string::npos);

  const auto flat = dir / "bb_flat.csv";
  std::ofstream(flat) << "id,y,d,x1\nT1,1,1,0\nT2,1,1,0\nU1,0,0,0\nU2,0,0,0\n";
  run = run_cli("analyze " + flat.string());
  CHECK(run.code == 3);

  CHECK(run_cli("analyze --map nonsense " + flat.string()).code == 2);

  const auto ex2 = dir / "bb_ex2.csv";
  const auto ids = dir / "bb_ex2_ids.txt";
  const auto report = dir / "bb_ex2_report.json";
  CHECK(run_cli("oracle example2 --csv " + ex2.string() + " --subsample-ids " + ids.string()).code == 0);
  CHECK(run_cli("analyze " + ex2.string() + " --match nn --map identity --subsample-file " + ids.string() + " --out " +
                report.string())
            .code == 0);
  std::ifstream in(report);
  const json r = json::parse(in);
  CHECK(r["balance"]["post"]["ks"].get<double>() == doctest::Approx(1.0 / 6.0));

  const auto zero = dir / "bb_zero.json";
  std::ofstream(zero) << R"({"knots": []})";
  run = run_cli("perturb " + report.string() + " " + zero.string());
  CHECK(run.code == 2);
  CHECK(run.err.find("knots required") != std::string::npos);
}
#endif
