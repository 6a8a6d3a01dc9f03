// biasbound: analyze, perturb, simulate, serve, oracle.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "biasbound/dgp_lab.hpp"
#include "biasbound/error.hpp"
#include "biasbound/report.hpp"
#include "biasbound/sample.hpp"
#include "biasbound/service.hpp"

namespace {

using bb::json;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw bb::Error(bb::ErrorKind::parse, "cli_service", "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw bb::Error(bb::ErrorKind::parse, "cli_service", path + ": " + e.what());
  }
}

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw bb::Error(bb::ErrorKind::parse, "cli_service", "cannot write " + path);
  out << j.dump(2) << "\n";
}

std::vector<std::string> read_ids(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw bb::Error(bb::ErrorKind::parse, "cli_service", "cannot open " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    for (char& ch : line)
      if (ch == ',' || ch == '\t' || ch == '\r') ch = ' ';
    std::istringstream ls(line);
    std::string id;
    while (ls >> id) ids.push_back(id);
  }
  if (ids.empty()) throw bb::Error(bb::ErrorKind::validation, "cli_service", path + " lists no unit ids");
  return ids;
}

unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bias bounds for regression-based treatment effect estimates"};
  app.require_subcommand(1);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "fit, design phase, balance, bounds and inference");
  std::string csv_path, out_path, subsample_file;
  bb::CsvSchema schema;
  bb::AnalyzeOptions opt;
  double caliper = -1.0, eps = -1.0, kappa = -1.0;
  analyze->add_option("csv", csv_path, "input CSV")->required();
  analyze->add_option("--map", opt.map, "identity|index|strata|constant")
      ->check(CLI::IsMember({"identity", "index", "strata", "constant"}));
  analyze->add_option("--strata", opt.strata, "number of strata for --map strata");
  analyze->add_option("--alpha", opt.alpha, "interval level")->check(CLI::Range(0.0, 1.0));
  analyze->add_option("--summaries", opt.summaries, "mean-difference summaries: 1, index, negmodel")->delimiter(',');
  analyze->add_option("--match", opt.match, "none|nn")->check(CLI::IsMember({"none", "nn"}));
  analyze->add_option("--caliper", caliper, "nn caliper on the index");
  analyze->add_flag("--replacement", opt.replacement, "match with replacement");
  analyze->add_flag("--refit-index", opt.refit_index, "fit the propensity index on the analyzed subsample");
  analyze->add_option("--subsample-file", subsample_file, "unit ids of a precomputed subsample");
  analyze->add_option("--null", opt.nulls, "null values for m-values")->delimiter(',');
  analyze->add_option("--eps", eps, "tolerated bias for the m budget");
  analyze->add_option("--kappa", kappa, "arm penalty of the variance matching");
  analyze->add_option("--x-cols", schema.x_columns, "covariate columns (default x1, x2, ...)")->delimiter(',');
  analyze->add_option("--out", out_path, "report path (stdout when omitted)");

  // perturb
  auto* perturb = app.add_subcommand("perturb", "m, bounds and verdicts for a perturbation");
  std::string report_path, perturbation_path, perturb_out;
  std::vector<std::string> families;
  double perturb_null = 0.0;
  perturb->add_option("report", report_path)->required();
  perturb->add_option("perturbation", perturbation_path, "JSON with knots [{t, h}]")->required();
  perturb->add_option("--families", families)->delimiter(',');
  auto* null_opt = perturb->add_option("--null", perturb_null);
  perturb->add_option("--out", perturb_out);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "matching simulation on a synthetic pool");
  bb::SimPlan plan;
  unsigned threads = default_threads();
  std::string sim_csv, sim_json;
  bool no_md = false;
  simulate->add_option("--n1", plan.n1);
  simulate->add_option("--n0", plan.n0);
  simulate->add_option("--reps", plan.replications);
  simulate->add_option("--seed", plan.seed);
  simulate->add_option("--threads", threads);
  simulate->add_flag("--no-md", no_md, "skip the separation programs");
  simulate->add_option("--csv", sim_csv, "replication table as CSV");
  simulate->add_option("--json", sim_json, "replication table as JSON");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API over a report");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("report", report_path)->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port)->check(CLI::Range(1, 65535));

  // oracle
  auto* oracle = app.add_subcommand("oracle", "closed-form worked examples");
  oracle->require_subcommand(1);
  auto* ex1 = oracle->add_subcommand("example1", "binary X, D example");
  double p = 0.25;
  std::string ex1_report;
  ex1->add_option("--p", p)->required();
  ex1->add_option("--report", ex1_report, "also write a report for a 200-unit sample of the DGP");
  auto* ex2 = oracle->add_subcommand("example2", "24-unit matching example");
  std::string ex2_csv, ex2_ids;
  ex2->add_option("--csv", ex2_csv, "write the data as CSV");
  ex2->add_option("--subsample-ids", ex2_ids, "write the subsample ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*analyze) {
      if (caliper >= 0.0) opt.caliper = caliper;
      if (eps >= 0.0) opt.eps = eps;
      if (kappa >= 0.0) opt.kappa = kappa;
      if (!subsample_file.empty()) opt.subsample_ids = read_ids(subsample_file);
      opt.seed = bb::seed_from_env(0);
      opt.input = csv_path;
      const bb::Sample sample = bb::Sample::load_csv(csv_path, schema);
      write_json(bb::analyze(sample, opt), out_path);
    } else if (*perturb) {
      const json report = read_json(report_path);
      json request = read_json(perturbation_path);
      if (request.is_array()) request = json{{"knots", request}};
      if (!families.empty()) request["families"] = families;
      if (*null_opt) request["null"] = perturb_null;
      write_json(bb::perturb(report, request), perturb_out);
    } else if (*simulate) {
      plan.seed = bb::seed_from_env(plan.seed);
      plan.with_md = !no_md;
      const bb::SimTable table = bb::run_simulation(plan, threads);
      if (!sim_csv.empty()) {
        std::ofstream out(sim_csv);
        table.write_csv(out);
      }
      if (!sim_json.empty()) write_json(bb::to_json(table), sim_json);
      for (bb::SimSpec s : plan.specs)
        std::cout << "spec " << bb::to_char(s) << " improvement rate " << table.improvement_rate(s) << "\n";
    } else if (*serve) {
      const json report = read_json(report_path);
      if (!bb::serve(report, host, port)) {
        std::cerr << "cli_service: cannot bind " << host << ":" << port << "\n";
        return 2;
      }
    } else if (*ex1) {
      const bb::Example1Oracle o = bb::example1_oracle(p);
      json j = {{"p", o.p},
                {"tau", o.tau},
                {"beta", {{"A", o.beta_a}, {"B", o.beta_b}}},
                {"bias", {{"A", o.bias_a}, {"B", o.bias_b}}},
                {"c", {{"ks", o.c_ks}, {"w1", o.c_w1}, {"tv", o.c_tv}, {"dr", o.c_dr}, {"md", {o.c_md[0], o.c_md[1]}}}},
                {"m",
                 {{"A", {{"ks", o.m_ks_a}, {"mkw", o.m_mkw_a}, {"tv", o.m_tv_a}, {"dr", o.m_dr_a}, {"md", {o.m_md_a[0], o.m_md_a[1]}}}},
                  {"B", {{"ks", o.m_ks_b}, {"mkw", o.m_mkw_b}, {"tv", o.m_tv_b}, {"dr", o.m_dr_b}, {"md", {o.m_md_b[0], o.m_md_b[1]}}}}}},
                {"zeta", {{"A", {o.zeta_a[0], o.zeta_a[1]}}, {"B", {o.zeta_b[0], o.zeta_b[1]}}}}};
      std::cout << j.dump(2) << "\n";
      if (!ex1_report.empty()) {
        bb::AnalyzeOptions eo;
        eo.map = "constant";
        eo.input = "example1 p=" + std::to_string(p);
        write_json(bb::analyze(bb::example1_sample(p), eo), ex1_report);
      }
    } else if (*ex2) {
      const bb::Example2Data data = bb::example2_dataset();
      if (!ex2_csv.empty()) {
        std::ofstream out(ex2_csv);
        out << bb::example2_csv();
      }
      if (!ex2_ids.empty()) {
        std::ofstream out(ex2_ids);
        for (const auto& id : data.subsample.member_ids()) out << id << "\n";
      }
      const json pre = bb::to_json(bb::compute_imbalance(bb::empirical_cond(data.sample, 1), bb::empirical_cond(data.sample, 0)));
      const bb::Sample sub = data.sample.subset(data.subsample);
      const json post = bb::to_json(bb::compute_imbalance(bb::empirical_cond(sub, 1), bb::empirical_cond(sub, 0)));
      std::cout << json{{"pre", pre}, {"post", post}, {"subsample", data.subsample.member_ids()}}.dump(2) << "\n";
    }
  } catch (const bb::Error& e) {
    std::cerr << e.module() << ": " << bb::to_string(e.kind()) << ": " << e.what() << "\n";
    return e.is_numerical() ? 3 : 2;
  } catch (const json::exception& e) {
    std::cerr << "cli_service: malformed JSON: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
