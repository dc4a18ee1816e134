#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "zysim/model_io.hpp"
#include "zysim/sim.hpp"

namespace {

using namespace zysim;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

SimConfig load_config_with_env(const std::string& path) {
  SimConfig cfg = load_config(path);
  if (const char* s = std::getenv("ZYSIM_SEED")) {
    const std::string v = s;
    std::size_t used = 0;
    unsigned long long seed = 0;
    try {
      seed = std::stoull(v, &used, 0);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (v.empty() || used != v.size() || v[0] == '-')
      throw ValidationError("ZYSIM_SEED: not an unsigned 64-bit integer: '" + v + "'");
    cfg.seed = seed;
  }
  return cfg;
}

struct EtaArgs {
  std::string trace;
  std::int64_t dk_uj = 0;
  std::int64_t dt_us = 0;
  int nmax = 50;
  bool json = false;
};

int cmd_eta(const EtaArgs& a) {
  const auto tr = load_trace(a.trace);
  const auto series = binarize_trace(tr, a.dk_uj, a.dt_us);
  const auto profile = harvest_profile(series, a.nmax);
  const auto eta = eta_factor(profile);
  if (a.json) {
    std::cout << io::dump(profile_to_json(profile, eta));
    return 0;
  }
  std::cout << "eta = " << fmt("%.3f", eta.eta) << "\n"
            << "kw_observed = " << fmt("%.6f", eta.kw_observed) << "\n"
            << "kw_random = " << fmt("%.6f", eta.kw_random) << "\n"
            << "marginal_rate = " << fmt("%.6f", profile.marginal_rate) << "\n"
            << "slots = " << series.size() << "\n"
            << "N,h,count\n";
  for (const auto& [n, c] : profile.h) std::cout << n << ',' << fmt("%.6f", c.p) << ',' << c.count << "\n";
  return 0;
}

std::string summary(const SimReport& r) {
  const auto& a = r.aggregates;
  return "released=" + std::to_string(a.jobs_released) + " scheduled=" +
         std::to_string(a.jobs_scheduled) + " correct=" + std::to_string(a.jobs_correct) +
         " misses=" + std::to_string(a.deadline_misses);
}

int cmd_simulate(const std::string& config, const std::string& out, const std::string& jobs_csv) {
  const auto cfg = load_config_with_env(config);
  const auto rep = run(cfg);
  save_report(rep, out);
  if (!jobs_csv.empty()) save_jobs_csv(rep, jobs_csv);
  std::cout << summary(rep) << "\n";
  return 0;
}

int cmd_compare(const std::string& config, const std::vector<std::string>& names,
                const std::string& out) {
  const auto cfg = load_config_with_env(config);
  std::vector<Policy> policies;
  for (const auto& n : names) policies.push_back(parse_policy(n));
  if (policies.empty()) throw ValidationError("--policies: empty list");

  std::vector<SimReport> reports(policies.size());
  std::vector<std::exception_ptr> errors(policies.size());
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < policies.size(); ++i)
    workers.emplace_back([&, i] {
      try {
        auto c = cfg;
        c.policy = policies[i];
        reports[i] = run(c);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ojson rows = ojson::array();
  std::cout << "policy,released,scheduled,correct,avg_units\n";
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto& a = reports[i].aggregates;
    const std::string name(to_string(policies[i]));
    rows.push_back({{"policy", name},
                    {"released", a.jobs_released},
                    {"scheduled", a.jobs_scheduled},
                    {"correct", a.jobs_correct},
                    {"avg_units", a.avg_units_per_job}});
    std::cout << name << ',' << a.jobs_released << ',' << a.jobs_scheduled << ','
              << a.jobs_correct << ',' << fmt("%.3f", a.avg_units_per_job) << "\n";
  }
  ojson j;
  j["format_version"] = kFormatVersion;
  j["seed"] = cfg.seed;
  j["results"] = std::move(rows);
  io::write_file(out, io::dump(j));
  return 0;
}

int cmd_schedulability(const std::string& config) {
  const auto cfg = load_config_with_env(config);
  std::vector<Task> tasks;
  for (const auto& ts : cfg.tasks) tasks.push_back(ts.task);
  const double eta = config_eta(cfg);
  const double u = utilization(tasks, true);
  std::cout << "utilization = " << fmt("%.4f", u) << "\n"
            << "eta = " << fmt("%.4f", eta) << "\n";
  if (eta >= 1.0) {
    std::cout << "expected_off_slots = unbounded\nmin_T_E_slots = unbounded\n"
              << (u >= 1.0 ? "feasible = no (infeasible)\n" : "feasible = unknown\n");
    return 0;
  }
  const auto r = schedulability_necessary(tasks, eta);
  std::cout << "expected_off_slots = " << fmt("%.4f", r.expected_off_slots) << "\n";
  if (u >= 1.0) {
    std::cout << "min_T_E_slots = inf\nfeasible = no (infeasible)\n";
    return 0;
  }
  std::cout << "min_T_E_slots = " << fmt("%.4f", r.min_t_e_slots) << "\n"
            << "feasible = yes\n";
  return 0;
}

std::string invocation(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intermittent-power DNN scheduling simulator"};
  app.require_subcommand(1);

  EtaArgs eta;
  auto* e = app.add_subcommand("eta", "Estimate the eta factor of a harvest trace");
  e->add_option("--trace", eta.trace, "CSV trace (t_us,power_uw)")->required();
  e->add_option("--dk-uj", eta.dk_uj, "Energy event threshold (uJ)")->required();
  e->add_option("--dt-us", eta.dt_us, "Slot length (us)")->required();
  e->add_option("--nmax", eta.nmax, "Longest conditioning run")->default_val(50);
  e->add_flag("--json", eta.json, "Emit the profile as JSON");

  std::string config, out, jobs_csv;
  auto* s = app.add_subcommand("simulate", "Run one simulation");
  s->add_option("--config", config, "Config JSON")->required();
  s->add_option("--out", out, "Report JSON")->required();
  s->add_option("--jobs-csv", jobs_csv, "Per-job CSV");

  std::vector<std::string> policies;
  auto* c = app.add_subcommand("compare", "Run one config under several policies");
  c->add_option("--config", config, "Config JSON")->required();
  c->add_option("--policies", policies, "Comma-separated policy list")->required()->delimiter(',');
  c->add_option("--out", out, "Result JSON")->required();

  auto* k = app.add_subcommand("schedulability", "Necessary schedulability condition");
  k->add_option("--config", config, "Config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 1;
  }

  std::cerr << "# " << invocation(argc, argv) << "\n";
  try {
    if (*e) return cmd_eta(eta);
    if (*s) return cmd_simulate(config, out, jobs_csv);
    if (*c) return cmd_compare(config, policies, out);
    if (*k) return cmd_schedulability(config);
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 2;
}
