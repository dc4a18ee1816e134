#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "sim_helpers.hpp"
#include "zysim/model_io.hpp"

using namespace zysim;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("zysim_test_" + name);
}

ojson minimal_config() {
  return ojson::parse(R"({
    "duration_us": 10000000,
    "taskset": [{"id": 1, "period_us": 1000000, "deadline_us": 1000000,
                 "units": [{"exec_us": 1000, "energy_uj": 1}]}],
    "capacitor": {"capacity_uj": 1000, "e_man_uj": 100},
    "energy_source": {"kind": "constant", "power_uw": 100}
  })");
}

}  // namespace

TEST(ModelIo, Toy2FixtureMatchesRecordedOutcomes) {
  const auto model = load_model(testutil::fixture("toy2.json"));
  std::ifstream in(testutil::fixture("toy2_expected.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "f0,f1,label,exit_layer");
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, lab, ex;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, lab, ',');
    std::getline(ss, ex, ',');
    const std::vector<double> x = {std::stod(a), std::stod(b)};
    const auto r = infer(model, x);
    EXPECT_EQ(r.label, std::stoi(lab)) << line;
    EXPECT_EQ(r.exit_layer, std::stoul(ex)) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 8);
}

TEST(ModelIo, RoundTripIsByteIdentical) {
  const auto mf = load_model_file(testutil::fixture("toy2.json"));
  const auto text = model_to_string(mf);
  const auto again = model_to_string(model_from_json(io::parse_json(text, "x")));
  EXPECT_EQ(text, again);
  const auto p = temp_path("model.json");
  save_model(mf, p);
  EXPECT_EQ(io::read_file(p), text);
  std::filesystem::remove(p);
}

TEST(ModelIo, CentroidDimensionErrorNamesLayer) {
  auto j = ojson::parse(io::read_file(testutil::fixture("toy2.json")));
  j["classifiers"][1]["centroids"][0] = {1.0, 2.0, 3.0};
  const auto msg = error_of([&] { model_from_json(j); });
  EXPECT_NE(msg.find("classifiers[1].centroids[0]"), std::string::npos) << msg;
  EXPECT_NE(msg.find("dimension"), std::string::npos) << msg;
}

TEST(ModelIo, RejectsBadVersionUnknownFieldsAndWrongTypes) {
  const auto base = ojson::parse(io::read_file(testutil::fixture("toy2.json")));
  auto j = base;
  j["format_version"] = "2";
  EXPECT_NE(error_of([&] { model_from_json(j); }).find("format_version"), std::string::npos);
  j = base;
  j["layers"][0]["extra"] = 1;
  EXPECT_NE(error_of([&] { model_from_json(j); }).find("layers[0].extra"), std::string::npos);
  j = base;
  j["classifiers"][0]["threshold"] = "high";
  EXPECT_NE(error_of([&] { model_from_json(j); }).find("classifiers[0].threshold"),
            std::string::npos);
  j = base;
  j["layers"][1]["weights"].erase(0);
  EXPECT_NE(error_of([&] { model_from_json(j); }).find("layers[1].weights"), std::string::npos);
}

TEST(ModelIo, MissingFileNamesPath) {
  const auto msg = error_of([] { load_model("/nonexistent/m.json"); });
  EXPECT_NE(msg.find("/nonexistent/m.json"), std::string::npos);
}

TEST(TraceIo, ParsesAndInfersEnd) {
  const auto tr = load_trace(testutil::fixture("worked_example_trace.csv"));
  ASSERT_EQ(tr.samples.size(), 7u);
  EXPECT_EQ(tr.trace_end_us, 12'000'000);
  EXPECT_EQ(tr.power_at(5'500'000), 4000);
  EXPECT_EQ(parse_trace_csv("t_us,power_uw\n5,7\n").trace_end_us, 5);
}

TEST(TraceIo, Errors) {
  EXPECT_EQ(error_of([] { parse_trace_csv("t_us,power_uw\n", "x.csv"); }), "x.csv: no samples");
  const auto msg = error_of([] { parse_trace_csv("t_us,power_uw\n0,1\n5,1\n3,1\n", "x.csv"); });
  EXPECT_EQ(msg, "x.csv:4: timestamps out of order");
  EXPECT_NE(error_of([] { parse_trace_csv("time,power\n0,1\n", "x.csv"); }).find("x.csv:1"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_trace_csv("t_us,power_uw\n0,-1\n", "x.csv"); }).find("negative"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_trace_csv("t_us,power_uw\n0,1x\n", "x.csv"); }).find("x.csv:2"),
            std::string::npos);
}

TEST(TraceIo, CsvRoundTripKeepsLength) {
  HarvestTrace tr;
  tr.samples = {{0, 10}, {100, 0}, {250, 30}};
  tr.trace_end_us = 1000;
  const auto back = parse_trace_csv(trace_to_csv(tr));
  for (std::int64_t t = 0; t < 1200; t += 7) EXPECT_EQ(back.power_at(t), tr.power_at(t)) << t;
  EXPECT_EQ(back.trace_end_us, tr.trace_end_us);
  tr.trace_end_us = 252;
  EXPECT_EQ(parse_trace_csv(trace_to_csv(tr)).trace_end_us, 252);
  tr.trace_end_us = 251;
  EXPECT_THROW(trace_to_csv(tr), ValidationError);
}

TEST(ProfileIo, RoundTrip) {
  const auto s = testutil::markov_series(5000, 0.9, 0.7, 3);
  const auto p = harvest_profile(s, 20);
  const auto e = eta_factor(p);
  const auto [p2, e2] = profile_from_json(ojson::parse(profile_to_json(p, e).dump()));
  EXPECT_EQ(e2.eta, e.eta);
  EXPECT_EQ(e2.kw_observed, e.kw_observed);
  EXPECT_EQ(p2.marginal_rate, p.marginal_rate);
  ASSERT_EQ(p2.h.size(), p.h.size());
  for (const auto& [n, c] : p.h) {
    EXPECT_EQ(p2.h.at(n).p, c.p);
    EXPECT_EQ(p2.h.at(n).count, c.count);
  }
}

TEST(ConfigIo, ParsesWorkedExample) {
  const auto c = load_config(testutil::fixture("worked_example.json"));
  ASSERT_EQ(c.tasks.size(), 1u);
  EXPECT_EQ(c.tasks[0].task.units.size(), 4u);
  EXPECT_EQ(c.tasks[0].release_times_us, (std::vector<std::int64_t>{1'000'000, 3'000'000}));
  EXPECT_EQ(c.capacitor.e_opt_uj, 4000);
  EXPECT_EQ(c.initial_energy_uj, 2400);
  EXPECT_TRUE(std::holds_alternative<TraceSource>(c.source));
  EXPECT_EQ(*c.eta.value, 1.0);
}

TEST(ConfigIo, Defaults) {
  const auto c = config_from_json(minimal_config());
  EXPECT_EQ(c.policy, Policy::zygarde);
  EXPECT_EQ(c.queue_capacity, 3u);
  EXPECT_EQ(c.capacitor.e_off_uj, 100);
  EXPECT_EQ(c.capacitor.e_on_uj, 200);
  EXPECT_EQ(c.capacitor.e_opt_uj, 1000);
  EXPECT_FALSE(c.eta.value);
  EXPECT_EQ(c.eta.n_max, 50);
  EXPECT_FALSE(c.clock.chrt);
  EXPECT_TRUE(std::holds_alternative<FixedWorkload>(c.tasks[0].workload));
}

TEST(ConfigIo, ErrorsNameTheField) {
  auto j = minimal_config();
  j["bogus"] = 1;
  EXPECT_EQ(error_of([&] { config_from_json(j); }), "bogus: unknown field");
  j = minimal_config();
  j["taskset"][0]["units"][0]["exec_us"] = -5;
  EXPECT_NE(error_of([&] { config_from_json(j); }).find("units[0].exec_us"), std::string::npos);
  j = minimal_config();
  j["capacitor"].erase("e_man_uj");
  EXPECT_EQ(error_of([&] { config_from_json(j); }), "capacitor.e_man_uj: missing");
  j = minimal_config();
  j["scheduler"] = {{"policy", "fifo"}};
  EXPECT_NE(error_of([&] { config_from_json(j); }).find("fifo"), std::string::npos);
  j = minimal_config();
  j["eta"] = {{"value", 0.5}, {"estimate", ojson::object()}};
  EXPECT_NE(error_of([&] { config_from_json(j); }).find("eta"), std::string::npos);
  j = minimal_config();
  j["clock"] = {{"kind", "chrt"}, {"p_correct", 1.5}, {"errors", ojson::array()}};
  EXPECT_NE(error_of([&] { config_from_json(j); }).find("p_correct"), std::string::npos);
  j = minimal_config();
  j["energy_source"] = {{"kind", "trace"}, {"path", "missing.csv"}};
  EXPECT_NE(error_of([&] { config_from_json(j, "/nowhere"); }).find("/nowhere/missing.csv"),
            std::string::npos);
}

TEST(ReportIo, RoundTripAndCsv) {
  const auto rep = run(load_config(testutil::fixture("worked_example.json")));
  const auto text = report_to_string(rep);
  const auto back = report_from_json(io::parse_json(text, "r"));
  EXPECT_EQ(back.aggregates, rep.aggregates);
  EXPECT_EQ(back.energy, rep.energy);
  EXPECT_EQ(back.jobs, rep.jobs);
  EXPECT_EQ(report_to_string(back), text);

  const auto csv = jobs_to_csv(rep);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header,
            "task,release_us,deadline_us,units,mandatory_done,correct,completion_us,discard_reason");
  std::size_t rows = 0;
  for (std::string l; std::getline(in, l);) ++rows;
  EXPECT_EQ(rows, rep.jobs.size());
}

TEST(DatasetIo, LoadsWithAndWithoutHeader) {
  const auto p = temp_path("data.csv");
  io::write_file(p, "label,f0,f1\n0,1.5,2\n1,-1,0\n");
  auto s = io::load_dataset_csv(p);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].label, 1);
  EXPECT_EQ(s[0].features, (std::vector<double>{1.5, 2}));
  io::write_file(p, "0,1\n1,2,3\n");
  EXPECT_NE(error_of([&] { io::load_dataset_csv(p); }).find(":2:"), std::string::npos);
  std::filesystem::remove(p);
}
