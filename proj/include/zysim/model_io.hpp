#ifndef ZYSIM_MODEL_IO_HPP
#define ZYSIM_MODEL_IO_HPP

// JSON and CSV formats: model files (the trainer boundary), harvest traces,
// simulation configs, reports and per-job CSV.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "zysim/energy.hpp"
#include "zysim/error.hpp"
#include "zysim/inference.hpp"
#include "zysim/sim.hpp"

namespace zysim {

using ojson = nlohmann::ordered_json;

inline constexpr const char* kFormatVersion = "1";

struct Provenance {
  std::string trainer;
  std::string dataset;
  std::uint64_t seed = 0;
};

struct ModelFile {
  AgileModel model;
  Provenance provenance;
};

namespace io {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline ojson parse_json(const std::string& text, const std::string& what) {
  try {
    return ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

inline std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

/// Strict typed field access: every problem names the field path.
class Reader {
 public:
  Reader(const ojson& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  const std::string& path() const { return path_; }
  [[noreturn]] void fail(const std::string& msg) const { throw ValidationError(path_ + ": " + msg); }

  bool has(const char* key) const { return j_.contains(key); }

  const ojson& at(const char* key) const {
    if (!j_.contains(key)) throw ValidationError(sub(key) + ": missing");
    return j_.at(key);
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  /// Rejects keys outside `allowed`.
  void only(std::initializer_list<const char*> allowed) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || it.key() == a;
      if (!ok) throw ValidationError(sub(it.key()) + ": unknown field");
    }
  }

  template <class T>
  T get(const char* key) const {
    return convert<T>(at(key), sub(key));
  }

  template <class T>
  T get_or(const char* key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  template <class T>
  static T convert(const ojson& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError(where + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError(where + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ValidationError(where + ": expected a number");
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw ValidationError(where + ": non-finite number");
      return d;
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ValidationError(where + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
        const auto x = v.get<std::int64_t>();
        if (x < 0) throw ValidationError(where + ": expected a nonnegative integer");
        return static_cast<T>(x);
      } else {
        if (v.is_number_unsigned() &&
            v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<T>::max()))
          throw ValidationError(where + ": integer out of range");
        return static_cast<T>(v.get<std::int64_t>());
      }
    } else {
      // std::vector<U>
      if (!v.is_array()) throw ValidationError(where + ": expected an array");
      T out;
      out.reserve(v.size());
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

 private:
  const ojson& j_;
  std::string path_;
};

}  // namespace io

// ---------------------------------------------------------------------------
// Model file

inline ojson model_to_json(const ModelFile& mf) {
  const AgileModel& m = mf.model;
  ojson j;
  j["format_version"] = kFormatVersion;
  j["provenance"] = {{"trainer", mf.provenance.trainer},
                     {"dataset", mf.provenance.dataset},
                     {"seed", mf.provenance.seed}};
  ojson layers = ojson::array();
  for (const auto& L : m.layers) {
    ojson l;
    l["kind"] = L.kind == LayerKind::dense ? "dense" : "convolution";
    l["input"] = L.input_shape;
    l["shape"] = L.weight_shape;
    l["weights"] = L.weights;
    l["bias"] = L.bias;
    l["activation"] = L.activation == Activation::relu ? "relu" : "none";
    if (L.pool)
      l["pool"] = {{"size", {L.pool->size_h, L.pool->size_w}},
                   {"stride", {L.pool->stride_h, L.pool->stride_w}}};
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
  ojson cls = ojson::array();
  for (const auto& c : m.classifiers) {
    ojson o;
    o["centroids"] = c.kmeans.centroids;
    o["centroids_full"] = c.kmeans.centroids_full;
    o["labels"] = c.kmeans.labels;
    o["sizes"] = c.kmeans.sizes;
    o["feature_indices"] = c.feature_indices;
    o["threshold"] = c.threshold;
    o["psi_max"] = c.psi_max;
    cls.push_back(std::move(o));
  }
  j["classifiers"] = std::move(cls);
  j["coefficients"] = m.coefficients;
  return j;
}

inline ModelFile model_from_json(const ojson& j) {
  using io::Reader;
  Reader r(j, "");
  r.only({"format_version", "provenance", "layers", "classifiers", "coefficients"});
  const auto version = r.get<std::string>("format_version");
  if (version != kFormatVersion)
    throw ValidationError("format_version: unsupported version '" + version + "'");

  ModelFile mf;
  if (r.has("provenance")) {
    Reader p(r.at("provenance"), "provenance");
    p.only({"trainer", "dataset", "seed"});
    mf.provenance.trainer = p.get_or<std::string>("trainer", "");
    mf.provenance.dataset = p.get_or<std::string>("dataset", "");
    mf.provenance.seed = p.get_or<std::uint64_t>("seed", 0);
  }

  const ojson& layers = r.at("layers");
  if (!layers.is_array()) throw ValidationError("layers: expected an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Reader l(layers[i], "layers[" + std::to_string(i) + "]");
    l.only({"kind", "input", "shape", "weights", "bias", "activation", "pool"});
    Layer L;
    const auto kind = l.get<std::string>("kind");
    if (kind == "dense") L.kind = LayerKind::dense;
    else if (kind == "convolution") L.kind = LayerKind::convolution;
    else l.fail("unknown kind '" + kind + "'");
    L.input_shape = l.get<std::vector<std::size_t>>("input");
    L.weight_shape = l.get<std::vector<std::size_t>>("shape");
    L.weights = l.get<std::vector<double>>("weights");
    L.bias = l.get<std::vector<double>>("bias");
    const auto act = l.get<std::string>("activation");
    if (act == "relu") L.activation = Activation::relu;
    else if (act == "none") L.activation = Activation::none;
    else l.fail("unknown activation '" + act + "'");
    if (l.has("pool")) {
      Reader p(l.at("pool"), l.sub("pool"));
      p.only({"size", "stride"});
      const auto size = p.get<std::vector<std::size_t>>("size");
      const auto stride = p.get<std::vector<std::size_t>>("stride");
      if (size.size() != 2 || stride.size() != 2) p.fail("size and stride need two values");
      L.pool = Pool{size[0], size[1], stride[0], stride[1]};
    }
    mf.model.layers.push_back(std::move(L));
  }

  const ojson& cls = r.at("classifiers");
  if (!cls.is_array()) throw ValidationError("classifiers: expected an array");
  for (std::size_t i = 0; i < cls.size(); ++i) {
    Reader c(cls[i], "classifiers[" + std::to_string(i) + "]");
    c.only({"centroids", "centroids_full", "labels", "sizes", "feature_indices", "threshold",
            "psi_max"});
    LayerClassifier lc;
    lc.kmeans.centroids = c.get<std::vector<std::vector<double>>>("centroids");
    lc.kmeans.centroids_full = c.get<std::vector<std::vector<double>>>("centroids_full");
    lc.kmeans.labels = c.get<std::vector<int>>("labels");
    lc.kmeans.sizes = c.get<std::vector<std::int64_t>>("sizes");
    lc.feature_indices = c.get<std::vector<std::size_t>>("feature_indices");
    lc.threshold = c.get<double>("threshold");
    lc.psi_max = c.get<double>("psi_max");
    mf.model.classifiers.push_back(std::move(lc));
  }
  mf.model.coefficients = r.get_or<std::vector<double>>("coefficients", {});
  mf.model.validate();
  return mf;
}

inline ModelFile load_model_file(const std::filesystem::path& path) {
  const auto text = io::read_file(path);
  return model_from_json(io::parse_json(text, path.string()));
}

inline AgileModel load_model(const std::filesystem::path& path) {
  return load_model_file(path).model;
}

inline std::string model_to_string(const ModelFile& mf) { return io::dump(model_to_json(mf)); }

inline void save_model(const ModelFile& mf, const std::filesystem::path& path) {
  mf.model.validate();
  io::write_file(path, model_to_string(mf));
}

// ---------------------------------------------------------------------------
// Harvest traces: CSV `t_us,power_uw`. The last sample holds for the same
// interval as the one before it (a single-sample trace has zero length).

inline HarvestTrace parse_trace_csv(const std::string& text, const std::string& name = "trace") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  HarvestTrace tr;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header) {
      if (line != "t_us,power_uw")
        throw ValidationError(name + ":" + std::to_string(lineno) +
                              ": expected header 't_us,power_uw'");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    auto bad = [&](const std::string& why) {
      return ValidationError(name + ":" + std::to_string(lineno) + ": " + why);
    };
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw bad("expected two comma-separated fields");
    TraceSample s;
    try {
      std::size_t used = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      s.t_us = std::stoll(a, &used);
      if (used != a.size()) throw bad("malformed t_us '" + a + "'");
      s.power_uw = std::stoll(b, &used);
      if (used != b.size()) throw bad("malformed power_uw '" + b + "'");
    } catch (const std::logic_error&) {
      throw bad("malformed row '" + line + "'");
    }
    if (s.power_uw < 0) throw bad("negative power");
    if (!tr.samples.empty() && s.t_us <= tr.samples.back().t_us)
      throw bad("timestamps out of order");
    tr.samples.push_back(s);
  }
  if (!header) throw ValidationError(name + ": missing header 't_us,power_uw'");
  if (tr.samples.empty()) throw ValidationError(name + ": no samples");
  const auto n = tr.samples.size();
  tr.trace_end_us = n >= 2 ? 2 * tr.samples[n - 1].t_us - tr.samples[n - 2].t_us
                           : tr.samples[0].t_us;
  return tr;
}

inline HarvestTrace load_trace(const std::filesystem::path& path) {
  return parse_trace_csv(io::read_file(path), path.string());
}

/// Writes the samples; when the implicit end rule would not give
/// trace_end_us, repeats the last power level on one or two extra rows so it
/// does. Throws if no such rows exist.
inline std::string trace_to_csv(const HarvestTrace& tr) {
  tr.validate();
  std::ostringstream out;
  out << "t_us,power_uw\n";
  for (const auto& s : tr.samples) out << s.t_us << ',' << s.power_uw << '\n';
  const auto n = tr.samples.size();
  const auto& last = tr.samples.back();
  const std::int64_t implicit = n >= 2 ? 2 * last.t_us - tr.samples[n - 2].t_us : last.t_us;
  const std::int64_t end = tr.trace_end_us;
  if (implicit != end) {
    if (end - last.t_us >= 3) out << end - 2 << ',' << last.power_uw << '\n';
    if (end - last.t_us >= 2) {
      out << end - 1 << ',' << last.power_uw << '\n';
    } else {
      throw ValidationError("trace_to_csv: trace_end_us " + std::to_string(end) +
                            " cannot be expressed in the CSV format");
    }
  }
  return out.str();
}

inline void save_trace(const HarvestTrace& tr, const std::filesystem::path& path) {
  io::write_file(path, trace_to_csv(tr));
}

// ---------------------------------------------------------------------------
// Profile / eta export

inline ojson profile_to_json(const HarvestProfile& profile, const EtaFactor& eta) {
  ojson j;
  j["eta"] = eta.eta;
  j["kw_observed"] = eta.kw_observed;
  j["kw_random"] = eta.kw_random;
  ojson h = ojson::array();
  for (const auto& [n, c] : profile.h) h.push_back({{"n", n}, {"p", c.p}, {"count", c.count}});
  j["h"] = std::move(h);
  j["marginal_rate"] = profile.marginal_rate;
  return j;
}

inline std::pair<HarvestProfile, EtaFactor> profile_from_json(const ojson& j) {
  io::Reader r(j, "");
  r.only({"eta", "kw_observed", "kw_random", "h", "marginal_rate"});
  EtaFactor e{r.get<double>("eta"), r.get<double>("kw_observed"), r.get<double>("kw_random")};
  HarvestProfile p;
  p.marginal_rate = r.get<double>("marginal_rate");
  const ojson& h = r.at("h");
  if (!h.is_array()) throw ValidationError("h: expected an array");
  for (std::size_t i = 0; i < h.size(); ++i) {
    io::Reader row(h[i], "h[" + std::to_string(i) + "]");
    row.only({"n", "p", "count"});
    const int n = row.get<int>("n");
    p.h[n] = {row.get<double>("p"), row.get<std::size_t>("count")};
    p.n_max = std::max(p.n_max, std::abs(n));
  }
  return {p, e};
}

// ---------------------------------------------------------------------------
// Simulation config

namespace io {

inline std::vector<LabeledSample> load_dataset_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  std::vector<LabeledSample> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (lineno == 1 && !cells.empty() && cells[0] == "label") continue;  // header
    if (cells.size() < 2) throw ValidationError(where + ": expected label and features");
    LabeledSample s;
    try {
      std::size_t used = 0;
      s.label = std::stoi(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("label");
      for (std::size_t i = 1; i < cells.size(); ++i) {
        const double v = std::stod(cells[i], &used);
        if (used != cells[i].size() || !std::isfinite(v)) throw std::invalid_argument("value");
        s.features.push_back(v);
      }
    } catch (const std::logic_error&) {
      throw ValidationError(where + ": malformed row");
    }
    if (!out.empty() && s.features.size() != out.front().features.size())
      throw ValidationError(where + ": feature count differs from the first row");
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ValidationError(path.string() + ": no samples");
  return out;
}

inline Task task_from_json(const Reader& t) {
  Task task;
  task.id = t.get<int>("id");
  task.period_us = t.get<std::int64_t>("period_us");
  task.deadline_us = t.get<std::int64_t>("deadline_us");
  const ojson& units = t.at("units");
  if (!units.is_array()) t.fail("units: expected an array");
  for (std::size_t i = 0; i < units.size(); ++i) {
    Reader u(units[i], t.sub("units[" + std::to_string(i) + "]"));
    u.only({"exec_us", "energy_uj", "fragments"});
    task.units.push_back(
        {u.get<std::int64_t>("exec_us"), u.get<std::int64_t>("energy_uj"), u.get_or<int>("fragments", 1)});
  }
  task.release_overhead_us = t.get_or<std::int64_t>("release_overhead_us", 0);
  task.release_overhead_uj = t.get_or<std::int64_t>("release_overhead_uj", 0);
  task.imprecise = t.get_or<bool>("imprecise", true);
  task.constant_psi = t.get_or<double>("constant_psi", 0.0);
  if (t.has("mandatory_exec_us")) task.mandatory_exec_us = t.get<std::int64_t>("mandatory_exec_us");
  return task;
}

inline Workload workload_from_json(const Reader& w, const std::filesystem::path& base) {
  const auto kind = w.get<std::string>("kind");
  if (kind == "fixed") {
    w.only({"kind"});
    return FixedWorkload{};
  }
  if (kind == "script") {
    w.only({"kind", "jobs"});
    const ojson& jobs = w.at("jobs");
    if (!jobs.is_array()) w.fail("jobs: expected an array");
    std::vector<ScriptedJob> out;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      Reader j(jobs[i], w.sub("jobs[" + std::to_string(i) + "]"));
      j.only({"exit_unit", "correct_from", "psi"});
      out.push_back({j.get_or<std::size_t>("exit_unit", 0), j.get_or<std::size_t>("correct_from", 0),
                     j.get_or<std::vector<double>>("psi", {})});
    }
    return out;
  }
  if (kind == "stochastic") {
    w.only({"kind", "exit_probs", "accuracy"});
    return StochasticScript{w.get<std::vector<double>>("exit_probs"),
                            w.get<std::vector<double>>("accuracy")};
  }
  if (kind == "dataset") {
    w.only({"kind", "model", "data"});
    DatasetWorkload d;
    d.model = std::make_shared<const AgileModel>(load_model(base / w.get<std::string>("model")));
    d.samples = load_dataset_csv(base / w.get<std::string>("data"));
    return d;
  }
  w.fail("unknown workload kind '" + kind + "'");
}

}  // namespace io

/// Parses a config; relative paths resolve against `base`.
inline SimConfig config_from_json(const ojson& j, const std::filesystem::path& base = ".") {
  using io::Reader;
  Reader r(j, "");
  r.only({"seed", "duration_us", "taskset", "capacitor", "energy_source", "eta", "scheduler",
          "clock", "adaptation", "outages"});
  SimConfig c;
  c.seed = r.get_or<std::uint64_t>("seed", 0);
  c.duration_us = r.get<std::int64_t>("duration_us");

  const ojson& ts = r.at("taskset");
  if (!ts.is_array()) throw ValidationError("taskset: expected an array");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    Reader t(ts[i], "taskset[" + std::to_string(i) + "]");
    t.only({"id", "period_us", "deadline_us", "units", "release_overhead_us",
            "release_overhead_uj", "imprecise", "constant_psi", "mandatory_exec_us", "offset_us",
            "jitter_us", "release_times_us", "workload"});
    TaskSpec entry;
    entry.task = io::task_from_json(t);
    entry.offset_us = t.get_or<std::int64_t>("offset_us", 0);
    entry.jitter_us = t.get_or<std::int64_t>("jitter_us", 0);
    entry.release_times_us = t.get_or<std::vector<std::int64_t>>("release_times_us", {});
    if (t.has("workload")) entry.workload = io::workload_from_json(Reader(t.at("workload"), t.sub("workload")), base);
    c.tasks.push_back(std::move(entry));
  }

  {
    Reader cap(r.at("capacitor"), "capacitor");
    cap.only({"capacity_uj", "e_on_uj", "e_off_uj", "e_man_uj", "e_opt_uj", "initial_uj"});
    c.capacitor = CapacitorConfig::with_defaults(cap.get<std::int64_t>("capacity_uj"),
                                                 cap.get<std::int64_t>("e_man_uj"));
    c.capacitor.e_on_uj = cap.get_or<std::int64_t>("e_on_uj", c.capacitor.e_on_uj);
    c.capacitor.e_off_uj = cap.get_or<std::int64_t>("e_off_uj", c.capacitor.e_off_uj);
    c.capacitor.e_opt_uj = cap.get_or<std::int64_t>("e_opt_uj", c.capacitor.e_opt_uj);
    c.initial_energy_uj = cap.get_or<std::int64_t>("initial_uj", 0);
  }

  {
    Reader s(r.at("energy_source"), "energy_source");
    const auto kind = s.get<std::string>("kind");
    if (kind == "constant") {
      s.only({"kind", "power_uw"});
      c.source = ConstantSource{s.get<std::int64_t>("power_uw")};
    } else if (kind == "trace") {
      s.only({"kind", "path"});
      c.source = TraceSource{load_trace(base / s.get<std::string>("path"))};
    } else if (kind == "markov") {
      s.only({"kind", "stay_on", "stay_off", "power_on_uw", "slot_us", "start_on"});
      MarkovSource m;
      m.stay_on = s.get<double>("stay_on");
      m.stay_off = s.get<double>("stay_off");
      m.power_on_uw = s.get<std::int64_t>("power_on_uw");
      m.slot_us = s.get_or<std::int64_t>("slot_us", 1'000'000);
      m.start_on = s.get_or<bool>("start_on", true);
      c.source = m;
    } else {
      s.fail("unknown kind '" + kind + "'");
    }
  }

  if (r.has("eta")) {
    Reader e(r.at("eta"), "eta");
    e.only({"value", "estimate"});
    if (e.has("value") == e.has("estimate")) e.fail("give exactly one of value or estimate");
    if (e.has("value")) {
      c.eta.value = e.get<double>("value");
    } else {
      Reader est(e.at("estimate"), "eta.estimate");
      est.only({"dk_uj", "dt_us", "n_max"});
      c.eta.dk_uj = est.get_or<std::int64_t>("dk_uj", 0);
      c.eta.dt_us = est.get_or<std::int64_t>("dt_us", 1'000'000);
      c.eta.n_max = est.get_or<int>("n_max", 50);
    }
  }

  if (r.has("scheduler")) {
    Reader s(r.at("scheduler"), "scheduler");
    s.only({"policy", "alpha", "beta", "queue_capacity", "persistent"});
    if (s.has("policy")) c.policy = parse_policy(s.get<std::string>("policy"));
    if (s.has("alpha")) c.alpha = s.get<double>("alpha");
    if (s.has("beta")) c.beta = s.get<double>("beta");
    c.queue_capacity = s.get_or<std::size_t>("queue_capacity", 3);
    c.persistent = s.get_or<bool>("persistent", false);
  }

  if (r.has("clock")) {
    Reader k(r.at("clock"), "clock");
    const auto kind = k.get<std::string>("kind");
    if (kind == "perfect") {
      k.only({"kind"});
    } else if (kind == "chrt") {
      k.only({"kind", "p_correct", "errors"});
      c.clock.chrt = true;
      c.clock.p_correct = k.get<double>("p_correct");
      const ojson& errs = k.at("errors");
      if (!errs.is_array()) k.fail("errors: expected an array");
      for (std::size_t i = 0; i < errs.size(); ++i) {
        Reader e(errs[i], "clock.errors[" + std::to_string(i) + "]");
        e.only({"offset_us", "p"});
        c.clock.errors.push_back({e.get<std::int64_t>("offset_us"), e.get<double>("p")});
      }
    } else {
      k.fail("unknown kind '" + kind + "'");
    }
  }

  if (r.has("adaptation")) {
    Reader a(r.at("adaptation"), "adaptation");
    a.only({"enabled", "weight", "propagate"});
    c.adaptation.enabled = a.get_or<bool>("enabled", true);
    c.adaptation.weight = a.get_or<double>("weight", 0.05);
    c.adaptation.propagate = a.get_or<bool>("propagate", true);
  }

  if (r.has("outages")) {
    const ojson& os = r.at("outages");
    if (!os.is_array()) throw ValidationError("outages: expected an array");
    for (std::size_t i = 0; i < os.size(); ++i) {
      Reader o(os[i], "outages[" + std::to_string(i) + "]");
      o.only({"start_us", "duration_us"});
      c.outages.push_back({o.get<std::int64_t>("start_us"), o.get<std::int64_t>("duration_us")});
    }
  }

  c.validate();
  return c;
}

inline SimConfig load_config(const std::filesystem::path& path) {
  const auto j = io::parse_json(io::read_file(path), path.string());
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Report

inline std::string units_field(const JobRecord& r) {
  std::string s;
  for (const auto& u : r.units) {
    if (!s.empty()) s += ';';
    s += std::to_string(u.unit) + (u.optional ? "o@" : "m@") + std::to_string(u.end_us);
  }
  return s;
}

inline ojson report_to_json(const SimReport& rep) {
  const auto& a = rep.aggregates;
  ojson j;
  j["format_version"] = kFormatVersion;
  j["aggregates"] = {{"jobs_released", a.jobs_released},
                     {"jobs_scheduled", a.jobs_scheduled},
                     {"jobs_correct", a.jobs_correct},
                     {"deadline_misses", a.deadline_misses},
                     {"jobs_dropped", a.jobs_dropped},
                     {"reboots", a.reboots},
                     {"power_on_fraction", a.power_on_fraction},
                     {"avg_units_per_job", a.avg_units_per_job},
                     {"optional_units", a.optional_units},
                     {"energy_wasted_uj", a.energy_wasted_uj},
                     {"eta", a.eta}};
  j["energy"] = {{"initial_pj", rep.energy.initial_pj},
                 {"harvested_pj", rep.energy.harvested_pj},
                 {"consumed_pj", rep.energy.consumed_pj},
                 {"wasted_pj", rep.energy.wasted_pj},
                 {"final_pj", rep.energy.final_pj}};
  j["end_us"] = rep.end_us;
  ojson jobs = ojson::array();
  for (const auto& r : rep.jobs) {
    ojson o;
    o["id"] = r.id;
    o["task"] = r.task_id;
    o["seq"] = r.seq;
    o["release_us"] = r.release_us;
    o["deadline_us"] = r.deadline_us;
    ojson units = ojson::array();
    for (const auto& u : r.units)
      units.push_back({{"unit", u.unit}, {"optional", u.optional}, {"start_us", u.start_us},
                       {"end_us", u.end_us}});
    o["units"] = std::move(units);
    o["mandatory_done"] = r.mandatory_done;
    o["correct"] = r.correct;
    o["completion_us"] = r.completion_us ? ojson(*r.completion_us) : ojson(nullptr);
    o["discard_reason"] = r.discard_reason;
    o["label"] = r.label;
    jobs.push_back(std::move(o));
  }
  j["jobs"] = std::move(jobs);
  return j;
}

inline SimReport report_from_json(const ojson& j) {
  using io::Reader;
  Reader r(j, "");
  r.only({"format_version", "aggregates", "energy", "end_us", "jobs"});
  if (r.get<std::string>("format_version") != kFormatVersion)
    throw ValidationError("format_version: unsupported version");
  SimReport rep;
  {
    Reader a(r.at("aggregates"), "aggregates");
    auto& g = rep.aggregates;
    g.jobs_released = a.get<std::int64_t>("jobs_released");
    g.jobs_scheduled = a.get<std::int64_t>("jobs_scheduled");
    g.jobs_correct = a.get<std::int64_t>("jobs_correct");
    g.deadline_misses = a.get<std::int64_t>("deadline_misses");
    g.jobs_dropped = a.get<std::int64_t>("jobs_dropped");
    g.reboots = a.get<std::int64_t>("reboots");
    g.power_on_fraction = a.get<double>("power_on_fraction");
    g.avg_units_per_job = a.get<double>("avg_units_per_job");
    g.optional_units = a.get<std::int64_t>("optional_units");
    g.energy_wasted_uj = a.get<double>("energy_wasted_uj");
    g.eta = a.get<double>("eta");
  }
  {
    Reader e(r.at("energy"), "energy");
    rep.energy = {e.get<std::int64_t>("initial_pj"), e.get<std::int64_t>("harvested_pj"),
                  e.get<std::int64_t>("consumed_pj"), e.get<std::int64_t>("wasted_pj"),
                  e.get<std::int64_t>("final_pj")};
  }
  rep.end_us = r.get<std::int64_t>("end_us");
  const ojson& jobs = r.at("jobs");
  if (!jobs.is_array()) throw ValidationError("jobs: expected an array");
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    Reader o(jobs[i], "jobs[" + std::to_string(i) + "]");
    JobRecord rec;
    rec.id = o.get<std::uint64_t>("id");
    rec.task_id = o.get<int>("task");
    rec.seq = o.get<std::size_t>("seq");
    rec.release_us = o.get<std::int64_t>("release_us");
    rec.deadline_us = o.get<std::int64_t>("deadline_us");
    const ojson& units = o.at("units");
    for (std::size_t k = 0; k < units.size(); ++k) {
      Reader u(units[k], o.sub("units[" + std::to_string(k) + "]"));
      rec.units.push_back({rec.id, rec.task_id, rec.seq, u.get<std::size_t>("unit"),
                           u.get<bool>("optional"), u.get<std::int64_t>("start_us"),
                           u.get<std::int64_t>("end_us")});
    }
    rec.mandatory_done = o.get<bool>("mandatory_done");
    rec.correct = o.get<bool>("correct");
    if (!o.at("completion_us").is_null()) rec.completion_us = o.get<std::int64_t>("completion_us");
    rec.discard_reason = o.get<std::string>("discard_reason");
    rec.label = o.get<int>("label");
    rep.jobs.push_back(std::move(rec));
  }
  return rep;
}

inline std::string report_to_string(const SimReport& rep) { return io::dump(report_to_json(rep)); }

inline void save_report(const SimReport& rep, const std::filesystem::path& path) {
  io::write_file(path, report_to_string(rep));
}

inline SimReport load_report(const std::filesystem::path& path) {
  return report_from_json(io::parse_json(io::read_file(path), path.string()));
}

inline std::string jobs_to_csv(const SimReport& rep) {
  std::ostringstream out;
  out << "task,release_us,deadline_us,units,mandatory_done,correct,completion_us,discard_reason\n";
  for (const auto& r : rep.jobs) {
    out << r.task_id << ',' << r.release_us << ',' << r.deadline_us << ',' << units_field(r) << ','
        << (r.mandatory_done ? "true" : "false") << ',' << (r.correct ? "true" : "false") << ',';
    if (r.completion_us) out << *r.completion_us;
    out << ',' << r.discard_reason << '\n';
  }
  return out.str();
}

inline void save_jobs_csv(const SimReport& rep, const std::filesystem::path& path) {
  io::write_file(path, jobs_to_csv(rep));
}

}  // namespace zysim

#endif  // ZYSIM_MODEL_IO_HPP
