#ifndef ZYSIM_SIM_HPP
#define ZYSIM_SIM_HPP

// Deterministic discrete-event simulation of imprecise DNN jobs on a
// capacitor-buffered, intermittently powered device.
//
// Time is an integer microsecond clock. The engine advances from one event
// to the next: job release, fragment completion, power on/off, an energy
// threshold crossing while idle, a job deadline (as seen through the possibly
// wrong clock), a change in harvested power, or a forced outage boundary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "zysim/energy.hpp"
#include "zysim/error.hpp"
#include "zysim/inference.hpp"
#include "zysim/power.hpp"
#include "zysim/rng.hpp"
#include "zysim/scheduler.hpp"
#include "zysim/tasks.hpp"

namespace zysim {

// ---------------------------------------------------------------------------
// Energy sources

struct ConstantSource {
  std::int64_t power_uw = 0;
};

/// Two-state chain sampled once per slot; ON emits power_on_uw, OFF nothing.
struct MarkovSource {
  double stay_on = 1.0;
  double stay_off = 1.0;
  std::int64_t power_on_uw = 0;
  std::int64_t slot_us = 1'000'000;
  bool start_on = true;
};

struct TraceSource {
  HarvestTrace trace;
};

using EnergySource = std::variant<ConstantSource, MarkovSource, TraceSource>;

inline HarvestTrace generate_markov_source(double stay_on, double stay_off,
                                           std::int64_t power_on_uw, std::int64_t duration_us,
                                           std::uint64_t seed,
                                           std::int64_t slot_us = 1'000'000,
                                           bool start_on = true) {
  require(stay_on >= 0.0 && stay_on <= 1.0 && stay_off >= 0.0 && stay_off <= 1.0,
          "markov source: probabilities must lie in [0, 1]");
  require(duration_us > 0, "markov source: duration must be positive");
  require(slot_us > 0, "markov source: slot_us must be positive");
  require(power_on_uw >= 0, "markov source: power_on_uw must be >= 0");
  Rng rng(seed);
  HarvestTrace tr;
  bool on = start_on;
  for (std::int64_t t = 0; t < duration_us; t += slot_us) {
    const std::int64_t p = on ? power_on_uw : 0;
    if (tr.samples.empty() || tr.samples.back().power_uw != p) tr.samples.push_back({t, p});
    on = on ? rng.bernoulli(stay_on) : !rng.bernoulli(stay_off);
  }
  const std::int64_t slots = (duration_us + slot_us - 1) / slot_us;
  tr.trace_end_us = slots * slot_us;
  return tr;
}

// ---------------------------------------------------------------------------
// Clock

struct ClockError {
  std::int64_t offset_us = 0;
  double p = 0.0;
};

/// perfect, or a remanence timekeeper that is right with p_correct and
/// otherwise off by one of the listed offsets (weights are normalized).
struct ClockModel {
  bool chrt = false;
  double p_correct = 1.0;
  std::vector<ClockError> errors;

  void validate() const {
    if (!chrt) return;
    require(p_correct >= 0.0 && p_correct <= 1.0, "clock: p_correct outside [0, 1]");
    double w = 0.0;
    for (const auto& e : errors) {
      require(e.p >= 0.0, "clock: negative error probability");
      w += e.p;
    }
    require(p_correct >= 1.0 || w > 0.0, "clock: p_correct < 1 needs an error distribution");
  }
};

inline std::int64_t observe_time(std::int64_t true_t_us, const ClockModel& clock, Rng& rng) {
  if (!clock.chrt || clock.p_correct >= 1.0) return true_t_us;
  if (rng.bernoulli(clock.p_correct)) return true_t_us;
  double total = 0.0;
  for (const auto& e : clock.errors) total += e.p;
  double u = rng.uniform() * total;
  for (const auto& e : clock.errors) {
    if (u < e.p) return true_t_us + e.offset_us;
    u -= e.p;
  }
  return true_t_us + clock.errors.back().offset_us;
}

// ---------------------------------------------------------------------------
// Workloads: where unit outcomes come from

/// Replays a fixed decision: the utility test first passes at exit_unit
/// (1-based, 0 = never) and the result is correct iff the last executed unit
/// is at least correct_from (0 = always correct).
struct ScriptedJob {
  std::size_t exit_unit = 0;
  std::size_t correct_from = 0;
  std::vector<double> psi;  // per unit; defaults to 0 before the exit unit, 1 after
};

/// Draws a ScriptedJob-like outcome per job: exit_probs[l] is the chance that
/// the first pass happens at unit l+1 (remaining mass: never), accuracy[l] the
/// chance the result is right when unit l+1 is the last one executed.
struct StochasticScript {
  std::vector<double> exit_probs;
  std::vector<double> accuracy;
};

struct LabeledSample {
  int label = 0;
  std::vector<double> features;
};

struct DatasetWorkload {
  std::shared_ptr<const AgileModel> model;
  std::vector<LabeledSample> samples;
};

/// Non-DNN task: every unit mandatory, constant utility, always correct.
struct FixedWorkload {};

using Workload = std::variant<FixedWorkload, std::vector<ScriptedJob>, StochasticScript,
                              DatasetWorkload>;

struct TaskSpec {
  Task task;
  std::int64_t offset_us = 0;
  std::int64_t jitter_us = 0;                   // extra uniform delay per release
  std::vector<std::int64_t> release_times_us;   // explicit releases override the period
  Workload workload = FixedWorkload{};
};

struct EtaSetting {
  std::optional<double> value;    // fixed eta
  std::int64_t dk_uj = 0;         // 0: use E_man
  std::int64_t dt_us = 1'000'000;
  int n_max = 50;
};

struct AdaptationConfig {
  bool enabled = true;
  double weight = 0.05;
  bool propagate = true;
};

/// Power forced off over [start_us, start_us + duration_us), as if the
/// supply browned out regardless of the stored energy.
struct Outage {
  std::int64_t start_us = 0;
  std::int64_t duration_us = 0;
};

struct SimConfig {
  std::vector<TaskSpec> tasks;
  CapacitorConfig capacitor;
  std::int64_t initial_energy_uj = 0;
  EnergySource source = ConstantSource{};
  EtaSetting eta;
  Policy policy = Policy::zygarde;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::size_t queue_capacity = 3;
  bool persistent = false;
  ClockModel clock;
  std::int64_t duration_us = 0;
  std::uint64_t seed = 0;
  AdaptationConfig adaptation;
  std::vector<Outage> outages;

  void validate() const {
    require(!tasks.empty(), "config: taskset is empty");
    require(duration_us >= 0, "config: duration_us must be >= 0");
    capacitor.validate();
    require(initial_energy_uj >= 0 && initial_energy_uj <= capacitor.capacity_uj,
            "config: initial_energy_uj outside [0, capacity]");
    require(queue_capacity >= 1, "config: queue_capacity must be >= 1");
    if (alpha) require(*alpha > 0.0, "config: alpha must be positive");
    if (beta) require(*beta > 0.0, "config: beta must be positive");
    if (eta.value) require(*eta.value >= 0.0 && *eta.value <= 1.0, "config: eta outside [0, 1]");
    require(eta.dt_us > 0 && eta.dk_uj >= 0 && eta.n_max >= 1, "config: invalid eta estimate");
    require(adaptation.weight > 0.0 && adaptation.weight < 1.0,
            "config: adaptation weight must lie in (0, 1)");
    clock.validate();
    std::vector<int> ids;
    for (const auto& ts : tasks) {
      ts.task.validate();
      ids.push_back(ts.task.id);
      const std::string p = "task " + std::to_string(ts.task.id);
      require(ts.offset_us >= 0 && ts.jitter_us >= 0, p + ": offset/jitter must be >= 0");
      for (std::size_t i = 1; i < ts.release_times_us.size(); ++i)
        require(ts.release_times_us[i] >= ts.release_times_us[i - 1] + ts.task.period_us,
                p + ": release_times_us violate the minimum separation");
      const std::size_t L = ts.task.units.size();
      if (const auto* s = std::get_if<std::vector<ScriptedJob>>(&ts.workload)) {
        require(!s->empty(), p + ": empty script");
        for (const auto& j : *s) {
          require(j.exit_unit <= L, p + ": script exit_unit beyond unit count");
          require(j.psi.empty() || j.psi.size() == L, p + ": script psi needs one value per unit");
        }
      } else if (const auto* s = std::get_if<StochasticScript>(&ts.workload)) {
        require(s->exit_probs.size() == L && s->accuracy.size() == L,
                p + ": stochastic script needs one exit_prob and accuracy per unit");
        double sum = 0.0;
        for (double x : s->exit_probs) {
          require(x >= 0.0 && x <= 1.0, p + ": exit_probs outside [0, 1]");
          sum += x;
        }
        require(sum <= 1.0 + 1e-9, p + ": exit_probs sum above 1");
        for (double a : s->accuracy) require(a >= 0.0 && a <= 1.0, p + ": accuracy outside [0, 1]");
      } else if (const auto* d = std::get_if<DatasetWorkload>(&ts.workload)) {
        require(d->model != nullptr, p + ": dataset workload without a model");
        require(d->model->layer_count() == L, p + ": unit count != model layer count");
        require(!d->samples.empty(), p + ": empty dataset");
        for (const auto& s : d->samples)
          require(s.features.size() == d->model->layers.front().input_size(),
                  p + ": dataset vector size != model input size");
      }
    }
    std::sort(ids.begin(), ids.end());
    require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), "config: duplicate task id");
    if (const auto* m = std::get_if<MarkovSource>(&source)) {
      require(m->stay_on >= 0.0 && m->stay_on <= 1.0 && m->stay_off >= 0.0 && m->stay_off <= 1.0,
              "config: markov probabilities outside [0, 1]");
      require(m->slot_us > 0 && m->power_on_uw >= 0, "config: invalid markov source");
    } else if (const auto* c = std::get_if<ConstantSource>(&source)) {
      require(c->power_uw >= 0, "config: constant power must be >= 0");
    } else if (const auto* t = std::get_if<TraceSource>(&source)) {
      t->trace.validate();
    }
    for (const auto& o : outages)
      require(o.start_us >= 0 && o.duration_us > 0, "config: invalid outage window");
  }
};

// ---------------------------------------------------------------------------
// Report

struct UnitExec {
  std::uint64_t job_id = 0;
  int task_id = 0;
  std::size_t job_seq = 0;
  std::size_t unit = 0;  // 1-based
  bool optional = false;
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
};

struct JobRecord {
  std::uint64_t id = 0;
  int task_id = 0;
  std::size_t seq = 0;
  std::int64_t release_us = 0;
  std::int64_t deadline_us = 0;
  std::vector<UnitExec> units;
  bool mandatory_done = false;  // mandatory part finished by the true deadline
  bool correct = false;
  std::optional<std::int64_t> completion_us;  // when the mandatory part finished
  std::string discard_reason = "none";        // none | deadline | overflow
  int label = -1;

  friend bool operator==(const JobRecord& a, const JobRecord& b) {
    auto key = [](const JobRecord& r) {
      return std::tie(r.id, r.task_id, r.seq, r.release_us, r.deadline_us, r.mandatory_done,
                      r.correct, r.completion_us, r.discard_reason, r.label);
    };
    if (key(a) != key(b) || a.units.size() != b.units.size()) return false;
    for (std::size_t i = 0; i < a.units.size(); ++i) {
      const auto &x = a.units[i], &y = b.units[i];
      if (x.unit != y.unit || x.optional != y.optional || x.start_us != y.start_us ||
          x.end_us != y.end_us)
        return false;
    }
    return true;
  }
};

struct Aggregates {
  std::int64_t jobs_released = 0;
  std::int64_t jobs_scheduled = 0;
  std::int64_t jobs_correct = 0;
  std::int64_t deadline_misses = 0;
  std::int64_t jobs_dropped = 0;  // queue overflow
  std::int64_t reboots = 0;
  double power_on_fraction = 0.0;
  double avg_units_per_job = 0.0;
  std::int64_t optional_units = 0;
  double energy_wasted_uj = 0.0;
  double eta = 0.0;

  friend bool operator==(const Aggregates&, const Aggregates&) = default;
};

/// Exact energy flows in picojoules.
struct EnergyLedger {
  std::int64_t initial_pj = 0;
  std::int64_t harvested_pj = 0;
  std::int64_t consumed_pj = 0;
  std::int64_t wasted_pj = 0;
  std::int64_t final_pj = 0;

  friend bool operator==(const EnergyLedger&, const EnergyLedger&) = default;
};

/// One scheduler invocation and what it saw.
struct Decision {
  struct Candidate {
    std::uint64_t job_id = 0;
    int task_id = 0;
    std::size_t job_seq = 0;
    std::size_t unit = 0;  // 1-based
    bool optional = false;
    std::int64_t deadline_us = 0;
    double priority = 0.0;
    bool eligible = false;
  };
  std::int64_t t_us = 0;
  std::int64_t reported_us = 0;
  std::int64_t e_curr_uj = 0;
  bool below_e_man = false;
  bool energy_confident = false;
  std::vector<Candidate> candidates;
  std::optional<std::size_t> selected;  // index into candidates
};

struct SimReport {
  Aggregates aggregates;
  EnergyLedger energy;
  std::int64_t end_us = 0;
  std::vector<JobRecord> jobs;  // ordered by job id
  std::vector<UnitExec> units;  // completed units in execution order
  std::vector<Decision> decisions;
};

// ---------------------------------------------------------------------------
// Engine

namespace detail {

inline constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

/// Harvested power as a piecewise-constant function of time.
class PowerSignal {
 public:
  PowerSignal(const EnergySource& src, std::int64_t horizon_us, std::uint64_t seed) {
    if (const auto* c = std::get_if<ConstantSource>(&src)) {
      constant_ = c->power_uw;
    } else if (const auto* m = std::get_if<MarkovSource>(&src)) {
      trace_ = generate_markov_source(m->stay_on, m->stay_off, m->power_on_uw,
                                      std::max<std::int64_t>(horizon_us, 1),
                                      Rng::stream(seed, "markov").next(), m->slot_us,
                                      m->start_on);
    } else {
      trace_ = std::get<TraceSource>(src).trace;
    }
  }

  std::int64_t at(std::int64_t t) const { return trace_ ? trace_->power_at(t) : *constant_; }

  std::int64_t next_change_after(std::int64_t t) const {
    if (!trace_) return kNever;
    const auto n = trace_->next_change_after(t);
    return n < 0 ? kNever : n;
  }

  /// Trace covering [0, horizon) for eta estimation.
  HarvestTrace as_trace(std::int64_t horizon_us) const {
    if (trace_) return *trace_;
    HarvestTrace t;
    t.samples.push_back({0, *constant_});
    t.trace_end_us = horizon_us;
    return t;
  }

  bool is_constant() const { return constant_.has_value(); }

 private:
  std::optional<std::int64_t> constant_;
  std::optional<HarvestTrace> trace_;
};

/// Simulated span: the release window plus room for the last deadlines.
inline std::int64_t horizon_of(const SimConfig& cfg) {
  std::int64_t max_deadline = 1;
  for (const auto& ts : cfg.tasks) max_deadline = std::max(max_deadline, ts.task.deadline_us);
  return cfg.duration_us + 2 * max_deadline + 1;
}

inline double resolve_eta(const SimConfig& cfg, const PowerSignal& signal, std::int64_t horizon) {
  if (cfg.eta.value) return *cfg.eta.value;
  if (signal.is_constant()) return 1.0;
  const std::int64_t dk = cfg.eta.dk_uj > 0 ? cfg.eta.dk_uj
                                            : std::max<std::int64_t>(cfg.capacitor.e_man_uj, 1);
  const auto series = binarize_trace(signal.as_trace(horizon), dk, cfg.eta.dt_us);
  require(series.size() > static_cast<std::size_t>(cfg.eta.n_max),
          "eta estimate: source shorter than n_max slots; set eta explicitly");
  return eta_factor(harvest_profile(series, cfg.eta.n_max)).eta;
}

}  // namespace detail

class Engine {
 public:
  explicit Engine(SimConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    for (auto& ts : cfg_.tasks) {
      if (auto* d = std::get_if<DatasetWorkload>(&ts.workload)) {
        models_.push_back(*d->model);  // private, adaptable copy
      } else {
        models_.emplace_back();
      }
    }
  }

  SimReport run() {
    init();
    t_ = 0;
    handle_releases();
    if (ps_.device_on) invoke_scheduler();

    while (true) {
      const std::int64_t next = next_event_time();
      if (next == detail::kNever) break;
      advance_to(next);
      process_events();
    }
    return finish();
  }

 private:
  struct Running {
    std::uint64_t job_id = 0;
    Fragment fragment;
    std::int64_t start_us = 0;
    std::int64_t end_us = 0;
    std::int64_t load_uw = 0;
  };

  struct JobSide {
    std::size_t task_index = 0;
    ScriptedJob script;
    double correct_draw = 0.0;
    Tensor activation;
    std::optional<std::int64_t> unit_start_us;
    std::optional<std::int64_t> mandatory_completion_us;
    int sample_label = -1;
  };

  struct TaskState {
    std::optional<std::int64_t> next_release;
    std::optional<std::int64_t> prev_release;
    std::size_t seq = 0;
    std::size_t explicit_index = 0;
  };

  // -- setup ---------------------------------------------------------------

  void init() {
    std::int64_t max_deadline = 1;
    for (const auto& ts : cfg_.tasks) max_deadline = std::max(max_deadline, ts.task.deadline_us);
    const std::int64_t horizon = detail::horizon_of(cfg_);
    signal_.emplace(cfg_.source, horizon, cfg_.seed);

    eta_ = detail::resolve_eta(cfg_, *signal_, horizon);

    ctx_.alpha = cfg_.alpha.value_or(1.0 / static_cast<double>(max_deadline));
    ctx_.beta = cfg_.beta.value_or(1.0 / max_utility());
    ctx_.eta = eta_;
    ctx_.e_opt_uj = cfg_.capacitor.e_opt_uj;
    ctx_.e_man_uj = cfg_.capacitor.e_man_uj;
    ctx_.policy = cfg_.policy;
    ctx_.queue_capacity = cfg_.queue_capacity;
    ctx_.persistent = cfg_.persistent;

    ps_.e_pj = cfg_.initial_energy_uj * kPicoPerMicro;
    ps_.t_us = 0;
    ps_.device_on = !forced_off(0) && ps_.e_pj >= cfg_.capacitor.e_on_pj();
    ledger_.initial_pj = ps_.e_pj;

    clock_rng_.emplace(Rng::stream(cfg_.seed, "clock"));
    tstate_.resize(cfg_.tasks.size());
    for (std::size_t i = 0; i < cfg_.tasks.size(); ++i) {
      jitter_rngs_.push_back(Rng::stream(cfg_.seed, "jitter", i));
      schedule_first_release(i);
    }
  }

  double max_utility() const {
    double m = 0.0;
    for (const auto& ts : cfg_.tasks) {
      if (const auto* s = std::get_if<std::vector<ScriptedJob>>(&ts.workload)) {
        for (const auto& j : *s)
          for (double p : j.psi) m = std::max(m, p);
        m = std::max(m, 1.0);
      } else if (std::holds_alternative<StochasticScript>(ts.workload)) {
        m = std::max(m, 1.0);
      } else if (const auto* d = std::get_if<DatasetWorkload>(&ts.workload)) {
        for (const auto& c : d->model->classifiers) m = std::max(m, c.psi_max);
      } else {
        m = std::max(m, ts.task.constant_psi);
      }
    }
    return m > 0.0 ? m : 1.0;
  }

  void schedule_first_release(std::size_t i) {
    const auto& ts = cfg_.tasks[i];
    auto& st = tstate_[i];
    if (!ts.release_times_us.empty()) {
      st.next_release = ts.release_times_us.front();
      st.explicit_index = 0;
    } else {
      st.next_release = ts.offset_us + jitter(i);
    }
    if (*st.next_release >= cfg_.duration_us) st.next_release.reset();
  }

  std::int64_t jitter(std::size_t i) {
    const auto j = cfg_.tasks[i].jitter_us;
    return j > 0 ? static_cast<std::int64_t>(jitter_rngs_[i].below_or_equal(
                       static_cast<std::uint64_t>(j)))
                 : 0;
  }

  void schedule_next_release(std::size_t i) {
    const auto& ts = cfg_.tasks[i];
    auto& st = tstate_[i];
    const std::int64_t prev = *st.next_release;
    st.prev_release = prev;
    if (!ts.release_times_us.empty()) {
      ++st.explicit_index;
      if (st.explicit_index < ts.release_times_us.size())
        st.next_release = ts.release_times_us[st.explicit_index];
      else
        st.next_release.reset();
    } else {
      st.next_release = prev + ts.task.period_us + jitter(i);
    }
    if (st.next_release && *st.next_release >= cfg_.duration_us) st.next_release.reset();
  }

  // -- time advance ----------------------------------------------------------

  bool forced_off(std::int64_t t) const {
    for (const auto& o : cfg_.outages)
      if (t >= o.start_us && t < o.start_us + o.duration_us) return true;
    return false;
  }

  std::int64_t next_outage_boundary() const {
    std::int64_t n = detail::kNever;
    for (const auto& o : cfg_.outages) {
      if (o.start_us > t_) n = std::min(n, o.start_us);
      if (o.start_us + o.duration_us > t_) n = std::min(n, o.start_us + o.duration_us);
    }
    return n;
  }

  std::int64_t reported_now() const { return t_ + clock_offset_; }

  /// Smallest stored energy (uJ) at which eta * E >= E_opt.
  std::optional<std::int64_t> confident_energy_uj() const {
    const double opt = static_cast<double>(cfg_.capacitor.e_opt_uj);
    if (opt <= 0.0) return 0;
    if (eta_ <= 0.0) return std::nullopt;
    auto e = static_cast<std::int64_t>(std::ceil(opt / eta_));
    while (e > 0 && eta_ * static_cast<double>(e - 1) >= opt) --e;
    while (eta_ * static_cast<double>(e) < opt) ++e;
    return e;
  }

  std::int64_t next_event_time() const {
    std::int64_t n = detail::kNever;
    if (running_) n = std::min(n, running_->end_us);
    for (const auto& st : tstate_)
      if (st.next_release) n = std::min(n, *st.next_release);
    for (const auto& j : queue_) n = std::min(n, std::max(t_, j.deadline_us - clock_offset_));
    if (n == detail::kNever && queue_.empty()) return n;  // nothing left to happen

    n = std::min(n, signal_->next_change_after(t_));
    n = std::min(n, next_outage_boundary());
    if (!forced_off(t_)) {
      const std::int64_t harvest = signal_->at(t_);
      if (!ps_.device_on) {
        if (auto d = time_to_reach(ps_.e_pj, cfg_.capacitor.e_on_pj(), harvest)) n = std::min(n, t_ + *d);
      } else if (!running_ && !queue_.empty()) {
        // Re-evaluate when an idle device crosses E_man or the E_opt gate.
        std::vector<std::int64_t> targets = {cfg_.capacitor.e_man_uj};
        if (auto c = confident_energy_uj()) targets.push_back(*c);
        for (auto target_uj : targets) {
          const auto target_pj = std::min(target_uj, cfg_.capacitor.capacity_uj) * kPicoPerMicro;
          if (ps_.e_pj < target_pj)
            if (auto d = time_to_reach(ps_.e_pj, target_pj, harvest)) n = std::min(n, t_ + *d);
        }
      }
    }
    return std::max(n, t_);
  }

  /// Moves the power state forward to `target`, stopping at a transition.
  void advance_to(std::int64_t target) {
    while (t_ < target) {
      const std::int64_t harvest = signal_->at(t_);
      const std::int64_t dt = target - t_;
      if (forced_off(t_)) {
        const std::int64_t cap = cfg_.capacitor.capacity_pj();
        std::int64_t e = ps_.e_pj + harvest * dt;
        ledger_.harvested_pj += harvest * dt;
        if (e > cap) {
          ledger_.wasted_pj += e - cap;
          e = cap;
        }
        ps_.e_pj = e;
        t_ = target;
        ps_.t_us = t_;
        break;
      }
      const bool was_on = ps_.device_on;
      const std::int64_t load = (was_on && running_) ? running_->load_uw : 0;
      const StepResult r = step(ps_, cfg_.capacitor, harvest, load, dt);
      ledger_.harvested_pj += r.harvested_pj;
      ledger_.consumed_pj += r.consumed_pj;
      ledger_.wasted_pj += r.wasted_pj;
      if (was_on) on_time_us_ += r.elapsed_us;
      ps_ = r.state;
      t_ = ps_.t_us;
      if (r.transition != Transition::none) {
        pending_transition_ = r.transition;
        return;
      }
    }
  }

  // -- event handling --------------------------------------------------------

  void process_events() {
    bool reschedule = false;

    // Fragment completion comes first: it finished at t with the energy it had.
    if (running_ && running_->end_us == t_ && (ps_.device_on || pending_transition_ == Transition::power_off)) {
      reschedule |= complete_fragment();
    }

    if (pending_transition_ == Transition::power_off) {
      power_off();
      reschedule = false;
    } else if (pending_transition_ == Transition::power_on) {
      power_on();
      reschedule = true;
    }
    pending_transition_ = Transition::none;

    // Forced outage boundaries.
    if (forced_off(t_) && ps_.device_on) {
      power_off();
    } else if (!forced_off(t_) && !ps_.device_on && ps_.e_pj >= cfg_.capacitor.e_on_pj()) {
      power_on();
      reschedule = true;
    }

    reschedule |= discard_expired();
    reschedule |= handle_releases();

    if (!ps_.device_on || running_) return;
    if (resume_interrupted()) return;

    ctx_.t_c = reported_now();
    ctx_.e_curr_uj = ps_.e_curr_uj();
    const bool below = ctx_.e_curr_uj < ctx_.e_man_uj;
    const bool confident = ctx_.energy_confident();
    if (below != last_below_ || confident != last_confident_) reschedule = true;
    if (reschedule) invoke_scheduler();
  }

  void power_off() {
    ps_.device_on = false;
    if (running_) {
      interrupted_ = running_->job_id;
      running_.reset();  // fragment progress is lost, the job keeps its position
    }
  }

  void power_on() {
    ps_.device_on = true;
    ++reboots_;
    clock_offset_ = observe_time(t_, cfg_.clock, *clock_rng_) - t_;
  }

  /// Restarts the fragment a power failure cut off; units are not preempted.
  bool resume_interrupted() {
    if (!interrupted_) return false;
    const auto id = *interrupted_;
    interrupted_.reset();
    auto it = find_job(id);
    if (it == queue_.end()) return false;
    start_fragment(static_cast<std::size_t>(it - queue_.begin()));
    return true;
  }

  std::vector<Job>::iterator find_job(std::uint64_t id) {
    return std::find_if(queue_.begin(), queue_.end(), [&](const Job& j) { return j.id == id; });
  }

  bool discard_expired() {
    bool any = false;
    const std::int64_t now = reported_now();
    for (std::size_t i = 0; i < queue_.size();) {
      if (now >= queue_[i].deadline_us) {
        if (running_ && running_->job_id == queue_[i].id) running_.reset();
        retire(i, "deadline");
        any = true;
      } else {
        ++i;
      }
    }
    return any;
  }

  bool handle_releases() {
    bool any = false;
    for (std::size_t i = 0; i < cfg_.tasks.size(); ++i) {
      auto& st = tstate_[i];
      while (st.next_release && *st.next_release == t_) {
        release(i);
        schedule_next_release(i);
        any = true;
      }
    }
    return any;
  }

  void release(std::size_t task_index) {
    const auto& ts = cfg_.tasks[task_index];
    auto& st = tstate_[task_index];
    Job job = release_job(ts.task, t_, st.prev_release, next_job_id_++, st.seq++);

    JobSide side;
    side.task_index = task_index;
    Rng wrng = Rng::stream(cfg_.seed, "workload",
                           (static_cast<std::uint64_t>(task_index) << 32) ^ job.seq);
    if (const auto* s = std::get_if<std::vector<ScriptedJob>>(&ts.workload)) {
      side.script = (*s)[job.seq % s->size()];
    } else if (const auto* s = std::get_if<StochasticScript>(&ts.workload)) {
      double u = wrng.uniform();
      side.script.exit_unit = 0;
      for (std::size_t l = 0; l < s->exit_probs.size(); ++l) {
        if (u < s->exit_probs[l]) {
          side.script.exit_unit = l + 1;
          break;
        }
        u -= s->exit_probs[l];
      }
      side.correct_draw = wrng.uniform();
    } else if (const auto* d = std::get_if<DatasetWorkload>(&ts.workload)) {
      const auto& sample = d->samples[job.seq % d->samples.size()];
      side.activation = Tensor::from_vector(sample.features);
      side.activation.shape = d->model->layers.front().input_shape;
      side.sample_label = sample.label;
    }
    sides_[job.id] = std::move(side);

    JobRecord rec;
    rec.id = job.id;
    rec.task_id = job.task_id;
    rec.seq = job.seq;
    rec.release_us = job.release_us;
    rec.deadline_us = job.deadline_us;
    records_[job.id] = rec;
    ++released_;

    queue_.push_back(job);
    while (queue_.size() > cfg_.queue_capacity) {
      ctx_.t_c = reported_now();
      ctx_.e_curr_uj = ps_.e_curr_uj();
      std::optional<std::size_t> keep;
      if (running_)
        keep = static_cast<std::size_t>(find_job(running_->job_id) - queue_.begin());
      auto victim = overflow_victim(queue_, ctx_, keep);
      if (!victim) break;
      if (interrupted_ && *interrupted_ == queue_[*victim].id) interrupted_.reset();
      retire(*victim, "overflow");
    }
  }

  void invoke_scheduler() {
    ctx_.t_c = reported_now();
    ctx_.e_curr_uj = ps_.e_curr_uj();
    last_below_ = ctx_.e_curr_uj < ctx_.e_man_uj;
    last_confident_ = ctx_.energy_confident();

    Decision d;
    d.t_us = t_;
    d.reported_us = ctx_.t_c;
    d.e_curr_uj = ctx_.e_curr_uj;
    d.below_e_man = last_below_;
    d.energy_confident = last_confident_;
    for (const auto& j : queue_)
      d.candidates.push_back({j.id, j.task_id, j.seq, j.next_unit + 1,
                              j.next_status == UnitStatus::optional, j.deadline_us,
                              priority(j, ctx_), eligible(j, ctx_)});
    const auto pick = pick_next(queue_, ctx_);
    d.selected = pick;
    decisions_.push_back(std::move(d));
    if (!pick) return;
    if (ctx_.policy == Policy::rr) ctx_.rr_last_task = queue_[*pick].task_id;
    start_fragment(*pick);
  }

  void start_fragment(std::size_t qi) {
    Job& job = queue_[qi];
    const auto& ts = cfg_.tasks[sides_[job.id].task_index];
    const auto frags = fragments_of(ts.task, job.next_unit);
    const Fragment& f = frags[job.fragment_progress];
    auto& side = sides_[job.id];
    if (job.fragment_progress == 0) side.unit_start_us = t_;
    Running r;
    r.job_id = job.id;
    r.fragment = f;
    r.start_us = t_;
    r.end_us = t_ + f.duration_us;
    r.load_uw = f.energy_uj * kPicoPerMicro / f.duration_us;
    running_ = r;
  }

  /// Returns true when a unit boundary was reached (scheduler must run).
  bool complete_fragment() {
    const Running r = *running_;
    running_.reset();
    auto it = find_job(r.job_id);
    if (it == queue_.end()) return true;
    Job& job = *it;
    const auto& ts = cfg_.tasks[sides_[job.id].task_index];
    const auto frag_count = fragments_of(ts.task, job.next_unit).size();
    ++job.fragment_progress;
    if (job.fragment_progress < frag_count) {
      if (ps_.device_on) start_fragment(static_cast<std::size_t>(it - queue_.begin()));
      else interrupted_ = job.id;
      return false;
    }
    finish_unit(static_cast<std::size_t>(it - queue_.begin()));
    return true;
  }

  UnitOutcome unit_outcome(Job& job, JobSide& side) {
    const auto& ts = cfg_.tasks[side.task_index];
    const std::size_t unit = job.next_unit;  // 0-based
    UnitOutcome o;
    if (std::holds_alternative<FixedWorkload>(ts.workload) || !ts.task.imprecise) {
      o.psi = ts.task.constant_psi;
      o.exit = false;
      return o;
    }
    if (std::holds_alternative<DatasetWorkload>(ts.workload)) {
      AgileModel& model = models_[side.task_index];
      side.activation = forward_layer(model, unit, side.activation);
      auto& lc = model.classifiers[unit];
      const auto feats = select_features(side.activation.data, lc.feature_indices);
      o = classify(lc.kmeans, feats, lc.threshold);
      if (o.exit && cfg_.adaptation.enabled) {
        const double w = cfg_.adaptation.weight;
        lc.kmeans = adapt_centroid(std::move(lc.kmeans), o.cluster, feats, w);
        adapt_full_centroid(lc.kmeans, o.cluster, side.activation.data, w);
        if (cfg_.adaptation.propagate)
          for (std::size_t l = unit; l + 1 < model.layer_count(); ++l)
            if (!apply_propagation(model, l, o.cluster)) break;
      }
      return o;
    }
    const auto& s = side.script;
    o.exit = s.exit_unit != 0 && unit + 1 >= s.exit_unit;
    o.psi = s.psi.empty() ? (o.exit ? 1.0 : 0.0) : s.psi[unit];
    return o;
  }

  void finish_unit(std::size_t qi) {
    Job& job = queue_[qi];
    auto& side = sides_[job.id];
    auto& rec = records_[job.id];
    const bool was_optional = job.next_status == UnitStatus::optional;

    UnitExec ue{job.id, job.task_id, job.seq, job.next_unit + 1, was_optional,
                side.unit_start_us.value_or(t_), t_};
    rec.units.push_back(ue);
    units_.push_back(ue);
    if (was_optional) ++optional_units_;

    const auto& ts = cfg_.tasks[side.task_index];
    const bool partition = partitions(cfg_.policy) && ts.task.imprecise &&
                           !std::holds_alternative<FixedWorkload>(ts.workload);
    const UnitOutcome o = unit_outcome(job, side);
    const bool had_mandatory = job.mandatory_done;
    job = advance(job, o, partition);
    side.unit_start_us.reset();
    if (!had_mandatory && job.mandatory_done) side.mandatory_completion_us = t_;

    if (job.finished || (job.mandatory_done && cfg_.policy == Policy::edf_m))
      retire(qi, "none");
  }

  bool job_correct(const Job& job, const JobSide& side) const {
    const auto& ts = cfg_.tasks[side.task_index];
    if (job.units_executed == 0) return false;
    if (std::holds_alternative<DatasetWorkload>(ts.workload))
      return job.label == side.sample_label;
    if (const auto* s = std::get_if<StochasticScript>(&ts.workload))
      return side.correct_draw < s->accuracy[job.units_executed - 1];
    if (std::holds_alternative<std::vector<ScriptedJob>>(ts.workload))
      return side.script.correct_from == 0 || job.units_executed >= side.script.correct_from;
    return true;
  }

  void retire(std::size_t qi, const std::string& reason) {
    const Job job = queue_[qi];
    queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(qi));
    auto& side = sides_[job.id];
    auto& rec = records_[job.id];
    rec.discard_reason = reason;
    rec.label = job.label;
    rec.completion_us = side.mandatory_completion_us;
    rec.mandatory_done = side.mandatory_completion_us && *side.mandatory_completion_us <= job.deadline_us;
    rec.correct = rec.mandatory_done && job_correct(job, side);
    sides_.erase(job.id);
  }

  SimReport finish() {
    SimReport rep;
    rep.end_us = t_;
    ledger_.final_pj = ps_.e_pj;
    rep.energy = ledger_;
    auto& a = rep.aggregates;
    a.jobs_released = released_;
    std::int64_t units = 0;
    for (auto& [id, rec] : records_) {
      if (rec.mandatory_done) ++a.jobs_scheduled;
      if (rec.correct) ++a.jobs_correct;
      if (rec.discard_reason == "overflow") ++a.jobs_dropped;
      units += static_cast<std::int64_t>(rec.units.size());
      rep.jobs.push_back(rec);
    }
    a.deadline_misses = a.jobs_released - a.jobs_scheduled;
    a.reboots = reboots_;
    a.power_on_fraction =
        t_ > 0 ? static_cast<double>(on_time_us_) / static_cast<double>(t_) : 0.0;
    a.avg_units_per_job =
        released_ > 0 ? static_cast<double>(units) / static_cast<double>(released_) : 0.0;
    a.optional_units = optional_units_;
    a.energy_wasted_uj = static_cast<double>(ledger_.wasted_pj) / kPicoPerMicro;
    a.eta = eta_;
    rep.units = std::move(units_);
    rep.decisions = std::move(decisions_);
    return rep;
  }

  SimConfig cfg_;
  std::vector<AgileModel> models_;
  std::optional<detail::PowerSignal> signal_;
  double eta_ = 1.0;
  SchedulerContext ctx_;
  PowerState ps_;
  std::int64_t t_ = 0;
  Transition pending_transition_ = Transition::none;
  std::int64_t clock_offset_ = 0;
  std::optional<Rng> clock_rng_;
  std::vector<Rng> jitter_rngs_;
  std::vector<TaskState> tstate_;
  std::vector<Job> queue_;
  std::optional<Running> running_;
  std::optional<std::uint64_t> interrupted_;
  std::map<std::uint64_t, JobSide> sides_;
  std::map<std::uint64_t, JobRecord> records_;
  std::vector<UnitExec> units_;
  std::vector<Decision> decisions_;
  std::uint64_t next_job_id_ = 1;
  std::int64_t released_ = 0;
  std::int64_t reboots_ = 0;
  std::int64_t on_time_us_ = 0;
  std::int64_t optional_units_ = 0;
  EnergyLedger ledger_;
  bool last_below_ = false;
  bool last_confident_ = false;
};

inline SimReport run(const SimConfig& cfg) { return Engine(cfg).run(); }

/// The eta a run of `cfg` would use.
inline double config_eta(const SimConfig& cfg) {
  cfg.validate();
  const auto horizon = detail::horizon_of(cfg);
  return detail::resolve_eta(cfg, detail::PowerSignal(cfg.source, horizon, cfg.seed), horizon);
}

}  // namespace zysim

#endif  // ZYSIM_SIM_HPP
