#ifndef ZYSIM_TASKS_HPP
#define ZYSIM_TASKS_HPP

// Imprecise sporadic tasks: jobs split into per-layer units, units split into
// atomic fragments, with the mandatory/optional boundary decided at run time
// by the utility test.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zysim/error.hpp"
#include "zysim/inference.hpp"

namespace zysim {

struct UnitCost {
  std::int64_t exec_us = 0;
  std::int64_t energy_uj = 0;
  int fragments = 1;
};

struct Task {
  int id = 0;
  std::int64_t period_us = 0;
  std::int64_t deadline_us = 0;
  std::vector<UnitCost> units;
  std::int64_t release_overhead_us = 0;  // sensor read, run before unit 1
  std::int64_t release_overhead_uj = 0;
  // Non-DNN tasks never exit early: every unit is mandatory and the utility
  // is the constant below.
  bool imprecise = true;
  double constant_psi = 0.0;
  // Worst-case time of the mandatory portion, for schedulability analysis.
  // Defaults to the full worst case.
  std::optional<std::int64_t> mandatory_exec_us;

  std::int64_t wcet_us() const {
    std::int64_t c = release_overhead_us;
    for (const auto& u : units) c += u.exec_us;
    return c;
  }

  std::int64_t mandatory_wcet_us() const { return mandatory_exec_us.value_or(wcet_us()); }

  void validate() const {
    const std::string p = "task " + std::to_string(id);
    require(period_us > 0, p + ": period_us must be positive");
    require(deadline_us > 0, p + ": deadline_us must be positive");
    require(!units.empty(), p + ": needs at least one unit");
    for (std::size_t i = 0; i < units.size(); ++i) {
      const auto& u = units[i];
      const std::string q = p + ": units[" + std::to_string(i) + "]";
      require(u.exec_us > 0, q + ".exec_us must be positive");
      require(u.energy_uj >= 0, q + ".energy_uj must be >= 0");
      require(u.fragments >= 1, q + ".fragments must be >= 1");
      require(u.exec_us >= u.fragments, q + ": fragments shorter than 1 us");
    }
    require(release_overhead_us >= 0 && release_overhead_uj >= 0,
            p + ": release overhead must be >= 0");
    if (mandatory_exec_us)
      require(*mandatory_exec_us > 0 && *mandatory_exec_us <= wcet_us(),
              p + ": mandatory_exec_us must lie in (0, wcet]");
  }
};

/// Atomic, idempotent piece of a unit: runs to completion or not at all.
struct Fragment {
  std::size_t unit = 0;
  std::size_t index = 0;
  std::int64_t duration_us = 0;
  std::int64_t energy_uj = 0;
};

/// Splits a unit evenly into its fragments; the remainder goes to the last.
/// Unit 0 is preceded by the release-overhead fragment when there is one.
inline std::vector<Fragment> fragments_of(const Task& task, std::size_t unit) {
  require(unit < task.units.size(), "fragments_of: unit out of range");
  std::vector<Fragment> out;
  if (unit == 0 && task.release_overhead_us > 0)
    out.push_back({0, 0, task.release_overhead_us, task.release_overhead_uj});
  const UnitCost& u = task.units[unit];
  const std::int64_t n = u.fragments;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t d = u.exec_us / n + (i == n - 1 ? u.exec_us % n : 0);
    const std::int64_t e = u.energy_uj / n + (i == n - 1 ? u.energy_uj % n : 0);
    out.push_back({unit, out.size(), d, e});
  }
  return out;
}

enum class UnitStatus { mandatory, optional };

inline int gamma_of(UnitStatus s) { return s == UnitStatus::mandatory ? 1 : 0; }

struct Job {
  std::uint64_t id = 0;
  int task_id = 0;
  std::size_t seq = 0;  // index of the job within its task
  std::int64_t release_us = 0;
  std::int64_t deadline_us = 0;
  std::size_t unit_count = 0;
  std::size_t next_unit = 0;  // 0-based
  UnitStatus next_status = UnitStatus::mandatory;
  double psi = 0.0;
  std::size_t fragment_progress = 0;  // completed fragments of next_unit
  std::size_t units_executed = 0;
  bool mandatory_done = false;
  bool finished = false;
  int label = -1;
};

/// New job of `task` at t_us. Throws if it arrives closer than one period
/// after the previous release.
inline Job release_job(const Task& task, std::int64_t t_us,
                       std::optional<std::int64_t> previous_release_us = std::nullopt,
                       std::uint64_t id = 0, std::size_t seq = 0) {
  if (previous_release_us)
    require(t_us >= *previous_release_us + task.period_us,
            "release_job: task " + std::to_string(task.id) +
                " released before its minimum separation");
  Job j;
  j.id = id;
  j.task_id = task.id;
  j.seq = seq;
  j.release_us = t_us;
  j.deadline_us = t_us + task.deadline_us;
  j.unit_count = task.units.size();
  j.psi = task.imprecise ? 0.0 : task.constant_psi;
  return j;
}

/// Applies the outcome of the unit that just finished.
///
/// A passing utility test on a mandatory unit closes the mandatory prefix:
/// the job has a result and every later unit is optional refinement. With
/// `partition` off (baselines without early termination, non-DNN tasks)
/// every unit stays mandatory. The last unit always finishes the job.
inline Job advance(Job job, const UnitOutcome& outcome, bool partition = true) {
  require(!job.finished, "advance: job already finished");
  ++job.units_executed;
  job.psi = outcome.psi;
  job.label = outcome.label;
  if (partition && outcome.exit) job.mandatory_done = true;
  ++job.next_unit;
  job.fragment_progress = 0;
  if (job.next_unit >= job.unit_count) {
    job.finished = true;
    job.mandatory_done = true;
  }
  job.next_status = job.mandatory_done ? UnitStatus::optional : UnitStatus::mandatory;
  return job;
}

/// Sum of C_i / T_i, full or mandatory-only worst case.
inline double utilization(std::span<const Task> taskset, bool mandatory_only = false) {
  require(!taskset.empty(), "utilization: empty taskset");
  double u = 0.0;
  for (const auto& t : taskset) {
    const auto c = mandatory_only ? t.mandatory_wcet_us() : t.wcet_us();
    u += static_cast<double>(c) / static_cast<double>(t.period_us);
  }
  return u;
}

}  // namespace zysim

#endif  // ZYSIM_TASKS_HPP
