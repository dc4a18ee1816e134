#ifndef ZYSIM_SCHEDULER_HPP
#define ZYSIM_SCHEDULER_HPP

#include <algorithm>
#include <climits>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "zysim/energy.hpp"
#include "zysim/error.hpp"
#include "zysim/tasks.hpp"

namespace zysim {

enum class Policy { zygarde, edf, edf_m, rr };

inline std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::zygarde: return "zygarde";
    case Policy::edf: return "edf";
    case Policy::edf_m: return "edf-m";
    case Policy::rr: return "rr";
  }
  return "?";
}

inline Policy parse_policy(std::string_view s) {
  if (s == "zygarde") return Policy::zygarde;
  if (s == "edf") return Policy::edf;
  if (s == "edf-m" || s == "edf_m") return Policy::edf_m;
  if (s == "rr") return Policy::rr;
  throw ValidationError("unknown policy '" + std::string(s) + "'");
}

/// Whether the policy uses the utility test to split jobs into mandatory and
/// optional units. EDF and round-robin run every unit of every job.
inline bool partitions(Policy p) { return p == Policy::zygarde || p == Policy::edf_m; }

struct SchedulerContext {
  std::int64_t t_c = 0;
  double alpha = 1.0;  // 1 / max relative deadline (per us)
  double beta = 1.0;   // 1 / max utility
  double eta = 1.0;
  std::int64_t e_curr_uj = 0;
  std::int64_t e_opt_uj = 0;
  std::int64_t e_man_uj = 0;
  Policy policy = Policy::zygarde;
  std::size_t queue_capacity = 3;
  bool persistent = false;        // zygarde ranks with zeta instead of zeta_I
  int rr_last_task = INT_MIN;     // round-robin cursor

  void validate() const {
    require(alpha > 0.0, "scheduler: alpha must be positive");
    require(beta > 0.0, "scheduler: beta must be positive");
    require(eta >= 0.0 && eta <= 1.0, "scheduler: eta outside [0, 1]");
    require(queue_capacity >= 1, "scheduler: queue_capacity must be >= 1");
  }

  /// eta * E_curr >= E_opt: enough confidence in energy for optional units.
  bool energy_confident() const {
    return eta * static_cast<double>(e_curr_uj) >= static_cast<double>(e_opt_uj);
  }
};

/// Priority on persistent power: deadline urgency + remaining need for
/// accuracy + 1 for a mandatory next unit.
inline double zeta(const Job& job, const SchedulerContext& ctx) {
  const double urgency = 1.0 - ctx.alpha * static_cast<double>(job.deadline_us - ctx.t_c);
  const double need = 1.0 - ctx.beta * job.psi;
  return urgency + need + gamma_of(job.next_status);
}

/// Priority under intermittent power. With low energy confidence optional
/// units score 0 and mandatory ones lose the constant gamma term.
inline double zeta_i(const Job& job, const SchedulerContext& ctx) {
  if (ctx.energy_confident()) return zeta(job, ctx);
  const double urgency = 1.0 - ctx.alpha * static_cast<double>(job.deadline_us - ctx.t_c);
  const double need = 1.0 - ctx.beta * job.psi;
  return gamma_of(job.next_status) * (urgency + need);
}

/// Priority the policy ranks by (higher runs first).
inline double priority(const Job& job, const SchedulerContext& ctx) {
  switch (ctx.policy) {
    case Policy::zygarde: return ctx.persistent ? zeta(job, ctx) : zeta_i(job, ctx);
    case Policy::edf:
    case Policy::edf_m:
    case Policy::rr: return -static_cast<double>(job.deadline_us);
  }
  return 0.0;
}

/// Whether the job's next unit may be selected at all under ctx.
inline bool eligible(const Job& job, const SchedulerContext& ctx) {
  if (job.finished) return false;
  const bool optional = job.next_status == UnitStatus::optional;
  switch (ctx.policy) {
    case Policy::edf_m: return !optional;
    case Policy::zygarde: return !optional || ctx.persistent || ctx.energy_confident();
    case Policy::edf:
    case Policy::rr: return true;
  }
  return false;
}

namespace detail {
// Deterministic order among equal priorities.
inline bool tie_before(const Job& a, const Job& b) {
  if (a.deadline_us != b.deadline_us) return a.deadline_us < b.deadline_us;
  if (a.task_id != b.task_id) return a.task_id < b.task_id;
  if (a.release_us != b.release_us) return a.release_us < b.release_us;
  return a.id < b.id;
}
}  // namespace detail

/// Argmax of `prio` over eligible jobs. Returns nothing if the queue is empty,
/// nothing is eligible, or stored energy is below E_man.
template <class PriorityFn>
std::optional<std::size_t> pick_by_priority(std::span<const Job> queue,
                                            const SchedulerContext& ctx, PriorityFn&& prio) {
  if (ctx.e_curr_uj < ctx.e_man_uj) return std::nullopt;
  std::optional<std::size_t> best;
  double best_p = 0.0;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    if (!eligible(queue[i], ctx)) continue;
    const double p = prio(queue[i], ctx);
    if (!best || p > best_p || (p == best_p && detail::tie_before(queue[i], queue[*best]))) {
      best = i;
      best_p = p;
    }
  }
  return best;
}

/// Index of the job whose next unit runs now, or nothing (idle).
inline std::optional<std::size_t> pick_next(std::span<const Job> queue,
                                            const SchedulerContext& ctx) {
  if (ctx.policy != Policy::rr)
    return pick_by_priority(queue, ctx, [](const Job& j, const SchedulerContext& c) {
      return priority(j, c);
    });

  if (ctx.e_curr_uj < ctx.e_man_uj) return std::nullopt;
  // Next task id after the cursor (wrapping), then its earliest deadline.
  std::optional<int> after, lowest;
  for (const auto& j : queue) {
    if (!eligible(j, ctx)) continue;
    if (j.task_id > ctx.rr_last_task && (!after || j.task_id < *after)) after = j.task_id;
    if (!lowest || j.task_id < *lowest) lowest = j.task_id;
  }
  if (!lowest) return std::nullopt;
  const int task = after ? *after : *lowest;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    if (queue[i].task_id != task || !eligible(queue[i], ctx)) continue;
    if (!best || detail::tie_before(queue[i], queue[*best])) best = i;
  }
  return best;
}

/// Job to drop when the queue is over capacity: the lowest-ranked one,
/// never `keep` (the job currently executing).
inline std::optional<std::size_t> overflow_victim(std::span<const Job> queue,
                                                  const SchedulerContext& ctx,
                                                  std::optional<std::size_t> keep) {
  std::optional<std::size_t> worst;
  auto rank_below = [&](std::size_t a, std::size_t b) {
    const bool ea = eligible(queue[a], ctx), eb = eligible(queue[b], ctx);
    if (ea != eb) return !ea;
    const double pa = priority(queue[a], ctx), pb = priority(queue[b], ctx);
    if (pa != pb) return pa < pb;
    return detail::tie_before(queue[b], queue[a]);
  };
  for (std::size_t i = 0; i < queue.size(); ++i) {
    if (keep && *keep == i) continue;
    if (!worst || rank_below(i, *worst)) worst = i;
  }
  return worst;
}

struct SchedulabilityResult {
  double utilization = 0.0;
  double expected_off_slots = 0.0;  // E[C_e]
  double min_t_e_slots = 0.0;       // +inf when utilization >= 1
  bool feasible = false;
};

/// Necessary condition with power outages modeled as a top-priority energy
/// task: utilization (mandatory parts) below 1 and a mean outage spacing of at
/// least E[C_e] / (1 - U) slots. When the observed spacing is supplied it is
/// checked against that bound.
inline SchedulabilityResult schedulability_necessary(std::span<const Task> taskset, double eta,
                                                     std::optional<double> observed_t_e = {}) {
  SchedulabilityResult r;
  r.utilization = utilization(taskset, /*mandatory_only=*/true);
  r.expected_off_slots = expected_off_duration(eta);
  if (r.utilization >= 1.0) {
    r.min_t_e_slots = std::numeric_limits<double>::infinity();
    r.feasible = false;
    return r;
  }
  r.min_t_e_slots = r.expected_off_slots / (1.0 - r.utilization);
  r.feasible = !observed_t_e || *observed_t_e >= r.min_t_e_slots;
  return r;
}

}  // namespace zysim

#endif  // ZYSIM_SCHEDULER_HPP
