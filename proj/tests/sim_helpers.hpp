#ifndef ZYSIM_TEST_SIM_HELPERS_HPP
#define ZYSIM_TEST_SIM_HELPERS_HPP

#include <cstdint>
#include <vector>

#include "zysim/sim.hpp"

namespace testutil {

inline constexpr std::int64_t kSec = 1'000'000;

inline zysim::Task uniform_task(int id, std::int64_t period, std::int64_t deadline,
                                std::size_t units, std::int64_t unit_us, std::int64_t unit_uj,
                                int fragments = 1) {
  zysim::Task t;
  t.id = id;
  t.period_us = period;
  t.deadline_us = deadline;
  t.units.assign(units, zysim::UnitCost{unit_us, unit_uj, fragments});
  return t;
}

/// Generous capacitor, constant harvest, one scripted task.
inline zysim::SimConfig persistent_config(zysim::Policy policy, std::int64_t duration_us) {
  zysim::SimConfig c;
  c.capacitor = zysim::CapacitorConfig::with_defaults(1'000'000, 1'000);
  c.initial_energy_uj = 1'000'000;
  c.source = zysim::ConstantSource{1'000'000};
  c.policy = policy;
  c.duration_us = duration_us;
  c.seed = 1;
  return c;
}

inline bool same_schedule(const zysim::SimReport& a, const zysim::SimReport& b) {
  const auto &x = a.aggregates, &y = b.aggregates;
  return a.jobs == b.jobs && x.jobs_released == y.jobs_released &&
         x.jobs_scheduled == y.jobs_scheduled && x.jobs_correct == y.jobs_correct &&
         x.deadline_misses == y.deadline_misses && x.jobs_dropped == y.jobs_dropped &&
         x.reboots == y.reboots && x.avg_units_per_job == y.avg_units_per_job &&
         x.optional_units == y.optional_units;
}

}  // namespace testutil

#endif
