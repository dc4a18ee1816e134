#include <gtest/gtest.h>

#include <random>

#include "zysim/tasks.hpp"

using namespace zysim;

namespace {

Task four_unit_task(std::int64_t period_us = 2'000'000, std::int64_t deadline_us = 6'000'000) {
  Task t;
  t.id = 1;
  t.period_us = period_us;
  t.deadline_us = deadline_us;
  t.units.assign(4, UnitCost{1'000'000, 1'000, 1});
  return t;
}

UnitOutcome outcome(bool exit, double psi = 0.0, int label = 0) {
  UnitOutcome o;
  o.exit = exit;
  o.psi = psi;
  o.label = label;
  return o;
}

}  // namespace

TEST(Task, WcetAndValidation) {
  Task t = four_unit_task();
  t.release_overhead_us = 500;
  EXPECT_EQ(t.wcet_us(), 4'000'500);
  EXPECT_EQ(t.mandatory_wcet_us(), 4'000'500);
  t.mandatory_exec_us = 1'000'000;
  EXPECT_EQ(t.mandatory_wcet_us(), 1'000'000);
  EXPECT_NO_THROW(t.validate());
  Task bad = four_unit_task();
  bad.period_us = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = four_unit_task();
  bad.units[2].exec_us = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = four_unit_task();
  bad.units.clear();
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Fragments, EvenSplitWithRemainderAndOverhead) {
  Task t = four_unit_task();
  t.units[1] = {1'000, 10, 3};
  auto f = fragments_of(t, 1);
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0].duration_us, 333);
  EXPECT_EQ(f[2].duration_us, 334);
  EXPECT_EQ(f[0].energy_uj, 3);
  EXPECT_EQ(f[2].energy_uj, 4);
  t.release_overhead_us = 50;
  t.release_overhead_uj = 2;
  f = fragments_of(t, 0);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].duration_us, 50);
  EXPECT_EQ(f[0].energy_uj, 2);
  EXPECT_EQ(f[1].index, 1u);
  EXPECT_THROW(fragments_of(t, 4), ValidationError);
}

TEST(ReleaseJob, DeadlineAndSeparation) {
  const Task t = four_unit_task(3'000'000, 6'000'000);
  const Job j = release_job(t, 0);
  EXPECT_EQ(j.deadline_us, 6'000'000);
  EXPECT_EQ(j.next_status, UnitStatus::mandatory);
  EXPECT_EQ(j.next_unit, 0u);
  EXPECT_THROW(release_job(t, 1, 0), ValidationError);
  EXPECT_NO_THROW(release_job(t, 3'000'000, 0));
}

TEST(ReleaseJob, ExampleWorkloadTimes) {
  const std::int64_t slot = 1'000'000;
  const Task t = four_unit_task(2 * slot, 6 * slot);
  const Job j11 = release_job(t, 1 * slot);
  const Job j12 = release_job(t, 3 * slot, j11.release_us);
  EXPECT_EQ(j11.deadline_us, 7 * slot);
  EXPECT_EQ(j12.deadline_us, 9 * slot);
}

TEST(Advance, ExitAtFirstUnitLeavesThreeOptional) {
  Job j = release_job(four_unit_task(), 0);
  j = advance(j, outcome(true, 2.5, 3));
  EXPECT_TRUE(j.mandatory_done);
  EXPECT_FALSE(j.finished);
  EXPECT_EQ(j.label, 3);
  EXPECT_EQ(j.psi, 2.5);
  EXPECT_EQ(j.next_status, UnitStatus::optional);
  EXPECT_EQ(j.unit_count - j.units_executed, 3u);
}

TEST(Advance, PassAtSecondUnit) {
  Job j = release_job(four_unit_task(), 0);
  j = advance(j, outcome(false));
  EXPECT_EQ(j.next_status, UnitStatus::mandatory);
  j = advance(j, outcome(true, 1.0));
  EXPECT_EQ(j.next_status, UnitStatus::optional);
  EXPECT_EQ(j.next_unit, 2u);
}

TEST(Advance, NoExitRunsToLastUnit) {
  Job j = release_job(four_unit_task(), 0);
  for (int i = 0; i < 4; ++i) {
    EXPECT_FALSE(j.finished);
    j = advance(j, outcome(false));
  }
  EXPECT_TRUE(j.finished);
  EXPECT_TRUE(j.mandatory_done);
  EXPECT_THROW(advance(j, outcome(false)), ValidationError);
}

TEST(Advance, WithoutPartitionEveryUnitIsMandatory) {
  Job j = release_job(four_unit_task(), 0);
  for (int i = 0; i < 3; ++i) {
    j = advance(j, outcome(true), /*partition=*/false);
    EXPECT_EQ(j.next_status, UnitStatus::mandatory);
    EXPECT_FALSE(j.mandatory_done);
  }
  j = advance(j, outcome(true), false);
  EXPECT_TRUE(j.finished);
}

TEST(Advance, MandatoryPrefixAndFixedDeadline) {
  std::mt19937_64 g(1);
  for (int rep = 0; rep < 500; ++rep) {
    Task t = four_unit_task();
    t.units.assign(1 + g() % 8, UnitCost{10, 1, 1});
    Job j = release_job(t, static_cast<std::int64_t>(g() % 1000));
    const auto d = j.deadline_us;
    bool seen_optional = false;
    EXPECT_EQ(j.next_status, UnitStatus::mandatory);
    while (!j.finished) {
      const bool opt = j.next_status == UnitStatus::optional;
      EXPECT_FALSE(seen_optional && !opt);
      seen_optional = seen_optional || opt;
      j = advance(j, outcome(g() % 3 == 0, static_cast<double>(g() % 10)));
      EXPECT_EQ(j.deadline_us, d);
    }
    EXPECT_EQ(j.units_executed, t.units.size());
  }
}

TEST(Utilization, Arithmetic) {
  Task a = four_unit_task();
  a.period_us = 4'000'000;
  EXPECT_DOUBLE_EQ(utilization(std::vector<Task>{a}), 1.0);
  Task b = a, c = a;
  b.units = {UnitCost{300, 1, 1}};
  b.period_us = 1'000;
  c.units = {UnitCost{400, 1, 1}};
  c.period_us = 1'000;
  EXPECT_DOUBLE_EQ(utilization(std::vector<Task>{b, c}), 0.7);
  a.mandatory_exec_us = 1'000'000;
  EXPECT_DOUBLE_EQ(utilization(std::vector<Task>{a}, true), 0.25);
  Task over = four_unit_task(3'000'000, 3'000'000);
  EXPECT_GT(utilization(std::vector<Task>{over}), 1.0);
  EXPECT_THROW(utilization(std::vector<Task>{}), ValidationError);
}
