#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "zysim/scheduler.hpp"

using namespace zysim;

namespace {

constexpr std::int64_t kS = 1'000'000;

Job job(std::uint64_t id, int task, std::int64_t release, std::int64_t deadline, UnitStatus st,
        double psi = 0.0) {
  Job j;
  j.id = id;
  j.task_id = task;
  j.release_us = release;
  j.deadline_us = deadline;
  j.unit_count = 4;
  j.next_unit = st == UnitStatus::optional ? 1 : 0;
  j.next_status = st;
  j.mandatory_done = st == UnitStatus::optional;
  j.psi = psi;
  return j;
}

SchedulerContext ctx(Policy p, std::int64_t t, std::int64_t e_curr, double eta = 1.0) {
  SchedulerContext c;
  c.policy = p;
  c.t_c = t;
  c.alpha = 1.0 / (6.0 * kS);
  c.beta = 1.0;
  c.eta = eta;
  c.e_curr_uj = e_curr;
  c.e_opt_uj = 4'000;
  c.e_man_uj = 1'000;
  return c;
}

std::vector<Job> random_queue(std::mt19937_64& g, std::int64_t t, std::size_t n) {
  std::vector<Job> q;
  for (std::size_t i = 0; i < n; ++i) {
    const auto st = g() % 2 ? UnitStatus::optional : UnitStatus::mandatory;
    const std::int64_t rel = t - static_cast<std::int64_t>(g() % 5) * kS;
    q.push_back(job(i + 1, static_cast<int>(g() % 3), rel,
                    t + static_cast<std::int64_t>(g() % 7) * kS, st,
                    static_cast<double>(g() % 4) / 4.0));
  }
  return q;
}

}  // namespace

TEST(Zeta, NormalizationAnchors) {
  auto c = ctx(Policy::zygarde, 0, 10'000);
  c.beta = 0.5;
  EXPECT_NEAR(zeta(job(1, 1, 0, 6 * kS, UnitStatus::mandatory, 2.0), c), 1.0, 1e-12);
  EXPECT_NEAR(zeta(job(1, 1, 0, 0, UnitStatus::mandatory, 0.0), c), 3.0, 1e-12);
  EXPECT_NEAR(zeta(job(1, 1, 0, 0, UnitStatus::optional, 0.0), c), 2.0, 1e-12);
}

TEST(ZetaI, Gating) {
  auto low = ctx(Policy::zygarde, 0, 3'999);
  EXPECT_EQ(zeta_i(job(1, 1, 0, kS, UnitStatus::optional), low), 0.0);
  const Job m = job(2, 1, 0, 3 * kS, UnitStatus::mandatory, 0.25);
  EXPECT_NEAR(zeta_i(m, low), zeta(m, low) - 1.0, 1e-12);
  auto boundary = ctx(Policy::zygarde, 0, 4'000, 1.0);
  EXPECT_EQ(zeta_i(m, boundary), zeta(m, boundary));
  EXPECT_TRUE(boundary.energy_confident());
}

TEST(PickNext, WorkedExampleDecisions) {
  // t3: J11 waits on optional unit 2, J12 is fresh; energy below E_opt.
  std::vector<Job> q = {job(1, 1, 1 * kS, 7 * kS, UnitStatus::optional, 1.0),
                        job(2, 1, 3 * kS, 9 * kS, UnitStatus::mandatory)};
  auto c = ctx(Policy::zygarde, 3 * kS, 1'900);
  ASSERT_EQ(pick_next(q, c), std::optional<std::size_t>(1));
  // t2: only the optional unit, gated.
  std::vector<Job> only_opt = {q[0]};
  EXPECT_EQ(pick_next(only_opt, ctx(Policy::zygarde, 2 * kS, 1'900)), std::nullopt);
  // t4: E_curr < E_man stops everything.
  EXPECT_EQ(pick_next(q, ctx(Policy::zygarde, 4 * kS, 900)), std::nullopt);
  // t6: both optional, energy confident: tighter deadline wins.
  std::vector<Job> both = {job(2, 1, 3 * kS, 9 * kS, UnitStatus::optional, 1.0),
                           job(1, 1, 1 * kS, 7 * kS, UnitStatus::optional, 1.0)};
  EXPECT_EQ(pick_next(both, ctx(Policy::zygarde, 6 * kS, 4'000)), std::optional<std::size_t>(1));
  EXPECT_EQ(pick_next(std::vector<Job>{}, c), std::nullopt);
}

TEST(PickNext, MandatoryBeatsOptionalAtEqualState) {
  std::vector<Job> q = {job(1, 1, 0, 5 * kS, UnitStatus::optional, 0.5),
                        job(2, 1, 0, 5 * kS, UnitStatus::mandatory, 0.5)};
  EXPECT_EQ(pick_next(q, ctx(Policy::zygarde, 0, 9'000)), std::optional<std::size_t>(1));
}

TEST(PickNext, TieBreaks) {
  auto c = ctx(Policy::edf, 0, 9'000);
  std::vector<Job> q = {job(5, 2, 0, 5 * kS, UnitStatus::mandatory),
                        job(4, 1, kS, 5 * kS, UnitStatus::mandatory),
                        job(3, 1, 0, 5 * kS, UnitStatus::mandatory)};
  EXPECT_EQ(pick_next(q, c), std::optional<std::size_t>(2));
}

TEST(PickNext, EdfIgnoresPartitionEdfMSkipsOptional) {
  std::vector<Job> q = {job(1, 1, 0, 2 * kS, UnitStatus::optional),
                        job(2, 2, 0, 4 * kS, UnitStatus::mandatory)};
  EXPECT_EQ(pick_next(q, ctx(Policy::edf, 0, 1'000)), std::optional<std::size_t>(0));
  EXPECT_EQ(pick_next(q, ctx(Policy::edf_m, 0, 1'000)), std::optional<std::size_t>(1));
  std::vector<Job> opt = {q[0]};
  EXPECT_EQ(pick_next(opt, ctx(Policy::edf_m, 0, 10'000)), std::nullopt);
}

TEST(PickNext, RoundRobinCyclesTasks) {
  std::vector<Job> q = {job(1, 1, 0, 9 * kS, UnitStatus::mandatory),
                        job(2, 2, 0, 2 * kS, UnitStatus::mandatory),
                        job(3, 3, 0, 5 * kS, UnitStatus::mandatory)};
  auto c = ctx(Policy::rr, 0, 5'000);
  std::vector<int> order;
  for (int i = 0; i < 6; ++i) {
    const auto p = pick_next(q, c);
    ASSERT_TRUE(p);
    order.push_back(q[*p].task_id);
    c.rr_last_task = q[*p].task_id;
  }
  EXPECT_EQ(order, (std::vector<int>{1, 2, 3, 1, 2, 3}));
}

TEST(SchedulerProperties, ArgmaxInvariantUnderPositiveScaling) {
  std::mt19937_64 g(31);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::int64_t t = 10 * kS;
    const auto q = random_queue(g, t, 1 + g() % 5);
    auto c = ctx(Policy::zygarde, t, static_cast<std::int64_t>(g() % 6'000));
    const double s = std::ldexp(1.0, static_cast<int>(g() % 10) - 5);  // exact scaling
    const auto base = pick_next(q, c);
    const auto scaled = pick_by_priority(q, c, [s](const Job& j, const SchedulerContext& x) {
      return s * priority(j, x);
    });
    EXPECT_EQ(base, scaled);
  }
}

TEST(SchedulerProperties, PersistentZygardeEqualsEdfForMandatoryEqualPsi) {
  std::mt19937_64 g(32);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::int64_t t = 10 * kS;
    auto q = random_queue(g, t, 1 + g() % 5);
    for (auto& j : q) {
      j.next_status = UnitStatus::mandatory;
      j.mandatory_done = false;
      j.psi = 0.5;
    }
    auto z = ctx(Policy::zygarde, t, 9'000);
    z.persistent = true;
    EXPECT_EQ(pick_next(q, z), pick_next(q, ctx(Policy::edf, t, 9'000)));
  }
}

TEST(SchedulerProperties, GatingSoundnessExhaustive) {
  // Every queue of up to 3 jobs over a small grid of states, every energy level.
  const std::vector<std::int64_t> deadlines = {1 * kS, 3 * kS};
  const std::vector<double> psis = {0.0, 1.0};
  std::vector<Job> pool;
  std::uint64_t id = 1;
  for (auto d : deadlines)
    for (double p : psis)
      for (auto st : {UnitStatus::mandatory, UnitStatus::optional}) {
        pool.push_back(job(id, static_cast<int>(id % 2), 0, d, st, p));
        ++id;
      }
  for (std::size_t a = 0; a < pool.size(); ++a)
    for (std::size_t b = a; b < pool.size(); ++b)
      for (std::size_t c = b; c < pool.size(); ++c)
        for (std::int64_t e = 0; e <= 5'000; e += 250)
          for (double eta : {0.0, 0.5, 1.0}) {
            std::vector<Job> q = {pool[a], pool[b], pool[c]};
            auto x = ctx(Policy::zygarde, 0, e, eta);
            const auto p = pick_next(q, x);
            if (eta * static_cast<double>(e) < 4'000.0 && p) {
              EXPECT_EQ(q[*p].next_status, UnitStatus::mandatory);
            }
            if (e < 1'000) {
              EXPECT_FALSE(p);
            }
            auto m = ctx(Policy::edf_m, 0, e, eta);
            const auto pm = pick_next(q, m);
            if (pm) {
              EXPECT_EQ(q[*pm].next_status, UnitStatus::mandatory);
            }
          }
}

TEST(SchedulerProperties, PureReplay) {
  std::mt19937_64 g(33);
  for (int rep = 0; rep < 500; ++rep) {
    const auto q = random_queue(g, 5 * kS, 1 + g() % 5);
    for (auto p : {Policy::zygarde, Policy::edf, Policy::edf_m, Policy::rr}) {
      const auto c = ctx(p, 5 * kS, static_cast<std::int64_t>(g() % 6'000));
      EXPECT_EQ(pick_next(q, c), pick_next(q, c));
    }
  }
}

TEST(OverflowVictim, DropsLowestRankedButNeverKeep) {
  auto c = ctx(Policy::edf, 0, 5'000);
  std::vector<Job> q = {job(1, 1, 0, 9 * kS, UnitStatus::mandatory),
                        job(2, 1, 0, 2 * kS, UnitStatus::mandatory),
                        job(3, 1, 0, 5 * kS, UnitStatus::mandatory)};
  EXPECT_EQ(overflow_victim(q, c, std::nullopt), std::optional<std::size_t>(0));
  EXPECT_EQ(overflow_victim(q, c, 0), std::optional<std::size_t>(2));
  auto m = ctx(Policy::edf_m, 0, 5'000);
  q[1].next_status = UnitStatus::optional;
  EXPECT_EQ(overflow_victim(q, m, std::nullopt), std::optional<std::size_t>(1));
}

TEST(Policy, Names) {
  for (auto p : {Policy::zygarde, Policy::edf, Policy::edf_m, Policy::rr})
    EXPECT_EQ(parse_policy(to_string(p)), p);
  EXPECT_EQ(parse_policy("edf_m"), Policy::edf_m);
  EXPECT_THROW(parse_policy("fifo"), ValidationError);
}

TEST(Schedulability, Arithmetic) {
  Task t;
  t.id = 1;
  t.period_us = 2'000;
  t.deadline_us = 2'000;
  t.units = {UnitCost{1'000, 1, 1}};
  const std::vector<Task> half = {t};
  auto r = schedulability_necessary(half, 0.5);
  EXPECT_DOUBLE_EQ(r.utilization, 0.5);
  EXPECT_DOUBLE_EQ(r.expected_off_slots, 1.0);
  EXPECT_DOUBLE_EQ(r.min_t_e_slots, 2.0);
  EXPECT_TRUE(r.feasible);
  EXPECT_FALSE(schedulability_necessary(half, 0.5, 1.5).feasible);
  EXPECT_TRUE(schedulability_necessary(half, 0.5, 2.0).feasible);
  EXPECT_EQ(schedulability_necessary(half, 0.0).min_t_e_slots, 0.0);

  Task big = t;
  big.units = {UnitCost{2'400, 1, 1}};
  const std::vector<Task> over = {big};
  r = schedulability_necessary(over, 0.3);
  EXPECT_FALSE(r.feasible);
  EXPECT_TRUE(std::isinf(r.min_t_e_slots));
  EXPECT_THROW(schedulability_necessary(half, 1.0), UnboundedError);
}
