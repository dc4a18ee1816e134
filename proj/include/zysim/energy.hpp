#ifndef ZYSIM_ENERGY_HPP
#define ZYSIM_ENERGY_HPP

// Harvester characterization: energy events, conditional event profile h(N),
// Kantorovich-Wasserstein distance between profiles and the eta factor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "zysim/error.hpp"

namespace zysim {

inline constexpr std::int64_t kPicoPerMicro = 1'000'000;

struct TraceSample {
  std::int64_t t_us = 0;
  std::int64_t power_uw = 0;

  friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

/// Piecewise-constant harvested power: each sample holds until the next
/// sample's timestamp, the last one until trace_end_us.
struct HarvestTrace {
  std::vector<TraceSample> samples;
  std::int64_t trace_end_us = 0;

  void validate() const {
    require(!samples.empty(), "harvest trace: no samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      require(samples[i].power_uw >= 0,
              "harvest trace: negative power at sample " + std::to_string(i));
      if (i > 0) {
        require(samples[i].t_us > samples[i - 1].t_us,
                "harvest trace: timestamps not strictly increasing at sample " +
                    std::to_string(i));
      }
    }
    require(trace_end_us >= samples.back().t_us,
            "harvest trace: trace_end_us precedes last sample");
  }

  /// Power at t; zero outside [first sample, trace_end).
  std::int64_t power_at(std::int64_t t_us) const {
    if (samples.empty() || t_us < samples.front().t_us || t_us >= trace_end_us)
      return 0;
    auto it = std::upper_bound(
        samples.begin(), samples.end(), t_us,
        [](std::int64_t t, const TraceSample& s) { return t < s.t_us; });
    return std::prev(it)->power_uw;
  }

  /// First time strictly after t at which power_at may change, or -1.
  std::int64_t next_change_after(std::int64_t t_us) const {
    if (samples.empty()) return -1;
    if (t_us < samples.front().t_us) return samples.front().t_us;
    if (t_us >= trace_end_us) return -1;
    auto it = std::upper_bound(
        samples.begin(), samples.end(), t_us,
        [](std::int64_t t, const TraceSample& s) { return t < s.t_us; });
    return it == samples.end() ? trace_end_us : it->t_us;
  }
};

/// Binary energy events H_t, one per slot of slot_us.
struct EventSeries {
  std::vector<bool> events;
  std::int64_t slot_us = 0;
  std::int64_t threshold_uj = 0;

  std::size_t size() const { return events.size(); }
  double event_fraction() const {
    if (events.empty()) return 0.0;
    return static_cast<double>(std::count(events.begin(), events.end(), true)) /
           static_cast<double>(events.size());
  }
};

struct ConditionalProb {
  double p = 0.0;
  std::size_t count = 0;
};

/// h(N) on the N values that had at least one conditioning window.
struct HarvestProfile {
  std::map<int, ConditionalProb> h;
  int n_max = 0;
  double marginal_rate = 0.0;

  bool defined(int n) const { return h.count(n) != 0; }
};

struct EtaFactor {
  double eta = 0.0;
  double kw_observed = 0.0;
  double kw_random = 0.0;
};

/// One event per full slot: true iff the energy integrated over the slot is
/// at least dk_uj. Slots start at the first sample; a partial trailing slot
/// is dropped. Integration runs in integer picojoules (uW * us).
inline EventSeries binarize_trace(const HarvestTrace& trace, std::int64_t dk_uj,
                                  std::int64_t dt_us) {
  require(dk_uj > 0, "binarize_trace: dk_uj must be positive");
  require(dt_us > 0, "binarize_trace: dt_us must be positive");
  trace.validate();

  const std::int64_t t0 = trace.samples.front().t_us;
  const std::int64_t slots = (trace.trace_end_us - t0) / dt_us;
  EventSeries out;
  out.slot_us = dt_us;
  out.threshold_uj = dk_uj;
  out.events.reserve(static_cast<std::size_t>(slots));

  std::size_t seg = 0;
  const auto& s = trace.samples;
  for (std::int64_t k = 0; k < slots; ++k) {
    const std::int64_t a = t0 + k * dt_us;
    const std::int64_t b = a + dt_us;
    while (seg + 1 < s.size() && s[seg + 1].t_us <= a) ++seg;
    std::int64_t energy_pj = 0;
    for (std::size_t i = seg; i < s.size() && s[i].t_us < b; ++i) {
      const std::int64_t seg_end =
          i + 1 < s.size() ? s[i + 1].t_us : trace.trace_end_us;
      const std::int64_t lo = std::max(a, s[i].t_us);
      const std::int64_t hi = std::min(b, seg_end);
      if (hi > lo) energy_pj += s[i].power_uw * (hi - lo);
    }
    out.events.push_back(energy_pj / kPicoPerMicro >= dk_uj);
  }
  return out;
}

/// h(n): probability of an event at t given the n preceding slots were all
/// events (n > 0) or all non-events (n < 0). Windows slide and overlap.
inline ConditionalProb conditional_event_prob(const EventSeries& series, int n) {
  require(n != 0, "conditional_event_prob: n must be nonzero");
  const std::size_t k = static_cast<std::size_t>(std::abs(n));
  require(k < series.size(),
          "conditional_event_prob: |n| must be below the series length");
  const bool value = n > 0;

  std::size_t run = 0, windows = 0, hits = 0;
  for (bool e : series.events) {
    if (run >= k) {
      ++windows;
      if (e) ++hits;
    }
    run = (e == value) ? run + 1 : 0;
  }
  if (windows == 0)
    throw NoWindowsError("conditional_event_prob: no conditioning window for n=" +
                         std::to_string(n));
  return {static_cast<double>(hits) / static_cast<double>(windows), windows};
}

/// h(N) for N in [-n_max, -1] and [1, n_max]; entries without any
/// conditioning window are left out.
inline HarvestProfile harvest_profile(const EventSeries& series, int n_max) {
  require(n_max >= 1, "harvest_profile: n_max must be >= 1");
  require(static_cast<std::size_t>(n_max) < series.size(),
          "harvest_profile: n_max must be below the series length");

  // windows[v][k]: positions whose run of value v before them is exactly
  // min(run, n_max) == k; hits likewise restricted to an event at t.
  const auto nm = static_cast<std::size_t>(n_max);
  std::vector<std::size_t> win[2] = {std::vector<std::size_t>(nm + 1, 0),
                                     std::vector<std::size_t>(nm + 1, 0)};
  std::vector<std::size_t> hit[2] = {std::vector<std::size_t>(nm + 1, 0),
                                     std::vector<std::size_t>(nm + 1, 0)};
  std::size_t run = 0;
  bool run_value = false;
  for (bool e : series.events) {
    if (run > 0) {
      const std::size_t r = std::min(run, nm);
      ++win[run_value][r];
      if (e) ++hit[run_value][r];
    }
    if (run > 0 && e == run_value) {
      ++run;
    } else {
      run = 1;
      run_value = e;
    }
  }

  HarvestProfile prof;
  prof.n_max = n_max;
  prof.marginal_rate = series.event_fraction();
  for (int v = 0; v < 2; ++v) {
    std::size_t w = 0, h = 0;
    for (std::size_t k = nm; k >= 1; --k) {
      w += win[v][k];
      h += hit[v][k];
      if (w > 0) {
        const int n = v ? static_cast<int>(k) : -static_cast<int>(k);
        prof.h[n] = {static_cast<double>(h) / static_cast<double>(w), w};
      }
    }
  }
  return prof;
}

namespace detail {

// Discrete 1-Wasserstein between two mass vectors over the same ordered
// support: normalize, accumulate, sum |CDF_a - CDF_b|. All-zero mass is
// read as uniform.
inline double wasserstein_cdf(std::vector<double> a, std::vector<double> b) {
  auto normalize = [](std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    for (double& x : v) x = sum > 0.0 ? x / sum : 1.0 / static_cast<double>(v.size());
  };
  normalize(a);
  normalize(b);
  double ca = 0.0, cb = 0.0, dist = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca += a[i];
    cb += b[i];
    dist += std::abs(ca - cb);
  }
  return dist;
}

}  // namespace detail

/// KW distance between two profiles over their common support, in
/// increasing N order.
inline double kw_distance(const HarvestProfile& a, const HarvestProfile& b) {
  std::vector<double> va, vb;
  for (const auto& [n, e] : a.h) {
    auto it = b.h.find(n);
    if (it == b.h.end()) continue;
    va.push_back(e.p);
    vb.push_back(it->second.p);
  }
  require(!va.empty(), "kw_distance: profiles share no defined N");
  return detail::wasserstein_cdf(std::move(va), std::move(vb));
}

/// Profile of a perfectly persistent source on the given support: an event
/// always follows events and never follows non-events.
inline HarvestProfile ideal_profile_like(const HarvestProfile& p) {
  HarvestProfile out;
  out.n_max = p.n_max;
  out.marginal_rate = 1.0;
  for (const auto& [n, e] : p.h) out.h[n] = {n > 0 ? 1.0 : 0.0, e.count};
  return out;
}

/// Memoryless profile with the same marginal event rate and support.
inline HarvestProfile random_profile_like(const HarvestProfile& p) {
  HarvestProfile out;
  out.n_max = p.n_max;
  out.marginal_rate = p.marginal_rate;
  for (const auto& [n, e] : p.h) out.h[n] = {p.marginal_rate, e.count};
  return out;
}

/// eta = 1 - KW(observed, ideal) / KW(random, ideal), clamped to [0, 1].
/// A zero reference distance means the source cannot be told apart from the
/// ideal one, which yields eta = 1.
inline EtaFactor eta_factor(const HarvestProfile& profile) {
  require(!profile.h.empty(), "eta_factor: profile has empty support");
  const HarvestProfile ideal = ideal_profile_like(profile);
  EtaFactor out;
  out.kw_observed = kw_distance(profile, ideal);
  out.kw_random = kw_distance(random_profile_like(profile), ideal);
  if (out.kw_random <= 0.0) {
    out.eta = 1.0;
  } else {
    out.eta = std::clamp(1.0 - out.kw_observed / out.kw_random, 0.0, 1.0);
  }
  return out;
}

/// Probability of an event in the slot after the series ends, read off the
/// profile at the (clamped, signed) length of the trailing run.
inline double predict_next(const EventSeries& series, const HarvestProfile& profile) {
  require(!series.events.empty(), "predict_next: empty series");
  const bool last = series.events.back();
  std::size_t run = 0;
  for (auto it = series.events.rbegin(); it != series.events.rend() && *it == last; ++it)
    ++run;
  const int r = static_cast<int>(std::min<std::size_t>(run, static_cast<std::size_t>(
                                                                std::max(profile.n_max, 1))));
  const int n = last ? r : -r;
  auto it = profile.h.find(n);
  return it == profile.h.end() ? profile.marginal_rate : it->second.p;
}

/// Mean outage length E[C_e] = eta / (1 - eta), in event slots.
inline double expected_off_duration(double eta) {
  require(eta >= 0.0 && eta <= 1.0, "expected_off_duration: eta outside [0, 1]");
  if (eta >= 1.0) throw UnboundedError("expected_off_duration: unbounded for eta = 1");
  return eta / (1.0 - eta);
}

}  // namespace zysim

#endif  // ZYSIM_ENERGY_HPP
