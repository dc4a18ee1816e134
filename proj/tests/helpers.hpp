#ifndef ZYSIM_TEST_HELPERS_HPP
#define ZYSIM_TEST_HELPERS_HPP

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "zysim/energy.hpp"

namespace testutil {

inline zysim::EventSeries make_series(std::vector<bool> events, std::int64_t slot_us = 1'000'000,
                                      std::int64_t threshold_uj = 1) {
  return {std::move(events), slot_us, threshold_uj};
}

inline zysim::EventSeries bernoulli_series(std::size_t len, double p, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::bernoulli_distribution d(p);
  std::vector<bool> ev(len);
  for (std::size_t i = 0; i < len; ++i) ev[i] = d(g);
  return make_series(std::move(ev));
}

/// Two-state chain; stay_on/stay_off are the probabilities of keeping state.
inline zysim::EventSeries markov_series(std::size_t len, double stay_on, double stay_off,
                                        std::uint64_t seed, bool start = true) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<bool> ev(len);
  bool s = start;
  for (std::size_t i = 0; i < len; ++i) {
    ev[i] = s;
    const double stay = s ? stay_on : stay_off;
    if (u(g) >= stay) s = !s;
  }
  return make_series(std::move(ev));
}

/// Independent window scanner: for every t with |n| preceding slots all equal
/// to (n > 0), count the window and whether slot t holds an event.
inline std::optional<std::pair<double, std::size_t>> naive_h(const std::vector<bool>& ev, int n) {
  const std::size_t k = static_cast<std::size_t>(n < 0 ? -n : n);
  const bool value = n > 0;
  std::size_t windows = 0, hits = 0;
  for (std::size_t t = k; t < ev.size(); ++t) {
    bool all = true;
    for (std::size_t j = t - k; j < t; ++j) all = all && (ev[j] == value);
    if (!all) continue;
    ++windows;
    hits += ev[t] ? 1 : 0;
  }
  if (windows == 0) return std::nullopt;
  return std::make_pair(static_cast<double>(hits) / static_cast<double>(windows), windows);
}

inline std::string fixture(const std::string& name) {
  return std::string(ZYSIM_FIXTURE_DIR) + "/" + name;
}

}  // namespace testutil

#endif
