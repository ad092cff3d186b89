#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmpm/score_source.hpp"
#include "dmpm/state_space.hpp"

namespace dmpm {

enum class ScheduleKind { kLinear, kQuadratic, kCosine };
enum class FlipKind { kConstant, kLinear };
enum class SamplerKind { kContinuous, kPerCoord, kDiscrete, kFlip, kDenoise };

ScheduleKind parse_schedule_kind(const std::string& name);
FlipKind parse_flip_kind(const std::string& name);
SamplerKind parse_sampler_kind(const std::string& name);
std::string to_string(ScheduleKind kind);
std::string to_string(FlipKind kind);
std::string to_string(SamplerKind kind);

/// Backward-time grid 0 = t_0 < t_1 < ... < t_K = horizon.
struct TimeSchedule {
  ScheduleKind kind = ScheduleKind::kCosine;
  std::size_t steps = 0;
  double horizon = 0.0;
  std::vector<double> grid;  // K + 1 points

  /// Largest step t_{k+1} - t_k (the tau of the convergence bound).
  double max_step() const;
};

/// Throws kArgument for K < 1 or horizon <= 0. Endpoints are set exactly.
TimeSchedule time_grid(ScheduleKind kind, std::size_t steps, double horizon);

/// Bits flipped per grid interval; counts[k] applies on [t_k, t_{k+1}) and is M_{t_{k+1}}.
struct FlipSchedule {
  FlipKind kind = FlipKind::kConstant;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
};

/// Constant: as equal as possible, the remainder going to the last intervals.
/// Linear: proportional to t_{k+1}, largest-remainder rounding (ties to the later interval).
FlipSchedule flip_counts(FlipKind kind, const TimeSchedule& schedule, std::uint64_t total);

struct SamplerStats {
  std::uint64_t chains = 0;
  std::uint64_t jumps = 0;                // clock crossings (or denoise cycles for the denoise sampler)
  std::uint64_t flips = 0;                // coordinates actually flipped
  std::uint64_t clamped_flip_counts = 0;  // crossings where M_{t_k} > d was reduced to d
  std::uint64_t short_flip_draws = 0;     // crossings where fewer than M coordinates had positive weight

  SamplerStats& operator+=(const SamplerStats& o);
};

// Single-chain samplers. Each starts from a uniform state drawn from `rng` and returns the
// state at the end time. `end_time` (default T_f) supports early stopping at T_f - eta.

/// Algorithm 1: one exponential clock on the total rate, integrated on a micro-step grid.
BitState sample_exact_continuous(const ScoreSource& src, Rng& rng, std::optional<double> end_time = {},
                                 SamplerStats* stats = nullptr);
/// Appendix C.1: one exponential clock per coordinate; the earliest crossing jumps.
BitState sample_exact_percoord(const ScoreSource& src, Rng& rng, std::optional<double> end_time = {},
                               SamplerStats* stats = nullptr);
/// Algorithm 3 (Lambda accumulator against an Exp(1) threshold, one flip per crossing).
/// The schedule horizon is the end time.
BitState sample_discretized(const ScoreSource& src, const TimeSchedule& schedule, Rng& rng,
                            SamplerStats* stats = nullptr);
/// Algorithm 4: as Algorithm 3, flipping M_{t_k} distinct coordinates per crossing.
BitState sample_flip_schedule(const ScoreSource& src, const TimeSchedule& schedule, const FlipSchedule& flips,
                              Rng& rng, SamplerStats* stats = nullptr);
/// Algorithm 5: denoise to time T_f, renoise to t_{k+1}; returns the last denoised state.
BitState sample_denoise_renoise(const ScoreSource& src, const TimeSchedule& schedule, Rng& rng,
                                SamplerStats* stats = nullptr);

struct SamplerSpec {
  SamplerKind kind = SamplerKind::kDiscrete;
  TimeSchedule schedule;              // discrete, flip, denoise
  std::optional<FlipSchedule> flips;  // flip
  std::optional<double> end_time;     // continuous, percoord
  /// Discrete and flip samplers: called with (k, states at t_k) before each step's score query.
  /// Called from worker threads, once per chain group; use threads = 1 for a single ordered stream.
  std::function<void(std::size_t, const std::vector<BitState>&)> observer;
};

inline constexpr const char* kChainStream = "sample:chain";

/// Runs n independent chains; chain i draws from Rng(derive_seed(seed, "sample:chain", i)), so the
/// output does not depend on `threads` (0 = hardware concurrency).
std::vector<BitState> sample_chains(const ScoreSource& src, const SamplerSpec& spec, std::size_t n,
                                    std::uint64_t seed, SamplerStats* stats = nullptr, unsigned threads = 0);

/// Worker count used when `threads` is 0.
unsigned default_threads();

}  // namespace dmpm
