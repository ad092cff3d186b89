#include "dmpm/samplers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <numeric>
#include <thread>

#include "dmpm/forward_process.hpp"

namespace dmpm {

// ---------------------------------------------------------------------------
// Names

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "quadratic") return ScheduleKind::kQuadratic;
  if (name == "cosine") return ScheduleKind::kCosine;
  fail(ErrorCode::kConfig, "unknown time schedule '" + name + "' (expected linear|quadratic|cosine)");
}

FlipKind parse_flip_kind(const std::string& name) {
  if (name == "constant") return FlipKind::kConstant;
  if (name == "linear") return FlipKind::kLinear;
  fail(ErrorCode::kConfig, "unknown flip schedule '" + name + "' (expected constant|linear)");
}

SamplerKind parse_sampler_kind(const std::string& name) {
  if (name == "continuous") return SamplerKind::kContinuous;
  if (name == "percoord") return SamplerKind::kPerCoord;
  if (name == "discrete") return SamplerKind::kDiscrete;
  if (name == "flip") return SamplerKind::kFlip;
  if (name == "denoise") return SamplerKind::kDenoise;
  fail(ErrorCode::kConfig, "unknown sampler '" + name + "' (expected continuous|percoord|discrete|flip|denoise)");
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kLinear: return "linear";
    case ScheduleKind::kQuadratic: return "quadratic";
    case ScheduleKind::kCosine: return "cosine";
  }
  return "?";
}

std::string to_string(FlipKind kind) { return kind == FlipKind::kConstant ? "constant" : "linear"; }

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kContinuous: return "continuous";
    case SamplerKind::kPerCoord: return "percoord";
    case SamplerKind::kDiscrete: return "discrete";
    case SamplerKind::kFlip: return "flip";
    case SamplerKind::kDenoise: return "denoise";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Schedules

double TimeSchedule::max_step() const {
  double m = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) m = std::max(m, grid[k + 1] - grid[k]);
  return m;
}

TimeSchedule time_grid(ScheduleKind kind, std::size_t steps, double horizon) {
  if (steps < 1) fail(ErrorCode::kArgument, "time schedule needs K >= 1");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) fail(ErrorCode::kArgument, "time schedule horizon must be > 0");
  TimeSchedule s{kind, steps, horizon, std::vector<double>(steps + 1)};
  const double kk = static_cast<double>(steps);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double r = static_cast<double>(k) / kk;
    switch (kind) {
      case ScheduleKind::kLinear: s.grid[k] = horizon * r; break;
      case ScheduleKind::kQuadratic: s.grid[k] = horizon * r * r; break;
      case ScheduleKind::kCosine: s.grid[k] = horizon * std::cos((1.0 - r) * std::numbers::pi / 2.0); break;
    }
  }
  s.grid.front() = 0.0;
  s.grid.back() = horizon;
  for (std::size_t k = 0; k < steps; ++k) {
    if (!(s.grid[k + 1] > s.grid[k])) {
      fail(ErrorCode::kArgument, "time schedule is not strictly increasing at k=" + std::to_string(k) +
                                     " (K too large for the horizon)");
    }
  }
  return s;
}

FlipSchedule flip_counts(FlipKind kind, const TimeSchedule& schedule, std::uint64_t total) {
  const std::size_t K = schedule.steps;
  if (K < 1 || schedule.grid.size() != K + 1) fail(ErrorCode::kArgument, "flip_counts needs a valid time schedule");
  FlipSchedule f{kind, std::vector<std::uint64_t>(K, 0), total};
  if (kind == FlipKind::kConstant) {
    const std::uint64_t base = total / K, rem = total % K;
    for (std::size_t k = 0; k < K; ++k) f.counts[k] = base + (k >= K - rem ? 1 : 0);
    return f;
  }
  double sum_t = 0.0;
  for (std::size_t k = 1; k <= K; ++k) sum_t += schedule.grid[k];
  std::vector<double> frac(K);
  std::uint64_t assigned = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const double raw = static_cast<double>(total) * schedule.grid[k + 1] / sum_t;
    const double fl = std::floor(raw + 1e-9);  // guard exact integers against round-off below
    f.counts[k] = static_cast<std::uint64_t>(fl);
    frac[k] = raw - fl;
    assigned += f.counts[k];
  }
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return a > b;  // ties favour the later interval
  });
  std::uint64_t missing = total > assigned ? total - assigned : 0;
  for (std::size_t i = 0; missing > 0; i = (i + 1) % K, --missing) ++f.counts[order[i]];
  // Defensive: floor(raw + 1e-9) can overshoot by one unit on pathological inputs.
  std::uint64_t sum = std::accumulate(f.counts.begin(), f.counts.end(), std::uint64_t{0});
  for (std::size_t i = K; sum > total && i-- > 0;) {
    const std::size_t k = order[i];
    if (f.counts[k] > 0) --f.counts[k], --sum;
  }
  return f;
}

SamplerStats& SamplerStats::operator+=(const SamplerStats& o) {
  chains += o.chains;
  jumps += o.jumps;
  flips += o.flips;
  clamped_flip_counts += o.clamped_flip_counts;
  short_flip_draws += o.short_flip_draws;
  return *this;
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

constexpr double kMicroStepFraction = 1e-3;
constexpr double kNegativeRateTolerance = 1e-9;
constexpr std::size_t kChunkSize = 1024;

/// Per-coordinate rate lambda * (1 - s); rejects invalid scores and non-finite rates.
void coordinate_rates(std::span<const double> s, double lambda, double t, std::span<double> out) {
  for (std::size_t l = 0; l < s.size(); ++l) {
    const double r = 1.0 - s[l];
    if (!std::isfinite(r)) {
      fail(ErrorCode::kSampler, "non-finite jump rate at backward time " + std::to_string(t));
    }
    if (r < -kNegativeRateTolerance) {
      fail(ErrorCode::kInvalidScore, "score component " + std::to_string(l) + " gives negative rate 1 - s = " +
                                         std::to_string(r) + " at backward time " + std::to_string(t));
    }
    out[l] = lambda * std::max(0.0, r);
  }
}

double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::size_t categorical(std::span<const double> w, double total, Rng& rng) {
  const double u = rng.uniform() * total;
  double c = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    if (w[l] <= 0.0) continue;
    c += w[l];
    last_positive = l;
    if (u < c) return l;
  }
  return last_positive;
}

double check_end_time(const ScoreSource& src, std::optional<double> end_time) {
  const double end = end_time.value_or(src.t_f());
  if (!(end > 0.0 && end <= src.t_f())) fail(ErrorCode::kArgument, "sampler end time must lie in (0, T_f]");
  return end;
}

void check_schedule(const ScoreSource& src, const TimeSchedule& schedule) {
  if (schedule.steps < 1 || schedule.grid.size() != schedule.steps + 1) {
    fail(ErrorCode::kArgument, "sampler needs a valid time schedule");
  }
  if (schedule.grid.back() > src.t_f() * (1.0 + 1e-12)) {
    fail(ErrorCode::kArgument, "time schedule extends past T_f");
  }
}

/// Batched score query for a group of chains at one time.
void batch_scores(const ScoreSource& src, double t, const std::vector<BitState>& xs, std::vector<double>& out) {
  out.resize(xs.size() * src.dim());
  src.score(t, xs, out);
}

// --- Algorithm 1 / Appendix C.1 ------------------------------------------------

/// Evaluation times are capped one guard below T_f so exact mass-ratio scores stay finite.
double eval_time(const ScoreSource& src, double t) { return std::min(t, src.t_f() - kForwardTimeGuard); }

std::vector<double> micro_grid(const ScoreSource& src, double end) {
  const double h = std::min(end, kMicroStepFraction * src.t_f());
  const auto n = static_cast<std::size_t>(std::ceil(end / h - 1e-9));
  std::vector<double> g(n + 1);
  for (std::size_t j = 0; j <= n; ++j) g[j] = std::min(end, static_cast<double>(j) * h);
  g.back() = end;
  return g;
}

class ContinuousRunner {
 public:
  ContinuousRunner(const ScoreSource& src, double end, bool per_coord)
      : src_(src), d_(src.dim()), end_(end), per_coord_(per_coord) {}

  void run(std::vector<BitState>& xs, std::vector<Rng>& rngs, SamplerStats& stats) {
    const std::size_t n = xs.size();
    const std::size_t nc = per_coord_ ? d_ : 1;  // clocks per chain
    thresholds_.assign(n * nc, 0.0);
    acc_.assign(n * nc, 0.0);
    left_.assign(n * d_, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < nc; ++c) thresholds_[i * nc + c] = rngs[i].exponential();
    }
    const std::vector<double> grid = micro_grid(src_, end_);
    rates_at(grid[0], xs, left_);
    std::vector<double> right(n * d_);
    for (std::size_t j = 1; j < grid.size(); ++j) {
      const double a = grid[j - 1], b = grid[j];
      rates_at(b, xs, right);
      for (std::size_t i = 0; i < n; ++i) {
        std::span<double> ra(left_.data() + i * d_, d_);
        std::span<const double> rb(right.data() + i * d_, d_);
        advance(i, a, b, ra, rb, xs[i], rngs[i], stats);
      }
    }
  }

 private:
  void rates_at(double t, const std::vector<BitState>& xs, std::vector<double>& out) {
    const double te = eval_time(src_, t);
    batch_scores(src_, te, xs, scratch_);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      coordinate_rates(std::span<const double>(scratch_.data() + i * d_, d_), src_.lambda(), te,
                       std::span<double>(out.data() + i * d_, d_));
    }
  }

  void single_rates(double t, const BitState& x, std::span<double> out) {
    const double te = eval_time(src_, t);
    std::vector<double> s(d_);
    src_.score(te, std::span<const BitState>(&x, 1), s);
    coordinate_rates(s, src_.lambda(), te, out);
  }

  /// Integrates chain i over [a, b] (trapezoid on the rate, linear crossing interpolation),
  /// handling any number of jumps inside the micro-step. On return `ra` holds the rates at b.
  void advance(std::size_t i, double a, double b, std::span<double> ra, std::span<const double> rb_in,
               BitState& x, Rng& rng, SamplerStats& stats) {
    std::vector<double> rb(rb_in.begin(), rb_in.end());
    const std::size_t nc = per_coord_ ? d_ : 1;
    double* thr = thresholds_.data() + i * nc;
    double* acc = acc_.data() + i * nc;
    while (true) {
      const double h = b - a;
      // Earliest crossing among this chain's clocks.
      double t_star = b;
      std::size_t winner = nc;
      for (std::size_t c = 0; c < nc; ++c) {
        const double r0 = per_coord_ ? ra[c] : sum(ra);
        const double r1 = per_coord_ ? rb[c] : sum(rb);
        const double inc = 0.5 * (r0 + r1) * h;
        if (!std::isfinite(inc)) fail(ErrorCode::kSampler, "rate integral not finite near time " + std::to_string(a));
        if (acc[c] + inc >= thr[c] && inc > 0.0) {
          const double tc = a + std::clamp((thr[c] - acc[c]) / inc, 0.0, 1.0) * h;
          if (winner == nc || tc < t_star) {
            t_star = tc;
            winner = c;
          }
        }
      }
      if (winner == nc || t_star >= end_) {
        for (std::size_t c = 0; c < nc; ++c) {
          const double r0 = per_coord_ ? ra[c] : sum(ra);
          const double r1 = per_coord_ ? rb[c] : sum(rb);
          acc[c] += 0.5 * (r0 + r1) * h;
        }
        std::copy(rb.begin(), rb.end(), ra.begin());
        return;
      }
      std::size_t coord = winner;
      if (!per_coord_) {
        // Jump coordinate drawn from the rates at the crossing time.
        std::vector<double> w(d_);
        single_rates(t_star, x, w);
        const double total = sum(w);
        if (!(total > 0.0)) {
          // Rate vanished at the crossing; fall back to the interpolated weights.
          for (std::size_t l = 0; l < d_; ++l) w[l] = ra[l] + (rb[l] - ra[l]) * (t_star - a) / h;
        }
        coord = categorical(w, sum(w), rng);
      }
      x.toggle(coord);
      ++stats.jumps;
      ++stats.flips;
      for (std::size_t c = 0; c < nc; ++c) {
        thr[c] = rng.exponential();
        acc[c] = 0.0;
      }
      a = t_star;
      single_rates(a, x, ra);
      single_rates(b, x, rb);
      if (a >= b) {
        std::copy(rb.begin(), rb.end(), ra.begin());
        return;
      }
    }
  }

  const ScoreSource& src_;
  std::size_t d_;
  double end_;
  bool per_coord_;
  std::vector<double> thresholds_, acc_, left_, scratch_;
};

// --- Algorithms 3 / 4 ------------------------------------------------------------

void run_discretized(const ScoreSource& src, const SamplerSpec& spec, const FlipSchedule* flips,
                     std::vector<BitState>& xs, std::vector<Rng>& rngs, SamplerStats& stats) {
  const TimeSchedule& schedule = spec.schedule;
  const std::size_t n = xs.size(), d = src.dim();
  std::vector<double> thresholds(n), lambda_acc(n, 0.0), s, w(d);
  for (std::size_t i = 0; i < n; ++i) thresholds[i] = rngs[i].exponential();
  for (std::size_t k = 0; k < schedule.steps; ++k) {
    const double tk = schedule.grid[k];
    const double dt = schedule.grid[k + 1] - tk;
    if (spec.observer) spec.observer(k, xs);
    batch_scores(src, tk, xs, s);
    std::uint64_t m = 1;
    if (flips) {
      m = flips->counts[k];
    }
    for (std::size_t i = 0; i < n; ++i) {
      coordinate_rates(std::span<const double>(s.data() + i * d, d), src.lambda(), tk, w);
      const double total = sum(w);
      lambda_acc[i] += total * dt;
      if (!(lambda_acc[i] > thresholds[i])) continue;
      ++stats.jumps;
      std::uint64_t mk = m;
      if (mk > d) {
        mk = d;
        ++stats.clamped_flip_counts;
      }
      // Sequential weighted draws without replacement (reduces to one categorical draw at M = 1).
      for (std::uint64_t j = 0; j < mk; ++j) {
        const double remaining = sum(w);
        if (!(remaining > 0.0)) {
          ++stats.short_flip_draws;
          break;
        }
        const std::size_t l = categorical(w, remaining, rngs[i]);
        xs[i].toggle(l);
        w[l] = 0.0;
        ++stats.flips;
      }
      lambda_acc[i] = 0.0;
      thresholds[i] = rngs[i].exponential();
    }
  }
}

// --- Algorithm 5 ---------------------------------------------------------------------

void run_denoise(const ScoreSource& src, const TimeSchedule& schedule, std::vector<BitState>& xs,
                 std::vector<Rng>& rngs, SamplerStats& stats) {
  const std::size_t n = xs.size(), d = src.dim();
  std::vector<double> dv(n * d);
  for (std::size_t k = 0; k < schedule.steps; ++k) {
    const double tk = schedule.grid[k];
    src.denoiser(tk, xs, dv);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t l = 0; l < d; ++l) {
        const double p = dv[i * d + l];
        if (!(p >= 0.0 && p <= 1.0)) {
          fail(ErrorCode::kInvalidScore, "denoiser output outside [0,1] at backward time " + std::to_string(tk));
        }
        if (rngs[i].bernoulli(p)) {
          xs[i].toggle(l);
          ++stats.flips;
        }
      }
      ++stats.jumps;
    }
    if (k + 1 == schedule.steps) break;  // the last renoise is to forward time 0, the identity
    const double tau = src.t_f() - schedule.grid[k + 1];
    for (std::size_t i = 0; i < n; ++i) xs[i] = sample_conditional(xs[i], tau, src.lambda(), rngs[i]);
  }
}

/// Runs one group of chains (sharing score queries) from uniform starts.
void run_group(const ScoreSource& src, const SamplerSpec& spec, std::vector<BitState>& xs, std::vector<Rng>& rngs,
               SamplerStats& stats) {
  const std::size_t d = src.dim();
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = uniform_state(d, rngs[i]);
  stats.chains += xs.size();
  switch (spec.kind) {
    case SamplerKind::kContinuous:
    case SamplerKind::kPerCoord: {
      ContinuousRunner runner(src, check_end_time(src, spec.end_time), spec.kind == SamplerKind::kPerCoord);
      runner.run(xs, rngs, stats);
      return;
    }
    case SamplerKind::kDiscrete:
      check_schedule(src, spec.schedule);
      run_discretized(src, spec, nullptr, xs, rngs, stats);
      return;
    case SamplerKind::kFlip:
      check_schedule(src, spec.schedule);
      if (!spec.flips || spec.flips->counts.size() != spec.schedule.steps) {
        fail(ErrorCode::kArgument, "flip sampler needs a flip schedule with one count per interval");
      }
      run_discretized(src, spec, &*spec.flips, xs, rngs, stats);
      return;
    case SamplerKind::kDenoise:
      check_schedule(src, spec.schedule);
      run_denoise(src, spec.schedule, xs, rngs, stats);
      return;
  }
}

BitState run_single(const ScoreSource& src, const SamplerSpec& spec, Rng& rng, SamplerStats* stats) {
  std::vector<BitState> xs(1);
  std::vector<Rng> rngs{rng};
  SamplerStats local;
  run_group(src, spec, xs, rngs, local);
  rng = rngs[0];
  if (stats) *stats += local;
  return xs[0];
}

}  // namespace

// ---------------------------------------------------------------------------
// Public samplers

BitState sample_exact_continuous(const ScoreSource& src, Rng& rng, std::optional<double> end_time,
                                 SamplerStats* stats) {
  return run_single(src, SamplerSpec{SamplerKind::kContinuous, {}, {}, end_time, {}}, rng, stats);
}

BitState sample_exact_percoord(const ScoreSource& src, Rng& rng, std::optional<double> end_time,
                               SamplerStats* stats) {
  return run_single(src, SamplerSpec{SamplerKind::kPerCoord, {}, {}, end_time, {}}, rng, stats);
}

BitState sample_discretized(const ScoreSource& src, const TimeSchedule& schedule, Rng& rng, SamplerStats* stats) {
  return run_single(src, SamplerSpec{SamplerKind::kDiscrete, schedule, {}, {}, {}}, rng, stats);
}

BitState sample_flip_schedule(const ScoreSource& src, const TimeSchedule& schedule, const FlipSchedule& flips,
                              Rng& rng, SamplerStats* stats) {
  return run_single(src, SamplerSpec{SamplerKind::kFlip, schedule, flips, {}, {}}, rng, stats);
}

BitState sample_denoise_renoise(const ScoreSource& src, const TimeSchedule& schedule, Rng& rng,
                                SamplerStats* stats) {
  return run_single(src, SamplerSpec{SamplerKind::kDenoise, schedule, {}, {}, {}}, rng, stats);
}

unsigned default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

std::vector<BitState> sample_chains(const ScoreSource& src, const SamplerSpec& spec, std::size_t n,
                                    std::uint64_t seed, SamplerStats* stats, unsigned threads) {
  std::vector<BitState> out(n);
  if (n == 0) return out;
  const std::size_t n_chunks = (n + kChunkSize - 1) / kChunkSize;
  std::vector<SamplerStats> chunk_stats(n_chunks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (true) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      const std::size_t lo = c * kChunkSize, hi = std::min(n, lo + kChunkSize);
      std::vector<BitState> xs(hi - lo);
      std::vector<Rng> rngs;
      rngs.reserve(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) rngs.emplace_back(derive_seed(seed, kChainStream, i));
      try {
        run_group(src, spec, xs, rngs, chunk_stats[c]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
      std::move(xs.begin(), xs.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
    }
  };

  const unsigned n_threads =
      static_cast<unsigned>(std::min<std::size_t>(threads == 0 ? default_threads() : threads, n_chunks));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  if (stats) {
    for (const auto& s : chunk_stats) *stats += s;
  }
  return out;
}

}  // namespace dmpm
