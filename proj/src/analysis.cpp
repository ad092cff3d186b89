#include "dmpm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dmpm/forward_process.hpp"

namespace dmpm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kUniformizationTail = 1e-14;
constexpr double kMaxPoissonMean = 10.0;  // per uniformization substep
constexpr double kBoundTolerance = 1e-12;

void same_dim(const DenseTable& p, const DenseTable& q) {
  if (p.dim() != q.dim()) fail(ErrorCode::kDimensionMismatch, "tables have different dimensions");
}

}  // namespace

Divergences divergences(const DenseTable& p, const DenseTable& q) {
  same_dim(p, q);
  Divergences out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.tv += std::abs(p[i] - q[i]);
    if (p[i] > 0.0) {
      if (q[i] > 0.0) {
        out.kl += p[i] * std::log(p[i] / q[i]);
      } else {
        out.kl = kInf;
      }
    }
  }
  if (out.kl != kInf) out.kl = std::max(0.0, out.kl);
  return out;
}

double kl_to_uniform(const DenseTable& mu) { return divergences(mu, DenseTable::uniform(mu.dim())).kl; }

// ---------------------------------------------------------------------------

namespace {

/// Distinct states of a sample set with their relative weights.
struct Atoms {
  std::vector<BitState> states;
  std::vector<double> weights;
};

Atoms atoms_of(const EmpiricalSet& set) {
  std::map<std::vector<std::uint8_t>, std::size_t> counts;
  for (const auto& x : set.samples()) ++counts[std::vector<std::uint8_t>(x.bits().begin(), x.bits().end())];
  Atoms a;
  const double n = static_cast<double>(set.size());
  for (const auto& [bits, c] : counts) {
    a.states.emplace_back(bits);
    a.weights.push_back(static_cast<double>(c) / n);
  }
  return a;
}

/// Exact W1 between two weighted point sets on the line: integral of |F_a - F_b|.
double wasserstein1(std::vector<std::pair<double, double>>& points) {
  // points: (position, signed weight: + for a, - for b)
  std::sort(points.begin(), points.end());
  double cdf_diff = 0.0, w = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    cdf_diff += points[i].second;
    w += std::abs(cdf_diff) * (points[i + 1].first - points[i].first);
  }
  return w;
}

}  // namespace

SWDEstimate swd(const EmpiricalSet& a, const EmpiricalSet& b, std::size_t n_directions, Rng& rng) {
  if (a.dim() != b.dim()) fail(ErrorCode::kDimensionMismatch, "SWD inputs have different dimensions");
  if (n_directions == 0) fail(ErrorCode::kArgument, "SWD needs at least one direction");
  const std::size_t d = a.dim();
  const Atoms pa = atoms_of(a), pb = atoms_of(b);
  std::vector<double> per_dir(n_directions);
  std::vector<double> u(d);
  std::vector<std::pair<double, double>> points;
  points.reserve(pa.states.size() + pb.states.size());
  for (std::size_t j = 0; j < n_directions; ++j) {
    double total = 0.0;
    for (auto& v : u) total += (v = rng.exponential());
    for (auto& v : u) v /= total;
    points.clear();
    auto project = [&](const BitState& x) {
      double s = 0.0;
      for (std::size_t l = 0; l < d; ++l) s += x[l] ? u[l] : 0.0;
      return s;
    };
    for (std::size_t i = 0; i < pa.states.size(); ++i) points.emplace_back(project(pa.states[i]), pa.weights[i]);
    for (std::size_t i = 0; i < pb.states.size(); ++i) points.emplace_back(project(pb.states[i]), -pb.weights[i]);
    per_dir[j] = wasserstein1(points);
  }
  SWDEstimate out;
  out.n_directions = n_directions;
  out.value = std::accumulate(per_dir.begin(), per_dir.end(), 0.0) / static_cast<double>(n_directions);
  if (n_directions > 1) {
    double ss = 0.0;
    for (double v : per_dir) ss += (v - out.value) * (v - out.value);
    out.std_error = std::sqrt(ss / static_cast<double>(n_directions - 1) / static_cast<double>(n_directions));
  }
  return out;
}

// ---------------------------------------------------------------------------

double entropy_h(double a) {
  if (a < 0.0) fail(ErrorCode::kArgument, "h(a) needs a >= 0");
  if (a == 0.0) return 1.0;
  return a * std::log(a) - a + 1.0;
}

double fisher_like_beta(const DenseTable& mu) {
  const std::size_t d = mu.dim();
  check_enumerable(d);
  for (std::size_t idx = 0; idx < mu.size(); ++idx) {
    if (!(mu[idx] > 0.0)) {
      fail(ErrorCode::kAssumptionViolation,
           "beta requires full support; state " + BitState::from_index(idx, d).to_string() + " has zero mass");
    }
  }
  double beta = 0.0;
  for (std::size_t idx = 0; idx < mu.size(); ++idx) {
    double inner = 0.0;
    for (std::size_t l = 0; l < d; ++l) inner += entropy_h(mu[idx ^ (std::size_t{1} << l)] / mu[idx]);
    beta += mu[idx] * inner;
  }
  return beta;
}

double BoundReport::recompute() const {
  return std::exp(-t_f) * kl_init + tau * beta + eps * (t_f - eta);
}

std::string BoundReport::to_json() const {
  nlohmann::json j{{"kl_init", kl_init}, {"beta", beta}, {"tau", tau}, {"eps", eps},
                   {"t_f", t_f},         {"eta", eta},   {"bound", bound}};
  j["measured_kl"] = measured_kl ? nlohmann::json(*measured_kl) : nlohmann::json(nullptr);
  return j.dump();
}

namespace {

void check_bound_inputs(std::initializer_list<double> xs) {
  for (double x : xs) {
    if (!(x >= 0.0)) fail(ErrorCode::kArgument, "bound inputs must be >= 0");
  }
}

}  // namespace

BoundReport theorem_bound(double kl_init, double beta, double tau, double eps, double t_f) {
  check_bound_inputs({kl_init, beta, tau, eps, t_f});
  BoundReport r{kl_init, beta, tau, eps, t_f, 0.0, 0.0, std::nullopt};
  r.bound = r.recompute();
  return r;
}

BoundReport theorem_bound_early_stop(double kl_init, double beta_eta, double tau, double eps, double t_f,
                                     double eta) {
  check_bound_inputs({kl_init, beta_eta, tau, eps, t_f, eta});
  if (!(eta < t_f)) fail(ErrorCode::kArgument, "early stopping needs eta < T_f");
  BoundReport r{kl_init, beta_eta, tau, eps, t_f, eta, 0.0, std::nullopt};
  r.bound = r.recompute();
  return r;
}

TvBound tv_early_stop_bound(double eta, double lambda, std::size_t d) {
  if (!(eta >= 0.0)) fail(ErrorCode::kArgument, "eta must be >= 0");
  const double dd = static_cast<double>(d);
  TvBound b;
  b.exact = 2.0 - 2.0 * std::pow(0.5 + 0.5 * std::exp(-2.0 * lambda * eta), dd);
  b.loose = 2.0 - 2.0 * std::pow(std::max(0.0, 1.0 - lambda * eta), dd);
  return b;
}

StepPlan plan_steps(double eps, double kl_init, double beta) {
  if (!(eps > 0.0)) fail(ErrorCode::kPlanning, "plan_steps needs eps > 0");
  if (!(kl_init > 0.0)) fail(ErrorCode::kPlanning, "plan_steps needs KL(mu*|uniform) > 0");
  if (!(beta > 0.0)) {
    fail(ErrorCode::kPlanning, "plan_steps needs beta > 0 (beta = 0 means uniform data; h = eps/(2 beta) is undefined)");
  }
  StepPlan p;
  p.h = eps / (2.0 * beta);
  const double k = std::ceil(std::log(2.0 * kl_init / eps) / p.h - 1e-9);
  p.k = static_cast<std::uint64_t>(std::max(1.0, k));
  p.t_f = p.h * static_cast<double>(p.k);
  return p;
}

EarlyStopPlan plan_early_stop(double eps, std::size_t d, double lambda, double kl_init) {
  if (!(eps > 0.0) || d == 0 || !(lambda > 0.0) || !(kl_init > 0.0)) {
    fail(ErrorCode::kPlanning, "plan_early_stop needs eps > 0, d >= 1, lambda > 0, KL > 0");
  }
  const double dd = static_cast<double>(d);
  EarlyStopPlan p;
  p.eta = (1.0 - std::pow(1.0 - eps / 2.0, 1.0 / dd)) / lambda;
  if (!(p.eta > 0.0) || !std::isfinite(p.eta)) {
    fail(ErrorCode::kPlanning, "eps too large: no positive eta satisfies the early-stopping condition");
  }
  const double le = lambda * p.eta;
  p.h = eps * eps * std::pow(le, dd) / (std::pow(2.0, dd + 3.0) * dd * std::pow(1.0 + 2.0 * le, dd));
  const double k = std::ceil((std::log(2.0 * kl_init / (eps * eps)) - p.eta) / p.h - 1e-9);
  if (!(k < 9.0e18)) fail(ErrorCode::kPlanning, "planned step count overflows");
  p.k = static_cast<std::uint64_t>(std::max(1.0, k));
  p.horizon = p.h * static_cast<double>(p.k);
  return p;
}

// ---------------------------------------------------------------------------

DenseTable exact_backward_marginal(const ScoreSource& src, const TimeSchedule& schedule,
                                   std::vector<std::vector<double>>* per_step) {
  const std::size_t d = src.dim();
  if (d > kExactPropagationLimit) {
    fail(ErrorCode::kEnumerationLimit, "exact backward propagation is limited to d <= " +
                                           std::to_string(kExactPropagationLimit) + " (got " + std::to_string(d) +
                                           ")");
  }
  if (schedule.grid.size() != schedule.steps + 1 || schedule.steps == 0) {
    fail(ErrorCode::kArgument, "exact_backward_marginal needs a valid schedule");
  }
  const std::size_t n = std::size_t{1} << d;
  std::vector<BitState> states;
  states.reserve(n);
  for (std::size_t idx = 0; idx < n; ++idx) states.push_back(BitState::from_index(idx, d));

  std::vector<double> mu(n, 1.0 / static_cast<double>(n)), next(n), term(n), tmp(n);
  std::vector<double> s(n * d), rates(n * d), out_rate(n);
  if (per_step) {
    per_step->clear();
    per_step->push_back(mu);
  }
  for (std::size_t k = 0; k < schedule.steps; ++k) {
    const double tk = schedule.grid[k];
    const double hk = schedule.grid[k + 1] - tk;
    src.score(tk, states, s);
    double big = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
      out_rate[x] = 0.0;
      for (std::size_t l = 0; l < d; ++l) {
        const double r = 1.0 - s[x * d + l];
        if (!std::isfinite(r) || r < -1e-9) {
          fail(ErrorCode::kInvalidScore, "invalid rate 1 - s = " + std::to_string(r) + " at state " +
                                             states[x].to_string() + ", time " + std::to_string(tk));
        }
        rates[x * d + l] = src.lambda() * std::max(0.0, r);
        out_rate[x] += rates[x * d + l];
      }
      big = std::max(big, out_rate[x]);
    }
    if (big > 0.0) {
      const auto substeps = static_cast<std::size_t>(std::max(1.0, std::ceil(big * hk / kMaxPoissonMean)));
      const double m = big * hk / static_cast<double>(substeps);
      for (std::size_t sub = 0; sub < substeps; ++sub) {
        // mu <- sum_j Poisson(m; j) mu P^j with P = I + Q / big.
        double weight = std::exp(-m), cumulative = weight;
        term = mu;
        for (std::size_t x = 0; x < n; ++x) next[x] = weight * term[x];
        for (std::size_t j = 1; 1.0 - cumulative > kUniformizationTail; ++j) {
          for (std::size_t y = 0; y < n; ++y) {
            double v = term[y] * (1.0 - out_rate[y] / big);
            for (std::size_t l = 0; l < d; ++l) {
              const std::size_t x = y ^ (std::size_t{1} << l);
              v += term[x] * rates[x * d + l] / big;
            }
            tmp[y] = v;
          }
          term.swap(tmp);
          weight *= m / static_cast<double>(j);
          cumulative += weight;
          // Put the truncated tail on the last term so total mass is conserved.
          const double w = (1.0 - cumulative <= kUniformizationTail) ? weight + (1.0 - cumulative) : weight;
          for (std::size_t x = 0; x < n; ++x) next[x] += w * term[x];
          if (j > 10000) fail(ErrorCode::kSampler, "uniformization series did not converge");
        }
        mu.swap(next);
      }
    }
    if (per_step) per_step->push_back(mu);
  }
  for (double& v : mu) v = std::max(0.0, v);
  return DenseTable::normalized(d, mu);
}

namespace {

double assumption_term(std::span<const double> s_approx, std::span<const double> s_exact) {
  double total = 0.0;
  for (std::size_t l = 0; l < s_approx.size(); ++l) {
    const double ra = std::max(0.0, 1.0 - s_approx[l]);
    const double re = std::max(0.0, 1.0 - s_exact[l]);
    if (ra == 0.0) {
      if (re > 0.0) return kInf;
      continue;
    }
    total += ra * entropy_h(re / ra);
  }
  return total;
}

}  // namespace

EpsilonEstimate epsilon_exact(const ScoreSource& approx, const ScoreSource& exact, const TimeSchedule& schedule) {
  if (approx.dim() != exact.dim()) fail(ErrorCode::kDimensionMismatch, "score sources differ in d");
  std::vector<std::vector<double>> laws;
  exact_backward_marginal(approx, schedule, &laws);
  const std::size_t d = approx.dim(), n = std::size_t{1} << d;
  std::vector<BitState> states;
  for (std::size_t idx = 0; idx < n; ++idx) states.push_back(BitState::from_index(idx, d));
  std::vector<double> sa(n * d), se(n * d);
  EpsilonEstimate out;
  for (std::size_t k = 0; k < schedule.steps; ++k) {
    const double tk = schedule.grid[k];
    approx.score(tk, states, sa);
    exact.score(tk, states, se);
    double e = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
      if (laws[k][x] <= 0.0) continue;
      e += laws[k][x] * assumption_term({sa.data() + x * d, d}, {se.data() + x * d, d});
    }
    out.per_step.push_back(e);
    if (k == 0 || e > out.value) {
      out.value = e;
      out.argmax = k;
    }
  }
  return out;
}

EpsilonEstimate estimate_epsilon(const ScoreSource& approx, const ScoreSource& exact, const TimeSchedule& schedule,
                                 std::size_t n_chains, std::uint64_t seed) {
  if (approx.dim() != exact.dim()) fail(ErrorCode::kDimensionMismatch, "score sources differ in d");
  if (n_chains < 2) fail(ErrorCode::kArgument, "estimate_epsilon needs at least 2 chains");
  const std::size_t d = approx.dim(), K = schedule.steps;
  std::vector<double> sum(K, 0.0), sum_sq(K, 0.0);
  SamplerSpec spec;
  spec.kind = SamplerKind::kDiscrete;
  spec.schedule = schedule;
  std::vector<double> sa, se;
  spec.observer = [&](std::size_t k, const std::vector<BitState>& xs) {
    const double tk = schedule.grid[k];
    sa.resize(xs.size() * d);
    se.resize(xs.size() * d);
    approx.score(tk, xs, sa);
    exact.score(tk, xs, se);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double v = assumption_term({sa.data() + i * d, d}, {se.data() + i * d, d});
      sum[k] += v;
      sum_sq[k] += v * v;
    }
  };
  sample_chains(approx, spec, n_chains, derive_seed(seed, "epsilon"), nullptr, 1);
  EpsilonEstimate out;
  const double n = static_cast<double>(n_chains);
  for (std::size_t k = 0; k < K; ++k) {
    const double mean = sum[k] / n;
    out.per_step.push_back(mean);
    if (k == 0 || mean > out.value) {
      out.value = mean;
      out.argmax = k;
      const double var = std::max(0.0, (sum_sq[k] - n * mean * mean) / (n - 1.0));
      out.std_error = std::sqrt(var / n);
    }
  }
  return out;
}

ChiSquare chi_square(const EmpiricalSet& samples, const DenseTable& expected) {
  if (samples.dim() != expected.dim()) fail(ErrorCode::kDimensionMismatch, "chi-square: d mismatch");
  const DenseTable hist = samples.histogram();
  const double n = static_cast<double>(samples.size());
  ChiSquare out;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double e = n * expected[i];
    const double o = n * hist[i];
    if (e <= 0.0) {
      if (o > 0.5) fail(ErrorCode::kArgument, "chi-square: observation in a zero-probability cell");
      continue;
    }
    out.statistic += (o - e) * (o - e) / e;
    ++cells;
  }
  out.dof = cells > 0 ? cells - 1 : 0;
  out.z = out.dof > 0 ? (out.statistic - static_cast<double>(out.dof)) / std::sqrt(2.0 * static_cast<double>(out.dof))
                      : 0.0;
  return out;
}

DenseTable random_full_support(std::size_t d, Rng& rng) {
  check_enumerable(d);
  std::vector<double> w(std::size_t{1} << d);
  for (double& v : w) v = rng.exponential();
  return DenseTable::normalized(d, std::move(w));
}

// ---------------------------------------------------------------------------

std::vector<TheoremSweepRow> theorem_sweep(const TheoremSweepConfig& config) {
  std::vector<TheoremSweepRow> rows;
  for (std::size_t d : config.dims) {
    if (d > kExactPropagationLimit) {
      fail(ErrorCode::kEnumerationLimit, "theorem sweep refuses d = " + std::to_string(d) + " (> " +
                                             std::to_string(kExactPropagationLimit) + ")");
    }
    for (std::size_t inst = 0; inst < config.n_instances; ++inst) {
      Rng rng(derive_seed(config.seed, "validate:mu:d" + std::to_string(d), inst));
      const DenseTable mu = random_full_support(d, rng);
      const double kl0 = kl_to_uniform(mu);
      const double beta = fisher_like_beta(mu);
      const ExactOracle oracle(mu, config.lambda, config.t_f);
      for (std::size_t K : config.steps) {
        const TimeSchedule sched = time_grid(config.schedule, K, config.t_f);
        double eps = 0.0;
        DenseTable terminal = DenseTable::uniform(d);
        if (config.corrupt_shift != 0.0) {
          const ShiftedSource bad(oracle, config.corrupt_shift);
          terminal = exact_backward_marginal(bad, sched);
          eps = epsilon_exact(bad, oracle, sched).value;
        } else {
          terminal = exact_backward_marginal(oracle, sched);
        }
        TheoremSweepRow row;
        row.instance = "d" + std::to_string(d) + "-mu" + std::to_string(inst);
        row.d = d;
        row.k = K;
        row.report = theorem_bound(kl0, beta, sched.max_step(), eps, config.t_f);
        row.report.measured_kl = divergences(mu, terminal).kl;
        row.bound_eps0 = theorem_bound(kl0, beta, sched.max_step(), 0.0, config.t_f).bound;
        row.slack = row.report.bound - *row.report.measured_kl;
        row.violated = *row.report.measured_kl > row.report.bound + kBoundTolerance;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<TvSweepRow> tv_sweep(const TvSweepConfig& config) {
  std::vector<double> etas = config.etas;
  if (etas.empty()) {
    for (int j = 1; j <= 20; ++j) etas.push_back(0.025 * j);
  }
  std::vector<TvSweepRow> rows;
  for (std::size_t d : config.dims) {
    check_enumerable(d);
    for (std::size_t inst = 0; inst <= config.n_instances; ++inst) {
      DenseTable mu = DenseTable::uniform(d);
      std::string name;
      if (inst < config.n_instances) {
        Rng rng(derive_seed(config.seed, "validate:tv:d" + std::to_string(d), inst));
        mu = random_full_support(d, rng);
        name = "d" + std::to_string(d) + "-mu" + std::to_string(inst);
      } else {
        mu = DenseTable::point_mass(BitState(d));
        name = "d" + std::to_string(d) + "-point";
      }
      for (double eta : etas) {
        TvSweepRow row;
        row.instance = name;
        row.d = d;
        row.eta = eta;
        row.tv_measured = divergences(marginal(mu, eta, config.lambda), mu).tv;
        row.bound = tv_early_stop_bound(eta, config.lambda, d);
        row.slack = row.bound.exact - row.tv_measured;
        row.violated = row.tv_measured > row.bound.exact + kBoundTolerance;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace dmpm
