// Acceptance run: one PASS/FAIL line per criterion, details indented below it.
//
//   acceptance            all criteria
//   acceptance 3 6        only the listed criteria
//
// Exit status is 0 iff every selected criterion passed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmpm/analysis.hpp"
#include "dmpm/denoiser_model.hpp"
#include "dmpm/forward_process.hpp"
#include "dmpm/harness.hpp"
#include "dmpm/samplers.hpp"
#include "dmpm/score_oracle.hpp"
#include "dmpm/score_source.hpp"
#include "dmpm/state_space.hpp"

using namespace dmpm;

namespace {

struct Outcome {
  bool pass = false;
  std::vector<std::string> details;
  void note(const char* fmt, ...) __attribute__((format(printf, 2, 3)));
};

void Outcome::note(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  details.emplace_back(buf);
}

DenseTable histogram(const std::vector<BitState>& xs) { return EmpiricalSet(xs).histogram(); }

// --- 1. forward kernel ----------------------------------------------------------------------

Outcome criterion1() {
  Outcome out;
  const std::size_t d = 4;
  const std::size_t n_paths = 100000;
  const ForwardParams params{1.0, 3.0};
  const BitState x0 = BitState::from_string("0110");
  const std::vector<double> times{0.1, 0.7, 3.0};

  std::vector<std::vector<double>> counts(times.size(), std::vector<double>(std::size_t{1} << d, 0.0));
  Rng rng(derive_seed(1, "acceptance:forward"));
  for (std::size_t i = 0; i < n_paths; ++i) {
    const ForwardPath path = simulate_path(x0, params, rng);
    for (std::size_t j = 0; j < times.size(); ++j) counts[j][path.state_at(times[j]).to_index()] += 1.0;
  }

  std::size_t outside = 0;
  double worst_sigma = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    double max_sigma = 0.0;
    for (std::size_t idx = 0; idx < counts[j].size(); ++idx) {
      const double p = kernel(x0, BitState::from_index(idx, d), times[j], params.lambda);
      const double sd = std::sqrt(n_paths * p * (1.0 - p));
      const double dev = std::abs(counts[j][idx] - n_paths * p);
      const double sigmas = sd > 0.0 ? dev / sd : (dev > 0.0 ? INFINITY : 0.0);
      max_sigma = std::max(max_sigma, sigmas);
      if (sigmas > 3.0) ++outside;
    }
    worst_sigma = std::max(worst_sigma, max_sigma);
    out.note("t=%.1f: max |count - N p| = %.2f sigma over 16 cells", times[j], max_sigma);
  }
  out.note("%zu of 48 cells outside the 3-sigma band (10^5 Poisson-clock paths from x0=0110)", outside);
  out.pass = outside == 0;
  return out;
}

// --- 2. score oracle --------------------------------------------------------------------------

Outcome criterion2() {
  Outcome out;
  Rng rng(derive_seed(2, "acceptance:oracle"));
  const double lambda = 1.0, t_f = 3.0;
  double max_ratio_vs_ce = 0.0, max_ratio_vs_den = 0.0;
  std::size_t n_checks = 0;
  for (std::size_t inst = 0; inst < 50; ++inst) {
    const std::size_t d = 1 + inst % 8;
    const Distribution mu0 = random_full_support(d, rng);
    for (int q = 0; q < 10; ++q) {
      const double t = rng.uniform() * (t_f - 0.01);  // forward time >= 0.01
      const BitState x = uniform_state(d, rng);
      const ScoreVector ratio = exact_score(mu0, t, x, lambda, t_f);
      const ScoreVector ce = score_conditional_expectation(mu0, t, x, lambda, t_f);
      const ScoreVector via_den = score_from_denoiser(exact_denoiser(mu0, t, x, lambda, t_f), t, lambda, t_f);
      for (std::size_t l = 0; l < d; ++l) {
        const double scale = std::max(1.0, std::abs(ratio.values[l]));
        max_ratio_vs_ce = std::max(max_ratio_vs_ce, std::abs(ratio.values[l] - ce.values[l]) / scale);
        max_ratio_vs_den = std::max(max_ratio_vs_den, std::abs(ratio.values[l] - via_den.values[l]) / scale);
        ++n_checks;
      }
    }
  }
  out.note("50 random full-support laws, d = 1..8, 10 random (t, x) each: %zu coordinates", n_checks);
  out.note("max |ratio - conditional expectation| = %.3e", max_ratio_vs_ce);
  out.note("max |ratio - affine(exact denoiser)|  = %.3e", max_ratio_vs_den);
  out.pass = max_ratio_vs_ce <= 1e-12 && max_ratio_vs_den <= 1e-12;
  return out;
}

// --- 3. Theorem 2.3 ---------------------------------------------------------------------------

Outcome criterion3() {
  Outcome out;
  TheoremSweepConfig cfg;  // d in {2,3,4}, K in {25,100,400}, 20 laws each, T_f = 4
  cfg.seed = 3;
  const auto rows = theorem_sweep(cfg);
  std::size_t violations = 0;
  double min_slack = INFINITY, max_ratio = 0.0;
  for (const auto& r : rows) {
    if (r.violated) ++violations;
    min_slack = std::min(min_slack, r.slack);
    max_ratio = std::max(max_ratio, *r.report.measured_kl / r.report.bound);
  }
  out.note("%zu (law, d, K) cases, exact oracle (eps = 0), linear grid, T_f = 4", rows.size());
  out.note("violations: %zu, min slack %.3e, max measured/bound %.4f", violations, min_slack, max_ratio);
  out.pass = violations == 0 && rows.size() == 180;
  return out;
}

// --- 4. Proposition 2.6 -----------------------------------------------------------------------

Outcome criterion4() {
  Outcome out;
  TvSweepConfig cfg;  // d = 2..6, 6 random laws + one point mass each, 20 etas
  cfg.seed = 4;
  const auto rows = tv_sweep(cfg);
  std::size_t violations = 0;
  double min_slack = INFINITY;
  for (const auto& r : rows) {
    if (r.violated) ++violations;
    min_slack = std::min(min_slack, r.slack);
  }
  out.note("%zu (law, d, eta) cases on a 20-point eta grid", rows.size());
  out.note("violations: %zu, min slack %.3e (point masses attain the bound)", violations, min_slack);
  out.pass = violations == 0 && !rows.empty();
  return out;
}

// --- 5. gradients -----------------------------------------------------------------------------

Outcome criterion5() {
  Outcome out;
  const double lambda = 1.0, t_f = 3.0, h = 1e-6, floor = 1e-5;
  struct Case {
    const char* name;
    LossSpec spec;
  };
  const std::vector<Case> cases{{"L2", {1, 0, 0, false}},  {"L2-w", {1, 0, 0, true}}, {"entropy", {0, 1, 0, false}},
                                {"CE", {0, 0, 1, false}},  {"CE-w", {0, 0, 1, true}}};
  std::vector<double> worst(cases.size(), 0.0);
  std::size_t n_checks = 0;
  for (std::uint64_t b = 0; b < 10; ++b) {
    ModelConfig mc{6, 2, 16, 8, derive_seed(5, "acceptance:init", b)};
    DenoiserNet net(mc);
    Rng rng(derive_seed(5, "acceptance:batch", b));
    const auto clean = sample(sawtooth_params(6), 32, rng);
    const TrainBatch batch = make_batch(clean.samples(), lambda, t_f, rng);
    std::vector<std::size_t> coords(20);
    for (auto& c : coords) c = rng.index(net.params().size());
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
      Eigen::VectorXd grad;
      net.loss_and_grad(batch, cases[ci].spec, grad);
      for (std::size_t c : coords) {
        Eigen::VectorXd scratch;
        const double orig = net.params()[c];
        net.mutable_params()[c] = orig + h;
        const double up = net.loss_and_grad(batch, cases[ci].spec, scratch);
        net.mutable_params()[c] = orig - h;
        const double down = net.loss_and_grad(batch, cases[ci].spec, scratch);
        net.mutable_params()[c] = orig;
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(grad[c] - fd) / std::max({std::abs(grad[c]), std::abs(fd), floor});
        worst[ci] = std::max(worst[ci], rel);
        ++n_checks;
      }
    }
  }
  bool ok = true;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    out.note("%-8s max rel. error %.3e", cases[ci].name, worst[ci]);
    ok = ok && worst[ci] < 1e-4;
  }
  out.note("%zu checks: 10 batches x 20 random parameters, central differences h = 1e-6 (denominator floor %.0e)",
           n_checks, floor);
  out.pass = ok;
  return out;
}

// --- 6. discretized sampler with the exact oracle ----------------------------------------------

Outcome criterion6() {
  Outcome out;
  const Distribution mu0 = sawtooth_params(4);
  const ExactOracle oracle(mu0, 1.0, 3.0);
  SamplerSpec spec;
  spec.kind = SamplerKind::kDiscrete;
  spec.schedule = time_grid(ScheduleKind::kCosine, 200, 3.0);
  const auto xs = sample_chains(oracle, spec, 100000, 6);
  const DenseTable target = to_table(mu0);
  const Divergences div = divergences(histogram(xs), target);
  const DenseTable exact_law = exact_backward_marginal(oracle, spec.schedule);
  out.note("d=4 sawtooth, cosine K=200, T_f=3, 10^5 chains: empirical TV = %.4f (threshold 0.03)", div.tv);
  out.note("exact law of the discretized chain: TV to data = %.2e, KL = %.2e",
           divergences(exact_law, target).tv, divergences(exact_law, target).kl);
  out.pass = div.tv < 0.03;
  return out;
}

// --- 7. learned pipeline ----------------------------------------------------------------------

Outcome criterion7() {
  Outcome out;
  const std::string dir = (std::filesystem::current_path() / "acceptance_c7").string();
  std::filesystem::remove_all(dir);
  RunConfig c;
  c.d = 8;
  c.seed = 7;
  c.loss_preset = "l2-w";
  c.train.steps = 4000;
  c.train.decay_every = 1000;
  c.train.decay_gamma = 0.5;
  c.schedule = ScheduleKind::kCosine;
  c.schedule_steps = 30;
  c.n_samples = 20000;
  c.out_dir = dir;
  cmd_train(c, false);
  out.note("d=8 sawtooth, preset l2-w, %llu steps x batch %llu (lr halved every 1000), 20000 samples, cosine K=30",
           static_cast<unsigned long long>(c.train.steps), static_cast<unsigned long long>(c.train.batch_size));

  struct Row {
    const char* name;
    SamplerKind kind;
    std::uint64_t flip_total;
  };
  // Alg. 3 and Alg. 4 at K=30 carry a discretization error of their own (at most one crossing per
  // step), so each learned-model value is printed next to the exact-score value on the same grid.
  const std::vector<Row> rows{{"Alg. 5 denoise-renoise", SamplerKind::kDenoise, 0},
                              {"Alg. 3 discretized", SamplerKind::kDiscrete, 0},
                              {"Alg. 4 linear flips, total 30", SamplerKind::kFlip, 30}};
  double gated = INFINITY, floor = 0.0;
  for (const auto& r : rows) {
    c.sampler = r.kind;
    c.flip_total = r.flip_total;
    double value[2] = {0.0, 0.0};
    for (int exact = 1; exact >= 0; --exact) {
      cmd_sample(c, exact == 1, 0, "");
      cmd_eval(c, "");
      std::ifstream in(dir + "/metrics.json");
      const nlohmann::json m = nlohmann::json::parse(in);
      value[exact] = m["swd"]["value"].get<double>();
      floor = m["swd_floor"]["value"].get<double>();
    }
    out.note("%-30s SWD learned %.3e | exact score %.3e", r.name, value[0], value[1]);
    if (r.kind == SamplerKind::kDenoise) gated = value[0];
  }
  // Reported only: linear versus constant flip schedule with the total fixed to d, K = 25.
  c.sampler = SamplerKind::kFlip;
  c.flip_total = 0;  // d
  c.schedule_steps = 25;
  for (FlipKind fk : {FlipKind::kLinear, FlipKind::kConstant}) {
    c.flip_kind = fk;
    cmd_sample(c, false, 0, "");
    cmd_eval(c, "");
    std::ifstream in(dir + "/metrics.json");
    const nlohmann::json m = nlohmann::json::parse(in);
    out.note("(reported) Alg. 4 %-8s flips, total d, K=25: SWD %.3e", to_string(fk).c_str(),
             m["swd"]["value"].get<double>());
  }
  out.note("gated: Alg. 5 SWD %.3e < 1e-2; stretch target 3.308e-3 %s; two-draw floor %.3e", gated,
           gated <= 3.308e-3 ? "met" : "not met", floor);
  out.pass = gated < 1e-2;
  return out;
}

// --- 8. sampler cross-validation --------------------------------------------------------------

Outcome criterion8() {
  Outcome out;
  Rng law_rng(derive_seed(8, "acceptance:law"));
  const DenseTable law = random_full_support(3, law_rng);
  const ExactOracle oracle(law, 1.0, 3.0);
  const std::size_t n = 100000;

  SamplerSpec cont;
  cont.kind = SamplerKind::kContinuous;
  SamplerSpec perc;
  perc.kind = SamplerKind::kPerCoord;
  SamplerSpec disc;
  disc.kind = SamplerKind::kDiscrete;
  disc.schedule = time_grid(ScheduleKind::kCosine, 400, 3.0);

  const std::vector<std::string> names{"Alg. 1 thinning", "C.1 per-coordinate", "Alg. 3 K=400"};
  std::vector<DenseTable> h;
  h.push_back(histogram(sample_chains(oracle, cont, n, 81)));
  h.push_back(histogram(sample_chains(oracle, perc, n, 82)));
  h.push_back(histogram(sample_chains(oracle, disc, n, 83)));
  bool ok = true;
  for (std::size_t i = 0; i < h.size(); ++i) {
    out.note("%-20s TV to data %.4f", names[i].c_str(), divergences(h[i], law).tv);
    for (std::size_t j = i + 1; j < h.size(); ++j) {
      const double tv = divergences(h[i], h[j]).tv;
      out.note("  vs %-20s TV %.4f (threshold 0.02)", names[j].c_str(), tv);
      ok = ok && tv < 0.02;
    }
  }
  out.pass = ok;
  return out;
}

// --- 9. denoise-renoise -----------------------------------------------------------------------

Outcome criterion9() {
  Outcome out;
  const BitState x0 = BitState::from_string("101100");
  const ExactOracle point(DenseTable::point_mass(x0), 1.0, 3.0);
  SamplerSpec one;
  one.kind = SamplerKind::kDenoise;
  one.schedule = time_grid(ScheduleKind::kLinear, 1, 3.0);
  const auto xs = sample_chains(point, one, 20000, 91);
  const auto hits = std::count(xs.begin(), xs.end(), x0);
  out.note("delta_{101100}, one denoise cycle: %lld / %zu chains return x0", static_cast<long long>(hits), xs.size());

  SamplerSpec many = one;
  many.schedule = time_grid(ScheduleKind::kCosine, 10, 3.0);
  const auto ys = sample_chains(point, many, 20000, 92);
  const auto hits_many = std::count(ys.begin(), ys.end(), x0);
  out.note("delta_{101100}, 10 cycles: %lld / %zu chains return x0", static_cast<long long>(hits_many), ys.size());

  const ExactOracle uniform(DenseTable::uniform(6), 1.0, 3.0);
  const auto us = sample_chains(uniform, many, 100000, 93);
  const ChiSquare chi = chi_square(EmpiricalSet(us), DenseTable::uniform(6));
  out.note("uniform data, d=6, 10 cycles, 10^5 chains: chi2 = %.1f on %zu dof, z = %.2f (|z| <= 3)", chi.statistic,
           chi.dof, chi.z);
  out.pass = static_cast<std::size_t>(hits) == xs.size() && static_cast<std::size_t>(hits_many) == ys.size() &&
             std::abs(chi.z) <= 3.0;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "forward kernel matches Monte-Carlo paths (d=4, 10^5 paths, 3 sigma)", criterion1},
      {2, "ratio score == conditional expectation == affine(exact denoiser) to 1e-12", criterion2},
      {3, "Theorem 2.3 bound holds with the exact oracle (d<=4, K<=400, T_f=4)", criterion3},
      {4, "Proposition 2.6 early-stopping TV bound holds (d<=6, 20 etas)", criterion4},
      {5, "analytic loss gradients match central differences (rel < 1e-4)", criterion5},
      {6, "Alg. 3 with exact oracle recovers d=4 sawtooth (TV < 0.03)", criterion6},
      {7, "trained d=8 model, cosine K=30: SWD < 1e-2 against sawtooth", criterion7},
      {8, "Alg. 1, C.1 and Alg. 3 (K=400) agree pairwise (TV < 0.02)", criterion8},
      {9, "denoise-renoise: point mass returned exactly; uniform passes chi-square", criterion9},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note("exception: %s", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %d: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title, secs);
    for (const auto& line : o.details) std::printf("    %s\n", line.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  if (selected.empty() || selected.count(10)) {
    std::printf("NOT REPRODUCIBLE criterion 10: MNIST results (Table 1 FID 2.89 at 200 steps, F1-DC 1.00; "
                "Figures 3/5/7/8) need U-Net training and inception features; out of scope, covered in spirit "
                "by criteria 1-9\n");
  }
  return failed == 0 ? 0 : 1;
}
