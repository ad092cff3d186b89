#include "dmpm/losses.hpp"

#include <cmath>

#include "dmpm/forward_process.hpp"
#include "dmpm/score_oracle.hpp"

namespace dmpm {

namespace {

constexpr double kClip = 1e-12;

}  // namespace

void LossSpec::validate() const {
  for (double w : {w1, w2, w3}) {
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorCode::kConfig, "loss weights must be finite and >= 0");
  }
  if (!(w1 + w2 + w3 > 0.0)) fail(ErrorCode::kConfig, "loss weights must not all be zero");
}

LossSpec LossSpec::normalized() const {
  validate();
  const double s = w1 + w2 + w3;
  return LossSpec{w1 / s, w2 / s, w3 / s, w_scaled};
}

std::vector<std::string> LossSpec::preset_names() {
  std::vector<std::string> names;
  for (const char* base : {"l2", "ce", "l2+e", "l2+ce", "e+ce", "l2+e+ce"}) {
    names.emplace_back(base);
    names.emplace_back(std::string(base) + "-w");
  }
  return names;
}

LossSpec LossSpec::preset(const std::string& name) {
  std::string base = name;
  bool scaled = false;
  if (base.size() > 2 && base.compare(base.size() - 2, 2, "-w") == 0) {
    scaled = true;
    base.resize(base.size() - 2);
  }
  LossSpec spec{0.0, 0.0, 0.0, scaled};
  if (base == "l2") {
    spec.w1 = 1.0;
  } else if (base == "ce") {
    spec.w3 = 1.0;
  } else if (base == "l2+e") {
    spec.w1 = spec.w2 = 1.0;
  } else if (base == "l2+ce") {
    spec.w1 = spec.w3 = 1.0;
  } else if (base == "e+ce") {
    spec.w2 = spec.w3 = 1.0;
  } else if (base == "l2+e+ce") {
    spec.w1 = spec.w2 = spec.w3 = 1.0;
  } else {
    fail(ErrorCode::kConfig, "unknown loss preset '" + name + "'");
  }
  return spec.normalized();
}

void TrainBatch::validate() const {
  require(!items.empty(), "training batch must be nonempty");
  const std::size_t d = items.front().x0.dim();
  for (const auto& it : items) {
    if (it.x0.dim() != d || it.xt.dim() != d) fail(ErrorCode::kDimensionMismatch, "batch items differ in d");
    if (!(it.t >= 0.0 && it.t <= t_f)) fail(ErrorCode::kArgument, "batch time outside [0, T_f]");
  }
}

TrainBatch make_batch(std::span<const BitState> clean, double lambda, double t_f, Rng& rng) {
  TrainBatch batch;
  batch.lambda = lambda;
  batch.t_f = t_f;
  batch.items.reserve(clean.size());
  for (const auto& x0 : clean) {
    const double t = t_f * rng.uniform();
    BitState xt = sample_conditional(x0, t_f - t, lambda, rng);
    batch.items.push_back(TrainItem{x0, t, std::move(xt)});
  }
  return batch;
}

double w_scale(double t, double lambda, double t_f) {
  const ScoreAffine c = score_affine(t, lambda, t_f);
  return flip_probability(c.forward_time, lambda);
}

LossValues evaluate_losses(const TrainBatch& batch, const Eigen::MatrixXd& pred, const LossSpec& spec,
                           Eigen::MatrixXd* grad) {
  batch.validate();
  spec.validate();
  const std::size_t d = batch.dim();
  const std::size_t n = batch.items.size();
  if (static_cast<std::size_t>(pred.rows()) != d || static_cast<std::size_t>(pred.cols()) != n) {
    fail(ErrorCode::kDimensionMismatch, "prediction matrix shape does not match batch");
  }
  const double norm = 1.0 / static_cast<double>(n * d);
  if (grad) grad->setZero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));

  LossValues out;
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = batch.items[i];
    const ScoreAffine c = score_affine(item.t, batch.lambda, batch.t_f);
    clamped += c.clamped;
    const double w = spec.w_scaled ? flip_probability(c.forward_time, batch.lambda) : 1.0;
    const double inv_w = 1.0 / w;
    double l2 = 0.0, ent = 0.0, ce = 0.0;
    for (std::size_t l = 0; l < d; ++l) {
      const double p = pred(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i));
      if (!std::isfinite(p)) {
        fail(ErrorCode::kTraining, "non-finite prediction at batch item " + std::to_string(i));
      }
      const bool differs = item.x0[l] != item.xt[l];
      const double y = differs ? 1.0 : 0.0;

      const double r = p - y;
      l2 += r * r * inv_w;

      double pc = p;
      bool clipped = false;
      if (pc < kClip) {
        pc = kClip;
        clipped = true;
      } else if (pc > 1.0 - kClip) {
        pc = 1.0 - kClip;
        clipped = true;
      }
      out.ce_clipped += clipped;
      ce += -(differs ? std::log(pc) : std::log1p(-pc)) * inv_w;

      // Entropy term on the reparameterized score s = offset - slope * p.
      const double s = c.offset - c.slope * p;
      const double one_minus_s = 1.0 - s;
      if (!(one_minus_s > 0.0)) {
        fail(ErrorCode::kTraining, "entropy loss: 1 - s <= 0 at batch item " + std::to_string(i));
      }
      const double f = differs ? c.offset - c.slope : c.offset;
      ent += -s + (f - 1.0) * std::log(one_minus_s);

      if (grad) {
        double g = spec.w1 * 2.0 * r * inv_w;
        if (!clipped) g += spec.w3 * (differs ? -1.0 / pc : 1.0 / (1.0 - pc)) * inv_w;
        // d/dp [-s + (f-1) log(1-s)] with ds/dp = -slope.
        g += spec.w2 * c.slope * (f - s) / one_minus_s;
        (*grad)(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i)) = g * norm;
      }
    }
    if (!std::isfinite(l2) || !std::isfinite(ent) || !std::isfinite(ce)) {
      fail(ErrorCode::kTraining, "non-finite loss at batch item " + std::to_string(i));
    }
    out.l2 += l2;
    out.entropy += ent;
    out.ce += ce;
  }
  out.l2 *= norm;
  out.entropy *= norm;
  out.ce *= norm;
  out.total = spec.w1 * out.l2 + spec.w2 * out.entropy + spec.w3 * out.ce;
  out.clamped_frac = static_cast<double>(clamped) / static_cast<double>(n);
  return out;
}

Eigen::MatrixXd predict_batch(const TrainBatch& batch, const DenoiserFn& model) {
  batch.validate();
  const auto d = static_cast<Eigen::Index>(batch.dim());
  Eigen::MatrixXd pred(d, static_cast<Eigen::Index>(batch.items.size()));
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    model(batch.items[i].t, batch.items[i].xt, std::span<double>(pred.col(static_cast<Eigen::Index>(i)).data(),
                                                                   static_cast<std::size_t>(d)));
  }
  return pred;
}

double loss_l2(const TrainBatch& batch, const DenoiserFn& model, bool w_scaled) {
  return evaluate_losses(batch, predict_batch(batch, model), LossSpec{1.0, 0.0, 0.0, w_scaled}).l2;
}

double loss_ce(const TrainBatch& batch, const DenoiserFn& model, bool w_scaled) {
  return evaluate_losses(batch, predict_batch(batch, model), LossSpec{0.0, 0.0, 1.0, w_scaled}).ce;
}

double loss_entropy(const TrainBatch& batch, const DenoiserFn& model) {
  return evaluate_losses(batch, predict_batch(batch, model), LossSpec{0.0, 1.0, 0.0, false}).entropy;
}

double combined_loss(const TrainBatch& batch, const DenoiserFn& model, const LossSpec& spec) {
  return evaluate_losses(batch, predict_batch(batch, model), spec).total;
}

}  // namespace dmpm
