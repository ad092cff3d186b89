#include "dmpm/denoiser_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace dmpm {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using MutMap = Eigen::Map<MatrixXd>;

constexpr double kLayerNormEps = 1e-5;

// Offsets of every tensor inside the flat parameter vector.
struct Layout {
  struct Linear {
    std::size_t w = 0, b = 0;
    Index rows = 0, cols = 0;
  };
  struct Block {
    std::size_t ln_gain = 0, ln_bias = 0;
    Linear fc1, time, fc2;
  };
  Linear time_embed, input, head;
  std::vector<Block> blocks;
  std::size_t total = 0;

  explicit Layout(const ModelConfig& c) {
    const auto w = static_cast<Index>(c.width);
    const auto d = static_cast<Index>(c.d);
    const auto e = static_cast<Index>(c.time_embed_dim);
    time_embed = linear(w, e);
    input = linear(w, d);
    for (std::uint64_t b = 0; b < c.blocks; ++b) {
      Block blk;
      blk.ln_gain = take(c.width);
      blk.ln_bias = take(c.width);
      blk.fc1 = linear(w, w);
      blk.time = linear(w, w);
      blk.fc2 = linear(w, w);
      blocks.push_back(blk);
    }
    head = linear(d, w);
  }

 private:
  std::size_t take(std::size_t n) {
    const std::size_t at = total;
    total += n;
    return at;
  }
  Linear linear(Index rows, Index cols) {
    Linear l;
    l.rows = rows;
    l.cols = cols;
    l.w = take(static_cast<std::size_t>(rows * cols));
    l.b = take(static_cast<std::size_t>(rows));
    return l;
  }
};

ConstMap weight(const VectorXd& p, const Layout::Linear& l) { return ConstMap(p.data() + l.w, l.rows, l.cols); }
Eigen::Map<const VectorXd> bias(const VectorXd& p, const Layout::Linear& l) {
  return Eigen::Map<const VectorXd>(p.data() + l.b, l.rows);
}
Eigen::Map<const VectorXd> vec(const VectorXd& p, std::size_t off, Index n) {
  return Eigen::Map<const VectorXd>(p.data() + off, n);
}

MatrixXd affine(const VectorXd& p, const Layout::Linear& l, const MatrixXd& x) {
  MatrixXd y = weight(p, l) * x;
  y.colwise() += bias(p, l);
  return y;
}

void accumulate_linear(VectorXd& g, const Layout::Linear& l, const MatrixXd& dy, const MatrixXd& x) {
  MutMap(g.data() + l.w, l.rows, l.cols).noalias() += dy * x.transpose();
  Eigen::Map<VectorXd>(g.data() + l.b, l.rows) += dy.rowwise().sum();
}

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

MatrixXd silu(const MatrixXd& a) {
  return a.unaryExpr([](double v) { return v * sigmoid(v); });
}

MatrixXd silu_grad(const MatrixXd& a) {
  return a.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

MatrixXd time_features(std::span<const double> times, std::uint64_t embed_dim) {
  const Index half = static_cast<Index>(embed_dim / 2);
  MatrixXd f(static_cast<Index>(embed_dim), static_cast<Index>(times.size()));
  for (Index i = 0; i < half; ++i) {
    // Frequencies geometric between 1 and 100.
    const double omega = half > 1 ? std::exp(std::log(100.0) * static_cast<double>(i) / static_cast<double>(half - 1)) : 1.0;
    for (Index j = 0; j < f.cols(); ++j) {
      f(2 * i, j) = std::sin(omega * times[static_cast<std::size_t>(j)]);
      f(2 * i + 1, j) = std::cos(omega * times[static_cast<std::size_t>(j)]);
    }
  }
  return f;
}

MatrixXd encode_states(std::span<const BitState> states, std::size_t d) {
  MatrixXd x(static_cast<Index>(d), static_cast<Index>(states.size()));
  for (std::size_t j = 0; j < states.size(); ++j) {
    if (states[j].dim() != d) fail(ErrorCode::kDimensionMismatch, "model input dimension mismatch");
    for (std::size_t i = 0; i < d; ++i) x(static_cast<Index>(i), static_cast<Index>(j)) = states[j][i] ? 1.0 : -1.0;
  }
  return x;
}

}  // namespace

void ModelConfig::validate() const {
  if (d == 0 || blocks == 0 || width == 0 || time_embed_dim == 0) {
    fail(ErrorCode::kConfig, "model dimensions must be positive integers");
  }
  if (time_embed_dim % 2 != 0) fail(ErrorCode::kConfig, "time_embed_dim must be even");
}

std::size_t ModelConfig::param_count() const {
  validate();
  return Layout(*this).total;
}

struct DenoiserNet::Cache {
  MatrixXd features, time_pre, time_act, input;
  std::vector<MatrixXd> hidden;  // blocks + 1 residual stream states
  std::vector<MatrixXd> normed, ln_out, pre, act;
  std::vector<Eigen::RowVectorXd> inv_std;
  MatrixXd out;
};

DenoiserNet::DenoiserNet(const ModelConfig& config) : config_(config) {
  config_.validate();
  init_params();
}

DenoiserNet::DenoiserNet(const ModelConfig& config, VectorXd params) : config_(config) {
  config_.validate();
  set_params(std::move(params));
}

void DenoiserNet::set_params(VectorXd p) {
  if (static_cast<std::size_t>(p.size()) != config_.param_count()) {
    fail(ErrorCode::kDimensionMismatch, "parameter vector has wrong length for the model configuration");
  }
  params_ = std::move(p);
}

void DenoiserNet::init_params() {
  const Layout layout(config_);
  params_ = VectorXd::Zero(static_cast<Index>(layout.total));
  Rng rng(derive_seed(config_.seed, "model-init"));
  auto fill = [&](const Layout::Linear& l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.cols));
    for (Index i = 0; i < l.rows * l.cols; ++i) params_[static_cast<Index>(l.w) + i] = bound * (2.0 * rng.uniform() - 1.0);
    for (Index i = 0; i < l.rows; ++i) params_[static_cast<Index>(l.b) + i] = bound * (2.0 * rng.uniform() - 1.0);
  };
  fill(layout.time_embed);
  fill(layout.input);
  for (const auto& blk : layout.blocks) {
    for (Index i = 0; i < static_cast<Index>(config_.width); ++i) params_[static_cast<Index>(blk.ln_gain) + i] = 1.0;
    fill(blk.fc1);
    fill(blk.time);
    fill(blk.fc2);
  }
  // Head stays zero: the initial output is sigmoid(0) = 0.5 everywhere.
}

void DenoiserNet::check_finite() const {
  if (!params_.allFinite()) fail(ErrorCode::kModelCorrupt, "model parameters contain NaN or infinity");
}

MatrixXd DenoiserNet::forward(std::span<const double> times, std::span<const BitState> states, Cache* cache) const {
  if (times.size() != states.size()) fail(ErrorCode::kArgument, "times and states differ in length");
  check_finite();
  const Layout layout(config_);
  const VectorXd& p = params_;

  MatrixXd features = time_features(times, config_.time_embed_dim);
  MatrixXd time_pre = affine(p, layout.time_embed, features);
  MatrixXd time_act = silu(time_pre);
  MatrixXd input = encode_states(states, config_.d);
  MatrixXd h = affine(p, layout.input, input);
  if (cache) {
    cache->hidden.clear();
    cache->normed.clear();
    cache->ln_out.clear();
    cache->pre.clear();
    cache->act.clear();
    cache->inv_std.clear();
  }

  const Index w = static_cast<Index>(config_.width);
  for (const auto& blk : layout.blocks) {
    Eigen::RowVectorXd mean = h.colwise().mean();
    MatrixXd centered = h.rowwise() - mean;
    Eigen::RowVectorXd inv_std =
        ((centered.array().square().colwise().sum() / static_cast<double>(w)) + kLayerNormEps).rsqrt().matrix();
    MatrixXd normed = centered.array().rowwise() * inv_std.array();
    MatrixXd ln_out = (normed.array().colwise() * vec(p, blk.ln_gain, w).array()).matrix();
    ln_out.colwise() += vec(p, blk.ln_bias, w);
    MatrixXd pre = affine(p, blk.fc1, ln_out);
    pre.noalias() += weight(p, blk.time) * time_act;
    pre.colwise() += bias(p, blk.time);
    MatrixXd act = silu(pre);
    MatrixXd next = h + affine(p, blk.fc2, act);
    if (cache) {
      cache->hidden.push_back(std::move(h));
      cache->normed.push_back(std::move(normed));
      cache->ln_out.push_back(std::move(ln_out));
      cache->pre.push_back(std::move(pre));
      cache->act.push_back(std::move(act));
      cache->inv_std.push_back(std::move(inv_std));
    }
    h = std::move(next);
  }

  MatrixXd out = affine(p, layout.head, h).unaryExpr([](double v) { return sigmoid(v); });
  if (cache) {
    cache->features = std::move(features);
    cache->time_pre = std::move(time_pre);
    cache->time_act = std::move(time_act);
    cache->input = std::move(input);
    cache->hidden.push_back(std::move(h));
    cache->out = out;
  }
  return out;
}

void DenoiserNet::backward(const Cache& cache, const MatrixXd& dlogits, VectorXd& grad) const {
  const Layout layout(config_);
  const VectorXd& p = params_;
  const Index w = static_cast<Index>(config_.width);
  grad = VectorXd::Zero(params_.size());

  accumulate_linear(grad, layout.head, dlogits, cache.hidden.back());
  MatrixXd dh = weight(p, layout.head).transpose() * dlogits;
  MatrixXd dtime = MatrixXd::Zero(w, dlogits.cols());

  for (std::size_t b = layout.blocks.size(); b-- > 0;) {
    const auto& blk = layout.blocks[b];
    // Residual: dh flows to the block input unchanged and through fc2.
    accumulate_linear(grad, blk.fc2, dh, cache.act[b]);
    MatrixXd dpre = (weight(p, blk.fc2).transpose() * dh).cwiseProduct(silu_grad(cache.pre[b]));
    accumulate_linear(grad, blk.fc1, dpre, cache.ln_out[b]);
    accumulate_linear(grad, blk.time, dpre, cache.time_act);
    dtime.noalias() += weight(p, blk.time).transpose() * dpre;
    MatrixXd dln = weight(p, blk.fc1).transpose() * dpre;

    Eigen::Map<VectorXd>(grad.data() + blk.ln_gain, w) += dln.cwiseProduct(cache.normed[b]).rowwise().sum();
    Eigen::Map<VectorXd>(grad.data() + blk.ln_bias, w) += dln.rowwise().sum();
    MatrixXd dnorm = dln.array().colwise() * vec(p, blk.ln_gain, w).array();
    const Eigen::RowVectorXd mean_dn = dnorm.colwise().mean();
    const Eigen::RowVectorXd mean_dn_n = dnorm.cwiseProduct(cache.normed[b]).colwise().mean();
    MatrixXd dx = (dnorm.rowwise() - mean_dn) - (cache.normed[b].array().rowwise() * mean_dn_n.array()).matrix();
    dh += (dx.array().rowwise() * cache.inv_std[b].array()).matrix();
  }

  accumulate_linear(grad, layout.input, dh, cache.input);
  MatrixXd dtime_pre = dtime.cwiseProduct(silu_grad(cache.time_pre));
  accumulate_linear(grad, layout.time_embed, dtime_pre, cache.features);
}

MatrixXd DenoiserNet::predict(std::span<const double> times, std::span<const BitState> states) const {
  return forward(times, states, nullptr);
}

MatrixXd DenoiserNet::predict(double t, std::span<const BitState> states) const {
  std::vector<double> times(states.size(), t);
  return forward(times, states, nullptr);
}

DenoiserVector DenoiserNet::predict(double t, const BitState& x) const {
  const MatrixXd y = predict(t, std::span<const BitState>(&x, 1));
  return DenoiserVector{std::vector<double>(y.data(), y.data() + y.size()), t};
}

double DenoiserNet::loss_and_grad(const TrainBatch& batch, const LossSpec& spec, VectorXd& grad,
                                  LossValues* values) const {
  batch.validate();
  if (batch.dim() != config_.d) fail(ErrorCode::kDimensionMismatch, "batch dimension does not match model");
  std::vector<double> times;
  std::vector<BitState> states;
  times.reserve(batch.items.size());
  states.reserve(batch.items.size());
  for (const auto& it : batch.items) {
    times.push_back(it.t);
    states.push_back(it.xt);
  }
  Cache cache;
  const MatrixXd pred = forward(times, states, &cache);
  MatrixXd dpred;
  const LossValues lv = evaluate_losses(batch, pred, spec, &dpred);
  if (!std::isfinite(lv.total)) fail(ErrorCode::kTraining, "non-finite loss");
  const MatrixXd dlogits = dpred.cwiseProduct(pred.cwiseProduct((1.0 - pred.array()).matrix()));
  backward(cache, dlogits, grad);
  if (values) *values = lv;
  return lv.total;
}

OptimizerState OptimizerState::for_params(std::size_t n, double lr, double weight_decay) {
  OptimizerState s;
  s.m = VectorXd::Zero(static_cast<Index>(n));
  s.v = VectorXd::Zero(static_cast<Index>(n));
  s.lr = lr;
  s.weight_decay = weight_decay;
  return s;
}

double OptimizerState::current_lr() const {
  if (decay_every == 0) return lr;
  return lr * std::pow(decay_gamma, static_cast<double>(step / decay_every));
}

void optimizer_step(VectorXd& params, const VectorXd& grad, OptimizerState& state) {
  if (params.size() != grad.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    fail(ErrorCode::kDimensionMismatch, "optimizer_step: shape mismatch");
  }
  if (!grad.allFinite()) fail(ErrorCode::kTraining, "optimizer_step: non-finite gradient rejected");
  const double lr = state.current_lr();
  ++state.step;
  const double t = static_cast<double>(state.step);
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  if (state.weight_decay != 0.0) params *= 1.0 - lr * state.weight_decay;
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
  if (!params.allFinite()) fail(ErrorCode::kTraining, "optimizer_step produced non-finite parameters");
}

// ---------------------------------------------------------------------------
// Checkpoint I/O. All integers and floats are 64-bit little-endian except the
// 32-bit format version that follows the magic.

namespace {

constexpr char kMagic[8] = {'D', 'M', 'P', 'M', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os_.put(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os_.put(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void bytes(const char* p, std::size_t n) { os_.write(p, static_cast<std::streamsize>(n)); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  void bytes(char* p, std::size_t n) {
    is_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) fail(ErrorCode::kCheckpointTruncated, "checkpoint truncated");
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

 private:
  std::istream& is_;
};

constexpr std::uint64_t kMaxConfigBytes = 1ULL << 24;

}  // namespace

void save_checkpoint(const std::string& path, const DenoiserNet& net, const CheckpointMeta& meta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::kIo, "cannot open checkpoint for writing: " + path);
  Writer w(os);
  const ModelConfig& c = net.config();
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u64(c.d);
  w.u64(c.blocks);
  w.u64(c.width);
  w.u64(c.time_embed_dim);
  w.u64(c.seed);
  w.f64(meta.lambda);
  w.f64(meta.t_f);
  w.u64(meta.d);
  w.f64(meta.loss.w1);
  w.f64(meta.loss.w2);
  w.f64(meta.loss.w3);
  w.u64(meta.loss.w_scaled ? 1 : 0);
  w.u64(meta.seed);
  w.u64(meta.step);
  w.u64(meta.run_config.size());
  w.bytes(meta.run_config.data(), meta.run_config.size());
  const auto& p = net.params();
  w.u64(static_cast<std::uint64_t>(p.size()));
  for (Index i = 0; i < p.size(); ++i) w.f64(p[i]);
  if (!os) fail(ErrorCode::kIo, "failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, "cannot open checkpoint: " + path);
  Reader r(is);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) fail(ErrorCode::kCheckpointFormat, "not a checkpoint file: " + path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kCheckpointVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  c.d = r.u64();
  c.blocks = r.u64();
  c.width = r.u64();
  c.time_embed_dim = r.u64();
  c.seed = r.u64();
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kCheckpointFormat, std::string("corrupt model configuration: ") + e.what());
  }
  CheckpointMeta meta;
  meta.lambda = r.f64();
  meta.t_f = r.f64();
  meta.d = r.u64();
  meta.loss.w1 = r.f64();
  meta.loss.w2 = r.f64();
  meta.loss.w3 = r.f64();
  meta.loss.w_scaled = r.u64() != 0;
  meta.seed = r.u64();
  meta.step = r.u64();
  if (meta.d != c.d) fail(ErrorCode::kDimensionMismatch, "checkpoint meta d does not match model d");
  const std::uint64_t cfg_len = r.u64();
  if (cfg_len > kMaxConfigBytes) fail(ErrorCode::kCheckpointFormat, "implausible config block length");
  meta.run_config.resize(cfg_len);
  if (cfg_len) r.bytes(meta.run_config.data(), cfg_len);
  const std::uint64_t n = r.u64();
  if (n != c.param_count()) fail(ErrorCode::kCheckpointFormat, "parameter count does not match model configuration");
  VectorXd p(static_cast<Index>(n));
  for (Index i = 0; i < p.size(); ++i) p[i] = r.f64();
  return Checkpoint{DenoiserNet(c, std::move(p)), std::move(meta)};
}

void check_compatible(const CheckpointMeta& meta, std::size_t d, double lambda, double t_f) {
  if (meta.d != d) {
    fail(ErrorCode::kConfigMismatch,
         "checkpoint d=" + std::to_string(meta.d) + " but configuration d=" + std::to_string(d));
  }
  if (meta.lambda != lambda) {
    fail(ErrorCode::kConfigMismatch, "checkpoint lambda=" + std::to_string(meta.lambda) +
                                         " but configuration lambda=" + std::to_string(lambda));
  }
  if (meta.t_f != t_f) {
    fail(ErrorCode::kConfigMismatch,
         "checkpoint T_f=" + std::to_string(meta.t_f) + " but configuration T_f=" + std::to_string(t_f));
  }
}

}  // namespace dmpm
