#include "dmpm/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmpm/forward_process.hpp"

namespace dmpm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// --- JSON helpers --------------------------------------------------------------

void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(ErrorCode::kConfig, "config section '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) {
      fail(ErrorCode::kConfig, "unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig,
         "config key '" + (section.empty() ? std::string(key) : section + "." + key) + "' has the wrong type");
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// --- File helpers --------------------------------------------------------------

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) fail(ErrorCode::kIo, "failed writing '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class Reporter {
 public:
  Reporter(CommandResult& result, const LogFn& log) : result_(result), log_(log) {}
  void info(const std::string& msg) const {
    if (log_) log_(msg);
  }
  void warn(const std::string& msg) const {
    result_.warnings.push_back(msg);
    if (log_) log_("warning: " + msg);
  }
  void wrote(const std::string& path) const { result_.files.push_back(path); }

 private:
  CommandResult& result_;
  const LogFn& log_;
};

json sidecar_base(const RunConfig& c, const std::string& command) {
  return json{{"command", command}, {"config_hash", c.lineage_hash()}, {"seed", c.seed},
              {"d", c.d},           {"lambda", c.lambda},              {"t_f", c.t_f}};
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, "", {"d", "lambda", "t_f", "seed", "dataset", "model", "loss", "train", "schedule", "flips",
                         "sampler", "eval", "validate", "out_dir"});
  RunConfig c;
  read_field(j, "d", c.d, "");
  read_field(j, "lambda", c.lambda, "");
  read_field(j, "t_f", c.t_f, "");
  read_field(j, "seed", c.seed, "");
  read_field(j, "out_dir", c.out_dir, "");
  if (j.contains("dataset")) {
    const json& s = j["dataset"];
    reject_unknown(s, "dataset", {"kind", "probs", "masses", "path", "n_samples"});
    read_field(s, "kind", c.dataset.kind, "dataset");
    read_field(s, "probs", c.dataset.probs, "dataset");
    read_field(s, "masses", c.dataset.masses, "dataset");
    read_field(s, "path", c.dataset.path, "dataset");
    read_field(s, "n_samples", c.dataset.n_samples, "dataset");
  }
  if (j.contains("model")) {
    const json& s = j["model"];
    reject_unknown(s, "model", {"blocks", "width", "time_embed_dim"});
    read_field(s, "blocks", c.model.blocks, "model");
    read_field(s, "width", c.model.width, "model");
    read_field(s, "time_embed_dim", c.model.time_embed_dim, "model");
  }
  if (j.contains("loss")) {
    const json& s = j["loss"];
    reject_unknown(s, "loss", {"preset", "w1", "w2", "w3", "w_scaled"});
    read_field(s, "preset", c.loss_preset, "loss");
    read_field(s, "w1", c.loss.w1, "loss");
    read_field(s, "w2", c.loss.w2, "loss");
    read_field(s, "w3", c.loss.w3, "loss");
    read_field(s, "w_scaled", c.loss.w_scaled, "loss");
  }
  if (j.contains("train")) {
    const json& s = j["train"];
    reject_unknown(s, "train",
                   {"steps", "batch_size", "lr", "weight_decay", "decay_every", "decay_gamma", "epoch_size",
                    "log_every"});
    read_field(s, "steps", c.train.steps, "train");
    read_field(s, "batch_size", c.train.batch_size, "train");
    read_field(s, "lr", c.train.lr, "train");
    read_field(s, "weight_decay", c.train.weight_decay, "train");
    read_field(s, "decay_every", c.train.decay_every, "train");
    read_field(s, "decay_gamma", c.train.decay_gamma, "train");
    read_field(s, "epoch_size", c.train.epoch_size, "train");
    read_field(s, "log_every", c.train.log_every, "train");
  }
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    reject_unknown(s, "schedule", {"kind", "steps"});
    std::string kind = to_string(c.schedule);
    read_field(s, "kind", kind, "schedule");
    c.schedule = parse_schedule_kind(kind);
    read_field(s, "steps", c.schedule_steps, "schedule");
  }
  if (j.contains("flips")) {
    const json& s = j["flips"];
    reject_unknown(s, "flips", {"kind", "total"});
    std::string kind = to_string(c.flip_kind);
    read_field(s, "kind", kind, "flips");
    c.flip_kind = parse_flip_kind(kind);
    read_field(s, "total", c.flip_total, "flips");
  }
  if (j.contains("sampler")) {
    const json& s = j["sampler"];
    reject_unknown(s, "sampler", {"kind", "n", "eta"});
    std::string kind = to_string(c.sampler);
    read_field(s, "kind", kind, "sampler");
    c.sampler = parse_sampler_kind(kind);
    read_field(s, "n", c.n_samples, "sampler");
    read_field(s, "eta", c.eta, "sampler");
  }
  if (j.contains("eval")) {
    const json& s = j["eval"];
    reject_unknown(s, "eval", {"n_directions", "n_reference"});
    read_field(s, "n_directions", c.eval_directions, "eval");
    read_field(s, "n_reference", c.eval_reference, "eval");
  }
  if (j.contains("validate")) {
    const json& s = j["validate"];
    reject_unknown(s, "validate",
                   {"dims", "steps", "n_instances", "t_f", "tv_dims", "tv_instances", "tv_points", "tv_eta_max"});
    read_field(s, "dims", c.validate.dims, "validate");
    read_field(s, "steps", c.validate.steps, "validate");
    read_field(s, "n_instances", c.validate.n_instances, "validate");
    read_field(s, "t_f", c.validate.t_f, "validate");
    read_field(s, "tv_dims", c.validate.tv_dims, "validate");
    read_field(s, "tv_instances", c.validate.tv_instances, "validate");
    read_field(s, "tv_points", c.validate.tv_points, "validate");
    read_field(s, "tv_eta_max", c.validate.tv_eta_max, "validate");
  }
  c.check();
  return c;
}

RunConfig RunConfig::load(const std::string& path) { return from_json(read_text(path)); }

namespace {

json lineage_json(const RunConfig& c) {
  const LossSpec loss = c.effective_loss();
  return json{
      {"d", c.d},
      {"lambda", c.lambda},
      {"t_f", c.t_f},
      {"dataset",
       {{"kind", c.dataset.kind},
        {"probs", c.dataset.probs},
        {"masses", c.dataset.masses},
        {"path", c.dataset.path},
        {"n_samples", c.dataset.n_samples}}},
      {"model", {{"blocks", c.model.blocks}, {"width", c.model.width}, {"time_embed_dim", c.model.time_embed_dim}}},
      {"loss", {{"w1", loss.w1}, {"w2", loss.w2}, {"w3", loss.w3}, {"w_scaled", loss.w_scaled}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay},
        {"decay_every", c.train.decay_every},
        {"decay_gamma", c.train.decay_gamma},
        {"epoch_size", c.train.epoch_size},
        {"log_every", c.train.log_every}}},
  };
}

}  // namespace

std::string RunConfig::to_json() const {
  json j = lineage_json(*this);
  j["seed"] = seed;
  j["loss"] = json{{"preset", loss_preset}, {"w1", loss.w1}, {"w2", loss.w2}, {"w3", loss.w3},
                   {"w_scaled", loss.w_scaled}};
  j["schedule"] = json{{"kind", to_string(schedule)}, {"steps", schedule_steps}};
  j["flips"] = json{{"kind", to_string(flip_kind)}, {"total", flip_total}};
  j["sampler"] = json{{"kind", to_string(sampler)}, {"n", n_samples}, {"eta", eta}};
  j["eval"] = json{{"n_directions", eval_directions}, {"n_reference", eval_reference}};
  j["validate"] = json{{"dims", validate.dims},
                       {"steps", validate.steps},
                       {"n_instances", validate.n_instances},
                       {"t_f", validate.t_f},
                       {"tv_dims", validate.tv_dims},
                       {"tv_instances", validate.tv_instances},
                       {"tv_points", validate.tv_points},
                       {"tv_eta_max", validate.tv_eta_max}};
  j["out_dir"] = out_dir;
  return j.dump(2);
}

std::string RunConfig::lineage_hash() const { return hex64(hash_name(lineage_json(*this).dump())); }

void RunConfig::check() const {
  if (d < 1) fail(ErrorCode::kConfig, "d must be >= 1");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) fail(ErrorCode::kConfig, "lambda must be > 0");
  if (!(t_f > 0.0) || !std::isfinite(t_f)) fail(ErrorCode::kConfig, "t_f must be > 0");
  static const std::set<std::string> kinds{"sawtooth", "product", "table", "table-file", "empirical-file"};
  if (!kinds.count(dataset.kind)) fail(ErrorCode::kConfig, "unknown dataset kind '" + dataset.kind + "'");
  if (dataset.kind == "sawtooth" && d < 2) fail(ErrorCode::kConfig, "sawtooth dataset needs d >= 2");
  if (dataset.kind == "product" && dataset.probs.size() != d) {
    fail(ErrorCode::kConfig, "dataset.probs must list d = " + std::to_string(d) + " probabilities");
  }
  if (dataset.kind == "table" && dataset.masses.size() != (std::size_t{1} << std::min<std::uint64_t>(d, 62))) {
    fail(ErrorCode::kConfig, "dataset.masses must list 2^d masses");
  }
  if ((dataset.kind == "table-file" || dataset.kind == "empirical-file") && dataset.path.empty()) {
    fail(ErrorCode::kConfig, "dataset.path is required for " + dataset.kind);
  }
  if (dataset.n_samples == 0) fail(ErrorCode::kConfig, "dataset.n_samples must be >= 1");
  effective_loss();
  effective_model().validate();
  train.validate();
  if (schedule_steps < 1) fail(ErrorCode::kConfig, "schedule.steps must be >= 1");
  if (!(eta >= 0.0 && eta < t_f)) fail(ErrorCode::kConfig, "sampler.eta must lie in [0, t_f)");
  if (eval_directions < 1 || eval_reference < 1) fail(ErrorCode::kConfig, "eval sizes must be >= 1");
  if (!(validate.t_f > 0.0)) fail(ErrorCode::kConfig, "validate.t_f must be > 0");
  if (validate.tv_points < 1 || !(validate.tv_eta_max > 0.0)) fail(ErrorCode::kConfig, "invalid TV grid");
  for (auto k : validate.steps) {
    if (k < 1) fail(ErrorCode::kConfig, "validate.steps entries must be >= 1");
  }
}

LossSpec RunConfig::effective_loss() const {
  try {
    if (!loss_preset.empty()) return LossSpec::preset(loss_preset);
    return loss.normalized();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("invalid loss: ") + e.what());
  }
}

ModelConfig RunConfig::effective_model() const {
  ModelConfig m = model;
  m.d = d;
  m.seed = derive_seed(seed, "model:init");
  return m;
}

TimeSchedule RunConfig::time_schedule() const { return time_grid(schedule, schedule_steps, t_f - eta); }

SamplerSpec RunConfig::sampler_spec() const {
  SamplerSpec spec;
  spec.kind = sampler;
  spec.schedule = time_schedule();
  if (sampler == SamplerKind::kFlip) spec.flips = flip_counts(flip_kind, spec.schedule, effective_flip_total());
  if (eta > 0.0) spec.end_time = t_f - eta;
  return spec;
}

// ---------------------------------------------------------------------------
// Samples I/O

std::vector<BitState> read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open sample file '" + path + "'");
  std::vector<BitState> xs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      xs.push_back(BitState::from_string(line));
    } catch (const Error& e) {
      fail(ErrorCode::kIo, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (xs.back().dim() != xs.front().dim()) {
      fail(ErrorCode::kDimensionMismatch, path + ":" + std::to_string(lineno) + ": inconsistent state length");
    }
  }
  if (xs.empty()) fail(ErrorCode::kIo, "sample file '" + path + "' is empty");
  return xs;
}

void write_samples(const std::string& path, const std::vector<BitState>& xs) {
  std::string text;
  text.reserve(xs.empty() ? 0 : xs.size() * (xs.front().dim() + 1));
  for (const auto& x : xs) {
    text += x.to_string();
    text += '\n';
  }
  write_text(path, text);
}

// ---------------------------------------------------------------------------
// Dataset

LoadedDataset load_dataset(const RunConfig& c, std::vector<std::string>* warnings) {
  LoadedDataset out;
  const std::size_t d = c.d;
  const auto& ds = c.dataset;
  if (ds.kind == "sawtooth") {
    out.law = sawtooth_params(d);
  } else if (ds.kind == "product") {
    out.law = ProductBernoulli(ds.probs);
  } else if (ds.kind == "table" || ds.kind == "table-file") {
    check_enumerable(d);
    std::vector<double> masses = ds.masses;
    if (ds.kind == "table-file") {
      masses.clear();
      std::istringstream in(read_text(ds.path));
      double v;
      while (in >> v) masses.push_back(v);
      if (masses.size() != (std::size_t{1} << d)) {
        fail(ErrorCode::kDimensionMismatch, "table file '" + ds.path + "' must hold 2^d = " +
                                                std::to_string(std::size_t{1} << d) + " masses");
      }
    }
    double total = 0.0;
    for (double m : masses) {
      if (!(m >= 0.0) || !std::isfinite(m)) fail(ErrorCode::kConfig, "table masses must be finite and >= 0");
      total += m;
    }
    if (!(total > 0.0)) fail(ErrorCode::kConfig, "table masses sum to zero");
    if (std::abs(total - 1.0) > 1e-12 && warnings) {
      warnings->push_back("table masses sum to " + fmt(total) + "; normalized");
    }
    out.law = DenseTable::normalized(d, std::move(masses));
  } else {
    EmpiricalSet set(read_samples(ds.path));
    if (set.dim() != d) {
      fail(ErrorCode::kDimensionMismatch,
           "empirical file has d = " + std::to_string(set.dim()) + " but config d = " + std::to_string(d));
    }
    if (d <= kEnumerationLimit) out.law = set.histogram();
    out.empirical = std::move(set);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

CommandResult cmd_gen_data(const RunConfig& c, const LogFn& log) {
  c.check();
  CommandResult result;
  Reporter rep(result, log);
  std::vector<std::string> warnings;
  const LoadedDataset data = load_dataset(c, &warnings);
  for (const auto& w : warnings) rep.warn(w);
  ensure_dir(c.out_dir);

  json spec = sidecar_base(c, "gen-data");
  spec["kind"] = c.dataset.kind;
  if (data.law) {
    if (const auto* pb = std::get_if<ProductBernoulli>(&*data.law)) {
      spec["probs"] = pb->probs();
    } else {
      spec["masses"] = std::get<DenseTable>(*data.law).mass();
    }
  }
  const std::string samples_path = join(c.out_dir, "data_samples.txt");
  std::vector<BitState> samples;
  if (data.empirical) {
    samples = data.empirical->samples();
  } else {
    Rng rng(derive_seed(c.seed, "data"));
    samples = sample(*data.law, c.dataset.n_samples, rng).samples();
  }
  write_samples(samples_path, samples);
  rep.wrote(samples_path);
  spec["n_samples"] = samples.size();
  spec["samples_file"] = "data_samples.txt";
  const std::string spec_path = join(c.out_dir, "dataset.json");
  write_text(spec_path, spec.dump(2) + "\n");
  rep.wrote(spec_path);
  result.summary = "wrote " + std::to_string(samples.size()) + " samples of a d=" + std::to_string(c.d) + " " +
                   c.dataset.kind + " dataset";
  rep.info(result.summary);
  return result;
}

namespace {

void check_lineage(const std::string& expected, const std::string& found, const std::string& what,
                   bool allow_mismatch, const Reporter& rep) {
  if (expected == found) return;
  const std::string msg = what + " has config hash " + found + " but the current config hash is " + expected;
  if (!allow_mismatch) fail(ErrorCode::kConfigMismatch, msg + " (override with --allow-mismatch)");
  rep.warn(msg + " (mismatch allowed)");
}

std::string checkpoint_hash(const CheckpointMeta& meta) {
  if (meta.run_config.empty()) return "none";
  try {
    return RunConfig::from_json(meta.run_config).lineage_hash();
  } catch (const Error&) {
    return "unparseable";
  }
}

}  // namespace

CommandResult cmd_train(const RunConfig& c, bool resume, bool allow_mismatch, const LogFn& log) {
  c.check();  // invalid loss weights etc. fail here, before any compute
  CommandResult result;
  Reporter rep(result, log);
  std::vector<std::string> warnings;
  const LoadedDataset data = load_dataset(c, &warnings);
  for (const auto& w : warnings) rep.warn(w);
  ensure_dir(c.out_dir);
  const std::string ckpt_path = join(c.out_dir, "checkpoint.bin");
  const std::string log_path = join(c.out_dir, "train_log.csv");
  const LossSpec loss = c.effective_loss();

  std::optional<DenoiserNet> net;
  std::uint64_t start_step = 0;
  if (resume) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    check_compatible(ck.meta, c.d, c.lambda, c.t_f);
    check_lineage(c.lineage_hash(), checkpoint_hash(ck.meta), "checkpoint '" + ckpt_path + "'", allow_mismatch, rep);
    start_step = ck.meta.step;
    net.emplace(std::move(ck.net));
    rep.info("resuming from step " + std::to_string(start_step));
  } else {
    net.emplace(c.effective_model());
  }

  TrainData train_data = data.empirical ? TrainData(*data.empirical) : TrainData(*data.law);
  std::ofstream log_file(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log_file) fail(ErrorCode::kIo, "cannot open '" + log_path + "'");
  if (!resume) log_file << kTrainLogHeader << '\n';
  const std::uint64_t report_every = std::max<std::uint64_t>(1, c.train.steps / 10);
  const TrainResult tr = train(*net, train_data, c.train, loss, c.lambda, c.t_f, c.seed, start_step,
                               [&](const TrainLogRow& row) {
                                 log_file << format_log_row(row) << '\n';
                                 if ((row.step - start_step) % report_every == 0) {
                                   rep.info("step " + std::to_string(row.step) + " loss " + fmt(row.values.total));
                                 }
                               });
  log_file.close();
  if (!log_file) fail(ErrorCode::kIo, "failed writing '" + log_path + "'");
  rep.wrote(log_path);

  CheckpointMeta meta{c.lambda, c.t_f, c.d, loss, c.seed, tr.last_step, c.to_json()};
  save_checkpoint(ckpt_path, *net, meta);
  rep.wrote(ckpt_path);

  json side = sidecar_base(c, "train");
  side["first_step"] = tr.first_step;
  side["last_step"] = tr.last_step;
  side["final_loss"] = tr.log.empty() ? json(nullptr) : json(tr.log.back().values.total);
  side["files"] = {"checkpoint.bin", "train_log.csv"};
  const std::string side_path = join(c.out_dir, "train.json");
  write_text(side_path, side.dump(2) + "\n");
  rep.wrote(side_path);
  result.summary = "trained steps " + std::to_string(tr.first_step) + ".." + std::to_string(tr.last_step) +
                   (tr.log.empty() ? "" : ", final loss " + fmt(tr.log.back().values.total));
  rep.info(result.summary);
  return result;
}

CommandResult cmd_sample(const RunConfig& c, bool exact_oracle, std::uint64_t n, const std::string& checkpoint,
                         bool allow_mismatch, const LogFn& log) {
  c.check();
  CommandResult result;
  Reporter rep(result, log);
  if (n == 0) n = c.n_samples;
  ensure_dir(c.out_dir);

  std::unique_ptr<ScoreSource> src;
  std::string source_desc;
  if (exact_oracle) {
    std::vector<std::string> warnings;
    LoadedDataset data = load_dataset(c, &warnings);
    for (const auto& w : warnings) rep.warn(w);
    if (!data.law) fail(ErrorCode::kEnumerationLimit, "exact oracle needs an enumerable dataset");
    src = std::make_unique<ExactOracle>(std::move(*data.law), c.lambda, c.t_f);
    source_desc = "exact-oracle";
  } else {
    const std::string path = checkpoint.empty() ? join(c.out_dir, "checkpoint.bin") : checkpoint;
    Checkpoint ck = load_checkpoint(path);
    check_compatible(ck.meta, c.d, c.lambda, c.t_f);
    check_lineage(c.lineage_hash(), checkpoint_hash(ck.meta), "checkpoint '" + path + "'", allow_mismatch, rep);
    src = std::make_unique<LearnedSource>(std::move(ck.net), c.lambda, c.t_f);
    source_desc = "checkpoint:" + path;
  }

  const SamplerSpec spec = c.sampler_spec();
  if (spec.flips) {
    for (auto m : spec.flips->counts) {
      if (m > c.d) {
        rep.warn("flip schedule has M > d = " + std::to_string(c.d) + "; counts are clamped to d");
        break;
      }
    }
  }
  SamplerStats stats;
  const std::vector<BitState> xs = sample_chains(*src, spec, n, c.seed, &stats);
  const std::string path = join(c.out_dir, "samples.txt");
  write_samples(path, xs);
  rep.wrote(path);

  json side = sidecar_base(c, "sample");
  side["sampler"] = to_string(c.sampler);
  side["source"] = source_desc;
  side["n"] = n;
  side["chain_seed_stream"] = kChainStream;
  side["eta"] = c.eta;
  if (c.sampler == SamplerKind::kContinuous || c.sampler == SamplerKind::kPerCoord) {
    side["end_time"] = c.t_f - c.eta;
  } else {
    side["schedule"] = {{"kind", to_string(spec.schedule.kind)}, {"K", spec.schedule.steps},
                        {"horizon", spec.schedule.horizon}};
  }
  if (spec.flips) {
    side["flips"] = {{"kind", to_string(spec.flips->kind)}, {"total", spec.flips->total},
                     {"counts", spec.flips->counts}};
  }
  side["stats"] = {{"jumps", stats.jumps},
                   {"flips", stats.flips},
                   {"clamped_flip_counts", stats.clamped_flip_counts},
                   {"short_flip_draws", stats.short_flip_draws}};
  side["samples_file"] = "samples.txt";
  const std::string side_path = join(c.out_dir, "samples.json");
  write_text(side_path, side.dump(2) + "\n");
  rep.wrote(side_path);
  result.summary = "sampled " + std::to_string(n) + " states with the " + to_string(c.sampler) + " sampler";
  rep.info(result.summary);
  return result;
}

CommandResult cmd_eval(const RunConfig& c, const std::string& samples_path_in, bool allow_mismatch,
                       const LogFn& log) {
  c.check();
  CommandResult result;
  Reporter rep(result, log);
  const std::string samples_path = samples_path_in.empty() ? join(c.out_dir, "samples.txt") : samples_path_in;
  const std::vector<BitState> xs = read_samples(samples_path);
  if (xs.front().dim() != c.d) {
    fail(ErrorCode::kDimensionMismatch, "samples have d = " + std::to_string(xs.front().dim()) +
                                            " but config d = " + std::to_string(c.d));
  }
  // Lineage: the sidecar next to the sample file, when present.
  const fs::path sidecar = fs::path(samples_path).replace_extension(".json");
  if (fs::exists(sidecar)) {
    json side;
    try {
      side = json::parse(read_text(sidecar.string()));
    } catch (const json::exception&) {
      fail(ErrorCode::kIo, "sample sidecar '" + sidecar.string() + "' is not valid JSON");
    }
    check_lineage(c.lineage_hash(), side.value("config_hash", std::string("none")), "samples '" + samples_path + "'",
                  allow_mismatch, rep);
  } else {
    rep.warn("no sidecar next to '" + samples_path + "'; lineage not checked");
  }

  std::vector<std::string> warnings;
  const LoadedDataset data = load_dataset(c, &warnings);
  for (const auto& w : warnings) rep.warn(w);
  const EmpiricalSet generated(xs);
  EmpiricalSet reference = data.empirical ? *data.empirical : [&] {
    Rng rng(derive_seed(c.seed, "eval:reference", 0));
    return sample(*data.law, c.eval_reference, rng);
  }();

  Rng dir_rng(derive_seed(c.seed, "swd-directions"));
  const SWDEstimate s = swd(generated, reference, c.eval_directions, dir_rng);
  json metrics = sidecar_base(c, "eval");
  metrics["samples_file"] = samples_path;
  metrics["n_samples"] = xs.size();
  metrics["n_reference"] = reference.size();
  metrics["swd"] = {{"value", s.value}, {"std_error", s.std_error}, {"n_directions", s.n_directions}};
  std::vector<std::pair<std::string, double>> rows{{"swd", s.value}, {"swd_std_error", s.std_error}};
  if (data.law) {
    // Self-distance floor: two independent reference draws of the generated sample size.
    Rng r1(derive_seed(c.seed, "eval:floor", 1)), r2(derive_seed(c.seed, "eval:floor", 2));
    Rng fdir(derive_seed(c.seed, "swd-directions"));
    const SWDEstimate floor =
        swd(sample(*data.law, xs.size(), r1), sample(*data.law, reference.size(), r2), c.eval_directions, fdir);
    metrics["swd_floor"] = {{"value", floor.value}, {"std_error", floor.std_error}};
    rows.emplace_back("swd_floor", floor.value);
  }
  if (c.d <= static_cast<std::uint64_t>(kEnumerationLimit) && data.law) {
    const DenseTable target = to_table(*data.law);
    const DenseTable hist = generated.histogram();
    const Divergences fwd = divergences(target, hist);
    const Divergences rev = divergences(hist, target);
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json("inf"); };
    metrics["kl_target_vs_samples"] = num(fwd.kl);
    metrics["kl_samples_vs_target"] = num(rev.kl);
    metrics["tv"] = fwd.tv;
    rows.emplace_back("kl_target_vs_samples", fwd.kl);
    rows.emplace_back("kl_samples_vs_target", rev.kl);
    rows.emplace_back("tv", fwd.tv);
  }
  ensure_dir(c.out_dir);
  const std::string json_path = join(c.out_dir, "metrics.json");
  write_text(json_path, metrics.dump(2) + "\n");
  rep.wrote(json_path);
  std::string csv = "metric,value\n";
  for (const auto& [k, v] : rows) csv += k + "," + (std::isfinite(v) ? fmt(v) : std::string("inf")) + "\n";
  const std::string csv_path = join(c.out_dir, "metrics.csv");
  write_text(csv_path, csv);
  rep.wrote(csv_path);
  result.summary = "SWD " + fmt(s.value) + " +- " + fmt(s.std_error) + " over " + std::to_string(xs.size()) +
                   " samples";
  rep.info(result.summary);
  return result;
}

CommandResult cmd_validate_bounds(const RunConfig& c, double corrupt_shift, const LogFn& log) {
  c.check();
  CommandResult result;
  Reporter rep(result, log);
  for (auto d : c.validate.dims) {
    if (d > kExactPropagationLimit) {
      fail(ErrorCode::kEnumerationLimit, "validate-bounds refuses d = " + std::to_string(d) +
                                             ": exact propagation is limited to d <= " +
                                             std::to_string(kExactPropagationLimit));
    }
  }
  if (corrupt_shift < 0.0) fail(ErrorCode::kArgument, "--corrupt-score shift must be >= 0");
  if (c.lambda != 1.0) rep.warn("the Theorem-2.3 bound is stated for unit jump rate; lambda = " + fmt(c.lambda));

  TheoremSweepConfig tc;
  tc.dims.assign(c.validate.dims.begin(), c.validate.dims.end());
  tc.steps.assign(c.validate.steps.begin(), c.validate.steps.end());
  tc.n_instances = c.validate.n_instances;
  tc.t_f = c.validate.t_f;
  tc.lambda = c.lambda;
  tc.schedule = ScheduleKind::kLinear;
  tc.corrupt_shift = corrupt_shift;
  tc.seed = c.seed;
  const auto rows = theorem_sweep(tc);

  TvSweepConfig vc;
  vc.dims.assign(c.validate.tv_dims.begin(), c.validate.tv_dims.end());
  vc.n_instances = c.validate.tv_instances;
  vc.lambda = c.lambda;
  vc.seed = c.seed;
  for (std::uint64_t j = 1; j <= c.validate.tv_points; ++j) {
    vc.etas.push_back(c.validate.tv_eta_max * static_cast<double>(j) / static_cast<double>(c.validate.tv_points));
  }
  const auto tv_rows = tv_sweep(vc);

  ensure_dir(c.out_dir);
  std::string csv = "instance,d,K,kl_init,beta,tau,eps,t_f,kl_measured,bound,bound_eps0,slack,violated\n";
  std::uint64_t violations = 0, exceed_eps0 = 0;
  double eps_max = 0.0;
  for (const auto& r : rows) {
    const auto& b = r.report;
    csv += r.instance + "," + std::to_string(r.d) + "," + std::to_string(r.k) + "," + fmt(b.kl_init) + "," +
           fmt(b.beta) + "," + fmt(b.tau) + "," + fmt(b.eps) + "," + fmt(b.t_f) + "," + fmt(*b.measured_kl) + "," +
           fmt(b.bound) + "," + fmt(r.bound_eps0) + "," + fmt(r.slack) + "," + (r.violated ? "1" : "0") + "\n";
    violations += r.violated;
    exceed_eps0 += *b.measured_kl > r.bound_eps0 + 1e-12;
    eps_max = std::max(eps_max, b.eps);
  }
  const std::string csv_path = join(c.out_dir, "bounds.csv");
  write_text(csv_path, csv);
  rep.wrote(csv_path);

  std::string tv_csv = "instance,d,eta,tv_measured,exact_bound,loose_bound,slack,violated\n";
  std::uint64_t tv_violations = 0;
  for (const auto& r : tv_rows) {
    tv_csv += r.instance + "," + std::to_string(r.d) + "," + fmt(r.eta) + "," + fmt(r.tv_measured) + "," +
              fmt(r.bound.exact) + "," + fmt(r.bound.loose) + "," + fmt(r.slack) + "," + (r.violated ? "1" : "0") +
              "\n";
    tv_violations += r.violated;
  }
  const std::string tv_path = join(c.out_dir, "tv_bounds.csv");
  write_text(tv_path, tv_csv);
  rep.wrote(tv_path);

  json report = sidecar_base(c, "validate-bounds");
  report["theorem_rows"] = rows.size();
  report["theorem_violations"] = violations;
  report["exceed_eps0_bound"] = exceed_eps0;
  report["corrupt_shift"] = corrupt_shift;
  report["eps_max"] = eps_max;
  report["tv_rows"] = tv_rows.size();
  report["tv_violations"] = tv_violations;
  report["files"] = {"bounds.csv", "tv_bounds.csv"};
  const std::string json_path = join(c.out_dir, "bounds.json");
  write_text(json_path, report.dump(2) + "\n");
  rep.wrote(json_path);

  result.violations = violations + tv_violations;
  result.summary = std::to_string(rows.size()) + " theorem checks (" + std::to_string(violations) +
                   " violations), " + std::to_string(tv_rows.size()) + " TV checks (" +
                   std::to_string(tv_violations) + " violations)";
  if (corrupt_shift > 0.0) {
    result.summary += "; corrupted score: eps up to " + fmt(eps_max) + ", " + std::to_string(exceed_eps0) +
                      " rows exceed the eps=0 bound";
  }
  rep.info(result.summary);
  return result;
}

CommandResult cmd_forward_diag(const RunConfig& c, const LogFn& log) {
  c.check();
  CommandResult result;
  Reporter rep(result, log);
  ensure_dir(c.out_dir);
  std::vector<double> times{0.0, 0.1, 0.5 * std::log(2.0) / c.lambda, 0.7, 1.0, c.t_f};
  std::sort(times.begin(), times.end());
  std::string csv = "t,alpha,flip_prob,k00,k01,k10,k11\n";
  for (double t : times) {
    csv += fmt(t) + "," + fmt(alpha(t, c.lambda)) + "," + fmt(flip_probability(t, c.lambda)) + "," +
           fmt(kernel1(0, 0, t, c.lambda)) + "," + fmt(kernel1(0, 1, t, c.lambda)) + "," +
           fmt(kernel1(1, 0, t, c.lambda)) + "," + fmt(kernel1(1, 1, t, c.lambda)) + "\n";
  }
  const std::string path = join(c.out_dir, "forward_diag.csv");
  write_text(path, csv);
  rep.wrote(path);

  std::vector<std::string> warnings;
  const LoadedDataset data = load_dataset(c, &warnings);
  for (const auto& w : warnings) rep.warn(w);
  if (data.law && c.d <= kExactPropagationLimit) {
    std::string mcsv = "t,state,mass\n";
    for (double t : times) {
      const DenseTable m = marginal(*data.law, t, c.lambda);
      for (std::size_t idx = 0; idx < m.size(); ++idx) {
        mcsv += fmt(t) + "," + BitState::from_index(idx, c.d).to_string() + "," + fmt(m[idx]) + "\n";
      }
    }
    const std::string mpath = join(c.out_dir, "forward_marginal.csv");
    write_text(mpath, mcsv);
    rep.wrote(mpath);
  } else {
    rep.warn("marginal table skipped: d > " + std::to_string(kExactPropagationLimit) + " or no enumerable law");
  }
  json side = sidecar_base(c, "forward-diag");
  side["times"] = times;
  side["files"] = json::array();
  for (const auto& f : result.files) side["files"].push_back(fs::path(f).filename().string());
  const std::string side_path = join(c.out_dir, "forward_diag.json");
  write_text(side_path, side.dump(2) + "\n");
  rep.wrote(side_path);
  result.summary = csv;
  return result;
}

}  // namespace dmpm
