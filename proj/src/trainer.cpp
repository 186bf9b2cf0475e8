// SPDX-License-Identifier: Apache-2.0
#include "easwin/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "easwin/config.hpp"
#include "easwin/runtime.hpp"
#include "easwin/random.hpp"

namespace easwin {

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("train: " + msg);
  };
  require(lr >= 0, "lr must be >= 0");
  require(min_lr >= 0 && min_lr <= lr, "min_lr must lie in [0, lr]");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(epochs >= 1, "epochs must be >= 1");
  require(warmup_epochs >= 0 && warmup_epochs < epochs, "warmup_epochs must be < epochs");
  require(max_grad_norm > 0, "max_grad_norm must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(!seeds.empty(), "at least one seed is required");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "betas must lie in [0, 1)");
  require(eps > 0, "eps must be > 0");
}

double cosine_lr(Index step, Index total_steps, Index warmup_steps, double lr, double min_lr) {
  if (step < warmup_steps) {
    return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return lr;
  const double progress = std::min(
      1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps));
  if (progress >= 1.0) return min_lr;
  return min_lr + 0.5 * (lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm) {
  double sq = 0;
  for (const Parameter<T>* p : params) {
    if (!p->var.has_grad()) continue;
    for (T g : p->var.grad().values()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (Parameter<T>* p : params) {
      if (!p->var.has_grad()) continue;
      for (T& g : p->var.mutable_grad().values()) g *= factor;
    }
  }
  return norm;
}

bool takes_weight_decay(const std::string& name) {
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".weight") || ends_with(".w_q") || ends_with(".w_k") || ends_with(".w_v") ||
         ends_with(".w_o");
}

template <typename T>
AdamW<T>::AdamW(ParamList<T> params, double beta1, double beta2, double eps, double weight_decay,
                bool decay_all)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
  for (const Parameter<T>* p : params_) {
    m_.emplace_back(p->var.shape());
    v_.emplace_back(p->var.shape());
    decay_.push_back(decay_all || takes_weight_decay(p->name));
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++step_;
  const double c1 = 1 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Variable<T>& var = params_[i]->var;
    Tensor<T>& value = var.mutable_value();
    const bool has = var.has_grad();
    if (has && var.grad().shape() != value.shape()) {
      throw ContractError("AdamW: gradient shape mismatch for " + params_[i]->name);
    }
    const double wd = decay_[i] ? wd_ : 0.0;
    T* p = value.data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const T* g = has ? var.grad().data() : nullptr;
    for (Index k = 0; k < value.size(); ++k) {
      const double gk = g ? static_cast<double>(g[k]) : 0.0;
      const double mk = beta1_ * static_cast<double>(m[k]) + (1 - beta1_) * gk;
      const double vk = beta2_ * static_cast<double>(v[k]) + (1 - beta2_) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = (mk / c1) / (std::sqrt(vk / c2) + eps_);
      const double pk = static_cast<double>(p[k]);
      p[k] = static_cast<T>(pk - lr * update - lr * wd * pk);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (Parameter<T>* p : params_) p->var.zero_grad();
}

ModelState snapshot(DetectionHead<float>& model) {
  ModelState state;
  for (const Parameter<float>* p : model.parameters()) state.emplace(p->name, p->var.value());
  return state;
}

void restore(DetectionHead<float>& model, const ModelState& state) {
  const auto params = model.parameters();
  if (params.size() != state.size()) {
    throw DataError("checkpoint holds " + std::to_string(state.size()) + " tensors, model has " +
                    std::to_string(params.size()));
  }
  for (Parameter<float>* p : params) {
    const auto it = state.find(p->name);
    if (it == state.end()) throw DataError("checkpoint lacks parameter " + p->name);
    if (it->second.shape() != p->var.shape()) {
      throw DataError("checkpoint shape " + shape_str(it->second.shape()) + " for " + p->name +
                      " does not match " + shape_str(p->var.shape()));
    }
    p->var.mutable_value() = it->second;
  }
}

namespace {

constexpr char kCkptMagic[6] = {'E', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint16_t kCkptVersion = 1;

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.insert(out.end(), buf, buf + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw TruncatedError("checkpoint: truncated at offset " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json meta = {{"head", to_json(ckpt.head)},
                         {"input_dim", ckpt.input_dim},
                         {"seed", ckpt.seed},
                         {"epoch", ckpt.epoch}};
  const std::string text = meta.dump();
  std::vector<std::uint8_t> out(kCkptMagic, kCkptMagic + 6);
  put(out, kCkptVersion);
  put(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put(out, static_cast<std::uint32_t>(ckpt.state.size()));
  for (const auto& [name, t] : ckpt.state) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put(out, static_cast<std::uint32_t>(t.ndim()));
    for (Index e : t.shape()) put(out, static_cast<std::uint64_t>(e));
    const auto* raw = reinterpret_cast<const std::uint8_t*>(t.data());
    out.insert(out.end(), raw, raw + t.size() * 4);
  }
  put(out, crc32(out));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write then rename, so an interrupted save never clobbers a good file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint " + tmp.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 6) throw TruncatedError("checkpoint: truncated before magic");
  if (std::memcmp(bytes.data(), kCkptMagic, 6) != 0) throw BadMagicError("checkpoint: bad magic");
  if (bytes.size() < 12) throw TruncatedError("checkpoint: truncated header");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  Reader r{std::span<const std::uint8_t>(bytes).first(body)};
  r.take(6);
  const auto version = r.get<std::uint16_t>();
  if (version != kCkptVersion) throw BadVersionError("checkpoint: unsupported version " + std::to_string(version));
  if (crc32(std::span(bytes).first(body)) != stored) {
    throw CrcMismatchError("checkpoint: CRC mismatch, checksum stored at offset " + std::to_string(body), body);
  }
  Checkpoint ckpt;
  const auto json_len = r.get<std::uint32_t>();
  const auto text = r.take(json_len);
  try {
    const auto meta = nlohmann::json::parse(text.begin(), text.end());
    ckpt.head = head_config_from_json(meta.at("head"));
    ckpt.input_dim = meta.at("input_dim").get<Index>();
    ckpt.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.epoch = meta.at("epoch").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const auto name_bytes = r.take(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto ndim = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<Index>(r.get<std::uint64_t>()));
    Tensor<float> t(shape);
    const auto raw = r.take(static_cast<std::size_t>(t.size()) * 4);
    std::memcpy(t.data(), raw.data(), raw.size());
    ckpt.state.emplace(std::move(name), std::move(t));
  }
  if (r.pos() != body) throw DataError("checkpoint: trailing bytes");
  return ckpt;
}

Checkpoint make_checkpoint(DetectionHead<float>& model, std::uint64_t seed, Index epoch) {
  return {model.config(), model.input_dim(), seed, epoch, snapshot(model)};
}

DetectionHead<float> model_from_checkpoint(const Checkpoint& ckpt) {
  DetectionHead<float> model(ckpt.head, ckpt.input_dim, ckpt.seed);
  restore(model, ckpt.state);
  return model;
}

std::vector<double> predict_logits(const DetectionHead<float>& model, const Dataset& data,
                                   Index batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  const Index n = data.size();
  std::vector<double> logits(static_cast<std::size_t>(n));
  const Index batches = (n + batch_size - 1) / batch_size;
  parallel_for(batches, [&](std::int64_t b) {
    NoGradGuard no_grad;
    const Index lo = b * batch_size, hi = std::min(n, lo + batch_size);
    std::vector<Index> idx(static_cast<std::size_t>(hi - lo));
    std::iota(idx.begin(), idx.end(), lo);
    const auto out = model.forward(data.batch(idx));
    for (Index i = lo; i < hi; ++i) logits[static_cast<std::size_t>(i)] = out.value()[i - lo];
  });
  return logits;
}

std::vector<double> probabilities(std::span<const double> logits) {
  std::vector<double> p;
  p.reserve(logits.size());
  for (double l : logits) p.push_back(predict(l).probability);
  return p;
}

double mean_bce(std::span<const double> logits, std::span<const int> labels) {
  if (logits.empty() || logits.size() != labels.size()) throw ContractError("mean_bce: bad input sizes");
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = labels[i] ? logits[i] : -logits[i];
    sum += std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  }
  return sum / static_cast<double>(logits.size());
}

namespace {

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kMetricsCsvHeader << "\n";
  for (const auto& r : history) out << metrics_csv_row(r.epoch, r.split, r.report, r.loss, r.lr) << "\n";
}

}  // namespace

SeedResult train_seed(const Dataset& train, const Dataset& val, const HeadConfig& head,
                      const TrainConfig& cfg, std::uint64_t seed, const TrainOptions& opts) {
  cfg.validate();
  head.validate();
  const auto counts = train.class_counts();
  if (counts[0] == 0 || counts[1] == 0) throw DataError("train split needs both classes");
  const auto val_counts = val.class_counts();
  if (val_counts[0] == 0 || val_counts[1] == 0) throw DataError("val split needs both classes");
  if (val.frames() != train.frames() || val.tokens() != train.tokens() || val.input_dim() != train.input_dim()) {
    throw DataError("train and val splits differ in shape");
  }

  DetectionHead<float> model(head, train.input_dim(), derive_seed(seed, 0));
  AdamW<float> opt(model.parameters(), cfg);
  const Index n = train.size();
  const Index per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const Index total = per_epoch * cfg.epochs;
  const Index warmup = per_epoch * cfg.warmup_epochs;
  if (opts.run_dir) std::filesystem::create_directories(*opts.run_dir);

  SeedResult result;
  result.seed = seed;
  result.best_val.auc = -1;
  std::vector<Index> order(static_cast<std::size_t>(n));
  Index step = 0;
  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());

    std::vector<double> seen_logits;
    std::vector<int> seen_labels;
    double lr = 0;
    for (Index b = 0; b < per_epoch; ++b) {
      const Index lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
      const auto batch = train.batch(std::span(order).subspan(static_cast<std::size_t>(lo),
                                                               static_cast<std::size_t>(hi - lo)));
      try {
        const Variable<float> logits = model.forward(batch);
        const Variable<float> loss = bce_loss(logits, batch.labels);
        backward(loss);
        for (Index i = 0; i < logits.value().size(); ++i) seen_logits.push_back(logits.value()[i]);
      } catch (const NumericError& e) {
        throw NumericError("training diverged (seed " + std::to_string(seed) + ", epoch " +
                           std::to_string(epoch) + ", step " + std::to_string(step) + "): " + e.what());
      }
      seen_labels.insert(seen_labels.end(), batch.labels.begin(), batch.labels.end());
      clip_grad_norm(opt.params(), cfg.max_grad_norm);
      lr = cosine_lr(step + 1, total, warmup, cfg.lr, cfg.min_lr);
      opt.step(lr);
      opt.zero_grad();
      ++step;
    }

    EpochRecord tr{epoch, "train", evaluate(probabilities(seen_logits), seen_labels), mean_bce(seen_logits, seen_labels), lr};
    const auto val_logits = predict_logits(model, val, cfg.batch_size);
    EpochRecord va{epoch, "val", evaluate(probabilities(val_logits), val.labels), mean_bce(val_logits, val.labels), lr};
    result.history.push_back(tr);
    result.history.push_back(va);
    if (va.report.auc > result.best_val.auc) {
      result.best_val = va.report;
      result.best_epoch = epoch;
      result.best_state = snapshot(model);
      if (opts.run_dir) save_checkpoint(*opts.run_dir / "best.ckpt", {head, train.input_dim(), seed, epoch, result.best_state});
    }
    if (opts.run_dir) {
      save_checkpoint(*opts.run_dir / "last.ckpt", make_checkpoint(model, seed, epoch));
      write_metrics_csv(*opts.run_dir / "metrics.csv", result.history);
    }
    if (opts.log) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "seed %llu epoch %lld/%lld train_loss %.4f val_loss %.4f val_acc %.4f val_auc %.4f lr %.3g\n",
                    static_cast<unsigned long long>(seed), static_cast<long long>(epoch),
                    static_cast<long long>(cfg.epochs), tr.loss, va.loss, va.report.accuracy, va.report.auc, lr);
      *opts.log << buf << std::flush;
    }
  }
  return result;
}

MetricSummary summarize(std::span<const double> values) {
  if (values.empty()) throw ContractError("summarize: no values");
  MetricSummary s;
  s.max = *std::max_element(values.begin(), values.end());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double sq = 0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

TrainSummary summarize(std::vector<SeedResult> seeds) {
  TrainSummary out;
  out.seeds = std::move(seeds);
  const std::pair<const char*, double EvalReport::*> fields[] = {
      {"accuracy", &EvalReport::accuracy}, {"precision", &EvalReport::precision},
      {"recall", &EvalReport::recall},     {"f1", &EvalReport::f1},
      {"auc", &EvalReport::auc}};
  for (const auto& [name, field] : fields) {
    std::vector<double> v;
    for (const auto& s : out.seeds) v.push_back(s.best_val.*field);
    out.metrics[name] = summarize(v);
  }
  return out;
}

nlohmann::json to_json(const TrainSummary& s) {
  nlohmann::json j;
  for (const auto& r : s.seeds) {
    j["seeds"].push_back({{"seed", r.seed}, {"best_epoch", r.best_epoch}, {"best_val", to_json(r.best_val)}});
  }
  for (const auto& [name, m] : s.metrics) j["val"][name] = {{"mean", m.mean}, {"std", m.std}, {"max", m.max}};
  return j;
}

TrainSummary train(const Dataset& train_data, const Dataset& val, const HeadConfig& head,
                   const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  std::vector<SeedResult> results;
  for (std::uint64_t seed : cfg.seeds) {
    TrainOptions seed_opts = opts;
    if (opts.run_dir) seed_opts.run_dir = *opts.run_dir / ("seed_" + std::to_string(seed));
    results.push_back(train_seed(train_data, val, head, cfg, seed, seed_opts));
  }
  TrainSummary summary = summarize(std::move(results));
  if (opts.run_dir) {
    std::ofstream out(*opts.run_dir / "summary.json", std::ios::trunc);
    if (!out) throw DataError("cannot write summary.json");
    out << to_json(summary).dump(2) << "\n";
  }
  return summary;
}

std::vector<FrameCountResult> evaluate_frame_counts(const DetectionHead<float>& model,
                                                    const Dataset& val,
                                                    std::span<const Index> frame_counts,
                                                    Index batch_size, std::uint64_t seed) {
  std::vector<FrameCountResult> out;
  for (Index k : frame_counts) {
    const Dataset sub = k == val.frames() ? Dataset{} : subsample_frames(val, k);
    const Dataset& data = k == val.frames() ? val : sub;
    const auto logits = predict_logits(model, data, batch_size);
    FrameCountResult r;
    r.frames = k;
    r.loss = mean_bce(logits, data.labels);
    r.groups = evaluate_groups(probabilities(logits), data.labels, data.generator,
                               data.generator_names, seed);
    out.push_back(std::move(r));
  }
  return out;
}

template double clip_grad_norm(const ParamList<float>&, double);
template double clip_grad_norm(const ParamList<double>&, double);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace easwin
