// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "easwin/data.hpp"
#include "easwin/metrics.hpp"
#include "easwin/model.hpp"

namespace easwin {

struct TrainConfig {
  double lr = 3e-4;
  double weight_decay = 0.05;
  Index warmup_epochs = 1;
  double min_lr = 1e-6;
  double max_grad_norm = 1.0;
  Index epochs = 30;
  Index batch_size = 64;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool decay_all = false;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

template <typename T>
Variable<T> bce_loss(const Variable<T>& logits, std::span<const int> labels) {
  return bce_with_logits(logits, labels);
}

/// Linear warmup from 0 to lr over `warmup_steps`, then cosine decay that
/// reaches min_lr exactly at `total_steps`.
double cosine_lr(Index step, Index total_steps, Index warmup_steps, double lr, double min_lr);

/// Global L2 norm over all gradients; scales every gradient by
/// max_norm / norm when the norm exceeds max_norm. Returns the norm observed
/// before clipping.
template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm);

/// Whether a parameter takes weight decay: projection and MLP weight
/// matrices do; layer-norm parameters, biases, bias tables and the pooling
/// query do not.
bool takes_weight_decay(const std::string& name);

/// AdamW with decoupled weight decay:
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p.
template <typename T>
class AdamW {
 public:
  AdamW(ParamList<T> params, double beta1, double beta2, double eps, double weight_decay,
        bool decay_all = false);
  AdamW(ParamList<T> params, const TrainConfig& cfg)
      : AdamW(std::move(params), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay, cfg.decay_all) {}

  /// One update with learning rate `lr`. Parameters without a gradient are
  /// treated as having a zero gradient.
  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return step_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }
  const ParamList<T>& params() const { return params_; }
  bool decays(std::size_t i) const { return decay_[i]; }

 private:
  ParamList<T> params_;
  std::vector<Tensor<T>> m_, v_;
  std::vector<bool> decay_;
  double beta1_, beta2_, eps_, wd_;
  std::int64_t step_ = 0;
};

/// Named copies of parameter values.
using ModelState = std::map<std::string, Tensor<float>>;

ModelState snapshot(DetectionHead<float>& model);
void restore(DetectionHead<float>& model, const ModelState& state);

/// Binary checkpoint: "EACKPT", u16 version, u32 JSON length, JSON metadata
/// (head config, input dim, seed, epoch), u32 tensor count, then per tensor
/// name, rank, extents and float32 values, and a trailing CRC32.
struct Checkpoint {
  HeadConfig head;
  Index input_dim = 0;
  std::uint64_t seed = 0;
  Index epoch = 0;
  ModelState state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint make_checkpoint(DetectionHead<float>& model, std::uint64_t seed, Index epoch);
DetectionHead<float> model_from_checkpoint(const Checkpoint& ckpt);

/// Forward pass over a whole split without recording a graph. Returns one
/// logit per video, in order.
std::vector<double> predict_logits(const DetectionHead<float>& model, const Dataset& data,
                                   Index batch_size);
std::vector<double> probabilities(std::span<const double> logits);
double mean_bce(std::span<const double> logits, std::span<const int> labels);

struct EpochRecord {
  Index epoch = 0;
  std::string split;
  EvalReport report;
  double loss = 0;
  double lr = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> history;
  EvalReport best_val;
  Index best_epoch = 0;
  ModelState best_state;
};

struct TrainOptions {
  /// When set, the seed writes metrics.csv and best/last checkpoints here.
  std::optional<std::filesystem::path> run_dir;
  std::ostream* log = nullptr;
};

/// Deterministic for a given seed. Keeps the best-validation-AUC weights. A
/// non-finite loss aborts with NumericError; the last checkpoint written at
/// an epoch boundary is left untouched.
SeedResult train_seed(const Dataset& train, const Dataset& val, const HeadConfig& head,
                      const TrainConfig& cfg, std::uint64_t seed, const TrainOptions& opts = {});

struct MetricSummary {
  double mean = 0, std = 0, max = 0;
};

/// Population statistics over seeds (std is 0 for a single seed).
MetricSummary summarize(std::span<const double> values);

struct TrainSummary {
  std::vector<SeedResult> seeds;
  std::map<std::string, MetricSummary> metrics;  // accuracy, precision, recall, f1, auc
};

TrainSummary summarize(std::vector<SeedResult> seeds);
nlohmann::json to_json(const TrainSummary& s);

/// Runs every configured seed, each in <run_dir>/seed_<k> when a run dir is
/// given, and writes summary.json there.
TrainSummary train(const Dataset& train, const Dataset& val, const HeadConfig& head,
                   const TrainConfig& cfg, const TrainOptions& opts = {});

struct FrameCountResult {
  Index frames = 0;
  double loss = 0;
  std::vector<EvalReport> groups;  // per generator, then "Avg", then "all"
  const EvalReport& all() const { return groups.back(); }
};

/// Evaluates `model` on `val` subsampled to each frame count in turn.
std::vector<FrameCountResult> evaluate_frame_counts(const DetectionHead<float>& model,
                                                    const Dataset& val,
                                                    std::span<const Index> frame_counts,
                                                    Index batch_size, std::uint64_t seed = 0);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace easwin
