// SPDX-License-Identifier: Apache-2.0
#include "easwin/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "easwin/ops.hpp"
#include "easwin/random.hpp"

namespace easwin {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

namespace {

EmbeddingBatch tiny_batch(const GradcheckConfig& cfg, Rng& rng) {
  EmbeddingBatch batch;
  batch.z = Tensor<float>({cfg.batch, cfg.frames, cfg.tokens, cfg.input_dim});
  for (float& v : batch.z.values()) v = static_cast<float>(rng.normal());
  batch.valid_t.assign(static_cast<std::size_t>(cfg.batch), static_cast<int>(cfg.frames));
  // One short video so the validity masks take part in the check.
  if (cfg.batch > 1 && cfg.frames > 1) batch.valid_t.back() = static_cast<int>(cfg.frames - 1);
  for (Index i = 0; i < cfg.batch; ++i) batch.labels.push_back(static_cast<int>(i % 2));
  return batch;
}

double loss_value(const DetectionHead<double>& model, const EmbeddingBatch& batch) {
  NoGradGuard guard;
  return bce_with_logits(model.forward(batch), batch.labels).value()[0];
}

}  // namespace

GradcheckVariant gradcheck_head(const HeadConfig& head, const GradcheckConfig& cfg,
                                const std::string& name) {
  GradcheckVariant out;
  out.name = name;
  out.head = head;
  DetectionHead<double> model(head, cfg.input_dim, cfg.seed);
  Rng rng(derive_seed(cfg.seed, 1));
  for (Parameter<double>* p : model.parameters()) {
    for (double& v : p->var.mutable_value().values()) v += 0.2 * rng.normal();
  }
  const EmbeddingBatch batch = tiny_batch(cfg, rng);

  backward(bce_with_logits(model.forward(batch), batch.labels));
  const double h = cfg.step;
  for (Parameter<double>* p : model.parameters()) {
    Tensor<double>& value = p->var.mutable_value();
    const Tensor<double> grad = p->var.has_grad() ? p->var.grad() : Tensor<double>(value.shape());
    for (Index i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = loss_value(model, batch);
      value[i] = saved - h;
      const double down = loss_value(model, batch);
      value[i] = saved;
      const double err = relative_error(grad[i], (up - down) / (2 * h));
      if (out.worst_param.empty() || err > out.max_rel_err) {
        out.max_rel_err = err;
        out.worst_param = p->name + "[" + std::to_string(i) + "]";
      }
      ++out.checked;
    }
  }
  return out;
}

GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  report.tolerance = cfg.tolerance;
  for (PoolMode pool : {PoolMode::mean, PoolMode::attention}) {
    for (bool shift : {false, true}) {
      HeadConfig head;
      head.d_model = cfg.d_model;
      head.heads = cfg.heads;
      head.w_t = head.w_s = cfg.window;
      head.depth_t = cfg.depth_t;
      head.depth_s = cfg.depth_s;
      head.frames = cfg.frames;
      head.pool = pool;
      head.use_shift = shift;
      if (shift) {
        head.depth_t = std::max<Index>(head.depth_t, 2);
        head.depth_s = std::max<Index>(head.depth_s, 2);
      }
      const std::string name = to_string(pool) + (shift ? "/shift" : "/noshift") + " depth " +
                               std::to_string(head.depth_t) + "+" + std::to_string(head.depth_s);
      report.variants.push_back(gradcheck_head(head, cfg, name));
      report.max_rel_err = std::max(report.max_rel_err, report.variants.back().max_rel_err);
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string summary_line(const GradcheckReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s max_rel_err=%.3e%s%.0e", r.passed() ? "PASS" : "FAIL",
                r.max_rel_err, r.passed() ? "<" : ">=", r.tolerance);
  return buf;
}

nlohmann::json to_json(const GradcheckReport& r) {
  nlohmann::json variants = nlohmann::json::array();
  for (const auto& v : r.variants) {
    variants.push_back({{"name", v.name},
                        {"max_rel_err", v.max_rel_err},
                        {"worst_param", v.worst_param},
                        {"checked", v.checked}});
  }
  return {{"passed", r.passed()},
          {"max_rel_err", r.max_rel_err},
          {"tolerance", r.tolerance},
          {"seconds", r.seconds},
          {"variants", variants}};
}

namespace {

template <typename F>
double time_ms(Index repeats, F&& fn) {
  double best = 0;
  for (Index r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    best = r == 0 ? ms : std::min(best, ms);
  }
  return best;
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  if (cfg.d_model % cfg.heads != 0) throw ConfigError("bench.d_model must be divisible by bench.heads");
  if (cfg.repeats < 1) throw ConfigError("bench.repeats must be >= 1");
  Rng rng(0);
  const WindowAttentionLayer<float> temporal("bench.t", AttentionAxis::temporal, cfg.d_model,
                                             cfg.heads, cfg.window, rng);
  const WindowAttentionLayer<float> joint("bench.j", AttentionAxis::joint, cfg.d_model, cfg.heads,
                                          1, rng);
  NoGradGuard guard;
  std::vector<BenchRow> rows;
  for (Index t : cfg.frames) {
    if (t < 1) throw ConfigError("bench.frames entries must be >= 1");
    BenchRow row;
    row.frames = t;
    Tensor<float> x({cfg.tokens, t, cfg.d_model});
    for (float& v : x.values()) v = static_cast<float>(rng.normal());
    const Variable<float> seqs = constant(x);
    const Variable<float> flat = constant(x.reshaped({1, cfg.tokens * t, cfg.d_model}));

    MacCounter& macs = mac_counter();
    macs.reset();
    row.factorized_ms = time_ms(cfg.repeats, [&] { temporal_swin_layer(seqs, temporal, false); });
    row.factorized_macs = macs.total / static_cast<std::uint64_t>(cfg.repeats);
    row.factorized_core_macs = macs.attention_core / static_cast<std::uint64_t>(cfg.repeats);
    macs.reset();
    row.joint_ms = time_ms(cfg.repeats, [&] { joint_attention_layer(flat, joint); });
    row.joint_macs = macs.total / static_cast<std::uint64_t>(cfg.repeats);
    row.joint_core_macs = macs.attention_core / static_cast<std::uint64_t>(cfg.repeats);
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json to_json(const std::vector<BenchRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"frames", r.frames},
                   {"factorized_macs", r.factorized_macs},
                   {"factorized_core_macs", r.factorized_core_macs},
                   {"joint_macs", r.joint_macs},
                   {"joint_core_macs", r.joint_core_macs},
                   {"factorized_ms", r.factorized_ms},
                   {"joint_ms", r.joint_ms}});
  }
  return out;
}

}  // namespace easwin
