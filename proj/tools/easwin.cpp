// SPDX-License-Identifier: Apache-2.0
// Command-line front end: gen | train | eval | gradcheck | ablate | bench.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "easwin/config.hpp"
#include "easwin/runtime.hpp"
#include "easwin/verify.hpp"

namespace fs = std::filesystem;
using namespace easwin;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4, kAcceptance = 5 };

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_report_row(const std::string& label, const EvalReport& r) {
  std::printf("%-16s %7.4f %7.4f %7.4f %7.4f %7.4f  (n=%lld)\n", label.c_str(), r.accuracy,
              r.precision, r.recall, r.f1, r.auc, static_cast<long long>(r.counts.n()));
}

void print_report_header(const char* first) {
  std::printf("%-16s %7s %7s %7s %7s %7s\n", first, "acc", "prec", "recall", "f1", "auc");
}

int cmd_gen(const RunConfig& cfg) {
  if (cfg.data.source != "synthetic") throw ConfigError("gen needs data.source=synthetic");
  const fs::path dir = fs::path(cfg.output_dir) / "data";
  const SyntheticData data = generate(cfg.data.spec);
  const std::string hash = spec_hash(cfg.data.spec);
  write_split(dir, data.train, hash);
  write_split(dir, data.val, hash);
  save_run_config(fs::path(cfg.output_dir) / "config.json", cfg);
  for (const Dataset* d : {&data.train, &data.val}) {
    const auto counts = d->class_counts();
    std::printf("%-5s n=%lld real=%lld generated=%lld -> %s\n", d->split.c_str(),
                static_cast<long long>(d->size()), static_cast<long long>(counts[0]),
                static_cast<long long>(counts[1]), (dir / (d->split + ".eaemb")).c_str());
  }
  std::printf("spec_hash %s\n", hash.c_str());
  return kOk;
}

void print_summary(const TrainSummary& s) {
  std::printf("%-10s %10s %10s %10s\n", "metric", "mean", "std", "max");
  for (const char* name : {"accuracy", "precision", "recall", "f1", "auc"}) {
    const MetricSummary& m = s.metrics.at(name);
    std::printf("%-10s %10.4f %10.4f %10.4f\n", name, m.mean, m.std, m.max);
  }
}

int cmd_train(const RunConfig& cfg) {
  const SyntheticData data = load_datasets(cfg.data);
  const fs::path dir = cfg.output_dir;
  save_run_config(dir / "config.json", cfg);
  TrainOptions opts;
  opts.run_dir = dir;
  opts.log = &std::cout;
  const TrainSummary summary = train(data.train, data.val, cfg.head, cfg.train, opts);
  print_summary(summary);
  return kOk;
}

int cmd_eval(const RunConfig& cfg) {
  if (cfg.eval.checkpoint.empty()) throw ConfigError("eval needs --checkpoint (eval.checkpoint)");
  const Checkpoint ckpt = load_checkpoint(cfg.eval.checkpoint);
  const DetectionHead<float> model = model_from_checkpoint(ckpt);
  const Dataset val = load_datasets(cfg.data).val;
  const auto results =
      evaluate_frame_counts(model, val, cfg.eval.frame_counts, cfg.eval.batch_size, ckpt.seed);

  json j = json::array();
  std::string csv = "frames,group,n,tp,fp,tn,fn,acc,prec,recall,f1,auc\n";
  for (const auto& r : results) {
    std::printf("frames %lld (loss %.4f)\n", static_cast<long long>(r.frames), r.loss);
    print_report_header("group");
    json groups = json::array();
    for (const auto& g : r.groups) {
      print_report_row(g.group, g);
      groups.push_back(to_json(g));
      const auto& c = g.counts;
      csv += std::to_string(r.frames) + "," + g.group + "," + std::to_string(c.n()) + "," +
             std::to_string(c.tp) + "," + std::to_string(c.fp) + "," + std::to_string(c.tn) + "," +
             std::to_string(c.fn) + "," + fmt("%.17g", g.accuracy) + "," +
             fmt("%.17g", g.precision) + "," + fmt("%.17g", g.recall) + "," + fmt("%.17g", g.f1) +
             "," + fmt("%.17g", g.auc) + "\n";
    }
    j.push_back({{"frames", r.frames}, {"loss", r.loss}, {"groups", groups}});
  }
  const fs::path dir = cfg.output_dir;
  write_text(dir / "eval.json", j.dump(2) + "\n");
  write_text(dir / "eval.csv", csv);
  return kOk;
}

int cmd_gradcheck(const RunConfig& cfg) {
  const GradcheckReport report = run_gradcheck(cfg.gradcheck);
  for (const auto& v : report.variants) {
    std::printf("%-28s max_rel_err=%.3e worst=%s checked=%lld\n", v.name.c_str(), v.max_rel_err,
                v.worst_param.c_str(), static_cast<long long>(v.checked));
  }
  std::printf("%s (%.1fs)\n", summary_line(report).c_str(), report.seconds);
  write_text(fs::path(cfg.output_dir) / "gradcheck.json", to_json(report).dump(2) + "\n");
  return report.passed() ? kOk : kAcceptance;
}

int cmd_ablate(const RunConfig& cfg) {
  const SyntheticData data = load_datasets(cfg.data);
  const fs::path dir = cfg.output_dir;
  save_run_config(dir / "config.json", cfg);
  json rows = json::array();
  std::string csv = "variant,acc,prec,recall,f1,auc\n";
  std::vector<std::pair<std::string, TrainSummary>> results;
  for (const auto& [name, head] : ablation_variants(cfg.head)) {
    TrainOptions opts;
    opts.run_dir = dir / name;
    opts.log = &std::cout;
    std::printf("== %s\n", name.c_str());
    std::fflush(stdout);
    results.emplace_back(name, train(data.train, data.val, head, cfg.train, opts));
  }
  std::printf("%-16s %7s %7s %7s %7s %7s   (mean over %zu seeds)\n", "variant", "acc", "prec",
              "recall", "f1", "auc", cfg.train.seeds.size());
  for (const auto& [name, s] : results) {
    const auto& m = s.metrics;
    std::printf("%-16s %7.4f %7.4f %7.4f %7.4f %7.4f\n", name.c_str(), m.at("accuracy").mean,
                m.at("precision").mean, m.at("recall").mean, m.at("f1").mean, m.at("auc").mean);
    csv += name + "," + fmt("%.17g", m.at("accuracy").mean) + "," +
           fmt("%.17g", m.at("precision").mean) + "," + fmt("%.17g", m.at("recall").mean) + "," +
           fmt("%.17g", m.at("f1").mean) + "," + fmt("%.17g", m.at("auc").mean) + "\n";
    json row = to_json(s);
    row["variant"] = name;
    rows.push_back(row);
  }
  write_text(dir / "ablate.json", rows.dump(2) + "\n");
  write_text(dir / "ablate.csv", csv);
  return kOk;
}

int cmd_bench(const RunConfig& cfg) {
  const auto rows = run_bench(cfg.bench);
  std::printf("%6s %14s %14s %10s %14s %14s %10s\n", "T", "fact_MACs", "fact_core", "fact_ms",
              "joint_MACs", "joint_core", "joint_ms");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::printf("%6lld %14llu %14llu %10.3f %14llu %14llu %10.3f\n", static_cast<long long>(r.frames),
                static_cast<unsigned long long>(r.factorized_macs),
                static_cast<unsigned long long>(r.factorized_core_macs), r.factorized_ms,
                static_cast<unsigned long long>(r.joint_macs),
                static_cast<unsigned long long>(r.joint_core_macs), r.joint_ms);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& a = rows[i - 1];
    const auto& b = rows[i];
    auto ratio = [](std::uint64_t x, std::uint64_t y) {
      return y == 0 ? 0.0 : static_cast<double>(x) / static_cast<double>(y);
    };
    std::printf("T %lld -> %lld: factorized x%.2f (core x%.2f), joint x%.2f (core x%.2f)\n",
                static_cast<long long>(a.frames), static_cast<long long>(b.frames),
                ratio(b.factorized_macs, a.factorized_macs),
                ratio(b.factorized_core_macs, a.factorized_core_macs),
                ratio(b.joint_macs, a.joint_macs), ratio(b.joint_core_macs, a.joint_core_macs));
  }
  write_text(fs::path(cfg.output_dir) / "bench.json", to_json(rows).dump(2) + "\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Windowed-attention detection head over video embeddings"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "JSON run config; flags below override single keys")
      ->check(CLI::ExistingFile);
  std::map<std::string, std::string> overrides;
  const json defaults = to_json(RunConfig{});
  for (const std::string& key : config_keys()) {
    const json& def = defaults.at(json::json_pointer("/" + [&] {
      std::string p = key;
      for (char& c : p) {
        if (c == '.') c = '/';
      }
      return p;
    }()));
    app.add_option_function<std::string>(
           "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; },
           "default: " + def.dump())
        ->type_name("VALUE");
  }

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Command commands[] = {
      {"gen", "write the synthetic splits as embedding files", cmd_gen},
      {"train", "train every configured seed", cmd_train},
      {"eval", "evaluate a checkpoint on the val split at each frame count", cmd_eval},
      {"gradcheck", "compare backprop with 64-bit finite differences", cmd_gradcheck},
      {"ablate", "train the base head and its four ablations", cmd_ablate},
      {"bench", "count multiply-adds of windowed vs joint attention", cmd_bench},
  };
  std::string checkpoint;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    if (std::string(c.name) == "eval") {
      sub->add_option("--checkpoint", checkpoint, "checkpoint file (same as --eval.checkpoint)");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    json doc = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      try {
        doc = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("config " + config_path + " is not valid JSON: " + e.what());
      }
    }
    for (const auto& [key, value] : overrides) apply_override(doc, key, value);
    if (!checkpoint.empty()) apply_override(doc, "eval.checkpoint", checkpoint);
    const RunConfig cfg = run_config_from_json(doc);
    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) return c.run(cfg);
    }
    return kOther;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
}
