// SPDX-License-Identifier: Apache-2.0
#include "easwin/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

namespace easwin {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and remembers which were consumed.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + where() + "' must be an object");
  }

  template <typename V>
  void get(const std::string& key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<V, bool>) {
      require(v.is_boolean(), key, "a boolean");
    } else if constexpr (std::is_unsigned_v<V>) {
      require(v.is_number_unsigned(), key, "a non-negative integer");
    } else if constexpr (std::is_integral_v<V>) {
      require(v.is_number_integer(), key, "an integer");
    } else if constexpr (std::is_floating_point_v<V>) {
      require(v.is_number(), key, "a number");
    } else if constexpr (std::is_same_v<V, std::string>) {
      require(v.is_string(), key, "a string");
    }
    try {
      out = v.get<V>();
    } catch (const json::exception& e) {
      throw ConfigError("'" + path_ + key + "': " + e.what());
    }
  }

  const json* object(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + path_ + k + "'");
    }
  }

 private:
  void require(bool ok, const std::string& key, const char* what) const {
    if (!ok) throw ConfigError("'" + path_ + key + "' must be " + what);
  }
  std::string where() const { return path_.empty() ? "<root>" : path_.substr(0, path_.size() - 1); }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const HeadConfig& c) {
  return {{"d_model", c.d_model},
          {"heads", c.heads},
          {"w_t", c.w_t},
          {"w_s", c.w_s},
          {"depth_t", c.depth_t},
          {"depth_s", c.depth_s},
          {"tubelet", c.tubelet},
          {"pool", to_string(c.pool)},
          {"head_kind", to_string(c.head_kind)},
          {"use_shift", c.use_shift},
          {"joint_attention", c.joint_attention},
          {"frames", c.frames}};
}

HeadConfig head_config_from_json(const json& j) {
  HeadConfig c;
  Fields f(j, "head.");
  f.get("d_model", c.d_model);
  f.get("heads", c.heads);
  f.get("w_t", c.w_t);
  f.get("w_s", c.w_s);
  f.get("depth_t", c.depth_t);
  f.get("depth_s", c.depth_s);
  f.get("tubelet", c.tubelet);
  std::string pool = to_string(c.pool), kind = to_string(c.head_kind);
  f.get("pool", pool);
  f.get("head_kind", kind);
  c.pool = parse_pool_mode(pool);
  c.head_kind = parse_head_kind(kind);
  f.get("use_shift", c.use_shift);
  f.get("joint_attention", c.joint_attention);
  f.get("frames", c.frames);
  f.finish();
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"warmup_epochs", c.warmup_epochs},
          {"min_lr", c.min_lr},
          {"max_grad_norm", c.max_grad_norm},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seeds", c.seeds},
          {"betas", {c.beta1, c.beta2}},
          {"eps", c.eps},
          {"decay_all", c.decay_all}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  Fields f(j, "train.");
  f.get("lr", c.lr);
  f.get("weight_decay", c.weight_decay);
  f.get("warmup_epochs", c.warmup_epochs);
  f.get("min_lr", c.min_lr);
  f.get("max_grad_norm", c.max_grad_norm);
  f.get("epochs", c.epochs);
  f.get("batch_size", c.batch_size);
  if (const json* seeds = f.object("seeds")) {
    if (!seeds->is_array()) throw ConfigError("'train.seeds' must be an array of non-negative integers");
    c.seeds.clear();
    for (const json& s : *seeds) {
      if (!s.is_number_unsigned()) throw ConfigError("'train.seeds' must be an array of non-negative integers");
      c.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  if (const json* betas = f.object("betas")) {
    if (!betas->is_array() || betas->size() != 2 || !(*betas)[0].is_number() || !(*betas)[1].is_number()) {
      throw ConfigError("'train.betas' must be a pair of numbers");
    }
    c.beta1 = (*betas)[0].get<double>();
    c.beta2 = (*betas)[1].get<double>();
  }
  f.get("eps", c.eps);
  f.get("decay_all", c.decay_all);
  f.finish();
  c.validate();
  return c;
}

json to_json(const SyntheticSpec& s) {
  return {{"n_train", s.n_train},
          {"n_val", s.n_val},
          {"frames", s.frames},
          {"tokens", s.tokens},
          {"dim", s.dim},
          {"sigma_r", s.sigma_r},
          {"rho_r", s.rho_r},
          {"sigma_f", s.sigma_f},
          {"rho_f", s.rho_f},
          {"alpha", s.alpha},
          {"period", s.period},
          {"artifact_dims", s.artifact_dims},
          {"token_noise", s.token_noise},
          {"content_scale", s.content_scale},
          {"generators", s.generators},
          {"seed", s.seed},
          {"generator_seed", s.generator_seed}};
}

SyntheticSpec synthetic_spec_from_json(const json& j, SyntheticSpec s) {
  Fields f(j, "data.spec.");
  f.get("n_train", s.n_train);
  f.get("n_val", s.n_val);
  f.get("frames", s.frames);
  f.get("tokens", s.tokens);
  f.get("dim", s.dim);
  f.get("sigma_r", s.sigma_r);
  f.get("rho_r", s.rho_r);
  f.get("sigma_f", s.sigma_f);
  f.get("rho_f", s.rho_f);
  f.get("alpha", s.alpha);
  f.get("period", s.period);
  f.get("artifact_dims", s.artifact_dims);
  f.get("token_noise", s.token_noise);
  f.get("content_scale", s.content_scale);
  f.get("generators", s.generators);
  f.get("seed", s.seed);
  f.get("generator_seed", s.generator_seed);
  f.finish();
  s.validate();
  return s;
}

json to_json(const RunConfig& c) {
  json data = {{"source", c.data.source},
               {"preset", c.data.preset},
               {"spec", to_json(c.data.spec)},
               {"train_path", c.data.train_path},
               {"val_path", c.data.val_path}};
  json eval = {{"checkpoint", c.eval.checkpoint},
               {"frame_counts", c.eval.frame_counts},
               {"batch_size", c.eval.batch_size}};
  const auto& g = c.gradcheck;
  json grad = {{"d_model", g.d_model},     {"heads", g.heads},     {"frames", g.frames},
               {"tokens", g.tokens},       {"window", g.window},   {"depth_t", g.depth_t},
               {"depth_s", g.depth_s},     {"input_dim", g.input_dim}, {"batch", g.batch},
               {"step", g.step},           {"tolerance", g.tolerance}, {"seed", g.seed}};
  const auto& b = c.bench;
  json bench = {{"d_model", b.d_model}, {"heads", b.heads},   {"tokens", b.tokens},
                {"window", b.window},   {"frames", b.frames}, {"repeats", b.repeats}};
  return {{"head", to_json(c.head)},   {"train", to_json(c.train)}, {"data", data},
          {"eval", eval},              {"gradcheck", grad},         {"bench", bench},
          {"output_dir", c.output_dir}};
}

namespace {

std::vector<Index> index_list(const json* j, const std::string& path) {
  if (!j->is_array()) throw ConfigError("'" + path + "' must be an array of integers");
  std::vector<Index> out;
  for (const json& v : *j) {
    if (!v.is_number_integer()) throw ConfigError("'" + path + "' must be an array of integers");
    out.push_back(v.get<Index>());
  }
  return out;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Fields f(j, "");
  if (const json* h = f.object("head")) c.head = head_config_from_json(*h);
  if (const json* t = f.object("train")) c.train = train_config_from_json(*t);
  if (const json* d = f.object("data")) {
    Fields df(*d, "data.");
    df.get("source", c.data.source);
    df.get("preset", c.data.preset);
    c.data.spec = synthetic_preset(c.data.preset);
    if (const json* s = df.object("spec")) c.data.spec = synthetic_spec_from_json(*s, c.data.spec);
    df.get("train_path", c.data.train_path);
    df.get("val_path", c.data.val_path);
    df.finish();
  }
  if (const json* e = f.object("eval")) {
    Fields ef(*e, "eval.");
    ef.get("checkpoint", c.eval.checkpoint);
    if (const json* fc = ef.object("frame_counts")) c.eval.frame_counts = index_list(fc, "eval.frame_counts");
    ef.get("batch_size", c.eval.batch_size);
    ef.finish();
  }
  if (const json* g = f.object("gradcheck")) {
    Fields gf(*g, "gradcheck.");
    auto& gc = c.gradcheck;
    gf.get("d_model", gc.d_model);
    gf.get("heads", gc.heads);
    gf.get("frames", gc.frames);
    gf.get("tokens", gc.tokens);
    gf.get("window", gc.window);
    gf.get("depth_t", gc.depth_t);
    gf.get("depth_s", gc.depth_s);
    gf.get("input_dim", gc.input_dim);
    gf.get("batch", gc.batch);
    gf.get("step", gc.step);
    gf.get("tolerance", gc.tolerance);
    gf.get("seed", gc.seed);
    gf.finish();
  }
  if (const json* b = f.object("bench")) {
    Fields bf(*b, "bench.");
    bf.get("d_model", c.bench.d_model);
    bf.get("heads", c.bench.heads);
    bf.get("tokens", c.bench.tokens);
    bf.get("window", c.bench.window);
    if (const json* fr = bf.object("frames")) c.bench.frames = index_list(fr, "bench.frames");
    bf.get("repeats", c.bench.repeats);
    bf.finish();
  }
  f.get("output_dir", c.output_dir);
  f.finish();
  c.validate();
  return c;
}

void RunConfig::validate() const {
  head.validate();
  train.validate();
  if (data.source != "synthetic" && data.source != "files") {
    throw ConfigError("data.source must be 'synthetic' or 'files'");
  }
  data.spec.validate();
  if (data.source == "files" && (data.train_path.empty() || data.val_path.empty())) {
    throw ConfigError("data.source 'files' needs data.train_path and data.val_path");
  }
  if (eval.batch_size < 1) throw ConfigError("eval.batch_size must be >= 1");
  for (Index k : eval.frame_counts) {
    if (k < 1) throw ConfigError("eval.frame_counts entries must be >= 1");
  }
  const auto& g = gradcheck;
  if (g.d_model < 2 || g.heads < 1 || g.d_model % g.heads != 0 || g.frames < 1 || g.tokens < 1 ||
      g.window < 1 || g.depth_t < 0 || g.depth_s < 0 || g.input_dim < 1 || g.batch < 1 ||
      g.step <= 0 || g.tolerance <= 0) {
    throw ConfigError("gradcheck settings are inconsistent");
  }
  if (bench.d_model < 1 || bench.heads < 1 || bench.d_model % bench.heads != 0 || bench.tokens < 1 ||
      bench.window < 1 || bench.repeats < 1 || bench.frames.empty()) {
    throw ConfigError("bench settings are inconsistent");
  }
  for (Index t : bench.frames) {
    if (t < 1) throw ConfigError("bench.frames entries must be >= 1");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json(c).dump(2) << "\n";
}

void apply_override(json& j, const std::string& path, const std::string& value) {
  const json canon = to_json(RunConfig{});
  const json::json_pointer ptr("/" + [&] {
    std::string p = path;
    for (char& ch : p) {
      if (ch == '.') ch = '/';
    }
    return p;
  }());
  bool known = false;
  try {
    known = canon.contains(ptr) && !canon.at(ptr).is_object();
  } catch (const json::exception&) {
    known = false;
  }
  if (!known) throw ConfigError("unknown config key '" + path + "'");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;
  }
  // String-typed keys stay strings even when the text parses as a number.
  if (canon.at(ptr).is_string()) parsed = value;
  if (!j.is_object()) j = json::object();
  j[ptr] = parsed;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  const json canon = to_json(RunConfig{});
  auto walk = [&](auto&& self, const json& j, const std::string& prefix) -> void {
    for (const auto& [k, v] : j.items()) {
      if (v.is_object()) {
        self(self, v, prefix + k + ".");
      } else {
        out.push_back(prefix + k);
      }
    }
  };
  walk(walk, canon, "");
  return out;
}

SyntheticData load_datasets(const DataConfig& data) {
  if (data.source == "synthetic") return generate(data.spec);
  if (data.source != "files") {
    throw ConfigError("data.source must be synthetic or files, got '" + data.source + "'");
  }
  if (data.train_path.empty() || data.val_path.empty()) {
    throw ConfigError("data.source=files needs data.train_path and data.val_path");
  }
  return {read_split(data.train_path, "train"), read_split(data.val_path, "val")};
}

}  // namespace easwin
