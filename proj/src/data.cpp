// SPDX-License-Identifier: Apache-2.0
#include "easwin/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>

#include "easwin/config.hpp"
#include "easwin/runtime.hpp"
#include "easwin/random.hpp"

namespace easwin {

static_assert(std::endian::native == std::endian::little, "on-disk format assumes a little-endian host");

void SyntheticSpec::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("synthetic spec: " + msg);
  };
  require(n_train >= 0 && n_val >= 0, "video counts must be >= 0");
  require(frames >= 1 && tokens >= 1 && dim >= 1, "T, S and D_in must be >= 1");
  require(sigma_r > 0 && sigma_f > 0, "sigma_r and sigma_f must be > 0");
  require(rho_r > 0 && rho_r <= 1 && rho_f > 0 && rho_f <= 1, "rho must lie in (0, 1]");
  require(alpha >= 0, "alpha must be >= 0");
  require(period >= 1, "period must be >= 1");
  require(period <= frames, "period " + std::to_string(period) + " exceeds T=" + std::to_string(frames));
  require(artifact_dims >= 1 && artifact_dims <= dim, "artifact_dims must lie in [1, D_in]");
  require(token_noise >= 0 && content_scale >= 0, "noise scales must be >= 0");
  require(generators >= 1, "generators must be >= 1");
}

bool SyntheticSpec::classes_identical() const {
  return alpha == 0 && sigma_f == sigma_r && rho_f == rho_r;
}

SyntheticSpec synthetic_preset(const std::string& name) {
  SyntheticSpec s;
  if (name == "default") return s;
  if (name == "null") {
    s.alpha = 0;
    s.sigma_f = s.sigma_r;
    s.rho_f = s.rho_r;
    return s;
  }
  if (name == "unseen") {
    s.generator_seed = 1011;
    s.period = 8;
    s.alpha = 1.1;
    s.rho_f = 0.8;
    s.sigma_f = 0.385;
    return s;
  }
  throw ConfigError("unknown synthetic preset '" + name + "' (expected default|null|unseen)");
}

std::vector<Index> Dataset::class_counts() const {
  std::vector<Index> counts(2, 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

EmbeddingBatch Dataset::batch(std::span<const Index> indices) const {
  const Index per = frames() * tokens() * input_dim();
  EmbeddingBatch b;
  b.z = Tensor<float>({static_cast<Index>(indices.size()), frames(), tokens(), input_dim()});
  b.valid_t.reserve(indices.size());
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index v = indices[i];
    if (v < 0 || v >= size()) throw ContractError("video index out of range");
    std::copy_n(z.data() + v * per, per, b.z.data() + static_cast<Index>(i) * per);
    b.valid_t.push_back(valid_t[static_cast<std::size_t>(v)]);
    b.labels.push_back(labels[static_cast<std::size_t>(v)]);
  }
  return b;
}

EmbeddingBatch Dataset::all() const {
  std::vector<Index> idx(static_cast<std::size_t>(size()));
  for (Index i = 0; i < size(); ++i) idx[static_cast<std::size_t>(i)] = i;
  return batch(idx);
}

namespace {

struct GeneratorParams {
  std::vector<Index> dims;
  std::vector<double> signs;
};

std::vector<GeneratorParams> generator_params(const SyntheticSpec& spec) {
  std::vector<GeneratorParams> out;
  for (Index g = 0; g < spec.generators; ++g) {
    Rng rng(derive_seed(spec.generator_seed, static_cast<std::uint64_t>(g)));
    std::vector<Index> dims(static_cast<std::size_t>(spec.dim));
    for (Index d = 0; d < spec.dim; ++d) dims[static_cast<std::size_t>(d)] = d;
    rng.shuffle(dims.begin(), dims.end());
    dims.resize(static_cast<std::size_t>(spec.artifact_dims));
    std::sort(dims.begin(), dims.end());
    GeneratorParams p{dims, {}};
    for (std::size_t i = 0; i < dims.size(); ++i) p.signs.push_back(rng.uniform() < 0.5 ? -1.0 : 1.0);
    out.push_back(std::move(p));
  }
  return out;
}

void generate_video(const SyntheticSpec& spec, std::uint64_t global_index, int label,
                    const GeneratorParams* gen, std::span<const double> token_offsets,
                    float* out) {
  Rng rng(derive_seed(spec.seed, global_index));
  const Index t_len = spec.frames, s_len = spec.tokens, d_len = spec.dim;
  const double sigma = label ? spec.sigma_f : spec.sigma_r;
  const double rho = label ? spec.rho_f : spec.rho_r;
  const double stationary = rho < 1 ? sigma / std::sqrt(1 - rho * rho) : sigma;

  std::vector<double> content(static_cast<std::size_t>(d_len));
  for (double& c : content) c = spec.content_scale * rng.normal();
  std::vector<double> latent(static_cast<std::size_t>(d_len));
  for (double& x : latent) x = stationary * rng.normal();
  const double phase = 2 * std::numbers::pi * rng.uniform();

  std::vector<double> frame(static_cast<std::size_t>(d_len));
  for (Index t = 0; t < t_len; ++t) {
    if (t > 0) {
      for (double& x : latent) x = rho * x + sigma * rng.normal();
    }
    for (Index d = 0; d < d_len; ++d) {
      frame[static_cast<std::size_t>(d)] = latent[static_cast<std::size_t>(d)] + content[static_cast<std::size_t>(d)];
    }
    if (gen) {
      const double wave =
          spec.alpha * std::sin(2 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(spec.period) + phase);
      for (std::size_t i = 0; i < gen->dims.size(); ++i) {
        frame[static_cast<std::size_t>(gen->dims[i])] += gen->signs[i] * wave;
      }
    }
    for (Index s = 0; s < s_len; ++s) {
      float* row = out + (t * s_len + s) * d_len;
      const double* off = token_offsets.data() + s * d_len;
      for (Index d = 0; d < d_len; ++d) {
        row[d] = static_cast<float>(frame[static_cast<std::size_t>(d)] + off[d] + spec.token_noise * rng.normal());
      }
    }
  }
}

}  // namespace

Dataset generate_split(const SyntheticSpec& spec, const std::string& split) {
  spec.validate();
  Index per_class = 0, first = 0;
  if (split == "train") {
    per_class = spec.n_train;
  } else if (split == "val") {
    per_class = spec.n_val;
    first = 2 * spec.n_train;
  } else {
    throw ConfigError("unknown split '" + split + "' (expected train|val)");
  }
  static bool warned = false;
  if (spec.classes_identical() && !warned) {
    warned = true;
    std::cerr << "warning: synthetic classes are identically distributed; the task is unlearnable\n";
  }

  const Index n = 2 * per_class;
  const Index per = spec.frames * spec.tokens * spec.dim;
  Dataset data;
  data.split = split;
  data.z = Tensor<float>({n, spec.frames, spec.tokens, spec.dim});
  data.labels.resize(static_cast<std::size_t>(n));
  data.valid_t.assign(static_cast<std::size_t>(n), static_cast<int>(spec.frames));
  data.generator.resize(static_cast<std::size_t>(n));
  for (Index g = 0; g < spec.generators; ++g) data.generator_names.push_back("gen" + std::to_string(g));

  const auto gens = generator_params(spec);
  std::vector<double> token_offsets(static_cast<std::size_t>(spec.tokens * spec.dim));
  Rng offset_rng(derive_seed(spec.seed, ~std::uint64_t{0}));
  for (double& o : token_offsets) o = offset_rng.normal();

  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    data.labels[k] = static_cast<int>(i % 2);
    data.generator[k] = data.labels[k] ? static_cast<int>((i / 2) % spec.generators) : -1;
  }
  parallel_for(n, [&](std::int64_t i) {
    const auto k = static_cast<std::size_t>(i);
    const int g = data.generator[k];
    generate_video(spec, static_cast<std::uint64_t>(first + i), data.labels[k],
                   g >= 0 ? &gens[static_cast<std::size_t>(g)] : nullptr, token_offsets,
                   data.z.data() + i * per);
  });
  return data;
}

SyntheticData generate(const SyntheticSpec& spec) {
  return {generate_split(spec, "train"), generate_split(spec, "val")};
}

std::string spec_hash(const SyntheticSpec& spec) {
  const std::string text = to_json(spec).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t crc) {
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t pos = 0;
  uLong c = crc;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    c = ::crc32(c, bytes.data() + pos, static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

namespace {

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.insert(out.end(), buf, buf + sizeof(U));
}

template <typename U>
U get(std::span<const std::uint8_t> bytes, std::size_t offset) {
  U v;
  std::memcpy(&v, bytes.data() + offset, sizeof(U));
  return v;
}

constexpr char kMagic[5] = {'E', 'A', 'E', 'M', 'B'};

}  // namespace

std::vector<std::uint8_t> encode_embedding_file(const EmbeddingFile& file) {
  const std::uint64_t count = std::uint64_t{file.n} * file.frames * file.tokens * file.dim;
  if (file.labels.size() != file.n || file.values.size() != count) {
    throw ContractError("embedding file: label or value count does not match header");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kEmbeddingHeaderBytes + file.n + count * 4 + 4);
  out.insert(out.end(), kMagic, kMagic + 5);
  put(out, kEmbeddingFileVersion);
  put(out, file.n);
  put(out, file.frames);
  put(out, file.tokens);
  put(out, file.dim);
  out.insert(out.end(), file.labels.begin(), file.labels.end());
  const auto* raw = reinterpret_cast<const std::uint8_t*>(file.values.data());
  out.insert(out.end(), raw, raw + count * 4);
  const std::uint32_t crc =
      crc32(std::span(out).subspan(kEmbeddingHeaderBytes, out.size() - kEmbeddingHeaderBytes));
  put(out, crc);
  return out;
}

EmbeddingFile decode_embedding_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5) throw TruncatedError("embedding file: truncated before magic");
  if (std::memcmp(bytes.data(), kMagic, 5) != 0) throw BadMagicError("embedding file: bad magic");
  if (bytes.size() < kEmbeddingHeaderBytes) throw TruncatedError("embedding file: truncated header");
  const auto version = get<std::uint16_t>(bytes, 5);
  if (version != kEmbeddingFileVersion) {
    throw BadVersionError("embedding file: unsupported version " + std::to_string(version));
  }
  EmbeddingFile f;
  f.n = get<std::uint32_t>(bytes, 7);
  f.frames = get<std::uint32_t>(bytes, 11);
  f.tokens = get<std::uint32_t>(bytes, 15);
  f.dim = get<std::uint32_t>(bytes, 19);
  const std::uint64_t count = std::uint64_t{f.n} * f.frames * f.tokens * f.dim;
  const std::uint64_t payload = f.n + count * 4;
  const std::uint64_t expected = kEmbeddingHeaderBytes + payload + 4;
  if (bytes.size() < expected) {
    throw TruncatedError("embedding file: " + std::to_string(bytes.size()) + " bytes, header implies " +
                         std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw DataError("embedding file: " + std::to_string(bytes.size() - expected) + " trailing bytes");
  }
  const std::size_t crc_offset = kEmbeddingHeaderBytes + payload;
  const auto stored = get<std::uint32_t>(bytes, crc_offset);
  const auto actual = crc32(bytes.subspan(kEmbeddingHeaderBytes, payload));
  if (stored != actual) {
    throw CrcMismatchError("embedding file: CRC mismatch over bytes [" +
                               std::to_string(kEmbeddingHeaderBytes) + ", " +
                               std::to_string(crc_offset) + "), checksum stored at offset " +
                               std::to_string(crc_offset),
                           crc_offset);
  }
  f.labels.assign(bytes.begin() + kEmbeddingHeaderBytes, bytes.begin() + kEmbeddingHeaderBytes + f.n);
  for (std::uint8_t l : f.labels) {
    if (l > 1) throw DataError("embedding file: label byte " + std::to_string(l) + " is not 0 or 1");
  }
  f.values.resize(count);
  std::memcpy(f.values.data(), bytes.data() + kEmbeddingHeaderBytes + f.n, count * 4);
  return f;
}

void write_file(const std::filesystem::path& path, const EmbeddingFile& file) {
  const auto bytes = encode_embedding_file(file);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

EmbeddingFile read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_embedding_file(bytes);
}

EmbeddingFile to_embedding_file(const Dataset& data) {
  EmbeddingFile f;
  f.n = static_cast<std::uint32_t>(data.size());
  if (data.size() > 0) {
    f.frames = static_cast<std::uint32_t>(data.frames());
    f.tokens = static_cast<std::uint32_t>(data.tokens());
    f.dim = static_cast<std::uint32_t>(data.input_dim());
  }
  f.labels.assign(data.labels.begin(), data.labels.end());
  f.values.assign(data.z.data(), data.z.data() + data.z.size());
  return f;
}

Dataset from_embedding_file(const EmbeddingFile& file, const std::string& split) {
  Dataset d;
  d.split = split;
  if (file.n == 0) return d;
  d.z = Tensor<float>({file.n, file.frames, file.tokens, file.dim}, file.values);
  d.labels.assign(file.labels.begin(), file.labels.end());
  d.valid_t.assign(file.n, static_cast<int>(file.frames));
  d.generator.resize(file.n);
  for (std::size_t i = 0; i < file.n; ++i) d.generator[i] = d.labels[i] ? 0 : -1;
  d.generator_names = {"unknown"};
  return d;
}

std::filesystem::path manifest_path(const std::filesystem::path& data_path) {
  auto p = data_path;
  p.replace_extension(".manifest.json");
  return p;
}

void write_split(const std::filesystem::path& dir, const Dataset& data, const std::string& hash) {
  const auto path = dir / (data.split + ".eaemb");
  write_file(path, to_embedding_file(data));
  nlohmann::json m;
  m["split"] = data.split;
  m["path"] = path.filename().string();
  m["n"] = data.size();
  m["T"] = data.size() ? data.frames() : 0;
  m["S"] = data.size() ? data.tokens() : 0;
  m["D_in"] = data.size() ? data.input_dim() : 0;
  const auto counts = data.class_counts();
  m["class_counts"] = {{"real", counts[0]}, {"generated", counts[1]}};
  m["spec_hash"] = hash;
  m["generators"] = data.generator_names;
  m["generator_ids"] = data.generator;
  std::ofstream out(manifest_path(path));
  if (!out) throw DataError("cannot write manifest for " + path.string());
  out << m.dump(2) << "\n";
}

Dataset read_split(const std::filesystem::path& path, const std::string& split) {
  Dataset d = from_embedding_file(read_file(path), split);
  const auto mpath = manifest_path(path);
  if (!std::filesystem::exists(mpath)) return d;
  std::ifstream in(mpath);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
    if (m.at("n").get<Index>() != d.size()) throw DataError("manifest count does not match " + path.string());
    d.generator_names = m.at("generators").get<std::vector<std::string>>();
    d.generator = m.at("generator_ids").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad manifest " + mpath.string() + ": " + e.what());
  }
  if (static_cast<Index>(d.generator.size()) != d.size()) {
    throw DataError("manifest generator ids do not match " + path.string());
  }
  for (std::size_t i = 0; i < d.generator.size(); ++i) {
    const int g = d.generator[i];
    const bool ok = d.labels[i] == 0 ? g == -1
                                     : g >= 0 && g < static_cast<int>(d.generator_names.size());
    if (!ok) throw DataError("manifest generator id inconsistent with label at video " + std::to_string(i));
  }
  return d;
}

std::vector<Index> subsample_indices(Index frames, Index k) {
  if (k < 1) throw ConfigError("frame count must be >= 1");
  if (k > frames) {
    throw ConfigError("cannot subsample " + std::to_string(k) + " frames from T=" + std::to_string(frames));
  }
  if (k == 1) return {0};
  std::vector<Index> idx(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    idx[static_cast<std::size_t>(i)] =
        static_cast<Index>(std::llround(static_cast<double>(i * (frames - 1)) / static_cast<double>(k - 1)));
  }
  return idx;
}

namespace {

Tensor<float> take_frames(const Tensor<float>& z, std::span<const Index> idx) {
  const Index n = z.dim(0), t = z.dim(1), row = z.dim(2) * z.dim(3);
  const auto k = static_cast<Index>(idx.size());
  Tensor<float> out({n, k, z.dim(2), z.dim(3)});
  for (Index v = 0; v < n; ++v) {
    for (Index f = 0; f < k; ++f) {
      std::copy_n(z.data() + (v * t + idx[static_cast<std::size_t>(f)]) * row, row,
                  out.data() + (v * k + f) * row);
    }
  }
  return out;
}

int subsampled_valid(int valid, std::span<const Index> idx) {
  const auto count = std::count_if(idx.begin(), idx.end(), [&](Index i) { return i < valid; });
  return std::max(1, static_cast<int>(count));
}

}  // namespace

EmbeddingBatch subsample_frames(const EmbeddingBatch& batch, Index k) {
  batch.validate();
  const auto idx = subsample_indices(batch.frames(), k);
  EmbeddingBatch out;
  out.z = take_frames(batch.z, idx);
  out.labels = batch.labels;
  for (int v : batch.valid_t) out.valid_t.push_back(subsampled_valid(v, idx));
  return out;
}

Dataset subsample_frames(const Dataset& data, Index k) {
  Dataset out = data;
  if (data.size() == 0) return out;
  const auto idx = subsample_indices(data.frames(), k);
  out.z = take_frames(data.z, idx);
  for (int& v : out.valid_t) v = subsampled_valid(v, idx);
  return out;
}

}  // namespace easwin
