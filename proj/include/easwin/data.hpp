// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "easwin/model.hpp"

namespace easwin {

/// Parameters of the synthetic embedding generator. Counts are per class.
///
/// Every video follows an AR(1) latent trajectory (coefficient rho, innovation
/// sigma) shared by its S tokens, plus a per-video content offset, fixed
/// per-token offsets and iid token noise. Generated ("fake") videos use their
/// own (sigma_f, rho_f) and add alpha * sin(2 pi t / period + phase) on a
/// feature subspace owned by their generator. The phase is drawn per video, so
/// with period dividing T the artifact averages to zero over a video.
struct SyntheticSpec {
  Index n_train = 2000;
  Index n_val = 500;
  Index frames = 16;
  Index tokens = 16;
  Index dim = 64;
  double sigma_r = 0.2;
  double rho_r = 0.95;
  double sigma_f = 0.337;
  double rho_f = 0.85;
  double alpha = 1.5;
  Index period = 4;
  Index artifact_dims = 16;
  double token_noise = 0.3;
  double content_scale = 1.0;
  Index generators = 4;
  std::uint64_t seed = 7;
  std::uint64_t generator_seed = 11;

  /// Throws ConfigError on an impossible spec.
  void validate() const;
  /// True when real and generated videos are identically distributed.
  bool classes_identical() const;
  bool operator==(const SyntheticSpec&) const = default;
};

/// Named presets: "default" (separable), "null" (identical classes) and
/// "unseen" (held-out generators with shifted artifact parameters).
SyntheticSpec synthetic_preset(const std::string& name);

/// A split held in memory. Real videos have generator -1.
struct Dataset {
  std::string split;
  Tensor<float> z;  // (n, T, S, D_in)
  std::vector<int> labels;
  std::vector<int> valid_t;
  std::vector<int> generator;
  std::vector<std::string> generator_names;

  Index size() const { return z.empty() ? 0 : z.dim(0); }
  Index frames() const { return z.dim(1); }
  Index tokens() const { return z.dim(2); }
  Index input_dim() const { return z.dim(3); }
  std::vector<Index> class_counts() const;  // {real, generated}

  /// Copies the selected videos into a batch.
  EmbeddingBatch batch(std::span<const Index> indices) const;
  EmbeddingBatch all() const;
};

struct SyntheticData {
  Dataset train;
  Dataset val;
};

/// Deterministic for a given SyntheticSpec: every video draws from its own stream derived from
/// (seed, global video index), and the index ranges of the splits never
/// overlap. Generation runs in parallel across videos.
SyntheticData generate(const SyntheticSpec& spec);
Dataset generate_split(const SyntheticSpec& spec, const std::string& split);

/// Stable 64-bit FNV-1a hash of the SyntheticSpec canonical JSON, in hex.
std::string spec_hash(const SyntheticSpec& spec);

// Embedding file: "EAEMB", u16 version, u32 n, T, S, D_in, n label bytes,
// n*T*S*D_in little-endian float32, then a CRC32 of labels and floats.
inline constexpr std::uint16_t kEmbeddingFileVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 23;

struct EmbeddingFile {
  std::uint32_t n = 0, frames = 0, tokens = 0, dim = 0;
  std::vector<std::uint8_t> labels;
  std::vector<float> values;

  bool operator==(const EmbeddingFile&) const = default;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t crc = 0);

std::vector<std::uint8_t> encode_embedding_file(const EmbeddingFile& file);
/// Throws BadMagicError, BadVersionError, TruncatedError or CrcMismatchError.
EmbeddingFile decode_embedding_file(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, const EmbeddingFile& file);
EmbeddingFile read_file(const std::filesystem::path& path);

EmbeddingFile to_embedding_file(const Dataset& data);
Dataset from_embedding_file(const EmbeddingFile& file, const std::string& split);

/// Writes <dir>/<split>.eaemb plus <dir>/<split>.manifest.json.
void write_split(const std::filesystem::path& dir, const Dataset& data,
                 const std::string& spec_hash);
/// Reads an embedding file and, when present, the manifest next to it (which
/// restores generator ids).
Dataset read_split(const std::filesystem::path& path, const std::string& split);

std::filesystem::path manifest_path(const std::filesystem::path& data_path);

/// Evenly spaced frame indices round(i * (T - 1) / (k - 1)), first and last
/// frame included.
std::vector<Index> subsample_indices(Index frames, Index k);
EmbeddingBatch subsample_frames(const EmbeddingBatch& batch, Index k);
Dataset subsample_frames(const Dataset& data, Index k);

}  // namespace easwin
