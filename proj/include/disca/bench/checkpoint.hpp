#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "disca/ad/params.hpp"

namespace disca::bench {

enum class Stage : std::uint8_t { kBaseFm = 0, kCfgDistilled = 1, kMeanFlow = 2, kPredictor = 3, kDiscriminator = 4 };

const char* to_string(Stage s);

using Digest = std::array<std::uint8_t, 32>;

std::string hex(const Digest& d);
Digest sha256(const std::uint8_t* data, std::size_t n);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Lineage {
  Stage stage;
  Digest digest;
};

/// Trained weights of one pipeline stage plus the parent they came from.
/// `config` is a JSON snapshot of the network config used to rebuild it.
struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  Stage stage = Stage::kBaseFm;
  std::optional<Lineage> parent;
  std::string config;
  ad::ParameterSet params;
};

// Parent stages each stage may descend from. The mean-velocity stage may skip
// guidance distillation when the task has no classes.
bool lineage_allowed(Stage child, std::optional<Stage> parent);

// Byte layout, little-endian:
//   "DISCACKP" | u32 version | u8 stage | u8 has_parent | [u8 parent stage | 32B parent digest]
//   | u64 config length | config bytes | u64 tensor count
//   | per tensor, name-sorted: u32 name length | name | u32 rank | u64 extents... | f64 data...
//   | 32B SHA-256 of everything before it
std::vector<std::uint8_t> serialize(const Checkpoint& c);
// Throws UnsupportedVersion, CorruptCheckpoint (bad magic, digest mismatch,
// truncation) or LineageError (stage order). Nothing is returned on failure.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

// Digest stored in the trailer, identifying this checkpoint as a parent.
Digest digest_of(const std::vector<std::uint8_t>& bytes);

// Writes atomically (temp file + rename) and returns the digest.
Digest save_checkpoint(const std::string& path, const Checkpoint& c);
// A missing file is a ConfigError; otherwise as deserialize.
Checkpoint load_checkpoint(const std::string& path, Digest* digest = nullptr);

// Throws LineageError unless `child` names `parent` (stage and digest) as its parent.
void require_parent(const Checkpoint& child, Stage parent_stage, const Digest& parent_digest);

}  // namespace disca::bench
