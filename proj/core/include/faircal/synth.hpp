#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "faircal/data.hpp"

namespace faircal {

struct SynthSubgroup {
  std::string name;
  int identity_count = 0;
  int images_per_identity = 0;
  /// Per-dimension std of identity centers around the subgroup anchor.
  double center_spread = 0.0;
  /// Per-dimension std of image noise around the identity center.
  double intra_noise = 0.0;
};

struct SynthSpec {
  std::vector<SynthSubgroup> subgroups;
  std::size_t dim = 64;
  int genuine_pairs_per_id = 4;
  int imposter_pairs_per_id = 4;
  int folds = 5;
  std::uint64_t seed = 42;
  /// Attribute that carries the subgroup name in the pair manifest.
  std::string attribute = "ethnicity";
  /// Add cross-subgroup imposter pairs as well.
  bool inter_pairs = false;
};

/// Parses `key=value` lines (or `;`-separated entries). Keys: dim, folds,
/// seed, genuine_pairs_per_id, imposter_pairs_per_id, attribute,
/// inter_pairs, and repeated
/// `subgroup=name,identity_count,images_per_identity,center_spread,intra_noise`.
/// Blank lines and `#` comments are ignored.
SynthSpec parse_synth_spec(std::string_view text);

/// Reads a spec file, or parses `arg` inline when it contains '='.
SynthSpec load_synth_spec(const std::string& arg);

/// Throws StructuralError when the spec cannot be generated.
void validate(const SynthSpec& spec);

/// Seeded synthetic verification dataset. Each subgroup has a random unit
/// anchor; identity centers are normalize(anchor + N(0, spread^2 I)) and images
/// normalize(center + N(0, noise^2 I)). Identities are dealt round-robin into
/// folds and every pair stays inside one fold. No image pair is drawn twice.
/// Embedding values are rounded to float precision so the in-memory dataset
/// equals its binary file.
Dataset generate(const SynthSpec& spec);

}  // namespace faircal
