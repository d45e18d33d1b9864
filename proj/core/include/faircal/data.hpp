#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace faircal {

/// Subgroup label returned for pairs whose images disagree on any attribute.
inline constexpr std::string_view kIntergroup = "INTERGROUP";

struct Embedding {
  std::string id;
  std::vector<double> vector;
};

struct PairRecord {
  std::string id1;
  std::string id2;
  int label = 0;  // 1 genuine, 0 imposter
  int fold = 0;
  /// attribute name -> (category of image 1, category of image 2)
  std::map<std::string, std::pair<std::string, std::string>> attributes;
  // Positions of id1/id2 in Dataset::embeddings, resolved at load.
  std::size_t index1 = 0;
  std::size_t index2 = 0;
};

struct LoadReport {
  std::size_t pairs_read = 0;
  std::size_t pairs_dropped = 0;
};

/// Immutable after construction; safe to share across threads for reading.
class Dataset {
 public:
  Dataset() = default;

  /// Validates and indexes the inputs. Pairs referencing unknown ids are
  /// dropped and counted in load_report(). Throws StructuralError on
  /// dimension mismatch, zero-norm vectors, duplicate ids, bad labels or
  /// folds that never appear.
  Dataset(std::vector<Embedding> embeddings, std::vector<PairRecord> pairs,
          std::vector<std::string> attribute_names);

  const std::vector<Embedding>& embeddings() const noexcept { return embeddings_; }
  const std::vector<PairRecord>& pairs() const noexcept { return pairs_; }
  const std::vector<std::string>& attribute_names() const noexcept { return attribute_names_; }
  int fold_count() const noexcept { return fold_count_; }
  std::size_t dimension() const noexcept { return dimension_; }
  const LoadReport& load_report() const noexcept { return report_; }

  /// Returns nullptr when the id is unknown.
  const Embedding* find(std::string_view id) const;

  std::span<const double> vector1(const PairRecord& p) const { return embeddings_[p.index1].vector; }
  std::span<const double> vector2(const PairRecord& p) const { return embeddings_[p.index2].vector; }

  /// Cosine similarity of the pair at position i.
  double score(std::size_t i) const;

 private:
  std::vector<Embedding> embeddings_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<PairRecord> pairs_;
  std::vector<std::string> attribute_names_;
  int fold_count_ = 0;
  std::size_t dimension_ = 0;
  LoadReport report_;
};

/// f.g / (|f| |g|), clamped to [-1, 1]. Throws StructuralError on dimension
/// mismatch or a zero-norm argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const Embedding& a, const Embedding& b);

/// Joint category ("Asian_F") when both images agree on every named attribute,
/// kIntergroup otherwise.
std::string subgroup_key(const PairRecord& p, std::span<const std::string> attribute_names);

enum class EmbeddingFormat { kBinary, kText };

Dataset load_dataset(const std::filesystem::path& pairs_path,
                     const std::filesystem::path& embeddings_path);

/// Parses a pair manifest. The returned records are unresolved (indices unset).
std::vector<PairRecord> read_pairs_csv(const std::filesystem::path& path,
                                       std::vector<std::string>* attribute_names);

/// Detects the binary format by its magic and falls back to text.
std::vector<Embedding> read_embeddings(const std::filesystem::path& path);

void write_pairs_csv(const std::filesystem::path& path, std::span<const PairRecord> pairs,
                     std::span<const std::string> attribute_names);
void write_embeddings(const std::filesystem::path& path, std::span<const Embedding> embeddings,
                      EmbeddingFormat format = EmbeddingFormat::kBinary);

}  // namespace faircal
