#include "faircal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "faircal/binary_io.hpp"
#include "faircal/error.hpp"

namespace faircal {

namespace {

constexpr std::string_view kEmbeddingMagic = "FCE1";
constexpr std::string_view kAttrPrefix = "attr:";

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw StructuralError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  double na = std::sqrt(squared_norm(a));
  double nb = std::sqrt(squared_norm(b));
  if (!(na > 0.0) || !(nb > 0.0)) throw StructuralError("cosine_similarity: zero-norm vector");
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  return cosine_similarity(a.vector, b.vector);
}

std::string subgroup_key(const PairRecord& p, std::span<const std::string> attribute_names) {
  std::string key;
  bool intergroup = false;
  for (const auto& name : attribute_names) {
    auto it = p.attributes.find(name);
    if (it == p.attributes.end()) throw StructuralError("unknown attribute '" + name + "'");
    const auto& [first, second] = it->second;
    if (first != second) intergroup = true;
    if (!key.empty()) key += '_';
    key += first;
  }
  if (intergroup) return std::string(kIntergroup);
  return key;
}

Dataset::Dataset(std::vector<Embedding> embeddings, std::vector<PairRecord> pairs,
                 std::vector<std::string> attribute_names)
    : embeddings_(std::move(embeddings)), attribute_names_(std::move(attribute_names)) {
  if (!embeddings_.empty()) dimension_ = embeddings_.front().vector.size();
  index_.reserve(embeddings_.size());
  for (std::size_t i = 0; i < embeddings_.size(); ++i) {
    const auto& e = embeddings_[i];
    if (e.vector.size() != dimension_) {
      throw StructuralError("embedding '" + e.id + "' has dimension " + std::to_string(e.vector.size()) +
                            ", expected " + std::to_string(dimension_));
    }
    double n2 = squared_norm(e.vector);
    if (!(n2 > 0.0) || !std::isfinite(n2)) {
      throw StructuralError("embedding '" + e.id + "' has zero or non-finite norm");
    }
    if (!index_.emplace(e.id, i).second) throw StructuralError("duplicate image id '" + e.id + "'");
  }

  report_.pairs_read = pairs.size();
  pairs_.reserve(pairs.size());
  int max_fold = -1;
  for (auto& p : pairs) {
    if (p.label != 0 && p.label != 1) {
      throw StructuralError("pair (" + p.id1 + "," + p.id2 + ") has label " + std::to_string(p.label));
    }
    if (p.fold < 0) throw StructuralError("negative fold index for pair (" + p.id1 + "," + p.id2 + ")");
    for (const auto& name : attribute_names_) {
      if (!p.attributes.contains(name)) {
        throw StructuralError("pair (" + p.id1 + "," + p.id2 + ") lacks attribute '" + name + "'");
      }
    }
    auto a = index_.find(p.id1);
    auto b = index_.find(p.id2);
    if (a == index_.end() || b == index_.end()) {
      ++report_.pairs_dropped;
      continue;
    }
    p.index1 = a->second;
    p.index2 = b->second;
    max_fold = std::max(max_fold, p.fold);
    pairs_.push_back(std::move(p));
  }
  fold_count_ = max_fold + 1;
  std::vector<bool> seen(static_cast<std::size_t>(fold_count_), false);
  for (const auto& p : pairs_) seen[static_cast<std::size_t>(p.fold)] = true;
  for (int f = 0; f < fold_count_; ++f) {
    if (!seen[static_cast<std::size_t>(f)]) {
      throw StructuralError("fold " + std::to_string(f) + " has no pairs (folds must be 0..F-1)");
    }
  }
}

const Embedding* Dataset::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &embeddings_[it->second];
}

double Dataset::score(std::size_t i) const {
  const auto& p = pairs_[i];
  return cosine_similarity(vector1(p), vector2(p));
}

std::vector<PairRecord> read_pairs_csv(const std::filesystem::path& path,
                                       std::vector<std::string>* attribute_names) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pair manifest " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty pair manifest " + path.string(), 1);
  auto header = split_commas(strip_cr(line));
  const std::vector<std::string_view> fixed = {"id1", "id2", "label", "fold"};
  if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin())) {
    throw ParseError("pair manifest header must start with id1,id2,label,fold", 1);
  }
  if ((header.size() - fixed.size()) % 2 != 0) {
    throw ParseError("attribute columns must come in per-image pairs", 1);
  }
  std::vector<std::string> names;
  for (std::size_t c = fixed.size(); c < header.size(); c += 2) {
    std::string_view h1 = header[c];
    std::string_view h2 = header[c + 1];
    if (!h1.starts_with(kAttrPrefix) || !h2.starts_with(kAttrPrefix) || h1.size() <= kAttrPrefix.size() + 1 ||
        h1.back() != '1' || h2.back() != '2' ||
        h1.substr(0, h1.size() - 1) != h2.substr(0, h2.size() - 1)) {
      throw ParseError("bad attribute column pair '" + std::string(h1) + "," + std::string(h2) + "'", 1);
    }
    names.emplace_back(h1.substr(kAttrPrefix.size(), h1.size() - kAttrPrefix.size() - 1));
  }

  std::vector<PairRecord> pairs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view row = strip_cr(line);
    if (row.empty()) continue;
    auto cells = split_commas(row);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " columns, got " +
                           std::to_string(cells.size()),
                       line_no);
    }
    PairRecord p;
    p.id1 = cells[0];
    p.id2 = cells[1];
    if (p.id1.empty() || p.id2.empty()) throw ParseError("empty image id", line_no);
    if (cells[2] == "0") {
      p.label = 0;
    } else if (cells[2] == "1") {
      p.label = 1;
    } else {
      throw ParseError("label must be literal 0 or 1", line_no);
    }
    if (!parse_number(cells[3], p.fold) || p.fold < 0) throw ParseError("bad fold index", line_no);
    for (std::size_t a = 0; a < names.size(); ++a) {
      p.attributes.emplace(names[a], std::pair<std::string, std::string>(cells[4 + 2 * a], cells[5 + 2 * a]));
    }
    pairs.push_back(std::move(p));
  }
  if (attribute_names != nullptr) *attribute_names = std::move(names);
  return pairs;
}

namespace {

std::vector<Embedding> read_embeddings_binary(std::istream& in) {
  binary::Reader r(in);
  r.expect_magic(kEmbeddingMagic);
  std::uint32_t dim = r.u32();
  std::uint64_t count = r.u64();
  std::vector<Embedding> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    Embedding e;
    e.id = r.short_string();
    e.vector.resize(dim);
    for (auto& v : e.vector) v = static_cast<double>(r.f32());
    out.push_back(std::move(e));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after embedding records", r.offset());
  return out;
}

std::vector<Embedding> read_embeddings_text(std::istream& in) {
  std::vector<Embedding> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view row = strip_cr(line);
    if (row.empty()) continue;
    auto cells = split_commas(row);
    if (cells.size() < 2) throw ParseError("embedding row needs an id and at least one value", line_no);
    Embedding e;
    e.id = cells[0];
    e.vector.reserve(cells.size() - 1);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_number(cells[c], v)) {
        throw ParseError("bad numeric value '" + std::string(cells[c]) + "'", line_no);
      }
      e.vector.push_back(v);
    }
    if (!out.empty() && out.front().vector.size() != e.vector.size()) {
      throw ParseError("inconsistent embedding dimension", line_no);
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

std::vector<Embedding> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  bool binary = in.gcount() == 4 && std::string_view(magic, 4) == kEmbeddingMagic;
  in.clear();
  in.seekg(0);
  return binary ? read_embeddings_binary(in) : read_embeddings_text(in);
}

Dataset load_dataset(const std::filesystem::path& pairs_path,
                     const std::filesystem::path& embeddings_path) {
  std::vector<std::string> names;
  auto pairs = read_pairs_csv(pairs_path, &names);
  auto embeddings = read_embeddings(embeddings_path);
  return Dataset(std::move(embeddings), std::move(pairs), std::move(names));
}

void write_pairs_csv(const std::filesystem::path& path, std::span<const PairRecord> pairs,
                     std::span<const std::string> attribute_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write pair manifest " + path.string());
  out << "id1,id2,label,fold";
  for (const auto& name : attribute_names) out << ",attr:" << name << "1,attr:" << name << "2";
  out << '\n';
  for (const auto& p : pairs) {
    out << p.id1 << ',' << p.id2 << ',' << p.label << ',' << p.fold;
    for (const auto& name : attribute_names) {
      auto it = p.attributes.find(name);
      if (it == p.attributes.end()) throw StructuralError("pair lacks attribute '" + name + "'");
      out << ',' << it->second.first << ',' << it->second.second;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_embeddings(const std::filesystem::path& path, std::span<const Embedding> embeddings,
                      EmbeddingFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write embedding file " + path.string());
  std::size_t dim = embeddings.empty() ? 0 : embeddings.front().vector.size();
  if (format == EmbeddingFormat::kBinary) {
    binary::Writer w(out);
    w.bytes(kEmbeddingMagic);
    w.u32(static_cast<std::uint32_t>(dim));
    w.u64(embeddings.size());
    for (const auto& e : embeddings) {
      if (e.vector.size() != dim) throw StructuralError("embedding '" + e.id + "' has inconsistent dimension");
      w.short_string(e.id);
      for (double v : e.vector) w.f32(static_cast<float>(v));
    }
  } else {
    char buf[32];
    for (const auto& e : embeddings) {
      out << e.id;
      for (double v : e.vector) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace faircal
