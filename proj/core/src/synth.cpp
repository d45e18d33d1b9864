#include "faircal/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <utility>

#include "faircal/error.hpp"

namespace faircal {

namespace {

constexpr int kMaxDrawAttempts = 10000;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_value(std::string_view key, std::string_view text) {
  text = trim(text);
  T out{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("synth spec: bad value '" + std::string(text) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  text = trim(text);
  if (text == "1" || text == "true" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "no") return false;
  throw ConfigError("synth spec: bad boolean '" + std::string(text) + "' for " + std::string(key));
}

SynthSubgroup parse_subgroup(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = text.find(',', start);
    parts.push_back(trim(text.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (parts.size() != 5) {
    throw ConfigError("synth spec: subgroup needs name,identity_count,images_per_identity,center_spread,intra_noise");
  }
  SynthSubgroup g;
  g.name = parts[0];
  g.identity_count = parse_value<int>("subgroup identity_count", parts[1]);
  g.images_per_identity = parse_value<int>("subgroup images_per_identity", parts[2]);
  g.center_spread = parse_value<double>("subgroup center_spread", parts[3]);
  g.intra_noise = parse_value<double>("subgroup intra_noise", parts[4]);
  return g;
}

// Uniform in (0, 1] from 53 random bits.
double uniform_open(std::mt19937_64& rng) { return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53; }

class Gaussian {
 public:
  explicit Gaussian(std::mt19937_64& rng) : rng_(rng) {}

  // Box-Muller; avoids depending on the library's normal_distribution.
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double r = std::sqrt(-2.0 * std::log(uniform_open(rng_)));
    double phi = 2.0 * std::numbers::pi * uniform_open(rng_);
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  std::mt19937_64& rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(static_cast<double>(rng() >> 11) * 0x1.0p-53 * static_cast<double>(n)));
}

void normalize_in_place(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}

}  // namespace

SynthSpec parse_synth_spec(std::string_view text) {
  SynthSpec spec;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find_first_of("\n;", start);
    std::string_view line = trim(text.substr(start, end == std::string_view::npos ? end : end - start));
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    if (line.empty() || line.front() == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("synth spec: expected key=value, got '" + std::string(line) + "'");
    std::string_view key = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    if (key == "dim") {
      spec.dim = parse_value<std::size_t>(key, value);
    } else if (key == "folds") {
      spec.folds = parse_value<int>(key, value);
    } else if (key == "seed") {
      spec.seed = parse_value<std::uint64_t>(key, value);
    } else if (key == "genuine_pairs_per_id") {
      spec.genuine_pairs_per_id = parse_value<int>(key, value);
    } else if (key == "imposter_pairs_per_id") {
      spec.imposter_pairs_per_id = parse_value<int>(key, value);
    } else if (key == "attribute") {
      spec.attribute = value;
    } else if (key == "inter_pairs") {
      spec.inter_pairs = parse_bool(key, value);
    } else if (key == "subgroup") {
      spec.subgroups.push_back(parse_subgroup(value));
    } else {
      throw ConfigError("synth spec: unknown key '" + std::string(key) + "'");
    }
  }
  return spec;
}

SynthSpec load_synth_spec(const std::string& arg) {
  if (arg.find('=') != std::string::npos) return parse_synth_spec(arg);
  std::ifstream in(arg);
  if (!in) throw IoError("cannot open synth spec " + arg);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_synth_spec(buf.str());
}

void validate(const SynthSpec& spec) {
  if (spec.subgroups.empty()) throw StructuralError("synth spec has no subgroups");
  if (spec.dim == 0) throw StructuralError("synth spec: dim must be >= 1");
  if (spec.folds < 1) throw StructuralError("synth spec: folds must be >= 1");
  if (spec.genuine_pairs_per_id < 0 || spec.imposter_pairs_per_id < 0) {
    throw StructuralError("synth spec: pair counts must be non-negative");
  }
  if (spec.attribute.empty() || spec.attribute.find(',') != std::string::npos) {
    throw StructuralError("synth spec: attribute name must be non-empty and comma-free");
  }
  std::set<std::string> names;
  for (const auto& g : spec.subgroups) {
    if (g.name.empty() || g.name.find(',') != std::string::npos || g.name == kIntergroup) {
      throw StructuralError("synth spec: bad subgroup name '" + g.name + "'");
    }
    if (!names.insert(g.name).second) throw StructuralError("synth spec: duplicate subgroup '" + g.name + "'");
    if (g.identity_count < 2) throw StructuralError("subgroup " + g.name + " needs at least 2 identities");
    if (!(g.intra_noise > 0.0)) throw StructuralError("subgroup " + g.name + " needs intra_noise > 0");
    if (!(g.center_spread >= 0.0)) throw StructuralError("subgroup " + g.name + " needs center_spread >= 0");
    if (g.images_per_identity < 1) throw StructuralError("subgroup " + g.name + " needs at least 1 image per identity");
    if (spec.genuine_pairs_per_id > 0 && g.images_per_identity < 2) {
      throw StructuralError("subgroup " + g.name + ": genuine pairs need at least 2 images per identity");
    }
    const long long distinct_genuine = static_cast<long long>(g.images_per_identity) * (g.images_per_identity - 1) / 2;
    if (spec.genuine_pairs_per_id > distinct_genuine) {
      throw StructuralError("subgroup " + g.name + ": more genuine pairs per identity than distinct image pairs");
    }
    if (spec.imposter_pairs_per_id > 0 && g.identity_count < 2 * spec.folds) {
      throw StructuralError("subgroup " + g.name + ": imposter pairs need at least 2 identities per fold (" +
                            std::to_string(2 * spec.folds) + " identities)");
    }
    if (spec.genuine_pairs_per_id + spec.imposter_pairs_per_id == 0) {
      throw StructuralError("synth spec: no pairs requested");
    }
  }
}

Dataset generate(const SynthSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  Gaussian normal(rng);
  const std::size_t d = spec.dim;

  std::vector<Embedding> embeddings;
  // image_base[g][i] = index of identity i's first image
  std::vector<std::vector<std::size_t>> image_base(spec.subgroups.size());
  for (std::size_t g = 0; g < spec.subgroups.size(); ++g) {
    const auto& sub = spec.subgroups[g];
    std::vector<double> anchor(d);
    for (double& x : anchor) x = normal();
    normalize_in_place(anchor);
    for (int i = 0; i < sub.identity_count; ++i) {
      image_base[g].push_back(embeddings.size());
      std::vector<double> center(d);
      for (std::size_t k = 0; k < d; ++k) center[k] = anchor[k] + sub.center_spread * normal();
      normalize_in_place(center);
      for (int j = 0; j < sub.images_per_identity; ++j) {
        std::vector<double> v(d);
        for (std::size_t k = 0; k < d; ++k) v[k] = center[k] + sub.intra_noise * normal();
        normalize_in_place(v);
        for (double& x : v) x = static_cast<double>(static_cast<float>(x));
        embeddings.push_back({sub.name + "_" + std::to_string(i) + "_" + std::to_string(j), std::move(v)});
      }
    }
  }

  const int folds = spec.folds;
  auto tag = [&](PairRecord& p, std::size_t g1, std::size_t g2) {
    p.attributes.emplace(spec.attribute, std::pair(spec.subgroups[g1].name, spec.subgroups[g2].name));
  };

  std::vector<PairRecord> pairs;
  std::set<std::pair<std::size_t, std::size_t>> used;
  // Draws until the unordered image pair is new; false when none is found.
  auto draw = [&](auto&& sample) {
    for (int attempt = 0; attempt < kMaxDrawAttempts; ++attempt) {
      auto [x, y] = sample();
      if (used.emplace(std::min(x, y), std::max(x, y)).second) return std::pair(x, y);
    }
    throw StructuralError("synth spec: cannot draw enough distinct pairs");
  };
  for (std::size_t g = 0; g < spec.subgroups.size(); ++g) {
    const auto& sub = spec.subgroups[g];
    const auto images = static_cast<std::size_t>(sub.images_per_identity);
    for (int i = 0; i < sub.identity_count; ++i) {
      const int fold = i % folds;
      const auto id = static_cast<std::size_t>(i);
      for (int n = 0; n < spec.genuine_pairs_per_id; ++n) {
        auto [x, y] = draw([&] {
          std::size_t a = uniform_index(rng, images);
          std::size_t b = uniform_index(rng, images - 1);
          if (b >= a) ++b;
          return std::pair(image_base[g][id] + a, image_base[g][id] + b);
        });
        PairRecord p{embeddings[x].id, embeddings[y].id, 1, fold, {}, 0, 0};
        tag(p, g, g);
        pairs.push_back(std::move(p));
      }
      // Same-subgroup identities in this fold, other than i.
      std::vector<std::size_t> partners;
      for (int o = fold; o < sub.identity_count; o += folds) {
        if (o != i) partners.push_back(static_cast<std::size_t>(o));
      }
      for (int n = 0; n < spec.imposter_pairs_per_id; ++n) {
        auto [x, y] = draw([&] {
          std::size_t other = partners[uniform_index(rng, partners.size())];
          std::size_t a = uniform_index(rng, images);
          std::size_t b = uniform_index(rng, images);
          return std::pair(image_base[g][id] + a, image_base[g][other] + b);
        });
        PairRecord p{embeddings[x].id, embeddings[y].id, 0, fold, {}, 0, 0};
        tag(p, g, g);
        pairs.push_back(std::move(p));
      }
      if (!spec.inter_pairs || spec.subgroups.size() < 2) continue;
      for (int n = 0; n < spec.imposter_pairs_per_id; ++n) {
        std::size_t h = uniform_index(rng, spec.subgroups.size() - 1);
        if (h >= g) ++h;
        const auto& other_sub = spec.subgroups[h];
        if (other_sub.identity_count <= fold) continue;
        std::size_t slots = static_cast<std::size_t>((other_sub.identity_count - 1 - fold) / folds + 1);
        auto [x, y] = draw([&] {
          std::size_t other =
              static_cast<std::size_t>(fold) + uniform_index(rng, slots) * static_cast<std::size_t>(folds);
          std::size_t a = uniform_index(rng, images);
          std::size_t b = uniform_index(rng, static_cast<std::size_t>(other_sub.images_per_identity));
          return std::pair(image_base[g][id] + a, image_base[h][other] + b);
        });
        PairRecord p{embeddings[x].id, embeddings[y].id, 0, fold, {}, 0, 0};
        tag(p, g, h);
        pairs.push_back(std::move(p));
      }
    }
  }
  return Dataset(std::move(embeddings), std::move(pairs), {spec.attribute});
}

}  // namespace faircal
