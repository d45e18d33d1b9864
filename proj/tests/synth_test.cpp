#include <gtest/gtest.h>

#include <map>
#include <set>

#include "faircal/error.hpp"
#include "faircal/metrics.hpp"
#include "faircal/synth.hpp"
#include "support.hpp"

namespace faircal {
namespace {

std::string identity_of(const std::string& image_id) { return image_id.substr(0, image_id.rfind('_')); }

TEST(Synth, TinySpecLabelsFollowIdentity) {
  SynthSpec spec;
  spec.subgroups = {{"g", 2, 3, 0.2, 0.1}};
  spec.dim = 8;
  spec.genuine_pairs_per_id = 1;
  spec.imposter_pairs_per_id = 1;
  spec.folds = 1;
  Dataset ds = generate(spec);
  EXPECT_GE(ds.pairs().size(), 2u);
  for (const auto& p : ds.pairs()) {
    EXPECT_EQ(p.label == 1, identity_of(p.id1) == identity_of(p.id2));
    EXPECT_NE(p.id1, p.id2);
  }
}

TEST(Synth, FoldsAreDisjointByIdentity) {
  Dataset ds = generate(testing::small_synth_spec());
  std::map<std::string, int> fold_of;
  for (const auto& p : ds.pairs()) {
    for (const auto& id : {p.id1, p.id2}) {
      auto [it, inserted] = fold_of.emplace(identity_of(id), p.fold);
      EXPECT_EQ(it->second, p.fold) << id;
    }
  }
  EXPECT_EQ(ds.fold_count(), 5);
}

TEST(Synth, ImpostersStayInSubgroupUnlessRequested) {
  SynthSpec spec = testing::small_synth_spec();
  Dataset plain = generate(spec);
  for (const auto& p : plain.pairs()) {
    const auto& [g1, g2] = p.attributes.at("ethnicity");
    EXPECT_EQ(g1, g2);
  }
  spec.inter_pairs = true;
  Dataset mixed = generate(spec);
  std::size_t inter = 0;
  for (const auto& p : mixed.pairs()) {
    const auto& [g1, g2] = p.attributes.at("ethnicity");
    if (g1 != g2) {
      ++inter;
      EXPECT_EQ(p.label, 0);
    }
  }
  EXPECT_GT(inter, 0u);
}

TEST(Synth, PairsAreDistinct) {
  SynthSpec spec = testing::small_synth_spec();
  spec.inter_pairs = true;
  spec.genuine_pairs_per_id = 15;  // every image pair of a 6-image identity
  Dataset ds = generate(spec);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : ds.pairs()) {
    EXPECT_TRUE(seen.emplace(std::min(p.id1, p.id2), std::max(p.id1, p.id2)).second) << p.id1 << " " << p.id2;
  }
}

TEST(Synth, DeterministicFiles) {
  testing::TempDir dir;
  for (int run = 0; run < 2; ++run) {
    Dataset ds = generate(testing::small_synth_spec());
    write_pairs_csv(dir / ("p" + std::to_string(run)), ds.pairs(), ds.attribute_names());
    write_embeddings(dir / ("e" + std::to_string(run)), ds.embeddings());
  }
  EXPECT_EQ(testing::slurp(dir / "p0"), testing::slurp(dir / "p1"));
  EXPECT_EQ(testing::slurp(dir / "e0"), testing::slurp(dir / "e1"));

  Dataset other = generate(testing::small_synth_spec(5, 4));
  write_embeddings(dir / "e2", other.embeddings());
  EXPECT_NE(testing::slurp(dir / "e0"), testing::slurp(dir / "e2"));
}

TEST(Synth, VanishingNoiseGivesPerfectGenuines) {
  SynthSpec spec;
  spec.subgroups = {{"g", 6, 4, 0.3, 1e-12}};
  spec.dim = 16;
  spec.genuine_pairs_per_id = 3;
  spec.imposter_pairs_per_id = 0;
  spec.folds = 2;
  Dataset ds = generate(spec);
  // Values are stored at float precision.
  for (std::size_t i = 0; i < ds.pairs().size(); ++i) EXPECT_NEAR(ds.score(i), 1.0, 1e-6);
}

TEST(Synth, NoiseDrivesFprDisparity) {
  SynthSpec spec;
  spec.subgroups = {{"low", 50, 10, 0.125, 0.05}, {"high", 50, 10, 0.125, 0.30}};
  spec.dim = 64;
  spec.genuine_pairs_per_id = 10;
  spec.imposter_pairs_per_id = 20;
  spec.folds = 5;
  spec.seed = 42;
  Dataset ds = generate(spec);
  LabeledConfidences data;
  for (std::size_t i = 0; i < ds.pairs().size(); ++i) {
    data.push_back(ds.score(i), ds.pairs()[i].label, subgroup_key(ds.pairs()[i], ds.attribute_names()));
  }
  double t = threshold_at_fpr(data.values, data.labels, 0.05);
  auto fpr = subgroup_rates(data, t, ErrorRate::kFpr);
  ASSERT_TRUE(fpr.at("low") && fpr.at("high"));
  double lo = std::min(*fpr.at("low"), *fpr.at("high"));
  double hi = std::max(*fpr.at("low"), *fpr.at("high"));
  EXPECT_GT(hi, 2.0 * lo) << "low=" << *fpr.at("low") << " high=" << *fpr.at("high");
}

TEST(SynthSpecText, ParsesFileAndInlineForms) {
  std::string text =
      "# benchmark\n"
      "dim = 32\n"
      "folds=4\n"
      "seed=7\n"
      "genuine_pairs_per_id=2\n"
      "imposter_pairs_per_id=3\n"
      "attribute=race\n"
      "inter_pairs=true\n"
      "subgroup=a,10,4,0.1,0.2\n"
      "subgroup=b, 12, 5, 0.15, 0.3\n";
  SynthSpec spec = parse_synth_spec(text);
  EXPECT_EQ(spec.dim, 32u);
  EXPECT_EQ(spec.folds, 4);
  EXPECT_EQ(spec.seed, 7u);
  EXPECT_EQ(spec.genuine_pairs_per_id, 2);
  EXPECT_EQ(spec.imposter_pairs_per_id, 3);
  EXPECT_EQ(spec.attribute, "race");
  EXPECT_TRUE(spec.inter_pairs);
  ASSERT_EQ(spec.subgroups.size(), 2u);
  EXPECT_EQ(spec.subgroups[1].name, "b");
  EXPECT_EQ(spec.subgroups[1].identity_count, 12);
  EXPECT_DOUBLE_EQ(spec.subgroups[1].intra_noise, 0.3);

  SynthSpec inline_spec = load_synth_spec("dim=8;folds=2;subgroup=x,4,2,0.1,0.1");
  EXPECT_EQ(inline_spec.dim, 8u);
  EXPECT_EQ(inline_spec.subgroups.size(), 1u);

  EXPECT_THROW(parse_synth_spec("colour=blue"), ConfigError);
  EXPECT_THROW(parse_synth_spec("dim=abc"), ConfigError);
  EXPECT_THROW(parse_synth_spec("subgroup=a,1,2"), ConfigError);
  EXPECT_THROW(load_synth_spec("/nonexistent/spec.txt"), IoError);
}

TEST(SynthSpecText, RejectsInfeasibleSpecs) {
  SynthSpec spec = testing::small_synth_spec();
  spec.subgroups[0].intra_noise = 0.0;
  EXPECT_THROW(generate(spec), StructuralError);
  spec = testing::small_synth_spec();
  spec.subgroups[0].identity_count = 1;
  EXPECT_THROW(generate(spec), StructuralError);
  spec = testing::small_synth_spec();
  spec.subgroups[0].identity_count = 6;  // fewer than 2 per fold
  EXPECT_THROW(generate(spec), StructuralError);
  spec = testing::small_synth_spec();
  spec.subgroups[0].images_per_identity = 1;
  EXPECT_THROW(generate(spec), StructuralError);
  spec = testing::small_synth_spec();
  spec.genuine_pairs_per_id = 16;
  EXPECT_THROW(generate(spec), StructuralError);
  spec = testing::small_synth_spec();
  spec.subgroups.push_back(spec.subgroups[0]);
  EXPECT_THROW(generate(spec), StructuralError);
}

}  // namespace
}  // namespace faircal
