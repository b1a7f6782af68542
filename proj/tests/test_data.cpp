#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "osdg/data.hpp"
#include "osdg/error.hpp"
#include "osdg/image_io.hpp"

using namespace osdg;
using namespace osdg::data;
namespace fs = std::filesystem;

namespace {

SyntheticSpec two_domain_spec(std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.domains = default_domains();
  spec.domains.resize(2);
  spec.seed = seed;
  return spec;
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::set<std::string> ids(const Dataset& ds) {
  std::set<std::string> out;
  for (const auto& s : ds.samples) out.insert(s.id);
  return out;
}

}  // namespace

TEST(Synthetic, Counts) {
  const auto ds = generate_synthetic(two_domain_spec());
  EXPECT_EQ(ds.samples.size(), 350u);
  for (const auto& s : ds.samples) {
    ASSERT_TRUE(s.mask);
    EXPECT_EQ(s.mask->shape(), (Shape{32, 32}));
    for (float v : s.mask->storage()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
  }
  int unknown = 0;
  for (const auto& s : ds.samples) unknown += s.label == ds.labels.unknown_token();
  EXPECT_EQ(unknown, 3 * 2 * 25);
  EXPECT_EQ(ds.labels.known_classes(), (std::vector<std::string>{"circle", "square", "triangle", "cross"}));
}

TEST(Synthetic, SameSeedSameBytes) {
  const auto a = generate_synthetic(two_domain_spec(4)), b = generate_synthetic(two_domain_spec(4));
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].image.storage(), b.samples[i].image.storage());
    EXPECT_EQ(a.samples[i].id, b.samples[i].id);
  }
  const auto c = generate_synthetic(two_domain_spec(5));
  EXPECT_NE(a.samples[0].image.storage(), c.samples[0].image.storage());
}

TEST(Synthetic, MasksCoverTheShape) {
  const auto ds = generate_synthetic(two_domain_spec());
  for (const auto& s : ds.samples) {
    double fg = 0;
    for (float v : s.mask->storage()) fg += v;
    const double frac = fg / s.mask->size();
    EXPECT_GT(frac, 0.03) << s.id;
    EXPECT_LT(frac, 0.8) << s.id;
  }
}

// The two source recipes must be separable by pixel statistics (0.05 mean
// absolute channel difference is the floor); the held-out recipe shifts
// texture only, so every recipe must use its own texture family.
TEST(Synthetic, DomainsDifferInStyle) {
  SyntheticSpec spec;
  spec.domains = default_domains();
  std::set<Texture> textures;
  for (const auto& d : spec.domains) textures.insert(d.texture);
  EXPECT_EQ(textures.size(), spec.domains.size());
  spec.domains.resize(2);
  EXPECT_GE(min_domain_colour_gap(generate_synthetic(spec)), 0.05);
}

TEST(Synthetic, InvalidSpecs) {
  auto s = two_domain_spec();
  s.unknown_classes.push_back("circle");
  EXPECT_THROW(validate_spec(s), ConfigError);
  s = two_domain_spec();
  s.domains.resize(1);
  EXPECT_THROW(validate_spec(s), ConfigError);
  s = two_domain_spec();
  s.known_classes.push_back("hexagon");
  EXPECT_THROW(validate_spec(s), ConfigError);
  s = two_domain_spec();
  s.image_size = 0;
  EXPECT_THROW(validate_spec(s), ConfigError);
}

TEST(Manifest, WriteScanReload) {
  auto spec = two_domain_spec();
  spec.samples_per_class_per_domain = 3;
  spec.image_size = 16;
  const auto ds = generate_synthetic(spec);
  const auto root = fresh_dir("osdg_manifest_test");
  write_dataset(ds, root);

  EXPECT_EQ(list_domains(root), (std::vector<std::string>{"checker", "stripes"}));
  DatasetManifest m;
  m.root = root;
  m.load_masks = true;
  const auto split = load_manifest(m, {"stripes"});
  EXPECT_EQ(split.labels.size(), 4);
  EXPECT_EQ(split.source.samples.size(), 4u * 3);
  for (const auto& s : split.source.samples) EXPECT_TRUE(split.labels.is_known(s.label));
  ASSERT_EQ(split.targets.size(), 1u);
  EXPECT_EQ(split.target_domains, (std::vector<std::string>{"checker"}));
  EXPECT_EQ(split.targets[0].samples.size(), 7u * 3);
  std::set<std::string> target_classes;
  for (const auto& s : split.targets[0].samples) target_classes.insert(s.class_name);
  EXPECT_EQ(target_classes.size(), 7u);

  // Pixels survive the PNG round trip to 8-bit precision, masks exactly.
  for (const auto& s : split.source.samples) {
    const auto it = std::find_if(ds.samples.begin(), ds.samples.end(), [&](const auto& o) { return o.id == s.id; });
    ASSERT_NE(it, ds.samples.end()) << s.id;
    for (std::size_t i = 0; i < s.image.size(); ++i) ASSERT_NEAR(s.image[i], it->image[i], 0.5 / 255 + 1e-6);
    ASSERT_TRUE(s.mask);
    EXPECT_EQ(s.mask->storage(), it->mask->storage());
  }

  const auto index = root / "index.jsonl";
  write_index(split.targets[0], root, index);
  const auto back = read_index(index, root, split.labels, 0);
  EXPECT_EQ(ids(back), ids(split.targets[0]));
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].label, split.targets[0].samples[i].label);
    EXPECT_EQ(back.samples[i].image.storage(), split.targets[0].samples[i].image.storage());
  }
  fs::remove_all(root);
}

TEST(Manifest, PacsStyleLayout) {
  const auto root = fresh_dir("osdg_pacs_test");
  const std::vector<std::string> known = {"dog", "elephant", "giraffe", "guitar"};
  const std::vector<std::string> all = {"dog", "elephant", "giraffe", "guitar", "horse", "house", "person"};
  {
    std::ofstream f(root / "classes.txt");
    for (const auto& k : known) f << k << '\n';
  }
  Image img({3, 8, 8}, 0.5f);
  for (const auto* d : {"art_painting", "cartoon", "photo", "sketch"})
    for (const auto& c : all) {
      fs::create_directories(root / d / c);
      io::write_png(root / d / c / "img0.png", img);
    }
  DatasetManifest m;
  m.root = root;
  const auto split = load_manifest(m, {"art_painting"});
  std::set<std::string> src_classes;
  for (const auto& s : split.source.samples) src_classes.insert(s.class_name);
  EXPECT_EQ(src_classes.size(), 4u);
  ASSERT_EQ(split.targets.size(), 3u);
  for (const auto& t : split.targets) {
    std::set<std::string> cls;
    int unknown = 0;
    for (const auto& s : t.samples) {
      cls.insert(s.class_name);
      unknown += s.label == split.labels.unknown_token();
    }
    EXPECT_EQ(cls.size(), 7u);
    EXPECT_EQ(unknown, 3);
  }
  fs::remove_all(root);
}

TEST(Manifest, EmptyDomainAndMissingSidecar) {
  const auto root = fresh_dir("osdg_empty_test");
  {
    std::ofstream f(root / "classes.txt");
    f << "a\nb\n";
  }
  fs::create_directories(root / "src" / "a");
  fs::create_directories(root / "src" / "b");
  io::write_png(root / "src" / "a" / "x.png", Image({3, 4, 4}, 0.2f));
  io::write_png(root / "src" / "b" / "y.png", Image({3, 4, 4}, 0.2f));
  fs::create_directories(root / "empty" / "a");
  DatasetManifest m;
  m.root = root;
  EXPECT_THROW(load_manifest(m, {"src"}), DataError);
  fs::remove_all(root / "empty");
  EXPECT_NO_THROW(load_manifest(m, {"src"}));
  m.require_masks = true;
  m.load_masks = true;
  EXPECT_THROW(load_manifest(m, {"src"}), DataError);
  m.require_masks = m.load_masks = false;
  EXPECT_THROW(load_manifest(m, {"nowhere"}), DataError);
  fs::remove_all(root);
}

TEST(Normalization, MeanStdAndApply) {
  SampleRecord a, b;
  a.image = Image({3, 1, 2}, std::vector<float>{0, 1, 0.5f, 0.5f, 0.2f, 0.2f});
  b.image = Image({3, 1, 2}, std::vector<float>{0, 1, 0.5f, 0.5f, 0.4f, 0.4f});
  const auto n = compute_normalization({a, b});
  EXPECT_NEAR(n.mean[0], 0.5f, 1e-6f);
  EXPECT_NEAR(n.std[0], 0.5f, 1e-6f);
  EXPECT_NEAR(n.mean[2], 0.3f, 1e-6f);
  EXPECT_NEAR(n.std[2], 0.1f, 1e-6f);
  // A constant channel must not divide by zero.
  EXPECT_TRUE(std::isfinite(normalize(a.image, n).at(1, 0, 0)));
  EXPECT_NEAR(normalize(a.image, n).at(0, 0, 1), 1.0f, 1e-6f);
}

TEST(Split, StratifiedAndSeeded) {
  const auto ds = generate_synthetic(two_domain_spec());
  std::vector<SampleRecord> known;
  for (const auto& s : ds.samples)
    if (ds.labels.is_known(s.label)) known.push_back(s);
  const auto [train, val] = stratified_split(known, 0.1, 3);
  EXPECT_EQ(train.size() + val.size(), known.size());
  std::map<int, int> per;
  for (const auto& s : val) ++per[s.label];
  for (int k = 0; k < 4; ++k) EXPECT_EQ(per[k], 5);
  const auto [train2, val2] = stratified_split(known, 0.1, 3);
  for (std::size_t i = 0; i < val.size(); ++i) EXPECT_EQ(val[i].id, val2[i].id);
  const auto none = stratified_split(known, 0.0, 3);
  EXPECT_TRUE(none.second.empty());
}
