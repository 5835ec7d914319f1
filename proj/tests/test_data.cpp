#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "caseforge/data/dataset.hpp"
#include "caseforge/data/grayscale.hpp"
#include "caseforge/data/sampler.hpp"

using namespace caseforge;
namespace fs = std::filesystem;

namespace {

GeneratorConfig tiny_config() {
  GeneratorConfig c;
  c.ids_train = 4;
  c.ids_test = 4;
  c.clothing_variants_test = 3;
  c.poses = 3;
  c.views = 2;
  c.image_h = 24;
  c.image_w = 12;
  c.delta_shape = 0.15;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Tensor<float> random_image(Rng& rng, int h = 6, int w = 5) {
  Tensor<float> img({h, w, 3});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(rng.uniform());
  return img;
}

}  // namespace

// -------------------------------------------------------------------------
// grayscale
// -------------------------------------------------------------------------

TEST(Grayscale, EqualChannelsAreFixedPoint) {
  Tensor<float> img({1, 1, 3}, {0.5f, 0.5f, 0.5f});
  auto g = to_grayscale(img);
  EXPECT_EQ(g[0], 0.5f);
  EXPECT_EQ(g[1], 0.5f);
  EXPECT_EQ(g[2], 0.5f);
}

TEST(Grayscale, Bt601Weights) {
  Tensor<float> img({1, 1, 3}, {1.0f, 0.0f, 0.0f});
  auto g = to_grayscale(img);
  EXPECT_FLOAT_EQ(g[0], 0.299f);
  Tensor<float> img2({1, 1, 3}, {0.0f, 1.0f, 0.0f});
  EXPECT_FLOAT_EQ(to_grayscale(img2)[0], 0.587f);
  Tensor<float> img3({1, 1, 3}, {0.0f, 0.0f, 1.0f});
  EXPECT_FLOAT_EQ(to_grayscale(img3)[0], 0.114f);
}

TEST(Grayscale, MatchesWeightedSumOracleExactly) {
  Rng rng(101);
  auto img = random_image(rng, 9, 7);
  auto g = to_grayscale(img);
  for (int64_t i = 0; i < 9 * 7; ++i) {
    const float r = img[3 * i], gg = img[3 * i + 1], b = img[3 * i + 2];
    const float expect = (r == gg && gg == b)
                             ? r
                             : std::min(1.0f, std::max(0.0f, 0.299f * r + 0.587f * gg + 0.114f * b));
    EXPECT_EQ(g[3 * i], expect);
    EXPECT_EQ(g[3 * i + 1], g[3 * i]);  // three identical channels
    EXPECT_EQ(g[3 * i + 2], g[3 * i]);
    EXPECT_GE(g[3 * i], 0.0f);
    EXPECT_LE(g[3 * i], 1.0f);
  }
}

TEST(Grayscale, Idempotent) {
  Rng rng(102);
  for (int trial = 0; trial < 20; ++trial) {
    auto img = random_image(rng);
    auto once = to_grayscale(img);
    auto twice = to_grayscale(once);
    EXPECT_TRUE(once == twice);
  }
}

// -------------------------------------------------------------------------
// palette / sprites
// -------------------------------------------------------------------------

TEST(Palette, IsoLuminantAcrossIndices) {
  for (int i = 0; i < 128; ++i) {
    auto c = iso_luma_color(i, 128, 0.45);
    EXPECT_NEAR(luma(c), 0.45f, 1e-4) << "index " << i;
  }
}

TEST(Palette, ColorsAreDistinct) {
  auto a = iso_luma_color(0, 16, 0.45);
  auto b = iso_luma_color(5, 16, 0.45);
  const double d = std::abs(a.r - b.r) + std::abs(a.g - b.g) + std::abs(a.b - b.b);
  EXPECT_GT(d, 0.1);
}

TEST(Sprite, DeterministicAndInRange) {
  ShapeParams sp{0.3, 0.7, 0.5, 0.2, 0.6};
  SpriteStyle st{iso_luma_color(2, 16, 0.45), iso_luma_color(9, 16, 0.32), false};
  Rng n1(5), n2(5);
  auto a = render_sprite(sp, st, 1, 4, 2, 32, 16, 0.05, n1);
  auto b = render_sprite(sp, st, 1, 4, 2, 32, 16, 0.05, n2);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.shape(), Shape({32, 16, 3}));
  for (int64_t i = 0; i < a.numel(); ++i) {
    ASSERT_GE(a[i], 0.0f);
    ASSERT_LE(a[i], 1.0f);
  }
}

TEST(Sprite, ShapeParamsChangeSilhouette) {
  SpriteStyle st{iso_luma_color(2, 16, 0.45), iso_luma_color(9, 16, 0.32), false};
  Rng n1(5), n2(5);
  auto a = render_sprite({0.1, 0.1, 0.1, 0.1, 0.1}, st, 0, 4, 0, 32, 16, 0.0, n1);
  auto b = render_sprite({0.9, 0.9, 0.9, 0.9, 0.9}, st, 0, 4, 0, 32, 16, 0.0, n2);
  double diff = 0;
  for (int64_t i = 0; i < a.numel(); ++i) diff += std::abs(a[i] - b[i]);
  EXPECT_GT(diff / a.numel(), 0.01);
}

// -------------------------------------------------------------------------
// generate / load
// -------------------------------------------------------------------------

TEST(Generate, ManifestInvariantsHold) {
  auto dir = fresh_dir("cf_gen_inv");
  auto m = generate_dataset(tiny_config(), 7, dir);

  std::set<int> train_ids, test_ids;
  std::map<int, std::set<int>> test_clothing;
  for (const auto& s : m.samples) {
    if (s.split == Split::train)
      train_ids.insert(s.identity_id);
    else {
      test_ids.insert(s.identity_id);
      test_clothing[s.identity_id].insert(s.clothing_id);
    }
  }
  for (int id : train_ids) EXPECT_EQ(test_ids.count(id), 0u);
  for (const auto& [id, c] : test_clothing) EXPECT_GE(c.size(), 2u);

  auto counts = m.counts();
  EXPECT_EQ(counts["train"], 4 * 3 * 2);
  EXPECT_EQ(counts["query"], 4 * 3);               // one per (identity, clothing)
  EXPECT_EQ(counts["gallery"], 4 * 3 * (3 * 2 - 1));
  fs::remove_all(dir);
}

TEST(Generate, DeterministicByteIdentical) {
  auto d1 = fresh_dir("cf_gen_det1");
  auto d2 = fresh_dir("cf_gen_det2");
  auto m1 = generate_dataset(tiny_config(), 3, d1);
  auto m2 = generate_dataset(tiny_config(), 3, d2);
  EXPECT_EQ(read_text_file(d1 / "manifest.json"), read_text_file(d2 / "manifest.json"));
  for (const auto& s : m1.samples) {
    EXPECT_EQ(read_file_bytes(d1 / s.file), read_file_bytes(d2 / s.file)) << s.file;
  }
  // different seed must differ
  auto d3 = fresh_dir("cf_gen_det3");
  generate_dataset(tiny_config(), 4, d3);
  EXPECT_NE(read_text_file(d1 / "manifest.json"), read_text_file(d3 / "manifest.json"));
  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove_all(d3);
}

TEST(Generate, UnsatisfiableConfigNamesBound) {
  auto dir = fresh_dir("cf_gen_unsat");
  auto cfg = tiny_config();
  cfg.delta_shape = 0.9;  // grid capacity 2^5 = 32
  cfg.ids_train = 40;
  cfg.ids_test = 4;
  try {
    generate_dataset(cfg, 1, dir);
    FAIL() << "expected unsatisfiable_config";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unsatisfiable_config);
    EXPECT_NE(std::string(e.what()).find("44"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("32"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Generate, RejectsBadConfigs) {
  auto dir = fresh_dir("cf_gen_bad");
  auto cfg = tiny_config();
  cfg.clothing_variants_test = 1;
  EXPECT_THROW(generate_dataset(cfg, 1, dir), Error);
  cfg = tiny_config();
  cfg.poses = 1;
  cfg.views = 1;
  EXPECT_THROW(generate_dataset(cfg, 1, dir), Error);
  fs::remove_all(dir);
}

TEST(Load, RoundTripEqualsGenerated) {
  auto dir = fresh_dir("cf_load_rt");
  auto m = generate_dataset(tiny_config(), 11, dir);
  auto ds = load_dataset(dir);
  EXPECT_EQ(manifest_to_json(ds.manifest), manifest_to_json(m));
  EXPECT_EQ(ds.images.size(), m.samples.size());
  EXPECT_EQ(ds.train_idx.size() + ds.query_idx.size() + ds.gallery_idx.size(), m.samples.size());
  for (const auto& img : ds.images) {
    EXPECT_EQ(img.shape(), Shape({24, 12, 3}));
  }
  fs::remove_all(dir);
}

TEST(Load, MissingFileNamesPath) {
  auto dir = fresh_dir("cf_load_missing");
  auto m = generate_dataset(tiny_config(), 11, dir);
  fs::remove(dir / m.samples[5].file);
  try {
    load_dataset(dir);
    FAIL() << "expected missing_file";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::missing_file);
    EXPECT_NE(std::string(e.what()).find(m.samples[5].file), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Load, ChecksumMismatchDetected) {
  auto dir = fresh_dir("cf_load_sum");
  auto m = generate_dataset(tiny_config(), 11, dir);
  {
    // overwrite one image with another valid png
    auto bytes = read_file_bytes(dir / m.samples[0].file);
    std::ofstream os(dir / m.samples[1].file, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_dataset(dir);
    FAIL() << "expected checksum_mismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::checksum_mismatch);
  }
  fs::remove_all(dir);
}

TEST(Load, SplitLeakageDetected) {
  auto dir = fresh_dir("cf_load_leak");
  generate_dataset(tiny_config(), 11, dir);
  auto j = json::parse(read_text_file(dir / "manifest.json"));
  // move one gallery record onto a train identity
  for (auto& s : j["samples"]) {
    if (s["split"] == "gallery") {
      s["identity_id"] = 0;
      break;
    }
  }
  write_text_file(dir / "manifest.json", j.dump());
  try {
    load_dataset(dir);
    FAIL() << "expected split_leakage";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::split_leakage);
  }
  fs::remove_all(dir);
}

// -------------------------------------------------------------------------
// sampler
// -------------------------------------------------------------------------

class SamplerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fresh_dir("cf_sampler");
    generate_dataset(tiny_config(), 21, dir_);
    ds_ = load_dataset(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
  Dataset ds_;
};

TEST_F(SamplerTest, PKStructure) {
  BatchSampler sampler(ds_, 4, 4);
  Rng rng(1);
  auto b = sampler.next(rng);
  EXPECT_EQ(b.x_rgb.shape(), Shape({16, 24, 12, 3}));
  std::map<int, int> label_counts;
  for (int l : b.labels) label_counts[l]++;
  EXPECT_EQ(label_counts.size(), 4u);
  for (auto& [l, c] : label_counts) EXPECT_EQ(c, 4);
}

TEST_F(SamplerTest, TripletLabelConstraintsOverManyBatches) {
  BatchSampler sampler(ds_, 3, 2);
  Rng rng(2);
  for (int it = 0; it < 1000; ++it) {
    auto b = sampler.next(rng);
    for (size_t i = 0; i < b.labels.size(); ++i) {
      ASSERT_EQ(b.labels[static_cast<size_t>(b.pos_idx[i])], b.labels[i]);
      ASSERT_NE(b.labels[static_cast<size_t>(b.neg_idx[i])], b.labels[i]);
      ASSERT_NE(b.pos_idx[i], static_cast<int64_t>(i));
    }
  }
}

TEST_F(SamplerTest, GrayStreamIsExactTransform) {
  BatchSampler sampler(ds_, 2, 2);
  Rng rng(3);
  auto b = sampler.next(rng);
  EXPECT_TRUE(b.x_gray == to_grayscale_batch(b.x_rgb));
}

TEST_F(SamplerTest, ReplayWithSameSeedIsIdentical) {
  BatchSampler s1(ds_, 4, 2), s2(ds_, 4, 2);
  Rng r1(17), r2(17);
  for (int it = 0; it < 20; ++it) {
    auto a = s1.next(r1);
    auto b = s2.next(r2);
    ASSERT_TRUE(a.x_rgb == b.x_rgb);
    ASSERT_TRUE(a.x_rgb_prime == b.x_rgb_prime);
    ASSERT_EQ(a.labels, b.labels);
    ASSERT_EQ(a.pos_idx, b.pos_idx);
    ASSERT_EQ(a.neg_idx, b.neg_idx);
  }
}

TEST_F(SamplerTest, PosePairsDifferWhenAlternativesExist) {
  // every train identity here has poses*views = 6 samples, so a different
  // (pose, view) always exists and x_rgb_prime must differ from x_rgb
  BatchSampler sampler(ds_, 4, 4);
  Rng rng(4);
  const int64_t img_elems = 24 * 12 * 3;
  for (int it = 0; it < 50; ++it) {
    auto b = sampler.next(rng);
    for (int row = 0; row < 16; ++row) {
      bool same = true;
      for (int64_t e = 0; e < img_elems && same; ++e)
        same = b.x_rgb[row * img_elems + e] == b.x_rgb_prime[row * img_elems + e];
      ASSERT_FALSE(same) << "x_rgb_prime equals anchor at row " << row;
    }
  }
}

TEST(Sampler, SingleIdentityDatasetErrors) {
  auto dir = fresh_dir("cf_sampler_single");
  auto cfg = tiny_config();
  cfg.ids_train = 1;
  generate_dataset(cfg, 5, dir);
  auto ds = load_dataset(dir);
  EXPECT_THROW(BatchSampler(ds, 2, 2), Error);
  fs::remove_all(dir);
}
