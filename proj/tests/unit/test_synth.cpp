#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "abhe/error.hpp"
#include "abhe/geometry.hpp"
#include "abhe/image_io.hpp"
#include "abhe/ops.hpp"
#include "abhe/synth.hpp"
#include "oracles.hpp"

using namespace abhe;
using namespace abhe::synth;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::path(ABHE_TEST_TMP) / ("synth_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

const std::vector<Tensor>& corpus() {
  static const std::vector<Tensor> c = [] {
    Rng rng = pair_rng(99, -1);
    return procedural_corpus(6, 128, rng);
  }();
  return c;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST(Synth, TierNamesAndRho) {
  EXPECT_EQ(tier_name(Tier::kModerate), "moderate");
  EXPECT_EQ(parse_tier("hard"), Tier::kHard);
  EXPECT_THROW(parse_tier("extreme"), ConfigError);
  EXPECT_DOUBLE_EQ(tier_rho(Tier::kEasy, 64), 4.0);
  EXPECT_DOUBLE_EQ(tier_rho(Tier::kModerate, 64), 8.0);
  EXPECT_DOUBLE_EQ(tier_rho(Tier::kHard, 64), 16.0);
  EXPECT_EQ(required_image_size(64, 16.0), 128);
}

TEST(Synth, ProceduralImagesAreTexturedAndBounded) {
  for (const Tensor& img : corpus()) {
    ASSERT_EQ(img.shape(), (Shape{128, 128}));
    double m = 0, v = 0;
    for (float x : img.data()) {
      ASSERT_GE(x, 0.0f);
      ASSERT_LE(x, 1.0f);
      m += x;
    }
    m /= img.numel();
    for (float x : img.data()) v += (x - m) * (x - m);
    EXPECT_GT(std::sqrt(v / img.numel()), 0.05);
  }
  EXPECT_FALSE(bit_equal(corpus()[0], corpus()[1]));
}

TEST(Synth, ZeroRhoGivesIdenticalPatches) {
  Rng rng = pair_rng(1, 0);
  const PairSample s = generate_pair(corpus()[0], 64, 0.0, rng);
  for (int64_t i = 0; i < s.patch_a.numel(); ++i) EXPECT_NEAR(s.patch_a.data()[i], s.patch_b.data()[i], 1e-6);
  for (float o : s.gt_offsets) EXPECT_EQ(o, 0.0f);
}

TEST(Synth, GroundTruthIsConsistent) {
  for (int id = 0; id < 30; ++id) {
    Rng rng = pair_rng(5, id);
    const PairSample s = generate_pair(corpus()[id % 6], 64, 16.0, rng);
    const auto corners = geometry::patch_corners(64, 64);
    for (std::size_t k = 0; k < 4; ++k) {
      const auto [x, y] = s.homography.apply(corners[k][0], corners[k][1]);
      EXPECT_NEAR(x - corners[k][0], s.gt_offsets[2 * k], 1e-6);
      EXPECT_NEAR(y - corners[k][1], s.gt_offsets[2 * k + 1], 1e-6);
      EXPECT_LE(std::fabs(s.gt_offsets[2 * k]), 16.0f);
    }
  }
}

TEST(Synth, AligningTargetRecoversSource) {
  for (int id = 0; id < 10; ++id) {
    Rng rng = pair_rng(6, id);
    const PairSample s = generate_pair(corpus()[id % 6], 64, 8.0, rng);
    const Tensor b = reshape(s.patch_b, {1, 64, 64, 1});
    const Tensor h = s.homography.to_tensor();
    const Tensor back = geometry::align(b, h);
    const Tensor mask = geometry::align(Tensor::full({1, 64, 64, 1}, 1.0f), h);
    double err = 0.0, n = 0.0;
    for (int64_t i = 0; i < back.numel(); ++i) {
      if (mask.data()[i] < 1.0f - 1e-6f) continue;
      err += std::fabs(back.data()[i] - s.patch_a.data()[i]);
      n += 1.0;
    }
    ASSERT_GT(n, 0.5 * 64 * 64);
    EXPECT_LT(err / n, 2e-2) << "pair " << id;
  }
}

TEST(Synth, PairsAreReproducible) {
  Rng r1 = pair_rng(7, 3), r2 = pair_rng(7, 3), r3 = pair_rng(7, 4);
  const PairSample a = generate_pair(corpus()[2], 64, 8.0, r1);
  const PairSample b = generate_pair(corpus()[2], 64, 8.0, r2);
  const PairSample c = generate_pair(corpus()[2], 64, 8.0, r3);
  EXPECT_TRUE(bit_equal(a.patch_b, b.patch_b));
  EXPECT_EQ(a.gt_offsets, b.gt_offsets);
  EXPECT_NE(a.gt_offsets, c.gt_offsets);
}

TEST(Synth, DatasetIsBitReproducible) {
  GenerateOptions o;
  o.count = 12;
  o.seed = 3;
  const auto d1 = generate_dataset(corpus(), o), d2 = generate_dataset(corpus(), o);
  ASSERT_EQ(d1.size(), 12u);
  for (std::size_t i = 0; i < d1.size(); ++i) {
    EXPECT_TRUE(bit_equal(d1[i].patch_a, d2[i].patch_a));
    EXPECT_TRUE(bit_equal(d1[i].patch_b, d2[i].patch_b));
    EXPECT_EQ(d1[i].homography.m, d2[i].homography.m);
  }
  // A slice generated on its own matches the same ids of the full run.
  GenerateOptions tail = o;
  tail.count = 4;
  tail.first_pair_id = 8;
  const auto d3 = generate_dataset(corpus(), tail);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(d3[i].pair_id, d1[8 + i].pair_id);
    EXPECT_TRUE(bit_equal(d3[i].patch_b, d1[8 + i].patch_b));
  }
}

TEST(Synth, TiersAreBalanced) {
  GenerateOptions o;
  o.count = 300;
  o.seed = 8;
  std::map<Tier, int> hist;
  for (const PairSample& s : generate_dataset(corpus(), o)) {
    ++hist[s.tier];
    const double rho = tier_rho(s.tier, 64);
    for (float v : s.gt_offsets) ASSERT_LE(std::fabs(v), rho);
  }
  EXPECT_EQ(hist[Tier::kEasy], 100);
  EXPECT_EQ(hist[Tier::kModerate], 100);
  EXPECT_EQ(hist[Tier::kHard], 100);
}

TEST(Synth, IdentityBaselineMatchesExpectation) {
  GenerateOptions o;
  o.count = 1000;
  o.seed = 12;
  o.tiers = {Tier::kModerate};
  double total = 0.0;
  for (const PairSample& s : generate_dataset(corpus(), o)) total += geometry::corner_error({}, s.gt_offsets);
  const double expected = oracle::expected_corner_displacement(8.0);
  EXPECT_NEAR(total / 1000.0, expected, 0.1 * expected);
}

TEST(Synth, RejectsUndersizedImagesAndLargeRho) {
  Rng rng(1);
  const Tensor small = Tensor::full({100, 100}, 0.5f);
  EXPECT_THROW(generate_pair(small, 64, 16.0, rng), ShapeError);
  EXPECT_NO_THROW(generate_pair(small, 64, 4.0, rng));
  EXPECT_THROW(generate_pair(corpus()[0], 64, 17.0, rng), ShapeError);
  EXPECT_THROW(generate_pair(Tensor::full({1, 128, 128}, 0.5f), 64, 4.0, rng), ShapeError);
}

TEST(Synth, DatasetRoundTrip) {
  GenerateOptions o;
  o.count = 9;
  o.seed = 2;
  const Dataset d{64, generate_dataset(corpus(), o)};
  const auto dir = scratch("roundtrip");
  d.save(dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "index.json"));
  const Dataset back = Dataset::load(dir);
  ASSERT_EQ(back.samples.size(), 9u);
  EXPECT_EQ(back.patch, 64);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_TRUE(bit_equal(back.samples[i].patch_a, d.samples[i].patch_a));
    EXPECT_TRUE(bit_equal(back.samples[i].patch_b, d.samples[i].patch_b));
    EXPECT_EQ(back.samples[i].gt_offsets, d.samples[i].gt_offsets);
    EXPECT_EQ(back.samples[i].tier, d.samples[i].tier);
    EXPECT_EQ(back.samples[i].pair_id, d.samples[i].pair_id);
    for (int k = 0; k < 9; ++k) EXPECT_NEAR(back.samples[i].homography.m[k], d.samples[i].homography.m[k], 1e-12);
  }
  const std::vector<std::size_t> idx = {0, 4, 8};
  const auto [a, b] = make_batch(back, idx);
  EXPECT_EQ(a.shape(), (Shape{3, 64, 64, 1}));
  EXPECT_FLOAT_EQ(b.at({1, 10, 20, 0}), back.samples[4].patch_b.at({10, 20, 0}));
}

TEST(Synth, CorruptDatasetsAreRejected) {
  EXPECT_THROW(Dataset::load(ABHE_TEST_TMP "/does_not_exist"), IoError);
  GenerateOptions o;
  o.count = 2;
  const Dataset d{64, generate_dataset(corpus(), o)};
  const auto dir = scratch("corrupt");
  d.save(dir);
  {
    std::ofstream(dir / "index.json") << "{ not json";
  }
  EXPECT_THROW(Dataset::load(dir), IoError);
  d.save(dir);
  {
    std::ofstream f(dir / "pairs.abhe", std::ios::binary | std::ios::trunc);
    f << "ABHE1garbage";
  }
  EXPECT_THROW(Dataset::load(dir), IoError);
}

TEST(Synth, LoadsCorpusFromDirectory) {
  const auto dir = scratch("corpus");
  io::write_png(dir / "b.png", corpus()[1]);
  io::write_png(dir / "a.png", corpus()[0]);
  {
    std::ofstream(dir / "notes.txt") << "ignored";
  }
  const auto loaded = load_corpus(dir);
  ASSERT_EQ(loaded.size(), 2u);
  // Sorted by file name; PNG stores 8 bits.
  for (int64_t i = 0; i < loaded[0].numel(); ++i) ASSERT_NEAR(loaded[0].data()[i], corpus()[0].data()[i], 0.5 / 255 + 1e-6);
  EXPECT_THROW(load_corpus(scratch("empty")), IoError);
}

TEST(ImageIo, PgmAndErrors) {
  const auto dir = scratch("io");
  {
    std::ofstream f(dir / "t.pgm", std::ios::binary);
    f << "P5\n# comment\n3 2\n255\n";
    const unsigned char px[6] = {0, 51, 102, 153, 204, 255};
    f.write(reinterpret_cast<const char*>(px), 6);
  }
  const Tensor t = io::read_gray(dir / "t.pgm");
  ASSERT_EQ(t.shape(), (Shape{2, 3}));
  EXPECT_FLOAT_EQ(t.at({1, 2}), 1.0f);
  EXPECT_FLOAT_EQ(t.at({0, 1}), 0.2f);
  {
    std::ofstream(dir / "bad.png") << "definitely not a png";
  }
  EXPECT_THROW(io::read_gray(dir / "bad.png"), IoError);
  EXPECT_THROW(io::read_gray(dir / "missing.png"), IoError);
  EXPECT_THROW(io::read_gray(dir / "t.bmp"), IoError);
}
