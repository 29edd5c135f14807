#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "abhe/geometry.hpp"
#include "abhe/nn.hpp"

namespace abhe::synth {

enum class Tier { kEasy, kModerate, kHard };

std::string tier_name(Tier t);  // "easy", "moderate", "hard"
/// Throws ConfigError for an unknown name.
Tier parse_tier(const std::string& name);
/// Maximum corner displacement of a tier: P/16, P/8, P/4.
double tier_rho(Tier t, int64_t patch);

struct PairSample {
  Tensor patch_a;  // [P, P, 1]
  Tensor patch_b;  // [P, P, 1]
  geometry::CornerOffsets gt_offsets{};
  geometry::Homography homography;  // maps patch_a pixels to patch_b pixels
  Tier tier = Tier::kEasy;
  int64_t pair_id = 0;
};

/// Smallest source image side that fits a P patch with the crop margin.
int64_t required_image_size(int64_t patch, double rho);

/// Crops a P x P patch at a random location keeping a 2 rho margin, draws 8
/// offsets uniformly in [-rho, rho] and samples the target patch from the
/// image warped by the resulting homography. img is [H, W].
/// Throws ShapeError when the image is too small or rho > P/4.
PairSample generate_pair(const Tensor& img, int64_t patch, double rho, Rng& rng);

/// Smooth multi-octave value noise with a gradient ramp and soft blobs.
std::vector<Tensor> procedural_corpus(int64_t n, int64_t size, Rng& rng);

/// Reads every .png/.pgm/.ppm in `dir` (sorted by name) as grayscale.
std::vector<Tensor> load_corpus(const std::filesystem::path& dir);

/// Per-sample generator seeded from (seed, pair_id).
Rng pair_rng(uint64_t seed, int64_t pair_id);

struct GenerateOptions {
  int64_t count = 0;
  int64_t patch = 64;
  std::vector<Tier> tiers = {Tier::kEasy, Tier::kModerate, Tier::kHard};
  uint64_t seed = 0;
  int64_t first_pair_id = 0;
};

/// The pair with id i takes corpus image i mod n and tier i mod |tiers|, so
/// any id range regenerates the same pairs.
std::vector<PairSample> generate_dataset(std::span<const Tensor> corpus, const GenerateOptions& options);

struct Dataset {
  int64_t patch = 0;
  std::vector<PairSample> samples;

  /// Writes `dir`/pairs.abhe and `dir`/index.json (creating `dir`).
  void save(const std::filesystem::path& dir) const;
  /// Throws IoError on missing or inconsistent files.
  static Dataset load(const std::filesystem::path& dir);
};

/// Stacks the selected samples into [B, P, P, 1] tensors.
std::pair<Tensor, Tensor> make_batch(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace abhe::synth
