#pragma once

#include <array>
#include <cstdint>

#include "abhe/backbone.hpp"
#include "abhe/correlation.hpp"
#include "abhe/cross_nonlocal.hpp"
#include "abhe/losses.hpp"
#include "abhe/nn.hpp"

namespace abhe {

struct ModelConfig {
  int64_t patch = 64;
  BackboneConfig backbone;
  float nonlocal_temperature = 10.0f;  // k
  float nonlocal_blend = 0.9f;         // lambda
  HeadWidths head;
  int64_t max_positions = kDefaultMaxCorrelationPositions;

  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
};

/// Per-stage quantities; index i belongs to feature level i + 1, so index 2
/// is the first (deepest) stage evaluated.
struct ForwardResult {
  std::array<Tensor, 3> residuals;     // [B, 8] predicted by each stage
  std::array<Tensor, 3> offsets;       // running totals after each stage
  std::array<Tensor, 3> homographies;  // solve_dlt(offsets[i]) at patch resolution
  Tensor za, zb;                       // cross-attended deepest features

  const Tensor& final_offsets() const { return offsets[0]; }
  const Tensor& final_homography() const { return homographies[0]; }
};

struct LossTerms {
  Tensor pixel;
  Tensor content;
  Tensor total;
};

class AbheNet {
 public:
  static AbheNet create(const ModelConfig& config, uint64_t seed);

  /// ia, ib: [B, P, P, 1] in [0, 1].
  ForwardResult forward(const Tensor& ia, const Tensor& ib) const;
  LossTerms loss(const ForwardResult& fwd, const Tensor& ia, const Tensor& ib, const LossWeights& weights) const;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return *store_; }
  const ParameterStore& parameters() const { return *store_; }

 private:
  ModelConfig config_;
  std::shared_ptr<ParameterStore> store_;
  Backbone backbone_;
  CrossNonLocal nonlocal_;
  std::array<CorrelationStage, 3> stages_;
};

}  // namespace abhe
