#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abhe/model.hpp"
#include "abhe/synth.hpp"

namespace abhe {

/// Training run settings. Read from a key=value file (one pair per line,
/// '#' starts a comment); see docs/config.md for the keys.
struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  double lr = 1e-4;
  double decay_rate = 0.97;
  int64_t decay_steps = 1000;
  int64_t batch = 8;
  int64_t iterations = 2000;
  uint64_t seed = 0;
  int64_t checkpoint_every = 500;
  int64_t probe_every = 50;
  int64_t probe_size = 16;
  std::filesystem::path train_data;
  std::filesystem::path out_dir = "run";

  /// Throws ConfigError on an unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);
  /// Applies every line of `path`. Relative data paths resolve against the
  /// file's directory.
  static RunConfig from_file(const std::filesystem::path& path);
  /// Throws ConfigError on invalid values; with `check_paths` the training
  /// data must exist.
  void validate(bool check_paths) const;
  std::map<std::string, std::string> to_map() const;
};

/// lr0 * decay_rate^(step / decay_steps)
double learning_rate(const RunConfig& config, int64_t step);

struct StepRecord {
  int64_t step = 0;
  double lr = 0.0;
  double pixel = 0.0;
  double content = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  std::optional<double> probe_corner_error;
};

struct TrainResult {
  std::vector<StepRecord> log;
  std::filesystem::path checkpoint;
  double initial_probe_error = 0.0;
  double final_probe_error = 0.0;
};

/// Runs the optimisation loop, writing train_log.csv, periodic checkpoints
/// and model.abhe to out_dir. Throws NumericalError on a non-finite loss
/// after writing nan_dump.json.
TrainResult train(const RunConfig& config, std::ostream* progress = nullptr);

// -- checkpoints --------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const AbheNet& net, int64_t step);
/// Rebuilds the network from the stored meta entries and loads its weights.
AbheNet load_checkpoint(const std::filesystem::path& path, int64_t* step = nullptr);

// -- evaluation ---------------------------------------------------------------

struct PairMetrics {
  int64_t pair_id = 0;
  synth::Tier tier = synth::Tier::kEasy;
  std::optional<double> psnr_db;  // empty when the prediction leaves no overlap
  std::optional<double> ssim;
  double corner_error = 0.0;
  double identity_psnr_db = 0.0;
  double identity_ssim = 0.0;
  double identity_corner_error = 0.0;
  geometry::CornerOffsets predicted{};
};

struct TierSummary {
  int64_t count = 0;
  int64_t scored = 0;  // pairs with an overlap
  double psnr_db = 0.0;
  double ssim = 0.0;
  double corner_error = 0.0;
  double identity_psnr_db = 0.0;
  double identity_ssim = 0.0;
  double identity_corner_error = 0.0;
};

inline constexpr const char* kReportColumns[] = {"Easy", "Moderate", "Hard", "Average"};

struct EvalReport {
  std::vector<PairMetrics> pairs;
  /// Keyed by column name; tiers without samples are absent.
  std::map<std::string, TierSummary> columns;

  void write_json(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Predicts every pair (identity baseline included) and summarises per tier.
EvalReport evaluate(const AbheNet& net, const synth::Dataset& data, int64_t batch = 8,
                    std::ostream* warnings = nullptr);

// -- inference ------------------------------------------------------------------

struct Inference {
  geometry::Homography homography;
  geometry::CornerOffsets offsets{};
  Tensor aligned_b;  // [P, P] target pulled onto the source frame
  Tensor abs_diff;   // [P, P] |mask * a - aligned_b|
};

/// a, b: [P, P] grayscale. Throws ShapeError on a size mismatch.
Inference infer(const AbheNet& net, const Tensor& a, const Tensor& b);

/// Caps BLAS threads; 0 leaves the library default.
void set_num_threads(int threads);

}  // namespace abhe
