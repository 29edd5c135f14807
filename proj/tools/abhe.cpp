// abhe: dataset synthesis, training, evaluation and inference.

#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "abhe/error.hpp"
#include "abhe/gradcheck.hpp"
#include "abhe/image_io.hpp"
#include "abhe/synth.hpp"
#include "abhe/trainer.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumerical = 4 };

std::vector<abhe::synth::Tier> parse_tiers(const std::string& list) {
  std::vector<abhe::synth::Tier> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) out.push_back(abhe::synth::parse_tier(name));
  if (out.empty()) throw abhe::ConfigError("--tiers: no tier given");
  return out;
}

struct SynthArgs {
  std::string corpus;
  int64_t procedural = 0;
  std::string out;
  int64_t patch = 64;
  std::string tiers = "easy,moderate,hard";
  int64_t count = -1;
  int64_t image_size = 0;
  uint64_t seed = 0;
  int64_t first_id = 0;
};

int run_synth(const SynthArgs& a) {
  using namespace abhe::synth;
  GenerateOptions opt;
  opt.patch = a.patch;
  opt.tiers = parse_tiers(a.tiers);
  opt.seed = a.seed;
  opt.first_pair_id = a.first_id;
  std::vector<abhe::Tensor> corpus;
  if (!a.corpus.empty()) {
    corpus = load_corpus(a.corpus);
  } else {
    double rho = 0.0;
    for (Tier t : opt.tiers) rho = std::max(rho, tier_rho(t, a.patch));
    const int64_t size = a.image_size > 0 ? a.image_size : required_image_size(a.patch, rho);
    // corpus images get their own stream, disjoint from the per-pair ones
    abhe::Rng rng = pair_rng(a.seed, -1);
    corpus = procedural_corpus(a.procedural, size, rng);
  }
  opt.count = a.count >= 0 ? a.count : static_cast<int64_t>(corpus.size());
  Dataset d{a.patch, generate_dataset(corpus, opt)};
  d.save(a.out);
  std::cout << "wrote " << d.samples.size() << " pairs to " << a.out << '\n';
  return kOk;
}

int run_train(const std::string& config_path, const std::vector<std::string>& overrides) {
  abhe::RunConfig config = abhe::RunConfig::from_file(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw abhe::ConfigError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  const abhe::TrainResult r = abhe::train(config, &std::cout);
  std::cout << "probe corner error " << r.initial_probe_error << " -> " << r.final_probe_error << " px\n"
            << "checkpoint " << r.checkpoint.string() << '\n';
  return kOk;
}

int run_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out_json, std::string out_csv,
             int64_t batch) {
  const abhe::AbheNet net = abhe::load_checkpoint(ckpt);
  const auto data = abhe::synth::Dataset::load(data_dir);
  const abhe::EvalReport report = abhe::evaluate(net, data, batch, &std::cerr);
  report.write_json(out_json);
  if (out_csv.empty()) out_csv = std::filesystem::path(out_json).replace_extension(".csv").string();
  report.write_csv(out_csv);
  std::cout << std::left << std::setw(24) << "" << std::right;
  for (const char* c : abhe::kReportColumns) std::cout << std::setw(10) << c;
  std::cout << '\n' << std::fixed;
  auto row = [&](const char* name, int precision, auto get) {
    std::cout << std::left << std::setw(24) << name << std::right << std::setprecision(precision);
    for (const char* c : abhe::kReportColumns) {
      auto it = report.columns.find(c);
      if (it == report.columns.end()) std::cout << std::setw(10) << "-";
      else std::cout << std::setw(10) << get(it->second);
    }
    std::cout << '\n';
  };
  row("PSNR (dB)", 2, [](const abhe::TierSummary& t) { return t.psnr_db; });
  row("SSIM", 4, [](const abhe::TierSummary& t) { return t.ssim; });
  row("corner error (px)", 3, [](const abhe::TierSummary& t) { return t.corner_error; });
  row("identity PSNR (dB)", 2, [](const abhe::TierSummary& t) { return t.identity_psnr_db; });
  row("identity SSIM", 4, [](const abhe::TierSummary& t) { return t.identity_ssim; });
  row("identity corner (px)", 3, [](const abhe::TierSummary& t) { return t.identity_corner_error; });
  std::cout << "report written to " << out_json << " and " << out_csv << '\n';
  return kOk;
}

int run_infer(const std::string& ckpt, const std::string& img_a, const std::string& img_b, const std::string& out_dir) {
  const abhe::AbheNet net = abhe::load_checkpoint(ckpt);
  const abhe::Tensor a = abhe::io::read_gray(img_a), b = abhe::io::read_gray(img_b);
  if (a.shape() != b.shape()) {
    throw abhe::ShapeError("image sizes differ: " + abhe::shape_to_string(a.shape()) + " vs " +
                           abhe::shape_to_string(b.shape()));
  }
  const abhe::Inference r = abhe::infer(net, a, b);
  std::cout << std::setprecision(8) << "H =\n";
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) std::cout << std::setw(16) << r.homography.m[static_cast<std::size_t>(3 * i + j)];
    std::cout << '\n';
  }
  std::cout << "offsets (TL, TR, BR, BL):";
  for (float o : r.offsets) std::cout << ' ' << o;
  std::cout << '\n';
  std::filesystem::create_directories(out_dir);
  const auto warped = std::filesystem::path(out_dir) / "aligned_b.png";
  const auto diff = std::filesystem::path(out_dir) / "abs_diff.png";
  abhe::io::write_png(warped, r.aligned_b);
  abhe::io::write_png(diff, r.abs_diff);
  std::cout << "wrote " << warped.string() << " and " << diff.string() << '\n';
  return kOk;
}

int run_gradcheck(uint64_t seed) {
  const auto rows = abhe::gradcheck::run_suite(seed);
  abhe::gradcheck::print_table(std::cout, rows);
  for (const auto& r : rows)
    if (!r.passed()) return kNumerical;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("ABHE_THREADS")) abhe::set_num_threads(std::atoi(t));

  CLI::App app{"Unsupervised homography estimation: synthesis, training, evaluation"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a pair dataset");
  auto* corpus_opt = synth->add_option("--corpus", sa.corpus, "Directory of PNG/PGM/PPM images");
  auto* proc_opt = synth->add_option("--procedural", sa.procedural, "Number of procedural source images");
  corpus_opt->excludes(proc_opt);
  synth->add_option("--out", sa.out, "Output dataset directory")->required();
  synth->add_option("--patch", sa.patch, "Patch side P")->capture_default_str();
  synth->add_option("--tiers", sa.tiers, "Comma-separated tiers, assigned round-robin")->capture_default_str();
  synth->add_option("--count", sa.count, "Number of pairs (default: one per source image)");
  synth->add_option("--image-size", sa.image_size, "Procedural image side (default: smallest that fits)");
  synth->add_option("--seed", sa.seed, "Dataset seed")->capture_default_str();
  synth->add_option("--first-id", sa.first_id, "pair_id of the first pair")->capture_default_str();

  std::string config_path;
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--set", overrides, "Override a config key (key=value), repeatable");

  std::string ckpt, data_dir, out_json = "report.json", out_csv;
  int64_t batch = 8;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--out", out_json, "JSON report path")->capture_default_str();
  eval->add_option("--csv", out_csv, "CSV report path (default: JSON path with .csv)");
  eval->add_option("--batch", batch, "Evaluation batch size")->capture_default_str();

  std::string img_a, img_b, infer_out = ".";
  auto* infer = app.add_subcommand("infer", "Estimate the homography between two images");
  infer->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  infer->add_option("image_a", img_a, "Source image")->required();
  infer->add_option("image_b", img_b, "Target image")->required();
  infer->add_option("--out-dir", infer_out, "Directory for aligned_b.png and abs_diff.png")->capture_default_str();

  uint64_t gc_seed = 1;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gradcheck->add_option("--seed", gc_seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) {
      if (sa.corpus.empty() && sa.procedural <= 0) throw abhe::ConfigError("synth: give --corpus DIR or --procedural N");
      return run_synth(sa);
    }
    if (*train) return run_train(config_path, overrides);
    if (*eval) return run_eval(ckpt, data_dir, out_json, out_csv, batch);
    if (*infer) return run_infer(ckpt, img_a, img_b, infer_out);
    if (*gradcheck) return run_gradcheck(gc_seed);
  } catch (const abhe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const abhe::MemoryGuardError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const abhe::IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const abhe::ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const abhe::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const abhe::DegenerateError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
