#include "abhe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "abhe/container.hpp"
#include "abhe/error.hpp"
#include "abhe/image_io.hpp"

namespace abhe::synth {

namespace {

constexpr const char* kIndexFormat = "abhe-pairs-1";

float bilinear_at(const float* img, int64_t w, int64_t h, double x, double y) {
  if (!(x >= 0.0 && y >= 0.0 && x <= static_cast<double>(w - 1) && y <= static_cast<double>(h - 1))) return 0.0f;
  const auto x0 = std::min(static_cast<int64_t>(std::floor(x)), w - 1);
  const auto y0 = std::min(static_cast<int64_t>(std::floor(y)), h - 1);
  const int64_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double wx = x - static_cast<double>(x0), wy = y - static_cast<double>(y0);
  const double v = (1 - wy) * ((1 - wx) * img[y0 * w + x0] + wx * img[y0 * w + x1]) +
                   wy * ((1 - wx) * img[y1 * w + x0] + wx * img[y1 * w + x1]);
  return static_cast<float>(v);
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// One octave of value noise on a (cells + 1)^2 lattice.
void add_value_noise(std::vector<double>& img, int64_t size, int64_t cells, double amplitude, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int64_t n = cells + 1;
  std::vector<double> lattice(static_cast<std::size_t>(n * n));
  for (auto& v : lattice) v = u(rng);
  const double step = static_cast<double>(cells) / static_cast<double>(size);
  for (int64_t y = 0; y < size; ++y) {
    const double fy = y * step;
    const auto iy = std::min(static_cast<int64_t>(fy), cells - 1);
    const double ty = smoothstep(fy - static_cast<double>(iy));
    for (int64_t x = 0; x < size; ++x) {
      const double fx = x * step;
      const auto ix = std::min(static_cast<int64_t>(fx), cells - 1);
      const double tx = smoothstep(fx - static_cast<double>(ix));
      auto at = [&](int64_t r, int64_t c) { return lattice[static_cast<std::size_t>(r * n + c)]; };
      const double top = at(iy, ix) * (1 - tx) + at(iy, ix + 1) * tx;
      const double bottom = at(iy + 1, ix) * (1 - tx) + at(iy + 1, ix + 1) * tx;
      img[static_cast<std::size_t>(y * size + x)] += amplitude * (top * (1 - ty) + bottom * ty);
    }
  }
}

Tensor procedural_image(int64_t size, Rng& rng) {
  std::vector<double> img(static_cast<std::size_t>(size * size), 0.0);
  double amplitude = 1.0;
  for (int64_t cells = 4; cells <= std::max<int64_t>(4, size / 4); cells *= 2) {
    add_value_noise(img, size, cells, amplitude, rng);
    amplitude *= 0.5;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double angle = 2.0 * M_PI * u(rng), ramp = 0.5 + u(rng);
  const int blobs = 3 + static_cast<int>(u(rng) * 4.0);
  struct Blob {
    double cx, cy, sigma, weight;
  };
  std::vector<Blob> bs;
  for (int i = 0; i < blobs; ++i) {
    bs.push_back({u(rng) * size, u(rng) * size, size * (1.0 / 16.0 + u(rng) / 10.0), (u(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + u(rng))});
  }
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      double v = ramp * ((x * std::cos(angle) + y * std::sin(angle)) / static_cast<double>(size));
      for (const auto& b : bs) {
        const double dx = x - b.cx, dy = y - b.cy;
        v += b.weight * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      img[static_cast<std::size_t>(y * size + x)] += v;
    }
  const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
  const double range = std::max(*hi - *lo, 1e-12);
  std::vector<float> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<float>(0.05 + 0.9 * (img[i] - *lo) / range);
  return Tensor::from_vector({size, size}, std::move(out));
}

std::string key(const char* kind, int64_t id) { return std::string(kind) + "/" + std::to_string(id); }

// Homographies are stored as an unevaluated float sum hi + lo so the double
// ground truth survives the f32 container.
Tensor split_homography(const geometry::Homography& h) {
  std::vector<float> v(18);
  for (std::size_t i = 0; i < 9; ++i) {
    v[i] = static_cast<float>(h.m[i]);
    v[9 + i] = static_cast<float>(h.m[i] - static_cast<double>(v[i]));
  }
  return Tensor::from_vector({2, 3, 3}, std::move(v));
}

geometry::Homography join_homography(const Tensor& t) {
  geometry::Homography h;
  for (std::size_t i = 0; i < 9; ++i) h.m[i] = static_cast<double>(t.data()[i]) + static_cast<double>(t.data()[9 + i]);
  return h;
}

}  // namespace

std::string tier_name(Tier t) {
  switch (t) {
    case Tier::kEasy:
      return "easy";
    case Tier::kModerate:
      return "moderate";
    case Tier::kHard:
      return "hard";
  }
  return "easy";
}

Tier parse_tier(const std::string& name) {
  if (name == "easy") return Tier::kEasy;
  if (name == "moderate") return Tier::kModerate;
  if (name == "hard") return Tier::kHard;
  throw ConfigError("unknown tier '" + name + "' (expected easy, moderate or hard)");
}

double tier_rho(Tier t, int64_t patch) {
  switch (t) {
    case Tier::kEasy:
      return static_cast<double>(patch) / 16.0;
    case Tier::kModerate:
      return static_cast<double>(patch) / 8.0;
    case Tier::kHard:
      return static_cast<double>(patch) / 4.0;
  }
  return 0.0;
}

int64_t required_image_size(int64_t patch, double rho) {
  return patch + 2 * static_cast<int64_t>(std::ceil(2.0 * rho));
}

Rng pair_rng(uint64_t seed, int64_t pair_id) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(pair_id),
                    static_cast<uint32_t>(static_cast<uint64_t>(pair_id) >> 32)};
  return Rng(seq);
}

PairSample generate_pair(const Tensor& img, int64_t patch, double rho, Rng& rng) {
  if (img.rank() != 2) throw ShapeError("generate_pair: expected a [H, W] image");
  if (patch < 2) throw ShapeError("generate_pair: patch must be at least 2");
  if (rho < 0.0 || rho > static_cast<double>(patch) / 4.0) {
    throw ShapeError("generate_pair: rho " + std::to_string(rho) + " outside [0, P/4]");
  }
  const int64_t H = img.dim(0), W = img.dim(1);
  const int64_t need = required_image_size(patch, rho);
  if (H < need || W < need) {
    throw ShapeError("image too small: " + std::to_string(W) + "x" + std::to_string(H) + " cannot hold a " +
                     std::to_string(patch) + "-pixel patch with rho " + std::to_string(rho) + " (need " +
                     std::to_string(need) + "x" + std::to_string(need) + ")");
  }
  const auto margin = static_cast<int64_t>(std::ceil(2.0 * rho));
  std::uniform_int_distribution<int64_t> px(margin, W - patch - margin), py(margin, H - patch - margin);
  const int64_t x0 = px(rng), y0 = py(rng);

  PairSample s;
  if (rho > 0.0) {
    std::uniform_real_distribution<double> off(-rho, rho);
    for (auto& o : s.gt_offsets) o = std::clamp(static_cast<float>(off(rng)), static_cast<float>(-rho), static_cast<float>(rho));
  }
  s.homography = geometry::homography_from_offsets(s.gt_offsets, patch, patch);
  const geometry::Homography& h = s.homography;
  // target pixel p shows the full image at T H^-1 p
  const geometry::Homography g =
      geometry::Homography::translation(static_cast<double>(x0), static_cast<double>(y0)) * h.inverse();

  const float* src = img.data().data();
  std::vector<float> a(static_cast<std::size_t>(patch * patch)), b(a.size());
  for (int64_t y = 0; y < patch; ++y)
    for (int64_t x = 0; x < patch; ++x) {
      const auto i = static_cast<std::size_t>(y * patch + x);
      a[i] = src[(y0 + y) * W + x0 + x];
      const auto [sx, sy] = g.apply(static_cast<double>(x), static_cast<double>(y));
      b[i] = bilinear_at(src, W, H, sx, sy);
    }
  s.patch_a = Tensor::from_vector({patch, patch, 1}, std::move(a));
  s.patch_b = Tensor::from_vector({patch, patch, 1}, std::move(b));
  return s;
}

std::vector<Tensor> procedural_corpus(int64_t n, int64_t size, Rng& rng) {
  if (n < 1) throw ConfigError("procedural_corpus: n must be >= 1");
  if (size < 8) throw ConfigError("procedural_corpus: size must be >= 8");
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) out.push_back(procedural_image(size, rng));
  return out;
}

std::vector<Tensor> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .png/.pgm/.ppm images in " + dir.string());
  std::vector<Tensor> out;
  for (const auto& f : files) out.push_back(io::read_gray(f));
  return out;
}

std::vector<PairSample> generate_dataset(std::span<const Tensor> corpus, const GenerateOptions& options) {
  if (corpus.empty()) throw ConfigError("generate_dataset: empty corpus");
  if (options.tiers.empty()) throw ConfigError("generate_dataset: no tiers selected");
  if (options.count < 0) throw ConfigError("generate_dataset: negative count");
  if (options.first_pair_id < 0) throw ConfigError("generate_dataset: negative first_pair_id");
  std::vector<PairSample> out;
  out.reserve(static_cast<std::size_t>(options.count));
  for (int64_t k = 0; k < options.count; ++k) {
    const int64_t id = options.first_pair_id + k;
    const auto u = static_cast<std::size_t>(id);
    const Tier tier = options.tiers[u % options.tiers.size()];
    Rng rng = pair_rng(options.seed, id);
    PairSample s = generate_pair(corpus[u % corpus.size()], options.patch,
                                 tier_rho(tier, options.patch), rng);
    s.tier = tier;
    s.pair_id = id;
    out.push_back(std::move(s));
  }
  return out;
}

void Dataset::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  std::vector<NamedTensor> entries;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& s : samples) {
    entries.push_back({key("a", s.pair_id), s.patch_a});
    entries.push_back({key("b", s.pair_id), s.patch_b});
    entries.push_back({key("h", s.pair_id), split_homography(s.homography)});
    pairs.push_back({{"pair_id", s.pair_id}, {"tier", tier_name(s.tier)}, {"gt_offsets", s.gt_offsets}});
  }
  write_container(dir / "pairs.abhe", entries);
  const nlohmann::json index = {{"format", kIndexFormat}, {"patch", patch}, {"count", samples.size()}, {"pairs", pairs}};
  std::ofstream out(dir / "index.json");
  if (!out) throw IoError("cannot write " + (dir / "index.json").string());
  out << index.dump(1) << '\n';
}

Dataset Dataset::load(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.json";
  std::ifstream in(index_path);
  if (!in) throw IoError("dataset index not found: " + index_path.string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(index_path.string() + ": " + e.what());
  }
  Dataset d;
  std::unordered_map<std::string, Tensor> tensors;
  for (auto& e : read_container(dir / "pairs.abhe")) tensors.emplace(e.name, std::move(e.tensor));
  try {
    if (index.at("format").get<std::string>() != kIndexFormat) throw IoError(index_path.string() + ": unknown format");
    d.patch = index.at("patch").get<int64_t>();
    const auto& pairs = index.at("pairs");
    if (pairs.size() != index.at("count").get<std::size_t>()) throw IoError(index_path.string() + ": count mismatch");
    for (const auto& p : pairs) {
      PairSample s;
      s.pair_id = p.at("pair_id").get<int64_t>();
      s.tier = parse_tier(p.at("tier").get<std::string>());
      s.gt_offsets = p.at("gt_offsets").get<geometry::CornerOffsets>();
      for (const char* kind : {"a", "b"}) {
        auto it = tensors.find(key(kind, s.pair_id));
        if (it == tensors.end()) throw IoError("pairs.abhe: missing entry " + key(kind, s.pair_id));
        if (it->second.shape() != Shape{d.patch, d.patch, 1}) {
          throw IoError("pairs.abhe: entry " + key(kind, s.pair_id) + " has shape " + shape_to_string(it->second.shape()));
        }
        (kind[0] == 'a' ? s.patch_a : s.patch_b) = it->second;
      }
      auto it = tensors.find(key("h", s.pair_id));
      if (it == tensors.end() || it->second.shape() != Shape{2, 3, 3}) {
        throw IoError("pairs.abhe: missing or malformed entry " + key("h", s.pair_id));
      }
      s.homography = join_homography(it->second);
      d.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(index_path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(index_path.string() + ": " + e.what());
  }
  return d;
}

std::pair<Tensor, Tensor> make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  const int64_t P = data.patch, B = static_cast<int64_t>(indices.size());
  std::vector<float> a(static_cast<std::size_t>(B * P * P)), b(a.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const PairSample& s = data.samples.at(indices[k]);
    std::copy(s.patch_a.data().begin(), s.patch_a.data().end(), a.begin() + static_cast<std::ptrdiff_t>(k * P * P));
    std::copy(s.patch_b.data().begin(), s.patch_b.data().end(), b.begin() + static_cast<std::ptrdiff_t>(k * P * P));
  }
  return {Tensor::from_vector({B, P, P, 1}, std::move(a)), Tensor::from_vector({B, P, P, 1}, std::move(b))};
}

}  // namespace abhe::synth
