#include "abhe/trainer.hpp"

#include <cblas.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "abhe/error.hpp"
#include "abhe/geometry.hpp"
#include "abhe/metrics.hpp"
#include "abhe/optim.hpp"

namespace abhe {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

std::array<int64_t, 3> to_triple(const std::string& key, const std::string& v) {
  std::array<int64_t, 3> out{};
  std::stringstream ss(v);
  std::string part;
  std::size_t n = 0;
  while (std::getline(ss, part, ',')) {
    if (n == 3) throw ConfigError(key + ": expected three comma-separated integers");
    out[n++] = to_int(key, trim(part));
  }
  if (n != 3) throw ConfigError(key + ": expected three comma-separated integers");
  return out;
}

std::string join(const std::array<int64_t, 3>& v) {
  return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<Tensor> trainable(AbheNet& net) {
  auto params = net.parameters().tensors();
  for (auto& p : params) p.set_requires_grad(true);
  return params;
}

geometry::CornerOffsets row_offsets(const Tensor& offsets, int64_t row) {
  geometry::CornerOffsets o{};
  for (std::size_t k = 0; k < 8; ++k) o[k] = offsets.data()[static_cast<std::size_t>(row * 8) + k];
  return o;
}

// Final offsets for every listed sample, evaluated in batches off the tape.
std::vector<geometry::CornerOffsets> predict(const AbheNet& net, const synth::Dataset& data,
                                             std::span<const std::size_t> indices, int64_t batch) {
  Tape::Pause no_tape;
  std::vector<geometry::CornerOffsets> out;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch)) {
    const auto n = std::min(static_cast<std::size_t>(batch), indices.size() - start);
    const auto [a, b] = synth::make_batch(data, indices.subspan(start, n));
    const ForwardResult f = net.forward(a, b);
    for (std::size_t k = 0; k < n; ++k) out.push_back(row_offsets(f.final_offsets(), static_cast<int64_t>(k)));
  }
  return out;
}

double probe_error(const AbheNet& net, const synth::Dataset& data, std::span<const std::size_t> probe, int64_t batch) {
  const auto pred = predict(net, data, probe, batch);
  double total = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) total += geometry::corner_error(pred[k], data.samples[probe[k]].gt_offsets);
  return total / static_cast<double>(probe.size());
}

double grad_norm(std::span<const Tensor> params) {
  double s = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) s += static_cast<double>(g) * g;
  }
  return std::sqrt(s);
}

void write_nan_dump(const RunConfig& config, int64_t step, std::span<const std::size_t> batch, const synth::Dataset& data,
                    const LossTerms& terms) {
  nlohmann::json ids = nlohmann::json::array();
  for (auto i : batch) ids.push_back(data.samples[i].pair_id);
  const nlohmann::json dump = {{"step", step},
                               {"pair_ids", ids},
                               {"pixel_loss", terms.pixel.item()},
                               {"content_loss", terms.content.item()},
                               {"total_loss", terms.total.item()}};
  std::ofstream(config.out_dir / "nan_dump.json") << dump.dump(1) << '\n';
}

}  // namespace

// -- config ---------------------------------------------------------------------

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key), v = trim(raw_value);
  auto& bb = model.backbone;
  if (key == "model.patch") model.patch = to_int(key, v);
  else if (key == "model.channels") bb.stem_channels = to_int(key, v);
  else if (key == "model.heads") bb.num_heads = to_int(key, v);
  else if (key == "model.window") bb.window = to_int(key, v);
  else if (key == "model.mlp_ratio") bb.mlp_ratio = to_int(key, v);
  else if (key == "model.blocks") bb.blocks_per_stage = static_cast<int>(to_int(key, v));
  else if (key == "nonlocal.k") model.nonlocal_temperature = static_cast<float>(to_double(key, v));
  else if (key == "nonlocal.lambda") model.nonlocal_blend = static_cast<float>(to_double(key, v));
  else if (key == "corr.max_hw") model.max_positions = to_int(key, v);
  else if (key == "head.conv") model.head.conv = to_triple(key, v);
  else if (key == "head.fc") model.head.fc = to_triple(key, v);
  else if (key == "loss.omega1") loss.omega[0] = static_cast<float>(to_double(key, v));
  else if (key == "loss.omega2") loss.omega[1] = static_cast<float>(to_double(key, v));
  else if (key == "loss.omega3") loss.omega[2] = static_cast<float>(to_double(key, v));
  else if (key == "loss.lambda_c") loss.lambda_content = static_cast<float>(to_double(key, v));
  else if (key == "loss.lambda_p") loss.lambda_pixel = static_cast<float>(to_double(key, v));
  else if (key == "train.lr") lr = to_double(key, v);
  else if (key == "train.decay_rate") decay_rate = to_double(key, v);
  else if (key == "train.decay_steps") decay_steps = to_int(key, v);
  else if (key == "train.batch") batch = to_int(key, v);
  else if (key == "train.iterations") iterations = to_int(key, v);
  else if (key == "train.seed") seed = static_cast<uint64_t>(to_int(key, v));
  else if (key == "train.checkpoint_every") checkpoint_every = to_int(key, v);
  else if (key == "train.probe_every") probe_every = to_int(key, v);
  else if (key == "train.probe_size") probe_size = to_int(key, v);
  else if (key == "data.train") train_data = v;
  else if (key == "out.dir") out_dir = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    c.set(line.substr(0, eq), line.substr(eq + 1));
  }
  const auto base = path.parent_path();
  if (!c.train_data.empty() && c.train_data.is_relative()) c.train_data = base / c.train_data;
  if (c.out_dir.is_relative()) c.out_dir = base / c.out_dir;
  return c;
}

void RunConfig::validate(bool check_paths) const {
  model.validate();
  loss.validate();
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(decay_rate > 0.0) || decay_steps <= 0) throw ConfigError("train.decay_rate and train.decay_steps must be positive");
  if (batch <= 0) throw ConfigError("train.batch must be positive");
  if (iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (checkpoint_every <= 0 || probe_every <= 0 || probe_size <= 0) {
    throw ConfigError("train.checkpoint_every, train.probe_every and train.probe_size must be positive");
  }
  if (check_paths) {
    if (train_data.empty()) throw ConfigError("data.train is not set");
    if (!std::filesystem::exists(train_data / "index.json")) {
      throw ConfigError("data.train: no dataset at " + train_data.string());
    }
  }
}

std::map<std::string, std::string> RunConfig::to_map() const {
  const auto& bb = model.backbone;
  return {{"model.patch", std::to_string(model.patch)},
          {"model.channels", std::to_string(bb.stem_channels)},
          {"model.heads", std::to_string(bb.num_heads)},
          {"model.window", std::to_string(bb.window)},
          {"model.mlp_ratio", std::to_string(bb.mlp_ratio)},
          {"model.blocks", std::to_string(bb.blocks_per_stage)},
          {"nonlocal.k", fmt(model.nonlocal_temperature)},
          {"nonlocal.lambda", fmt(model.nonlocal_blend)},
          {"corr.max_hw", std::to_string(model.max_positions)},
          {"head.conv", join(model.head.conv)},
          {"head.fc", join(model.head.fc)},
          {"loss.omega1", fmt(loss.omega[0])},
          {"loss.omega2", fmt(loss.omega[1])},
          {"loss.omega3", fmt(loss.omega[2])},
          {"loss.lambda_c", fmt(loss.lambda_content)},
          {"loss.lambda_p", fmt(loss.lambda_pixel)},
          {"train.lr", fmt(lr)},
          {"train.decay_rate", fmt(decay_rate)},
          {"train.decay_steps", std::to_string(decay_steps)},
          {"train.batch", std::to_string(batch)},
          {"train.iterations", std::to_string(iterations)},
          {"train.seed", std::to_string(seed)},
          {"train.checkpoint_every", std::to_string(checkpoint_every)},
          {"train.probe_every", std::to_string(probe_every)},
          {"train.probe_size", std::to_string(probe_size)},
          {"data.train", train_data.string()},
          {"out.dir", out_dir.string()}};
}

double learning_rate(const RunConfig& config, int64_t step) {
  return config.lr * std::pow(config.decay_rate, static_cast<double>(step) / static_cast<double>(config.decay_steps));
}

// -- training -------------------------------------------------------------------

TrainResult train(const RunConfig& config, std::ostream* progress) {
  config.validate(true);
  const synth::Dataset data = synth::Dataset::load(config.train_data);
  if (data.patch != config.model.patch) {
    throw ConfigError("dataset patch " + std::to_string(data.patch) + " differs from model.patch " +
                      std::to_string(config.model.patch));
  }
  if (data.samples.empty()) throw IoError("training set is empty");
  std::filesystem::create_directories(config.out_dir);

  AbheNet net = AbheNet::create(config.model, config.seed);
  std::vector<Tensor> params = trainable(net);
  AdamState adam = AdamState::for_params(params);

  std::vector<std::size_t> probe(std::min<std::size_t>(static_cast<std::size_t>(config.probe_size), data.samples.size()));
  std::iota(probe.begin(), probe.end(), 0);

  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(config.seed ^ 0x5eedba7c4ULL);
  std::size_t cursor = order.size();

  std::ofstream csv(config.out_dir / "train_log.csv");
  if (!csv) throw IoError("cannot write " + (config.out_dir / "train_log.csv").string());
  csv << "step,lr,pixel_loss,content_loss,total_loss,grad_norm,probe_corner_err\n";
  csv << std::setprecision(9);

  TrainResult result;
  result.initial_probe_error = probe_error(net, data, probe, config.batch);
  result.final_probe_error = result.initial_probe_error;
  const auto start = std::chrono::steady_clock::now();
  Tape tape;
  for (int64_t step = 0; step < config.iterations; ++step) {
    std::vector<std::size_t> batch;
    while (static_cast<int64_t>(batch.size()) < config.batch) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    const auto [a, b] = synth::make_batch(data, batch);

    tape.reset();
    net.parameters().zero_grad();
    LossTerms terms;
    {
      Tape::Scope scope(tape);
      const ForwardResult f = net.forward(a, b);
      terms = net.loss(f, a, b, config.loss);
    }
    StepRecord rec;
    rec.step = step;
    rec.lr = learning_rate(config, step);
    rec.pixel = terms.pixel.item();
    rec.content = terms.content.item();
    rec.total = terms.total.item();
    if (!std::isfinite(rec.total)) {
      write_nan_dump(config, step, batch, data, terms);
      throw NumericalError("non-finite loss at step " + std::to_string(step) + "; batch pair ids in " +
                           (config.out_dir / "nan_dump.json").string());
    }
    tape.backward(terms.total);
    rec.grad_norm = grad_norm(params);
    if (!std::isfinite(rec.grad_norm)) {
      write_nan_dump(config, step, batch, data, terms);
      throw NumericalError("non-finite gradient at step " + std::to_string(step));
    }
    adam_step(params, adam, static_cast<float>(rec.lr));

    if ((step + 1) % config.probe_every == 0 || step + 1 == config.iterations) {
      rec.probe_corner_error = probe_error(net, data, probe, config.batch);
      result.final_probe_error = *rec.probe_corner_error;
    }
    csv << rec.step << ',' << rec.lr << ',' << rec.pixel << ',' << rec.content << ',' << rec.total << ','
        << rec.grad_norm << ',';
    if (rec.probe_corner_error) csv << *rec.probe_corner_error;
    csv << '\n';
    if ((step + 1) % config.checkpoint_every == 0 && step + 1 != config.iterations) {
      save_checkpoint(config.out_dir / ("checkpoint_" + std::to_string(step + 1) + ".abhe"), net, step + 1);
    }
    if (progress && rec.probe_corner_error) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      *progress << "step " << step + 1 << "/" << config.iterations << "  loss " << rec.total << "  probe corner err "
                << *rec.probe_corner_error << " px  (" << std::fixed << std::setprecision(1) << secs << " s)"
                << std::defaultfloat << std::setprecision(6) << std::endl;
    }
    result.log.push_back(rec);
  }
  csv.flush();
  result.checkpoint = config.out_dir / "model.abhe";
  save_checkpoint(result.checkpoint, net, config.iterations);
  return result;
}

// -- checkpoints ----------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const AbheNet& net, int64_t step) {
  const ModelConfig& c = net.config();
  std::vector<NamedTensor> entries(net.parameters().named().begin(), net.parameters().named().end());
  auto meta = [&](const std::string& name, std::vector<float> v) {
    const auto n = static_cast<int64_t>(v.size());
    entries.push_back({"meta." + name, Tensor::from_vector({n}, std::move(v))});
  };
  auto f = [](int64_t v) { return static_cast<float>(v); };
  meta("patch", {f(c.patch)});
  meta("backbone", {f(c.backbone.in_channels), f(c.backbone.stem_channels), f(c.backbone.num_heads),
                    f(c.backbone.window), f(c.backbone.mlp_ratio), f(c.backbone.blocks_per_stage)});
  meta("nonlocal", {c.nonlocal_temperature, c.nonlocal_blend});
  meta("head", {f(c.head.conv[0]), f(c.head.conv[1]), f(c.head.conv[2]), f(c.head.fc[0]), f(c.head.fc[1]),
                f(c.head.fc[2])});
  meta("max_hw", {f(c.max_positions)});
  // step counts past 2^24 would not survive f32; split them
  meta("step", {f(step >> 24), f(step & 0xFFFFFF)});
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  write_container(path, entries);
}

AbheNet load_checkpoint(const std::filesystem::path& path, int64_t* step) {
  const auto entries = read_container(path);
  auto meta = [&](const std::string& name, std::size_t n) {
    for (const auto& e : entries) {
      if (e.name == "meta." + name) {
        if (e.tensor.numel() != static_cast<int64_t>(n)) throw IoError(path.string() + ": malformed meta." + name);
        return std::vector<float>(e.tensor.data().begin(), e.tensor.data().end());
      }
    }
    throw IoError(path.string() + ": missing meta." + name + " (not a model checkpoint)");
  };
  auto i = [](float v) { return static_cast<int64_t>(v); };
  ModelConfig c;
  c.patch = i(meta("patch", 1)[0]);
  const auto bb = meta("backbone", 6);
  c.backbone.in_channels = i(bb[0]);
  c.backbone.stem_channels = i(bb[1]);
  c.backbone.num_heads = i(bb[2]);
  c.backbone.window = i(bb[3]);
  c.backbone.mlp_ratio = i(bb[4]);
  c.backbone.blocks_per_stage = static_cast<int>(bb[5]);
  const auto nl = meta("nonlocal", 2);
  c.nonlocal_temperature = nl[0];
  c.nonlocal_blend = nl[1];
  const auto hd = meta("head", 6);
  c.head.conv = {i(hd[0]), i(hd[1]), i(hd[2])};
  c.head.fc = {i(hd[3]), i(hd[4]), i(hd[5])};
  c.max_positions = i(meta("max_hw", 1)[0]);
  if (step) {
    const auto s = meta("step", 2);
    *step = (i(s[0]) << 24) + i(s[1]);
  }
  AbheNet net = [&] {
    try {
      return AbheNet::create(c, 0);
    } catch (const ConfigError& e) {
      throw IoError(path.string() + ": stored configuration is invalid: " + e.what());
    }
  }();
  net.parameters().load(entries);
  return net;
}

// -- evaluation -------------------------------------------------------------------

EvalReport evaluate(const AbheNet& net, const synth::Dataset& data, int64_t batch, std::ostream* warnings) {
  if (data.patch != net.config().patch) {
    throw ConfigError("dataset patch " + std::to_string(data.patch) + " differs from the model's " +
                      std::to_string(net.config().patch));
  }
  std::vector<std::size_t> all(data.samples.size());
  std::iota(all.begin(), all.end(), 0);
  const auto pred = predict(net, data, all, batch);
  const int64_t P = data.patch;
  const geometry::CornerOffsets zero{};

  EvalReport report;
  for (std::size_t k = 0; k < data.samples.size(); ++k) {
    const synth::PairSample& s = data.samples[k];
    PairMetrics m;
    m.pair_id = s.pair_id;
    m.tier = s.tier;
    m.predicted = pred[k];
    m.corner_error = geometry::corner_error(pred[k], s.gt_offsets);
    m.identity_corner_error = geometry::corner_error(zero, s.gt_offsets);
    const auto identity = metrics::aligned_overlap(s.patch_a, s.patch_b, geometry::Homography::identity());
    m.identity_psnr_db = metrics::psnr(identity);
    m.identity_ssim = metrics::ssim(identity);
    try {
      const auto h = geometry::homography_from_offsets(pred[k], P, P);
      const auto overlap = metrics::aligned_overlap(s.patch_a, s.patch_b, h);
      m.psnr_db = metrics::psnr(overlap);
      m.ssim = metrics::ssim(overlap);
    } catch (const NoOverlapError& e) {
      if (warnings) *warnings << "warning: pair " << s.pair_id << " skipped for PSNR/SSIM: " << e.what() << '\n';
    } catch (const DegenerateError& e) {
      if (warnings) *warnings << "warning: pair " << s.pair_id << " skipped for PSNR/SSIM: " << e.what() << '\n';
    }
    report.pairs.push_back(m);
  }

  auto summarise = [&](const std::vector<const PairMetrics*>& rows) {
    TierSummary t;
    t.count = static_cast<int64_t>(rows.size());
    for (const auto* r : rows) {
      t.corner_error += r->corner_error;
      t.identity_corner_error += r->identity_corner_error;
      t.identity_psnr_db += r->identity_psnr_db;
      t.identity_ssim += r->identity_ssim;
      if (r->psnr_db) {
        ++t.scored;
        t.psnr_db += *r->psnr_db;
        t.ssim += *r->ssim;
      }
    }
    const auto n = static_cast<double>(t.count);
    t.corner_error /= n;
    t.identity_corner_error /= n;
    t.identity_psnr_db /= n;
    t.identity_ssim /= n;
    if (t.scored > 0) {
      t.psnr_db /= static_cast<double>(t.scored);
      t.ssim /= static_cast<double>(t.scored);
    }
    return t;
  };
  const std::pair<synth::Tier, const char*> tiers[] = {
      {synth::Tier::kEasy, "Easy"}, {synth::Tier::kModerate, "Moderate"}, {synth::Tier::kHard, "Hard"}};
  std::vector<const PairMetrics*> everything;
  for (const auto& [tier, column] : tiers) {
    std::vector<const PairMetrics*> rows;
    for (const auto& p : report.pairs)
      if (p.tier == tier) rows.push_back(&p);
    if (rows.empty()) {
      if (warnings) *warnings << "warning: no " << synth::tier_name(tier) << " pairs; column " << column << " omitted\n";
      continue;
    }
    report.columns[column] = summarise(rows);
    everything.insert(everything.end(), rows.begin(), rows.end());
  }
  if (!everything.empty()) report.columns["Average"] = summarise(everything);
  return report;
}

void EvalReport::write_json(const std::filesystem::path& path) const {
  nlohmann::json cols = nlohmann::json::array();
  for (const char* c : kReportColumns) cols.push_back(c);
  nlohmann::json table = nlohmann::json::object();
  auto row = [&](const char* name, auto get) {
    nlohmann::json r = nlohmann::json::object();
    for (const auto& [col, t] : columns) r[col] = get(t);
    table[name] = r;
  };
  row("count", [](const TierSummary& t) { return t.count; });
  row("psnr_db", [](const TierSummary& t) { return t.psnr_db; });
  row("ssim", [](const TierSummary& t) { return t.ssim; });
  row("corner_err_px", [](const TierSummary& t) { return t.corner_error; });
  row("identity_psnr_db", [](const TierSummary& t) { return t.identity_psnr_db; });
  row("identity_ssim", [](const TierSummary& t) { return t.identity_ssim; });
  row("identity_corner_err_px", [](const TierSummary& t) { return t.identity_corner_error; });
  nlohmann::json pairs_json = nlohmann::json::array();
  for (const auto& p : pairs) {
    pairs_json.push_back({{"pair_id", p.pair_id},
                          {"tier", synth::tier_name(p.tier)},
                          {"psnr_db", p.psnr_db ? nlohmann::json(*p.psnr_db) : nlohmann::json(nullptr)},
                          {"ssim", p.ssim ? nlohmann::json(*p.ssim) : nlohmann::json(nullptr)},
                          {"corner_err_px", p.corner_error},
                          {"identity_psnr_db", p.identity_psnr_db},
                          {"identity_ssim", p.identity_ssim},
                          {"identity_corner_err_px", p.identity_corner_error},
                          {"offsets", p.predicted}});
  }
  const nlohmann::json doc = {{"columns", cols}, {"metrics", table}, {"pairs", pairs_json}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10) << "metric";
  for (const char* c : kReportColumns) out << ',' << c;
  out << '\n';
  auto row = [&](const char* name, auto get) {
    out << name;
    for (const char* c : kReportColumns) {
      out << ',';
      if (auto it = columns.find(c); it != columns.end()) out << get(it->second);
    }
    out << '\n';
  };
  row("count", [](const TierSummary& t) { return static_cast<double>(t.count); });
  row("psnr_db", [](const TierSummary& t) { return t.psnr_db; });
  row("ssim", [](const TierSummary& t) { return t.ssim; });
  row("corner_err_px", [](const TierSummary& t) { return t.corner_error; });
  row("identity_psnr_db", [](const TierSummary& t) { return t.identity_psnr_db; });
  row("identity_ssim", [](const TierSummary& t) { return t.identity_ssim; });
  row("identity_corner_err_px", [](const TierSummary& t) { return t.identity_corner_error; });
}

// -- inference --------------------------------------------------------------------

Inference infer(const AbheNet& net, const Tensor& a, const Tensor& b) {
  const int64_t P = net.config().patch;
  for (const Tensor* t : {&a, &b}) {
    if (t->rank() != 2 || t->dim(0) != P || t->dim(1) != P) {
      throw ShapeError("infer: images must be " + std::to_string(P) + "x" + std::to_string(P) + ", got " +
                       shape_to_string(t->shape()));
    }
  }
  Tape::Pause no_tape;
  const Tensor ia = reshape(a, {1, P, P, 1}), ib = reshape(b, {1, P, P, 1});
  const ForwardResult f = net.forward(ia, ib);
  Inference r;
  r.offsets = row_offsets(f.final_offsets(), 0);
  r.homography = geometry::homography_from_offsets(r.offsets, P, P);
  const Tensor h = r.homography.to_tensor();
  const Tensor aligned = geometry::align(ib, h);
  const Tensor mask = geometry::align(Tensor::full({1, P, P, 1}, 1.0f), h);
  r.aligned_b = reshape(aligned, {P, P});
  r.abs_diff = reshape(abs(sub(mul(ia, mask), aligned)), {P, P});
  return r;
}

void set_num_threads(int threads) {
  if (threads > 0) openblas_set_num_threads(threads);
}

}  // namespace abhe
