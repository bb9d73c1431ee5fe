#include "uwe/harness.hpp"

#include "uwe/colorspace.hpp"
#include "uwe/curves.hpp"
#include "uwe/losses.hpp"
#include "uwe/optim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace uwe {

namespace fs = std::filesystem;

// Seeds and batching ------------------------------------------------------------

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t st = seed;
  std::uint64_t h = splitmix64(st);
  st = h ^ a;
  h = splitmix64(st);
  st = h ^ b;
  return splitmix64(st);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t dataset_size, int batch_size, std::uint64_t seed,
                                                    int epoch) {
  if (batch_size < 1) throw std::invalid_argument("epoch_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  seeded_shuffle(order, mix_seed(seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_bytes(std::uint64_t& h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= kFnvPrime;
  }
}

void fnv_file(std::uint64_t& h, const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof(buf));
    fnv_bytes(h, buf, static_cast<std::size_t>(in.gcount()));
  }
}

}  // namespace

std::uint64_t dataset_checksum(const PairedDataset& ds) {
  std::vector<const PairEntry*> sorted;
  for (const auto& e : ds.entries) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
  std::uint64_t h = kFnvOffset;
  for (const auto* e : sorted) {
    fnv_bytes(h, e->id.data(), e->id.size() + 1);
    fnv_file(h, e->raw);
    fnv_file(h, e->reference);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::unique_ptr<FeatureExtractor<TrainScalar>> make_extractor(const TrainConfig& cfg, std::vector<std::string>* warnings) {
  std::unique_ptr<FeatureExtractor<TrainScalar>> ex;
  if (cfg.perceptual == "none" || cfg.w_perc == 0) {
    ex = std::make_unique<UnavailableExtractor<TrainScalar>>("disabled");
  } else if (cfg.perceptual == "identity") {
    ex = std::make_unique<IdentityExtractor<TrainScalar>>();
  } else if (cfg.perceptual == "random") {
    ex = make_random_extractor<TrainScalar>(mix_seed(cfg.seed, 0xFEA7));
  } else {
    ex = load_vgg19_extractor<TrainScalar>(cfg.vgg_weights, cfg.vgg_layer);
    if (!ex->available()) {
      const std::string msg = "perceptual loss disabled: " + ex->name();
      std::cerr << "warning: " << msg << '\n';
      if (warnings) warnings->push_back(msg);
    }
  }
  return ex;
}

// Manifest ----------------------------------------------------------------------

namespace {

nlohmann::json breakdown_json(const LossBreakdown& b) {
  return {{"total", b.total},           {"l1_pixel", b.l1_pixel},     {"l1_whole", b.l1_whole},
          {"ssim_pixel", b.ssim_pixel}, {"ssim_whole", b.ssim_whole}, {"hsv", b.hsv},
          {"perceptual", b.perceptual}, {"lambda_pixel", b.lambda_pixel}, {"lambda_whole", b.lambda_whole}};
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string() + " (disk full?)");
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string RunManifest::to_json() const {
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : config.entries()) cfg[k] = v;
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    auto j = breakdown_json(e.mean);
    j["epoch"] = e.epoch;
    j["steps"] = e.steps;
    epochs_json.push_back(j);
  }
  nlohmann::json j = {{"status", status},
                      {"config", cfg},
                      {"dataset", {{"root", data_root}, {"pairs", pairs}, {"checksum_fnv1a64", dataset_checksum}}},
                      {"start_epoch", start_epoch},
                      {"total_steps", total_steps},
                      {"epochs", epochs_json},
                      {"step_losses", step_losses},
                      {"warnings", warnings},
                      {"loss_csv", loss_csv},
                      {"final_checkpoint", final_checkpoint},
                      {"report", report}};
  return j.dump(2) + "\n";
}

void RunManifest::write(const fs::path& path) const { write_atomic(path, to_json()); }

// Training ---------------------------------------------------------------------

namespace {

struct Batch {
  Tensor<TrainScalar> raw;
  Tensor<TrainScalar> reference;
  std::vector<std::string> ids;
};

Batch assemble(const std::vector<PairedSample>& samples) {
  const int h = samples.front().raw.h, w = samples.front().raw.w;
  const int n = static_cast<int>(samples.size());
  Batch b{Tensor<TrainScalar>(n, 3, h, w), Tensor<TrainScalar>(n, 3, h, w), {}};
  for (int i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    if (s.raw.h != h || s.raw.w != w || s.reference.h != h || s.reference.w != w) {
      throw ShapeError("batch images differ in size; set resize/crop so training samples agree");
    }
    b.raw.image(i) = s.raw.data.cast<TrainScalar>();
    b.reference.image(i) = s.reference.data.cast<TrainScalar>();
    b.ids.push_back(s.id);
  }
  return b;
}

const char* kLossCsvHeader =
    "epoch,step,total,l1_pixel,l1_whole,ssim_pixel,ssim_whole,hsv,perceptual,lambda_pixel,lambda_whole\n";

void accumulate(LossBreakdown& acc, const LossBreakdown& b) {
  acc.total += b.total;
  acc.l1_pixel += b.l1_pixel;
  acc.l1_whole += b.l1_whole;
  acc.ssim_pixel += b.ssim_pixel;
  acc.ssim_whole += b.ssim_whole;
  acc.hsv += b.hsv;
  acc.perceptual += b.perceptual;
  acc.lambda_pixel = b.lambda_pixel;
  acc.lambda_whole = b.lambda_whole;
}

void scale(LossBreakdown& b, double s) {
  b.total *= s;
  b.l1_pixel *= s;
  b.l1_whole *= s;
  b.ssim_pixel *= s;
  b.ssim_whole *= s;
  b.hsv *= s;
  b.perceptual *= s;
}

bool has_split(const fs::path& root, const char* split) { return fs::is_directory(root / split / "raw"); }

}  // namespace

RunManifest train(const TrainConfig& cfg, const fs::path& data_root, const fs::path& out_dir, TrainObserver* observer) {
  cfg.validate();
  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.config = cfg;
  manifest.data_root = data_root.string();
  const fs::path manifest_path = out_dir / "manifest.json";

  try {
    const PairedDataset ds = load_pairs(data_root, Split::train, cfg.seed);
    manifest.warnings = ds.warnings;
    manifest.pairs = ds.size();
    manifest.dataset_checksum = hex64(dataset_checksum(ds));

    // Small datasets stay decoded in memory.
    constexpr std::size_t kCacheLimit = 256;
    std::vector<PairedSample> cache;
    if (ds.size() <= kCacheLimit) {
      for (std::size_t i = 0; i < ds.size(); ++i) cache.push_back(ds.load(i));
    }

    TrainModel model(cfg.network());
    model.init(cfg.seed);
    Adam<TrainScalar> opt(cfg.adam());
    const auto params = model.parameters();
    long long step = 0;
    if (!cfg.resume.empty()) {
      const CheckpointMeta meta = load_checkpoint(cfg.resume, model, &opt);
      manifest.start_epoch = meta.epoch;
      step = meta.step;
    }
    const auto extractor = make_extractor(cfg, &manifest.warnings);
    LossWeights weights = cfg.loss_weights();
    const bool rgb_only = cfg.variant == Variant::rgb_only;
    if (rgb_only) {
      weights.w_hsv = 0;
      weights.w_perc = 0;
    }

    manifest.loss_csv = (out_dir / "loss.csv").string();
    std::ofstream csv(manifest.loss_csv, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + manifest.loss_csv);
    csv << kLossCsvHeader << std::setprecision(9);

    const TransformConfig transform = cfg.transform();
    bool stop = false;
    for (int epoch = manifest.start_epoch; epoch < cfg.epochs && !stop; ++epoch) {
      EpochRecord rec;
      rec.epoch = epoch;
      for (const auto& idx : epoch_batches(ds.size(), cfg.batch_size, cfg.seed, epoch)) {
        if (cfg.max_steps > 0 && step >= cfg.max_steps) {
          stop = true;
          break;
        }
        std::vector<PairedSample> samples;
        for (std::size_t i : idx) {
          const PairedSample s = cache.empty() ? ds.load(i) : cache[i];
          samples.push_back(train_transform(s, mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), i), transform));
        }
        const Batch batch = assemble(samples);

        // A diverged network surfaces as a DomainError from the colour conversions
        // (applied to the rgb branch inside the model and to the outputs inside the
        // losses); it is reported like a non-finite loss.
        ModelOutput<TrainScalar> out;
        TotalLossGrad<TrainScalar> tl;
        try {
          out = model.forward(batch.raw, Mode::train);
          const auto& final_out = rgb_only ? out.rgb_branch : out.enhanced;
          tl = total_loss_grad(out.rgb_branch, final_out, batch.reference, weights, epoch, *extractor);
        } catch (const DomainError&) {
          tl.breakdown.total = std::numeric_limits<double>::quiet_NaN();
        }
        const LossBreakdown& b = tl.breakdown;
        if (!std::isfinite(b.total)) {
          std::string ids;
          for (const auto& id : batch.ids) ids += (ids.empty() ? "" : " ") + id;
          std::ofstream dump(out_dir / "nonfinite_batch.txt");
          dump << "epoch " << epoch << " step " << step << "\nbatch " << ids << "\n"
               << breakdown_json(b).dump(2) << "\n";
          throw NonFiniteLossError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(step) + ", batch [" + ids + "]",
                                   batch.ids);
        }
        model.zero_grad();
        model.backward(tl.grad_final, &tl.grad_pixel);
        opt.step(params);

        csv << epoch << ',' << step << ',' << b.total << ',' << b.l1_pixel << ',' << b.l1_whole << ','
            << b.ssim_pixel << ',' << b.ssim_whole << ',' << b.hsv << ',' << b.perceptual << ',' << b.lambda_pixel
            << ',' << b.lambda_whole << '\n';
        if (!csv) throw std::runtime_error("write failed for " + manifest.loss_csv + " (disk full?)");
        manifest.step_losses.push_back(b.total);
        accumulate(rec.mean, b);
        ++rec.steps;
        ++step;
        if (observer) observer->on_step(step, epoch, batch.ids, b);
      }
      if (rec.steps == 0) break;
      scale(rec.mean, 1.0 / static_cast<double>(rec.steps));
      manifest.epochs.push_back(rec);
      csv.flush();
      const bool epoch_done = !stop;
      if (epoch_done && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch + 1);
        save_checkpoint(out_dir / "checkpoints" / name, model, &opt,
                        CheckpointMeta{cfg.network(), epoch + 1, step, cfg.seed, "epoch"});
      }
    }
    manifest.total_steps = step;

    const int done_epochs = manifest.epochs.empty() ? manifest.start_epoch : manifest.epochs.back().epoch + 1;
    manifest.final_checkpoint = (out_dir / "final.ckpt").string();
    save_checkpoint(manifest.final_checkpoint, model, &opt,
                    CheckpointMeta{cfg.network(), done_epochs, step, cfg.seed, "final"});

    const PairedDataset eval_ds = has_split(data_root, "test") ? load_pairs(data_root, Split::test) : ds;
    manifest.metrics = evaluate_model(model, eval_ds);
    manifest.report = (out_dir / "report.csv").string();
    manifest.metrics.write_csv(manifest.report);
    manifest.metrics.write_json(out_dir / "report.json");

    manifest.status = "completed";
    manifest.write(manifest_path);
  } catch (const std::exception& e) {
    manifest.status = std::string("aborted: ") + e.what();
    try {
      manifest.write(manifest_path);
    } catch (...) {
    }
    throw;
  }
  return manifest;
}

// Inference -----------------------------------------------------------------------

std::unique_ptr<TrainModel> load_model(const fs::path& checkpoint, const NetworkConfig* expected) {
  const CheckpointMeta meta = read_checkpoint_meta(checkpoint);
  if (expected) {
    const std::string diff = network_mismatch(*expected, meta.network);
    if (!diff.empty()) {
      throw CheckpointError("checkpoint " + checkpoint.string() + " (format v" + std::to_string(kCheckpointVersion) +
                            "): configuration mismatch (expected vs file): " + diff);
    }
  }
  auto model = std::make_unique<TrainModel>(meta.network);
  load_checkpoint<TrainScalar>(checkpoint, *model, nullptr);
  return model;
}

ModelOutput<Real> run_inference(TrainModel& model, const Image& img) {
  const auto out = model.forward(img.cast<TrainScalar>(), Mode::eval);
  ModelOutput<Real> r;
  r.enhanced = out.enhanced.cast<Real>();
  r.rgb_branch = out.rgb_branch.cast<Real>();
  r.hsv_input = out.hsv_input.cast<Real>();
  r.hsv_adjusted = out.hsv_adjusted.cast<Real>();
  r.hsv_branch_rgb = out.hsv_branch_rgb.cast<Real>();
  r.attention = out.attention.cast<Real>();
  r.knots = out.knots.cast<Real>();
  return r;
}

std::string curves_csv(const Matrix<Real>& knots, int intervals) {
  static const char* names[CurveSet<Real>::kCurves] = {"value_by_value", "saturation_by_saturation",
                                                       "saturation_by_hue", "hue_by_hue"};
  std::ostringstream os;
  os << "image,curve,index,x,knot\n" << std::setprecision(9);
  const int len = intervals + 1;
  for (Eigen::Index img = 0; img < knots.cols(); ++img)
    for (int c = 0; c < CurveSet<Real>::kCurves; ++c)
      for (int m = 0; m < len; ++m) {
        os << img << ',' << names[c] << ',' << m << ',' << static_cast<double>(m) / intervals << ','
           << knots(c * len + m, img) << '\n';
      }
  return os.str();
}

namespace {

fs::path with_suffix(const fs::path& out, const std::string& suffix, const std::string& ext) {
  return out.parent_path() / (out.stem().string() + suffix + ext);
}

void enhance_one(TrainModel& model, const fs::path& in, const fs::path& out, const EnhanceOptions& opts) {
  const Image img = read_image(in);
  const auto r = run_inference(model, img);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_png(out, r.enhanced);
  if (opts.dump_intermediates) {
    write_png(with_suffix(out, "_rgb_branch", ".png"), r.rgb_branch);
    if (r.hsv_branch_rgb.size() > 0) write_png(with_suffix(out, "_hsv_branch", ".png"), r.hsv_branch_rgb);
    if (r.attention.size() > 0) {
      write_png(with_suffix(out, "_attention_rgb", ".png"), channel_slice(r.attention, 0, 3));
      write_png(with_suffix(out, "_attention_hsv", ".png"), channel_slice(r.attention, 3, 3));
    }
  }
  if ((opts.dump_intermediates || opts.dump_curves) && r.knots.size() > 0) {
    std::ofstream csv(with_suffix(out, "_curves", ".csv"));
    csv << curves_csv(r.knots, model.config().intervals);
    if (!csv) throw std::runtime_error("cannot write curve table next to " + out.string());
  }
}

}  // namespace

void enhance(const fs::path& checkpoint, const fs::path& in_path, const fs::path& out_path, const EnhanceOptions& opts,
             const NetworkConfig* expected) {
  auto model = load_model(checkpoint, expected);
  if (fs::is_directory(in_path)) {
    const auto files = list_images(in_path);
    if (files.empty()) throw std::runtime_error("no images in " + in_path.string());
    fs::create_directories(out_path);
    for (const auto& f : files) enhance_one(*model, f, out_path / (f.stem().string() + ".png"), opts);
  } else {
    enhance_one(*model, in_path, out_path, opts);
  }
}

MetricReport evaluate_model(TrainModel& model, const PairedDataset& ds, const std::optional<fs::path>& pred_dir) {
  if (pred_dir) fs::create_directories(*pred_dir);
  MetricReport report;
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ds.entries[a].id < ds.entries[b].id; });
  for (std::size_t i : order) {
    const PairedSample s = ds.load(i);
    const Image pred = quantize8(run_inference(model, s.raw).enhanced);
    if (pred_dir) write_png(*pred_dir / (s.id + ".png"), pred);
    report.per_image.push_back(evaluate_image(s.id, pred, &s.reference));
  }
  report.finalize();
  return report;
}

// Ablation ------------------------------------------------------------------------

AblationResult run_ablation(TrainConfig cfg, Variant variant, const fs::path& data_root, const fs::path& out_dir) {
  if (!has_split(data_root, "test")) {
    throw std::runtime_error("ablation needs a held-out split at " + (data_root / "test").string());
  }
  cfg.variant = variant;
  AblationResult r;
  r.variant = variant;
  r.manifest = train(cfg, data_root, out_dir);
  r.report = r.manifest.metrics;
  TrainModel probe(cfg.network());
  r.parameters = probe.parameter_count();
  return r;
}

// Gradient checks ---------------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::string GradcheckResult::summary() const {
  std::ostringstream os;
  os << module << ": " << (passed() ? "PASS" : "FAIL") << " (" << checks << " checks, " << failures
     << " failures, max rel err " << std::setprecision(3) << std::scientific << max_rel_error << ", tol " << tolerance
     << ")";
  if (!detail.empty()) os << " " << detail;
  return os.str();
}

namespace {

void record(GradcheckResult& r, double analytic, double numeric, double floor) {
  const double e = relative_error(analytic, numeric, floor);
  ++r.checks;
  r.max_rel_error = std::max(r.max_rel_error, e);
  if (!(e <= r.tolerance)) ++r.failures;
}

double dist_to_grid(double x, double spacing) {
  const double t = x / spacing;
  return std::abs(t - std::round(t)) * spacing;
}

}  // namespace

GradcheckResult gradcheck_colorspace(std::uint64_t seed, int points) {
  GradcheckResult r{"colorspace", "", 0, 0, 0, 1e-3};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr double margin = 1e-3, step = 1e-4, floor = 1e-6;

  int done = 0;
  while (done < points) {  // rgb -> hsv away from channel ties
    Vec3<double> p(u(rng), u(rng), u(rng));
    if ((p.array() < margin).any() || (p.array() > 1 - margin).any()) continue;
    if (std::abs(p[0] - p[1]) < margin || std::abs(p[1] - p[2]) < margin || std::abs(p[0] - p[2]) < margin) continue;
    Mat3<double> jac;
    const Vec3<double> base = rgb_to_hsv_pixel<double>(p, &jac);
    if (base[0] < margin || base[0] > 1 - margin) continue;  // hue wrap
    for (int k = 0; k < 3; ++k) {
      Vec3<double> a = p, b = p;
      a[k] += step;
      b[k] -= step;
      const Vec3<double> num = (rgb_to_hsv_pixel<double>(a) - rgb_to_hsv_pixel<double>(b)) / (2 * step);
      for (int i = 0; i < 3; ++i) record(r, jac(i, k), num[i], floor);
    }
    ++done;
  }
  done = 0;
  while (done < points) {  // hsv -> rgb away from the 60-degree breakpoints
    Vec3<double> q(u(rng), u(rng), u(rng));
    if ((q.array() < margin).any() || (q.array() > 1 - margin).any()) continue;
    if (dist_to_grid(q[0], 1.0 / 6.0) < margin) continue;
    Mat3<double> jac;
    hsv_to_rgb_pixel<double>(q, &jac);
    for (int k = 0; k < 3; ++k) {
      Vec3<double> a = q, b = q;
      a[k] += step;
      b[k] -= step;
      const Vec3<double> num = (hsv_to_rgb_pixel<double>(a) - hsv_to_rgb_pixel<double>(b)) / (2 * step);
      for (int i = 0; i < 3; ++i) record(r, jac(i, k), num[i], floor);
    }
    ++done;
  }
  r.detail = "(" + std::to_string(points) + " points per direction)";
  return r;
}

GradcheckResult gradcheck_curves(std::uint64_t seed, int points) {
  GradcheckResult r{"curves", "", 0, 0, 0, 1e-3};
  constexpr int intervals = 16;
  constexpr double margin = 1e-3, step = 1e-4, floor = 1e-6;
  const int len = intervals + 1;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nrm(0.0, 1.0);

  auto interior = [&](double x) { return x > margin && x < 1 - margin; };
  int done = 0;
  while (done < points) {
    Tensor<double> hsv(1, 3, 1, 1);
    for (int c = 0; c < 3; ++c) hsv.data(c, 0) = u(rng);
    Matrix<double> knots(4 * len, 1);
    for (Eigen::Index i = 0; i < knots.size(); ++i) knots(i, 0) = 0.6 + 0.8 * u(rng);
    const double h = hsv.data(0, 0), s = hsv.data(1, 0), v = hsv.data(2, 0);
    bool ok = interior(h) && interior(s) && interior(v);
    for (double x : {h, s, v}) ok = ok && dist_to_grid(x, 1.0 / intervals) >= margin;
    if (!ok) continue;
    const auto kc = knots.col(0);
    const double pre_v = v * eval_curve(kc.segment(0, len), v);
    const double pre_s = s * eval_curve(kc.segment(len, len), s);
    const double post_s = std::clamp(pre_s, 0.0, 1.0) * eval_curve(kc.segment(2 * len, len), h);
    const double pre_h = h * eval_curve(kc.segment(3 * len, len), h);
    if (!interior(pre_v) || !interior(pre_s) || !interior(post_s)) continue;
    if (dist_to_grid(pre_h, 1.0) < margin) continue;

    Tensor<double> g(1, 3, 1, 1);
    for (int c = 0; c < 3; ++c) g.data(c, 0) = nrm(rng);
    auto loss = [&](const Tensor<double>& x, const Matrix<double>& k) {
      return (apply_curves(x, k).data.array() * g.data.array()).sum();
    };
    const auto grads = apply_curves_backward(hsv, knots, g);
    for (int c = 0; c < 3; ++c) {
      Tensor<double> a = hsv, b = hsv;
      a.data(c, 0) += step;
      b.data(c, 0) -= step;
      record(r, grads.hsv.data(c, 0), (loss(a, knots) - loss(b, knots)) / (2 * step), floor);
    }
    for (Eigen::Index i = 0; i < knots.size(); ++i) {
      Matrix<double> a = knots, b = knots;
      a(i, 0) += step;
      b(i, 0) -= step;
      record(r, grads.knots(i, 0), (loss(hsv, a) - loss(hsv, b)) / (2 * step), floor);
    }
    ++done;
  }
  r.detail = "(" + std::to_string(points) + " points, inputs and all knots)";
  return r;
}

GradcheckResult gradcheck_network(std::uint64_t seed, int params, int size) {
  GradcheckResult r{"network", "", 0, 0, 0, 2e-2};
  // Small step: 64-channel leaky-rectifier stacks put many activations near a kink.
  constexpr double step = 1e-6, floor = 1e-4;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::normal_distribution<double> nrm(0.0, 1.0);

  Model<double> model(NetworkConfig{});
  model.init(seed);
  Tensor<double> x(1, 3, size, size), g_final(1, 3, size, size), g_pixel(1, 3, size, size);
  for (Eigen::Index i = 0; i < x.data.size(); ++i) {
    x.data.data()[i] = u(rng);
    g_final.data.data()[i] = nrm(rng);
    g_pixel.data.data()[i] = nrm(rng);
  }
  auto loss = [&]() {
    const auto out = model.forward(x, Mode::train);
    return (out.enhanced.data.array() * g_final.data.array()).sum() +
           (out.rgb_branch.data.array() * g_pixel.data.array()).sum();
  };
  model.zero_grad();
  loss();
  model.backward(g_final, &g_pixel);
  const auto list = model.parameters();

  for (int k = 0; k < params; ++k) {
    auto* p = list.params[static_cast<std::size_t>(rng() % list.params.size())];
    const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p->value.size()));
    const double analytic = p->grad.data()[i];
    const double orig = p->value.data()[i];
    p->value.data()[i] = orig + step;
    const double lp = loss();
    p->value.data()[i] = orig - step;
    const double lm = loss();
    p->value.data()[i] = orig;
    record(r, analytic, (lp - lm) / (2 * step), floor);
  }
  r.detail = "(" + std::to_string(params) + " random parameters, " + std::to_string(size) + "x" +
             std::to_string(size) + " input)";
  return r;
}

GradcheckResult gradcheck_losses(std::uint64_t seed, int coords, int size) {
  GradcheckResult r{"losses", "", 0, 0, 0, 1e-2};
  constexpr double step = 1e-5, floor = 1e-6;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Tensor<double> pixel(1, 3, size, size), fin(1, 3, size, size), gt(1, 3, size, size);
  for (Eigen::Index i = 0; i < gt.data.size(); ++i) {
    pixel.data.data()[i] = u(rng);
    fin.data.data()[i] = u(rng);
    gt.data.data()[i] = u(rng);
  }
  const auto extractor = make_random_extractor<double>(seed);
  const LossWeights w;
  const auto tl = total_loss_grad(pixel, fin, gt, w, 0, *extractor);
  for (int site = 0; site < 2; ++site) {
    Tensor<double>& x = site == 0 ? pixel : fin;
    const Tensor<double>& g = site == 0 ? tl.grad_pixel : tl.grad_final;
    for (int k = 0; k < coords; ++k) {
      const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(x.data.size()));
      const double orig = x.data.data()[i];
      x.data.data()[i] = orig + step;
      const double lp = total_loss(pixel, fin, gt, w, 0, *extractor).total;
      x.data.data()[i] = orig - step;
      const double lm = total_loss(pixel, fin, gt, w, 0, *extractor).total;
      x.data.data()[i] = orig;
      record(r, g.data.data()[i], (lp - lm) / (2 * step), floor);
    }
  }
  r.detail = "(total loss, " + std::to_string(coords) + " coordinates per output site)";
  return r;
}

std::vector<GradcheckResult> gradcheck(const std::string& module, std::uint64_t seed) {
  std::vector<GradcheckResult> out;
  const bool all = module == "all";
  if (all || module == "colorspace") out.push_back(gradcheck_colorspace(seed));
  if (all || module == "curves") out.push_back(gradcheck_curves(seed));
  if (all || module == "network") out.push_back(gradcheck_network(seed));
  if (all || module == "losses") out.push_back(gradcheck_losses(seed));
  if (out.empty()) throw std::invalid_argument("unknown gradcheck module '" + module + "'");
  return out;
}

// Dataset utilities -------------------------------------------------------------

std::size_t degrade_dir(const DegradeParams& params, const fs::path& in_dir, const fs::path& out_dir,
                        std::uint64_t seed) {
  const auto files = list_images(in_dir);
  if (files.empty()) throw std::runtime_error("no images in " + in_dir.string());
  fs::create_directories(out_dir);
  std::uint64_t k = 0;
  for (const auto& f : files) {
    DegradeParams p = params;
    p.seed = mix_seed(seed, k++);
    write_png(out_dir / (f.stem().string() + ".png"), degrade(read_image(f), p));
  }
  return files.size();
}

void write_toy_splits(const fs::path& root, int train_count, int test_count, int size, std::uint64_t seed) {
  ToyDatasetSpec spec;
  spec.size = size;
  spec.count = train_count;
  spec.seed = seed;
  write_toy_dataset(root / "train", spec);
  spec.count = test_count;
  spec.seed = mix_seed(seed, 0x7E57);
  write_toy_dataset(root / "test", spec);
}

}  // namespace uwe
