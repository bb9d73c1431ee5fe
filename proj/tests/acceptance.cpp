// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "loss_oracles.hpp"
#include "uwe/checkpoint.hpp"
#include "uwe/colorspace.hpp"
#include "uwe/curves.hpp"
#include "uwe/harness.hpp"
#include "uwe/losses.hpp"
#include "uwe/metrics.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

using namespace uwe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

Tensor<double> random_image(std::mt19937_64& rng, int n, int h, int w) {
  std::uniform_real_distribution<double> u(0, 1);
  Tensor<double> t(n, 3, h, w);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = u(rng);
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome color_round_trip() {
  const auto t0 = Clock::now();
  double worst = 0;
  long long used = 0, skipped = 0;
  for (int r = 0; r < 52; ++r)
    for (int g = 0; g < 52; ++g)
      for (int b = 0; b < 52; ++b) {
        const Vec3<double> x(r / 51.0, g / 51.0, b / 51.0);
        const double gap = std::min({std::abs(x[0] - x[1]), std::abs(x[1] - x[2]), std::abs(x[0] - x[2])});
        if (gap < 1e-3) {
          ++skipped;
          continue;
        }
        ++used;
        const Vec3<double> y = hsv_to_rgb_pixel<double>(rgb_to_hsv_pixel<double>(x));
        worst = std::max(worst, (x - y).cwiseAbs().maxCoeff());
      }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 60,
          fmt("max err %.3g over %lld pixels (%lld near-tie skipped), %.2fs", worst, used, skipped, secs)};
}

Outcome gradient_suite(std::uint64_t seed) {
  const auto t0 = Clock::now();
  const std::vector<GradcheckResult> rs = {gradcheck_colorspace(seed, 1000), gradcheck_curves(seed, 1000),
                                           gradcheck_network(seed, 20, 32)};
  const double secs = seconds_since(t0);
  bool ok = secs < 300;
  std::string d;
  for (const auto& r : rs) {
    ok = ok && r.passed();
    d += fmt("%s %lld/%lld max %.2e (tol %.0e); ", r.module.c_str(), r.checks - r.failures, r.checks,
             r.max_rel_error, r.tolerance);
  }
  return {ok, d + fmt("%.1fs", secs)};
}

Outcome curve_laws(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<double> hsv = random_image(rng, 2, 16, 16);
  for (Eigen::Index p = 0; p < hsv.pixels(); ++p) hsv.data(0, p) = std::min(hsv.data(0, p), 0.999);
  const bool unity_exact = apply_curves(hsv, CurveSet<double>::unity(16)).data == hsv.data;
  std::uniform_real_distribution<double> u(0, 1);
  const auto ramp = Curve<double>::identity_ramp(16);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    worst = std::max(worst, std::abs(eval_curve(ramp, x) - x));
  }
  return {unity_exact && worst <= 1e-7,
          fmt("unity identity %s, ramp max |S(x)-x| %.2e at 1000 x", unity_exact ? "exact" : "NOT exact", worst)};
}

Outcome loss_oracles(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto a = random_image(rng, 1, 16, 16);
  const auto b = random_image(rng, 1, 16, 16);
  const auto ex = make_random_extractor<double>(seed);
  const double e_l1 = std::abs(l1_loss(a, b) - oracle::l1_oracle(a, b));
  const double e_ssim = std::abs(ssim_loss(a, b) - (1 - oracle::ssim_oracle(a, b)));
  const double e_hsv = std::abs(hsv_loss(a, b) - oracle::hsv_oracle(a, b));
  const double e_perc = std::abs(perceptual_loss(a, b, *ex) - oracle::perceptual_oracle(a, b, *ex));

  const LossWeights w;
  LossBreakdown br;
  br.l1_pixel = 0.1;
  br.l1_whole = 0.2;
  br.ssim_pixel = 0.3;
  br.ssim_whole = 0.4;
  br.hsv = 0.5;
  br.perceptual = 0.6;
  br.compose(w, 0);
  const double hand = 0.5 * (0.1 + 0.3) + 0.5 * (0.2 + 0.4) + 1.0 * 0.5 + 0.5 * 0.6;
  const bool arithmetic = br.total == hand && std::abs(br.total - 1.3) <= 4e-16;
  const double worst = std::max({e_l1, e_ssim, e_hsv, e_perc});
  return {worst <= 1e-5 && arithmetic,
          fmt("|diff| l1 %.1e ssim %.1e hsv %.1e perceptual %.1e; breakdown total %.17g", e_l1, e_ssim, e_hsv, e_perc,
              br.total)};
}

Outcome metric_composition(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  bool exact = true;
  for (int i = 0; i < 5; ++i) {
    const auto r = uiqm(random_image(rng, 1, 32, 32));
    exact = exact && r.uiqm == 0.0282 * r.uicm + 0.2953 * r.uism + 3.5753 * r.uiconm;
  }
  const auto gt = Tensor<double>::constant(1, 3, 16, 16, 100.0 / 255);
  const auto pred = Tensor<double>::constant(1, 3, 16, 16, 116.0 / 255);
  const double psnr = mse_psnr(pred, gt).psnr_db;
  return {exact && std::abs(psnr - 24.0485) <= 1e-3,
          fmt("uiqm composition %s on 5 images, hand-case PSNR %.5f dB", exact ? "exact" : "NOT exact", psnr)};
}

TrainConfig toy_config(std::uint64_t seed) {
  TrainConfig c;  // default optimiser, widths, intervals and loss weights
  c.resize = c.crop = 32;
  c.batch_size = 8;
  c.epochs = 200;  // one step per epoch on 8 pairs
  c.max_steps = 200;
  c.checkpoint_every = 0;
  c.perceptual = "none";
  c.seed = seed;
  return c;
}

struct Recorder : TrainObserver {
  std::vector<std::vector<std::string>> batches;
  void on_step(long long, int, const std::vector<std::string>& ids, const LossBreakdown&) override {
    batches.push_back(ids);
  }
};

struct ToyRuns {
  fs::path data;
  AblationResult full, rgb_only;
  double full_secs = 0;
  MetricReport full_train;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  fs::path work = fs::temp_directory_path() / "uwe_acceptance";
  std::uint64_t seed = 1;
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--seed", seed);
  app.add_option("--only", only, "criteria to run (default all)");
  CLI11_PARSE(app, argc, argv);
  const auto want = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

  fs::remove_all(work);
  fs::create_directories(work);
  std::cout.setf(std::ios::unitbuf);

  // The toy runs back criteria 5, 6 and 8.
  ToyRuns toy;
  std::string toy_error;
  if (want(5) || want(6) || want(8)) {
    try {
      toy.data = work / "toy";
      write_toy_splits(toy.data, 8, 8, 32, seed);
      const TrainConfig cfg = toy_config(seed);
      auto t0 = Clock::now();
      toy.full = run_ablation(cfg, Variant::full, toy.data, work / "full");
      toy.full_secs = seconds_since(t0);
      const auto model = load_model(toy.full.manifest.final_checkpoint);
      toy.full_train = evaluate_model(*model, load_pairs(toy.data, Split::train));
      if (want(6)) toy.rgb_only = run_ablation(cfg, Variant::rgb_only, toy.data, work / "rgb_only");
    } catch (const std::exception& e) {
      toy_error = e.what();
    }
  }

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "color round-trip", [] { return color_round_trip(); }},
      {2, "gradient suite", [&] { return gradient_suite(seed); }},
      {3, "curve laws", [&] { return curve_laws(seed); }},
      {4, "loss oracles", [&] { return loss_oracles(seed); }},
      {5, "toy overfit",
       [&]() -> Outcome {
         if (!toy_error.empty()) return {false, toy_error};
         const double ssim = *toy.full_train.aggregate.ssim, psnr = *toy.full_train.aggregate.psnr_db;
         const long long steps = toy.full.manifest.total_steps;
         return {steps <= 200 && ssim >= 0.90 && psnr >= 25 && toy.full_secs < 40 * 60,
                 fmt("%lld steps, train SSIM %.4f, PSNR %.2f dB, %.0fs", steps, ssim, psnr, toy.full_secs)};
       }},
      {6, "ablation direction",
       [&]() -> Outcome {
         if (!toy_error.empty()) return {false, toy_error};
         const double f = *toy.full.report.aggregate.ssim, r = *toy.rgb_only.report.aggregate.ssim;
         return {f >= r - 0.02, fmt("held-out SSIM full %.4f (%lld params) vs rgb_only %.4f (%lld params)", f,
                                   toy.full.parameters, r, toy.rgb_only.parameters)};
       }},
      {7, "metric composition", [&] { return metric_composition(seed); }},
      {8, "determinism",
       [&]() -> Outcome {
         if (!toy_error.empty()) return {false, toy_error};
         TrainConfig cfg = toy_config(seed);
         cfg.max_steps = 12;
         Recorder a, b;
         const auto ma = train(cfg, toy.data, work / "det_a", &a);
         const auto mb = train(cfg, toy.data, work / "det_b", &b);
         const bool batches = !a.batches.empty() && a.batches == b.batches;
         const bool losses = ma.step_losses == mb.step_losses;
         const fs::path ckpt = toy.full.manifest.final_checkpoint;
         const fs::path in = toy.data / "test" / "raw";
         enhance(ckpt, in, work / "enh_a", {true, false});
         enhance(ckpt, in, work / "enh_b", {true, false});
         std::size_t files = 0, same = 0;
         for (const auto& e : fs::directory_iterator(work / "enh_a")) {
           ++files;
           same += slurp(e.path()) == slurp(work / "enh_b" / e.path().filename());
         }
         return {batches && losses && files > 0 && same == files,
                 fmt("%zu batches %s, step losses %s, %zu/%zu inference files byte-identical", a.batches.size(),
                     batches ? "identical" : "DIFFER", losses ? "identical" : "DIFFER", same, files)};
       }},
  };

  bool all = true;
  for (const auto& c : criteria) {
    if (!want(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.id << ' ' << c.name << ": " << o.detail << '\n';
  }
  return all ? 0 : 1;
}
