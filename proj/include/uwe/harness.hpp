#ifndef UWE_HARNESS_HPP
#define UWE_HARNESS_HPP

#include "uwe/checkpoint.hpp"
#include "uwe/config.hpp"
#include "uwe/data.hpp"
#include "uwe/features.hpp"
#include "uwe/metrics.hpp"
#include "uwe/network.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace uwe {

/// Training and inference run in single precision; metrics and the gradient
/// checks use double.
using TrainScalar = float;
using TrainModel = Model<TrainScalar>;

// Seeds and batching ------------------------------------------------------------

/// Order-sensitive seed mixing (splitmix64 over the arguments).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Dataset indices for each batch of `epoch`; the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t dataset_size, int batch_size, std::uint64_t seed,
                                                    int epoch);

/// FNV-1a over ids and file bytes of every pair, in id order.
std::uint64_t dataset_checksum(const PairedDataset& ds);

std::string hex64(std::uint64_t v);

/// Builds the perceptual feature extractor named in the config. A VGG file
/// that cannot be loaded yields an unavailable extractor plus a warning.
std::unique_ptr<FeatureExtractor<TrainScalar>> make_extractor(const TrainConfig& cfg,
                                                              std::vector<std::string>* warnings = nullptr);

// Training ---------------------------------------------------------------------

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& msg, std::vector<std::string> ids)
      : std::runtime_error(msg), batch_ids(std::move(ids)) {}
  std::vector<std::string> batch_ids;
};

struct EpochRecord {
  int epoch = 0;
  long long steps = 0;  // steps run in this epoch
  LossBreakdown mean;   // component means over the epoch's steps
};

struct RunManifest {
  std::string status = "running";
  TrainConfig config;
  std::string data_root;
  std::size_t pairs = 0;
  std::string dataset_checksum;
  int start_epoch = 0;
  long long total_steps = 0;
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;  // total loss per step of this run
  std::vector<std::string> warnings;
  std::string loss_csv;
  std::string final_checkpoint;
  std::string report;       // metric report CSV, empty when none was produced
  MetricReport metrics;     // in-memory copy of that report

  std::string to_json() const;
  /// Writes to `path` via a temporary file and rename.
  void write(const std::filesystem::path& path) const;
};

/// Hook for tests: called after every optimiser step.
struct TrainObserver {
  virtual ~TrainObserver() = default;
  virtual void on_step(long long /*step*/, int /*epoch*/, const std::vector<std::string>& /*batch_ids*/,
                       const LossBreakdown& /*loss*/) {}
};

/// Trains on the train split of `data_root` and writes into `out_dir`:
/// loss.csv, checkpoints/epoch_NNNN.ckpt, final.ckpt, report.csv/json (on the
/// test split if present, else on the training pairs) and manifest.json.
RunManifest train(const TrainConfig& cfg, const std::filesystem::path& data_root, const std::filesystem::path& out_dir,
                  TrainObserver* observer = nullptr);

// Inference -----------------------------------------------------------------------

/// Model with the checkpoint's configuration and weights. With `expected`, a
/// configuration difference is a CheckpointError.
std::unique_ptr<TrainModel> load_model(const std::filesystem::path& checkpoint,
                                       const NetworkConfig* expected = nullptr);

/// Eval-mode forward pass of one image, returned in double precision.
ModelOutput<Real> run_inference(TrainModel& model, const Image& img);

struct EnhanceOptions {
  bool dump_intermediates = false;  // branch outputs, attention halves and curves
  bool dump_curves = false;         // curves only
};

/// `in_path` may be an image (then `out_path` is the output file) or a
/// directory (then `out_path` is a directory receiving <stem>.png files).
void enhance(const std::filesystem::path& checkpoint, const std::filesystem::path& in_path,
             const std::filesystem::path& out_path, const EnhanceOptions& opts = {},
             const NetworkConfig* expected = nullptr);

/// Knot table: image,curve,index,x,knot.
std::string curves_csv(const Matrix<Real>& knots, int intervals);

/// Runs every pair through the model and scores the 8-bit quantised outputs.
/// With `pred_dir`, predictions are also written there as <id>.png.
MetricReport evaluate_model(TrainModel& model, const PairedDataset& ds,
                            const std::optional<std::filesystem::path>& pred_dir = std::nullopt);

// Ablation ------------------------------------------------------------------------

struct AblationResult {
  Variant variant = Variant::full;
  long long parameters = 0;
  RunManifest manifest;
  MetricReport report;  // on the held-out test split
};

/// Trains `variant` and scores it on `<data_root>/test`.
AblationResult run_ablation(TrainConfig cfg, Variant variant, const std::filesystem::path& data_root,
                            const std::filesystem::path& out_dir);

// Gradient checks ---------------------------------------------------------------

struct GradcheckResult {
  std::string module;
  std::string detail;
  long long checks = 0;
  long long failures = 0;
  double max_rel_error = 0;
  double tolerance = 0;

  bool passed() const { return checks > 0 && failures == 0; }
  std::string summary() const;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

GradcheckResult gradcheck_colorspace(std::uint64_t seed = 1, int points = 1000);
GradcheckResult gradcheck_curves(std::uint64_t seed = 1, int points = 1000);
GradcheckResult gradcheck_network(std::uint64_t seed = 1, int params = 20, int size = 32);
GradcheckResult gradcheck_losses(std::uint64_t seed = 1, int coords = 40, int size = 16);

/// `module` is colorspace, curves, network, losses or all.
std::vector<GradcheckResult> gradcheck(const std::string& module, std::uint64_t seed = 1);

// Dataset utilities -------------------------------------------------------------

/// Degrades every image in `in_dir` into `out_dir` (same filenames, PNG);
/// image k in filename order uses seed mix_seed(seed, k).
std::size_t degrade_dir(const DegradeParams& params, const std::filesystem::path& in_dir,
                        const std::filesystem::path& out_dir, std::uint64_t seed);

/// Toy dataset with `<root>/train` and `<root>/test` splits from disjoint seeds.
void write_toy_splits(const std::filesystem::path& root, int train_count, int test_count, int size,
                      std::uint64_t seed);

}  // namespace uwe

#endif  // UWE_HARNESS_HPP
