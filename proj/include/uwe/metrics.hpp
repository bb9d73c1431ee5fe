#ifndef UWE_METRICS_HPP
#define UWE_METRICS_HPP

#include "uwe/image_io.hpp"
#include "uwe/losses.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uwe {

// Full-reference metrics ------------------------------------------------------

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kPsnrMseFloor = 1e-10;

struct MsePsnr {
  double mse;      // on the 0-255 scale
  double psnr_db;  // 10 log10(255^2 / mse), capped at kPsnrCapDb
};

double psnr_from_mse(double mse);
MsePsnr mse_psnr(const Image& pred, const Image& gt);

// No-reference metrics --------------------------------------------------------

struct UciqeWeights {
  double chroma_std = 0.4680;
  double luminance_contrast = 0.2745;
  double mean_saturation = 0.2576;
};

struct UciqeComponents {
  double chroma_std;          // std of CIELab chroma / 100
  double luminance_contrast;  // mean of top 1% minus bottom 1% of L* / 100
  double mean_saturation;     // mean of C* / sqrt(C*^2 + L*^2)
};

inline constexpr double kUciqePercentile = 0.01;

UciqeComponents uciqe_components(const Image& img);
double uciqe_score(const UciqeComponents& c, const UciqeWeights& w = {});
double uciqe(const Image& img, const UciqeWeights& w = {});

struct UiqmWeights {
  double c1 = 0.0282;
  double c2 = 0.2953;
  double c3 = 3.5753;
};

struct UiqmParams {
  int block = 8;
  double trim_low = 0.1;
  double trim_high = 0.1;
};

struct UiqmResult {
  double uicm;
  double uism;
  double uiconm;
  double uiqm;
};

double uicm(const Image& img, const UiqmParams& p = {});
double uism(const Image& img, const UiqmParams& p = {});
double uiconm(const Image& img, const UiqmParams& p = {});
double uiqm_combine(double uicm, double uism, double uiconm, const UiqmWeights& w = {});
UiqmResult uiqm(const Image& img, const UiqmWeights& w = {}, const UiqmParams& p = {});

/// Alpha-trimmed mean: drops floor(low*K) smallest and floor(high*K) largest values.
double alpha_trimmed_mean(std::vector<double> values, double low, double high);

// Reports ---------------------------------------------------------------------

struct MetricRow {
  std::string image_id;
  std::optional<double> mse, psnr_db, ssim;
  std::optional<double> uciqe, uicm, uism, uiconm, uiqm;
  std::string error;
};

struct MetricReport {
  std::vector<MetricRow> per_image;
  MetricRow aggregate;  // column means over rows that carry the value
  int aggregated_rows = 0;

  void finalize();
  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
  std::string csv() const;
};

/// Per-image metrics of one prediction (and optional reference).
MetricRow evaluate_image(const std::string& id, const Image& pred, const Image* gt);

/// Scores every image in `pred_dir`; full-reference columns need `gt_dir`, with
/// counterparts matched on the filename stem. Rows are ordered by filename.
MetricReport evaluate_dir(const std::filesystem::path& pred_dir, const std::optional<std::filesystem::path>& gt_dir);

}  // namespace uwe

#endif  // UWE_METRICS_HPP
