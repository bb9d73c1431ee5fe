#include "uwe/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace uwe {

double psnr_from_mse(double mse) {
  if (mse < kPsnrMseFloor) return kPsnrCapDb;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

MsePsnr mse_psnr(const Image& pred, const Image& gt) {
  require_same_shape(pred, gt, "mse_psnr");
  const double mse = ((pred.data - gt.data) * 255.0).squaredNorm() / static_cast<double>(pred.size());
  return {mse, psnr_from_mse(mse)};
}

// UCIQE -------------------------------------------------------------------------

namespace {

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

struct Lab {
  double l, a, b;
};

Lab rgb_to_lab(double r, double g, double b) {
  static const Eigen::Matrix3d kToXyz = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,  //
                                         0.2126729, 0.7151522, 0.0721750,                       //
                                         0.0193339, 0.1191920, 0.9503041)
                                            .finished();
  // White point taken from the matrix itself so neutral input maps to a = b = 0.
  static const Eigen::Vector3d kWhite = kToXyz.rowwise().sum();
  const Eigen::Vector3d lin(srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
  const Eigen::Vector3d xyz = (kToXyz * lin).cwiseQuotient(kWhite);
  const double fx = lab_f(xyz[0]), fy = lab_f(xyz[1]), fz = lab_f(xyz[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

void require_rgb(const Image& img, const char* what) {
  if (img.c != 3 || img.n != 1) throw ShapeError(std::string(what) + ": expected a single 3-channel image");
  if (img.h < 1 || img.w < 1) throw ShapeError(std::string(what) + ": empty image");
}

}  // namespace

UciqeComponents uciqe_components(const Image& img) {
  require_rgb(img, "uciqe");
  const Eigen::Index n = img.pixels();
  std::vector<double> lum(n);
  Eigen::VectorXd chroma(n);
  double sat_sum = 0;
  for (Eigen::Index p = 0; p < n; ++p) {
    const Lab lab = rgb_to_lab(img.data(0, p), img.data(1, p), img.data(2, p));
    const double c = std::hypot(lab.a, lab.b);
    const double l = std::max(lab.l, 0.0);
    lum[p] = l / 100.0;
    chroma[p] = c / 100.0;
    const double norm = std::hypot(c, l);
    sat_sum += norm > 0 ? c / norm : 0.0;
  }
  const double mean_c = chroma.mean();
  const double std_c = std::sqrt((chroma.array() - mean_c).square().mean());

  std::sort(lum.begin(), lum.end());
  const auto k = static_cast<std::size_t>(std::max<double>(1.0, std::round(kUciqePercentile * static_cast<double>(n))));
  double low = 0, high = 0;
  for (std::size_t i = 0; i < k; ++i) {
    low += lum[i];
    high += lum[lum.size() - 1 - i];
  }
  return {std_c, (high - low) / static_cast<double>(k), sat_sum / static_cast<double>(n)};
}

double uciqe_score(const UciqeComponents& c, const UciqeWeights& w) {
  return w.chroma_std * c.chroma_std + w.luminance_contrast * c.luminance_contrast +
         w.mean_saturation * c.mean_saturation;
}

double uciqe(const Image& img, const UciqeWeights& w) { return uciqe_score(uciqe_components(img), w); }

// UIQM --------------------------------------------------------------------------

double alpha_trimmed_mean(std::vector<double> values, double low, double high) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto k = values.size();
  const auto drop_low = static_cast<std::size_t>(std::floor(low * static_cast<double>(k)));
  const auto drop_high = static_cast<std::size_t>(std::floor(high * static_cast<double>(k)));
  if (drop_low + drop_high >= k) return values[k / 2];
  double sum = 0;
  for (std::size_t i = drop_low; i < k - drop_high; ++i) sum += values[i];
  return sum / static_cast<double>(k - drop_low - drop_high);
}

double uicm(const Image& img, const UiqmParams& p) {
  require_rgb(img, "uicm");
  const Eigen::Index n = img.pixels();
  std::vector<double> rg(n), yb(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = 255.0 * img.data(0, i), g = 255.0 * img.data(1, i), b = 255.0 * img.data(2, i);
    rg[i] = r - g;
    yb[i] = 0.5 * (r + g) - b;
  }
  const double mu_rg = alpha_trimmed_mean(rg, p.trim_low, p.trim_high);
  const double mu_yb = alpha_trimmed_mean(yb, p.trim_low, p.trim_high);
  double var_rg = 0, var_yb = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    var_rg += (rg[i] - mu_rg) * (rg[i] - mu_rg);
    var_yb += (yb[i] - mu_yb) * (yb[i] - mu_yb);
  }
  var_rg /= static_cast<double>(n);
  var_yb /= static_cast<double>(n);
  return -0.0268 * std::hypot(mu_rg, mu_yb) + 0.1586 * std::sqrt(var_rg + var_yb);
}

namespace {

// h x w plane, row-major.
using Plane = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Plane channel_plane(const Image& img, int ch) {
  Plane out(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) out(y, x) = 255.0 * img(0, ch, y, x);
  return out;
}

// Sobel gradient magnitude with mirrored borders, rescaled so the maximum is 255.
Plane sobel_magnitude(const Plane& a) {
  const int h = static_cast<int>(a.rows()), w = static_cast<int>(a.cols());
  auto at = [&](int y, int x) {
    y = y < 0 ? -y - 1 : (y >= h ? 2 * h - y - 1 : y);
    x = x < 0 ? -x - 1 : (x >= w ? 2 * w - x - 1 : x);
    return a(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
  };
  Plane mag(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      mag(y, x) = std::hypot(gx, gy);
    }
  const double peak = mag.maxCoeff();
  if (peak > 0) mag *= 255.0 / peak;
  return mag;
}

// Measure of enhancement: 2 / (k1 k2) sum log(max / min) over full blocks.
double eme(const Plane& a, int block) {
  const int k1 = static_cast<int>(a.rows()) / block, k2 = static_cast<int>(a.cols()) / block;
  if (k1 == 0 || k2 == 0) return 0.0;
  double acc = 0;
  for (int by = 0; by < k1; ++by)
    for (int bx = 0; bx < k2; ++bx) {
      const auto blk = a.block(by * block, bx * block, block, block);
      const double mx = blk.maxCoeff(), mn = blk.minCoeff();
      if (mn > 0 && mx > 0) acc += std::log(mx / mn);
    }
  return 2.0 / (static_cast<double>(k1) * k2) * acc;
}

}  // namespace

double uism(const Image& img, const UiqmParams& p) {
  require_rgb(img, "uism");
  static constexpr double kWeights[3] = {0.299, 0.587, 0.114};
  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    const Plane plane = channel_plane(img, ch);
    const Plane edges = sobel_magnitude(plane).cwiseProduct(plane);
    total += kWeights[ch] * eme(edges, p.block);
  }
  return total;
}

double uiconm(const Image& img, const UiqmParams& p) {
  require_rgb(img, "uiconm");
  const int block = p.block;
  const int k1 = img.h / block, k2 = img.w / block;
  if (k1 == 0 || k2 == 0) return 0.0;
  double acc = 0;
  for (int by = 0; by < k1; ++by)
    for (int bx = 0; bx < k2; ++bx) {
      double mx = -1, mn = 1e300;
      for (int y = by * block; y < (by + 1) * block; ++y)
        for (int x = bx * block; x < (bx + 1) * block; ++x)
          for (int ch = 0; ch < 3; ++ch) {
            const double v = 255.0 * img(0, ch, y, x);
            mx = std::max(mx, v);
            mn = std::min(mn, v);
          }
      const double top = mx - mn, bot = mx + mn;
      if (top > 0 && bot > 0) {
        const double r = top / bot;
        acc += r * std::log(r);
      }
    }
  return -acc / (static_cast<double>(k1) * k2);
}

double uiqm_combine(double uicm_v, double uism_v, double uiconm_v, const UiqmWeights& w) {
  return w.c1 * uicm_v + w.c2 * uism_v + w.c3 * uiconm_v;
}

UiqmResult uiqm(const Image& img, const UiqmWeights& w, const UiqmParams& p) {
  UiqmResult r{uicm(img, p), uism(img, p), uiconm(img, p), 0.0};
  r.uiqm = uiqm_combine(r.uicm, r.uism, r.uiconm, w);
  return r;
}

// Reports -----------------------------------------------------------------------

MetricRow evaluate_image(const std::string& id, const Image& pred, const Image* gt) {
  MetricRow row;
  row.image_id = id;
  try {
    row.uciqe = uciqe(pred);
    const UiqmResult q = uiqm(pred);
    row.uicm = q.uicm;
    row.uism = q.uism;
    row.uiconm = q.uiconm;
    row.uiqm = q.uiqm;
    if (gt) {
      if (!pred.same_shape(*gt)) {
        row.error = "size mismatch with reference (" + shape_string(pred) + " vs " + shape_string(*gt) + ")";
        return row;
      }
      const MsePsnr mp = mse_psnr(pred, *gt);
      row.mse = mp.mse;
      row.psnr_db = mp.psnr_db;
      row.ssim = ssim_index(pred, *gt);
    }
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

namespace {

std::vector<std::optional<double> MetricRow::*> metric_columns() {
  return {&MetricRow::mse, &MetricRow::psnr_db, &MetricRow::ssim,   &MetricRow::uciqe, &MetricRow::uicm,
          &MetricRow::uism, &MetricRow::uiconm, &MetricRow::uiqm};
}

const char* const kColumnNames[] = {"mse", "psnr_db", "ssim", "uciqe", "uicm", "uism", "uiconm", "uiqm"};

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(10) << *v;
  return os.str();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void MetricReport::finalize() {
  aggregate = MetricRow{};
  aggregate.image_id = "AGGREGATE";
  aggregated_rows = 0;
  for (const auto& row : per_image)
    if (row.error.empty()) ++aggregated_rows;
  for (auto col : metric_columns()) {
    double sum = 0;
    int count = 0;
    for (const auto& row : per_image) {
      if (row.error.empty() && (row.*col)) {
        sum += *(row.*col);
        ++count;
      }
    }
    if (count > 0) aggregate.*col = sum / count;
  }
  if (aggregated_rows == 0) aggregate.error = "no images aggregated";
}

std::string MetricReport::csv() const {
  std::ostringstream os;
  os << "image_id";
  for (const char* name : kColumnNames) os << ',' << name;
  os << ",error\n";
  auto emit = [&](const MetricRow& row) {
    os << csv_escape(row.image_id);
    for (auto col : metric_columns()) os << ',' << fmt(row.*col);
    os << ',' << csv_escape(row.error) << '\n';
  };
  for (const auto& row : per_image) emit(row);
  emit(aggregate);
  return os.str();
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << csv();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void MetricReport::write_json(const std::filesystem::path& path) const {
  auto to_json = [](const MetricRow& row) {
    nlohmann::ordered_json j;
    j["image_id"] = row.image_id;
    const auto cols = metric_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (row.*cols[i]) {
        j[kColumnNames[i]] = *(row.*cols[i]);
      } else {
        j[kColumnNames[i]] = nullptr;
      }
    }
    if (!row.error.empty()) j["error"] = row.error;
    return j;
  };
  nlohmann::ordered_json j;
  j["per_image"] = nlohmann::ordered_json::array();
  for (const auto& row : per_image) j["per_image"].push_back(to_json(row));
  j["aggregate"] = to_json(aggregate);
  j["aggregated_rows"] = aggregated_rows;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

MetricReport evaluate_dir(const std::filesystem::path& pred_dir, const std::optional<std::filesystem::path>& gt_dir) {
  MetricReport report;
  std::map<std::string, std::filesystem::path> references;
  if (gt_dir) {
    for (const auto& p : list_images(*gt_dir)) references.emplace(p.stem().string(), p);
  }
  for (const auto& path : list_images(pred_dir)) {
    const std::string id = path.stem().string();
    MetricRow row;
    row.image_id = id;
    try {
      const Image pred = read_image(path);
      if (gt_dir) {
        auto it = references.find(id);
        if (it == references.end()) {
          row = evaluate_image(id, pred, nullptr);
          row.error = "missing reference image";
        } else {
          const Image gt = read_image(it->second);
          row = evaluate_image(id, pred, &gt);
        }
      } else {
        row = evaluate_image(id, pred, nullptr);
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    report.per_image.push_back(std::move(row));
  }
  report.finalize();
  return report;
}

}  // namespace uwe
