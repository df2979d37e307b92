#include "px3d/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace px3d::metrics {

namespace {

void require_same_shape(const Tensor& pred, const Tensor& gt, const char* what) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError(std::string(what) + ": prediction " + to_string(pred.shape()) + " vs ground truth " +
                     to_string(gt.shape()));
  }
}

/// Sum over a window of `n` along one axis, for every valid start.
std::vector<double> box_sum(const std::vector<double>& in, const Shape& shape, std::size_t axis, std::size_t n,
                            Shape& out_shape) {
  out_shape = shape;
  out_shape[axis] = shape[axis] - n + 1;
  std::size_t stride = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) stride *= shape[a];
  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= shape[a];
  std::vector<double> out(numel_of(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < out_shape[axis]; ++i) {
      for (std::size_t s = 0; s < stride; ++s) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += in[(o * shape[axis] + i + k) * stride + s];
        out[(o * out_shape[axis] + i) * stride + s] = acc;
      }
    }
  }
  return out;
}

std::vector<double> window_mean(const std::vector<double>& in, const Shape& shape) {
  Shape s1, s2, s3;
  auto a = box_sum(in, shape, 0, kSsimWindow, s1);
  auto b = box_sum(a, s1, 1, kSsimWindow, s2);
  auto c = box_sum(b, s2, 2, kSsimWindow, s3);
  const double n = static_cast<double>(kSsimWindow * kSsimWindow * kSsimWindow);
  for (auto& v : c) v /= n;
  return c;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::optional<double> psnr(const Tensor& pred, const Tensor& gt, double peak) {
  require_same_shape(pred, gt, "psnr");
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  const auto& p = pred.data();
  const auto& g = gt.data();
  double sse = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sse += (p[i] - g[i]) * (p[i] - g[i]);
  const double mse = sse / static_cast<double>(p.size());
  if (mse == 0.0) return std::nullopt;
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim3d(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred, gt, "ssim3d");
  if (pred.rank() != 3) throw ShapeError("ssim3d: expected [D,H,W], got " + to_string(pred.shape()));
  for (std::size_t a = 0; a < 3; ++a) {
    if (pred.dim(a) < kSsimWindow) {
      throw ShapeError("ssim3d: extent " + std::to_string(pred.dim(a)) + " on axis " + std::to_string(a) +
                       " is smaller than the " + std::to_string(kSsimWindow) + "-voxel window");
    }
  }
  const Shape& shape = pred.shape();
  const auto& x = pred.data();
  const auto& y = gt.data();
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const std::vector<double> x_src(x.begin(), x.end()), y_src(y.begin(), y.end());
  const auto mx = window_mean(x_src, shape);
  const auto my = window_mean(y_src, shape);
  const auto mxx = window_mean(xx, shape);
  const auto myy = window_mean(yy, shape);
  const auto mxy = window_mean(xy, shape);

  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cov = mxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + kSsimC1) * (2.0 * cov + kSsimC2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + kSsimC1) * (vx + vy + kSsimC2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

double dsc_bone(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred, gt, "dsc_bone");
  const auto& p = pred.data();
  const auto& g = gt.data();
  double sum = 0.0;
  for (double v : g) sum += v;
  const double tau = sum / static_cast<double>(g.size());
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool in_gt = g[i] >= tau, in_pred = p[i] >= tau;
    a += in_gt;
    b += in_pred;
    both += in_gt && in_pred;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate out;
  out.count = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

void MetricReport::finalize() {
  std::vector<double> p, s, d;
  identical = 0;
  for (const auto& r : rows) {
    if (r.psnr_db) {
      p.push_back(*r.psnr_db);
    } else {
      ++identical;
    }
    s.push_back(r.ssim);
    d.push_back(r.dsc);
  }
  psnr = aggregate(p);
  ssim = aggregate(s);
  dsc = aggregate(d);
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "sample_id,psnr_db,ssim,dsc\n";
  for (const auto& r : rows) {
    os << r.sample_id << ',' << (r.psnr_db ? format_double(*r.psnr_db) : "identical") << ','
       << format_double(r.ssim) << ',' << format_double(r.dsc) << '\n';
  }
  return os.str();
}

std::vector<SampleScore> MetricReport::parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "sample_id,psnr_db,ssim,dsc") throw std::invalid_argument("metric csv: unexpected header");
  std::vector<SampleScore> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, p, s, d;
    if (!std::getline(fields, id, ',') || !std::getline(fields, p, ',') || !std::getline(fields, s, ',') ||
        !std::getline(fields, d, ',')) {
      throw std::invalid_argument("metric csv: malformed row '" + line + "'");
    }
    SampleScore row;
    row.sample_id = id;
    if (p != "identical") row.psnr_db = std::stod(p);
    row.ssim = std::stod(s);
    row.dsc = std::stod(d);
    out.push_back(row);
  }
  return out;
}

std::string MetricReport::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "samples=%zu  PSNR %.2f +/- %.2f dB%s  SSIM %.4f +/- %.4f  DSC %.4f +/- %.4f",
                rows.size(), psnr.mean, psnr.stddev,
                identical ? (" (" + std::to_string(identical) + " identical excluded)").c_str() : "", ssim.mean,
                ssim.stddev, dsc.mean, dsc.stddev);
  return buf;
}

SampleScore score(const std::string& sample_id, const Tensor& pred, const Tensor& gt) {
  return {sample_id, psnr(pred, gt), ssim3d(pred, gt), dsc_bone(pred, gt)};
}

}  // namespace px3d::metrics
