#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "px3d/phantom.hpp"

namespace px3d::phantom {

Volume3D Volume3D::zeros(std::size_t nx, std::size_t ny, std::size_t nz, double voxel_size) {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("volume: voxel_size must be positive");
  Volume3D v;
  v.nx = nx;
  v.ny = ny;
  v.nz = nz;
  v.voxel_size = voxel_size;
  v.data.assign(nx * ny * nz, 0.0);
  return v;
}

double Volume3D::sample(double x_mm, double y_mm, double z_mm) const {
  const double fx = x_mm / voxel_size, fy = y_mm / voxel_size, fz = z_mm / voxel_size;
  const double x0 = std::floor(fx), y0 = std::floor(fy), z0 = std::floor(fz);
  const double tx = fx - x0, ty = fy - y0, tz = fz - z0;
  const double wx[2] = {1.0 - tx, tx}, wy[2] = {1.0 - ty, ty}, wz[2] = {1.0 - tz, tz};
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double zi = z0 + dz;
    if (zi < 0 || zi >= static_cast<double>(nz) || wz[dz] == 0.0) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const double yi = y0 + dy;
      if (yi < 0 || yi >= static_cast<double>(ny) || wy[dy] == 0.0) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const double xi = x0 + dx;
        if (xi < 0 || xi >= static_cast<double>(nx) || wx[dx] == 0.0) continue;
        acc += wz[dz] * wy[dy] * wx[dx] *
               at(static_cast<std::size_t>(xi), static_cast<std::size_t>(yi), static_cast<std::size_t>(zi));
      }
    }
  }
  return acc;
}

std::size_t ReformatSpec::raw_depth_samples() const {
  return static_cast<std::size_t>(std::llround(depth_range_mm / depth_step_mm));
}

void ReformatSpec::validate() const {
  if (!(depth_range_mm > 0.0) || !(depth_step_mm > 0.0) || !(height_mm > 0.0)) {
    throw std::invalid_argument("reformat spec: depth range, depth step and height must be positive");
  }
  if (std::abs(depth_range_mm / depth_step_mm - static_cast<double>(raw_depth_samples())) > 1e-9 ||
      raw_depth_samples() == 0) {
    throw std::invalid_argument("reformat spec: depth range must be a whole number of depth steps");
  }
  if (out_depth == 0 || out_height == 0 || out_width < 2) {
    throw std::invalid_argument("reformat spec: output needs depth, height >= 1 and width >= 2");
  }
}

Tensor curved_planar_reformat(const Volume3D& volume, const ArchCurve& curve, const ReformatSpec& spec) {
  spec.validate();
  if (!(curve.length() > 0.0)) throw std::invalid_argument("reformat: curve has zero length");
  const std::size_t n = spec.raw_depth_samples();
  const std::size_t D = spec.out_depth, H = spec.out_height, W = spec.out_width;
  const double row_mm = spec.height_mm / static_cast<double>(H);

  // raw[(k * H + h) * W + w]
  std::vector<double> raw(n * H * W);
  for (std::size_t w = 0; w < W; ++w) {
    const double s = curve.length() * static_cast<double>(w) / static_cast<double>(W - 1);
    const Vec2 p = curve.point_at(s);
    const Vec2 nrm = curve.normal_at(s);
    for (std::size_t k = 0; k < n; ++k) {
      const double offset = -0.5 * spec.depth_range_mm + (static_cast<double>(k) + 0.5) * spec.depth_step_mm;
      const double x = p.x + nrm.x * offset, y = p.y + nrm.y * offset;
      for (std::size_t h = 0; h < H; ++h) {
        const double z = curve.reference_height() +
                         (0.5 * static_cast<double>(H) - static_cast<double>(h) - 0.5) * row_mm;
        raw[(k * H + h) * W + w] = volume.sample(x, y, z);
      }
    }
  }
  if (n == D) return Tensor::from({D, H, W}, std::move(raw));

  std::vector<double> out(D * H * W);
  const double ratio = static_cast<double>(n) / static_cast<double>(D);
  for (std::size_t d = 0; d < D; ++d) {
    const double src = std::clamp((static_cast<double>(d) + 0.5) * ratio - 0.5, 0.0,
                                  static_cast<double>(n - 1));
    const auto k0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t k1 = std::min(k0 + 1, n - 1);
    const double f = src - static_cast<double>(k0);
    for (std::size_t i = 0; i < H * W; ++i) {
      out[d * H * W + i] = (1.0 - f) * raw[k0 * H * W + i] + f * raw[k1 * H * W + i];
    }
  }
  return Tensor::from({D, H, W}, std::move(out));
}

Tensor px_project_unnormalized(const Tensor& flattened) {
  if (flattened.rank() != 3) {
    throw ShapeError("px_project: expected [D,H,W], got " + to_string(flattened.shape()));
  }
  const std::size_t D = flattened.dim(0), HW = flattened.dim(1) * flattened.dim(2);
  const auto& src = flattened.data();
  std::vector<double> out(HW, 0.0);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t i = 0; i < HW; ++i) out[i] += src[d * HW + i];
  for (auto& v : out) v /= static_cast<double>(D);
  return Tensor::from({1, flattened.dim(1), flattened.dim(2)}, std::move(out));
}

Tensor px_project(const Tensor& flattened) {
  Tensor mean = px_project_unnormalized(flattened);
  std::vector<double> values(mean.data().begin(), mean.data().end());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo, range = *hi - *lo;
  for (auto& v : values) v = range > 0.0 ? (v - min) / range : 0.0;
  return Tensor::from(mean.shape(), std::move(values));
}

Volume3D rotate_volume(const Volume3D& volume, double vertical_deg, double lateral_deg) {
  if (std::abs(vertical_deg) > kMaxRotationDeg || std::abs(lateral_deg) > kMaxRotationDeg) {
    throw std::invalid_argument("rotate_volume: angles are limited to +/-" +
                                std::to_string(static_cast<int>(kMaxRotationDeg)) + " degrees");
  }
  if (vertical_deg == 0.0 && lateral_deg == 0.0) return volume;

  const double a = vertical_deg * std::numbers::pi / 180.0;
  const double b = lateral_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b);
  // Forward rotation R = Rz(b) * Rx(a); output voxels pull from R^T (p - c) + c.
  const double r[3][3] = {{cb, -sb * ca, sb * sa}, {sb, cb * ca, -cb * sa}, {0.0, sa, ca}};
  const double vs = volume.voxel_size;
  const double c[3] = {0.5 * (volume.nx - 1) * vs, 0.5 * (volume.ny - 1) * vs, 0.5 * (volume.nz - 1) * vs};

  Volume3D out = Volume3D::zeros(volume.nx, volume.ny, volume.nz, vs);
  for (std::size_t z = 0; z < volume.nz; ++z) {
    for (std::size_t y = 0; y < volume.ny; ++y) {
      for (std::size_t x = 0; x < volume.nx; ++x) {
        const double p[3] = {x * vs - c[0], y * vs - c[1], z * vs - c[2]};
        const double sx = r[0][0] * p[0] + r[1][0] * p[1] + r[2][0] * p[2] + c[0];
        const double sy = r[0][1] * p[0] + r[1][1] * p[1] + r[2][1] * p[2] + c[1];
        const double sz = r[0][2] * p[0] + r[1][2] * p[1] + r[2][2] * p[2] + c[2];
        out.at(x, y, z) = std::clamp(volume.sample(sx, sy, sz), 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace px3d::phantom
