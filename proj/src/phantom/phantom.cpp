#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "px3d/phantom.hpp"
#include "px3d/random.hpp"

namespace px3d::phantom {

namespace {

constexpr double kEdgeMm = 1.5;

/// Fraction of a voxel inside a shape given its approximate signed distance.
double coverage(double signed_distance) {
  return std::clamp(0.5 - signed_distance / kEdgeMm, 0.0, 1.0);
}

struct ClosestPoint {
  double distance;
  double arc_length;
};

ClosestPoint closest_on_polyline(const ArchCurve& curve, double x, double y) {
  const auto& v = curve.vertices();
  const auto& cum = curve.arc_length_table();
  ClosestPoint best{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const double dx = v[i + 1].x - v[i].x, dy = v[i + 1].y - v[i].y;
    const double len2 = dx * dx + dy * dy;
    const double t = std::clamp(((x - v[i].x) * dx + (y - v[i].y) * dy) / len2, 0.0, 1.0);
    const double px = v[i].x + t * dx, py = v[i].y + t * dy;
    const double d = std::hypot(x - px, y - py);
    if (d < best.distance) best = {d, cum[i] + t * (cum[i + 1] - cum[i])};
  }
  return best;
}

}  // namespace

bool Tooth::contains(double x, double y, double z) const {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dx = x - cx, dy = y - cy, dz = z - cz;
  const double u = (c * dx + s * dy) / radius_tangent;
  const double v = (-s * dx + c * dy) / radius_normal;
  const double w = dz / radius_vertical;
  return u * u + v * v + w * w <= 1.0;
}

Phantom generate_phantom(std::uint64_t seed, const PhantomSpec& spec) {
  if (spec.nx < 16 || spec.ny < 16 || spec.nz < 16 || !(spec.voxel_size > 0.0)) {
    throw std::invalid_argument("phantom spec: extents must be >= 16 voxels and voxel_size > 0");
  }
  Rng rng(seed);
  const double vs = spec.voxel_size;
  const double ex = spec.nx * vs, ey = spec.ny * vs, ez = spec.nz * vs;
  const double cx = 0.5 * (spec.nx - 1) * vs;
  const double cz = 0.5 * (spec.nz - 1) * vs;

  const double soft = rng.uniform(0.1, 0.25);
  const double bone = rng.uniform(0.45, 0.6);
  const double front_y = ey * rng.uniform(0.68, 0.74);
  const double half_width = ex * rng.uniform(0.27, 0.31);
  const double arch_depth = ey * rng.uniform(0.30, 0.36);
  const double ref_h = cz + rng.uniform(-2.0, 2.0) * vs;
  ArchCurve arch = ArchCurve::parabola({cx, 0.0}, front_y, half_width, arch_depth, ref_h);

  const double head_rx = 0.45 * ex, head_ry = 0.45 * ey, head_rz = 0.47 * ez;
  const double head_cy = 0.5 * (spec.ny - 1) * vs;
  const double slab_half_width = rng.uniform(5.0, 7.0);
  const double slab_half_height = 0.2 * ez * rng.uniform(0.9, 1.1);

  std::vector<Tooth> teeth;
  const auto n_teeth = static_cast<std::size_t>(rng.uniform_int(10, 16));
  const double len = arch.length();
  for (std::size_t i = 0; i < n_teeth; ++i) {
    const double spacing = len / static_cast<double>(n_teeth);
    const double s = std::clamp((i + 0.5) * spacing + rng.uniform(-0.15, 0.15) * spacing, 0.0, len);
    const Vec2 p = arch.point_at(s);
    const Vec2 t = arch.tangent_at(s);
    const Vec2 n = arch.normal_at(s);
    const double offset = rng.uniform(-1.0, 1.0);
    const bool upper = i % 2 == 0;
    Tooth tooth;
    tooth.cx = p.x + n.x * offset;
    tooth.cy = p.y + n.y * offset;
    tooth.cz = ref_h + (upper ? 1.0 : -1.0) * rng.uniform(6.0, 10.0);
    tooth.radius_tangent = std::min(rng.uniform(2.5, 4.0), 0.45 * spacing);
    tooth.radius_normal = rng.uniform(3.5, 5.0);
    tooth.radius_vertical = rng.uniform(7.0, 11.0);
    tooth.angle = std::atan2(t.y, t.x) + rng.uniform(-0.2, 0.2);
    tooth.density = rng.uniform(0.7, 1.0);
    teeth.push_back(tooth);
  }

  Volume3D vol = Volume3D::zeros(spec.nx, spec.ny, spec.nz, vs);
  std::vector<ClosestPoint> column(spec.nx * spec.ny);
  for (std::size_t y = 0; y < spec.ny; ++y)
    for (std::size_t x = 0; x < spec.nx; ++x) column[y * spec.nx + x] = closest_on_polyline(arch, x * vs, y * vs);

  for (std::size_t z = 0; z < spec.nz; ++z) {
    const double pz = z * vs;
    for (std::size_t y = 0; y < spec.ny; ++y) {
      const double py = y * vs;
      for (std::size_t x = 0; x < spec.nx; ++x) {
        const double px = x * vs;
        const double hx = (px - cx) / head_rx, hy = (py - head_cy) / head_ry, hz = (pz - cz) / head_rz;
        const double head_r = std::sqrt(hx * hx + hy * hy + hz * hz);
        double value = soft * coverage((head_r - 1.0) * std::min({head_rx, head_ry, head_rz}));

        const ClosestPoint& cp = column[y * spec.nx + x];
        const double slab_sd = std::max(cp.distance - slab_half_width, std::abs(pz - ref_h) - slab_half_height);
        value = std::max(value, bone * coverage(slab_sd));

        for (const Tooth& tooth : teeth) {
          const double c = std::cos(tooth.angle), s = std::sin(tooth.angle);
          const double dx = px - tooth.cx, dy = py - tooth.cy, dz = pz - tooth.cz;
          const double u = (c * dx + s * dy) / tooth.radius_tangent;
          const double v = (-s * dx + c * dy) / tooth.radius_normal;
          const double w = dz / tooth.radius_vertical;
          const double r = std::sqrt(u * u + v * v + w * w);
          if (r > 2.0) continue;
          const double min_radius = std::min({tooth.radius_tangent, tooth.radius_normal, tooth.radius_vertical});
          value = std::max(value, tooth.density * coverage((r - 1.0) * min_radius));
        }
        vol.at(x, y, z) = std::clamp(value, 0.0, 1.0);
      }
    }
  }
  return Phantom{std::move(vol), std::move(arch), std::move(teeth), soft, bone};
}

}  // namespace px3d::phantom
