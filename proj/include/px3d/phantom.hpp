#pragma once

#include <cstdint>
#include <vector>

#include "px3d/tensor.hpp"

namespace px3d::phantom {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Dense density grid stored [z][y][x]. Voxel (i, j, k) has its centre at
/// physical position (i, j, k) * voxel_size in millimetres; x runs left-right,
/// y posterior-anterior and z is the vertical axis.
struct Volume3D {
  std::size_t nx = 0, ny = 0, nz = 0;
  double voxel_size = 1.0;
  std::vector<double> data;

  static Volume3D zeros(std::size_t nx, std::size_t ny, std::size_t nz, double voxel_size);

  double& at(std::size_t x, std::size_t y, std::size_t z) { return data[(z * ny + y) * nx + x]; }
  double at(std::size_t x, std::size_t y, std::size_t z) const { return data[(z * ny + y) * nx + x]; }

  /// Trilinear interpolation at a physical position; samples outside the grid read 0.
  double sample(double x_mm, double y_mm, double z_mm) const;

  double extent_mm(std::size_t n) const { return static_cast<double>(n - 1) * voxel_size; }
};

/// Planar polyline in the axial (x, y) plane at a fixed reference height,
/// parameterised by arc length.
class ArchCurve {
 public:
  /// `params` are the curve parameters t in [0,1] of each vertex.
  ArchCurve(std::vector<Vec2> vertices, std::vector<double> params, double reference_height);

  /// Symmetric parabola x(t) = cx + half_width (2t-1), y(t) = front_y - depth (2t-1)^2.
  static ArchCurve parabola(Vec2 centre, double front_y, double half_width, double depth,
                            double reference_height, std::size_t segments = 1024);
  static ArchCurve line(Vec2 from, Vec2 to, double reference_height);
  /// Counter-clockwise arc from angle theta0 to theta1 (radians).
  static ArchCurve circle_arc(Vec2 centre, double radius, double theta0, double theta1,
                              double reference_height, std::size_t segments = 2048);

  double length() const { return cumulative_.back(); }
  double reference_height() const { return reference_height_; }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  /// Cumulative arc length at each vertex; strictly increasing.
  const std::vector<double>& arc_length_table() const { return cumulative_; }

  Vec2 point_at(double s) const;
  /// Unit tangent of the segment containing arc length s.
  Vec2 tangent_at(double s) const;
  /// In-plane unit normal (tangent rotated +90 degrees).
  Vec2 normal_at(double s) const;
  /// Curve parameter t for arc length s.
  double parameter_at(double s) const;

 private:
  std::size_t segment_for(double s) const;

  std::vector<Vec2> vertices_;
  std::vector<double> params_;
  std::vector<double> cumulative_;
  double reference_height_;
};

struct PhantomSpec {
  std::size_t nx = 120, ny = 120, nz = 110;
  double voxel_size = 1.0;
};

struct Tooth {
  double cx, cy, cz;
  double radius_tangent, radius_normal, radius_vertical;
  double angle;  // rotation about the vertical axis, radians
  double density;

  bool contains(double x, double y, double z) const;
};

struct Phantom {
  Volume3D volume;
  ArchCurve arch;
  std::vector<Tooth> teeth;
  double soft_tissue_density;
  double bone_density;
};

/// Jaw-like phantom: a soft-tissue head ellipsoid, upper and lower bone slabs
/// following a jittered parabolic arch, and 10-16 ellipsoidal teeth along the
/// arch. Fully determined by the seed.
Phantom generate_phantom(std::uint64_t seed, const PhantomSpec& spec = {});

struct ReformatSpec {
  double depth_range_mm = 40.0;
  double depth_step_mm = 0.2;
  double height_mm = 100.0;
  std::size_t out_depth = 16;
  std::size_t out_height = 32;
  std::size_t out_width = 64;

  std::size_t raw_depth_samples() const;
  void validate() const;
};

/// Flattens the volume along the curve: width follows arc length, height the
/// vertical axis and depth the in-plane normal. Returns [D, H, W].
Tensor curved_planar_reformat(const Volume3D& volume, const ArchCurve& curve,
                              const ReformatSpec& spec);

/// Mean over depth: [D,H,W] -> [1,H,W], without normalisation.
Tensor px_project_unnormalized(const Tensor& flattened);

/// Depth mean followed by per-image min-max scaling to [0,1]; constant images map to 0.
Tensor px_project(const Tensor& flattened);

/// Rigid rotation about the volume centre. `vertical_deg` turns about the
/// left-right (x) axis, `lateral_deg` about the vertical (z) axis.
Volume3D rotate_volume(const Volume3D& volume, double vertical_deg, double lateral_deg);

inline constexpr double kMaxRotationDeg = 15.0;

}  // namespace px3d::phantom
