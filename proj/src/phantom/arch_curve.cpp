#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "px3d/phantom.hpp"

namespace px3d::phantom {

namespace {

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
Vec2 minus(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }

bool segments_cross(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const double d1 = cross(minus(q2, q1), minus(p1, q1));
  const double d2 = cross(minus(q2, q1), minus(p2, q1));
  const double d3 = cross(minus(p2, p1), minus(q1, p1));
  const double d4 = cross(minus(p2, p1), minus(q2, p1));
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace

ArchCurve::ArchCurve(std::vector<Vec2> vertices, std::vector<double> params, double reference_height)
    : vertices_(std::move(vertices)), params_(std::move(params)), reference_height_(reference_height) {
  if (vertices_.size() < 2 || params_.size() != vertices_.size()) {
    throw std::invalid_argument("arch curve: need at least two vertices with matching parameters");
  }
  cumulative_.resize(vertices_.size());
  cumulative_[0] = 0.0;
  for (std::size_t i = 1; i < vertices_.size(); ++i) {
    const double seg = std::hypot(vertices_[i].x - vertices_[i - 1].x, vertices_[i].y - vertices_[i - 1].y);
    if (!(seg > 0.0)) throw std::invalid_argument("arch curve: degenerate (zero-length) segment");
    cumulative_[i] = cumulative_[i - 1] + seg;
  }
  // Non-adjacent segments must not intersect.
  const std::size_t n = vertices_.size() - 1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (segments_cross(vertices_[i], vertices_[i + 1], vertices_[j], vertices_[j + 1])) {
        throw std::invalid_argument("arch curve: self-intersecting");
      }
    }
  }
}

ArchCurve ArchCurve::parabola(Vec2 centre, double front_y, double half_width, double depth,
                              double reference_height, std::size_t segments) {
  std::vector<Vec2> pts(segments + 1);
  std::vector<double> ts(segments + 1);
  for (std::size_t i = 0; i <= segments; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(segments);
    const double u = 2.0 * t - 1.0;
    pts[i] = {centre.x + half_width * u, front_y - depth * u * u};
    ts[i] = t;
  }
  return ArchCurve(std::move(pts), std::move(ts), reference_height);
}

ArchCurve ArchCurve::line(Vec2 from, Vec2 to, double reference_height) {
  return ArchCurve({from, to}, {0.0, 1.0}, reference_height);
}

ArchCurve ArchCurve::circle_arc(Vec2 centre, double radius, double theta0, double theta1,
                                double reference_height, std::size_t segments) {
  std::vector<Vec2> pts(segments + 1);
  std::vector<double> ts(segments + 1);
  for (std::size_t i = 0; i <= segments; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(segments);
    const double theta = theta0 + (theta1 - theta0) * t;
    pts[i] = {centre.x + radius * std::cos(theta), centre.y + radius * std::sin(theta)};
    ts[i] = t;
  }
  return ArchCurve(std::move(pts), std::move(ts), reference_height);
}

std::size_t ArchCurve::segment_for(double s) const {
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  const auto idx = static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
  return std::clamp<std::size_t>(idx == 0 ? 0 : idx - 1, 0, vertices_.size() - 2);
}

Vec2 ArchCurve::point_at(double s) const {
  const std::size_t i = segment_for(s);
  const Vec2 dir = tangent_at(s);
  const double along = s - cumulative_[i];
  return {vertices_[i].x + dir.x * along, vertices_[i].y + dir.y * along};
}

Vec2 ArchCurve::tangent_at(double s) const {
  const std::size_t i = segment_for(s);
  const double len = cumulative_[i + 1] - cumulative_[i];
  return {(vertices_[i + 1].x - vertices_[i].x) / len, (vertices_[i + 1].y - vertices_[i].y) / len};
}

Vec2 ArchCurve::normal_at(double s) const {
  const Vec2 t = tangent_at(s);
  return {-t.y, t.x};
}

double ArchCurve::parameter_at(double s) const {
  const std::size_t i = segment_for(s);
  const double f = (s - cumulative_[i]) / (cumulative_[i + 1] - cumulative_[i]);
  return params_[i] + (params_[i + 1] - params_[i]) * f;
}

}  // namespace px3d::phantom
