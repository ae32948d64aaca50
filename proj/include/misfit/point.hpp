#pragma once

#include <cmath>

namespace misfit {

// Sample-space point: a real for the scalar actions, a point in the plane for
// Rotation2D. dim distinguishes the two.
struct Point {
  double x = 0.0;
  double y = 0.0;
  int dim = 1;

  static Point scalar(double v) { return {v, 0.0, 1}; }
  static Point planar(double px, double py) { return {px, py, 2}; }

  double angle() const { return std::atan2(y, x); }
  double norm() const { return dim == 1 ? std::fabs(x) : std::hypot(x, y); }
};

inline bool on_unit_circle(const Point& p, double tol = 1e-9) {
  return p.dim == 2 && std::fabs(std::hypot(p.x, p.y) - 1.0) <= tol;
}

}  // namespace misfit
