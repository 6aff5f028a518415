#pragma once

// Axis-aligned boxes. The coordinate frame (frame pixels vs normalized crop
// coordinates) is whatever the caller says it is; corners are (x1,y1) top
// left and (x2,y2) bottom right.

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace simtrack {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }

  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x1 < x2 && y1 < y2;
  }

  Box clamped(double lo_x, double lo_y, double hi_x, double hi_y) const {
    return {std::clamp(x1, lo_x, hi_x), std::clamp(y1, lo_y, hi_y),
            std::clamp(x2, lo_x, hi_x), std::clamp(y2, lo_y, hi_y)};
  }
};

inline double intersection_area(const Box& a, const Box& b) {
  double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return std::max(0.0, w) * std::max(0.0, h);
}

inline double iou(const Box& a, const Box& b) {
  double inter = intersection_area(a, b);
  double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Generalized IoU: IoU minus the normalized empty area of the smallest
// enclosing box. In (-1, 1], equals 1 only for identical valid boxes.
inline double giou(const Box& a, const Box& b) {
  double inter = intersection_area(a, b);
  double uni = a.area() + b.area() - inter;
  Box hull{std::min({a.x1, a.x2, b.x1}), std::min({a.y1, a.y2, b.y1}),
           std::max({a.x1, a.x2, b.x2}), std::max({a.y1, a.y2, b.y2})};
  double hull_area = hull.area();
  if (hull_area <= 0.0 || uni <= 0.0) {
    throw std::invalid_argument("giou: degenerate box pair with empty hull or union");
  }
  return inter / uni - (hull_area - uni) / hull_area;
}

inline double center_distance(const Box& a, const Box& b) {
  double dx = a.cx() - b.cx();
  double dy = a.cy() - b.cy();
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace simtrack
