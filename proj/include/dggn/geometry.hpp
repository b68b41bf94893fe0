#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>

namespace dggn {

// Axis-aligned box, corners inclusive of min / exclusive semantics left to
// the caller. Coordinates are normalized to [0, 1] everywhere past ingestion.
struct Box {
  double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double xcenter() const { return 0.5 * (xmin + xmax); }
  double ycenter() const { return 0.5 * (ymin + ymax); }
  double area() const { return width() * height(); }

  bool valid() const { return xmin < xmax && ymin < ymax; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double h = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace dggn
