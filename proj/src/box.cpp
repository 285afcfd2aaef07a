#include "relrank/box.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "relrank/common.hpp"

namespace relrank {

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 >= 0 && y1 >= 0 && x2 > x1 && y2 > y1;
}

void validate_box(const Box& box, const char* what) {
  if (!box.valid()) {
    throw ValidationError(fmt::format("{}: invalid box [{}, {}, {}, {}]", what, box.x1, box.y1,
                                      box.x2, box.y2));
  }
}

Box union_box(const Box& a, const Box& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace relrank
