#pragma once

#include <array>

namespace relrank {

// Axis-aligned pixel box. Valid boxes satisfy 0 <= x1 < x2 and 0 <= y1 < y2.
struct Box {
  double x1 = 0;
  double y1 = 0;
  double x2 = 0;
  double y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const;

  std::array<double, 4> as_array() const { return {x1, y1, x2, y2}; }
  static Box from_array(const std::array<double, 4>& v) {
    return {v[0], v[1], v[2], v[3]};
  }

  friend bool operator==(const Box&, const Box&) = default;
};

// Throws ValidationError naming `what` if the box is invalid.
void validate_box(const Box& box, const char* what);

// Minimal box containing both inputs. This is the predicate region i_p.
Box union_box(const Box& a, const Box& b);

// Area of the overlap; 0 when the boxes are disjoint.
double intersection_area(const Box& a, const Box& b);

// Intersection over union, in [0, 1].
double iou(const Box& a, const Box& b);

}  // namespace relrank
