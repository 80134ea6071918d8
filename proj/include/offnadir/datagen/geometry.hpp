#pragma once
// 2D polygon primitives used by the scene generator and rasterizer.
// Coordinates are world meters unless a function says pixels.

#include <array>
#include <vector>

#include "offnadir/common.hpp"

namespace offnadir::datagen {

struct Vec2 {
  double x = 0, y = 0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const;
};

struct Aabb {
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  bool intersects(const Aabb& o) const {
    return min_x <= o.max_x && o.min_x <= max_x && min_y <= o.max_y && o.min_y <= max_y;
  }
};

// Vertex list, implicitly closed (last vertex connects to the first).
struct Polygon {
  std::vector<Vec2> pts;

  bool empty() const { return pts.empty(); }
  double area() const;      // absolute shoelace area
  Vec2 centroid() const;    // area-weighted
  Aabb bounds() const;
  Polygon translated(Vec2 d) const;
  bool is_simple() const;   // no self intersection, >= 3 vertices
};

// Even-odd ray casting; points exactly on an edge are implementation-defined
// but deterministic.
bool point_in_polygon(Vec2 p, const Polygon& poly);

// Separating-axis test; both polygons must be convex.
bool convex_overlap(const Polygon& a, const Polygon& b);

// Convex hull (Andrew monotone chain), CCW order.
Polygon convex_hull(std::vector<Vec2> pts);

// Rectangle centered at c, full extents (w, h), rotated by angle_rad.
Polygon make_rect(Vec2 c, double w, double h, double angle_rad);

}  // namespace offnadir::datagen
