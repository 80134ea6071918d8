#include "offnadir/datagen/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace offnadir::datagen {

double Vec2::norm() const { return std::sqrt(x * x + y * y); }

double Polygon::area() const {
  double a = 0;
  const size_t n = pts.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& p = pts[i];
    const Vec2& q = pts[(i + 1) % n];
    a += p.cross(q);
  }
  return std::abs(a) * 0.5;
}

Vec2 Polygon::centroid() const {
  double a = 0, cx = 0, cy = 0;
  const size_t n = pts.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& p = pts[i];
    const Vec2& q = pts[(i + 1) % n];
    const double w = p.cross(q);
    a += w;
    cx += (p.x + q.x) * w;
    cy += (p.y + q.y) * w;
  }
  ON_CHECK(std::abs(a) > 1e-12, "centroid of a degenerate polygon");
  return {cx / (3 * a), cy / (3 * a)};
}

Aabb Polygon::bounds() const {
  ON_CHECK(!pts.empty(), "bounds of an empty polygon");
  Aabb b{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const Vec2& p : pts) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

Polygon Polygon::translated(Vec2 d) const {
  Polygon out;
  out.pts.reserve(pts.size());
  for (const Vec2& p : pts) out.pts.push_back(p + d);
  return out;
}

namespace {

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
    const double v = (q - p).cross(r - p);
    return v > 1e-12 ? 1 : (v < -1e-12 ? -1 : 0);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d);
  const int o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 != o2 && o3 != o4;
}

}  // namespace

bool Polygon::is_simple() const {
  const size_t n = pts.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      // Skip adjacent edges (they share a vertex).
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]))
        return false;
    }
  }
  return true;
}

bool point_in_polygon(Vec2 p, const Polygon& poly) {
  bool inside = false;
  const size_t n = poly.pts.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly.pts[i];
    const Vec2& b = poly.pts[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double t = (p.y - a.y) / (b.y - a.y);
      if (p.x < a.x + t * (b.x - a.x)) inside = !inside;
    }
  }
  return inside;
}

bool convex_overlap(const Polygon& a, const Polygon& b) {
  auto separated_by_edges_of = [](const Polygon& edges, const Polygon& pa,
                                  const Polygon& pb) {
    const size_t n = edges.pts.size();
    for (size_t i = 0; i < n; ++i) {
      const Vec2 e = edges.pts[(i + 1) % n] - edges.pts[i];
      const Vec2 axis{-e.y, e.x};
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const Vec2& p : pa.pts) {
        const double d = axis.dot(p);
        amin = std::min(amin, d);
        amax = std::max(amax, d);
      }
      for (const Vec2& p : pb.pts) {
        const double d = axis.dot(p);
        bmin = std::min(bmin, d);
        bmax = std::max(bmax, d);
      }
      if (amax < bmin || bmax < amin) return true;
    }
    return false;
  };
  if (separated_by_edges_of(a, a, b)) return false;
  if (separated_by_edges_of(b, a, b)) return false;
  return true;
}

Polygon convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  const size_t n = pts.size();
  if (n < 3) {
    Polygon p;
    p.pts = pts;
    return p;
  }
  std::vector<Vec2> hull(2 * n);
  size_t k = 0;
  for (size_t i = 0; i < n; ++i) {
    while (k >= 2 && (hull[k - 1] - hull[k - 2]).cross(pts[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (size_t i = n - 1, t = k + 1; i > 0; --i) {
    while (k >= t && (hull[k - 1] - hull[k - 2]).cross(pts[i - 1] - hull[k - 2]) <= 0)
      --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  Polygon p;
  p.pts = std::move(hull);
  return p;
}

Polygon make_rect(Vec2 c, double w, double h, double angle_rad) {
  const double ca = std::cos(angle_rad), sa = std::sin(angle_rad);
  auto rot = [&](double dx, double dy) {
    return Vec2{c.x + dx * ca - dy * sa, c.y + dx * sa + dy * ca};
  };
  Polygon p;
  p.pts = {rot(-w / 2, -h / 2), rot(w / 2, -h / 2), rot(w / 2, h / 2),
           rot(-w / 2, h / 2)};
  return p;
}

}  // namespace offnadir::datagen
