#include "offnadir/datagen/render.hpp"

#include <algorithm>
#include <cmath>

namespace offnadir::datagen {

namespace {

double lattice_noise(uint64_t seed, int64_t ix, int64_t iy) {
  uint64_t h = splitmix64(seed ^ (uint64_t(ix) * 0x9e3779b97f4a7c15ull));
  h = splitmix64(h ^ (uint64_t(iy) * 0xc2b2ae3d27d4eb4full));
  return double(h >> 11) * 0x1.0p-53;
}

// Two-octave bilinear value noise over world meters.
double ground_noise(uint64_t seed, double x_m, double y_m) {
  double v = 0, amp = 0.65, cell = 9.0;
  for (int oct = 0; oct < 2; ++oct) {
    const double gx = x_m / cell, gy = y_m / cell;
    const int64_t ix = int64_t(std::floor(gx)), iy = int64_t(std::floor(gy));
    const double fx = gx - double(ix), fy = gy - double(iy);
    const double a = lattice_noise(seed + oct, ix, iy);
    const double b = lattice_noise(seed + oct, ix + 1, iy);
    const double c = lattice_noise(seed + oct, ix, iy + 1);
    const double d = lattice_noise(seed + oct, ix + 1, iy + 1);
    v += amp * ((a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy);
    amp *= 0.45;
    cell *= 0.31;
  }
  return v;
}

struct PxPoly {
  Polygon poly;
  Aabb bounds;
};

PxPoly to_px(const Polygon& p_m, double gsd) {
  PxPoly out;
  out.poly.pts.reserve(p_m.pts.size());
  for (const Vec2& v : p_m.pts) out.poly.pts.push_back({v.x / gsd, v.y / gsd});
  out.bounds = out.poly.bounds();
  return out;
}

template <class Paint>
void paint_polygon(const PxPoly& p, Vec2 origin_px, int size, Paint&& paint) {
  int x0 = std::max(0, int(std::floor(p.bounds.min_x - origin_px.x - 0.5)));
  int x1 = std::min(size - 1, int(std::ceil(p.bounds.max_x - origin_px.x - 0.5)));
  int y0 = std::max(0, int(std::floor(p.bounds.min_y - origin_px.y - 0.5)));
  int y1 = std::min(size - 1, int(std::ceil(p.bounds.max_y - origin_px.y - 0.5)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const Vec2 center{origin_px.x + x + 0.5, origin_px.y + y + 0.5};
      if (point_in_polygon(center, p.poly)) paint(y, x);
    }
}

}  // namespace

nn::TensorF render_tile(const Scene& scene, const ViewGeometry& view, double gsd_m,
                        Vec2 tile_origin_m, int tile_size_px) {
  ON_CHECK(gsd_m > 0, "render_tile: gsd must be positive");
  view.validate();
  const int size = tile_size_px;
  nn::TensorF img(1, 3, size, size);
  const Vec2 origin_px{tile_origin_m.x / gsd_m, tile_origin_m.y / gsd_m};

  // Ground texture in world space (resolution independent).
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double wx = tile_origin_m.x + (x + 0.5) * gsd_m;
      const double wy = tile_origin_m.y + (y + 0.5) * gsd_m;
      const double n = ground_noise(scene.texture_seed, wx, wy);
      const double p = lattice_noise(scene.texture_seed ^ 0x5eedull,
                                     int64_t(std::floor(wx * 2)),
                                     int64_t(std::floor(wy * 2)));
      img.at(0, 0, y, x) = float(0.22 + 0.30 * n + 0.03 * p);
      img.at(0, 1, y, x) = float(0.28 + 0.28 * n);
      img.at(0, 2, y, x) = float(0.18 + 0.24 * n - 0.02 * p);
    }

  for (const Distractor& d : scene.distractors) {
    const PxPoly p = to_px(d.shape, gsd_m);
    paint_polygon(p, origin_px, size, [&](int y, int x) {
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = float(d.albedo[c]);
    });
  }

  // Shadows darken whatever ground they fall on; drawn before facades/roofs
  // so building surfaces stay exact.
  const double sun_az = view.azimuth_rad + 0.75 * M_PI;
  for (const BuildingSpec& b : scene.buildings) {
    const double len = b.height_m * kShadowTan;
    const Vec2 sv{len * std::cos(sun_az), len * std::sin(sun_az)};
    std::vector<Vec2> pts = b.footprint.pts;
    for (const Vec2& p : b.footprint.pts) pts.push_back(p + sv);
    const PxPoly shadow = to_px(convex_hull(pts), gsd_m);
    paint_polygon(shadow, origin_px, size, [&](int y, int x) {
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) *= float(kShadowShade);
    });
  }

  // Shorter buildings first so taller neighbours overwrite them.
  std::vector<const BuildingSpec*> order;
  for (const auto& b : scene.buildings) order.push_back(&b);
  std::stable_sort(order.begin(), order.end(),
                   [](const BuildingSpec* a, const BuildingSpec* b) {
                     return a->height_m < b->height_m;
                   });
  for (const BuildingSpec* b : order) {
    PxPoly fp = to_px(b->footprint, gsd_m);
    PxPoly roof;
    roof.poly = project_roof(b->footprint, b->height_m, view, gsd_m);
    roof.bounds = roof.poly.bounds();

    // Facade sweep: hull(footprint, roof) minus roof.
    std::vector<Vec2> pts = fp.poly.pts;
    pts.insert(pts.end(), roof.poly.pts.begin(), roof.poly.pts.end());
    PxPoly sweep;
    sweep.poly = convex_hull(pts);
    sweep.bounds = sweep.poly.bounds();
    paint_polygon(sweep, origin_px, size, [&](int y, int x) {
      const Vec2 center{origin_px.x + x + 0.5, origin_px.y + y + 0.5};
      if (point_in_polygon(center, roof.poly)) return;
      for (int c = 0; c < 3; ++c)
        img.at(0, c, y, x) = float(kFacadeShade * b->roof_albedo[c]);
    });
    paint_polygon(roof, origin_px, size, [&](int y, int x) {
      for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = float(b->roof_albedo[c]);
    });
  }

  for (auto& v : img.v) v = std::min(1.f, std::max(0.f, v));
  return img;
}

}  // namespace offnadir::datagen
