#include "offnadir/datagen/scene.hpp"

#include <cmath>

namespace offnadir::datagen {

Stratum stratum_of_height(double h_m) {
  if (h_m <= kStratumLowMax) return Stratum::low;
  if (h_m <= kStratumMidMax) return Stratum::mid;
  if (h_m <= kStratumHighMax) return Stratum::high;
  return Stratum::sky;
}

std::string stratum_to_string(Stratum s) {
  switch (s) {
    case Stratum::low: return "low";
    case Stratum::mid: return "mid";
    case Stratum::high: return "high";
    case Stratum::sky: return "sky";
  }
  fail("bad stratum");
}

Stratum stratum_from_string(const std::string& s) {
  if (s == "low") return Stratum::low;
  if (s == "mid") return Stratum::mid;
  if (s == "high") return Stratum::high;
  if (s == "sky") return Stratum::sky;
  fail(strfmt("unknown stratum '%s'", s.c_str()));
}

void BuildingSpec::validate() const {
  ON_CHECK(footprint.pts.size() >= 3 && footprint.is_simple(),
           "building footprint must be a simple polygon");
  ON_CHECK(footprint.area() > 0, "building footprint must have positive area");
  ON_CHECK(std::isfinite(height_m) && height_m >= 0, "building height must be >= 0");
  for (double a : roof_albedo)
    ON_CHECK(a >= 0 && a <= 1, "roof albedo outside [0,1]");
}

void ViewGeometry::validate() const {
  ON_CHECK(off_nadir_tan >= 0, "off_nadir_tan must be >= 0");
  ON_CHECK(azimuth_rad >= 0 && azimuth_rad < 2 * M_PI, "azimuth must be in [0, 2*pi)");
}

Vec2 ViewGeometry::displacement_m(double height_m) const {
  const double d = height_m * off_nadir_tan;
  return {d * std::cos(azimuth_rad), d * std::sin(azimuth_rad)};
}

void SceneSpec::validate() const {
  ON_CHECK(extent_w_m > 0 && extent_h_m > 0, "scene extent must be positive");
  ON_CHECK(count_min >= 0 && count_max >= count_min, "bad building count range");
  double sum = 0;
  for (double w : strata_weights) {
    ON_CHECK(w >= 0, "negative stratum weight");
    sum += w;
  }
  ON_CHECK(count_max == 0 || std::abs(sum - 1.0) < 1e-9,
           "stratum weights must sum to 1");
  ON_CHECK(building_min_m > 0 && building_max_m >= building_min_m,
           "bad building size range");
}

namespace {

// Height ranges per stratum; sky is open-ended in principle, capped for
// rendering sanity.
double sample_height(Rng& rng, Stratum s) {
  switch (s) {
    case Stratum::low: return rng.uniform(4.0, kStratumLowMax);
    case Stratum::mid: return rng.uniform(kStratumLowMax + 0.5, kStratumMidMax);
    case Stratum::high: return rng.uniform(kStratumMidMax + 1.0, kStratumHighMax);
    case Stratum::sky: return rng.uniform(kStratumHighMax + 5.0, 160.0);
  }
  fail("bad stratum");
}

Stratum sample_stratum(Rng& rng, const std::array<double, 4>& w) {
  const double u = rng.uniform();
  double acc = 0;
  for (int i = 0; i < 4; ++i) {
    acc += w[i];
    if (u < acc) return Stratum(i);
  }
  return Stratum::sky;
}

std::array<double, 3> sample_albedo(Rng& rng) {
  // Roof palette deliberately overlaps the ground/distractor colors.
  static const std::array<std::array<double, 3>, 6> palette{{
      {0.28, 0.28, 0.30},  // dark slate
      {0.55, 0.55, 0.55},  // concrete
      {0.62, 0.36, 0.26},  // terracotta
      {0.35, 0.45, 0.33},  // mossy
      {0.45, 0.50, 0.58},  // blue-gray
      {0.70, 0.68, 0.60},  // pale
  }};
  auto base = palette[size_t(rng.uniform_int(0, 5))];
  for (double& v : base) {
    v += rng.uniform(-0.05, 0.05);
    v = std::min(1.0, std::max(0.0, v));
  }
  return base;
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Scene scene;
  scene.texture_seed = splitmix64(spec.seed ^ 0x7477657874757265ull);

  double cap = spec.max_height_cap_m;
  if (spec.pin_stratum >= 0) {
    ON_CHECK(spec.pin_stratum <= 3, "pin_stratum out of range");
    static constexpr double kCeil[4] = {kStratumLowMax, kStratumMidMax,
                                        kStratumHighMax, 160.0};
    cap = kCeil[spec.pin_stratum];
  }

  const int count = int(rng.uniform_int(spec.count_min, spec.count_max));
  const int kMaxAttempts = 80;
  for (int b = 0; b < count; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const bool pinned = (b == 0 && spec.pin_stratum >= 0);
      Stratum s = pinned ? Stratum(spec.pin_stratum)
                         : sample_stratum(rng, spec.strata_weights);
      double h = sample_height(rng, s);
      if (!pinned && cap > 0 && h > cap) h = cap;
      const double w = rng.uniform(spec.building_min_m, spec.building_max_m);
      const double d = rng.uniform(spec.building_min_m, spec.building_max_m);
      const double angle = rng.uniform(0, M_PI / 2);
      const double margin = std::max(w, d) * 0.75;
      const Vec2 c =
          pinned ? Vec2{spec.pin_center.x + rng.uniform(-8.0, 8.0),
                        spec.pin_center.y + rng.uniform(-8.0, 8.0)}
                 : Vec2{rng.uniform(margin, spec.extent_w_m - margin),
                        rng.uniform(margin, spec.extent_h_m - margin)};
      Polygon fp = make_rect(c, w, d, angle);
      bool collides = false;
      for (const auto& other : scene.buildings)
        if (convex_overlap(fp, other.footprint)) {
          collides = true;
          break;
        }
      if (collides) continue;
      BuildingSpec bs;
      bs.footprint = std::move(fp);
      bs.height_m = h;
      bs.roof_albedo = sample_albedo(rng);
      bs.validate();
      scene.buildings.push_back(std::move(bs));
      placed = true;
    }
    ON_CHECK(placed,
             "generate_scene: cannot place building %d of %d without overlap "
             "(density infeasible)",
             b + 1, count);
  }

  for (int i = 0; i < spec.distractor_count; ++i) {
    Distractor d;
    const bool road_like = rng.uniform() < 0.5;
    const double w = road_like ? rng.uniform(4.0, 8.0) : rng.uniform(10.0, 28.0);
    const double len = road_like ? rng.uniform(50.0, spec.extent_w_m)
                                 : rng.uniform(10.0, 28.0);
    d.shape = make_rect({rng.uniform(0, spec.extent_w_m), rng.uniform(0, spec.extent_h_m)},
                        len, w, rng.uniform(0, M_PI));
    d.albedo = sample_albedo(rng);
    scene.distractors.push_back(std::move(d));
  }
  return scene;
}

Polygon project_roof(const Polygon& footprint_m, double height_m,
                     const ViewGeometry& view, double gsd_m) {
  ON_CHECK(gsd_m > 0, "project_roof: gsd must be positive");
  view.validate();
  const Vec2 d = view.displacement_m(height_m);
  Polygon px;
  px.pts.reserve(footprint_m.pts.size());
  for (const Vec2& p : footprint_m.pts)
    px.pts.push_back({(p.x + d.x) / gsd_m, (p.y + d.y) / gsd_m});
  return px;
}

nn::TensorF rasterize_mask_px(const std::vector<Polygon>& polygons_px,
                              Vec2 tile_origin_px, int tile_size_px) {
  nn::TensorF mask(1, 1, tile_size_px, tile_size_px);
  for (const Polygon& poly : polygons_px) {
    if (poly.pts.size() < 3) continue;
    const Aabb b = poly.bounds();
    // Pixel index range that could contain centers inside the polygon.
    int x0 = int(std::floor(b.min_x - tile_origin_px.x - 0.5));
    int x1 = int(std::ceil(b.max_x - tile_origin_px.x - 0.5));
    int y0 = int(std::floor(b.min_y - tile_origin_px.y - 0.5));
    int y1 = int(std::ceil(b.max_y - tile_origin_px.y - 0.5));
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, tile_size_px - 1);
    y1 = std::min(y1, tile_size_px - 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        if (mask.at(0, 0, y, x) == 1.f) continue;
        const Vec2 center{tile_origin_px.x + x + 0.5, tile_origin_px.y + y + 0.5};
        if (point_in_polygon(center, poly)) mask.at(0, 0, y, x) = 1.f;
      }
  }
  return mask;
}

nn::TensorF rasterize_mask(const std::vector<Polygon>& polygons_m,
                           Vec2 tile_origin_m, int tile_size_px, double gsd_m) {
  ON_CHECK(gsd_m > 0, "rasterize_mask: gsd must be positive");
  std::vector<Polygon> px;
  px.reserve(polygons_m.size());
  for (const Polygon& p : polygons_m) {
    Polygon q;
    q.pts.reserve(p.pts.size());
    for (const Vec2& v : p.pts) q.pts.push_back({v.x / gsd_m, v.y / gsd_m});
    px.push_back(std::move(q));
  }
  return rasterize_mask_px(px, {tile_origin_m.x / gsd_m, tile_origin_m.y / gsd_m},
                           tile_size_px);
}

}  // namespace offnadir::datagen
