// Scene generation, projection, rasterization, rendering, and dataset
// builder checks, including the displacement-law and monotonicity oracles.

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "offnadir/datagen/dataset.hpp"
#include "offnadir/datagen/png_io.hpp"
#include "offnadir/datagen/render.hpp"
#include "offnadir/datagen/stats.hpp"

using namespace offnadir;
using namespace offnadir::datagen;
namespace fs = std::filesystem;

namespace {

std::string test_dir(const std::string& name) {
  const std::string d = std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR")
                                                          : "/tmp") +
                        "/offnadir_test_" + name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Vec2 mask_centroid(const nn::TensorF& mask) {
  double sx = 0, sy = 0, n = 0;
  for (int y = 0; y < mask.h(); ++y)
    for (int x = 0; x < mask.w(); ++x)
      if (mask.at(0, 0, y, x) == 1.f) {
        sx += x + 0.5;
        sy += y + 0.5;
        n += 1;
      }
  REQUIRE(n > 0);
  return {sx / n, sy / n};
}

}  // namespace

TEST_CASE("geometry: area, centroid, point-in-polygon") {
  Polygon sq = make_rect({5, 5}, 4, 2, 0);
  CHECK(sq.area() == doctest::Approx(8.0));
  CHECK(sq.centroid().x == doctest::Approx(5.0));
  CHECK(sq.centroid().y == doctest::Approx(5.0));
  CHECK(point_in_polygon({5, 5}, sq));
  CHECK(point_in_polygon({6.9, 5.9}, sq));
  CHECK_FALSE(point_in_polygon({7.1, 5}, sq));
  CHECK(sq.is_simple());

  Polygon bow;  // self-intersecting
  bow.pts = {{0, 0}, {2, 2}, {2, 0}, {0, 2}};
  CHECK_FALSE(bow.is_simple());
}

TEST_CASE("geometry: convex overlap via SAT") {
  Polygon a = make_rect({0, 0}, 4, 4, 0);
  Polygon b = make_rect({3, 0}, 4, 4, 0.3);
  Polygon c = make_rect({10, 10}, 4, 4, 0.7);
  CHECK(convex_overlap(a, b));
  CHECK_FALSE(convex_overlap(a, c));
}

TEST_CASE("project_roof: displacement arithmetic") {
  Polygon fp = make_rect({30, 30}, 10, 10, 0);
  ViewGeometry v;
  v.off_nadir_tan = 0.2;
  v.azimuth_rad = 0;
  // height 60, tan 0.2, gsd 0.6 -> 20 px displacement along +x.
  Polygon roof = project_roof(fp, 60, v, 0.6);
  for (size_t i = 0; i < fp.pts.size(); ++i) {
    CHECK(roof.pts[i].x == doctest::Approx(fp.pts[i].x / 0.6 + 20.0));
    CHECK(roof.pts[i].y == doctest::Approx(fp.pts[i].y / 0.6));
  }
  // Zero height: roof == footprint in pixel coords.
  Polygon same = project_roof(fp, 0, v, 0.6);
  for (size_t i = 0; i < fp.pts.size(); ++i) {
    CHECK(same.pts[i].x == doctest::Approx(fp.pts[i].x / 0.6));
    CHECK(same.pts[i].y == doctest::Approx(fp.pts[i].y / 0.6));
  }
}

TEST_CASE("project_roof: 30 cm vs 120 cm pixel offsets are exactly 1:4") {
  Polygon fp = make_rect({50, 50}, 12, 12, 0.4);
  ViewGeometry v;
  v.off_nadir_tan = 0.25;
  v.azimuth_rad = 1.1;
  const double h = 40;
  Polygon r030 = project_roof(fp, h, v, 0.30);
  Polygon r120 = project_roof(fp, h, v, 1.20);
  const Vec2 d030 = r030.pts[0] - Vec2{fp.pts[0].x / 0.30, fp.pts[0].y / 0.30};
  const Vec2 d120 = r120.pts[0] - Vec2{fp.pts[0].x / 1.20, fp.pts[0].y / 1.20};
  CHECK(d030.norm() / d120.norm() == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("rasterize_mask: analytic coverage and empty input") {
  // Square covering exactly the centers of a 2x2 pixel block.
  Polygon sq;
  sq.pts = {{1.2, 1.2}, {2.8, 1.2}, {2.8, 2.8}, {1.2, 2.8}};  // meters, gsd=1
  auto mask = rasterize_mask({sq}, {0, 0}, 8, 1.0);
  double sum = 0;
  for (float v : mask.v) sum += v;
  CHECK(sum == 4.0);
  CHECK(mask.at(0, 0, 1, 1) == 1.f);
  CHECK(mask.at(0, 0, 2, 2) == 1.f);

  auto empty = rasterize_mask({}, {0, 0}, 8, 1.0);
  for (float v : empty.v) CHECK(v == 0.f);

  // Fully outside the tile: zeros.
  Polygon far = make_rect({100, 100}, 5, 5, 0);
  auto zeros = rasterize_mask({far}, {0, 0}, 8, 1.0);
  for (float v : zeros.v) CHECK(v == 0.f);
}

TEST_CASE("rasterize_mask equals per-pixel point-in-polygon oracle") {
  Rng rng(77);
  std::vector<Polygon> polys;
  for (int i = 0; i < 50; ++i)
    polys.push_back(make_rect({rng.uniform(0, 32), rng.uniform(0, 32)},
                              rng.uniform(1, 9), rng.uniform(1, 9),
                              rng.uniform(0, M_PI)));
  const double gsd = 0.5;
  auto mask = rasterize_mask(polys, {4, 4}, 32, gsd);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const Vec2 center{4 / gsd + x + 0.5, 4 / gsd + y + 0.5};
      bool inside = false;
      for (const Polygon& p : polys) {
        Polygon px;
        for (const Vec2& v : p.pts) px.pts.push_back({v.x / gsd, v.y / gsd});
        if (point_in_polygon(center, px)) {
          inside = true;
          break;
        }
      }
      CHECK(mask.at(0, 0, y, x) == (inside ? 1.f : 0.f));
    }
}

TEST_CASE("generate_scene: degenerate count, determinism, sky-only weights") {
  SceneSpec spec;
  spec.seed = 5;
  spec.count_min = spec.count_max = 0;
  CHECK(generate_scene(spec).buildings.empty());

  spec.count_min = 2;
  spec.count_max = 5;
  Scene a = generate_scene(spec);
  Scene b = generate_scene(spec);
  REQUIRE(a.buildings.size() == b.buildings.size());
  for (size_t i = 0; i < a.buildings.size(); ++i) {
    CHECK(a.buildings[i].height_m == b.buildings[i].height_m);
    CHECK(a.buildings[i].footprint.pts[0].x == b.buildings[i].footprint.pts[0].x);
    CHECK(a.buildings[i].roof_albedo == b.buildings[i].roof_albedo);
  }

  spec.strata_weights = {0, 0, 0, 1};
  Scene sky = generate_scene(spec);
  for (const auto& bld : sky.buildings) CHECK(bld.height_m > kStratumHighMax);

  // Non-overlap invariant.
  for (size_t i = 0; i < sky.buildings.size(); ++i)
    for (size_t j = i + 1; j < sky.buildings.size(); ++j)
      CHECK_FALSE(convex_overlap(sky.buildings[i].footprint,
                                 sky.buildings[j].footprint));
}

TEST_CASE("generate_scene rejects infeasible density") {
  SceneSpec spec;
  spec.seed = 9;
  spec.extent_w_m = 30;
  spec.extent_h_m = 30;
  spec.count_min = spec.count_max = 40;
  spec.building_min_m = 12;
  spec.building_max_m = 14;
  CHECK_THROWS_AS(generate_scene(spec), Error);
}

TEST_CASE("render_tile: nadir view puts roof pixels exactly on the footprint") {
  SceneSpec spec;
  spec.seed = 31;
  spec.count_min = spec.count_max = 1;
  spec.extent_w_m = 80;
  spec.extent_h_m = 80;
  spec.distractor_count = 0;
  Scene scene = generate_scene(spec);
  REQUIRE(scene.buildings.size() == 1);
  const auto& b = scene.buildings[0];

  ViewGeometry nadir;
  nadir.off_nadir_tan = 0;
  const double gsd = 0.5;
  auto img = render_tile(scene, nadir, gsd, {0, 0}, 128);
  auto mask = rasterize_mask({b.footprint}, {0, 0}, 128, gsd);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      const bool roof_colored =
          img.at(0, 0, y, x) == float(b.roof_albedo[0]) &&
          img.at(0, 1, y, x) == float(b.roof_albedo[1]) &&
          img.at(0, 2, y, x) == float(b.roof_albedo[2]);
      CHECK(roof_colored == (mask.at(0, 0, y, x) == 1.f));
    }
}

TEST_CASE("render_tile: facade band grows with off-nadir tangent") {
  SceneSpec spec;
  spec.seed = 32;
  spec.count_min = spec.count_max = 1;
  spec.extent_w_m = 120;
  spec.extent_h_m = 120;
  spec.distractor_count = 0;
  spec.strata_weights = {0, 0, 1, 0};  // high-rise: visible band
  Scene scene = generate_scene(spec);
  const auto& b = scene.buildings[0];

  ViewGeometry v;
  v.azimuth_rad = 0.3;
  int prev = -1;
  for (double t : {0.05, 0.15, 0.30}) {
    v.off_nadir_tan = t;
    auto img = render_tile(scene, v, 0.5, {0, 0}, 240);
    int facade = 0;
    for (int y = 0; y < 240; ++y)
      for (int x = 0; x < 240; ++x)
        if (img.at(0, 0, y, x) == float(kFacadeShade * b.roof_albedo[0]) &&
            img.at(0, 1, y, x) == float(kFacadeShade * b.roof_albedo[1]) &&
            img.at(0, 2, y, x) == float(kFacadeShade * b.roof_albedo[2]))
          ++facade;
    CHECK(facade >= prev);
    prev = facade;
  }
  CHECK(prev > 0);
}

TEST_CASE("render_tile is deterministic") {
  SceneSpec spec;
  spec.seed = 33;
  Scene scene = generate_scene(spec);
  ViewGeometry v;
  auto a = render_tile(scene, v, 0.6, {10, 10}, 96);
  auto b = render_tile(scene, v, 0.6, {10, 10}, 96);
  CHECK(a.v == b.v);
}

TEST_CASE("displacement law: centroid offset of isolated buildings") {
  Rng rng(55);
  for (int trial = 0; trial < 12; ++trial) {
    const double h = rng.uniform(10, 120);
    const double gsd = std::vector<double>{0.3, 0.6, 1.2}[size_t(rng.uniform_int(0, 2))];
    ViewGeometry v;
    v.off_nadir_tan = 0.25;
    v.azimuth_rad = rng.uniform(0, 2 * M_PI);
    const double d_px = h * v.off_nadir_tan / gsd;

    // Footprint and roof straddle the tile center so both fit.
    const Vec2 disp = v.displacement_m(h);
    const double tile_m = 256 * gsd;
    const Vec2 c{tile_m / 2 - disp.x / 2, tile_m / 2 - disp.y / 2};
    Polygon fp = make_rect(c, 20, 20, rng.uniform(0, M_PI));

    auto noisy = rasterize_mask({fp}, {0, 0}, 256, gsd);
    auto clean = rasterize_mask_px({project_roof(fp, h, v, gsd)}, {0, 0}, 256);
    const Vec2 offset = mask_centroid(clean) - mask_centroid(noisy);
    CHECK(std::abs(offset.norm() - d_px) <= 1.0);
  }
}

TEST_CASE("png round trip preserves tiles and masks") {
  const std::string dir = test_dir("png");
  SceneSpec spec;
  spec.seed = 77;
  Scene scene = generate_scene(spec);
  ViewGeometry v;
  auto img = render_tile(scene, v, 0.6, {0, 0}, 64);
  write_png_rgb8(dir + "/img.png", img);
  auto back = read_png_rgb(dir + "/img.png");
  REQUIRE(back.same_shape(img));
  for (size_t i = 0; i < img.numel(); ++i)
    CHECK(std::abs(back.v[i] - img.v[i]) <= 0.5f / 255.f + 1e-6f);

  std::vector<Polygon> polys{make_rect({20, 20}, 14, 9, 0.3)};
  auto mask = rasterize_mask(polys, {0, 0}, 64, 0.6);
  write_png_mask8(dir + "/mask.png", mask);
  auto mback = read_png_mask(dir + "/mask.png");
  CHECK(mback.v == mask.v);
}

TEST_CASE("build_dataset: counts, strata quotas, determinism, pairing") {
  const std::string dir = test_dir("dataset");
  DatagenConfig cfg;
  cfg.seed = 100;
  cfg.tile_px = 64;
  cfg.gsd_cm = {60, 120};
  cfg.buildings_min = 1;
  cfg.buildings_max = 3;
  cfg.splits = {
      {"t_train", 6, "noisy", false, false},
      {"s_train", 4, "clean", false, false},
      {"ev_val", 8, "clean", true, true},
  };
  DatasetManifest m = build_dataset(cfg, dir, false);

  CHECK(m.splits.at("t_train").size() == 6);
  CHECK(m.splits.at("s_train").size() == 4);
  CHECK(m.splits.at("ev_val").size() == 8);
  CHECK(m.splits.at("ev_val_noisy").size() == 8);
  m.validate_files(dir);

  // Stratified split covers all four classes at the configured proportions.
  std::map<Stratum, int> seen;
  for (const TileMeta& t : m.tiles)
    if (t.split == "ev_val") seen[t.stratum]++;
  CHECK(seen[Stratum::low] == 2);
  CHECK(seen[Stratum::mid] == 2);
  CHECK(seen[Stratum::high] == 2);
  CHECK(seen[Stratum::sky] == 2);

  // Refuses to overwrite without force.
  CHECK_THROWS_AS(build_dataset(cfg, dir, false), Error);

  // Determinism: rebuild with force, manifests and sample tile bytes match.
  const Json j1 = m.to_json();
  auto read_bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string sample = dir + "/ev_val/images/" + m.splits.at("ev_val")[0] + ".png";
  const std::string bytes1 = read_bytes(sample);
  DatasetManifest m2 = build_dataset(cfg, dir, true);
  CHECK(m2.to_json() == j1);
  CHECK(read_bytes(sample) == bytes1);

  // Noisy/clean counterparts share ids.
  std::set<std::string> ev_ids(m.splits.at("ev_val").begin(),
                               m.splits.at("ev_val").end());
  for (const std::string& id : m.splits.at("ev_val_noisy"))
    CHECK(ev_ids.count(id) == 1);

  // Loading a split returns consistent shapes and metadata.
  SplitData data = load_split(dir, m, "ev_val");
  REQUIRE(data.size() == 8);
  CHECK(data.images[0].c() == 3);
  CHECK(data.images[0].h() == 64);
  CHECK(data.masks[0].h() == 64);
  CHECK(data.metas[0].label_kind == "clean");
}

TEST_CASE("misalignment stats: zero off-nadir gives IoU 1, and monotonicity") {
  const std::string dir = test_dir("stats");
  DatagenConfig cfg;
  cfg.seed = 200;
  cfg.tile_px = 96;
  cfg.gsd_cm = {120};
  cfg.off_nadir_tan = 0.0;
  cfg.buildings_min = 1;
  cfg.buildings_max = 2;
  cfg.distractors = 0;
  cfg.splits = {{"pairs", 6, "clean", true, true}};
  DatasetManifest m = build_dataset(cfg, dir, false);
  auto rows = misalignment_stats(dir, m);
  REQUIRE(!rows.empty());
  for (const auto& r : rows) CHECK(r.mean_iou == doctest::Approx(1.0));

  // With off-nadir displacement, IoU decreases from low to sky strata and
  // increases with gsd.
  const std::string dir2 = test_dir("stats2");
  DatagenConfig cfg2;
  cfg2.seed = 201;
  cfg2.tile_px = 256;
  cfg2.gsd_cm = {30, 60, 120};
  cfg2.off_nadir_tan = 0.25;
  cfg2.buildings_min = 1;
  cfg2.buildings_max = 1;  // isolated buildings: per-stratum IoU is clean
  cfg2.building_min_m = 26;
  cfg2.building_max_m = 40;
  cfg2.distractors = 0;
  cfg2.splits = {{"pairs", 48, "clean", true, true}};
  DatasetManifest m2 = build_dataset(cfg2, dir2, false);
  auto rows2 = misalignment_stats(dir2, m2);
  std::map<std::pair<int, int>, double> iou;
  for (const auto& r : rows2) iou[{r.gsd_cm, int(r.stratum)}] = r.mean_iou;
  for (int gsd : {30, 60, 120}) {
    for (int s = 0; s + 1 < 4; ++s) {
      REQUIRE(iou.count({gsd, s}));
      REQUIRE(iou.count({gsd, s + 1}));
      CHECK(iou[{gsd, s}] > iou[{gsd, s + 1}]);
    }
  }
  for (int s = 0; s < 4; ++s) {
    CHECK(iou[{30, s}] <= iou[{60, s}]);
    CHECK(iou[{60, s}] <= iou[{120, s}]);
  }
}

TEST_CASE("tile_raster: tiling, zero features, rasterizer cross-check") {
  const std::string dir = test_dir("tileraster");
  // Build a 512x512 synthetic raster.
  nn::TensorF raster(1, 3, 512, 512);
  Rng rng(301);
  for (auto& v : raster.v) v = float(rng.uniform());
  write_png_rgb8(dir + "/raster.png", raster);

  Json poly;
  poly["frame"] = "pixel";
  poly["features"] = Json::array();
  poly["features"].push_back(
      Json{{"polygon", Json::array({Json::array({100.0, 100.0}),
                                    Json::array({180.0, 100.0}),
                                    Json::array({180.0, 170.0}),
                                    Json::array({100.0, 170.0})})},
           {"height_m", 20.0}});
  save_json(dir + "/poly.json", poly);

  DatasetManifest m = tile_raster(dir + "/raster.png", dir + "/poly.json", 0.6,
                                  dir + "/out", false);
  CHECK(m.splits.at("tiles").size() == 4);  // 512x512 -> 4 tiles
  m.validate_files(dir + "/out");

  // Masks equal rasterize_mask applied per tile.
  Polygon px;
  px.pts = {{100, 100}, {180, 100}, {180, 170}, {100, 170}};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      auto expect = rasterize_mask_px({px}, {double(c) * 256, double(r) * 256}, 256);
      auto got = read_png_mask(dir + strfmt("/out/tiles/masks/tile_r%03d_c%03d.png",
                                            r, c));
      CHECK(got.v == expect.v);
    }

  // Zero features: warns and produces empty masks.
  Json poly0;
  poly0["frame"] = "pixel";
  poly0["features"] = Json::array();
  save_json(dir + "/poly0.json", poly0);
  DatasetManifest m0 = tile_raster(dir + "/raster.png", dir + "/poly0.json", 0.6,
                                   dir + "/out0", false);
  auto mask0 = read_png_mask(dir + "/out0/tiles/masks/tile_r000_c000.png");
  for (float v : mask0.v) CHECK(v == 0.f);

  // World-frame gsd mismatch is an error, not a guess.
  Json polyw = poly;
  polyw["frame"] = "world";
  polyw["origin_m"] = Json::array({0.0, 0.0});
  polyw["gsd_m"] = 0.3;
  save_json(dir + "/polyw.json", polyw);
  CHECK_THROWS_AS(tile_raster(dir + "/raster.png", dir + "/polyw.json", 0.6,
                              dir + "/outw", false),
                  Error);
}
