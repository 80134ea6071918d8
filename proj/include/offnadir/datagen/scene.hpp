#pragma once
// Synthetic off-nadir scenes: buildings with heights, the relief-displacement
// projection, and the pixel-center rasterizer.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "offnadir/datagen/geometry.hpp"
#include "offnadir/tensor.hpp"

namespace offnadir::datagen {

// Height strata. Thresholds in meters: low <= 12 < mid <= 30 < high <= 100 < sky.
enum class Stratum { low, mid, high, sky };

inline constexpr double kStratumLowMax = 12.0;
inline constexpr double kStratumMidMax = 30.0;
inline constexpr double kStratumHighMax = 100.0;

Stratum stratum_of_height(double h_m);
std::string stratum_to_string(Stratum s);
Stratum stratum_from_string(const std::string& s);

struct BuildingSpec {
  Polygon footprint;                       // world meters
  double height_m = 0;
  std::array<double, 3> roof_albedo{0.5, 0.5, 0.5};

  void validate() const;
};

struct ViewGeometry {
  double off_nadir_tan = 0.25;  // tangent of the off-nadir angle
  double azimuth_rad = 0.0;     // displacement direction, [0, 2*pi)

  void validate() const;
  // World-space roof displacement for a given height.
  Vec2 displacement_m(double height_m) const;
};

// Unlabeled clutter rendered with roof-like albedo (roads, plazas).
struct Distractor {
  Polygon shape;
  std::array<double, 3> albedo{0.4, 0.4, 0.4};
};

struct SceneSpec {
  double extent_w_m = 200, extent_h_m = 200;
  int count_min = 2, count_max = 6;
  std::array<double, 4> strata_weights{0.25, 0.25, 0.25, 0.25};  // low..sky
  uint64_t seed = 0;
  double building_min_m = 8, building_max_m = 32;
  int distractor_count = 3;
  // Optional cap: no building taller than this (0 = uncapped). Used to pin a
  // tile's stratum to a target class.
  double max_height_cap_m = 0;
  // When >= 0, building 0 is forced into this stratum (enum index) and placed
  // near pin_center, and the cap is set to the stratum ceiling. This is how
  // stratified evaluation tiles get a guaranteed representative building.
  int pin_stratum = -1;
  Vec2 pin_center{};

  void validate() const;
};

struct Scene {
  std::vector<BuildingSpec> buildings;
  std::vector<Distractor> distractors;
  uint64_t texture_seed = 0;
};

// Deterministic for a given spec (including its seed). Throws when non-
// overlapping placement keeps failing (density infeasible).
Scene generate_scene(const SceneSpec& spec);

// Roof outline in pixel coordinates: footprint translated by
// height * off_nadir_tan / gsd pixels along the view azimuth.
Polygon project_roof(const Polygon& footprint_m, double height_m,
                     const ViewGeometry& view, double gsd_m);

// Binary mask over a tile_size_px square tile whose top-left corner sits at
// tile_origin_m (world meters). A pixel is 1 iff its center lies inside any
// polygon (union semantics).
nn::TensorF rasterize_mask(const std::vector<Polygon>& polygons_m,
                           Vec2 tile_origin_m, int tile_size_px, double gsd_m);

// Same rule in pixel space (polygons and origin already divided by gsd).
nn::TensorF rasterize_mask_px(const std::vector<Polygon>& polygons_px,
                              Vec2 tile_origin_px, int tile_size_px);

}  // namespace offnadir::datagen
