#pragma once
// Flat-shaded tile renderer: textured ground, roof-colored distractors,
// offset shadows, facade sweep bands, and roofs at their displaced position.

#include "offnadir/datagen/scene.hpp"

namespace offnadir::datagen {

// RGB tile (1,3,S,S) in [0,1]. tile_origin_m is the world position of the
// tile's top-left corner. Roof pixels carry the building's roof_albedo
// exactly; facade pixels carry 0.55 * roof_albedo.
nn::TensorF render_tile(const Scene& scene, const ViewGeometry& view, double gsd_m,
                        Vec2 tile_origin_m, int tile_size_px);

inline constexpr double kFacadeShade = 0.55;
inline constexpr double kShadowShade = 0.50;
inline constexpr double kShadowTan = 0.40;

}  // namespace offnadir::datagen
