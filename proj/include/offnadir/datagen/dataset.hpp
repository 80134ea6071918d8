#pragma once
// Dataset construction and the on-disk layout:
//   <root>/manifest.json
//   <root>/<split>/images/<id>.png   8-bit RGB
//   <root>/<split>/masks/<id>.png    8-bit gray, 0/255
// manifest.json: schema_version, gsd_cm (0 when mixed), splits,
// tiles[{id, split, stratum, max_height_m, label_kind, gsd_cm}],
// generator{seed, config_hash}.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "offnadir/datagen/render.hpp"
#include "offnadir/datagen/scene.hpp"
#include "offnadir/jsonio.hpp"

namespace offnadir::datagen {

struct TileMeta {
  std::string id;
  std::string split;
  Stratum stratum = Stratum::low;
  double max_height_m = 0;
  std::string label_kind;  // "noisy" | "clean"
  int gsd_cm = 0;
};

struct DatasetManifest {
  int schema_version = 1;
  int gsd_cm = 0;  // dataset-wide value; 0 when tiles mix resolutions
  std::map<std::string, std::vector<std::string>> splits;
  std::vector<TileMeta> tiles;
  uint64_t seed = 0;
  std::string config_hash;

  Json to_json() const;
  static DatasetManifest from_json(const Json& j);
  const TileMeta& meta(const std::string& split, const std::string& id) const;

  // Every referenced tile file exists; ids unique within a split.
  void validate_files(const std::string& root) const;
};

void save_manifest(const std::string& root, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& root);

struct SplitSpec {
  std::string name;
  int count = 0;
  std::string label_kind = "clean";
  bool stratified = false;        // exact per-stratum quotas instead of sampling
  bool emit_noisy_pair = false;   // also write "<name>_noisy" with footprint masks
};

struct DatagenConfig {
  uint64_t seed = 1;
  int tile_px = 256;
  std::vector<int> gsd_cm{30, 60, 120};
  double off_nadir_tan = 0.25;
  double azimuth_deg = 45.0;
  int buildings_min = 2, buildings_max = 6;
  int distractors = 3;
  double building_min_m = 8, building_max_m = 32;
  // Footprint sizes are given at this reference gsd and scale with the tile's
  // gsd, keeping the pixel footprint comparable across resolutions (a fixed
  // 256-px tile shows whole large buildings at 120 cm but only parts of them
  // at 30 cm). 0 disables the scaling.
  double gsd_size_ref = 0.6;
  std::array<double, 4> strata_weights{0.35, 0.30, 0.20, 0.15};
  std::array<double, 4> ev_strata_weights{0.25, 0.25, 0.25, 0.25};
  std::vector<SplitSpec> splits{
      {"t_train", 600, "noisy", false, false},
      {"t_val", 60, "noisy", false, false},
      {"s_train", 120, "clean", false, false},
      {"s_val", 40, "clean", false, false},
      {"ev_val", 60, "clean", true, true},
  };

  Json to_json() const;
  static DatagenConfig from_json(const Json& j);
  void validate() const;
};

// Builds every configured split under out_dir and writes the manifest.
// Tile generation is parallel; output is bit-identical for any worker count
// (per-tile RNG streams are derived from (seed, tile id)).
DatasetManifest build_dataset(const DatagenConfig& cfg, const std::string& out_dir,
                              bool force);

// Cuts a georeferenced raster + polygon file into 256-px tiles and masks.
// The polygon file carries {"frame": "pixel"|"world", "origin_m": [x,y],
// "gsd_m": g, "features": [{"polygon": [[x,y],...], "height_m": h}]}.
// World-frame inputs must agree with the gsd argument; mismatches are errors,
// not guesses.
DatasetManifest tile_raster(const std::string& raster_path,
                            const std::string& polygon_path, double gsd_m,
                            const std::string& out_dir, bool force,
                            int tile_px = 256);

// In-memory split for training/eval.
struct SplitData {
  std::vector<nn::TensorF> images;  // (1,3,S,S)
  std::vector<nn::TensorF> masks;   // (1,1,S,S)
  std::vector<TileMeta> metas;

  size_t size() const { return images.size(); }
};

SplitData load_split(const std::string& root, const DatasetManifest& m,
                     const std::string& split);

}  // namespace offnadir::datagen
