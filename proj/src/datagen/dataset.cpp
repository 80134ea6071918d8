#include "offnadir/datagen/dataset.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "offnadir/datagen/png_io.hpp"

namespace fs = std::filesystem;

namespace offnadir::datagen {

// ---------------------------------------------------------------------------
// Manifest (de)serialization
// ---------------------------------------------------------------------------

Json DatasetManifest::to_json() const {
  Json j;
  j["schema_version"] = schema_version;
  j["gsd_cm"] = gsd_cm;
  Json js = Json::object();
  for (const auto& [name, ids] : splits) js[name] = ids;
  j["splits"] = js;
  Json jt = Json::array();
  for (const TileMeta& t : tiles) {
    jt.push_back(Json{{"id", t.id},
                      {"split", t.split},
                      {"stratum", stratum_to_string(t.stratum)},
                      {"max_height_m", t.max_height_m},
                      {"label_kind", t.label_kind},
                      {"gsd_cm", t.gsd_cm}});
  }
  j["tiles"] = jt;
  j["generator"] = Json{{"seed", seed}, {"config_hash", config_hash}};
  return j;
}

DatasetManifest DatasetManifest::from_json(const Json& j) {
  DatasetManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  ON_CHECK(m.schema_version == 1, "unsupported manifest schema_version %d",
           m.schema_version);
  m.gsd_cm = j.at("gsd_cm").get<int>();
  for (const auto& [name, ids] : j.at("splits").items())
    m.splits[name] = ids.get<std::vector<std::string>>();
  for (const Json& t : j.at("tiles")) {
    TileMeta meta;
    meta.id = t.at("id").get<std::string>();
    meta.split = t.at("split").get<std::string>();
    meta.stratum = stratum_from_string(t.at("stratum").get<std::string>());
    meta.max_height_m = t.at("max_height_m").get<double>();
    meta.label_kind = t.at("label_kind").get<std::string>();
    meta.gsd_cm = t.at("gsd_cm").get<int>();
    m.tiles.push_back(std::move(meta));
  }
  m.seed = j.at("generator").at("seed").get<uint64_t>();
  m.config_hash = j.at("generator").at("config_hash").get<std::string>();
  return m;
}

const TileMeta& DatasetManifest::meta(const std::string& split,
                                      const std::string& id) const {
  for (const TileMeta& t : tiles)
    if (t.split == split && t.id == id) return t;
  fail(strfmt("no tile meta for %s/%s", split.c_str(), id.c_str()));
}

void DatasetManifest::validate_files(const std::string& root) const {
  for (const auto& [name, ids] : splits) {
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    ON_CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
             "duplicate tile ids in split '%s'", name.c_str());
    for (const std::string& id : ids) {
      for (const char* kind : {"images", "masks"}) {
        const std::string p = root + "/" + name + "/" + kind + "/" + id + ".png";
        ON_CHECK(fs::exists(p), "manifest references missing file '%s'", p.c_str());
      }
    }
  }
}

void save_manifest(const std::string& root, const DatasetManifest& m) {
  save_json(root + "/manifest.json", m.to_json());
}

DatasetManifest load_manifest(const std::string& root) {
  return DatasetManifest::from_json(load_json(root + "/manifest.json"));
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

Json DatagenConfig::to_json() const {
  Json j;
  j["seed"] = seed;
  j["tile_px"] = tile_px;
  j["gsd_cm"] = gsd_cm;
  j["off_nadir_tan"] = off_nadir_tan;
  j["azimuth_deg"] = azimuth_deg;
  j["buildings_min"] = buildings_min;
  j["buildings_max"] = buildings_max;
  j["distractors"] = distractors;
  j["building_min_m"] = building_min_m;
  j["building_max_m"] = building_max_m;
  j["gsd_size_ref"] = gsd_size_ref;
  j["strata_weights"] = strata_weights;
  j["ev_strata_weights"] = ev_strata_weights;
  Json js = Json::array();
  for (const SplitSpec& s : splits)
    js.push_back(Json{{"name", s.name},
                      {"count", s.count},
                      {"label_kind", s.label_kind},
                      {"stratified", s.stratified},
                      {"emit_noisy_pair", s.emit_noisy_pair}});
  j["splits"] = js;
  return j;
}

DatagenConfig DatagenConfig::from_json(const Json& j) {
  DatagenConfig c;
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("tile_px")) c.tile_px = j.at("tile_px").get<int>();
  if (j.contains("gsd_cm")) c.gsd_cm = j.at("gsd_cm").get<std::vector<int>>();
  if (j.contains("off_nadir_tan")) c.off_nadir_tan = j.at("off_nadir_tan").get<double>();
  if (j.contains("azimuth_deg")) c.azimuth_deg = j.at("azimuth_deg").get<double>();
  if (j.contains("buildings_min")) c.buildings_min = j.at("buildings_min").get<int>();
  if (j.contains("buildings_max")) c.buildings_max = j.at("buildings_max").get<int>();
  if (j.contains("distractors")) c.distractors = j.at("distractors").get<int>();
  if (j.contains("building_min_m")) c.building_min_m = j.at("building_min_m").get<double>();
  if (j.contains("building_max_m")) c.building_max_m = j.at("building_max_m").get<double>();
  if (j.contains("gsd_size_ref")) c.gsd_size_ref = j.at("gsd_size_ref").get<double>();
  if (j.contains("strata_weights"))
    c.strata_weights = j.at("strata_weights").get<std::array<double, 4>>();
  if (j.contains("ev_strata_weights"))
    c.ev_strata_weights = j.at("ev_strata_weights").get<std::array<double, 4>>();
  if (j.contains("splits")) {
    c.splits.clear();
    for (const Json& s : j.at("splits")) {
      SplitSpec ss;
      ss.name = s.at("name").get<std::string>();
      ss.count = s.at("count").get<int>();
      if (s.contains("label_kind")) ss.label_kind = s.at("label_kind").get<std::string>();
      if (s.contains("stratified")) ss.stratified = s.at("stratified").get<bool>();
      if (s.contains("emit_noisy_pair"))
        ss.emit_noisy_pair = s.at("emit_noisy_pair").get<bool>();
      c.splits.push_back(std::move(ss));
    }
  }
  c.validate();
  return c;
}

void DatagenConfig::validate() const {
  ON_CHECK(tile_px >= 32, "tile_px must be >= 32");
  ON_CHECK(!gsd_cm.empty(), "gsd_cm list must not be empty");
  for (int g : gsd_cm) ON_CHECK(g > 0, "gsd_cm entries must be positive");
  ON_CHECK(off_nadir_tan >= 0, "off_nadir_tan must be >= 0");
  ON_CHECK(!splits.empty(), "no splits configured");
  for (const SplitSpec& s : splits) {
    ON_CHECK(s.count >= 0, "split '%s': negative count", s.name.c_str());
    ON_CHECK(s.label_kind == "clean" || s.label_kind == "noisy",
             "split '%s': label_kind must be clean|noisy", s.name.c_str());
    ON_CHECK(s.name.find('/') == std::string::npos, "split name with '/'");
  }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace {

// Paints pixel centers inside poly_px into mask; returns how many centers
// were inside (whether or not they were already set).
int paint_mask(nn::TensorF& mask, const Polygon& poly_px, Vec2 origin_px) {
  const int size = mask.h();
  const Aabb b = poly_px.bounds();
  int x0 = std::max(0, int(std::floor(b.min_x - origin_px.x - 0.5)));
  int x1 = std::min(size - 1, int(std::ceil(b.max_x - origin_px.x - 0.5)));
  int y0 = std::max(0, int(std::floor(b.min_y - origin_px.y - 0.5)));
  int y1 = std::min(size - 1, int(std::ceil(b.max_y - origin_px.y - 0.5)));
  int count = 0;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const Vec2 c{origin_px.x + x + 0.5, origin_px.y + y + 0.5};
      if (point_in_polygon(c, poly_px)) {
        mask.at(0, 0, y, x) = 1.f;
        ++count;
      }
    }
  return count;
}

double stratum_mid_height(int s) {
  switch (Stratum(s)) {
    case Stratum::low: return 8;
    case Stratum::mid: return 21;
    case Stratum::high: return 65;
    case Stratum::sky: return 130;
  }
  return 8;
}

struct TileJob {
  std::string id;
  std::string split;
  std::string label_kind;
  bool emit_noisy_pair = false;
  int gsd_cm = 0;
  int target_stratum = 0;
};

struct TileResult {
  TileMeta meta;
  std::string error;
};

// Largest-remainder quota so stratified splits hit exact per-class counts.
std::array<int, 4> strata_quota(int total, const std::array<double, 4>& w) {
  std::array<int, 4> q{};
  std::array<double, 4> frac{};
  int assigned = 0;
  for (int i = 0; i < 4; ++i) {
    const double exact = total * w[i];
    q[i] = int(std::floor(exact));
    frac[i] = exact - q[i];
    assigned += q[i];
  }
  while (assigned < total) {
    int best = 0;
    for (int i = 1; i < 4; ++i)
      if (frac[i] > frac[best]) best = i;
    ++q[best];
    frac[best] = -1;
    ++assigned;
  }
  return q;
}

}  // namespace

DatasetManifest build_dataset(const DatagenConfig& cfg, const std::string& out_dir,
                              bool force) {
  cfg.validate();
  const std::string manifest_path = out_dir + "/manifest.json";
  ON_CHECK(force || !fs::exists(manifest_path),
           "'%s' already exists; pass force to overwrite", manifest_path.c_str());

  // Flatten the work list; per-tile state derives only from (seed, id).
  std::vector<TileJob> jobs;
  for (const SplitSpec& split : cfg.splits) {
    std::vector<int> strata(split.count);
    if (split.stratified) {
      const auto q = strata_quota(split.count, cfg.ev_strata_weights);
      int k = 0;
      for (int s = 0; s < 4; ++s)
        for (int i = 0; i < q[s]; ++i) strata[size_t(k++)] = s;
    } else {
      for (int i = 0; i < split.count; ++i) {
        Rng rng = Rng::stream(cfg.seed, split.name + strfmt("/stratum/%06d", i));
        const double u = rng.uniform();
        double acc = 0;
        int s = 3;
        for (int k = 0; k < 4; ++k) {
          acc += cfg.strata_weights[k];
          if (u < acc) {
            s = k;
            break;
          }
        }
        strata[size_t(i)] = s;
      }
    }
    for (int i = 0; i < split.count; ++i) {
      TileJob job;
      job.id = strfmt("%s_%06d", split.name.c_str(), i);
      job.split = split.name;
      job.label_kind = split.label_kind;
      job.emit_noisy_pair = split.emit_noisy_pair;
      job.gsd_cm = cfg.gsd_cm[size_t(i) % cfg.gsd_cm.size()];
      job.target_stratum = strata[size_t(i)];
      jobs.push_back(std::move(job));
    }
    ensure_dir(out_dir + "/" + split.name + "/images");
    ensure_dir(out_dir + "/" + split.name + "/masks");
    if (split.emit_noisy_pair) {
      ensure_dir(out_dir + "/" + split.name + "_noisy/images");
      ensure_dir(out_dir + "/" + split.name + "_noisy/masks");
    }
  }

  ViewGeometry view;
  view.off_nadir_tan = cfg.off_nadir_tan;
  view.azimuth_rad = cfg.azimuth_deg * M_PI / 180.0;
  view.validate();

  std::vector<TileResult> results(jobs.size());

#pragma omp parallel for schedule(dynamic)
  for (size_t j = 0; j < jobs.size(); ++j) {
    const TileJob& job = jobs[j];
    try {
      const double gsd = job.gsd_cm / 100.0;
      const double tile_m = cfg.tile_px * gsd;
      const double margin = 70.0;

      SceneSpec ss;
      ss.extent_w_m = tile_m + 2 * margin;
      ss.extent_h_m = tile_m + 2 * margin;
      ss.count_min = cfg.buildings_min;
      ss.count_max = cfg.buildings_max;
      ss.strata_weights = cfg.strata_weights;
      const double size_scale =
          cfg.gsd_size_ref > 0 ? gsd / cfg.gsd_size_ref : 1.0;
      ss.building_min_m = cfg.building_min_m * size_scale;
      ss.building_max_m = cfg.building_max_m * size_scale;
      ss.distractor_count = cfg.distractors;
      ss.seed = splitmix64(cfg.seed ^ fnv1a64(job.id));
      ss.pin_stratum = job.target_stratum;
      // Straddle footprint and displaced roof around the tile center.
      const Vec2 d = view.displacement_m(stratum_mid_height(job.target_stratum));
      ss.pin_center = {margin + tile_m / 2 - d.x / 2, margin + tile_m / 2 - d.y / 2};
      const Scene scene = generate_scene(ss);

      const Vec2 origin_m{margin, margin};
      const Vec2 origin_px{margin / gsd, margin / gsd};
      const nn::TensorF image =
          render_tile(scene, view, gsd, origin_m, cfg.tile_px);

      nn::TensorF noisy(1, 1, cfg.tile_px, cfg.tile_px);
      nn::TensorF clean(1, 1, cfg.tile_px, cfg.tile_px);
      double max_h = 0;
      for (const BuildingSpec& b : scene.buildings) {
        Polygon fp_px;
        for (const Vec2& p : b.footprint.pts)
          fp_px.pts.push_back({p.x / gsd, p.y / gsd});
        const int n_noisy = paint_mask(noisy, fp_px, origin_px);
        const int n_clean =
            paint_mask(clean, project_roof(b.footprint, b.height_m, view, gsd),
                       origin_px);
        if (n_noisy + n_clean > 0) max_h = std::max(max_h, b.height_m);
      }

      const std::string img_path =
          out_dir + "/" + job.split + "/images/" + job.id + ".png";
      write_png_rgb8(img_path, image);
      const nn::TensorF& primary = job.label_kind == "noisy" ? noisy : clean;
      write_png_mask8(out_dir + "/" + job.split + "/masks/" + job.id + ".png",
                      primary);
      if (job.emit_noisy_pair) {
        const std::string pair_split = job.split + "_noisy";
        write_png_rgb8(out_dir + "/" + pair_split + "/images/" + job.id + ".png",
                       image);
        write_png_mask8(out_dir + "/" + pair_split + "/masks/" + job.id + ".png",
                        noisy);
      }

      TileMeta meta;
      meta.id = job.id;
      meta.split = job.split;
      meta.stratum = stratum_of_height(max_h);
      meta.max_height_m = max_h;
      meta.label_kind = job.label_kind;
      meta.gsd_cm = job.gsd_cm;
      results[j].meta = std::move(meta);
    } catch (const std::exception& e) {
      results[j].error = e.what();
    }
  }

  for (const TileResult& r : results)
    ON_CHECK(r.error.empty(), "tile generation failed: %s", r.error.c_str());

  DatasetManifest m;
  m.seed = cfg.seed;
  m.config_hash = hash_hex(json_hash(cfg.to_json()));
  bool uniform = true;
  for (size_t j = 0; j < jobs.size(); ++j) {
    const TileMeta& meta = results[j].meta;
    m.splits[meta.split].push_back(meta.id);
    m.tiles.push_back(meta);
    if (meta.gsd_cm != results[0].meta.gsd_cm) uniform = false;
    if (jobs[j].emit_noisy_pair) {
      TileMeta pair = meta;
      pair.split = meta.split + "_noisy";
      pair.label_kind = "noisy";
      m.splits[pair.split].push_back(pair.id);
      m.tiles.push_back(std::move(pair));
    }
  }
  m.gsd_cm = (uniform && !jobs.empty()) ? results[0].meta.gsd_cm : 0;

  ensure_dir(out_dir);
  save_manifest(out_dir, m);
  return m;
}

// ---------------------------------------------------------------------------
// Raster tiling
// ---------------------------------------------------------------------------

DatasetManifest tile_raster(const std::string& raster_path,
                            const std::string& polygon_path, double gsd_m,
                            const std::string& out_dir, bool force, int tile_px) {
  ON_CHECK(gsd_m > 0, "tile_raster: gsd must be positive");
  const std::string manifest_path = out_dir + "/manifest.json";
  ON_CHECK(force || !fs::exists(manifest_path),
           "'%s' already exists; pass force to overwrite", manifest_path.c_str());

  const nn::TensorF raster = read_png_rgb(raster_path);
  const Json pj = load_json(polygon_path);
  const std::string frame = pj.value("frame", std::string("pixel"));
  ON_CHECK(frame == "pixel" || frame == "world",
           "polygon file frame must be 'pixel' or 'world', got '%s'", frame.c_str());

  Vec2 origin{0, 0};
  if (frame == "world") {
    ON_CHECK(pj.contains("origin_m"),
             "world-frame polygons need 'origin_m'; coordinate frames do not "
             "match the raster");
    origin = {pj.at("origin_m").at(0).get<double>(),
              pj.at("origin_m").at(1).get<double>()};
    if (pj.contains("gsd_m")) {
      const double file_gsd = pj.at("gsd_m").get<double>();
      ON_CHECK(std::abs(file_gsd - gsd_m) < 1e-9,
               "coordinate frame mismatch: polygon file gsd %.6f != %.6f", file_gsd,
               gsd_m);
    }
  }

  struct Feature {
    Polygon px;
    double height_m = 0;
  };
  std::vector<Feature> features;
  if (pj.contains("features")) {
    for (const Json& f : pj.at("features")) {
      Feature feat;
      for (const Json& p : f.at("polygon")) {
        Vec2 v{p.at(0).get<double>(), p.at(1).get<double>()};
        if (frame == "world") v = {(v.x - origin.x) / gsd_m, (v.y - origin.y) / gsd_m};
        feat.px.pts.push_back(v);
      }
      ON_CHECK(feat.px.pts.size() >= 3, "polygon feature with < 3 vertices");
      feat.height_m = f.value("height_m", 0.0);
      features.push_back(std::move(feat));
    }
  }
  if (features.empty())
    fprintf(stderr, "warning: '%s' has zero features; masks will be empty\n",
            polygon_path.c_str());

  const int rows = raster.h() / tile_px;
  const int cols = raster.w() / tile_px;
  ON_CHECK(rows > 0 && cols > 0, "raster %dx%d smaller than one %d-px tile",
           raster.w(), raster.h(), tile_px);
  if (raster.h() % tile_px || raster.w() % tile_px)
    fprintf(stderr, "warning: raster %dx%d leaves a partial-tile remainder\n",
            raster.w(), raster.h());

  ensure_dir(out_dir + "/tiles/images");
  ensure_dir(out_dir + "/tiles/masks");

  std::vector<Polygon> polys_px;
  for (const Feature& f : features) polys_px.push_back(f.px);

  DatasetManifest m;
  m.gsd_cm = int(std::lround(gsd_m * 100));
  m.seed = 0;
  m.config_hash = hash_hex(fnv1a64(raster_path + "|" + polygon_path));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const std::string id = strfmt("tile_r%03d_c%03d", r, c);
      nn::TensorF img(1, 3, tile_px, tile_px);
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < tile_px; ++y)
          for (int x = 0; x < tile_px; ++x)
            img.at(0, ch, y, x) = raster.at(0, ch, r * tile_px + y, c * tile_px + x);
      const Vec2 tile_origin_px{double(c) * tile_px, double(r) * tile_px};
      const nn::TensorF mask = rasterize_mask_px(polys_px, tile_origin_px, tile_px);

      double max_h = 0;
      for (const Feature& f : features) {
        const Aabb b = f.px.bounds();
        if (b.max_x >= tile_origin_px.x && b.min_x < tile_origin_px.x + tile_px &&
            b.max_y >= tile_origin_px.y && b.min_y < tile_origin_px.y + tile_px)
          max_h = std::max(max_h, f.height_m);
      }

      write_png_rgb8(out_dir + "/tiles/images/" + id + ".png", img);
      write_png_mask8(out_dir + "/tiles/masks/" + id + ".png", mask);

      TileMeta meta;
      meta.id = id;
      meta.split = "tiles";
      meta.stratum = stratum_of_height(max_h);
      meta.max_height_m = max_h;
      meta.label_kind = "clean";
      meta.gsd_cm = m.gsd_cm;
      m.splits["tiles"].push_back(id);
      m.tiles.push_back(std::move(meta));
    }

  save_manifest(out_dir, m);
  return m;
}

SplitData load_split(const std::string& root, const DatasetManifest& m,
                     const std::string& split) {
  auto it = m.splits.find(split);
  ON_CHECK(it != m.splits.end(), "dataset has no split '%s'", split.c_str());
  SplitData data;
  for (const std::string& id : it->second) {
    data.images.push_back(read_png_rgb(root + "/" + split + "/images/" + id + ".png"));
    data.masks.push_back(read_png_mask(root + "/" + split + "/masks/" + id + ".png"));
    data.metas.push_back(m.meta(split, id));
  }
  return data;
}

}  // namespace offnadir::datagen
