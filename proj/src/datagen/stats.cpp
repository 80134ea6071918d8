#include "offnadir/datagen/stats.hpp"

#include <algorithm>
#include <map>

#include "offnadir/datagen/png_io.hpp"

namespace offnadir::datagen {

std::vector<MisalignRow> misalignment_stats(const std::string& root,
                                            const DatasetManifest& m) {
  // id -> (noisy meta, clean meta)
  std::map<std::string, std::pair<const TileMeta*, const TileMeta*>> by_id;
  for (const TileMeta& t : m.tiles) {
    auto& slot = by_id[t.id];
    (t.label_kind == "noisy" ? slot.first : slot.second) = &t;
  }

  std::map<std::pair<int, int>, std::pair<double, int>> cells;  // (gsd,stratum)
  for (const auto& [id, pair] : by_id) {
    if (!pair.first || !pair.second) {
      fprintf(stderr, "warning: tile '%s' lacks a %s counterpart; skipped\n",
              id.c_str(), pair.first ? "clean" : "noisy");
      continue;
    }
    const TileMeta& noisy = *pair.first;
    const TileMeta& clean = *pair.second;
    const nn::TensorF a =
        read_png_mask(root + "/" + noisy.split + "/masks/" + id + ".png");
    const nn::TensorF b =
        read_png_mask(root + "/" + clean.split + "/masks/" + id + ".png");
    ON_CHECK(a.same_shape(b), "mask size mismatch for pair '%s'", id.c_str());
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.numel(); ++i) {
      const bool pa = a.v[i] == 1.f, pb = b.v[i] == 1.f;
      inter += pa && pb;
      uni += pa || pb;
    }
    // Empty-empty pairs are perfectly aligned by convention.
    const double iou = uni == 0 ? 1.0 : double(inter) / double(uni);
    auto& cell = cells[{clean.gsd_cm, int(clean.stratum)}];
    cell.first += iou;
    cell.second += 1;
  }

  std::vector<MisalignRow> rows;
  for (const auto& [key, acc] : cells) {
    MisalignRow r;
    r.gsd_cm = key.first;
    r.stratum = Stratum(key.second);
    r.mean_iou = acc.first / acc.second;
    r.pairs = acc.second;
    rows.push_back(r);
  }
  std::sort(rows.begin(), rows.end(), [](const MisalignRow& a, const MisalignRow& b) {
    return a.gsd_cm != b.gsd_cm ? a.gsd_cm < b.gsd_cm
                                : int(a.stratum) < int(b.stratum);
  });
  return rows;
}

std::string misalignment_table(const std::vector<MisalignRow>& rows) {
  std::string out = "gsd_cm,stratum,mean_iou,pairs\n";
  for (const MisalignRow& r : rows)
    out += strfmt("%d,%s,%.4f,%d\n", r.gsd_cm, stratum_to_string(r.stratum).c_str(),
                  r.mean_iou, r.pairs);
  return out;
}

}  // namespace offnadir::datagen
