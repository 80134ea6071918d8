#pragma once
// Label-misalignment statistics: IoU between noisy (footprint) and clean
// (roof) masks, grouped by resolution and height stratum.

#include "offnadir/datagen/dataset.hpp"

namespace offnadir::datagen {

struct MisalignRow {
  int gsd_cm = 0;
  Stratum stratum = Stratum::low;
  double mean_iou = 0;
  int pairs = 0;
};

// Pairs tiles by id across label kinds (any split). Tiles without a
// counterpart are skipped with a warning; rows come out sorted by
// (gsd, stratum).
std::vector<MisalignRow> misalignment_stats(const std::string& root,
                                            const DatasetManifest& m);

std::string misalignment_table(const std::vector<MisalignRow>& rows);

}  // namespace offnadir::datagen
