#pragma once
// Evaluation metrics: thresholding, confusion counts, P/R/IoU/F1, and the
// pooled (micro) and per-tile (macro) aggregations.

#include <string>
#include <vector>

#include "offnadir/tensor.hpp"

namespace offnadir::metrics {

struct ConfusionCounts {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

struct Scores {
  double precision = 0, recall = 0, iou = 0, f1 = 0;
  bool degenerate = false;  // some ratio had a zero denominator
};

// pixel = 1 iff p >= threshold.
nn::TensorF binarize(const nn::TensorF& probs, float threshold = 0.5f);

ConfusionCounts confusion(const nn::TensorF& pred_bin, const nn::TensorF& gt);

Scores score(const ConfusionCounts& c);

// Micro aggregation: scores of the summed counts.
Scores pooled_scores(const std::vector<ConfusionCounts>& tiles);

// Macro aggregation: mean of per-tile scores, degenerate tiles excluded.
Scores macro_scores(const std::vector<ConfusionCounts>& tiles);

struct TileConfusionRow {
  std::string tile_id;
  ConfusionCounts counts;
  std::string stratum;
  int gsd_cm = 0;
};

void write_confusion_csv(const std::string& path,
                         const std::vector<TileConfusionRow>& rows);

}  // namespace offnadir::metrics
