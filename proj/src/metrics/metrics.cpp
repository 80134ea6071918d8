#include "offnadir/metrics.hpp"

#include <cstdio>
#include <fstream>

namespace offnadir::metrics {

nn::TensorF binarize(const nn::TensorF& probs, float threshold) {
  nn::TensorF out(probs.n(), probs.c(), probs.h(), probs.w());
  for (size_t i = 0; i < probs.numel(); ++i) {
    const float p = probs.v[i];
    ON_CHECK(p >= 0.f && p <= 1.f, "binarize: probability %g outside [0,1]", p);
    out.v[i] = p >= threshold ? 1.f : 0.f;
  }
  return out;
}

ConfusionCounts confusion(const nn::TensorF& pred_bin, const nn::TensorF& gt) {
  ON_CHECK(pred_bin.same_shape(gt), "confusion: shape mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < gt.numel(); ++i) {
    const float p = pred_bin.v[i], y = gt.v[i];
    ON_CHECK((p == 0.f || p == 1.f) && (y == 0.f || y == 1.f),
             "confusion: inputs must be binary");
    if (p == 1.f && y == 1.f)
      ++c.tp;
    else if (p == 1.f)
      ++c.fp;
    else if (y == 1.f)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

Scores score(const ConfusionCounts& c) {
  Scores s;
  const double tp = double(c.tp);
  if (c.tp + c.fp > 0)
    s.precision = tp / double(c.tp + c.fp);
  else
    s.degenerate = true;
  if (c.tp + c.fn > 0)
    s.recall = tp / double(c.tp + c.fn);
  else
    s.degenerate = true;
  if (c.tp + c.fp + c.fn > 0)
    s.iou = tp / double(c.tp + c.fp + c.fn);
  else
    s.degenerate = true;
  if (s.precision + s.recall > 0)
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  else
    s.degenerate = true;
  return s;
}

Scores pooled_scores(const std::vector<ConfusionCounts>& tiles) {
  ConfusionCounts sum;
  for (const auto& t : tiles) sum += t;
  return score(sum);
}

Scores macro_scores(const std::vector<ConfusionCounts>& tiles) {
  Scores mean;
  int n = 0;
  for (const auto& t : tiles) {
    Scores s = score(t);
    if (s.degenerate) continue;
    mean.precision += s.precision;
    mean.recall += s.recall;
    mean.iou += s.iou;
    mean.f1 += s.f1;
    ++n;
  }
  if (n == 0) {
    mean.degenerate = true;
    return mean;
  }
  mean.precision /= n;
  mean.recall /= n;
  mean.iou /= n;
  mean.f1 /= n;
  return mean;
}

void write_confusion_csv(const std::string& path,
                         const std::vector<TileConfusionRow>& rows) {
  std::ofstream out(path);
  ON_CHECK(out.good(), "cannot write '%s'", path.c_str());
  out << "tile_id,tp,fp,fn,tn,stratum,gsd_cm\n";
  for (const auto& r : rows) {
    out << r.tile_id << ',' << r.counts.tp << ',' << r.counts.fp << ','
        << r.counts.fn << ',' << r.counts.tn << ',' << r.stratum << ','
        << r.gsd_cm << '\n';
  }
  ON_CHECK(out.good(), "write failed for '%s'", path.c_str());
}

}  // namespace offnadir::metrics
