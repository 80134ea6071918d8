#pragma once
// Report tables in the layout of the paper's results tables, with csv /
// markdown / json emitters. Emission is bit-stable for identical content.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "offnadir/jsonio.hpp"
#include "offnadir/metrics.hpp"

namespace offnadir::harness {

struct EvalRow {
  std::string setting;  // "T-T", "S-S", "S-Ev", ...
  std::string method;   // baseline | sda | kd | dml | ...
  std::string network;
  std::string stratum;          // stratified reports
  int gsd_cm = 0;               // 0 = absent
  int tiles = -1;               // -1 = absent
  double params_m = NAN;
  double loss = NAN;
  double precision = NAN, recall = NAN, iou = NAN, f1 = NAN;
  double ms_per_iter = NAN;
  int best_epoch = -1;          // -1 = absent
  double par_red_pct = NAN;     // NaN renders as "-" inside kd/dml blocks
  bool par_red_applicable = false;
  std::string run_hash;
  std::string note;
};

struct EvalReport {
  std::string title;
  std::vector<EvalRow> rows;
  Json meta = Json::object();

  Json to_json() const;
  static EvalReport from_json(const Json& j);
};

// Table-5-style gains: "0.827 (+4.2%)" per metric per setting.
struct GainsRow {
  std::string network;
  double ss_iou = NAN, ss_iou_gain_pct = NAN;
  double ss_f1 = NAN, ss_f1_gain_pct = NAN;
  double ev_iou = NAN, ev_iou_gain_pct = NAN;
  double ev_f1 = NAN, ev_f1_gain_pct = NAN;
};

struct GainsReport {
  std::string title;
  std::vector<GainsRow> rows;

  Json to_json() const;
  static GainsReport from_json(const Json& j);
};

// format: "csv" | "markdown" | "json".
std::string render_report(const EvalReport& report, const std::string& format);
std::string render_gains(const GainsReport& report, const std::string& format);

void emit_report(const EvalReport& report, const std::string& format,
                 const std::string& path);
void emit_gains(const GainsReport& report, const std::string& format,
                const std::string& path);

// "0.827 (+4.2%)" formatting used by the gains table.
std::string format_gain(double value, double gain_pct);

}  // namespace offnadir::harness
