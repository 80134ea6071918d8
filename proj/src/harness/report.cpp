#include "offnadir/harness/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace offnadir::harness {

namespace {

Json row_to_json(const EvalRow& r) {
  auto num = [](double v) { return std::isnan(v) ? Json() : Json(v); };
  return Json{{"setting", r.setting},
              {"method", r.method},
              {"network", r.network},
              {"stratum", r.stratum},
              {"gsd_cm", r.gsd_cm},
              {"tiles", r.tiles},
              {"params_m", num(r.params_m)},
              {"loss", num(r.loss)},
              {"precision", num(r.precision)},
              {"recall", num(r.recall)},
              {"iou", num(r.iou)},
              {"f1", num(r.f1)},
              {"ms_per_iter", num(r.ms_per_iter)},
              {"best_epoch", r.best_epoch},
              {"par_red_pct", num(r.par_red_pct)},
              {"par_red_applicable", r.par_red_applicable},
              {"run_hash", r.run_hash},
              {"note", r.note}};
}

EvalRow row_from_json(const Json& j) {
  auto num = [&](const char* k) {
    return j.at(k).is_null() ? NAN : j.at(k).get<double>();
  };
  EvalRow r;
  r.setting = j.at("setting").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.network = j.at("network").get<std::string>();
  r.stratum = j.at("stratum").get<std::string>();
  r.gsd_cm = j.at("gsd_cm").get<int>();
  r.tiles = j.at("tiles").get<int>();
  r.params_m = num("params_m");
  r.loss = num("loss");
  r.precision = num("precision");
  r.recall = num("recall");
  r.iou = num("iou");
  r.f1 = num("f1");
  r.ms_per_iter = num("ms_per_iter");
  r.best_epoch = j.at("best_epoch").get<int>();
  r.par_red_pct = num("par_red_pct");
  r.par_red_applicable = j.at("par_red_applicable").get<bool>();
  r.run_hash = j.at("run_hash").get<std::string>();
  r.note = j.at("note").get<std::string>();
  return r;
}

}  // namespace

Json EvalReport::to_json() const {
  Json rows_j = Json::array();
  for (const EvalRow& r : rows) rows_j.push_back(row_to_json(r));
  return Json{{"title", title}, {"meta", meta}, {"rows", rows_j}};
}

EvalReport EvalReport::from_json(const Json& j) {
  EvalReport rep;
  rep.title = j.at("title").get<std::string>();
  rep.meta = j.at("meta");
  for (const Json& r : j.at("rows")) rep.rows.push_back(row_from_json(r));
  return rep;
}

Json GainsReport::to_json() const {
  Json rows_j = Json::array();
  auto num = [](double v) { return std::isnan(v) ? Json() : Json(v); };
  for (const GainsRow& r : rows)
    rows_j.push_back(Json{{"network", r.network},
                          {"ss_iou", num(r.ss_iou)},
                          {"ss_iou_gain_pct", num(r.ss_iou_gain_pct)},
                          {"ss_f1", num(r.ss_f1)},
                          {"ss_f1_gain_pct", num(r.ss_f1_gain_pct)},
                          {"ev_iou", num(r.ev_iou)},
                          {"ev_iou_gain_pct", num(r.ev_iou_gain_pct)},
                          {"ev_f1", num(r.ev_f1)},
                          {"ev_f1_gain_pct", num(r.ev_f1_gain_pct)}});
  return Json{{"title", title}, {"rows", rows_j}};
}

GainsReport GainsReport::from_json(const Json& j) {
  GainsReport rep;
  rep.title = j.at("title").get<std::string>();
  for (const Json& r : j.at("rows")) {
    auto num = [&](const char* k) {
      return r.at(k).is_null() ? NAN : r.at(k).get<double>();
    };
    GainsRow g;
    g.network = r.at("network").get<std::string>();
    g.ss_iou = num("ss_iou");
    g.ss_iou_gain_pct = num("ss_iou_gain_pct");
    g.ss_f1 = num("ss_f1");
    g.ss_f1_gain_pct = num("ss_f1_gain_pct");
    g.ev_iou = num("ev_iou");
    g.ev_iou_gain_pct = num("ev_iou_gain_pct");
    g.ev_f1 = num("ev_f1");
    g.ev_f1_gain_pct = num("ev_f1_gain_pct");
    rep.rows.push_back(g);
  }
  return rep;
}

std::string format_gain(double value, double gain_pct) {
  if (std::isnan(value)) return "-";
  if (std::isnan(gain_pct)) return strfmt("%.3f", value);
  return strfmt("%.3f (%+.1f%%)", value, gain_pct);
}

// ---------------------------------------------------------------------------
// Column machinery
// ---------------------------------------------------------------------------

namespace {

struct Column {
  std::string id, header;
  // higher_better: +1 max is best, -1 min is best, 0 unranked
  int rank_dir = 0;
  std::function<bool(const EvalRow&)> present;
  std::function<std::string(const EvalRow&)> text;
  std::function<double(const EvalRow&)> value;  // NaN when absent
};

std::vector<Column> candidate_columns() {
  auto always_nan = [](const EvalRow&) { return NAN; };
  std::vector<Column> cols;
  cols.push_back({"setting", "Setting", 0,
                  [](const EvalRow& r) { return !r.setting.empty(); },
                  [](const EvalRow& r) { return r.setting; }, always_nan});
  cols.push_back({"method", "Method", 0,
                  [](const EvalRow& r) { return !r.method.empty(); },
                  [](const EvalRow& r) { return r.method; }, always_nan});
  cols.push_back({"network", "Network", 0,
                  [](const EvalRow& r) { return !r.network.empty(); },
                  [](const EvalRow& r) { return r.network; }, always_nan});
  cols.push_back({"stratum", "Stratum", 0,
                  [](const EvalRow& r) { return !r.stratum.empty(); },
                  [](const EvalRow& r) { return r.stratum; }, always_nan});
  cols.push_back({"gsd_cm", "GSD(cm)", 0,
                  [](const EvalRow& r) { return r.gsd_cm > 0; },
                  [](const EvalRow& r) {
                    return r.gsd_cm > 0 ? strfmt("%d", r.gsd_cm) : std::string("-");
                  },
                  always_nan});
  cols.push_back({"tiles", "Tiles", 0, [](const EvalRow& r) { return r.tiles >= 0; },
                  [](const EvalRow& r) {
                    return r.tiles >= 0 ? strfmt("%d", r.tiles) : std::string("-");
                  },
                  always_nan});
  auto num_col = [](const std::string& id, const std::string& header, int dir,
                    double EvalRow::*field, const char* fmt) {
    return Column{id, header, dir,
                  [field](const EvalRow& r) { return !std::isnan(r.*field); },
                  [field, fmt](const EvalRow& r) {
                    return std::isnan(r.*field) ? std::string("-")
                                                : strfmt(fmt, r.*field);
                  },
                  [field](const EvalRow& r) { return r.*field; }};
  };
  cols.push_back(num_col("params_m", "Par.(M)", -1, &EvalRow::params_m, "%.3f"));
  cols.push_back(num_col("loss", "Loss", -1, &EvalRow::loss, "%.3f"));
  cols.push_back(num_col("precision", "P", 1, &EvalRow::precision, "%.3f"));
  cols.push_back(num_col("recall", "R", 1, &EvalRow::recall, "%.3f"));
  cols.push_back(num_col("iou", "IoU", 1, &EvalRow::iou, "%.3f"));
  cols.push_back(num_col("f1", "F1", 1, &EvalRow::f1, "%.3f"));
  cols.push_back(num_col("ms_per_iter", "ms/it", -1, &EvalRow::ms_per_iter, "%.0f"));
  cols.push_back({"best_epoch", "Ep", -1,
                  [](const EvalRow& r) { return r.best_epoch >= 0; },
                  [](const EvalRow& r) {
                    return r.best_epoch >= 0 ? strfmt("%d", r.best_epoch)
                                             : std::string("-");
                  },
                  [](const EvalRow& r) {
                    return r.best_epoch >= 0 ? double(r.best_epoch) : NAN;
                  }});
  cols.push_back({"par_red_pct", "Par. Red.(%)", 0,
                  [](const EvalRow& r) { return r.par_red_applicable; },
                  [](const EvalRow& r) {
                    return (r.par_red_applicable && !std::isnan(r.par_red_pct))
                               ? strfmt("%.0f", r.par_red_pct)
                               : std::string("-");
                  },
                  always_nan});
  return cols;
}

std::vector<Column> active_columns(const EvalReport& rep) {
  std::vector<Column> out;
  for (const Column& c : candidate_columns()) {
    bool any = false;
    for (const EvalRow& r : rep.rows)
      if (c.present(r)) {
        any = true;
        break;
      }
    if (any) out.push_back(c);
  }
  return out;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';  // doubled per RFC 4180
    out += ch;
  }
  out += '"';
  return out;
}

// Values achieving the best (per rank_dir) within [begin, end).
std::set<size_t> best_rows(const EvalReport& rep, const Column& col, size_t begin,
                           size_t end) {
  double best = NAN;
  for (size_t i = begin; i < end; ++i) {
    const double v = col.value(rep.rows[i]);
    if (std::isnan(v)) continue;
    if (std::isnan(best) || (col.rank_dir > 0 ? v > best : v < best)) best = v;
  }
  std::set<size_t> out;
  if (std::isnan(best)) return out;
  for (size_t i = begin; i < end; ++i)
    if (col.value(rep.rows[i]) == best) out.insert(i);
  return out;
}

// Top-3 DISTINCT values per ranked column, like the paper's postscripts.
std::map<size_t, int> top3_ranks(const EvalReport& rep, const Column& col) {
  std::vector<double> vals;
  for (const EvalRow& r : rep.rows) {
    const double v = col.value(r);
    if (!std::isnan(v)) vals.push_back(v);
  }
  std::sort(vals.begin(), vals.end());
  if (col.rank_dir > 0) std::reverse(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  std::map<size_t, int> out;
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    const double v = col.value(rep.rows[i]);
    if (std::isnan(v)) continue;
    for (int k = 0; k < 3 && k < int(vals.size()); ++k)
      if (v == vals[size_t(k)]) out[i] = k + 1;
  }
  return out;
}

}  // namespace

std::string render_report(const EvalReport& rep, const std::string& format) {
  if (format == "json") return rep.to_json().dump(2) + "\n";

  const std::vector<Column> cols = active_columns(rep);
  if (format == "csv") {
    std::string out;
    for (size_t c = 0; c < cols.size(); ++c)
      out += (c ? "," : "") + csv_quote(cols[c].id);
    out += ",run_hash\n";
    for (const EvalRow& r : rep.rows) {
      for (size_t c = 0; c < cols.size(); ++c)
        out += (c ? "," : "") + csv_quote(cols[c].text(r));
      out += "," + csv_quote(r.run_hash) + "\n";
    }
    return out;
  }

  ON_CHECK(format == "markdown", "unknown report format '%s'", format.c_str());
  const bool mark_top3 = rep.meta.value("mark_top3", false);

  // Group consecutive rows by (setting, method) for per-block bolding.
  std::vector<std::pair<size_t, size_t>> groups;
  size_t begin = 0;
  for (size_t i = 1; i <= rep.rows.size(); ++i) {
    if (i == rep.rows.size() || rep.rows[i].setting != rep.rows[begin].setting ||
        rep.rows[i].method != rep.rows[begin].method) {
      groups.emplace_back(begin, i);
      begin = i;
    }
  }

  std::map<std::string, std::map<size_t, int>> ranks;
  if (mark_top3)
    for (const Column& c : cols)
      if (c.rank_dir != 0) ranks[c.id] = top3_ranks(rep, c);

  std::map<std::string, std::set<size_t>> bold;
  for (const Column& c : cols) {
    if (c.rank_dir == 0) continue;
    for (const auto& [gb, ge] : groups) {
      if (ge - gb < 2) continue;
      auto best = best_rows(rep, c, gb, ge);
      bold[c.id].insert(best.begin(), best.end());
    }
  }

  std::string out = "# " + rep.title + "\n\n";
  out += "|";
  for (const Column& c : cols) out += " " + c.header + " |";
  out += "\n|";
  for (size_t c = 0; c < cols.size(); ++c) out += "---|";
  out += "\n";
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    out += "|";
    for (const Column& c : cols) {
      std::string cell = c.text(rep.rows[i]);
      if (mark_top3 && ranks.count(c.id) && ranks[c.id].count(i))
        cell += strfmt(" (%d)", ranks[c.id][i]);
      if (bold.count(c.id) && bold[c.id].count(i) && cell != "-")
        cell = "**" + cell + "**";
      out += " " + cell + " |";
    }
    out += "\n";
  }
  return out;
}

std::string render_gains(const GainsReport& rep, const std::string& format) {
  if (format == "json") return rep.to_json().dump(2) + "\n";

  struct GCol {
    const char* header;
    double GainsRow::*value;
    double GainsRow::*gain;
  };
  const std::array<GCol, 4> gcols{{{"S-S IoU", &GainsRow::ss_iou, &GainsRow::ss_iou_gain_pct},
                                   {"S-S F1", &GainsRow::ss_f1, &GainsRow::ss_f1_gain_pct},
                                   {"S-Ev IoU", &GainsRow::ev_iou, &GainsRow::ev_iou_gain_pct},
                                   {"S-Ev F1", &GainsRow::ev_f1, &GainsRow::ev_f1_gain_pct}}};

  if (format == "csv") {
    std::string out = "network";
    for (const GCol& c : gcols) out += std::string(",") + csv_quote(c.header);
    out += "\n";
    for (const GainsRow& r : rep.rows) {
      out += csv_quote(r.network);
      for (const GCol& c : gcols) out += "," + csv_quote(format_gain(r.*c.value, r.*c.gain));
      out += "\n";
    }
    return out;
  }

  ON_CHECK(format == "markdown", "unknown report format '%s'", format.c_str());
  // Bold the best absolute value per column, like the paper's Table 5.
  std::array<double, 4> best{NAN, NAN, NAN, NAN};
  for (const GainsRow& r : rep.rows)
    for (size_t c = 0; c < 4; ++c) {
      const double v = r.*gcols[c].value;
      if (!std::isnan(v) && (std::isnan(best[c]) || v > best[c])) best[c] = v;
    }
  std::string out = "# " + rep.title + "\n\n| Student |";
  for (const GCol& c : gcols) out += strfmt(" %s |", c.header);
  out += "\n|---|---|---|---|---|\n";
  for (const GainsRow& r : rep.rows) {
    out += "| " + r.network + " |";
    for (size_t c = 0; c < 4; ++c) {
      std::string cell = format_gain(r.*gcols[c].value, r.*gcols[c].gain);
      if (!std::isnan(best[c]) && r.*gcols[c].value == best[c]) cell = "**" + cell + "**";
      out += " " + cell + " |";
    }
    out += "\n";
  }
  return out;
}

void emit_report(const EvalReport& report, const std::string& format,
                 const std::string& path) {
  std::ofstream out(path);
  ON_CHECK(out.good(), "cannot write '%s'", path.c_str());
  out << render_report(report, format);
  ON_CHECK(out.good(), "write failed for '%s'", path.c_str());
}

void emit_gains(const GainsReport& report, const std::string& format,
                const std::string& path) {
  std::ofstream out(path);
  ON_CHECK(out.good(), "cannot write '%s'", path.c_str());
  out << render_gains(report, format);
  ON_CHECK(out.good(), "write failed for '%s'", path.c_str());
}

}  // namespace offnadir::harness
