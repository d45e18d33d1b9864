#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "faircal/error.hpp"
#include "faircal/harness.hpp"

namespace faircal {

namespace {

using Json = nlohmann::ordered_json;

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// nlohmann prints the shortest round-trip form; reports use a fixed 17
// significant digits instead, so the tree is rendered by hand.
void render(const Json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += inner + Json(it.key()).dump() + ": ";
        render(it.value(), out, indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i > 0) out += ",\n";
        out += inner;
        render(j[i], out, indent + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case Json::value_t::number_float: {
      double v = j.get<double>();
      out += std::isfinite(v) ? number(v) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

Json config_json(const RunConfig& c) {
  Json j;
  Json methods = Json::array();
  for (auto m : c.methods) methods.push_back(std::string(to_string(m)));
  j["methods"] = methods;
  j["calibrator"] = std::string(to_string(c.calibrator));
  j["bins"] = c.bins;
  j["clusters"] = c.clusters;
  j["target_fprs"] = c.target_fprs;
  j["attributes"] = c.attribute_names;
  j["folds"] = c.folds;
  j["seed"] = c.seed;
  j["post_calibrate_scores"] = c.post_calibrate_scores;
  j["normalize"] = c.normalize;
  j["ece_bins"] = c.ece_bins;
  j["curve_points"] = c.curve_points;
  return j;
}

RunConfig config_from(const Json& j) {
  RunConfig c;
  for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
  c.calibrator = calibrator_from_string(j.at("calibrator").get<std::string>());
  c.bins = j.at("bins").get<int>();
  c.clusters = j.at("clusters").get<std::size_t>();
  c.target_fprs = j.at("target_fprs").get<std::vector<double>>();
  c.attribute_names = j.at("attributes").get<std::vector<std::string>>();
  c.folds = j.at("folds").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.post_calibrate_scores = j.at("post_calibrate_scores").get<bool>();
  c.normalize = j.at("normalize").get<bool>();
  c.ece_bins = j.at("ece_bins").get<int>();
  c.curve_points = j.at("curve_points").get<int>();
  return c;
}

Json method_json(const MethodReport& m) {
  Json j;
  j["method"] = m.method;
  j["errors"] = m.errors;
  j["notes"] = m.notes;
  Json families = Json::object();
  for (const auto& [family, rows] : m.families) {
    Json fj = Json::object();
    for (const auto& [row, cell] : rows) {
      Json folds = Json::array();
      for (const auto& v : cell.folds) folds.push_back(optional_json(v));
      fj[row] = {{"mean", optional_json(cell.mean)}, {"std", optional_json(cell.std)}, {"folds", folds}};
    }
    families[family] = fj;
  }
  j["families"] = families;
  Json curve = Json::array();
  for (const auto& p : m.fpr_curve) {
    Json sub = Json::object();
    for (const auto& [g, v] : p.subgroup_fpr) sub[g] = optional_json(v);
    curve.push_back({{"threshold", p.threshold}, {"global_fpr", p.global_fpr}, {"subgroups", sub}});
  }
  j["fpr_curve"] = curve;
  return j;
}

MethodReport method_from(const Json& j) {
  MethodReport m;
  m.method = j.at("method").get<std::string>();
  m.errors = j.at("errors").get<std::vector<std::string>>();
  m.notes = j.at("notes").get<std::vector<std::string>>();
  for (auto fit = j.at("families").begin(); fit != j.at("families").end(); ++fit) {
    auto& rows = m.families[fit.key()];
    for (auto rit = fit.value().begin(); rit != fit.value().end(); ++rit) {
      Cell cell;
      cell.mean = optional_from(rit.value().at("mean"));
      cell.std = optional_from(rit.value().at("std"));
      for (const auto& v : rit.value().at("folds")) cell.folds.push_back(optional_from(v));
      rows[rit.key()] = std::move(cell);
    }
  }
  for (const auto& pj : j.at("fpr_curve")) {
    CurvePoint p;
    p.threshold = pj.at("threshold").get<double>();
    p.global_fpr = pj.at("global_fpr").get<double>();
    for (auto it = pj.at("subgroups").begin(); it != pj.at("subgroups").end(); ++it) {
      p.subgroup_fpr[it.key()] = optional_from(it.value());
    }
    m.fpr_curve.push_back(std::move(p));
  }
  return m;
}

std::string csv_number(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

bool family_in_table(std::string_view family, std::string_view table) {
  if (table == "accuracy") return family == "accuracy";
  if (table == "ks") return family == "ks" || family == "ece" || family == "brier";
  if (table == "fpr-dev") return family.starts_with("fpr@");
  if (table == "fnr-dev") return family.starts_with("fnr@");
  return false;
}

}  // namespace

ReportFormat report_format_from_string(std::string_view name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  throw ConfigError("unknown report format '" + std::string(name) + "'");
}

std::string report_to_json(const MetricsReport& report) {
  Json j;
  j["config"] = config_json(report.config);
  const auto& d = report.dataset;
  j["dataset"] = {{"pairs", d.pairs},   {"dropped_pairs", d.dropped_pairs}, {"folds", d.folds},
                  {"dimension", d.dimension}, {"subgroups", d.subgroups}};
  Json methods = Json::array();
  for (const auto& m : report.methods) methods.push_back(method_json(m));
  j["methods"] = methods;
  std::string out;
  render(j, out, 0);
  out += '\n';
  return out;
}

MetricsReport report_from_json(std::string_view text) {
  try {
    Json j = Json::parse(text);
    MetricsReport r;
    r.config = config_from(j.at("config"));
    const auto& d = j.at("dataset");
    r.dataset.pairs = d.at("pairs").get<std::size_t>();
    r.dataset.dropped_pairs = d.at("dropped_pairs").get<std::size_t>();
    r.dataset.folds = d.at("folds").get<int>();
    r.dataset.dimension = d.at("dimension").get<std::size_t>();
    r.dataset.subgroups = d.at("subgroups").get<std::vector<std::string>>();
    for (const auto& m : j.at("methods")) r.methods.push_back(method_from(m));
    return r;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what(), 0);
  }
}

std::string report_table_csv(const MetricsReport& report, std::string_view table) {
  std::ostringstream out;
  if (table == "fpr-curve") {
    out << "method,threshold,global_fpr,subgroup,fpr\n";
    for (const auto& m : report.methods) {
      for (const auto& p : m.fpr_curve) {
        for (const auto& [g, v] : p.subgroup_fpr) {
          out << m.method << ',' << number(p.threshold) << ',' << number(p.global_fpr) << ',' << g << ','
              << csv_number(v) << '\n';
        }
      }
    }
    return out.str();
  }
  if (table != "accuracy" && table != "ks" && table != "fpr-dev" && table != "fnr-dev") {
    throw ConfigError("unknown table '" + std::string(table) + "'");
  }
  out << "metric,method,subgroup,mean,std\n";
  for (const auto& m : report.methods) {
    for (const auto& [family, rows] : m.families) {
      if (!family_in_table(family, table)) continue;
      for (const auto& [row, cell] : rows) {
        std::string metric = family;
        std::string subgroup = row;
        if (family == "accuracy") {
          metric = row;
          subgroup = "global";
        }
        out << metric << ',' << m.method << ',' << subgroup << ',' << csv_number(cell.mean) << ','
            << csv_number(cell.std) << '\n';
      }
    }
  }
  return out.str();
}

std::string report_to_csv(const MetricsReport& report) {
  std::string out;
  for (std::string_view table : {"accuracy", "ks", "fpr-dev", "fnr-dev", "fpr-curve"}) {
    if (!out.empty()) out += '\n';
    out += report_table_csv(report, table);
  }
  return out;
}

void emit_report(const MetricsReport& report, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report " + path.string());
  out << (format == ReportFormat::kJson ? report_to_json(report) : report_to_csv(report));
  if (!out) throw IoError("failed writing report " + path.string());
}

MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return report_from_json(buf.str());
}

}  // namespace faircal
