#include "icll/report.hpp"

#include <cstdio>
#include <sstream>

namespace icll {

namespace {

std::string meta_str(const json& meta, const char* key) {
  if (!meta.contains(key)) return "";
  const json& v = meta.at(key);
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void append_rows(std::ostringstream& os, const json& report,
                 const std::vector<std::string>& meta_cols) {
  const json meta = report.value("meta", json::object());
  for (const auto& [proto, metrics] : report.at("protocols").items()) {
    for (const auto& [name, stat] : metrics.items()) {
      for (const std::string& col : meta_cols) os << meta_str(meta, col.c_str()) << ',';
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%ld",
                    stat.at("mean").get<double>(), stat.at("stderr").get<double>(),
                    stat.at("n").get<long>());
      os << proto << ',' << name << ',' << buf << '\n';
    }
  }
}

}  // namespace

std::string make_report(const std::vector<json>& eval_reports,
                        const std::string& figure) {
  std::vector<std::string> meta_cols;
  if (figure == "fig2") {
    meta_cols = {"kind", "variant"};
  } else if (figure == "fig5") {
    meta_cols = {"kind", "variant", "axis", "axis_value"};
  } else if (figure == "fig6") {
    meta_cols = {"kind", "variant", "train_query_mode"};
  } else if (figure == "raw") {
    meta_cols = {"kind", "variant", "seed", "train_query_mode", "axis", "axis_value"};
  } else {
    fail("report: unknown figure " + figure + " (use fig2, fig5, fig6 or raw)");
  }

  std::ostringstream os;
  for (const std::string& col : meta_cols) os << col << ',';
  os << "protocol,metric,mean,stderr,n\n";
  for (const json& r : eval_reports) append_rows(os, r, meta_cols);
  return os.str();
}

}  // namespace icll
