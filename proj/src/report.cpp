#include "adlift/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "adlift/error.hpp"
#include "json.hpp"

namespace adlift {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  return buf;
}

namespace {

std::string csv_cell(const ReportValue& v) {
  struct Visitor {
    std::string operator()(Blank) const { return ""; }
    std::string operator()(std::int64_t x) const { return std::to_string(x); }
    std::string operator()(double x) const { return format_number(x); }
    std::string operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, v);
}

nlohmann::ordered_json json_cell(const ReportValue& v) {
  struct Visitor {
    nlohmann::ordered_json operator()(Blank) const { return nullptr; }
    nlohmann::ordered_json operator()(std::int64_t x) const { return x; }
    nlohmann::ordered_json operator()(double x) const {
      if (!std::isfinite(x)) return nullptr;
      return nlohmann::ordered_json::parse(format_number(x));
    }
    nlohmann::ordered_json operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, v);
}

}  // namespace

void emit_report(std::ostream& out, const ReportTable& table, ReportFormat format) {
  if (format == ReportFormat::kCsv) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) out << (c ? "," : "") << table.columns[c];
    out << '\n';
    for (const auto& row : table.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << csv_cell(row[c]);
      out << '\n';
    }
    return;
  }
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < row.size(); ++c) obj[table.columns[c]] = json_cell(row[c]);
    rows.push_back(std::move(obj));
  }
  out << rows.dump(2) << '\n';
}

void emit_report(const std::string& path, const ReportTable& table, ReportFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
  emit_report(out, table, format);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for '" + path + "'");
}

ReportFormat report_format_for(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0 ? ReportFormat::kJson : ReportFormat::kCsv;
}

ReportTable frequency_report(const FrequencyComparison& comparison) {
  ReportTable t{{"n", "observed", "expected", "residual"}, {}};
  for (const auto& r : comparison.rows) {
    t.rows.push_back({static_cast<std::int64_t>(r.n), r.observed, r.expected, r.residual});
  }
  return t;
}

ReportTable forecast_report(std::int64_t start_hour, std::span<const double> actual, std::span<const double> forecast) {
  ReportTable t{{"hour", "actual", "forecast"}, {}};
  for (std::size_t h = 0; h < forecast.size(); ++h) {
    ReportValue a = h < actual.size() ? ReportValue(actual[h]) : ReportValue(Blank{});
    t.rows.push_back({start_hour + static_cast<std::int64_t>(h), std::move(a), forecast[h]});
  }
  return t;
}

}  // namespace adlift
