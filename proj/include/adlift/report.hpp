#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "adlift/repeatbuy.hpp"

namespace adlift {

// Empty cell (e.g. actual values past the end of a series).
struct Blank {
  bool operator==(const Blank&) const = default;
};

using ReportValue = std::variant<Blank, std::int64_t, double, std::string>;

// Plot-ready table with a fixed column order.
struct ReportTable {
  std::vector<std::string> columns;
  std::vector<std::vector<ReportValue>> rows;
};

enum class ReportFormat { kCsv, kJson };

// %.12g; non-finite values print as nan / inf / -inf.
std::string format_number(double value);

void emit_report(std::ostream& out, const ReportTable& table, ReportFormat format);
// Errors: kIoError.
void emit_report(const std::string& path, const ReportTable& table, ReportFormat format);
ReportFormat report_format_for(const std::string& path);

// Columns n, observed, expected, residual.
ReportTable frequency_report(const FrequencyComparison& comparison);
// Columns hour, actual, forecast. `actual` may be shorter than `forecast`.
ReportTable forecast_report(std::int64_t start_hour, std::span<const double> actual, std::span<const double> forecast);

}  // namespace adlift
