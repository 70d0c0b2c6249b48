#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace adlift {

using LevelId = std::uint32_t;

// Level id used for a label the dictionary does not know (frozen parsing).
inline constexpr LevelId kUnseenLevel = 0xffffffffu;

// Reserved label for an empty factor value.
inline constexpr std::string_view kMissingLevel = "__missing__";

struct Schema {
  std::vector<std::string> factor_columns;
  std::string label_column = "label";
  std::optional<std::string> timestamp_column;
  std::optional<std::string> user_column;
  std::optional<std::string> browser_column;

  // Throws kBadSpec on empty/duplicate factors or overlap with other columns.
  void validate() const;

  static Schema from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

Schema load_schema(const std::string& path);

// Bijection between level labels and dense ids, per factor. Ids are handed out
// in first-seen order.
class FactorDictionary {
 public:
  FactorDictionary() = default;
  explicit FactorDictionary(std::vector<std::string> factor_names);

  std::size_t factor_count() const { return names_.size(); }
  const std::string& factor_name(std::size_t factor) const { return names_[factor]; }
  const std::vector<std::string>& factor_names() const { return names_; }
  std::size_t level_count(std::size_t factor) const { return labels_[factor].size(); }
  const std::string& level_label(std::size_t factor, LevelId level) const {
    return labels_[factor][level];
  }
  const std::vector<std::string>& level_labels(std::size_t factor) const {
    return labels_[factor];
  }

  std::optional<LevelId> find(std::size_t factor, std::string_view label) const;
  // Returns the existing id or appends a new level.
  LevelId intern(std::size_t factor, std::string_view label);

  // FNV-1a over factor names and ordered level labels.
  std::uint64_t fingerprint() const;

  bool operator==(const FactorDictionary& other) const {
    return names_ == other.names_ && labels_ == other.labels_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> labels_;
  std::vector<std::unordered_map<std::string, LevelId>> index_;
};

struct RequestRecord {
  std::vector<LevelId> factors;
  std::uint8_t label = 0;

  bool operator==(const RequestRecord&) const = default;
};

struct ParsedRequests {
  FactorDictionary dictionary;
  std::vector<RequestRecord> records;
};

// Reads a delimited request log with a header row. Every schema column must
// be present; other columns are ignored. Empty factor values map to
// "__missing__". Errors: kMissingColumn, kBadLabel, kRaggedRow.
ParsedRequests parse_requests(std::istream& in, const Schema& schema, char delimiter = ',');

// Same, but against a fixed dictionary: labels it does not contain become
// kUnseenLevel instead of new levels. When `require_label` is false the label
// column may be absent (scoring input) and labels are read as 0.
std::vector<RequestRecord> parse_requests_frozen(std::istream& in, const Schema& schema,
                                                 const FactorDictionary& dictionary,
                                                 bool require_label, char delimiter = ',');

// Writes header `factor_columns...,label` then one line per record.
void write_requests(std::ostream& out, const Schema& schema, const FactorDictionary& dictionary,
                    std::span<const RequestRecord> records, char delimiter = ',');

// Contingency counts n[i][k][s] for every factor.
class FactorTable {
 public:
  FactorTable() = default;
  explicit FactorTable(std::span<const std::size_t> level_counts);

  std::size_t factor_count() const { return counts_.size(); }
  std::size_t level_count(std::size_t factor) const { return counts_[factor].size() / 2; }
  std::uint64_t count(std::size_t factor, std::size_t level, int label) const {
    return counts_[factor][2 * level + static_cast<std::size_t>(label)];
  }
  std::uint64_t& count(std::size_t factor, std::size_t level, int label) {
    return counts_[factor][2 * level + static_cast<std::size_t>(label)];
  }
  std::uint64_t total() const { return total_; }
  void set_total(std::uint64_t n) { total_ = n; }

  // Level marginal n[i][k][*] and label marginal n[i][*][s].
  std::uint64_t level_total(std::size_t factor, std::size_t level) const {
    return count(factor, level, 0) + count(factor, level, 1);
  }
  std::uint64_t label_total(std::size_t factor, int label) const;

  // Multiplies every count (and N) by `factor`.
  FactorTable scaled(std::uint64_t factor) const;

  // Flat [L_i x 2] row-major counts of one factor.
  std::span<const std::uint64_t> factor_counts(std::size_t factor) const { return counts_[factor]; }
  std::span<std::uint64_t> factor_counts(std::size_t factor) { return counts_[factor]; }

  bool operator==(const FactorTable&) const = default;

 private:
  std::vector<std::vector<std::uint64_t>> counts_;
  std::uint64_t total_ = 0;
};

// Builds the table with the OpenMP kernel (identical to the serial kernel).
FactorTable build_factor_table(std::span<const RequestRecord> records,
                               const FactorDictionary& dictionary);

// Dictionary plus counts: the content of a tables.bin file.
struct TableBundle {
  FactorDictionary dictionary;
  FactorTable table;
};

void save_tables(const std::string& path, const TableBundle& bundle);
// Errors: kIoError, kCorruptFile (bad magic, truncation, checksum), kVersionMismatch.
TableBundle load_tables(const std::string& path);

struct CookieEvent {
  std::string cookie_id;
  std::string browser;
  std::int64_t timestamp = 0;  // epoch seconds, UTC

  bool operator==(const CookieEvent&) const = default;
};

// Header `cookie_id,browser,timestamp`.
std::vector<CookieEvent> parse_events(std::istream& in, char delimiter = ',');
void write_events(std::ostream& out, std::span<const CookieEvent> events, char delimiter = ',');

inline std::int64_t hour_of(std::int64_t timestamp) {
  // floor division, also for negative timestamps
  return timestamp >= 0 ? timestamp / 3600 : -((-timestamp + 3599) / 3600);
}

struct HourlySeries {
  std::int64_t start_hour = 0;  // epoch-hour index of counts[0]
  std::vector<std::int64_t> counts;

  std::vector<double> as_doubles() const { return {counts.begin(), counts.end()}; }
  bool operator==(const HourlySeries&) const = default;
};

struct HourlyAggregate {
  HourlySeries series;
  std::uint64_t dropped = 0;  // events outside the window
};

// Buckets events into [t0, t1) by floor(ts / 3600). Errors: kUnalignedWindow.
HourlyAggregate aggregate_hourly(std::span<const CookieEvent> events, std::int64_t t0,
                                 std::int64_t t1);

// CSV `hour,count`.
HourlySeries parse_hourly(std::istream& in);
void write_hourly(std::ostream& out, const HourlySeries& series);

std::string fingerprint_hex(std::uint64_t fingerprint);
std::uint64_t parse_fingerprint_hex(std::string_view hex);

// Splits one delimited line; a trailing '\r' is stripped.
std::vector<std::string> split_line(std::string_view line, char delimiter);

}  // namespace adlift
