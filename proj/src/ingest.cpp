#include "adlift/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "adlift/error.hpp"
#include "adlift/kernels.hpp"

namespace adlift {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_mix_u64(std::uint64_t& h, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  fnv_mix(h, buf, 8);
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorCode::kMissingColumn, "column '" + name + "' not in header");
  return static_cast<std::size_t>(it - header.begin());
}

std::uint8_t parse_label(std::string_view field, std::size_t line_no) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  throw Error(ErrorCode::kBadLabel,
              "line " + std::to_string(line_no) + ": label '" + std::string(field) + "' is not 0/1");
}

std::int64_t parse_int64(std::string_view field, const char* what, std::size_t line_no) {
  std::int64_t v = 0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::kCorruptFile, "line " + std::to_string(line_no) + ": bad " + what +
                                             " '" + std::string(field) + "'");
  }
  return v;
}

struct RequestLayout {
  std::vector<std::size_t> factor_cols;
  std::optional<std::size_t> label_col;
  std::size_t width = 0;
};

RequestLayout read_request_header(std::istream& in, const Schema& schema, char delimiter,
                                  bool require_label) {
  schema.validate();
  std::string line;
  if (!read_line(in, line)) throw Error(ErrorCode::kMissingColumn, "missing header row");
  const auto header = split_line(line, delimiter);
  RequestLayout layout;
  layout.width = header.size();
  for (const auto& name : schema.factor_columns) layout.factor_cols.push_back(column_index(header, name));
  if (require_label) {
    layout.label_col = column_index(header, schema.label_column);
  } else if (std::find(header.begin(), header.end(), schema.label_column) != header.end()) {
    layout.label_col = column_index(header, schema.label_column);
  }
  return layout;
}

// Calls fn(fields, line_no) for each non-empty data line.
template <typename Fn>
void for_each_row(std::istream& in, char delimiter, std::size_t width, Fn&& fn) {
  std::string line;
  std::size_t line_no = 1;
  while (read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_line(line, delimiter);
    if (fields.size() != width) {
      throw Error(ErrorCode::kRaggedRow, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(width) + " fields, got " +
                                             std::to_string(fields.size()));
    }
    fn(fields, line_no);
  }
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>(v >> (8 * i)));
}
void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>(v >> (8 * i)));
}
void put_str(std::string& buf, const std::string& s) {
  put_u32(buf, static_cast<std::uint32_t>(s.size()));
  buf += s;
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint64_t u64() { return uint(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::kCorruptFile, "tables file truncated");
  }
  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

constexpr char kTablesMagic[8] = {'A', 'D', 'L', 'F', 'T', 'B', 'L', '1'};
constexpr std::uint32_t kTablesVersion = 1;

}  // namespace

std::vector<std::string> split_line(std::string_view line, char delimiter) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

void Schema::validate() const {
  if (factor_columns.empty()) throw Error(ErrorCode::kBadSpec, "schema has no factor columns");
  std::set<std::string> seen;
  for (const auto& c : factor_columns) {
    if (c.empty()) throw Error(ErrorCode::kBadSpec, "empty factor column name");
    if (!seen.insert(c).second) throw Error(ErrorCode::kBadSpec, "duplicate factor column '" + c + "'");
  }
  if (label_column.empty()) throw Error(ErrorCode::kBadSpec, "schema has no label column");
  for (const std::string* other :
       {&label_column, timestamp_column ? &*timestamp_column : nullptr,
        user_column ? &*user_column : nullptr, browser_column ? &*browser_column : nullptr}) {
    if (other != nullptr && seen.count(*other) != 0) {
      throw Error(ErrorCode::kBadSpec, "column '" + *other + "' is both a factor and a special column");
    }
  }
}

Schema Schema::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kBadSpec, "schema must be a JSON object");
  if (doc.value("version", 0) != 1) throw Error(ErrorCode::kVersionMismatch, "schema version must be 1");
  Schema s;
  try {
    s.factor_columns = doc.at("factors").get<std::vector<std::string>>();
    s.label_column = doc.at("label").get<std::string>();
    if (doc.contains("timestamp")) s.timestamp_column = doc["timestamp"].get<std::string>();
    if (doc.contains("user")) s.user_column = doc["user"].get<std::string>();
    if (doc.contains("browser")) s.browser_column = doc["browser"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBadSpec, std::string("schema: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json Schema::to_json() const {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["factors"] = factor_columns;
  doc["label"] = label_column;
  if (timestamp_column) doc["timestamp"] = *timestamp_column;
  if (user_column) doc["user"] = *user_column;
  if (browser_column) doc["browser"] = *browser_column;
  return doc;
}

Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open schema '" + path + "'");
  try {
    return Schema::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kBadSpec, "schema '" + path + "': " + e.what());
  }
}

FactorDictionary::FactorDictionary(std::vector<std::string> factor_names)
    : names_(std::move(factor_names)), labels_(names_.size()), index_(names_.size()) {}

std::optional<LevelId> FactorDictionary::find(std::size_t factor, std::string_view label) const {
  const auto& idx = index_[factor];
  const auto it = idx.find(std::string(label));
  if (it == idx.end()) return std::nullopt;
  return it->second;
}

LevelId FactorDictionary::intern(std::size_t factor, std::string_view label) {
  auto& idx = index_[factor];
  auto [it, inserted] = idx.try_emplace(std::string(label), static_cast<LevelId>(labels_[factor].size()));
  if (inserted) labels_[factor].emplace_back(label);
  return it->second;
}

std::uint64_t FactorDictionary::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  fnv_mix_u64(h, names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    fnv_mix(h, names_[i].data(), names_[i].size());
    fnv_mix_u64(h, labels_[i].size());
    for (const auto& label : labels_[i]) {
      fnv_mix_u64(h, label.size());
      fnv_mix(h, label.data(), label.size());
    }
  }
  return h;
}

ParsedRequests parse_requests(std::istream& in, const Schema& schema, char delimiter) {
  const RequestLayout layout = read_request_header(in, schema, delimiter, /*require_label=*/true);
  ParsedRequests out{FactorDictionary(schema.factor_columns), {}};
  const std::size_t m = layout.factor_cols.size();
  for_each_row(in, delimiter, layout.width, [&](const std::vector<std::string>& fields, std::size_t line_no) {
    RequestRecord rec;
    rec.label = parse_label(fields[*layout.label_col], line_no);
    rec.factors.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const std::string& v = fields[layout.factor_cols[i]];
      rec.factors[i] = out.dictionary.intern(i, v.empty() ? kMissingLevel : std::string_view(v));
    }
    out.records.push_back(std::move(rec));
  });
  return out;
}

std::vector<RequestRecord> parse_requests_frozen(std::istream& in, const Schema& schema,
                                                 const FactorDictionary& dictionary,
                                                 bool require_label, char delimiter) {
  const RequestLayout layout = read_request_header(in, schema, delimiter, require_label);
  if (dictionary.factor_names() != schema.factor_columns) {
    throw Error(ErrorCode::kFingerprintMismatch, "schema factors differ from dictionary factors");
  }
  std::vector<RequestRecord> records;
  const std::size_t m = layout.factor_cols.size();
  for_each_row(in, delimiter, layout.width, [&](const std::vector<std::string>& fields, std::size_t line_no) {
    RequestRecord rec;
    rec.label = layout.label_col ? parse_label(fields[*layout.label_col], line_no) : 0;
    rec.factors.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const std::string& v = fields[layout.factor_cols[i]];
      rec.factors[i] = dictionary.find(i, v.empty() ? kMissingLevel : std::string_view(v)).value_or(kUnseenLevel);
    }
    records.push_back(std::move(rec));
  });
  return records;
}

void write_requests(std::ostream& out, const Schema& schema, const FactorDictionary& dictionary,
                    std::span<const RequestRecord> records, char delimiter) {
  for (const auto& c : schema.factor_columns) out << c << delimiter;
  out << schema.label_column << '\n';
  for (const auto& rec : records) {
    for (std::size_t i = 0; i < rec.factors.size(); ++i) {
      out << dictionary.level_label(i, rec.factors[i]) << delimiter;
    }
    out << static_cast<int>(rec.label) << '\n';
  }
}

FactorTable::FactorTable(std::span<const std::size_t> level_counts) {
  counts_.reserve(level_counts.size());
  for (std::size_t levels : level_counts) counts_.emplace_back(2 * levels, 0);
}

std::uint64_t FactorTable::label_total(std::size_t factor, int label) const {
  std::uint64_t sum = 0;
  for (std::size_t k = 0; k < level_count(factor); ++k) sum += count(factor, k, label);
  return sum;
}

FactorTable FactorTable::scaled(std::uint64_t factor) const {
  FactorTable t = *this;
  for (auto& row : t.counts_) {
    for (auto& c : row) c *= factor;
  }
  t.total_ *= factor;
  return t;
}

FactorTable build_factor_table(std::span<const RequestRecord> records,
                               const FactorDictionary& dictionary) {
  return kernels::omp::build_factor_table(records, dictionary);
}

void save_tables(const std::string& path, const TableBundle& bundle) {
  const auto& dict = bundle.dictionary;
  const auto& table = bundle.table;
  std::string buf(kTablesMagic, sizeof(kTablesMagic));
  put_u32(buf, kTablesVersion);
  put_u32(buf, static_cast<std::uint32_t>(dict.factor_count()));
  for (std::size_t i = 0; i < dict.factor_count(); ++i) {
    put_str(buf, dict.factor_name(i));
    put_u32(buf, static_cast<std::uint32_t>(dict.level_count(i)));
    for (std::size_t k = 0; k < dict.level_count(i); ++k) {
      put_str(buf, dict.level_label(i, static_cast<LevelId>(k)));
      put_u64(buf, table.count(i, k, 0));
      put_u64(buf, table.count(i, k, 1));
    }
  }
  put_u64(buf, table.total());
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, buf.data(), buf.size());
  put_u64(buf, h);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::kIoError, "write failed for '" + path + "'");
}

TableBundle load_tables(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kTablesMagic) + 8 ||
      std::memcmp(data.data(), kTablesMagic, sizeof(kTablesMagic)) != 0) {
    throw Error(ErrorCode::kCorruptFile, "'" + path + "' is not a tables file");
  }
  const std::string_view body(data.data(), data.size() - 8);
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, body.data(), body.size());
  ByteReader tail(std::string_view(data).substr(data.size() - 8));
  if (tail.u64() != h) throw Error(ErrorCode::kCorruptFile, "'" + path + "' checksum mismatch");

  ByteReader r(body.substr(sizeof(kTablesMagic)));
  if (r.u32() != kTablesVersion) throw Error(ErrorCode::kVersionMismatch, "unsupported tables version");
  const std::uint32_t m = r.u32();
  std::vector<std::string> names;
  std::vector<std::vector<std::pair<std::string, std::array<std::uint64_t, 2>>>> levels(m);
  for (std::uint32_t i = 0; i < m; ++i) {
    names.push_back(r.str());
    const std::uint32_t count = r.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
      std::string label = r.str();
      const std::uint64_t n0 = r.u64();
      const std::uint64_t n1 = r.u64();
      levels[i].push_back({std::move(label), {n0, n1}});
    }
  }
  TableBundle bundle{FactorDictionary(names), {}};
  std::vector<std::size_t> level_counts;
  for (std::uint32_t i = 0; i < m; ++i) {
    for (const auto& [label, _] : levels[i]) bundle.dictionary.intern(i, label);
    if (bundle.dictionary.level_count(i) != levels[i].size()) {
      throw Error(ErrorCode::kCorruptFile, "duplicate level label in factor " + names[i]);
    }
    level_counts.push_back(levels[i].size());
  }
  bundle.table = FactorTable(level_counts);
  for (std::uint32_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < levels[i].size(); ++k) {
      bundle.table.count(i, k, 0) = levels[i][k].second[0];
      bundle.table.count(i, k, 1) = levels[i][k].second[1];
    }
  }
  bundle.table.set_total(r.u64());
  if (r.position() + sizeof(kTablesMagic) != body.size()) {
    throw Error(ErrorCode::kCorruptFile, "trailing bytes in tables file");
  }
  return bundle;
}

std::vector<CookieEvent> parse_events(std::istream& in, char delimiter) {
  std::string line;
  if (!read_line(in, line)) throw Error(ErrorCode::kMissingColumn, "missing header row");
  const auto header = split_line(line, delimiter);
  const std::size_t cookie_col = column_index(header, "cookie_id");
  const std::size_t browser_col = column_index(header, "browser");
  const std::size_t ts_col = column_index(header, "timestamp");
  std::vector<CookieEvent> events;
  for_each_row(in, delimiter, header.size(), [&](const std::vector<std::string>& f, std::size_t line_no) {
    events.push_back({f[cookie_col], f[browser_col], parse_int64(f[ts_col], "timestamp", line_no)});
  });
  return events;
}

void write_events(std::ostream& out, std::span<const CookieEvent> events, char delimiter) {
  out << "cookie_id" << delimiter << "browser" << delimiter << "timestamp\n";
  for (const auto& e : events) {
    out << e.cookie_id << delimiter << e.browser << delimiter << e.timestamp << '\n';
  }
}

HourlyAggregate aggregate_hourly(std::span<const CookieEvent> events, std::int64_t t0, std::int64_t t1) {
  if (t0 >= t1 || t0 % 3600 != 0 || t1 % 3600 != 0) {
    throw Error(ErrorCode::kUnalignedWindow,
                "window [" + std::to_string(t0) + ", " + std::to_string(t1) + ") is not hour-aligned");
  }
  HourlyAggregate agg;
  agg.series.start_hour = hour_of(t0);
  agg.series.counts.assign(static_cast<std::size_t>((t1 - t0) / 3600), 0);
  for (const auto& e : events) {
    if (e.timestamp < t0 || e.timestamp >= t1) {
      ++agg.dropped;
      continue;
    }
    ++agg.series.counts[static_cast<std::size_t>((e.timestamp - t0) / 3600)];
  }
  return agg;
}

HourlySeries parse_hourly(std::istream& in) {
  std::string line;
  if (!read_line(in, line)) throw Error(ErrorCode::kMissingColumn, "missing header row");
  const auto header = split_line(line, ',');
  const std::size_t hour_col = column_index(header, "hour");
  const std::size_t count_col = column_index(header, "count");
  HourlySeries s;
  bool first = true;
  for_each_row(in, ',', header.size(), [&](const std::vector<std::string>& f, std::size_t line_no) {
    const std::int64_t hour = parse_int64(f[hour_col], "hour", line_no);
    const std::int64_t count = parse_int64(f[count_col], "count", line_no);
    if (count < 0) throw Error(ErrorCode::kCorruptFile, "line " + std::to_string(line_no) + ": negative count");
    if (first) {
      s.start_hour = hour;
      first = false;
    }
    const std::int64_t expected = s.start_hour + static_cast<std::int64_t>(s.counts.size());
    if (hour < expected) throw Error(ErrorCode::kCorruptFile, "line " + std::to_string(line_no) + ": hours not increasing");
    s.counts.resize(static_cast<std::size_t>(hour - s.start_hour), 0);  // gaps are zero hours
    s.counts.push_back(count);
  });
  return s;
}

void write_hourly(std::ostream& out, const HourlySeries& series) {
  out << "hour,count\n";
  for (std::size_t h = 0; h < series.counts.size(); ++h) {
    out << series.start_hour + static_cast<std::int64_t>(h) << ',' << series.counts[h] << '\n';
  }
}

std::string fingerprint_hex(std::uint64_t fingerprint) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[fingerprint & 0xf];
    fingerprint >>= 4;
  }
  return s;
}

std::uint64_t parse_fingerprint_hex(std::string_view hex) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), v, 16);
  if (hex.size() != 16 || ec != std::errc() || ptr != hex.data() + hex.size()) {
    throw Error(ErrorCode::kCorruptFile, "bad fingerprint '" + std::string(hex) + "'");
  }
  return v;
}

}  // namespace adlift
