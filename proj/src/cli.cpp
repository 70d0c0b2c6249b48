#include "adlift/cli.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "adlift/error.hpp"
#include "adlift/features.hpp"
#include "adlift/ingest.hpp"
#include "adlift/kernels.hpp"
#include "adlift/predictor.hpp"
#include "adlift/report.hpp"
#include "adlift/repeatbuy.hpp"
#include "adlift/synth.hpp"
#include "adlift/timeseries.hpp"

namespace adlift::cli {

namespace {

constexpr std::array<const char*, 12> kSubcommands = {
    "synth",        "build-tables", "rank",     "train",      "score",    "pace",
    "fit-nbd",      "survival",     "adjust-churn", "forecast", "virtualize", "alarm"};

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
  return out;
}

void write_json(const std::string& path, const nlohmann::ordered_json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed for '" + path + "'");
}

nlohmann::json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kCorruptFile, "'" + path + "': " + e.what());
  }
}

// Output paths must land in an existing directory.
const CLI::Validator kWritablePath(
    [](std::string& path) -> std::string {
      const auto parent = std::filesystem::path(path).parent_path();
      if (!parent.empty() && !std::filesystem::is_directory(parent)) {
        return "directory '" + parent.string() + "' does not exist";
      }
      return {};
    },
    "PATH(writable)");

char delimiter_of(const std::string& name) {
  if (name == "comma" || name == ",") return ',';
  if (name == "tab" || name == "\\t") return '\t';
  throw Error(ErrorCode::kUsage, "delimiter must be 'comma' or 'tab'");
}

std::pair<std::int64_t, std::int64_t> parse_window(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error(ErrorCode::kUsage, "window must be t0:t1");
  try {
    return {std::stoll(text.substr(0, colon)), std::stoll(text.substr(colon + 1))};
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kUsage, "window must be t0:t1 in epoch seconds");
  }
}

FrequencyTable load_frequency(const std::string& freq_path, const std::string& events_path, double window_hours) {
  if (!freq_path.empty()) {
    auto in = open_in(freq_path);
    return parse_frequency(in, window_hours);
  }
  auto in = open_in(events_path);
  const auto events = parse_events(in);
  return frequency_from_events(events, window_hours);
}

std::vector<RequestRecord> load_scoring_input(const SparseRateModel& model, const std::string& input,
                                              const std::string& schema_path, char delimiter) {
  Schema schema;
  if (!schema_path.empty()) {
    schema = load_schema(schema_path);
  } else {
    schema.factor_columns = model.dictionary().factor_names();
  }
  auto in = open_in(input);
  return parse_requests_frozen(in, schema, model.dictionary(), /*require_label=*/false, delimiter);
}

// Reads two numeric columns of a CSV with a header into an hour -> value map.
std::map<std::int64_t, double> read_hour_column(const std::string& path, const std::string& column) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kMissingColumn, "'" + path + "' is empty");
  const auto header = split_line(line, ',');
  const auto find = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::kMissingColumn, "'" + path + "' has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t hour_col = find("hour");
  const std::size_t value_col = find(column);
  std::map<std::int64_t, double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_line(line, ',');
    if (f.size() != header.size()) throw Error(ErrorCode::kRaggedRow, "'" + path + "' line " + std::to_string(line_no));
    if (f[value_col].empty()) continue;
    try {
      values[std::stoll(f[hour_col])] = std::stod(f[value_col]);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kCorruptFile, "'" + path + "' line " + std::to_string(line_no));
    }
  }
  return values;
}

std::optional<std::size_t> parse_rank(const std::string& text) {
  if (text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used == text.size() && v >= 1) return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorCode::kUsage, "--r must be 'auto' or a positive integer");
}

const CLI::Validator kRankOption(
    [](std::string& text) -> std::string {
      try {
        parse_rank(text);
      } catch (const Error& e) {
        return e.what();
      }
      return {};
    },
    "auto|INT");

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// ---- subcommands ----------------------------------------------------------

struct SynthOptions {
  std::string spec, out_requests, out_events, out_freq, out_hourly, out_schema;
  std::optional<std::uint64_t> seed;
};

void run_synth(const SynthOptions& o, Streams io) {
  const SynthSpec spec = SynthSpec::from_json(read_json(o.spec));
  const std::uint64_t seed = o.seed.value_or(spec.seed);
  if (o.out_requests.empty() && o.out_events.empty() && o.out_freq.empty() && o.out_hourly.empty() &&
      o.out_schema.empty()) {
    throw Error(ErrorCode::kUsage, "synth needs at least one --out-* path");
  }
  if (!o.out_requests.empty() || !o.out_schema.empty()) {
    if (!spec.requests) throw Error(ErrorCode::kUsage, "spec has no 'requests' section");
    const Schema schema = schema_for(*spec.requests);
    if (!o.out_requests.empty()) {
      const auto generated = gen_requests(*spec.requests, seed);
      auto out = open_out(o.out_requests);
      write_requests(out, schema, generated.dictionary, generated.records);
      io.out << "requests: " << generated.records.size() << " records, " << schema.factor_columns.size()
             << " factors\n";
    }
    if (!o.out_schema.empty()) write_json(o.out_schema, schema.to_json());
  }
  if (!o.out_events.empty() || !o.out_freq.empty() || !o.out_hourly.empty()) {
    if (!spec.population) throw Error(ErrorCode::kUsage, "spec has no 'population' section");
    const auto& pop_spec = *spec.population;
    const IntensitySpec* profile = spec.intensity ? &*spec.intensity : nullptr;
    const Population pop = gen_gamma_poisson(pop_spec, seed, profile);
    const ChurnSpec churn =
        spec.churn ? *spec.churn : ChurnSpec{{{"unknown", std::numeric_limits<double>::infinity(), 1.0}}};
    const ChurnedEvents churned = apply_churn(pop, pop_spec, churn, seed);
    if (!o.out_events.empty()) {
      auto out = open_out(o.out_events);
      write_events(out, churned.events);
    }
    if (!o.out_freq.empty()) {
      auto out = open_out(o.out_freq);
      write_frequency(out, frequency_from_counts(churned.identity_counts, pop_spec.window_hours));
    }
    if (!o.out_hourly.empty()) {
      const auto t1 = pop_spec.start_time + static_cast<std::int64_t>(std::llround(pop_spec.window_hours * 3600.0));
      const auto agg = aggregate_hourly(churned.events, pop_spec.start_time, t1);
      auto out = open_out(o.out_hourly);
      write_hourly(out, agg.series);
    }
    io.out << "events: " << churned.events.size() << " from " << pop_spec.users << " users, "
           << churned.identity_counts.size() << " cookies\n";
  }
}

struct BuildTablesOptions {
  std::string schema, input, out, delimiter = "comma";
};

void run_build_tables(const BuildTablesOptions& o, Streams io) {
  const Schema schema = load_schema(o.schema);
  auto in = open_in(o.input);
  const ParsedRequests parsed = parse_requests(in, schema, delimiter_of(o.delimiter));
  TableBundle bundle{parsed.dictionary, build_factor_table(parsed.records, parsed.dictionary)};
  save_tables(o.out, bundle);
  io.out << "tables: " << parsed.records.size() << " records, " << parsed.dictionary.factor_count() << " factors\n";
}

struct RankOptions {
  std::string tables, method = "shannon", out;
  double alpha = kDefaultRenyiAlpha;
};

void run_rank(const RankOptions& o, Streams io) {
  const TableBundle bundle = load_tables(o.tables);
  MiParams params;
  params.method = o.method == "renyi" ? MiMethod::kRenyi : MiMethod::kShannon;
  params.alpha = o.alpha;
  const ImportanceVector imp =
      rank_factors(bundle.table, params, bundle.dictionary.factor_names(), bundle.dictionary.fingerprint());
  write_json(o.out, importance_to_json(imp));
  for (std::size_t r = 0; r < imp.ranking.size(); ++r) {
    const std::size_t i = imp.ranking[r];
    io.out << r + 1 << ' ' << imp.factor_names[i] << ' ' << format_number(imp.values[i]) << '\n';
  }
}

struct TrainOptions {
  std::string tables, importance, out;
  double epsilon = kDefaultEpsilon;
  double beta = kDefaultBeta;
};

void run_train(const TrainOptions& o, Streams io) {
  const TableBundle bundle = load_tables(o.tables);
  const ImportanceVector imp = importance_from_json(read_json(o.importance));
  const SparseRateModel model = train(bundle.table, bundle.dictionary, imp, o.epsilon, o.beta);
  if (model.degenerate()) {
    io.err << "warning: every factor importance is <= epsilon; model scores the global rate "
           << format_number(model.global_rate()) << '\n';
  }
  save_model(o.out, model);
  io.out << "model: " << model.active_factors().size() << " of " << model.factor_count()
         << " factors active, global rate " << format_number(model.global_rate()) << '\n';
}

struct ScoreOptions {
  std::string model, input, out, schema, delimiter = "comma";
};

void run_score(const ScoreOptions& o, Streams io) {
  const SparseRateModel model = load_model(o.model);
  const auto records = load_scoring_input(model, o.input, o.schema, delimiter_of(o.delimiter));
  const BatchResult result = score_batch(model, records, model.fingerprint());
  auto out = open_out(o.out);
  out << "index,score,used_factors\n";
  for (const auto& s : result.scored) {
    if (s.used_factors == kInvalidRecord) continue;
    out << s.index << ',' << format_number(s.score) << ',' << s.used_factors << '\n';
  }
  for (const auto& e : result.errors) io.err << "record error: " << e.message << '\n';
  io.err << "scored " << records.size() << " requests in " << result.seconds << " s ("
         << static_cast<std::uint64_t>(result.requests_per_second) << " req/s)\n";
}

struct PaceOptions {
  std::string model, input, out, schema, delimiter = "comma";
  std::uint64_t target = 0;
  std::optional<double> initial_threshold;
  std::uint64_t block = 1000;
  double gamma = 0.5;
};

void run_pace(const PaceOptions& o, Streams io) {
  const SparseRateModel model = load_model(o.model);
  const auto records = load_scoring_input(model, o.input, o.schema, delimiter_of(o.delimiter));
  const BatchResult result = score_batch(model, records, model.fingerprint());
  PacingState state = make_pacing_state(o.target, records.size(), o.initial_threshold.value_or(model.global_rate()),
                                        PacingConfig{o.block, o.gamma});
  auto out = open_out(o.out);
  out << "index,score,threshold,decision\n";
  for (const auto& s : result.scored) {
    if (s.used_factors == kInvalidRecord) continue;
    const double threshold = state.threshold;
    const Decision d = pace(state, s);
    out << s.index << ',' << format_number(s.score) << ',' << format_number(threshold) << ','
        << (d == Decision::kShow ? "show" : "skip") << '\n';
  }
  io.out << "shown " << state.shown_so_far << " of target " << state.target_total << " over " << state.seen
         << " requests\n";
}

struct FitNbdOptions {
  std::string freq, events, out, report;
};

int run_fit_nbd(const FitNbdOptions& o, Streams io) {
  const FrequencyTable freq = load_frequency(o.freq, o.events, 0.0);
  NbdModel model;
  try {
    model = fit_nbd_truncated(freq);
  } catch (const DegenerateDataError& e) {
    nlohmann::ordered_json doc;
    doc["version"] = 1;
    doc["fit_method"] = fit_method_name(FitMethod::kPoissonFallback);
    doc["shape"] = nullptr;
    doc["mean"] = e.poisson_mean();
    write_json(o.out, doc);
    io.err << e.what() << "; wrote zero-truncated Poisson fallback (mean " << format_number(e.poisson_mean())
           << ")\n";
    return kExitData;
  }
  write_json(o.out, nbd_to_json(model));
  const FrequencyComparison cmp = compare_frequencies(freq, model);
  if (!o.report.empty()) emit_report(o.report, frequency_report(cmp), report_format_for(o.report));
  io.out << "k=" << format_number(model.shape) << " m=" << format_number(model.mean)
         << " chi2=" << format_number(model.gof.chi_square) << " dof=" << model.gof.dof
         << " p=" << format_number(model.gof.p_value) << " singleton_excess=" << format_number(cmp.singleton_excess)
         << '\n';
  return kExitOk;
}

struct SurvivalOptions {
  std::string events, window, out;
  double guard_days = 7.0;
};

void run_survival(const SurvivalOptions& o, Streams io) {
  const auto [t0, t1] = parse_window(o.window);
  auto in = open_in(o.events);
  const auto events = parse_events(in);
  const SurvivalTable table =
      estimate_survival(events, t0, t1, static_cast<std::int64_t>(std::llround(o.guard_days * 86400.0)));
  auto out = open_out(o.out);
  write_survival(out, table);
  for (const auto& r : table.rows) {
    if (r.degenerate) io.err << "warning: browser '" << r.browser << "' has only zero lifetimes\n";
    else if (r.lower_bound) io.err << "warning: browser '" << r.browser << "' has no deaths; tau is a lower bound\n";
  }
}

struct AdjustChurnOptions {
  std::string freq, events, survival, out;
  std::uint64_t threshold = 10;
  std::uint64_t seed = 42;
  double window_hours = 672.0;
  std::size_t users = 100000;
};

void run_adjust_churn(const AdjustChurnOptions& o, Streams io) {
  const FrequencyTable freq = load_frequency(o.freq, o.events, o.window_hours);
  auto in = open_in(o.survival);
  const SurvivalTable survival = parse_survival(in);
  const auto mix = browser_mix_from(survival);
  ChurnConfig config;
  config.loyalty_threshold = o.threshold;
  config.seed = o.seed;
  config.simulated_users = o.users;
  const ChurnAdjustment adj = adjust_for_churn(freq, survival, mix, config);
  if (adj.skipped) io.err << "warning: churn is negligible over the window; adjustment skipped\n";
  write_json(o.out, churn_to_json(adj));
  io.out << "k=" << format_number(adj.shape) << " m=" << format_number(adj.mean)
         << " users=" << format_number(adj.true_users) << " missing_loyal=" << format_number(adj.missing_loyal) << '\n';
}

struct ForecastOptions {
  std::string series, out, rank = "auto";
  std::optional<std::size_t> window;
  std::size_t horizon = 168;
};

void run_forecast(const ForecastOptions& o, Streams io) {
  auto in = open_in(o.series);
  const HourlySeries series = parse_hourly(in);
  const auto values = series.as_doubles();
  const SsaModel model = ssa_fit(values, o.window.value_or(default_window(values.size())), parse_rank(o.rank));
  const SsaForecast fc = ssa_forecast(model, o.horizon);
  if (model.rank_reduced) {
    io.err << "warning: rank " << model.requested_rank << " exceeds numerical rank; using " << model.rank << '\n';
  }
  if (fc.unstable) {
    io.err << "warning: unstable recurrence (max root modulus " << format_number(fc.max_root_modulus) << ")\n";
  }
  std::vector<double> fitted = model.reconstruction;
  fitted.insert(fitted.end(), fc.values.begin(), fc.values.end());
  emit_report(o.out, forecast_report(series.start_hour, values, fitted), report_format_for(o.out));
  io.out << "L=" << model.window << " r=" << model.rank << " horizon=" << o.horizon << '\n';
}

struct VirtualizeOptions {
  std::string series, events, out, rank = "auto";
  std::optional<std::size_t> window;
  bool raw = false;
};

void run_virtualize(const VirtualizeOptions& o, Streams io) {
  auto series_in = open_in(o.series);
  const HourlySeries series = parse_hourly(series_in);
  const auto values = series.as_doubles();
  VirtualClock clock;
  if (o.raw) {
    clock = build_virtual_clock(values, series.start_hour);
  } else {
    const SsaModel model = ssa_fit(values, o.window.value_or(default_window(values.size())), parse_rank(o.rank));
    clock = build_virtual_clock(model, series.start_hour);
  }
  auto events_in = open_in(o.events);
  const auto events = parse_events(events_in);
  std::vector<double> stamps;
  stamps.reserve(events.size());
  for (const auto& e : events) stamps.push_back(static_cast<double>(e.timestamp));
  const auto virt = virtualize(clock, stamps);
  auto out = open_out(o.out);
  out << "cookie_id,browser,timestamp,virtual_hour\n";
  for (std::size_t j = 0; j < events.size(); ++j) {
    out << events[j].cookie_id << ',' << events[j].browser << ',' << events[j].timestamp << ','
        << format_number(virt[j]) << '\n';
  }
  io.out << "virtualized " << events.size() << " events over " << clock.hours() << " hours\n";
}

struct AlarmOptions {
  std::string series, forecast, out;
  AlarmConfig config;
};

void run_alarm(const AlarmOptions& o, Streams io) {
  auto in = open_in(o.series);
  const HourlySeries series = parse_hourly(in);
  const auto forecast = read_hour_column(o.forecast, "forecast");
  std::vector<double> actual, predicted;
  std::vector<std::int64_t> hours;
  for (std::size_t h = 0; h < series.counts.size(); ++h) {
    const std::int64_t hour = series.start_hour + static_cast<std::int64_t>(h);
    const auto it = forecast.find(hour);
    if (it == forecast.end()) continue;
    hours.push_back(hour);
    actual.push_back(static_cast<double>(series.counts[h]));
    predicted.push_back(it->second);
  }
  if (hours.empty()) throw Error(ErrorCode::kInconsistentInputs, "series and forecast share no hours");
  const AlarmReport report = check_alarm(actual, predicted, o.config);
  if (!o.out.empty()) {
    ReportTable t{{"hour", "actual", "forecast", "alarm"}, {}};
    std::size_t next = 0;
    for (std::size_t i = 0; i < hours.size(); ++i) {
      const bool alarm = next < report.alarms.size() && report.alarms[next] == i;
      if (alarm) ++next;
      t.rows.push_back({hours[i], actual[i], predicted[i], static_cast<std::int64_t>(alarm ? 1 : 0)});
    }
    emit_report(o.out, t, report_format_for(o.out));
  }
  if (report.first_alarm) {
    io.out << "alarm at hour " << hours[*report.first_alarm] << " (" << report.alarms.size() << " alarms, "
           << report.exceedances << " exceedances over " << report.hours_evaluated << " hours)\n";
  } else {
    io.out << "no alarm (" << report.exceedances << " exceedances over " << report.hours_evaluated << " hours)\n";
  }
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

int exit_code_for(const Error& e) {
  switch (error_class(e.code())) {
    case ErrorClass::kUsage: return kExitUsage;
    case ErrorClass::kData: return kExitData;
    case ErrorClass::kNumerical: return kExitNumerical;
  }
  return kExitData;
}

}  // namespace

std::string suggest_subcommand(const std::string& name) {
  std::string best;
  std::size_t best_distance = std::numeric_limits<std::size_t>::max();
  for (const char* candidate : kSubcommands) {
    const std::size_t d = edit_distance(name, candidate);
    if (d < best_distance) {
      best_distance = d;
      best = candidate;
    }
  }
  return best_distance <= std::max<std::size_t>(2, name.size() / 3) ? best : std::string();
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (!args.empty() && !args[0].empty() && args[0][0] != '-' &&
      std::find(kSubcommands.begin(), kSubcommands.end(), args[0]) == kSubcommands.end()) {
    err << "adlift: unknown subcommand '" << args[0] << "'";
    if (const auto s = suggest_subcommand(args[0]); !s.empty()) err << "; did you mean '" << s << "'?";
    err << "\nRun 'adlift --help' for the list of subcommands.\n";
    return kExitUsage;
  }

  CLI::App app{"adlift: request scoring and audience analytics for real-time bidding"};
  app.name("adlift");
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  const Streams io{out, err};
  std::function<int()> action;

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Generate seeded synthetic requests and cookie events");
  c_synth->add_option("--spec", synth.spec, "Synthetic spec JSON")->required()->check(CLI::ExistingFile);
  c_synth->add_option("--seed", synth.seed, "64-bit seed (overrides the spec)");
  c_synth->add_option("--out-requests", synth.out_requests, "Requests CSV")->check(kWritablePath);
  c_synth->add_option("--out-events", synth.out_events, "Cookie events CSV")->check(kWritablePath);
  c_synth->add_option("--out-freq", synth.out_freq, "Cookie frequency CSV (n,count)")->check(kWritablePath);
  c_synth->add_option("--out-hourly", synth.out_hourly, "Hourly event counts CSV (hour,count)")->check(kWritablePath);
  c_synth->add_option("--out-schema", synth.out_schema, "Schema JSON for the requests")->check(kWritablePath);
  c_synth->callback([&] { action = [&] { run_synth(synth, io); return kExitOk; }; });

  BuildTablesOptions build;
  auto* c_build = app.add_subcommand("build-tables", "Parse a request log into factor contingency tables");
  c_build->add_option("--schema", build.schema, "Schema JSON")->required()->check(CLI::ExistingFile);
  c_build->add_option("--input", build.input, "Requests CSV")->required()->check(CLI::ExistingFile);
  c_build->add_option("--out", build.out, "Tables file")->required()->check(kWritablePath);
  c_build->add_option("--delimiter", build.delimiter, "comma or tab")->check(CLI::IsMember({"comma", "tab"}));
  c_build->callback([&] { action = [&] { run_build_tables(build, io); return kExitOk; }; });

  RankOptions rank;
  auto* c_rank = app.add_subcommand("rank", "Rank factors by mutual information with the label");
  c_rank->add_option("--tables", rank.tables, "Tables file")->required()->check(CLI::ExistingFile);
  c_rank->add_option("--method", rank.method, "shannon or renyi")->check(CLI::IsMember({"shannon", "renyi"}));
  c_rank->add_option("--alpha", rank.alpha, "Renyi order")->check(CLI::PositiveNumber);
  c_rank->add_option("--out", rank.out, "Importance JSON")->required()->check(kWritablePath);
  c_rank->callback([&] { action = [&] { run_rank(rank, io); return kExitOk; }; });

  TrainOptions tr;
  auto* c_train = app.add_subcommand("train", "Train the sparse rate model");
  c_train->add_option("--tables", tr.tables, "Tables file")->required()->check(CLI::ExistingFile);
  c_train->add_option("--importance", tr.importance, "Importance JSON")->required()->check(CLI::ExistingFile);
  c_train->add_option("--epsilon", tr.epsilon, "Sparsity threshold in bits")->check(CLI::NonNegativeNumber);
  c_train->add_option("--beta", tr.beta, "Smoothing pseudo-count")->check(CLI::PositiveNumber);
  c_train->add_option("--out", tr.out, "Model JSON")->required()->check(kWritablePath);
  c_train->callback([&] { action = [&] { run_train(tr, io); return kExitOk; }; });

  ScoreOptions sc;
  auto* c_score = app.add_subcommand("score", "Score requests with a trained model");
  c_score->add_option("--model", sc.model, "Model JSON")->required()->check(CLI::ExistingFile);
  c_score->add_option("--input", sc.input, "Requests CSV")->required()->check(CLI::ExistingFile);
  c_score->add_option("--schema", sc.schema, "Schema JSON (default: model factor names)")->check(CLI::ExistingFile);
  c_score->add_option("--delimiter", sc.delimiter, "comma or tab")->check(CLI::IsMember({"comma", "tab"}));
  c_score->add_option("--out", sc.out, "Scores CSV")->required()->check(kWritablePath);
  c_score->callback([&] { action = [&] { run_score(sc, io); return kExitOk; }; });

  PaceOptions pc;
  auto* c_pace = app.add_subcommand("pace", "Replay requests through the impression pacer");
  c_pace->add_option("--model", pc.model, "Model JSON")->required()->check(CLI::ExistingFile);
  c_pace->add_option("--input", pc.input, "Requests CSV")->required()->check(CLI::ExistingFile);
  c_pace->add_option("--schema", pc.schema, "Schema JSON (default: model factor names)")->check(CLI::ExistingFile);
  c_pace->add_option("--delimiter", pc.delimiter, "comma or tab")->check(CLI::IsMember({"comma", "tab"}));
  c_pace->add_option("--target", pc.target, "Impression target N_total")->required();
  c_pace->add_option("--initial-threshold", pc.initial_threshold, "Starting score cutoff (default: global rate)")
      ->check(CLI::Range(0.0, 1.0));
  c_pace->add_option("--block", pc.block, "Requests per threshold update")->check(CLI::PositiveNumber);
  c_pace->add_option("--gamma", pc.gamma, "Update exponent")->check(CLI::PositiveNumber);
  c_pace->add_option("--out", pc.out, "Decisions CSV")->required()->check(kWritablePath);
  c_pace->callback([&] { action = [&] { run_pace(pc, io); return kExitOk; }; });

  FitNbdOptions fit;
  auto* c_fit = app.add_subcommand("fit-nbd", "Fit a zero-truncated NBD to cookie frequencies");
  auto* fit_freq = c_fit->add_option("--freq", fit.freq, "Frequency CSV (n,count)")->check(CLI::ExistingFile);
  auto* fit_events = c_fit->add_option("--events", fit.events, "Cookie events CSV")->check(CLI::ExistingFile);
  fit_freq->excludes(fit_events);
  c_fit->add_option("--out", fit.out, "NBD JSON")->required()->check(kWritablePath);
  c_fit->add_option("--report", fit.report, "Observed vs expected report (.csv or .json)")->check(kWritablePath);
  c_fit->callback([&] {
    if (fit.freq.empty() && fit.events.empty()) throw CLI::ValidationError("fit-nbd", "--freq or --events is required");
    action = [&] { return run_fit_nbd(fit, io); };
  });

  SurvivalOptions sv;
  auto* c_surv = app.add_subcommand("survival", "Estimate cookie lifetimes per browser");
  c_surv->add_option("--events", sv.events, "Cookie events CSV")->required()->check(CLI::ExistingFile);
  c_surv->add_option("--window", sv.window, "Observation window t0:t1 (epoch seconds)")->required();
  c_surv->add_option("--guard-days", sv.guard_days, "Censoring guard gap in days")->check(CLI::NonNegativeNumber);
  c_surv->add_option("--out", sv.out, "Survival CSV")->required()->check(kWritablePath);
  c_surv->callback([&] { action = [&] { run_survival(sv, io); return kExitOk; }; });

  AdjustChurnOptions ac;
  auto* c_adj = app.add_subcommand("adjust-churn", "Correct an NBD fit for cookie churn");
  auto* adj_freq = c_adj->add_option("--freq", ac.freq, "Frequency CSV (n,count)")->check(CLI::ExistingFile);
  auto* adj_events = c_adj->add_option("--events", ac.events, "Cookie events CSV")->check(CLI::ExistingFile);
  adj_freq->excludes(adj_events);
  c_adj->add_option("--survival", ac.survival, "Survival CSV")->required()->check(CLI::ExistingFile);
  c_adj->add_option("--threshold", ac.threshold, "Loyalty threshold n0")->check(CLI::Range(2, 1000000));
  c_adj->add_option("--seed", ac.seed, "Monte-Carlo seed");
  c_adj->add_option("--window-hours", ac.window_hours, "Length of the frequency window in hours")
      ->check(CLI::PositiveNumber);
  c_adj->add_option("--users", ac.users, "Simulated users")->check(CLI::PositiveNumber);
  c_adj->add_option("--out", ac.out, "Adjustment JSON")->required()->check(kWritablePath);
  c_adj->callback([&] {
    if (ac.freq.empty() && ac.events.empty()) throw CLI::ValidationError("adjust-churn", "--freq or --events is required");
    action = [&] { run_adjust_churn(ac, io); return kExitOk; };
  });

  ForecastOptions fo;
  auto* c_fc = app.add_subcommand("forecast", "SSA reconstruction and recurrent forecast of an hourly series");
  c_fc->add_option("--series", fo.series, "Hourly CSV (hour,count)")->required()->check(CLI::ExistingFile);
  c_fc->add_option("--L", fo.window, "Window length (default 168, or n/2 for short series)");
  c_fc->add_option("--r", fo.rank, "Rank or 'auto' (95% of singular mass)")->check(kRankOption);
  c_fc->add_option("--horizon", fo.horizon, "Hours to forecast");
  c_fc->add_option("--out", fo.out, "Forecast report (.csv or .json)")->required()->check(kWritablePath);
  c_fc->callback([&] { action = [&] { run_forecast(fo, io); return kExitOk; }; });

  VirtualizeOptions vo;
  auto* c_virt = app.add_subcommand("virtualize", "Map event times onto a seasonality-free virtual clock");
  c_virt->add_option("--series", vo.series, "Hourly CSV (hour,count)")->required()->check(CLI::ExistingFile);
  c_virt->add_option("--events", vo.events, "Cookie events CSV")->required()->check(CLI::ExistingFile);
  c_virt->add_option("--L", vo.window, "SSA window length");
  c_virt->add_option("--r", vo.rank, "SSA rank or 'auto'")->check(kRankOption);
  c_virt->add_flag("--raw", vo.raw, "Build the clock from raw counts instead of the SSA fit");
  c_virt->add_option("--out", vo.out, "Virtual events CSV")->required()->check(kWritablePath);
  c_virt->callback([&] { action = [&] { run_virtualize(vo, io); return kExitOk; }; });

  AlarmOptions ao;
  auto* c_alarm = app.add_subcommand("alarm", "Flag hours where actual counts depart from the forecast");
  c_alarm->add_option("--series", ao.series, "Hourly CSV (hour,count)")->required()->check(CLI::ExistingFile);
  c_alarm->add_option("--forecast", ao.forecast, "Forecast CSV (hour,...,forecast)")->required()->check(CLI::ExistingFile);
  c_alarm->add_option("--c", ao.config.sigma_multiplier, "Sigma multiplier")->check(CLI::PositiveNumber);
  c_alarm->add_option("--h", ao.config.consecutive_hours, "Consecutive hours")->check(CLI::PositiveNumber);
  c_alarm->add_option("--R", ao.config.residual_window, "Residual window")->check(CLI::Range(10, 1000000));
  c_alarm->add_option("--out", ao.out, "Per-hour alarm report")->check(kWritablePath);
  c_alarm->callback([&] { action = [&] { run_alarm(ao, io); return kExitOk; }; });

  std::vector<const char*> argv{"adlift"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    configure_threads_from_env();
    return action ? action() : kExitUsage;
  } catch (const Error& e) {
    err << "adlift: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "adlift: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace adlift::cli
