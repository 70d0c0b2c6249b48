#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace adlift {

// Singular spectrum analysis of one hourly series.
struct SsaModel {
  std::size_t window = 0;                // L
  std::size_t rank = 0;                  // r, components kept
  std::size_t requested_rank = 0;        // before reduction to the numerical rank
  std::vector<double> singular_values;   // all min(L, K), descending
  std::vector<double> recurrence;        // a_1..a_{L-1}: x_t = Σ_j a_j x_{t-j}
  std::vector<double> reconstruction;    // diagonal-averaged rank-r series
  bool rank_reduced = false;             // r exceeded the numerical rank

  std::size_t length() const { return reconstruction.size(); }
};

inline constexpr std::size_t kWeekHours = 168;

// L = 168 when n >= 336, otherwise floor(n / 2).
std::size_t default_window(std::size_t n);

// Smallest r whose leading squared singular values hold `share` of the total.
std::size_t rank_for_share(std::span<const double> singular_values, double share = 0.95);

// Hankel embedding, thin SVD, rank-r diagonal averaging and the recurrent
// forecasting coefficients. `rank` = nullopt picks rank_for_share(0.95).
// Errors: kTooShort (n < 2L or L < 2), kDomainError (r outside [1, L)).
SsaModel ssa_fit(std::span<const double> series, std::size_t window, std::optional<std::size_t> rank = std::nullopt);

struct SsaForecast {
  std::vector<double> values;
  double max_root_modulus = 0.0;
  bool unstable = false;  // a recurrence root lies outside 1 + 1e-6
};

// Runs the recurrence `horizon` steps past the reconstruction.
SsaForecast ssa_forecast(const SsaModel& model, std::size_t horizon);

// Largest modulus among the roots of z^{L-1} - a_1 z^{L-2} - ... - a_{L-1}.
double max_root_modulus(std::span<const double> recurrence);

// Piecewise-linear cumulative intensity through hourly boundaries.
class VirtualClock {
 public:
  VirtualClock() = default;
  VirtualClock(std::int64_t start_hour, std::vector<double> cumulative)
      : start_hour_(start_hour), cumulative_(std::move(cumulative)) {}

  std::int64_t start_hour() const { return start_hour_; }
  std::size_t hours() const { return cumulative_.empty() ? 0 : cumulative_.size() - 1; }
  double total_mass() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  // Λ at hour boundaries, Λ(0) = 0.
  std::span<const double> breakpoints() const { return cumulative_; }

  // Λ(t) for t in hours since start_hour.
  double cumulative_at(double hours_since_start) const;

 private:
  std::int64_t start_hour_ = 0;
  std::vector<double> cumulative_;
};

// Errors: kDomainError (negative or non-finite intensity), kZeroTotal.
VirtualClock build_virtual_clock(std::span<const double> hourly_intensity, std::int64_t start_hour = 0);
// Clock from the SSA reconstruction (negative fitted values count as zero).
VirtualClock build_virtual_clock(const SsaModel& model, std::int64_t start_hour = 0);

// Virtual hour since start, H Λ(t) / Λ(H), for epoch-second timestamps.
// Errors: kOutOfDomain.
std::vector<double> virtualize(const VirtualClock& clock, std::span<const double> timestamps);

struct AlarmConfig {
  double sigma_multiplier = 3.0;        // c
  std::size_t consecutive_hours = 2;    // h
  std::size_t residual_window = 168;    // R

  // Errors: kDomainError.
  void validate() const;
};

struct AlarmReport {
  std::optional<std::size_t> first_alarm;  // hour index completing the first run
  std::vector<std::size_t> alarms;         // every run completion; runs restart after an alarm
  std::size_t hours_evaluated = 0;
  std::size_t exceedances = 0;
};

// Minimum in-control residuals before hours are tested.
inline constexpr std::size_t kMinAlarmResiduals = 10;

// Residual scale is the RMS of the trailing R in-control residuals (hours that
// did not exceed). An hour exceeds when |actual - forecast| > c sigma; an
// alarm fires when h consecutive hours exceed. Errors: kDimensionMismatch.
AlarmReport check_alarm(std::span<const double> actual, std::span<const double> forecast,
                        const AlarmConfig& config = {});

}  // namespace adlift
