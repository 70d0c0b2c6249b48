#include "adlift/timeseries.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "adlift/error.hpp"

namespace adlift {

std::size_t default_window(std::size_t n) { return n >= 2 * kWeekHours ? kWeekHours : n / 2; }

std::size_t rank_for_share(std::span<const double> singular_values, double share) {
  double total = 0.0;
  for (double s : singular_values) total += s * s;
  if (total <= 0.0) return 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < singular_values.size(); ++i) {
    acc += singular_values[i] * singular_values[i];
    if (acc >= share * total) return i + 1;
  }
  return singular_values.size();
}

SsaModel ssa_fit(std::span<const double> series, std::size_t window, std::optional<std::size_t> rank) {
  const std::size_t n = series.size();
  if (window < 2 || n < 2 * window) {
    throw Error(ErrorCode::kTooShort, "SSA needs L >= 2 and n >= 2L (n=" + std::to_string(n) +
                                          ", L=" + std::to_string(window) + ")");
  }
  const std::size_t L = window;
  const std::size_t K = n - L + 1;

  Eigen::MatrixXd trajectory(L, K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < L; ++l) trajectory(l, k) = series[l + k];
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(trajectory, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();

  SsaModel model;
  model.window = L;
  model.singular_values.assign(sigma.data(), sigma.data() + sigma.size());

  std::size_t r = rank ? *rank : rank_for_share(model.singular_values);
  if (r < 1 || r >= L) throw Error(ErrorCode::kDomainError, "SSA rank must lie in [1, L)");
  model.requested_rank = r;
  const double cutoff = sigma(0) * static_cast<double>(std::max(L, K)) * std::numeric_limits<double>::epsilon();
  std::size_t numerical_rank = 0;
  while (numerical_rank < static_cast<std::size_t>(sigma.size()) && sigma(numerical_rank) > cutoff) ++numerical_rank;
  numerical_rank = std::max<std::size_t>(numerical_rank, 1);
  if (r > numerical_rank) {
    r = numerical_rank;
    model.rank_reduced = true;
  }
  model.rank = r;

  const Eigen::MatrixXd& U = svd.matrixU();
  const Eigen::MatrixXd& V = svd.matrixV();

  // Diagonal averaging of Σ_{i<r} σ_i u_i v_iᵀ.
  std::vector<double> sums(n, 0.0);
  std::vector<double> counts(n, 0.0);
  const Eigen::MatrixXd approx = U.leftCols(r) * sigma.head(r).asDiagonal() * V.leftCols(r).transpose();
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < L; ++l) {
      sums[l + k] += approx(l, k);
      counts[l + k] += 1.0;
    }
  }
  model.reconstruction.resize(n);
  for (std::size_t t = 0; t < n; ++t) model.reconstruction[t] = sums[t] / counts[t];

  // Recurrent forecasting: R = (1 / (1 - ν²)) Σ π_i u_i^∇ with π the last
  // coordinates of the leading vectors and u^∇ the first L-1 coordinates.
  double nu2 = 0.0;
  Eigen::VectorXd coeff = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L - 1));
  for (std::size_t i = 0; i < r; ++i) {
    const double pi = U(static_cast<Eigen::Index>(L - 1), static_cast<Eigen::Index>(i));
    nu2 += pi * pi;
    coeff += pi * U.col(static_cast<Eigen::Index>(i)).head(static_cast<Eigen::Index>(L - 1));
  }
  if (nu2 >= 1.0 - 1e-12) throw Error(ErrorCode::kDomainError, "verticality coefficient is 1; no recurrence exists");
  coeff /= (1.0 - nu2);
  // coeff[j] multiplies x_{t-L+1+j}; store as a_1..a_{L-1} (a_1 for x_{t-1}).
  model.recurrence.resize(L - 1);
  for (std::size_t j = 0; j < L - 1; ++j) model.recurrence[j] = coeff(static_cast<Eigen::Index>(L - 2 - j));
  return model;
}

double max_root_modulus(std::span<const double> recurrence) {
  const auto d = static_cast<Eigen::Index>(recurrence.size());
  if (d == 0) return 0.0;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) companion(0, j) = recurrence[static_cast<std::size_t>(j)];
  for (Eigen::Index j = 1; j < d; ++j) companion(j, j - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

SsaForecast ssa_forecast(const SsaModel& model, std::size_t horizon) {
  SsaForecast out;
  const std::size_t d = model.recurrence.size();
  if (d == 0 || model.reconstruction.size() < d) throw Error(ErrorCode::kDomainError, "model has no recurrence");
  std::vector<double> history(model.reconstruction.end() - static_cast<std::ptrdiff_t>(d), model.reconstruction.end());
  out.values.reserve(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    double next = 0.0;
    for (std::size_t j = 0; j < d; ++j) next += model.recurrence[j] * history[history.size() - 1 - j];
    out.values.push_back(next);
    history.push_back(next);
  }
  out.max_root_modulus = max_root_modulus(model.recurrence);
  out.unstable = out.max_root_modulus > 1.0 + 1e-6;
  return out;
}

double VirtualClock::cumulative_at(double t) const {
  const double h = static_cast<double>(hours());
  if (t <= 0.0) return 0.0;
  if (t >= h) return total_mass();
  const auto i = static_cast<std::size_t>(t);
  const double frac = t - static_cast<double>(i);
  return cumulative_[i] + frac * (cumulative_[i + 1] - cumulative_[i]);
}

VirtualClock build_virtual_clock(std::span<const double> hourly_intensity, std::int64_t start_hour) {
  std::vector<double> cumulative(hourly_intensity.size() + 1, 0.0);
  for (std::size_t h = 0; h < hourly_intensity.size(); ++h) {
    const double v = hourly_intensity[h];
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kDomainError, "intensity at hour " + std::to_string(h) + " is negative or not finite");
    }
    cumulative[h + 1] = cumulative[h] + v;
  }
  if (!(cumulative.back() > 0.0)) throw Error(ErrorCode::kZeroTotal, "intensity has no mass");
  return VirtualClock(start_hour, std::move(cumulative));
}

VirtualClock build_virtual_clock(const SsaModel& model, std::int64_t start_hour) {
  std::vector<double> clipped(model.reconstruction);
  for (double& v : clipped) v = std::max(0.0, v);
  return build_virtual_clock(clipped, start_hour);
}

std::vector<double> virtualize(const VirtualClock& clock, std::span<const double> timestamps) {
  const double origin = static_cast<double>(clock.start_hour()) * 3600.0;
  const double hours = static_cast<double>(clock.hours());
  const double scale = hours / clock.total_mass();
  std::vector<double> out;
  out.reserve(timestamps.size());
  for (double ts : timestamps) {
    const double t = (ts - origin) / 3600.0;
    if (!(t >= 0.0 && t <= hours)) {
      throw Error(ErrorCode::kOutOfDomain, "timestamp " + std::to_string(ts) + " outside the clock's hours");
    }
    out.push_back(scale * clock.cumulative_at(t));
  }
  return out;
}

void AlarmConfig::validate() const {
  if (!(sigma_multiplier > 0.0)) throw Error(ErrorCode::kDomainError, "alarm c must be positive");
  if (consecutive_hours < 1) throw Error(ErrorCode::kDomainError, "alarm h must be >= 1");
  if (residual_window < kMinAlarmResiduals) throw Error(ErrorCode::kDomainError, "alarm R must be >= 10");
}

AlarmReport check_alarm(std::span<const double> actual, std::span<const double> forecast, const AlarmConfig& config) {
  config.validate();
  if (actual.size() != forecast.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "actual and forecast lengths differ");
  }
  AlarmReport report;
  std::deque<double> in_control;
  double sum_sq = 0.0;
  std::size_t run = 0;
  for (std::size_t t = 0; t < actual.size(); ++t) {
    const double residual = actual[t] - forecast[t];
    bool exceeded = false;
    if (in_control.size() >= kMinAlarmResiduals) {
      ++report.hours_evaluated;
      const double sigma = std::sqrt(std::max(0.0, sum_sq) / static_cast<double>(in_control.size()));
      exceeded = std::abs(residual) > config.sigma_multiplier * sigma;
    }
    if (exceeded) {
      ++report.exceedances;
      if (++run == config.consecutive_hours) {
        report.alarms.push_back(t);
        if (!report.first_alarm) report.first_alarm = t;
        run = 0;
      }
      continue;
    }
    run = 0;
    in_control.push_back(residual);
    sum_sq += residual * residual;
    if (in_control.size() > config.residual_window) {
      sum_sq -= in_control.front() * in_control.front();
      in_control.pop_front();
    }
  }
  return report;
}

}  // namespace adlift
