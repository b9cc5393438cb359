#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "oneshot/claims.hpp"
#include "oneshot/errors.hpp"

namespace oneshot {

/// Development factors f_j, projection-to-ultimate factors F_j = prod_{l>=j}
/// f_l, and the variance parameters entering the prediction uncertainty.
struct ClFactors {
  std::vector<double> f;       // j = 0..J-1
  std::vector<double> ptu;     // F_j, j = 0..J-1
  std::vector<double> sigma2;  // j = 0..J-1
};

struct MackResult {
  std::map<int, double> ultimates;            // i -> predicted C_{i,J}
  std::map<int, double> reserves_by_period;   // i -> ultimate - latest
  std::map<int, double> latest_by_period;     // i -> C_{i,I-i}
  std::map<int, double> process_sd_by_period;
  std::map<int, double> estimation_sd_by_period;
  std::map<int, double> rmsep_by_period;
  double total_reserve = 0.0;
  double process_sd = 0.0;
  double estimation_sd = 0.0;  // includes cross-period covariance terms
  double rmsep = 0.0;
};

/// Development factor estimates f_j = sum_i C_{i,j+1} / sum_i C_{i,j} over
/// the rows observed in both columns, with the usual variance estimators.
inline ClFactors fit_cl_factors(const Triangle& tri) {
  const int I = tri.periods();
  const int J = tri.dev();
  ClFactors out;
  out.f.resize(static_cast<std::size_t>(J));
  out.ptu.resize(static_cast<std::size_t>(J));
  out.sigma2.assign(static_cast<std::size_t>(J), 0.0);

  for (int j = 0; j < J; ++j) {
    double num = 0.0;
    double den = 0.0;
    for (int i = 1; i <= I - (j + 1); ++i) {
      num += tri.at(i, j + 1);
      den += tri.at(i, j);
    }
    if (!(den > 0.0)) {
      throw DegenerateError(
          "chain ladder: nonpositive column sum in denominator at development "
          "index " +
          std::to_string(j));
    }
    out.f[static_cast<std::size_t>(j)] = num / den;
  }

  double acc = 1.0;
  for (int j = J - 1; j >= 0; --j) {
    acc *= out.f[static_cast<std::size_t>(j)];
    out.ptu[static_cast<std::size_t>(j)] = acc;
  }

  // sigma^2_j = (I-j-2)^{-1} sum_i C_{i,j} (C_{i,j+1}/C_{i,j} - f_j)^2 for
  // j <= J-2; the last one uses the standard log-linear extrapolation.
  for (int j = 0; j + 2 <= J; ++j) {
    const int rows = I - (j + 1);
    if (rows < 2) {
      throw DegenerateError(
          "chain ladder: too few accident periods to estimate the variance "
          "parameter at development index " +
          std::to_string(j));
    }
    double s = 0.0;
    for (int i = 1; i <= rows; ++i) {
      const double c = tri.at(i, j);
      const double ratio = tri.at(i, j + 1) / c;
      const double d = ratio - out.f[static_cast<std::size_t>(j)];
      s += c * d * d;
    }
    out.sigma2[static_cast<std::size_t>(j)] = s / (rows - 1);
  }
  if (J >= 2) {
    const double s2a = out.sigma2[static_cast<std::size_t>(J - 2)];
    if (J >= 3) {
      const double s2b = out.sigma2[static_cast<std::size_t>(J - 3)];
      const double extrapolated = s2b > 0.0 ? s2a * s2a / s2b : 0.0;
      out.sigma2[static_cast<std::size_t>(J - 1)] =
          std::min(extrapolated, std::min(s2b, s2a));
    } else {
      // J == 2 leaves no third point to extrapolate from.
      out.sigma2[static_cast<std::size_t>(J - 1)] = s2a;
    }
  }
  return out;
}

/// Classic roll-forward predictors: the latest diagonal developed one period
/// at a time. Fully settled periods return the observed ultimate.
inline std::map<int, double> predict_rollforward(const Triangle& tri,
                                                 const ClFactors& factors) {
  const int I = tri.periods();
  const int J = tri.dev();
  std::map<int, double> out;
  for (int i = 1; i <= I; ++i) {
    if (i <= I - J) {
      out[i] = tri.at(i, J);
      continue;
    }
    double value = tri.at(i, I - i);
    for (int j = I - i; j < J; ++j) value *= factors.f[static_cast<std::size_t>(j)];
    out[i] = value;
  }
  return out;
}

struct OneshotCl {
  std::map<int, double> ultimates;
  std::vector<double> ptu;  // directly estimated F_j, j = 0..J-1
};

/// Recursive one-shot prediction: F_{j-1} is estimated in a single step from
/// already-completed ultimates, then grosses up the next diagonal entry.
inline OneshotCl predict_oneshot(const Triangle& tri) {
  const int I = tri.periods();
  const int J = tri.dev();
  OneshotCl out;
  out.ptu.assign(static_cast<std::size_t>(J), 0.0);
  for (int i = 1; i <= I - J; ++i) out.ultimates[i] = tri.at(i, J);
  for (int j = J; j >= 1; --j) {
    double num = 0.0;
    double den = 0.0;
    for (int i = 1; i <= I - j; ++i) {
      num += out.ultimates.at(i);
      den += tri.at(i, j - 1);
    }
    if (!(den > 0.0)) {
      throw DegenerateError(
          "chain ladder: nonpositive column sum in one-shot step at "
          "development index " +
          std::to_string(j - 1));
    }
    const double ptu = num / den;
    out.ptu[static_cast<std::size_t>(j - 1)] = ptu;
    out.ultimates[I - (j - 1)] = tri.at(I - (j - 1), j - 1) * ptu;
  }
  return out;
}

/// Total forecast error sum_i (predicted - true) over the periods that still
/// develop; settled periods cancel exactly.
inline double forecast_error(const std::map<int, double>& ultimates_hat,
                             const std::map<int, double>& ultimates_true) {
  double err = 0.0;
  for (const auto& [i, hat] : ultimates_hat) {
    const auto it = ultimates_true.find(i);
    if (it == ultimates_true.end()) {
      throw Error("forecast_error: ground truth missing for period " +
                  std::to_string(i));
    }
    err += hat - it->second;
  }
  return err;
}

/// Conditional mean squared error of prediction for the chain ladder, split
/// into process uncertainty and estimation error, with the cross-period
/// covariance terms included in the aggregate estimation error.
inline MackResult mack_msep(const Triangle& tri, const ClFactors& factors) {
  const int I = tri.periods();
  const int J = tri.dev();
  // Every sigma2_j with j <= J-2 needs at least two observed ratios.
  if (J < 2 || I < J + 1) {
    throw DegenerateError(
        "mack: too few accident or development periods to estimate the "
        "variance parameters");
  }

  // Column sums of the factor denominators.
  std::vector<double> col_sum(static_cast<std::size_t>(J), 0.0);
  for (int j = 0; j < J; ++j) {
    for (int i = 1; i <= I - (j + 1); ++i) {
      col_sum[static_cast<std::size_t>(j)] += tri.at(i, j);
    }
  }

  MackResult out;
  double total_process_var = 0.0;
  double total_est_var = 0.0;

  std::vector<double> ultimates(static_cast<std::size_t>(I + 1), 0.0);
  for (int i = 1; i <= I; ++i) {
    const int latest = tri.latest_dev(i);
    const double latest_value = tri.at(i, latest);
    out.latest_by_period[i] = latest_value;
    // Roll the diagonal forward, tracking the intermediate predicted cells.
    std::vector<double> path(static_cast<std::size_t>(J + 1), 0.0);
    path[static_cast<std::size_t>(latest)] = latest_value;
    for (int j = latest; j < J; ++j) {
      path[static_cast<std::size_t>(j + 1)] =
          path[static_cast<std::size_t>(j)] * factors.f[static_cast<std::size_t>(j)];
    }
    const double ultimate = path[static_cast<std::size_t>(J)];
    ultimates[static_cast<std::size_t>(i)] = ultimate;
    out.ultimates[i] = ultimate;
    out.reserves_by_period[i] = ultimate - latest_value;
    out.total_reserve += ultimate - latest_value;

    double process_var = 0.0;
    double est_var = 0.0;
    for (int j = latest; j < J; ++j) {
      const double f = factors.f[static_cast<std::size_t>(j)];
      const double s2 = factors.sigma2[static_cast<std::size_t>(j)];
      const double c_hat = path[static_cast<std::size_t>(j)];
      const double term = s2 / (f * f);
      if (c_hat > 0.0) process_var += ultimate * ultimate * term / c_hat;
      est_var +=
          ultimate * ultimate * term / col_sum[static_cast<std::size_t>(j)];
    }
    out.process_sd_by_period[i] = std::sqrt(process_var);
    out.estimation_sd_by_period[i] = std::sqrt(est_var);
    out.rmsep_by_period[i] = std::sqrt(process_var + est_var);
    total_process_var += process_var;
    total_est_var += est_var;
  }

  // Cross-period estimation covariance: predictions of different periods
  // share the same estimated factors.
  for (int i = I - J + 1; i <= I; ++i) {
    double later = 0.0;
    for (int k = i + 1; k <= I; ++k) later += ultimates[static_cast<std::size_t>(k)];
    if (later == 0.0) continue;
    double shared = 0.0;
    for (int j = I - i; j < J; ++j) {
      const double f = factors.f[static_cast<std::size_t>(j)];
      const double s2 = factors.sigma2[static_cast<std::size_t>(j)];
      shared += s2 / (f * f) / col_sum[static_cast<std::size_t>(j)];
    }
    total_est_var += 2.0 * ultimates[static_cast<std::size_t>(i)] * later * shared;
  }

  out.process_sd = std::sqrt(total_process_var);
  out.estimation_sd = std::sqrt(total_est_var);
  out.rmsep = std::sqrt(total_process_var + total_est_var);
  return out;
}

}  // namespace oneshot
