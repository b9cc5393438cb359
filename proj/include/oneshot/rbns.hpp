#pragma once

#include <map>
#include <string>
#include <vector>

#include "oneshot/chain_ladder.hpp"
#include "oneshot/claims.hpp"
#include "oneshot/errors.hpp"

namespace oneshot {

/// Per-claim ultimate predictions for reported claims, the factors behind
/// them, and the reserve split by accident period.
struct RbnsPrediction {
  std::map<std::string, double> per_claim_ultimates;  // claim_id -> C_{i,J|nu}
  std::vector<double> rbns_factors;  // F^RBNS_j, j = 0..J-1 (factor methods)
  std::map<int, double> rbns_reserves_by_period;
  std::map<int, double> ibnr_by_period;  // filled by ibnr_decompose
};

/// Sum of predicted ultimates over the claims reported by the evaluation
/// date, per accident period.
inline std::map<int, double> rbns_ultimate_totals(
    const Portfolio& portfolio, const RbnsPrediction& prediction) {
  std::map<int, double> out;
  for (int i = 1; i <= portfolio.periods; ++i) out[i] = 0.0;
  for (const auto& claim : portfolio.claims) {
    const int i = claim.accident_period;
    if (claim.reporting_delay > portfolio.periods - i) continue;  // not reported
    const auto it = prediction.per_claim_ultimates.find(claim.claim_id);
    if (it == prediction.per_claim_ultimates.end()) {
      throw Error("rbns: missing per-claim ultimate for " + claim.claim_id);
    }
    out[i] += it->second;
  }
  return out;
}

namespace detail {

inline void fill_rbns_reserves(const Portfolio& portfolio,
                               RbnsPrediction& prediction) {
  auto totals = rbns_ultimate_totals(portfolio, prediction);
  const Triangle tri = aggregate(portfolio);
  for (int i = 1; i <= portfolio.periods; ++i) {
    prediction.rbns_reserves_by_period[i] =
        totals[i] - tri.at(i, portfolio.latest_dev(i));
  }
}

}  // namespace detail

/// One-shot projection of reported claims only. Each recursion step uses the
/// same reporting cohort {T <= j-1} in the numerator and the denominator, so
/// the factors carry no margin for claims that are still unreported.
inline RbnsPrediction predict_rbns_cl(const Portfolio& portfolio) {
  portfolio.validate();
  const int I = portfolio.periods;
  const int J = portfolio.dev;
  RbnsPrediction out;
  out.rbns_factors.assign(static_cast<std::size_t>(J), 0.0);

  // Settled periods start from their observed ultimates.
  for (const auto& claim : portfolio.claims) {
    if (claim.accident_period <= I - J) {
      out.per_claim_ultimates[claim.claim_id] =
          claim.paid_cum[static_cast<std::size_t>(J)];
    }
  }

  for (int j = J; j >= 1; --j) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& claim : portfolio.claims) {
      const int i = claim.accident_period;
      if (i > I - j || claim.reporting_delay > j - 1) continue;
      num += out.per_claim_ultimates.at(claim.claim_id);
      den += claim.paid_cum[static_cast<std::size_t>(j - 1)];
    }
    if (!(den > 0.0)) {
      throw DegenerateError(
          "rbns: nonpositive cohort payment sum at recursion step " +
          std::to_string(j - 1));
    }
    const double factor = num / den;
    out.rbns_factors[static_cast<std::size_t>(j - 1)] = factor;
    for (const auto& claim : portfolio.claims) {
      if (claim.accident_period != I - (j - 1) ||
          claim.reporting_delay > j - 1) {
        continue;
      }
      out.per_claim_ultimates[claim.claim_id] =
          claim.paid_cum[static_cast<std::size_t>(j - 1)] * factor;
    }
  }

  detail::fill_rbns_reserves(portfolio, out);
  return out;
}

/// IBNR as the difference between the aggregate chain-ladder ultimate and the
/// reported-claims ultimate total. The explicit reporting-lag recursion gives
/// the identical value but is much more cumbersome to track.
inline std::map<int, double> ibnr_decompose(
    const Portfolio& portfolio, const RbnsPrediction& rbns_prediction,
    const std::map<int, double>& cl_ultimates) {
  const auto totals = rbns_ultimate_totals(portfolio, rbns_prediction);
  std::map<int, double> out;
  for (int i = 1; i <= portfolio.periods; ++i) {
    if (i <= portfolio.periods - portfolio.dev) {
      out[i] = 0.0;
      continue;
    }
    out[i] = cl_ultimates.at(i) - totals.at(i);
  }
  return out;
}

}  // namespace oneshot
