#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oneshot/errors.hpp"

namespace oneshot {

/// One claim's development path over settlement delays j = 0..J.
///
/// All pre-reporting periods (j < reporting_delay) are masked to zero: the
/// insurer has no information about a claim before it is notified. Cells
/// beyond the evaluation diagonal are NaN in censored portfolios.
struct ClaimHistory {
  std::string claim_id;
  int accident_period = 1;  // i, 1-based
  int reporting_delay = 0;  // T, in period units
  std::vector<double> paid_cum;    // cumulative payments, length J+1
  std::vector<int> status_open;    // 1 = open, 0 = closed/masked, -1 = unobserved
  std::optional<std::vector<double>> incurred;  // adjuster estimates
  std::map<std::string, double> static_covariates;

  int max_dev() const { return static_cast<int>(paid_cum.size()) - 1; }

  /// Forces the mask convention (zeros before reporting). Returns the number
  /// of nonzero cells that had to be overwritten.
  std::size_t apply_mask() {
    std::size_t overwritten = 0;
    const int upto = std::min<int>(reporting_delay, max_dev() + 1);
    for (int j = 0; j < upto; ++j) {
      if (paid_cum[j] != 0.0 && !std::isnan(paid_cum[j])) ++overwritten;
      paid_cum[j] = 0.0;
      if (status_open[j] > 0) ++overwritten;
      status_open[j] = 0;
      if (incurred) {
        auto& inc = *incurred;
        if (inc[j] != 0.0 && !std::isnan(inc[j])) ++overwritten;
        inc[j] = 0.0;
      }
    }
    return overwritten;
  }
};

/// Cumulative payments aggregated over claims, rows i = 1..I, columns
/// j = 0..J. Cells with i + j > I are readable only for full squares.
class Triangle {
 public:
  Triangle() = default;
  Triangle(int periods, int dev, bool full_square)
      : periods_(periods),
        dev_(dev),
        full_square_(full_square),
        cells_(static_cast<std::size_t>(periods) * (dev + 1),
               std::numeric_limits<double>::quiet_NaN()) {
    if (periods < 1 || dev < 0) throw ConfigError("triangle: bad geometry");
  }

  /// Builds from per-row values; ragged rows give an upper triangle, full
  /// rows a square.
  static Triangle from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ConfigError("triangle: no rows");
    const int periods = static_cast<int>(rows.size());
    const int dev = static_cast<int>(rows.front().size()) - 1;
    bool full = true;
    for (int i = 1; i <= periods; ++i) {
      const auto& row = rows[static_cast<std::size_t>(i - 1)];
      const int expect_upper = std::min(dev, periods - i);
      if (static_cast<int>(row.size()) != dev + 1) full = false;
      if (static_cast<int>(row.size()) != expect_upper + 1 &&
          static_cast<int>(row.size()) != dev + 1) {
        throw ConfigError("triangle: ragged row " + std::to_string(i));
      }
    }
    Triangle t(periods, dev, full);
    for (int i = 1; i <= periods; ++i) {
      const auto& row = rows[static_cast<std::size_t>(i - 1)];
      for (std::size_t j = 0; j < row.size(); ++j) {
        t.cells_[t.index(i, static_cast<int>(j))] = row[j];
      }
    }
    return t;
  }

  int periods() const { return periods_; }
  int dev() const { return dev_; }
  bool full_square() const { return full_square_; }
  bool observed(int i, int j) const { return full_square_ || i + j <= periods_; }

  double at(int i, int j) const {
    check_range(i, j);
    if (!observed(i, j)) {
      throw Error("triangle: cell (" + std::to_string(i) + "," +
                  std::to_string(j) + ") lies beyond the evaluation date");
    }
    return cells_[index(i, j)];
  }

  double& cell(int i, int j) {
    check_range(i, j);
    return cells_[index(i, j)];
  }

  /// Latest observed development index of accident period i.
  int latest_dev(int i) const { return std::min(dev_, periods_ - i); }

 private:
  void check_range(int i, int j) const {
    if (i < 1 || i > periods_ || j < 0 || j > dev_) {
      throw Error("triangle: index (" + std::to_string(i) + "," +
                  std::to_string(j) + ") out of range");
    }
  }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i - 1) * (dev_ + 1) + j;
  }

  int periods_ = 0;
  int dev_ = 0;
  bool full_square_ = false;
  std::vector<double> cells_;
};

/// A collection of claim histories censored at the evaluation date I.
struct Portfolio {
  std::vector<ClaimHistory> claims;  // sorted by claim_id
  int periods = 0;  // I, accident periods 1..I
  int dev = 0;      // J, maximal development delay, J < I
  bool has_lower_triangle = false;

  int evaluation_date() const { return periods; }

  /// Latest observed development index of accident period i.
  int latest_dev(int i) const { return std::min(dev, periods - i); }

  void validate() const {
    if (dev >= periods) throw SchemaError("portfolio: requires J < I");
    for (const auto& c : claims) {
      if (c.accident_period < 1 || c.accident_period > periods) {
        throw SchemaError("portfolio: claim " + c.claim_id +
                          " has accident period out of range");
      }
      if (c.reporting_delay < 0) {
        throw SchemaError("portfolio: claim " + c.claim_id +
                          " has negative reporting delay");
      }
      const std::size_t len = static_cast<std::size_t>(dev) + 1;
      if (c.paid_cum.size() != len || c.status_open.size() != len ||
          (c.incurred && c.incurred->size() != len)) {
        throw SchemaError("portfolio: claim " + c.claim_id +
                          " has inconsistent history length");
      }
    }
  }

  void sort_claims() {
    std::sort(claims.begin(), claims.end(),
              [](const ClaimHistory& a, const ClaimHistory& b) {
                return a.claim_id < b.claim_id;
              });
  }

  /// Guarded read of a payment cell; unobserved cells are an error unless
  /// the ground-truth lower triangle is present.
  double paid_at(const ClaimHistory& claim, int j) const {
    if (!has_lower_triangle && claim.accident_period + j > periods) {
      throw Error("portfolio: payment of claim " + claim.claim_id +
                  " at delay " + std::to_string(j) +
                  " lies beyond the evaluation date");
    }
    return claim.paid_cum[static_cast<std::size_t>(j)];
  }
};

/// Sums individual cumulative payments into the aggregate triangle. Masked
/// (pre-reporting) cells contribute zero by construction.
inline Triangle aggregate(const Portfolio& portfolio, bool full = false) {
  if (portfolio.claims.empty()) throw SchemaError("aggregate: empty portfolio");
  if (full && !portfolio.has_lower_triangle) {
    throw Error("aggregate: ground truth beyond the evaluation date missing");
  }
  Triangle tri(portfolio.periods, portfolio.dev, full);
  for (int i = 1; i <= portfolio.periods; ++i) {
    const int upto = full ? portfolio.dev : portfolio.latest_dev(i);
    for (int j = 0; j <= upto; ++j) tri.cell(i, j) = 0.0;
  }
  for (const auto& claim : portfolio.claims) {
    const int i = claim.accident_period;
    const int upto = full ? portfolio.dev : portfolio.latest_dev(i);
    for (int j = 0; j <= upto; ++j) {
      tri.cell(i, j) += claim.paid_cum[static_cast<std::size_t>(j)];
    }
  }
  return tri;
}

/// Claims of accident period i reported by development index j
/// (reporting_delay <= j), in claim_id order.
inline std::vector<const ClaimHistory*> rbns_cohort(const Portfolio& portfolio,
                                                    int i, int j) {
  if (i < 1 || i > portfolio.periods || j < 0 || j > portfolio.dev) {
    throw Error("rbns_cohort: index out of range");
  }
  std::vector<const ClaimHistory*> cohort;
  for (const auto& claim : portfolio.claims) {
    if (claim.accident_period == i && claim.reporting_delay <= j) {
      cohort.push_back(&claim);
    }
  }
  return cohort;
}

/// True ultimate claims per accident period; needs the full square.
inline std::map<int, double> true_ultimates(const Portfolio& portfolio) {
  if (!portfolio.has_lower_triangle) {
    throw Error("true_ultimates: ground truth missing");
  }
  std::map<int, double> out;
  for (int i = 1; i <= portfolio.periods; ++i) out[i] = 0.0;
  for (const auto& claim : portfolio.claims) {
    out[claim.accident_period] +=
        claim.paid_cum[static_cast<std::size_t>(portfolio.dev)];
  }
  return out;
}

/// True outstanding loss liabilities OLL_i = C_{i,J} - C_{i,I-i}.
inline std::map<int, double> true_oll(const Portfolio& portfolio) {
  auto ult = true_ultimates(portfolio);
  for (const auto& claim : portfolio.claims) {
    const int i = claim.accident_period;
    ult[i] -= claim.paid_cum[static_cast<std::size_t>(portfolio.latest_dev(i))];
  }
  return ult;
}

}  // namespace oneshot
