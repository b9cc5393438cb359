#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oneshot/chain_ladder.hpp"
#include "oneshot/claims.hpp"
#include "oneshot/csv.hpp"
#include "oneshot/errors.hpp"
#include "oneshot/rbns.hpp"

namespace oneshot {

/// Predicted reported-claims ultimates cross-classified by accident period
/// and reporting lag: S_{i,j} totals the predicted ultimates of period-i
/// claims reported with lag exactly j, for i + j <= I. Stored incrementally
/// by lag; the chain-ladder step works on cumulated rows.
struct STriangle {
  int periods = 0;  // I
  int max_lag = 0;  // J
  std::vector<double> amounts;  // I x (J+1), row-major
  std::vector<long> counts;     // reported claim counts N_{i,j}
  bool has_negative_cells = false;

  double amount(int i, int j) const {
    return amounts[static_cast<std::size_t>(i - 1) * (max_lag + 1) + j];
  }
  long count(int i, int j) const {
    return counts[static_cast<std::size_t>(i - 1) * (max_lag + 1) + j];
  }
  /// Total predicted ultimate of the claims of period i reported by lag j.
  double row_sum(int i, int upto) const {
    double s = 0.0;
    for (int j = 0; j <= upto; ++j) s += amount(i, j);
    return s;
  }
};

inline STriangle build_s_triangle(
    const Portfolio& portfolio,
    const std::map<std::string, double>& per_claim_ultimates) {
  STriangle s;
  s.periods = portfolio.periods;
  s.max_lag = portfolio.dev;
  const std::size_t cells =
      static_cast<std::size_t>(s.periods) * (s.max_lag + 1);
  s.amounts.assign(cells, 0.0);
  s.counts.assign(cells, 0);
  for (const auto& claim : portfolio.claims) {
    const int i = claim.accident_period;
    const int lag = claim.reporting_delay;
    if (lag > portfolio.periods - i) continue;  // not reported yet
    const auto it = per_claim_ultimates.find(claim.claim_id);
    if (it == per_claim_ultimates.end()) {
      throw Error("s-triangle: missing ultimate for reported claim " +
                  claim.claim_id);
    }
    const std::size_t cell =
        static_cast<std::size_t>(i - 1) * (s.max_lag + 1) + lag;
    s.amounts[cell] += it->second;
    s.counts[cell] += 1;
    if (it->second < 0.0) s.has_negative_cells = true;
  }
  return s;
}

/// Cumulates the reporting-lag rows and grosses them up with the one-shot
/// chain ladder; the excess over the observed row sum is the IBNR amount.
inline std::map<int, double> predict_ibnr_from_s(const STriangle& s) {
  Triangle tri(s.periods, s.max_lag, false);
  for (int i = 1; i <= s.periods; ++i) {
    double cum = 0.0;
    const int upto = std::min(s.max_lag, s.periods - i);
    for (int j = 0; j <= upto; ++j) {
      cum += s.amount(i, j);
      tri.cell(i, j) = cum;
    }
  }
  const OneshotCl cl = predict_oneshot(tri);
  std::map<int, double> out;
  for (int i = 1; i <= s.periods; ++i) {
    const int upto = std::min(s.max_lag, s.periods - i);
    out[i] = cl.ultimates.at(i) - s.row_sum(i, upto);
  }
  return out;
}

/// Exports the incremental S-triangle (and claim counts) as CSV.
inline void write_s_triangle_csv(const STriangle& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("s-triangle: cannot write " + path);
  out << "accident_period,reporting_lag,amount,count\n";
  for (int i = 1; i <= s.periods; ++i) {
    for (int j = 0; j <= std::min(s.max_lag, s.periods - i); ++j) {
      out << i << ',' << j << ',' << detail::format_double(s.amount(i, j))
          << ',' << s.count(i, j) << '\n';
    }
  }
}

// -------------------------------------------------------------------------
// Combined reserve reporting
// -------------------------------------------------------------------------

struct ReserveRow {
  int period = 0;  // 0 marks the total row
  std::optional<double> true_oll;
  double rbns_reserve = 0.0;
  double ibnr_reserve = 0.0;
  double combined = 0.0;
  std::optional<double> error;  // combined - true OLL
};

struct ReserveReport {
  std::vector<ReserveRow> rows;  // per period, ascending
  ReserveRow total;
  bool truth_present = false;
  std::optional<double> rmsep;      // aggregate RMSEP when supplied
  std::optional<double> pct_rmsep;  // |total error| / rmsep
  std::vector<int> negative_ibnr_periods;
};

/// Joins the RBNS and IBNR pieces into the per-period reserve table; the
/// truth-based columns appear only when ground truth is supplied.
inline ReserveReport assemble_report(
    const Portfolio& portfolio, const RbnsPrediction& rbns_prediction,
    const std::map<int, double>& ibnr_by_period,
    const std::map<int, double>* true_oll_by_period = nullptr,
    std::optional<double> rmsep = std::nullopt) {
  ReserveReport report;
  report.truth_present = true_oll_by_period != nullptr;
  report.rmsep = rmsep;
  for (int i = 1; i <= portfolio.periods; ++i) {
    if (rbns_prediction.rbns_reserves_by_period.count(i) == 0 ||
        ibnr_by_period.count(i) == 0) {
      throw Error("report: period " + std::to_string(i) +
                  " missing from a component (geometry mismatch)");
    }
    ReserveRow row;
    row.period = i;
    row.rbns_reserve = rbns_prediction.rbns_reserves_by_period.at(i);
    row.ibnr_reserve = ibnr_by_period.at(i);
    row.combined = row.rbns_reserve + row.ibnr_reserve;
    if (row.ibnr_reserve < 0.0) report.negative_ibnr_periods.push_back(i);
    if (true_oll_by_period != nullptr) {
      const auto it = true_oll_by_period->find(i);
      if (it == true_oll_by_period->end()) {
        throw Error("report: ground truth missing period " + std::to_string(i));
      }
      row.true_oll = it->second;
      row.error = row.combined - it->second;
    }
    report.total.rbns_reserve += row.rbns_reserve;
    report.total.ibnr_reserve += row.ibnr_reserve;
    report.total.combined += row.combined;
    if (row.true_oll) {
      report.total.true_oll = report.total.true_oll.value_or(0.0) + *row.true_oll;
      report.total.error = report.total.error.value_or(0.0) + *row.error;
    }
    report.rows.push_back(row);
  }
  if (rmsep && report.total.error && *rmsep > 0.0) {
    report.pct_rmsep = std::abs(*report.total.error) / *rmsep;
  }
  return report;
}

inline void write_report_csv(const ReserveReport& report,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("report: cannot write " + path);
  out << "period,";
  if (report.truth_present) out << "true_oll,";
  out << "rbns_reserve,ibnr_reserve,combined";
  if (report.truth_present) out << ",error";
  out << '\n';
  auto emit = [&](const ReserveRow& row, const std::string& label) {
    out << label << ',';
    if (report.truth_present) {
      out << detail::format_double(row.true_oll.value_or(0.0)) << ',';
    }
    out << detail::format_double(row.rbns_reserve) << ','
        << detail::format_double(row.ibnr_reserve) << ','
        << detail::format_double(row.combined);
    if (report.truth_present) {
      out << ',' << detail::format_double(row.error.value_or(0.0));
    }
    out << '\n';
  };
  for (const auto& row : report.rows) emit(row, std::to_string(row.period));
  emit(report.total, "total");
}

inline nlohmann::json report_to_json(const ReserveReport& report) {
  nlohmann::json doc;
  doc["truth_columns_present"] = report.truth_present;
  doc["negative_ibnr_periods"] = report.negative_ibnr_periods;
  auto row_json = [&](const ReserveRow& row) {
    nlohmann::json j;
    j["period"] = row.period;
    j["rbns_reserve"] = row.rbns_reserve;
    j["ibnr_reserve"] = row.ibnr_reserve;
    j["combined"] = row.combined;
    if (row.true_oll) j["true_oll"] = *row.true_oll;
    if (row.error) j["error"] = *row.error;
    return j;
  };
  doc["periods"] = nlohmann::json::array();
  for (const auto& row : report.rows) doc["periods"].push_back(row_json(row));
  doc["total"] = row_json(report.total);
  if (report.rmsep) doc["rmsep"] = *report.rmsep;
  if (report.pct_rmsep) doc["pct_rmsep"] = *report.pct_rmsep;
  return doc;
}

}  // namespace oneshot
