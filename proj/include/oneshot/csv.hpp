#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "oneshot/claims.hpp"
#include "oneshot/errors.hpp"

namespace oneshot {

/// Column mapping for the long-format claims CSV. Columns not mapped here are
/// treated as static covariates.
struct CsvSchema {
  std::string claim_id = "claim_id";
  std::string accident_period = "accident_period";
  std::string reporting_delay = "reporting_delay";
  std::string dev_period = "dev_period";
  std::string paid_cum = "paid_cum";
  std::string status_open = "status_open";  // optional column
  std::string incurred = "incurred";        // optional column
};

struct LoadedPortfolio {
  Portfolio portfolio;
  std::size_t mask_overwrites = 0;  // nonzero cells forced to the mask value
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw SchemaError("csv: non-numeric value '" + s + "' in " + what);
  }
  return v;
}

inline long parse_long(const std::string& s, const std::string& what) {
  long v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw SchemaError("csv: non-integer value '" + s + "' in " + what);
  }
  return v;
}

/// Shortest representation that round-trips bit-exactly.
inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

struct RawRow {
  int dev = 0;
  double paid = 0.0;
  int status = 0;
  double incurred = 0.0;
  std::map<std::string, double> statics;
};

struct RawClaim {
  int accident_period = 0;
  int reporting_delay = 0;
  std::map<int, RawRow> rows;  // keyed by dev period
};

}  // namespace detail

/// Reads the canonical long-format CSV into a portfolio, enforcing the mask
/// convention. Rows beyond the evaluation diagonal are retained as ground
/// truth when every claim carries them.
inline LoadedPortfolio load_portfolio(const std::string& path,
                                      const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("csv: cannot open " + path);

  std::string header;
  if (!std::getline(in, header)) throw SchemaError("csv: empty file " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const auto cols = detail::split_csv_line(header);

  auto find_col = [&](const std::string& name) -> int {
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] == name) return static_cast<int>(k);
    }
    return -1;
  };
  const int c_id = find_col(schema.claim_id);
  const int c_period = find_col(schema.accident_period);
  const int c_delay = find_col(schema.reporting_delay);
  const int c_dev = find_col(schema.dev_period);
  const int c_paid = find_col(schema.paid_cum);
  if (c_id < 0 || c_period < 0 || c_delay < 0 || c_dev < 0 || c_paid < 0) {
    throw SchemaError("csv: missing required column in " + path +
                      " (need claim_id, accident_period, reporting_delay, "
                      "dev_period, paid_cum)");
  }
  const int c_status = find_col(schema.status_open);
  const int c_inc = find_col(schema.incurred);
  std::vector<std::pair<int, std::string>> static_cols;
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const int ik = static_cast<int>(k);
    if (ik == c_id || ik == c_period || ik == c_delay || ik == c_dev ||
        ik == c_paid || ik == c_status || ik == c_inc) {
      continue;
    }
    static_cols.emplace_back(ik, cols[k]);
  }

  std::map<std::string, detail::RawClaim> raw;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != cols.size()) {
      throw SchemaError("csv: row " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(cols.size()));
    }
    const std::string where = "row " + std::to_string(line_no);
    const std::string& id = fields[static_cast<std::size_t>(c_id)];
    auto& claim = raw[id];
    const long period = detail::parse_long(
        fields[static_cast<std::size_t>(c_period)], where);
    const long delay =
        detail::parse_long(fields[static_cast<std::size_t>(c_delay)], where);
    const long dev =
        detail::parse_long(fields[static_cast<std::size_t>(c_dev)], where);
    if (period < 1) throw SchemaError("csv: accident_period < 1 in " + where);
    if (delay < 0) throw SchemaError("csv: reporting_delay < 0 in " + where);
    if (dev < 0) throw SchemaError("csv: dev_period < 0 in " + where);
    if (claim.rows.empty()) {
      claim.accident_period = static_cast<int>(period);
      claim.reporting_delay = static_cast<int>(delay);
    } else if (claim.accident_period != period ||
               claim.reporting_delay != delay) {
      throw SchemaError("csv: claim " + id +
                        " has inconsistent accident_period/reporting_delay");
    }
    if (claim.rows.count(static_cast<int>(dev))) {
      throw SchemaError("csv: duplicate (claim_id, dev_period) for claim " +
                        id + " at dev " + std::to_string(dev));
    }
    detail::RawRow row;
    row.dev = static_cast<int>(dev);
    row.paid =
        detail::parse_double(fields[static_cast<std::size_t>(c_paid)], where);
    if (c_status >= 0) {
      row.status = static_cast<int>(detail::parse_long(
          fields[static_cast<std::size_t>(c_status)], where));
      if (row.status != 0 && row.status != 1) {
        throw SchemaError("csv: status_open must be 0/1 in " + where);
      }
    }
    if (c_inc >= 0) {
      row.incurred = detail::parse_double(
          fields[static_cast<std::size_t>(c_inc)], where);
    }
    for (const auto& [k, name] : static_cols) {
      row.statics[name] =
          detail::parse_double(fields[static_cast<std::size_t>(k)], where);
    }
    claim.rows.emplace(row.dev, std::move(row));
  }
  if (raw.empty()) throw SchemaError("csv: no data rows in " + path);

  int periods = 0;
  int dev = 0;
  for (const auto& [id, claim] : raw) {
    periods = std::max(periods, claim.accident_period);
    dev = std::max(dev, claim.rows.rbegin()->first);
  }
  if (dev >= periods) {
    throw SchemaError("csv: development horizon J=" + std::to_string(dev) +
                      " must be below the number of accident periods I=" +
                      std::to_string(periods));
  }

  // Each claim carries either exactly the censored rows 0..min(J, I-i) or the
  // full rows 0..J; anything else is ragged.
  bool any_full = false;
  bool any_censored = false;
  for (const auto& [id, claim] : raw) {
    const int upper = std::min(dev, periods - claim.accident_period);
    const int last = claim.rows.rbegin()->first;
    if (static_cast<int>(claim.rows.size()) != last + 1) {
      throw SchemaError("csv: claim " + id + " has gaps in dev_period");
    }
    if (last == dev) {
      if (upper < dev) any_full = true;
    } else if (last == upper) {
      any_censored = true;
    } else {
      throw SchemaError("csv: claim " + id +
                        " has inconsistent development extent (J=" +
                        std::to_string(dev) + ")");
    }
  }
  if (any_full && any_censored) {
    throw SchemaError("csv: mixed censored and ground-truth claims in " + path);
  }

  LoadedPortfolio out;
  out.portfolio.periods = periods;
  out.portfolio.dev = dev;
  out.portfolio.has_lower_triangle = !any_censored;
  const std::size_t len = static_cast<std::size_t>(dev) + 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto& [id, claim] : raw) {
    ClaimHistory h;
    h.claim_id = id;
    h.accident_period = claim.accident_period;
    h.reporting_delay = claim.reporting_delay;
    h.paid_cum.assign(len, nan);
    h.status_open.assign(len, -1);
    if (c_inc >= 0) h.incurred = std::vector<double>(len, nan);
    for (auto& [j, row] : claim.rows) {
      h.paid_cum[static_cast<std::size_t>(j)] = row.paid;
      h.status_open[static_cast<std::size_t>(j)] = row.status;
      if (h.incurred) (*h.incurred)[static_cast<std::size_t>(j)] = row.incurred;
    }
    // Statics come from reported rows; pre-reporting rows are masked.
    const detail::RawRow* source = &claim.rows.rbegin()->second;
    for (auto& [j, row] : claim.rows) {
      if (j >= claim.reporting_delay) {
        source = &row;
        break;
      }
    }
    h.static_covariates = source->statics;
    out.mask_overwrites += h.apply_mask();
    out.portfolio.claims.push_back(std::move(h));
  }
  out.portfolio.sort_claims();
  out.portfolio.validate();
  return out;
}

/// Writes the canonical long-format CSV: rows sorted by (claim_id, dev),
/// masked cells as zeros, censored portfolios emit observed rows only.
inline void write_portfolio(const std::string& path,
                            const Portfolio& portfolio) {
  std::ofstream outf(path);
  if (!outf) throw IoError("csv: cannot write " + path);

  const bool with_incurred =
      !portfolio.claims.empty() &&
      std::all_of(portfolio.claims.begin(), portfolio.claims.end(),
                  [](const ClaimHistory& c) { return c.incurred.has_value(); });
  for (const auto& c : portfolio.claims) {
    if (c.incurred.has_value() != with_incurred) {
      throw IoError("csv: claims disagree on incurred availability");
    }
  }
  std::set<std::string> static_names;
  for (const auto& c : portfolio.claims) {
    for (const auto& [k, v] : c.static_covariates) static_names.insert(k);
  }

  outf << "claim_id,accident_period,reporting_delay,dev_period,paid_cum,"
          "status_open";
  if (with_incurred) outf << ",incurred";
  for (const auto& name : static_names) outf << ',' << name;
  outf << '\n';

  for (const auto& c : portfolio.claims) {
    const int upto = portfolio.has_lower_triangle
                         ? portfolio.dev
                         : portfolio.latest_dev(c.accident_period);
    for (int j = 0; j <= upto; ++j) {
      const bool masked = j < c.reporting_delay;
      outf << c.claim_id << ',' << c.accident_period << ','
           << c.reporting_delay << ',' << j << ','
           << detail::format_double(c.paid_cum[static_cast<std::size_t>(j)])
           << ',' << c.status_open[static_cast<std::size_t>(j)];
      if (with_incurred) {
        outf << ','
             << detail::format_double(
                    (*c.incurred)[static_cast<std::size_t>(j)]);
      }
      for (const auto& name : static_names) {
        const auto it = c.static_covariates.find(name);
        const double v = it == c.static_covariates.end() ? 0.0 : it->second;
        outf << ',' << detail::format_double(masked ? 0.0 : v);
      }
      outf << '\n';
    }
  }
  if (!outf) throw IoError("csv: write failed for " + path);
}

}  // namespace oneshot
