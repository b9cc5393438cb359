#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oneshot/claims.hpp"
#include "oneshot/errors.hpp"
#include "oneshot/parallel.hpp"
#include "oneshot/regression.hpp"
#include "oneshot/rng.hpp"
#include "oneshot/simulator.hpp"

namespace oneshot {

enum class BootstrapKind { kClFactors, kRegression };

struct BootstrapMethod {
  BootstrapKind kind = BootstrapKind::kClFactors;
  ModelSpec spec;

  static BootstrapMethod cl_factors() { return {BootstrapKind::kClFactors, {}}; }

  /// Reported-claims factor recursion; the tiny floor only guards zero
  /// denominators in resamples.
  static BootstrapMethod rbns_cl() {
    ModelSpec spec;
    spec.variant = Variant::kWeightedFactor;
    spec.epsilon = 1e-8;
    return {BootstrapKind::kRegression, spec};
  }

  static BootstrapMethod regression(const ModelSpec& spec) {
    return {BootstrapKind::kRegression, spec};
  }
};

struct BootstrapOptions {
  bool stratified = false;  // one urn per accident period
  double max_failure_rate = 0.01;
  bool parallel = true;
  // Regression methods only: also push each replicate's per-claim ultimates
  // through the reporting-lag triangle and record the IBNR total.
  bool s_triangle_ibnr = false;
};

/// Replicate reserve totals and their dispersion. The standard deviation of
/// the totals is the estimation-error readout; process variance is not
/// resampled here.
struct BootstrapResult {
  std::vector<int> period_ids;  // i > I-J, ascending
  std::vector<std::vector<double>> replicate_period_reserves;  // [b][period]
  std::vector<double> replicate_totals;
  double mean = 0.0;
  double sd = 0.0;  // Est.Err.
  std::map<int, double> period_mean;
  std::map<int, double> period_sd;
  std::map<int, double> ind_rmse_mean;  // truth-based, empty without truth
  std::map<int, double> ind_rmse_sd;
  double point_total = 0.0;  // statistic on the original (unresampled) data
  std::map<int, double> point_by_period;
  double s_ibnr_mean = 0.0;  // set when s_triangle_ibnr is requested
  double s_ibnr_sd = 0.0;
  double point_s_ibnr = 0.0;
  std::size_t requested = 0;
  std::size_t failed = 0;
  std::uint64_t seed = 0;
};

/// Draws claims with replacement from the pooled upper-triangle claim set,
/// one urn over all accident periods; every drawn claim keeps its accident
/// period and history. Duplicate draws get a "#k" id suffix so claim ids
/// stay unique.
inline Portfolio resample_portfolio(const Portfolio& portfolio, Philox& rng) {
  if (portfolio.claims.empty()) {
    throw SchemaError("bootstrap: empty portfolio");
  }
  Portfolio out;
  out.periods = portfolio.periods;
  out.dev = portfolio.dev;
  out.has_lower_triangle = portfolio.has_lower_triangle;
  const std::size_t n = portfolio.claims.size();
  out.claims.reserve(n);
  for (std::size_t draw = 0; draw < n; ++draw) {
    const std::size_t pick = rng.uniform_index(n);
    ClaimHistory claim = portfolio.claims[pick];
    claim.claim_id += "#" + std::to_string(draw);
    out.claims.push_back(std::move(claim));
  }
  out.sort_claims();
  return out;
}

namespace bootstrap_detail {

struct ReplicateStats {
  std::vector<double> period_reserves;  // aligned with engine period ids
  double total = 0.0;
  std::vector<double> ind_rmse;  // empty without truth
  double s_ibnr_total = 0.0;
};

/// Shared per-portfolio precomputation plus the per-replicate recursion.
/// Everything the fitted factors are applied to (features, the latest
/// diagonal) is fixed; replicates only change the fitting weights.
class ReplicateEngine {
 public:
  ReplicateEngine(const Portfolio& portfolio, const BootstrapMethod& method,
                  const BootstrapOptions& options)
      : method_(method), options_(options) {
    if (portfolio.claims.empty()) {
      throw SchemaError("bootstrap: empty portfolio");
    }
    upper_ = portfolio.has_lower_triangle
                 ? censor(portfolio, portfolio.periods)
                 : portfolio;
    const int I = upper_.periods;
    const int J = upper_.dev;
    n_ = upper_.claims.size();

    if (portfolio.has_lower_triangle) {
      truth_.resize(n_);
      for (std::size_t k = 0; k < n_; ++k) {
        truth_[k] = portfolio.claims[k].paid_cum[static_cast<std::size_t>(J)];
      }
    }

    for (int i = I - J + 1; i <= I; ++i) period_ids_.push_back(i);

    period_.resize(n_);
    delay_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      period_[k] = upper_.claims[k].accident_period;
      delay_[k] = upper_.claims[k].reporting_delay;
    }

    const Triangle tri = aggregate(upper_);
    latest_.assign(static_cast<std::size_t>(I) + 1, 0.0);
    for (int i = 1; i <= I; ++i) latest_[static_cast<std::size_t>(i)] = tri.at(i, upper_.latest_dev(i));

    if (method_.kind == BootstrapKind::kRegression) {
      plan_ = DesignPlan::for_variant(upper_, method_.spec);
      const auto p = static_cast<Eigen::Index>(plan_.size());
      features_.resize(static_cast<std::size_t>(J));
      learn_sets_.resize(static_cast<std::size_t>(J));
      predict_sets_.resize(static_cast<std::size_t>(J));
      for (int s = 0; s < J; ++s) {
        auto& f = features_[static_cast<std::size_t>(s)];
        f = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), p);
        for (std::size_t k = 0; k < n_; ++k) {
          const auto& claim = upper_.claims[k];
          const int j = s + 1;  // recursion step j -> j-1 = s
          if (claim.reporting_delay <= s && claim.accident_period <= I - j) {
            learn_sets_[static_cast<std::size_t>(s)].push_back(k);
          }
          if (claim.reporting_delay <= s && claim.accident_period == I - s) {
            predict_sets_[static_cast<std::size_t>(s)].push_back(k);
          }
          if (claim.reporting_delay <= s) {
            plan_.fill_row(claim, s, method_.spec,
                           f.row(static_cast<Eigen::Index>(k)));
          }
        }
      }
      base_responses_.assign(n_, std::numeric_limits<double>::quiet_NaN());
      for (std::size_t k = 0; k < n_; ++k) {
        if (period_[k] <= I - J) {
          base_responses_[k] =
              upper_.claims[k].paid_cum[static_cast<std::size_t>(J)];
        }
      }
    } else {
      // Aggregate factor refits only need the raw payment rows.
      paid_.resize(n_);
      for (std::size_t k = 0; k < n_; ++k) paid_[k] = &upper_.claims[k].paid_cum;
    }

    if (options_.stratified) {
      period_claims_.resize(static_cast<std::size_t>(I) + 1);
      for (std::size_t k = 0; k < n_; ++k) {
        period_claims_[static_cast<std::size_t>(period_[k])].push_back(k);
      }
    }
  }

  const Portfolio& upper() const { return upper_; }
  const std::vector<int>& period_ids() const { return period_ids_; }
  bool has_truth() const { return !truth_.empty(); }
  std::size_t claim_count() const { return n_; }

  void draw_weights(Philox& rng, std::vector<std::uint32_t>& weights) const {
    weights.assign(n_, 0);
    if (options_.stratified) {
      for (const auto& members : period_claims_) {
        for (std::size_t d = 0; d < members.size(); ++d) {
          weights[members[rng.uniform_index(members.size())]] += 1;
        }
      }
    } else {
      for (std::size_t d = 0; d < n_; ++d) {
        weights[rng.uniform_index(n_)] += 1;
      }
    }
  }

  /// Runs one replicate; empty weights mean the identity (point estimate).
  ReplicateStats run(const std::vector<std::uint32_t>* weights) const {
    return method_.kind == BootstrapKind::kClFactors ? run_cl(weights)
                                                     : run_regression(weights);
  }

 private:
  double weight_of(const std::vector<std::uint32_t>* weights,
                   std::size_t k) const {
    return weights == nullptr ? 1.0
                              : static_cast<double>((*weights)[k]);
  }

  ReplicateStats run_cl(const std::vector<std::uint32_t>* weights) const {
    const int I = upper_.periods;
    const int J = upper_.dev;
    std::vector<double> f(static_cast<std::size_t>(J), 0.0);
    for (int j = 0; j < J; ++j) {
      double num = 0.0;
      double den = 0.0;
      for (std::size_t k = 0; k < n_; ++k) {
        if (period_[k] > I - (j + 1)) continue;
        const double w = weight_of(weights, k);
        if (w == 0.0) continue;
        num += w * (*paid_[k])[static_cast<std::size_t>(j + 1)];
        den += w * (*paid_[k])[static_cast<std::size_t>(j)];
      }
      if (!(den > 0.0)) {
        throw DegenerateError(
            "bootstrap: zero factor denominator at development index " +
            std::to_string(j));
      }
      f[static_cast<std::size_t>(j)] = num / den;
    }
    ReplicateStats stats;
    stats.period_reserves.reserve(period_ids_.size());
    for (const int i : period_ids_) {
      double ultimate = latest_[static_cast<std::size_t>(i)];
      for (int j = I - i; j < J; ++j) ultimate *= f[static_cast<std::size_t>(j)];
      const double reserve = ultimate - latest_[static_cast<std::size_t>(i)];
      stats.period_reserves.push_back(reserve);
      stats.total += reserve;
    }
    return stats;
  }

  ReplicateStats run_regression(const std::vector<std::uint32_t>* weights) const {
    const int I = upper_.periods;
    const int J = upper_.dev;
    const auto p = static_cast<Eigen::Index>(plan_.size());
    std::vector<double> resp = base_responses_;

    for (int j = J; j >= 1; --j) {
      const int s = j - 1;
      const auto& f = features_[static_cast<std::size_t>(s)];
      const auto& learn = learn_sets_[static_cast<std::size_t>(s)];
      double effective = 0.0;

      if (method_.spec.variant == Variant::kWeightedFactor) {
        double num = 0.0;
        double den = 0.0;
        for (const std::size_t k : learn) {
          const double w = weight_of(weights, k);
          if (w == 0.0) continue;
          effective += w;
          num += w * resp[k];
          den += w * std::max(f(static_cast<Eigen::Index>(k), 0),
                              method_.spec.epsilon);
        }
        if (!(den > 0.0) || effective == 0.0) {
          throw DegenerateError("bootstrap: empty or zero cohort at step " +
                                std::to_string(s));
        }
        const double factor = num / den;
        for (const std::size_t k : predict_sets_[static_cast<std::size_t>(s)]) {
          resp[k] = factor * f(static_cast<Eigen::Index>(k), 0);
        }
        continue;
      }

      Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
      Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
      for (const std::size_t k : learn) {
        const double w = weight_of(weights, k);
        if (w == 0.0) continue;
        effective += w;
        const auto row = f.row(static_cast<Eigen::Index>(k));
        xtx.noalias() += w * row.transpose() * row;
        xty.noalias() += w * resp[k] * row.transpose();
      }
      if (effective == 0.0) {
        throw DegenerateError("bootstrap: empty cohort at step " +
                              std::to_string(s));
      }
      const Eigen::VectorXd theta =
          ls_detail::solve_normal_pruned(xtx, xty).theta;
      for (const std::size_t k : predict_sets_[static_cast<std::size_t>(s)]) {
        resp[k] = f.row(static_cast<Eigen::Index>(k)).dot(theta);
      }
    }

    ReplicateStats stats;
    stats.period_reserves.assign(period_ids_.size(), 0.0);
    if (!truth_.empty()) stats.ind_rmse.assign(period_ids_.size(), 0.0);
    std::vector<std::size_t> counts(period_ids_.size(), 0);
    for (std::size_t k = 0; k < n_; ++k) {
      const int i = period_[k];
      if (i <= I - J || delay_[k] > I - i) continue;
      const std::size_t col = static_cast<std::size_t>(i - (I - J + 1));
      stats.period_reserves[col] += resp[k];
      if (!truth_.empty()) {
        const double err = resp[k] - truth_[k];
        stats.ind_rmse[col] += err * err;
      }
      counts[col] += 1;
    }
    for (std::size_t col = 0; col < period_ids_.size(); ++col) {
      const int i = period_ids_[col];
      stats.period_reserves[col] -= latest_[static_cast<std::size_t>(i)];
      stats.total += stats.period_reserves[col];
      if (!truth_.empty() && counts[col] > 0) {
        stats.ind_rmse[col] =
            std::sqrt(stats.ind_rmse[col] / static_cast<double>(counts[col]));
      }
    }
    if (options_.s_triangle_ibnr) {
      stats.s_ibnr_total = s_ibnr_from(resp, weights);
    }
    return stats;
  }

  /// Reporting-lag triangle of the (resampled) claims with the replicate's
  /// per-claim ultimates, grossed up with the one-shot recursion; returns the
  /// implied IBNR total. This treats the whole pipeline as the bootstrapped
  /// statistic, so the spread covers both the refit predictor and the
  /// resampled reporting-lag mix.
  double s_ibnr_from(const std::vector<double>& resp,
                     const std::vector<std::uint32_t>* weights) const {
    const int I = upper_.periods;
    const int J = upper_.dev;
    std::vector<double> cum(static_cast<std::size_t>(I) * (J + 1), 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      const int i = period_[k];
      const int lag = delay_[k];
      if (lag > I - i) continue;
      cum[static_cast<std::size_t>(i - 1) * (J + 1) + lag] +=
          weight_of(weights, k) * resp[k];
    }
    for (int i = 1; i <= I; ++i) {
      for (int j = 1; j <= std::min(J, I - i); ++j) {
        cum[static_cast<std::size_t>(i - 1) * (J + 1) + j] +=
            cum[static_cast<std::size_t>(i - 1) * (J + 1) + j - 1];
      }
    }
    auto at = [&](int i, int j) {
      return cum[static_cast<std::size_t>(i - 1) * (J + 1) + j];
    };
    std::vector<double> ult(static_cast<std::size_t>(I) + 1, 0.0);
    for (int i = 1; i <= I - J; ++i) ult[static_cast<std::size_t>(i)] = at(i, J);
    for (int j = J; j >= 1; --j) {
      double num = 0.0;
      double den = 0.0;
      for (int i = 1; i <= I - j; ++i) {
        num += ult[static_cast<std::size_t>(i)];
        den += at(i, j - 1);
      }
      if (!(den > 0.0)) {
        throw DegenerateError(
            "bootstrap: zero reporting-lag column in a replicate");
      }
      ult[static_cast<std::size_t>(I - (j - 1))] = at(I - (j - 1), j - 1) * (num / den);
    }
    double ibnr = 0.0;
    for (int i = I - J + 1; i <= I; ++i) {
      ibnr += ult[static_cast<std::size_t>(i)] - at(i, I - i);
    }
    return ibnr;
  }

  BootstrapMethod method_;
  BootstrapOptions options_;
  Portfolio upper_;
  std::size_t n_ = 0;
  std::vector<int> period_ids_;
  std::vector<int> period_;
  std::vector<int> delay_;
  std::vector<double> latest_;
  std::vector<double> truth_;
  // regression lane
  DesignPlan plan_;
  std::vector<Eigen::MatrixXd> features_;          // per step
  std::vector<std::vector<std::size_t>> learn_sets_;
  std::vector<std::vector<std::size_t>> predict_sets_;
  std::vector<double> base_responses_;
  // aggregate lane
  std::vector<const std::vector<double>*> paid_;
  // stratified draws
  std::vector<std::vector<std::size_t>> period_claims_;
};

}  // namespace bootstrap_detail

/// Refits the method on resampled upper triangles and applies each refit to
/// the original conditioning data; the spread of the resulting totals is the
/// estimation-error estimate. Replicates run in parallel on preassigned
/// slots, so parallel and serial runs agree bit-exactly.
inline BootstrapResult bootstrap_estimation_error(
    const Portfolio& portfolio, const BootstrapMethod& method, std::size_t B,
    std::uint64_t seed, const BootstrapOptions& options = {}) {
  if (B < 2) throw ConfigError("bootstrap: needs at least 2 replicates");
  bootstrap_detail::ReplicateEngine engine(portfolio, method, options);

  BootstrapResult out;
  out.requested = B;
  out.seed = seed;
  out.period_ids = engine.period_ids();

  if (options.s_triangle_ibnr && method.kind != BootstrapKind::kRegression) {
    throw ConfigError(
        "bootstrap: the reporting-lag statistic needs a per-claim method");
  }

  const auto point = engine.run(nullptr);
  out.point_total = point.total;
  out.point_s_ibnr = point.s_ibnr_total;
  for (std::size_t col = 0; col < out.period_ids.size(); ++col) {
    out.point_by_period[out.period_ids[col]] = point.period_reserves[col];
  }

  std::vector<std::optional<bootstrap_detail::ReplicateStats>> slots(B);
  auto one = [&](std::size_t b) {
    Philox rng(seed, b);
    std::vector<std::uint32_t> weights;
    engine.draw_weights(rng, weights);
    try {
      slots[b] = engine.run(&weights);
    } catch (const Error&) {
      slots[b] = std::nullopt;
    }
  };
  if (options.parallel) {
    parallel_for(B, one);
  } else {
    for (std::size_t b = 0; b < B; ++b) one(b);
  }

  const std::size_t cols = out.period_ids.size();
  std::vector<double> period_sum(cols, 0.0);
  std::vector<double> period_sq(cols, 0.0);
  std::vector<double> rmse_sum(cols, 0.0);
  std::vector<double> rmse_sq(cols, 0.0);
  double total_sum = 0.0;
  double total_sq = 0.0;
  double s_sum = 0.0;
  double s_sq = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (!slots[b]) {
      ++out.failed;
      continue;
    }
    const auto& stats = *slots[b];
    out.replicate_totals.push_back(stats.total);
    out.replicate_period_reserves.push_back(stats.period_reserves);
    total_sum += stats.total;
    total_sq += stats.total * stats.total;
    s_sum += stats.s_ibnr_total;
    s_sq += stats.s_ibnr_total * stats.s_ibnr_total;
    for (std::size_t col = 0; col < cols; ++col) {
      period_sum[col] += stats.period_reserves[col];
      period_sq[col] += stats.period_reserves[col] * stats.period_reserves[col];
      if (!stats.ind_rmse.empty()) {
        rmse_sum[col] += stats.ind_rmse[col];
        rmse_sq[col] += stats.ind_rmse[col] * stats.ind_rmse[col];
      }
    }
  }
  if (static_cast<double>(out.failed) >
      options.max_failure_rate * static_cast<double>(B)) {
    throw DegenerateError("bootstrap: " + std::to_string(out.failed) + " of " +
                          std::to_string(B) + " replicates failed");
  }
  const double m = static_cast<double>(out.replicate_totals.size());
  if (m < 2.0) throw DegenerateError("bootstrap: too few successful replicates");
  auto sdev = [m](double sum, double sq) {
    const double var = (sq - sum * sum / m) / (m - 1.0);
    return var > 0.0 ? std::sqrt(var) : 0.0;
  };
  out.mean = total_sum / m;
  out.sd = sdev(total_sum, total_sq);
  if (options.s_triangle_ibnr) {
    out.s_ibnr_mean = s_sum / m;
    out.s_ibnr_sd = sdev(s_sum, s_sq);
  }
  for (std::size_t col = 0; col < cols; ++col) {
    const int i = out.period_ids[col];
    out.period_mean[i] = period_sum[col] / m;
    out.period_sd[i] = sdev(period_sum[col], period_sq[col]);
    if (engine.has_truth()) {
      out.ind_rmse_mean[i] = rmse_sum[col] / m;
      out.ind_rmse_sd[i] = sdev(rmse_sum[col], rmse_sq[col]);
    }
  }
  return out;
}

}  // namespace oneshot
