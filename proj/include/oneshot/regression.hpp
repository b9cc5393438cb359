#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "oneshot/claims.hpp"
#include "oneshot/config.hpp"
#include "oneshot/errors.hpp"
#include "oneshot/rbns.hpp"

namespace oneshot {

enum class Variant {
  kWeightedFactor,  // scalar factor from the weighted square loss
  kLrPaid,          // [1, C]
  kLrPaidStatus,    // [1, C, O, C*O]
  kLrAllCov,        // payments, status and all static covariates
  kModelC,          // [1, C]
  kModelI,          // [1, Inc]
  kModelCo,         // [1, C, O, C*O]
  kModelIo,         // [1, Inc, O, Inc*O]
  kModelCio,        // [1, C, Inc, O, C*O, Inc*O]
};

inline Variant parse_variant(const std::string& name) {
  if (name == "weighted") return Variant::kWeightedFactor;
  if (name == "paid") return Variant::kLrPaid;
  if (name == "paid_status") return Variant::kLrPaidStatus;
  if (name == "all_cov") return Variant::kLrAllCov;
  if (name == "c") return Variant::kModelC;
  if (name == "i") return Variant::kModelI;
  if (name == "co") return Variant::kModelCo;
  if (name == "io") return Variant::kModelIo;
  if (name == "cio") return Variant::kModelCio;
  throw ConfigError("model: unknown variant '" + name + "'");
}

struct ModelSpec {
  Variant variant = Variant::kLrPaid;
  double epsilon = 1e-3;       // weighted-factor floor
  double censor_days = 365.0;  // reporting-delay covariate censoring
  std::string month_column = "accident_month";
  std::string delay_days_column = "reporting_delay_days";

  static ModelSpec from_config(const Config& cfg) {
    ModelSpec spec;
    spec.variant = parse_variant(cfg.get_string("variant", "paid"));
    spec.epsilon = cfg.get_double("epsilon", spec.epsilon);
    spec.censor_days = cfg.get_double("censor_days", spec.censor_days);
    spec.month_column = cfg.get_string("month_column", spec.month_column);
    spec.delay_days_column =
        cfg.get_string("delay_days_column", spec.delay_days_column);
    return spec;
  }

  void validate() const {
    if (variant == Variant::kWeightedFactor && !(epsilon > 0.0)) {
      throw ConfigError("model: weighted factor needs epsilon > 0");
    }
  }
};

/// One fitted recursion step: coefficients, their standard errors, and the
/// in-sample balance residual (sum of predictions minus sum of responses).
struct PtUFit {
  int step = 0;  // j-1
  std::vector<std::string> columns;
  std::vector<double> coefficients;  // zero for pruned columns
  std::vector<double> std_errors;
  std::vector<std::string> pruned_columns;
  bool has_intercept = false;
  double balance_residual = 0.0;
  double response_total = 0.0;
  double in_sample_mse = 0.0;
  std::size_t sample_size = 0;
};

struct Design {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd weights;  // resampling multiplicities; empty means all-one
  std::vector<std::string> columns;
  std::vector<std::string> row_ids;  // claim ids, row-aligned
  bool has_intercept = false;
};

// -------------------------------------------------------------------------
// Design construction
// -------------------------------------------------------------------------

namespace design_detail {

enum class ColumnKind {
  kIntercept,
  kPaid,
  kOpen,
  kPaidOpen,
  kIncurred,
  kIncurredOpen,
  kMonthDummy,
  kDelayCensored,
  kStaticRaw,
};

struct Column {
  ColumnKind kind;
  std::string name;
  int month_level = 0;      // for kMonthDummy
  std::string static_key;   // for kStaticRaw / kDelayCensored / kMonthDummy
};

}  // namespace design_detail

/// Column layout of the per-step regression design; fixed per portfolio and
/// model so fitting and prediction see identical features.
class DesignPlan {
 public:
  static DesignPlan for_variant(const Portfolio& portfolio,
                                const ModelSpec& spec) {
    using design_detail::Column;
    using design_detail::ColumnKind;
    DesignPlan plan;
    const bool needs_incurred = spec.variant == Variant::kModelI ||
                                spec.variant == Variant::kModelIo ||
                                spec.variant == Variant::kModelCio;
    if (needs_incurred) {
      for (const auto& claim : portfolio.claims) {
        if (!claim.incurred) {
          throw ConfigError(
              "model: variant requires incurred data, claim " + claim.claim_id +
              " has none");
        }
      }
    }
    auto intercept = [] { return Column{ColumnKind::kIntercept, "(intercept)", 0, ""}; };
    auto paid = [] { return Column{ColumnKind::kPaid, "paid", 0, ""}; };
    auto open = [] { return Column{ColumnKind::kOpen, "open", 0, ""}; };
    auto paid_open = [] { return Column{ColumnKind::kPaidOpen, "paid*open", 0, ""}; };
    auto inc = [] { return Column{ColumnKind::kIncurred, "incurred", 0, ""}; };
    auto inc_open = [] {
      return Column{ColumnKind::kIncurredOpen, "incurred*open", 0, ""};
    };
    switch (spec.variant) {
      case Variant::kWeightedFactor:
        plan.columns_ = {paid()};
        plan.has_intercept_ = false;
        return plan;
      case Variant::kLrPaid:
      case Variant::kModelC:
        plan.columns_ = {intercept(), paid()};
        break;
      case Variant::kLrPaidStatus:
      case Variant::kModelCo:
        plan.columns_ = {intercept(), paid(), open(), paid_open()};
        break;
      case Variant::kModelI:
        plan.columns_ = {intercept(), inc()};
        break;
      case Variant::kModelIo:
        plan.columns_ = {intercept(), inc(), open(), inc_open()};
        break;
      case Variant::kModelCio:
        plan.columns_ = {intercept(), paid(), inc(),
                         open(), paid_open(), inc_open()};
        break;
      case Variant::kLrAllCov: {
        plan.columns_ = {intercept(), paid(), paid_open(), open()};
        plan.append_statics(portfolio, spec, /*month_as_dummies=*/true);
        break;
      }
    }
    plan.has_intercept_ = true;
    return plan;
  }

  /// Network feature layout: payments, status and their interaction, the
  /// incurred analogue when present, and statics with the month continuous.
  static DesignPlan for_network(const Portfolio& portfolio,
                                const ModelSpec& spec) {
    using design_detail::Column;
    using design_detail::ColumnKind;
    DesignPlan plan;
    plan.has_intercept_ = false;
    plan.columns_ = {Column{ColumnKind::kPaid, "paid", 0, ""},
                     Column{ColumnKind::kOpen, "open", 0, ""},
                     Column{ColumnKind::kPaidOpen, "paid*open", 0, ""}};
    const bool all_incurred =
        !portfolio.claims.empty() &&
        std::all_of(portfolio.claims.begin(), portfolio.claims.end(),
                    [](const ClaimHistory& c) { return c.incurred.has_value(); });
    if (all_incurred) {
      plan.columns_.push_back(Column{ColumnKind::kIncurred, "incurred", 0, ""});
      plan.columns_.push_back(
          Column{ColumnKind::kIncurredOpen, "incurred*open", 0, ""});
    }
    plan.append_statics(portfolio, spec, /*month_as_dummies=*/false);
    return plan;
  }

  std::size_t size() const { return columns_.size(); }
  bool has_intercept() const { return has_intercept_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
  }

  /// Features of one claim at development index at_dev.
  void fill_row(
      const ClaimHistory& claim, int at_dev, const ModelSpec& spec,
      Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const {
    using design_detail::ColumnKind;
    const auto j = static_cast<std::size_t>(at_dev);
    const double paid = claim.paid_cum[j];
    const double open = claim.status_open[j] > 0 ? 1.0 : 0.0;
    const double incurred = claim.incurred ? (*claim.incurred)[j] : 0.0;
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      const auto& col = columns_[k];
      double v = 0.0;
      switch (col.kind) {
        case ColumnKind::kIntercept: v = 1.0; break;
        case ColumnKind::kPaid: v = paid; break;
        case ColumnKind::kOpen: v = open; break;
        case ColumnKind::kPaidOpen: v = paid * open; break;
        case ColumnKind::kIncurred: v = incurred; break;
        case ColumnKind::kIncurredOpen: v = incurred * open; break;
        case ColumnKind::kMonthDummy: {
          const auto it = claim.static_covariates.find(col.static_key);
          const int level =
              it == claim.static_covariates.end() ? 0 : static_cast<int>(it->second);
          v = level == col.month_level ? 1.0 : 0.0;
          break;
        }
        case ColumnKind::kDelayCensored: {
          const auto it = claim.static_covariates.find(col.static_key);
          const double days = it == claim.static_covariates.end() ? 0.0 : it->second;
          v = std::min(days, spec.censor_days);
          break;
        }
        case ColumnKind::kStaticRaw: {
          const auto it = claim.static_covariates.find(col.static_key);
          v = it == claim.static_covariates.end() ? 0.0 : it->second;
          break;
        }
      }
      row(static_cast<Eigen::Index>(k)) = v;
    }
  }

 private:
  void append_statics(const Portfolio& portfolio, const ModelSpec& spec,
                      bool month_as_dummies) {
    using design_detail::Column;
    using design_detail::ColumnKind;
    std::set<std::string> keys;
    for (const auto& claim : portfolio.claims) {
      for (const auto& [k, v] : claim.static_covariates) keys.insert(k);
    }
    for (const auto& key : keys) {
      if (key == spec.month_column) {
        if (month_as_dummies) {
          // Dummy coding: level 1 is the reference.
          for (int level = 2; level <= 12; ++level) {
            columns_.push_back(Column{ColumnKind::kMonthDummy,
                                      key + "=" + std::to_string(level), level,
                                      key});
          }
        } else {
          columns_.push_back(Column{ColumnKind::kStaticRaw, key, 0, key});
        }
      } else if (key == spec.delay_days_column) {
        columns_.push_back(
            Column{ColumnKind::kDelayCensored, key + "_cens", 0, key});
      } else {
        columns_.push_back(Column{ColumnKind::kStaticRaw, key, 0, key});
      }
    }
  }

  std::vector<design_detail::Column> columns_;
  bool has_intercept_ = false;
};

// -------------------------------------------------------------------------
// Fitting
// -------------------------------------------------------------------------

/// Closed-form minimizer of the weighted square loss: the ratio of response
/// totals to floored feature totals. The floor keeps zero payments inside
/// the sample without dividing by zero.
inline double fit_weighted_factor(std::span<const double> current,
                                  std::span<const double> next,
                                  double epsilon) {
  if (current.empty() || current.size() != next.size()) {
    throw DegenerateError("weighted factor: empty or mismatched sample");
  }
  if (!(epsilon > 0.0)) throw ConfigError("weighted factor: epsilon must be > 0");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < current.size(); ++k) {
    num += next[k];
    den += std::max(current[k], epsilon);
  }
  return num / den;
}

namespace ls_detail {

/// Cholesky on the normal matrix that skips pivots failing a relative
/// tolerance; the skipped coordinates are linearly dependent on earlier
/// columns and get zero coefficients.
struct PrunedSolve {
  Eigen::VectorXd theta;              // full length, zeros for pruned
  std::vector<Eigen::Index> active;   // surviving column indices
  Eigen::MatrixXd cov_active;         // inverse of the active normal matrix
};

inline PrunedSolve solve_normal_pruned(const Eigen::MatrixXd& a,
                                       const Eigen::VectorXd& b,
                                       bool want_cov = false) {
  const Eigen::Index p = a.rows();
  double max_diag = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) max_diag = std::max(max_diag, a(k, k));
  const double tol = std::max(max_diag * 1e-12, 1e-300);

  std::vector<char> in(static_cast<std::size_t>(p), 1);
  for (;;) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (in[static_cast<std::size_t>(k)]) active.push_back(k);
    }
    if (active.empty()) {
      throw DegenerateError("least squares: all columns degenerate");
    }
    const Eigen::Index m = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(m, m);
    Eigen::Index failing = -1;
    for (Eigen::Index k = 0; k < m && failing < 0; ++k) {
      double d = a(active[static_cast<std::size_t>(k)],
                   active[static_cast<std::size_t>(k)]);
      for (Eigen::Index t = 0; t < k; ++t) d -= l(k, t) * l(k, t);
      if (!(d > tol)) {
        failing = k;
        break;
      }
      l(k, k) = std::sqrt(d);
      for (Eigen::Index r = k + 1; r < m; ++r) {
        double v = a(active[static_cast<std::size_t>(r)],
                     active[static_cast<std::size_t>(k)]);
        for (Eigen::Index t = 0; t < k; ++t) v -= l(r, t) * l(k, t);
        l(r, k) = v / l(k, k);
      }
    }
    if (failing >= 0) {
      in[static_cast<std::size_t>(active[static_cast<std::size_t>(failing)])] = 0;
      continue;
    }
    auto forward_back = [&](const Eigen::VectorXd& rhs) {
      Eigen::VectorXd z(m);
      for (Eigen::Index k = 0; k < m; ++k) {
        double v = rhs(k);
        for (Eigen::Index t = 0; t < k; ++t) v -= l(k, t) * z(t);
        z(k) = v / l(k, k);
      }
      Eigen::VectorXd w(m);
      for (Eigen::Index k = m - 1; k >= 0; --k) {
        double v = z(k);
        for (Eigen::Index t = k + 1; t < m; ++t) v -= l(t, k) * w(t);
        w(k) = v / l(k, k);
      }
      return w;
    };
    Eigen::VectorXd b_active(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      b_active(k) = b(active[static_cast<std::size_t>(k)]);
    }
    PrunedSolve out;
    out.theta = Eigen::VectorXd::Zero(p);
    const Eigen::VectorXd w = forward_back(b_active);
    for (Eigen::Index k = 0; k < m; ++k) {
      out.theta(active[static_cast<std::size_t>(k)]) = w(k);
    }
    out.active = std::move(active);
    if (want_cov) {
      out.cov_active.resize(m, m);
      for (Eigen::Index c = 0; c < m; ++c) {
        out.cov_active.col(c) = forward_back(Eigen::VectorXd::Unit(m, c));
      }
    }
    return out;
  }
}

}  // namespace ls_detail

/// Ordinary least squares via the normal equations with a symmetric
/// positive-definite factorization. Constant and linearly dependent columns
/// are pruned (recorded in the fit) before solving; if nothing of full rank
/// remains the fit is singular.
inline PtUFit fit_least_squares(const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& y,
                                const std::vector<std::string>& columns,
                                bool has_intercept,
                                const Eigen::VectorXd& weights = {}) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n == 0) throw DegenerateError("least squares: empty sample");
  if (static_cast<std::size_t>(p) != columns.size()) {
    throw Error("least squares: column names do not match the design");
  }
  const bool weighted = weights.size() > 0;
  if (weighted && weights.size() != n) {
    throw Error("least squares: weight length mismatch");
  }

  PtUFit fit;
  fit.columns = columns;
  fit.coefficients.assign(columns.size(), 0.0);
  fit.std_errors.assign(columns.size(), 0.0);
  fit.has_intercept = has_intercept;

  // Constant columns (other than the intercept) carry no signal; a month
  // level absent from a cohort is the typical case.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < p; ++c) {
    const bool is_intercept =
        has_intercept && columns[static_cast<std::size_t>(c)] == "(intercept)";
    if (!is_intercept && n > 0) {
      const double first = X(0, c);
      bool constant = true;
      for (Eigen::Index r = 1; r < n; ++r) {
        if (X(r, c) != first) {
          constant = false;
          break;
        }
      }
      if (constant) {
        fit.pruned_columns.push_back(columns[static_cast<std::size_t>(c)]);
        continue;
      }
    }
    keep.push_back(c);
  }
  if (keep.empty()) {
    std::string names;
    for (const auto& c : columns) names += c + " ";
    throw DegenerateError("least squares: singular design, columns: " + names);
  }

  Eigen::MatrixXd Xk(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    Xk.col(static_cast<Eigen::Index>(k)) = X.col(keep[k]);
  }
  Eigen::MatrixXd normal;
  Eigen::VectorXd rhs;
  double weight_total = static_cast<double>(n);
  if (weighted) {
    normal = Xk.transpose() * weights.asDiagonal() * Xk;
    rhs = Xk.transpose() * (weights.asDiagonal() * y);
    weight_total = weights.sum();
  } else {
    normal = Xk.transpose() * Xk;
    rhs = Xk.transpose() * y;
  }

  const ls_detail::PrunedSolve solved =
      ls_detail::solve_normal_pruned(normal, rhs, /*want_cov=*/true);
  std::vector<char> surviving(keep.size(), 0);
  for (const auto k : solved.active) surviving[static_cast<std::size_t>(k)] = 1;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (!surviving[k]) {
      fit.pruned_columns.push_back(columns[static_cast<std::size_t>(keep[k])]);
    }
  }
  const Eigen::VectorXd theta = solved.theta;

  const Eigen::VectorXd fitted = Xk * theta;
  double rss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double w = weighted ? weights(r) : 1.0;
    const double e = y(r) - fitted(r);
    rss += w * e * e;
  }
  const double dof =
      weight_total - static_cast<double>(solved.active.size());
  const double sigma2 = dof > 0.0 ? rss / dof : 0.0;

  for (std::size_t k = 0; k < solved.active.size(); ++k) {
    const Eigen::Index col = keep[static_cast<std::size_t>(solved.active[k])];
    fit.coefficients[static_cast<std::size_t>(col)] =
        theta(solved.active[k]);
    const double var = sigma2 * solved.cov_active(static_cast<Eigen::Index>(k),
                                                  static_cast<Eigen::Index>(k));
    fit.std_errors[static_cast<std::size_t>(col)] =
        var > 0.0 ? std::sqrt(var) : 0.0;
  }

  if (weighted) {
    fit.sample_size = static_cast<std::size_t>(weights.sum() + 0.5);
    fit.response_total = (weights.array() * y.array()).sum();
    fit.balance_residual =
        (weights.array() * (Xk * theta).array()).sum() - fit.response_total;
    fit.in_sample_mse = rss / weights.sum();
  } else {
    fit.sample_size = static_cast<std::size_t>(n);
    fit.response_total = y.sum();
    fit.balance_residual = (Xk * theta).sum() - fit.response_total;
    fit.in_sample_mse = rss / static_cast<double>(n);
  }
  return fit;
}

/// A fitted per-step predictor plus its diagnostics.
struct FittedStep {
  std::function<double(const Eigen::RowVectorXd&)> predict;
  PtUFit info;
};

/// Least-squares step regressor; the weighted-factor variant falls back to
/// the closed-form ratio.
class LeastSquaresRegressor {
 public:
  explicit LeastSquaresRegressor(ModelSpec spec) : spec_(spec) {}

  FittedStep fit(int step, const Design& design) const {
    FittedStep out;
    if (spec_.variant == Variant::kWeightedFactor) {
      double num = 0.0;
      double den = 0.0;
      const bool weighted = design.weights.size() > 0;
      for (Eigen::Index r = 0; r < design.X.rows(); ++r) {
        const double w = weighted ? design.weights(r) : 1.0;
        num += w * design.y(r);
        den += w * std::max(design.X(r, 0), spec_.epsilon);
      }
      if (!(den > 0.0)) {
        throw DegenerateError("weighted factor: zero denominator at step " +
                              std::to_string(step));
      }
      const double factor = num / den;
      out.predict = [factor](const Eigen::RowVectorXd& row) {
        return factor * row(0);
      };
      out.info.step = step;
      out.info.columns = design.columns;
      out.info.coefficients = {factor};
      out.info.std_errors = {0.0};
      out.info.has_intercept = false;
      out.info.sample_size = static_cast<std::size_t>(design.X.rows());
      out.info.response_total = num;
      double pred_total = 0.0;
      double sq = 0.0;
      double count = 0.0;
      for (Eigen::Index r = 0; r < design.X.rows(); ++r) {
        const double w = weighted ? design.weights(r) : 1.0;
        const double pred = factor * design.X(r, 0);
        pred_total += w * pred;
        sq += w * (pred - design.y(r)) * (pred - design.y(r));
        count += w;
      }
      out.info.balance_residual = pred_total - num;
      out.info.in_sample_mse = count > 0.0 ? sq / count : 0.0;
      return out;
    }
    PtUFit fit = fit_least_squares(design.X, design.y, design.columns,
                                   design.has_intercept, design.weights);
    fit.step = step;
    Eigen::VectorXd theta(static_cast<Eigen::Index>(fit.coefficients.size()));
    for (std::size_t k = 0; k < fit.coefficients.size(); ++k) {
      theta(static_cast<Eigen::Index>(k)) = fit.coefficients[k];
    }
    out.predict = [theta](const Eigen::RowVectorXd& row) {
      return row * theta;
    };
    out.info = std::move(fit);
    return out;
  }

 private:
  ModelSpec spec_;
};

struct OneshotResult {
  RbnsPrediction prediction;
  std::vector<PtUFit> fits;  // recursion order: step J-1 down to 0
};

/// Generic recursive one-shot driver. Settled periods seed the responses,
/// each step fits on the cohort {T <= j-1, i <= I-j} and predicts the claims
/// of period I-(j-1) under the identical cohort restriction.
template <typename Regressor>
OneshotResult run_oneshot_with(const Portfolio& portfolio,
                               const ModelSpec& spec, const DesignPlan& plan,
                               Regressor&& regressor) {
  portfolio.validate();
  spec.validate();
  if (portfolio.claims.empty()) {
    throw SchemaError("one-shot: empty portfolio");
  }
  const int I = portfolio.periods;
  const int J = portfolio.dev;
  const std::size_t n = portfolio.claims.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<double> responses(n, nan);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& claim = portfolio.claims[k];
    if (claim.accident_period <= I - J) {
      responses[k] = claim.paid_cum[static_cast<std::size_t>(J)];
    }
  }

  OneshotResult out;
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(plan.size()));
  for (int j = J; j >= 1; --j) {
    const int step = j - 1;
    std::vector<std::size_t> learn;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& claim = portfolio.claims[k];
      if (claim.accident_period <= I - j && claim.reporting_delay <= step) {
        learn.push_back(k);
      }
    }
    if (learn.empty()) {
      throw DegenerateError("one-shot: empty learning sample at step " +
                            std::to_string(step));
    }
    Design design;
    design.columns = plan.names();
    design.has_intercept = plan.has_intercept();
    design.X.resize(static_cast<Eigen::Index>(learn.size()),
                    static_cast<Eigen::Index>(plan.size()));
    design.y.resize(static_cast<Eigen::Index>(learn.size()));
    design.row_ids.reserve(learn.size());
    for (std::size_t r = 0; r < learn.size(); ++r) {
      const auto& claim = portfolio.claims[learn[r]];
      if (claim.reporting_delay > step) {
        throw Error("one-shot: cohort gate violated in learning sample");
      }
      plan.fill_row(claim, step, spec, design.X.row(static_cast<Eigen::Index>(r)));
      design.y(static_cast<Eigen::Index>(r)) = responses[learn[r]];
      design.row_ids.push_back(claim.claim_id);
    }
    FittedStep fitted = regressor.fit(step, design);
    fitted.info.step = step;

    for (std::size_t k = 0; k < n; ++k) {
      const auto& claim = portfolio.claims[k];
      if (claim.accident_period != I - step || claim.reporting_delay > step) {
        continue;
      }
      plan.fill_row(claim, step, spec, row);
      responses[k] = fitted.predict(row);
    }
    out.fits.push_back(std::move(fitted.info));
  }

  for (std::size_t k = 0; k < n; ++k) {
    const auto& claim = portfolio.claims[k];
    if (claim.reporting_delay <= I - claim.accident_period) {
      out.prediction.per_claim_ultimates[claim.claim_id] = responses[k];
    }
  }
  detail::fill_rbns_reserves(portfolio, out.prediction);
  return out;
}

inline OneshotResult run_oneshot(const Portfolio& portfolio,
                                 const ModelSpec& spec) {
  const DesignPlan plan = DesignPlan::for_variant(portfolio, spec);
  return run_oneshot_with(portfolio, spec, plan, LeastSquaresRegressor(spec));
}

/// Root mean squared error of the per-claim ultimate predictions over the
/// reported claims of each accident period; needs the ground-truth square.
inline std::map<int, double> ind_rmse(
    const std::map<std::string, double>& per_claim_ultimates,
    const Portfolio& portfolio) {
  if (!portfolio.has_lower_triangle) {
    throw Error("ind_rmse: ground truth missing");
  }
  std::map<int, double> sums;
  std::map<int, std::size_t> counts;
  for (int i = 1; i <= portfolio.periods; ++i) {
    sums[i] = 0.0;
    counts[i] = 0;
  }
  for (const auto& claim : portfolio.claims) {
    const int i = claim.accident_period;
    if (claim.reporting_delay > portfolio.periods - i) continue;
    const auto it = per_claim_ultimates.find(claim.claim_id);
    if (it == per_claim_ultimates.end()) {
      throw Error("ind_rmse: missing prediction for claim " + claim.claim_id);
    }
    const double err =
        it->second - claim.paid_cum[static_cast<std::size_t>(portfolio.dev)];
    sums[i] += err * err;
    counts[i] += 1;
  }
  std::map<int, double> out;
  for (int i = 1; i <= portfolio.periods; ++i) {
    out[i] = counts[i] == 0 ? 0.0
                            : std::sqrt(sums[i] / static_cast<double>(counts[i]));
  }
  return out;
}

}  // namespace oneshot
