#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "oneshot/claims.hpp"
#include "oneshot/config.hpp"
#include "oneshot/errors.hpp"
#include "oneshot/parallel.hpp"
#include "oneshot/rng.hpp"

namespace oneshot {

/// Synthetic individual-claims generator. Claims develop multiplicatively
/// while open and freeze when closed; adjuster estimates are noisy views of
/// the true ultimate that sharpen with settlement delay. Development is
/// stationary across accident periods, so aggregate chain-ladder assumptions
/// hold under the defaults.
struct SimConfig {
  int periods = 6;  // I
  int dev = 4;      // J
  double claims_per_period = 200.0;          // Poisson mean per period
  std::vector<double> delay_probs;           // reporting lags 0..J
  double severity_mu = 0.0;                  // lognormal initial payment
  double severity_sigma = 1.0;
  double line_effect = 0.25;                 // severity bump for line = 1
  double line_growth_effect = 0.0;           // growth bump for line = 1
  std::vector<double> dev_factors;           // open-claim growth g_j, j<J
  double dev_noise_sd = 0.3;                 // noise on the growth multiplier
  double p_zero_initial = 0.1;               // first payment lags one period
  std::vector<double> close_hazard;          // closing prob per lag, j<J
  double incurred_noise = 0.4;               // adjuster noise at lag 0
  bool with_incurred = true;
  bool late_developer_scenario = false;      // inject two exploding claims
  std::uint64_t seed = 1;

  static SimConfig defaults() {
    SimConfig c;
    c.delay_probs = {0.60, 0.25, 0.10, 0.04, 0.01};
    c.dev_factors = {0.45, 0.25, 0.12, 0.06};
    c.close_hazard = {0.40, 0.45, 0.50, 0.55};
    return c;
  }

  static SimConfig from_config(const Config& cfg) {
    SimConfig c = defaults();
    c.periods = static_cast<int>(cfg.get_long("periods", c.periods));
    c.dev = static_cast<int>(cfg.get_long("dev", c.dev));
    c.claims_per_period =
        cfg.get_double("claims_per_period", c.claims_per_period);
    if (c.dev != 4) {
      // Defaults are sized for J = 4; other horizons must be given lists.
      c.delay_probs.clear();
      c.dev_factors.clear();
      c.close_hazard.clear();
    }
    c.delay_probs = cfg.get_list("delay_probs", c.delay_probs);
    c.dev_factors = cfg.get_list("dev_factors", c.dev_factors);
    c.close_hazard = cfg.get_list("close_hazard", c.close_hazard);
    c.severity_mu = cfg.get_double("severity_mu", c.severity_mu);
    c.severity_sigma = cfg.get_double("severity_sigma", c.severity_sigma);
    c.line_effect = cfg.get_double("line_effect", c.line_effect);
    c.line_growth_effect =
        cfg.get_double("line_growth_effect", c.line_growth_effect);
    c.dev_noise_sd = cfg.get_double("dev_noise_sd", c.dev_noise_sd);
    c.p_zero_initial = cfg.get_double("p_zero_initial", c.p_zero_initial);
    c.incurred_noise = cfg.get_double("incurred_noise", c.incurred_noise);
    c.with_incurred = cfg.get_long("with_incurred", c.with_incurred ? 1 : 0) != 0;
    c.late_developer_scenario =
        cfg.get_long("late_developer_scenario",
                     c.late_developer_scenario ? 1 : 0) != 0;
    c.seed = static_cast<std::uint64_t>(cfg.get_long("seed", 1));
    return c;
  }

  void validate() const {
    if (periods < 2 || dev < 1 || dev >= periods) {
      throw ConfigError("sim: requires I >= 2 and 0 < J < I");
    }
    if (claims_per_period <= 0.0) {
      throw ConfigError("sim: claims_per_period must be positive");
    }
    if (static_cast<int>(delay_probs.size()) != dev + 1) {
      throw ConfigError("sim: delay_probs needs J+1 entries");
    }
    double total = 0.0;
    for (double p : delay_probs) {
      if (p < 0.0) throw ConfigError("sim: delay_probs has a negative entry");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ConfigError("sim: delay_probs must sum to 1");
    }
    if (static_cast<int>(dev_factors.size()) != dev) {
      throw ConfigError("sim: dev_factors needs J entries");
    }
    if (static_cast<int>(close_hazard.size()) != dev) {
      throw ConfigError("sim: close_hazard needs J entries");
    }
    for (double h : close_hazard) {
      if (h < 0.0 || h > 1.0) throw ConfigError("sim: close_hazard outside [0,1]");
    }
    for (double g : dev_factors) {
      if (g < 0.0) throw ConfigError("sim: dev_factors has a negative entry");
    }
    if (line_growth_effect < 0.0) {
      throw ConfigError("sim: line_growth_effect must be nonnegative");
    }
    if (p_zero_initial < 0.0 || p_zero_initial >= 1.0) {
      throw ConfigError("sim: p_zero_initial outside [0,1)");
    }
    if (dev_noise_sd < 0.0 || incurred_noise < 0.0) {
      throw ConfigError("sim: noise levels must be nonnegative");
    }
  }

  /// Expected aggregate development factors under this configuration,
  /// including the margin contributed by late-reported claims. Injected
  /// scenario claims are not part of the expectation.
  std::vector<double> expected_aggregate_factors() const {
    validate();
    const int J = dev;
    // Mean cumulative payment per claim at each lag, averaging over the line,
    // the reporting delay, the zero-initial-payment indicator, and the
    // closing lag; growth noise has mean one and the severity level factors
    // out of the ratios (up to the line-severity tilt, which is handled by
    // the per-line weight).
    std::vector<double> mean_paid(static_cast<std::size_t>(J + 1), 0.0);
    for (int line = 0; line <= 1; ++line) {
      const double p_line = 0.5 * (line == 1 ? 1.0 + line_effect : 1.0);
      const double growth_tilt = line == 1 ? 1.0 + line_growth_effect : 1.0;
      for (int t = 0; t <= J; ++t) {
        const double p_t = delay_probs[static_cast<std::size_t>(t)];
        if (p_t == 0.0) continue;
        for (int z = 0; z <= 1; ++z) {
          const double p_z = z == 1 ? p_zero_initial : 1.0 - p_zero_initial;
          if (p_z == 0.0) continue;
          const int start = std::min(t + z, J);
          // The claim is open at lags < c; c = J+1 means open at the horizon.
          for (int c = 0; c <= J + 1; ++c) {
            if (c == J) continue;  // the clock has no check beyond lag J-1
            double p_c = 1.0;
            for (int l = 0; l < c && l < J; ++l) {
              p_c *= 1.0 - close_hazard[static_cast<std::size_t>(l)];
            }
            if (c < J) p_c *= close_hazard[static_cast<std::size_t>(c)];
            if (p_c == 0.0) continue;
            const double weight = p_line * p_t * p_z * p_c;
            double value = 1.0;
            for (int j = start; j <= J; ++j) {
              mean_paid[static_cast<std::size_t>(j)] += weight * value;
              if (j < J && j < c) {
                value *= 1.0 + growth_tilt *
                                   dev_factors[static_cast<std::size_t>(j)];
              }
            }
          }
        }
      }
    }
    std::vector<double> out(static_cast<std::size_t>(J), 0.0);
    for (int j = 0; j < J; ++j) {
      out[static_cast<std::size_t>(j)] =
          mean_paid[static_cast<std::size_t>(j + 1)] /
          mean_paid[static_cast<std::size_t>(j)];
    }
    return out;
  }
};

namespace detail {

inline ClaimHistory simulate_claim(const SimConfig& cfg, int period,
                                   std::uint64_t stream,
                                   const std::string& claim_id) {
  const int J = cfg.dev;
  Philox rng(cfg.seed, stream);

  ClaimHistory claim;
  claim.claim_id = claim_id;
  claim.accident_period = period;

  const double line = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const double month = 1.0 + static_cast<double>(rng.uniform_index(12));
  const int delay = static_cast<int>(rng.categorical(cfg.delay_probs));
  claim.reporting_delay = delay;
  claim.static_covariates["line"] = line;
  claim.static_covariates["accident_month"] = month;
  claim.static_covariates["reporting_delay_days"] =
      365.0 * delay + static_cast<double>(rng.uniform_index(365));

  const bool zero_initial = rng.bernoulli(cfg.p_zero_initial);
  const int start = std::min(delay + (zero_initial ? 1 : 0), J);
  double severity = std::exp(cfg.severity_mu +
                             cfg.severity_sigma * rng.normal());
  if (line > 0.5) severity *= 1.0 + cfg.line_effect;

  claim.paid_cum.assign(static_cast<std::size_t>(J + 1), 0.0);
  claim.status_open.assign(static_cast<std::size_t>(J + 1), 0);

  // The closing clock runs on the absolute settlement lag, independent of
  // when the claim is reported, so claims of every reporting cohort look
  // alike at a given lag. The lag-0 check can fire, so a claim may already
  // arrive settled; it still pays its initial amount and then stays flat.
  int closed_from = J + 1;
  for (int l = 0; l < J; ++l) {
    if (rng.bernoulli(cfg.close_hazard[static_cast<std::size_t>(l)])) {
      closed_from = l;
      break;
    }
  }

  claim.paid_cum[static_cast<std::size_t>(start)] = severity;
  for (int j = delay; j <= J; ++j) {
    claim.status_open[static_cast<std::size_t>(j)] = j < closed_from ? 1 : 0;
  }
  const double growth_tilt =
      line > 0.5 ? 1.0 + cfg.line_growth_effect : 1.0;
  for (int j = start; j < J; ++j) {
    double next = claim.paid_cum[static_cast<std::size_t>(j)];
    if (j < closed_from) {
      next *= 1.0 + growth_tilt * cfg.dev_factors[static_cast<std::size_t>(j)] *
                        rng.lognormal_mean1(cfg.dev_noise_sd);
    }
    claim.paid_cum[static_cast<std::size_t>(j + 1)] = next;
  }

  if (cfg.with_incurred) {
    std::vector<double> incurred(static_cast<std::size_t>(J + 1), 0.0);
    const double ultimate = claim.paid_cum[static_cast<std::size_t>(J)];
    for (int j = delay; j <= J; ++j) {
      const double sd =
          cfg.incurred_noise * static_cast<double>(J - j) / static_cast<double>(J);
      const double estimate = ultimate * rng.lognormal_mean1(sd);
      incurred[static_cast<std::size_t>(j)] =
          std::max(claim.paid_cum[static_cast<std::size_t>(j)], estimate);
    }
    claim.incurred = std::move(incurred);
  }
  claim.apply_mask();
  return claim;
}

/// Rare claims that stay quiet and then explode late in development.
inline ClaimHistory make_late_developer(const SimConfig& cfg, int index) {
  const int J = cfg.dev;
  ClaimHistory claim;
  claim.claim_id = "x" + std::string(7 - std::to_string(index + 1).size(), '0') +
                   std::to_string(index + 1);
  claim.accident_period = 1;
  claim.reporting_delay = 0;
  claim.paid_cum.assign(static_cast<std::size_t>(J + 1), 0.0);
  claim.status_open.assign(static_cast<std::size_t>(J + 1), 1);
  claim.paid_cum[0] = 1.0;
  for (int j = 0; j < J; ++j) {
    const double burst = (j >= J - 2) ? 9.0 : 1.05;
    claim.paid_cum[static_cast<std::size_t>(j + 1)] =
        claim.paid_cum[static_cast<std::size_t>(j)] * burst;
  }
  if (cfg.with_incurred) {
    std::vector<double> incurred(static_cast<std::size_t>(J + 1));
    for (int j = 0; j <= J; ++j) {
      incurred[static_cast<std::size_t>(j)] =
          std::max(claim.paid_cum[static_cast<std::size_t>(j)], 1.5);
    }
    claim.incurred = std::move(incurred);
  }
  claim.static_covariates["line"] = 0.0;
  claim.static_covariates["accident_month"] = 6.0;
  claim.static_covariates["reporting_delay_days"] = 0.0;
  return claim;
}

}  // namespace detail

/// Generates a full square (ground truth beyond the evaluation date is
/// present). Deterministic per (config, seed); claims own RNG substreams, so
/// parallel generation matches serial output bit-exactly.
inline Portfolio simulate(const SimConfig& cfg) {
  cfg.validate();
  Portfolio pf;
  pf.periods = cfg.periods;
  pf.dev = cfg.dev;
  pf.has_lower_triangle = true;

  std::vector<long> counts(static_cast<std::size_t>(cfg.periods), 0);
  for (int i = 1; i <= cfg.periods; ++i) {
    Philox count_rng(cfg.seed, (std::uint64_t{1} << 48) |
                                   static_cast<std::uint64_t>(i));
    counts[static_cast<std::size_t>(i - 1)] =
        std::max<long>(1, count_rng.poisson(cfg.claims_per_period));
  }
  std::vector<long> offsets(static_cast<std::size_t>(cfg.periods) + 1, 0);
  for (int i = 0; i < cfg.periods; ++i) {
    offsets[static_cast<std::size_t>(i + 1)] =
        offsets[static_cast<std::size_t>(i)] + counts[static_cast<std::size_t>(i)];
  }
  const long total = offsets.back();

  pf.claims.resize(static_cast<std::size_t>(total));
  parallel_for(static_cast<std::size_t>(total), [&](std::size_t k) {
    const long global = static_cast<long>(k);
    int period = 1;
    while (global >= offsets[static_cast<std::size_t>(period)]) ++period;
    char id[32];
    std::snprintf(id, sizeof(id), "c%08ld", global + 1);
    pf.claims[k] = detail::simulate_claim(
        cfg, period, static_cast<std::uint64_t>(global), id);
  });

  if (cfg.late_developer_scenario) {
    for (int k = 0; k < 2; ++k) {
      pf.claims.push_back(detail::make_late_developer(cfg, k));
    }
  }
  pf.sort_claims();
  pf.validate();
  return pf;
}

/// Upper-triangle view at the evaluation date: cells with i + j > I become
/// unobserved. Idempotent; ground truth stays with the caller's original.
inline Portfolio censor(const Portfolio& portfolio, int evaluation_date) {
  if (evaluation_date != portfolio.periods) {
    throw ConfigError("censor: evaluation date must equal the period count");
  }
  Portfolio out = portfolio;
  out.has_lower_triangle = false;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto& claim : out.claims) {
    for (int j = out.latest_dev(claim.accident_period) + 1; j <= out.dev; ++j) {
      claim.paid_cum[static_cast<std::size_t>(j)] = nan;
      claim.status_open[static_cast<std::size_t>(j)] = -1;
      if (claim.incurred) (*claim.incurred)[static_cast<std::size_t>(j)] = nan;
    }
  }
  return out;
}

}  // namespace oneshot
