#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <map>
#include <string>

#include "oneshot/bootstrap.hpp"
#include "oneshot/chain_ladder.hpp"
#include "oneshot/regression.hpp"
#include "oneshot/simulator.hpp"
#include "test_util.hpp"

using namespace oneshot;
using testutil::make_claim;
using testutil::make_portfolio;

namespace {

double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Bit-level equality; censored cells are NaN and must match as bits.
bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Portfolio small_sim(double claims, std::uint64_t seed) {
  auto cfg = SimConfig::defaults();
  cfg.claims_per_period = claims;
  cfg.seed = seed;
  return censor(simulate(cfg), cfg.periods);
}

}  // namespace

TEST_CASE("resampling is deterministic and preserves size and periods") {
  const Portfolio pf = small_sim(40, 1);
  Philox rng_a(5, 0);
  Philox rng_b(5, 0);
  const Portfolio a = resample_portfolio(pf, rng_a);
  const Portfolio b = resample_portfolio(pf, rng_b);
  REQUIRE(a.claims.size() == pf.claims.size());
  std::map<int, int> original_periods;
  for (const auto& claim : pf.claims) original_periods[claim.accident_period];
  for (std::size_t k = 0; k < a.claims.size(); ++k) {
    CHECK(a.claims[k].claim_id == b.claims[k].claim_id);
    CHECK(bits_equal(a.claims[k].paid_cum, b.claims[k].paid_cum));
    CHECK(original_periods.count(a.claims[k].accident_period) == 1);
  }
}

TEST_CASE("pooled draws hit every claim uniformly") {
  std::vector<ClaimHistory> claims;
  for (int k = 0; k < 5; ++k) {
    claims.push_back(make_claim("a" + std::to_string(k), 1, 0, {10, 12, 13}));
    claims.push_back(make_claim("b" + std::to_string(k), 2, 0, {10, 12, 13}));
  }
  const Portfolio pf = make_portfolio(3, 2, std::move(claims));

  std::map<std::string, long> hits;
  const int resamples = 5000;
  long total_draws = 0;
  for (int b = 0; b < resamples; ++b) {
    Philox rng(123, static_cast<std::uint64_t>(b));
    const Portfolio r = resample_portfolio(pf, rng);
    for (const auto& claim : r.claims) {
      hits[claim.claim_id.substr(0, claim.claim_id.find('#'))] += 1;
      ++total_draws;
    }
  }
  REQUIRE(hits.size() == 10);
  const double expected = static_cast<double>(total_draws) / 10.0;
  double chi2 = 0.0;
  for (const auto& [id, count] : hits) {
    const double diff = static_cast<double>(count) - expected;
    chi2 += diff * diff / expected;
  }
  // 9 degrees of freedom at the 0.1% level.
  CHECK(chi2 < 27.877);
}

TEST_CASE("identical claims leave no resampling variability") {
  std::vector<ClaimHistory> claims;
  for (int i = 1; i <= 3; ++i) {
    for (int k = 0; k < 4; ++k) {
      claims.push_back(make_claim("c" + std::to_string(i) + std::to_string(k),
                                  i, 0, {10, 14, 15}));
    }
  }
  const Portfolio pf = censor(make_portfolio(3, 2, std::move(claims)), 3);
  const auto result = bootstrap_estimation_error(
      pf, BootstrapMethod::cl_factors(), 200, 9);
  CHECK(result.sd == 0.0);
  CHECK(result.mean == Catch::Approx(result.point_total));
}

TEST_CASE("factor replicates equal a by-hand refit on the same resample") {
  const Portfolio pf = small_sim(50, 3);
  const std::uint64_t seed = 17;
  const auto result = bootstrap_estimation_error(
      pf, BootstrapMethod::cl_factors(), 4, seed);

  const Triangle original = aggregate(pf);
  for (std::size_t b = 0; b < 4; ++b) {
    Philox rng(seed, b);
    const Portfolio resampled = resample_portfolio(pf, rng);
    const auto factors = fit_cl_factors(aggregate(resampled));
    double total = 0.0;
    for (int i = pf.periods - pf.dev + 1; i <= pf.periods; ++i) {
      double ultimate = original.at(i, pf.latest_dev(i));
      for (int j = pf.periods - i; j < pf.dev; ++j) {
        ultimate *= factors.f[static_cast<std::size_t>(j)];
      }
      total += ultimate - original.at(i, pf.latest_dev(i));
    }
    CHECK(rel_diff(total, result.replicate_totals[b]) < 1e-9);
  }
}

TEST_CASE("regression replicates refit on the resample and predict the originals") {
  const Portfolio pf = small_sim(40, 7);
  ModelSpec spec;
  spec.variant = Variant::kLrPaid;
  const std::uint64_t seed = 23;
  const auto result = bootstrap_estimation_error(
      pf, BootstrapMethod::regression(spec), 3, seed);

  const Triangle original = aggregate(pf);
  for (std::size_t b = 0; b < 3; ++b) {
    Philox rng(seed, b);
    const Portfolio resampled = resample_portfolio(pf, rng);
    const OneshotResult refit = run_oneshot(resampled, spec);

    // Apply the replicate's fitted coefficients to the original claims.
    const DesignPlan plan = DesignPlan::for_variant(pf, spec);
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(plan.size()));
    double total = 0.0;
    for (const auto& claim : pf.claims) {
      const int i = claim.accident_period;
      const int horizon = pf.periods - i;
      if (horizon >= pf.dev || claim.reporting_delay > horizon) continue;
      plan.fill_row(claim, horizon, spec, row);
      const auto& fit = refit.fits[static_cast<std::size_t>(pf.dev - 1 - horizon)];
      double pred = 0.0;
      for (std::size_t c = 0; c < fit.coefficients.size(); ++c) {
        pred += fit.coefficients[c] * row(static_cast<Eigen::Index>(c));
      }
      total += pred;
    }
    for (int i = pf.periods - pf.dev + 1; i <= pf.periods; ++i) {
      total -= original.at(i, pf.latest_dev(i));
    }
    CHECK(rel_diff(total, result.replicate_totals[b]) < 1e-7);
  }
}

TEST_CASE("parallel and serial runs agree bit for bit") {
  const Portfolio pf = small_sim(40, 2);
  BootstrapOptions serial;
  serial.parallel = false;
  const auto a = bootstrap_estimation_error(
      pf, BootstrapMethod::rbns_cl(), 64, 5, serial);
  const auto b =
      bootstrap_estimation_error(pf, BootstrapMethod::rbns_cl(), 64, 5);
  REQUIRE(a.replicate_totals.size() == b.replicate_totals.size());
  for (std::size_t k = 0; k < a.replicate_totals.size(); ++k) {
    CHECK(a.replicate_totals[k] == b.replicate_totals[k]);
  }
  CHECK(a.mean == b.mean);
  CHECK(a.sd == b.sd);
}

TEST_CASE("single-claim periods are pinned under stratified resampling") {
  const Portfolio pf = make_portfolio(
      2, 1,
      {make_claim("a", 1, 0, {10, 12}), make_claim("b", 2, 0, {5, 6}),
       make_claim("c", 2, 0, {7, 8})},
      /*full_square=*/true);
  BootstrapOptions stratified;
  stratified.stratified = true;
  const auto result = bootstrap_estimation_error(
      censor(pf, 2), BootstrapMethod::cl_factors(), 50, 3, stratified);
  // Period 1 is a single claim, so every replicate refits the same factor.
  CHECK(result.sd == 0.0);
}

TEST_CASE("replicate failures are skipped up to the policy limit") {
  // Two claims: resamples that miss period 1 entirely produce a zero factor
  // denominator and fail (~25% of replicates).
  const Portfolio pf = make_portfolio(
      2, 1, {make_claim("a", 1, 0, {10, 12}), make_claim("b", 2, 0, {5, 6})},
      /*full_square=*/true);
  const Portfolio upper = censor(pf, 2);
  CHECK_THROWS_AS(bootstrap_estimation_error(
                      upper, BootstrapMethod::cl_factors(), 100, 11),
                  DegenerateError);
  BootstrapOptions tolerant;
  tolerant.max_failure_rate = 0.9;
  const auto result = bootstrap_estimation_error(
      upper, BootstrapMethod::cl_factors(), 100, 11, tolerant);
  CHECK(result.failed > 0);
  CHECK(result.replicate_totals.size() + result.failed == 100);
}

TEST_CASE("bootstrap needs at least two replicates") {
  const Portfolio pf = small_sim(20, 1);
  CHECK_THROWS_AS(
      bootstrap_estimation_error(pf, BootstrapMethod::cl_factors(), 1, 1),
      ConfigError);
}

TEST_CASE("bootstrap mean tracks the point estimate on simulated data") {
  auto cfg = SimConfig::defaults();
  cfg.claims_per_period = 250;
  cfg.seed = 44;
  const Portfolio pf = censor(simulate(cfg), cfg.periods);
  const auto result = bootstrap_estimation_error(
      pf, BootstrapMethod::cl_factors(), 400, 7);
  const double stderr_of_mean =
      result.sd / std::sqrt(static_cast<double>(result.replicate_totals.size()));
  CHECK(std::abs(result.mean - result.point_total) < 4.0 * stderr_of_mean);
}

TEST_CASE("accuracy spreads per period appear when truth is attached") {
  auto cfg = SimConfig::defaults();
  cfg.claims_per_period = 60;
  cfg.seed = 13;
  const Portfolio full = simulate(cfg);
  ModelSpec spec;
  spec.variant = Variant::kLrPaidStatus;
  const auto result = bootstrap_estimation_error(
      full, BootstrapMethod::regression(spec), 50, 3);
  REQUIRE_FALSE(result.ind_rmse_sd.empty());
  for (const auto& [i, sd] : result.ind_rmse_sd) {
    CHECK(sd >= 0.0);
    CHECK(result.ind_rmse_mean.at(i) >= 0.0);
  }
}
