#include <catch_amalgamated.hpp>

#include <cmath>

#include "oneshot/chain_ladder.hpp"
#include "oneshot/rbns.hpp"
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

Portfolio staggered_portfolio() {
  return make_portfolio(
      3, 2,
      {make_claim("n1", 1, 0, {60, 90, 100}),
       make_claim("n2", 1, 1, {0, 30, 40}),
       make_claim("n3", 1, 2, {0, 0, 25}),
       make_claim("n4", 2, 0, {50, 80, 95}),
       make_claim("n5", 3, 0, {40, 60, 70})},
      /*full_square=*/true);
}

}  // namespace

TEST_CASE("reported-claims factors exclude the late-reporting margin") {
  const Portfolio pf = censor(staggered_portfolio(), 3);
  const RbnsPrediction pred = predict_rbns_cl(pf);

  // Cohort {T <= 1} of period 1: ultimates 100 + 40 over payments 90 + 30.
  CHECK(pred.rbns_factors[1] == Catch::Approx(7.0 / 6.0).epsilon(1e-12));

  // The aggregate one-shot factor also carries the claim reported at lag 2.
  const auto aggregate_cl = predict_oneshot(aggregate(pf));
  CHECK(aggregate_cl.ptu[1] == Catch::Approx(165.0 / 120.0).epsilon(1e-12));
  CHECK(pred.rbns_factors[1] < aggregate_cl.ptu[1]);
}

TEST_CASE("with everything reported at lag zero the split collapses") {
  const Portfolio pf = make_portfolio(
      3, 2,
      {make_claim("a", 1, 0, {60, 90, 100}), make_claim("b", 1, 0, {30, 57, 65}),
       make_claim("c", 2, 0, {50, 80, 95}), make_claim("d", 3, 0, {40, 60, 70})});
  const Portfolio upper = censor(pf, 3);
  const RbnsPrediction pred = predict_rbns_cl(upper);
  const auto cl = predict_oneshot(aggregate(upper));
  for (std::size_t j = 0; j < pred.rbns_factors.size(); ++j) {
    CHECK(rel_diff(pred.rbns_factors[j], cl.ptu[j]) < 1e-12);
  }
  const auto totals = rbns_ultimate_totals(upper, pred);
  for (const auto& [i, ultimate] : cl.ultimates) {
    CHECK(rel_diff(totals.at(i), ultimate) < 1e-12);
  }
  const auto ibnr = ibnr_decompose(upper, pred, cl.ultimates);
  for (const auto& [i, value] : ibnr) CHECK(std::abs(value) < 1e-9);
}

TEST_CASE("one claim per period carries the whole aggregate") {
  const Portfolio pf = make_portfolio(
      3, 2,
      {make_claim("a", 1, 0, {60, 90, 100}), make_claim("b", 2, 0, {50, 80, 95}),
       make_claim("c", 3, 0, {40, 60, 70})});
  const Portfolio upper = censor(pf, 3);
  const RbnsPrediction pred = predict_rbns_cl(upper);
  const auto cl = predict_oneshot(aggregate(upper));
  CHECK(rel_diff(pred.per_claim_ultimates.at("b"), cl.ultimates.at(2)) < 1e-12);
  CHECK(rel_diff(pred.per_claim_ultimates.at("c"), cl.ultimates.at(3)) < 1e-12);
}

TEST_CASE("a claim reported exactly on the diagonal is still projected") {
  const Portfolio pf = make_portfolio(
      3, 2,
      {make_claim("a", 1, 0, {60, 90, 100}), make_claim("b", 1, 1, {0, 30, 40}),
       make_claim("c", 2, 1, {0, 35, 42}),  // T = I - i, on the diagonal
       make_claim("d", 2, 0, {50, 80, 96}), make_claim("e", 3, 0, {40, 60, 70})});
  const Portfolio upper = censor(pf, 3);
  const RbnsPrediction pred = predict_rbns_cl(upper);
  CHECK(pred.per_claim_ultimates.count("c") == 1);
  // Unreported claims get no per-claim prediction.
  const Portfolio with_ibnr = make_portfolio(
      3, 2,
      {make_claim("a", 1, 0, {60, 90, 100}), make_claim("b", 1, 1, {0, 30, 40}),
       make_claim("x", 3, 2, {0, 0, 80}),  // IBNR at the evaluation date
       make_claim("d", 2, 0, {50, 80, 96}), make_claim("e", 3, 0, {40, 60, 70})});
  const RbnsPrediction pred2 = predict_rbns_cl(censor(with_ibnr, 3));
  CHECK(pred2.per_claim_ultimates.count("x") == 0);
}

TEST_CASE("reserve split adds back to the aggregate chain ladder exactly") {
  for (const std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    auto cfg = SimConfig::defaults();
    cfg.claims_per_period = 80;
    cfg.seed = seed;
    const Portfolio upper = censor(simulate(cfg), cfg.periods);
    const auto cl = predict_oneshot(aggregate(upper));
    const RbnsPrediction pred = predict_rbns_cl(upper);
    const auto ibnr = ibnr_decompose(upper, pred, cl.ultimates);

    const Triangle tri = aggregate(upper);
    double cl_reserve = 0.0;
    for (const auto& [i, ultimate] : cl.ultimates) {
      cl_reserve += ultimate - tri.at(i, upper.latest_dev(i));
    }
    double split_reserve = 0.0;
    for (const auto& [i, reserve] : pred.rbns_reserves_by_period) {
      split_reserve += reserve + ibnr.at(i);
    }
    CHECK(rel_diff(cl_reserve, split_reserve) < 1e-10);
  }
}

TEST_CASE("late-reported mass shows up as positive ibnr") {
  auto cfg = SimConfig::defaults();
  cfg.claims_per_period = 400;
  cfg.seed = 11;
  const Portfolio upper = censor(simulate(cfg), cfg.periods);
  const auto cl = predict_oneshot(aggregate(upper));
  const auto ibnr = ibnr_decompose(upper, predict_rbns_cl(upper), cl.ultimates);
  double total = 0.0;
  for (const auto& [i, value] : ibnr) total += value;
  CHECK(total > 0.0);
}

TEST_CASE("the explicit first-step late-reporting factor matches the split") {
  // J = 2: the late-reporting grossing-up factor of the first recursion step
  // can be written down directly and must equal the subtraction identity for
  // accident period I-1.
  const Portfolio full = staggered_portfolio();
  const Portfolio pf = censor(full, 3);
  const int I = pf.periods;
  const int J = pf.dev;
  REQUIRE(J == 2);

  double late_num = 0.0;
  double reported_den = 0.0;
  for (const auto& claim : pf.claims) {
    if (claim.accident_period > I - J) continue;
    if (claim.reporting_delay == J) {
      late_num += claim.paid_cum[static_cast<std::size_t>(J)];
    }
    if (claim.reporting_delay <= J - 1) {
      reported_den += claim.paid_cum[static_cast<std::size_t>(J - 1)];
    }
  }
  const Triangle tri = aggregate(pf);
  const double one_step_ibnr = tri.at(I - 1, J - 1) * (late_num / reported_den);

  const auto cl = predict_oneshot(tri);
  const auto ibnr = ibnr_decompose(pf, predict_rbns_cl(pf), cl.ultimates);
  CHECK(ibnr.at(I - 1) == Catch::Approx(one_step_ibnr).epsilon(1e-12));
}

TEST_CASE("a zero cohort denominator is a degenerate error") {
  const Portfolio full = make_portfolio(
      3, 2,
      {make_claim("a", 1, 1, {0, 30, 40}),  // nothing reported at lag 0
       make_claim("b", 2, 1, {0, 35, 42}), make_claim("c", 3, 0, {40, 60, 70})});
  CHECK_THROWS_AS(predict_rbns_cl(censor(full, 3)), DegenerateError);
}
