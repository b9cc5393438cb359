#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "oneshot/fnn.hpp"
#include "oneshot/rng.hpp"

using namespace oneshot;

namespace {

// Central finite differences against the analytic gradient.
void check_gradient_at(fnn_detail::Member& member, const Eigen::MatrixXd& x,
                       const Eigen::VectorXd& y) {
  Eigen::VectorXd params;
  member.get_params(params);
  Eigen::VectorXd analytic;
  fnn_detail::loss_and_gradient(member, x, y, &analytic);

  for (Eigen::Index k = 0; k < params.size(); ++k) {
    const double h = 1e-4 * std::max(1.0, std::abs(params(k)));
    Eigen::VectorXd shifted = params;
    shifted(k) = params(k) + h;
    member.set_params(shifted);
    const double up = fnn_detail::loss_and_gradient(member, x, y, nullptr);
    shifted(k) = params(k) - h;
    member.set_params(shifted);
    const double down = fnn_detail::loss_and_gradient(member, x, y, nullptr);
    member.set_params(params);
    const double numeric = (up - down) / (2.0 * h);
    const double scale =
        std::max({std::abs(analytic(k)), std::abs(numeric), 1e-4});
    CHECK(std::abs(analytic(k) - numeric) / scale < 1e-5);
  }
}

struct LinearSample {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> ids;
};

LinearSample linear_sample(int n, double noise_sd, std::uint64_t seed) {
  LinearSample out;
  out.x.resize(n, 1);
  out.y.resize(n);
  Philox rng(seed, 0);
  for (int r = 0; r < n; ++r) {
    const double c = 100.0 * rng.uniform();
    out.x(r, 0) = c;
    out.y(r) = 2.0 * c + 1.0 + noise_sd * rng.normal();
    out.ids.push_back("claim" + std::to_string(r));
  }
  return out;
}

FnnConfig tiny_config() {
  FnnConfig cfg;
  cfg.hidden = {8, 6};
  cfg.epochs = 60;
  cfg.ensemble = 2;
  cfg.batch_size = 256;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  Philox rng(2025, 0);
  const int n = 16;
  const int d = 4;
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) x(r, c) = 2.0 * rng.uniform() - 1.0;
    y(r) = rng.normal();
  }
  for (int point = 0; point < 20; ++point) {
    auto member = fnn_detail::make_member(d, {5, 4}, rng);
    // Random non-initialization point: perturb all parameters.
    Eigen::VectorXd params;
    member.get_params(params);
    for (Eigen::Index k = 0; k < params.size(); ++k) {
      params(k) += rng.normal();
    }
    member.set_params(params);
    check_gradient_at(member, x, y);
  }
}

TEST_CASE("parameter counts match the layer dimensions") {
  Philox rng(1, 0);
  const auto member = fnn_detail::make_member(6, {20, 15}, rng);
  CHECK(member.parameter_count() == 471);  // 140 + 315 + 16
  CHECK(member.layers[0].w.size() + member.layers[0].b.size() == 140);
  CHECK(member.layers[1].w.size() + member.layers[1].b.size() == 315);
  CHECK(member.layers[2].w.size() + member.layers[2].b.size() == 16);
}

TEST_CASE("a zero-weight network predicts its output bias") {
  FnnModel model;
  fnn_detail::Member member;
  member.layers.push_back({Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3)});
  member.layers.push_back({Eigen::MatrixXd::Zero(1, 3), Eigen::VectorXd::Zero(1)});
  member.layers[1].b(0) = 0.9;
  model.members.push_back(member);
  model.feature_mean = Eigen::VectorXd::Zero(2);
  model.feature_sd = Eigen::VectorXd::Ones(2);
  model.scale = 2.0;
  Eigen::RowVectorXd any(2);
  any << 4.0, -3.0;
  CHECK(model.predict(any) == Catch::Approx(1.8).epsilon(1e-12));
}

TEST_CASE("balance calibration is the response-to-prediction ratio") {
  // Constant predictor 0.9 over 100 rows: raw total 90 against response
  // total 99 gives scale 1.1.
  FnnModel model;
  fnn_detail::Member member;
  member.layers.push_back({Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)});
  member.layers.push_back({Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)});
  member.layers[1].b(0) = 0.9;
  model.members.push_back(member);
  model.feature_mean = Eigen::VectorXd::Zero(1);
  model.feature_sd = Eigen::VectorXd::Ones(1);

  Eigen::MatrixXd x = Eigen::MatrixXd::Random(100, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Constant(100, 0.99);
  const FnnModel calibrated = calibrate_balance(model, x, y);
  CHECK(calibrated.scale == Catch::Approx(1.1).epsilon(1e-12));
  const double total = calibrated.predict_batch(x).sum();
  CHECK(std::abs(total - y.sum()) <= 1e-10 * std::abs(y.sum()));

  // A model that already balances keeps scale one.
  FnnModel balanced = model;
  balanced.members[0].layers[1].b(0) = 0.99;
  const FnnModel again = calibrate_balance(balanced, x, y);
  CHECK(again.scale == Catch::Approx(1.0).epsilon(1e-12));

  // Ranking is unaffected by a positive scale.
  Eigen::MatrixXd probe = Eigen::MatrixXd::Random(10, 1);
  const Eigen::VectorXd before = model.predict_batch(probe);
  const Eigen::VectorXd after = calibrated.predict_batch(probe);
  for (int r = 0; r < 10; ++r) {
    for (int s = 0; s < 10; ++s) {
      CHECK((before(r) < before(s)) == (after(r) < after(s)));
    }
  }
}

TEST_CASE("zero prediction totals cannot be calibrated") {
  FnnModel model;
  fnn_detail::Member member;
  member.layers.push_back({Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)});
  member.layers.push_back({Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)});
  model.members.push_back(member);
  model.feature_mean = Eigen::VectorXd::Zero(1);
  model.feature_sd = Eigen::VectorXd::Ones(1);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(5);
  CHECK_THROWS_AS(calibrate_balance(model, x, y), DegenerateError);
}

TEST_CASE("training is deterministic per seed") {
  const auto sample = linear_sample(200, 5.0, 3);
  const auto cfg = tiny_config();
  const FnnModel a = train_fnn(sample.x, sample.y, sample.ids, cfg);
  const FnnModel b = train_fnn(sample.x, sample.y, sample.ids, cfg);
  const Eigen::VectorXd pa = a.predict_batch(sample.x);
  const Eigen::VectorXd pb = b.predict_batch(sample.x);
  for (int r = 0; r < pa.size(); ++r) CHECK(pa(r) == pb(r));  // bit-exact

  FnnConfig other = cfg;
  other.seed += 1;
  const FnnModel c = train_fnn(sample.x, sample.y, sample.ids, other);
  CHECK(c.predict_batch(sample.x)(0) != pa(0));
}

TEST_CASE("prediction is stateless under row permutations") {
  const auto sample = linear_sample(50, 2.0, 5);
  const auto model = train_fnn(sample.x, sample.y, sample.ids, tiny_config());
  const Eigen::VectorXd direct = model.predict_batch(sample.x);
  Eigen::MatrixXd reversed(sample.x.rows(), 1);
  for (int r = 0; r < sample.x.rows(); ++r) {
    reversed(r, 0) = sample.x(sample.x.rows() - 1 - r, 0);
  }
  const Eigen::VectorXd flipped = model.predict_batch(reversed);
  for (int r = 0; r < direct.size(); ++r) {
    CHECK(direct(r) == flipped(direct.size() - 1 - r));
  }
}

TEST_CASE("an overfit ensemble nails a repeated single point") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(20, 1, 3.0);
  Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 42.0);
  std::vector<std::string> ids;
  for (int r = 0; r < 20; ++r) ids.push_back("p" + std::to_string(r));
  FnnConfig cfg = tiny_config();
  cfg.epochs = 150;
  FnnModel model = train_fnn(x, y, ids, cfg);
  model = calibrate_balance(model, x, y);
  Eigen::RowVectorXd point(1);
  point << 3.0;
  CHECK(std::abs(model.predict(point) - 42.0) < 0.42);  // within 1%
}

TEST_CASE("smoke: one member, one epoch") {
  const auto sample = linear_sample(40, 1.0, 9);
  FnnConfig cfg;
  cfg.hidden = {4};
  cfg.ensemble = 1;
  cfg.epochs = 1;
  const FnnModel model = train_fnn(sample.x, sample.y, sample.ids, cfg);
  CHECK(model.members.size() == 1);
  CHECK(std::isfinite(model.predict_batch(sample.x).sum()));
}

TEST_CASE("training data must be sane") {
  const auto sample = linear_sample(10, 1.0, 1);
  CHECK_THROWS_AS(train_fnn(sample.x, sample.y, sample.ids, tiny_config()),
                  DegenerateError);  // fewer than 20 rows

  auto poisoned = linear_sample(64, 1.0, 2);
  poisoned.x(5, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(
      train_fnn(poisoned.x, poisoned.y, poisoned.ids, tiny_config()),
      DegenerateError);
}

TEST_CASE("feature dimension mismatches are rejected") {
  const auto sample = linear_sample(60, 1.0, 4);
  const auto model = train_fnn(sample.x, sample.y, sample.ids, tiny_config());
  Eigen::RowVectorXd wrong(2);
  wrong << 1.0, 2.0;
  CHECK_THROWS_AS(model.predict(wrong), Error);
}

TEST_CASE("models survive a save/load round trip") {
  const auto sample = linear_sample(80, 3.0, 6);
  FnnModel model = train_fnn(sample.x, sample.y, sample.ids, tiny_config());
  model = calibrate_balance(model, sample.x, sample.y);
  const auto dir = std::filesystem::temp_directory_path() / "oneshot_fnn_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.json").string();
  save_fnn(model, path);
  const FnnModel loaded = load_fnn(path);
  const Eigen::VectorXd a = model.predict_batch(sample.x);
  const Eigen::VectorXd b = loaded.predict_batch(sample.x);
  for (int r = 0; r < a.size(); ++r) CHECK(a(r) == b(r));
}

TEST_CASE("the ensemble tracks a linear target about as well as least squares") {
  const auto sample = linear_sample(3000, 10.0, 11);
  FnnConfig cfg;
  cfg.epochs = 120;
  cfg.ensemble = 3;
  cfg.seed = 2;
  const FnnModel model = train_fnn(sample.x, sample.y, sample.ids, cfg);

  // Validation split mirrors the trainer's id-hash rule.
  double fnn_sq = 0.0;
  double ls_sq = 0.0;
  int n_val = 0;
  const Eigen::VectorXd pred = model.predict_batch(sample.x);
  for (int r = 0; r < sample.x.rows(); ++r) {
    const auto h = fnn_detail::fnv1a(sample.ids[static_cast<std::size_t>(r)]);
    if (h % 10000 >= 1000) continue;
    const double truth = sample.y(r);
    fnn_sq += (pred(r) - truth) * (pred(r) - truth);
    const double ls = 2.0 * sample.x(r, 0) + 1.0;  // population regression
    ls_sq += (ls - truth) * (ls - truth);
    ++n_val;
  }
  REQUIRE(n_val > 100);
  CHECK(fnn_sq / n_val < 1.2 * (ls_sq / n_val));
}
