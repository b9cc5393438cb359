#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "oneshot/config.hpp"
#include "oneshot/errors.hpp"
#include "oneshot/parallel.hpp"
#include "oneshot/regression.hpp"
#include "oneshot/rng.hpp"

namespace oneshot {

struct FnnConfig {
  std::vector<int> hidden = {20, 15};
  double learning_rate = 1e-3;
  int batch_size = 8192;
  int epochs = 500;
  double validation_fraction = 0.1;  // learning:validation = 9:1
  double plateau_factor = 0.9;
  int plateau_patience = 5;
  int ensemble = 10;  // member m trains with seed + m
  std::uint64_t seed = 42;

  static FnnConfig from_config(const Config& cfg) {
    FnnConfig c;
    const auto hidden = cfg.get_list("fnn_hidden", {20, 15});
    c.hidden.clear();
    for (double h : hidden) c.hidden.push_back(static_cast<int>(h));
    c.learning_rate = cfg.get_double("fnn_learning_rate", c.learning_rate);
    c.batch_size = static_cast<int>(cfg.get_long("fnn_batch_size", c.batch_size));
    c.epochs = static_cast<int>(cfg.get_long("fnn_epochs", c.epochs));
    c.validation_fraction =
        cfg.get_double("fnn_validation_fraction", c.validation_fraction);
    c.plateau_factor = cfg.get_double("fnn_plateau_factor", c.plateau_factor);
    c.plateau_patience =
        static_cast<int>(cfg.get_long("fnn_plateau_patience", c.plateau_patience));
    c.ensemble = static_cast<int>(cfg.get_long("fnn_ensemble", c.ensemble));
    c.seed = static_cast<std::uint64_t>(cfg.get_long("fnn_seed", 42));
    return c;
  }

  void validate() const {
    for (int h : hidden) {
      if (h < 1) throw ConfigError("fnn: hidden widths must be positive");
    }
    if (!(learning_rate > 0.0)) throw ConfigError("fnn: learning rate must be > 0");
    if (batch_size < 1 || epochs < 1) {
      throw ConfigError("fnn: batch size and epochs must be positive");
    }
    if (validation_fraction <= 0.0 || validation_fraction >= 1.0) {
      throw ConfigError("fnn: validation fraction must lie in (0,1)");
    }
    if (ensemble < 1) throw ConfigError("fnn: ensemble size must be >= 1");
  }
};

namespace fnn_detail {

// Exact Gaussian-CDF form of GELU; fixed (rather than the tanh
// approximation) so results are reproducible bit-for-bit.
inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
  return cdf + x * pdf;
}

struct Layer {
  Eigen::MatrixXd w;  // fan_out x fan_in
  Eigen::VectorXd b;
};

struct Member {
  std::vector<Layer> layers;  // hidden layers GELU, last layer identity

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
      n += static_cast<std::size_t>(l.w.size() + l.b.size());
    }
    return n;
  }

  void get_params(Eigen::VectorXd& out) const {
    out.resize(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index at = 0;
    for (const auto& l : layers) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
        for (Eigen::Index r = 0; r < l.w.rows(); ++r) out(at++) = l.w(r, c);
      }
      for (Eigen::Index r = 0; r < l.b.size(); ++r) out(at++) = l.b(r);
    }
  }

  void set_params(const Eigen::VectorXd& in) {
    Eigen::Index at = 0;
    for (auto& l : layers) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
        for (Eigen::Index r = 0; r < l.w.rows(); ++r) l.w(r, c) = in(at++);
      }
      for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b(r) = in(at++);
    }
  }
};

inline Member make_member(int input_dim, const std::vector<int>& hidden,
                          Philox& rng) {
  Member m;
  int fan_in = input_dim;
  std::vector<int> widths = hidden;
  widths.push_back(1);
  for (int width : widths) {
    Layer layer;
    layer.w.resize(width, fan_in);
    layer.b = Eigen::VectorXd::Zero(width);
    // Glorot-uniform initialization.
    const double limit = std::sqrt(6.0 / (fan_in + width));
    for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
        layer.w(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
      }
    }
    m.layers.push_back(std::move(layer));
    fan_in = width;
  }
  return m;
}

inline Eigen::VectorXd forward(const Member& m, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    Eigen::MatrixXd z =
        (a * layer.w.transpose()).rowwise() + layer.b.transpose();
    if (l + 1 < m.layers.size()) {
      a = z.unaryExpr([](double v) { return gelu(v); });
    } else {
      a = std::move(z);
    }
  }
  return a.col(0);
}

/// MSE loss and its gradient with respect to the flattened parameters.
inline double loss_and_gradient(const Member& m, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y,
                                Eigen::VectorXd* grad_out) {
  const Eigen::Index n = x.rows();
  const std::size_t depth = m.layers.size();
  std::vector<Eigen::MatrixXd> pre(depth);   // pre-activations
  std::vector<Eigen::MatrixXd> act(depth + 1);
  act[0] = x;
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = m.layers[l];
    pre[l] = (act[l] * layer.w.transpose()).rowwise() + layer.b.transpose();
    if (l + 1 < depth) {
      act[l + 1] = pre[l].unaryExpr([](double v) { return gelu(v); });
    } else {
      act[l + 1] = pre[l];
    }
  }
  const Eigen::VectorXd residual = act[depth].col(0) - y;
  const double loss = residual.squaredNorm() / static_cast<double>(n);
  if (grad_out == nullptr) return loss;

  std::vector<Layer> grads(depth);
  Eigen::MatrixXd delta = (2.0 / static_cast<double>(n)) * residual;
  for (std::size_t l = depth; l-- > 0;) {
    if (l + 1 < depth) {
      delta = delta.cwiseProduct(
          pre[l].unaryExpr([](double v) { return gelu_grad(v); }));
    }
    grads[l].w = delta.transpose() * act[l];
    grads[l].b = delta.colwise().sum();
    if (l > 0) delta = delta * m.layers[l].w;
  }

  Member packed;
  packed.layers = std::move(grads);
  packed.get_params(*grad_out);
  return loss;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace fnn_detail

/// Ensemble of small feed-forward networks with feature/response
/// standardization and a multiplicative balance calibration scale.
struct FnnModel {
  std::vector<fnn_detail::Member> members;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_sd;
  double response_mean = 0.0;
  double response_sd = 1.0;
  double scale = 1.0;

  int input_dim() const {
    return members.empty() ? 0 : static_cast<int>(members[0].layers[0].w.cols());
  }

  std::size_t parameter_count_per_member() const {
    return members.empty() ? 0 : members[0].parameter_count();
  }

  /// Calibrated ensemble-mean predictions on the original response scale.
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& features) const {
    if (features.cols() != feature_mean.size()) {
      throw Error("fnn: feature dimension mismatch (got " +
                  std::to_string(features.cols()) + ", trained on " +
                  std::to_string(feature_mean.size()) + ")");
    }
    Eigen::MatrixXd std_features = features;
    for (Eigen::Index c = 0; c < std_features.cols(); ++c) {
      std_features.col(c) =
          (std_features.col(c).array() - feature_mean(c)) / feature_sd(c);
    }
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(features.rows());
    for (const auto& member : members) {
      acc += fnn_detail::forward(member, std_features);
    }
    acc /= static_cast<double>(members.size());
    return scale *
           (response_mean + response_sd * acc.array()).matrix();
  }

  double predict(const Eigen::RowVectorXd& features) const {
    Eigen::MatrixXd one(1, features.size());
    one.row(0) = features;
    return predict_batch(one)(0);
  }
};

/// Trains the ensemble: Adam on the MSE loss, mini-batches, learning-rate
/// reduction on validation plateaus, one independently seeded member per
/// ensemble slot. Deterministic given (config, seed); members may train in
/// parallel without changing the result.
inline FnnModel train_fnn(const Eigen::MatrixXd& features,
                          const Eigen::VectorXd& responses,
                          const std::vector<std::string>& row_ids,
                          const FnnConfig& config) {
  config.validate();
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (n < 20) throw DegenerateError("fnn: needs at least 20 observations");
  if (responses.size() != n ||
      row_ids.size() != static_cast<std::size_t>(n)) {
    throw Error("fnn: feature/response/id length mismatch");
  }

  // Deterministic validation split on the row id hash.
  std::vector<Eigen::Index> learn_rows;
  std::vector<Eigen::Index> val_rows;
  const auto bucket_limit =
      static_cast<std::uint64_t>(config.validation_fraction * 10000.0);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto h = fnn_detail::fnv1a(row_ids[static_cast<std::size_t>(r)]);
    if (h % 10000 < bucket_limit) {
      val_rows.push_back(r);
    } else {
      learn_rows.push_back(r);
    }
  }
  if (learn_rows.empty()) learn_rows = val_rows;

  FnnModel model;
  model.feature_mean.resize(d);
  model.feature_sd.resize(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    double sum = 0.0;
    for (const auto r : learn_rows) sum += features(r, c);
    const double mean = sum / static_cast<double>(learn_rows.size());
    double sq = 0.0;
    for (const auto r : learn_rows) {
      const double diff = features(r, c) - mean;
      sq += diff * diff;
    }
    double sd = std::sqrt(sq / static_cast<double>(learn_rows.size()));
    model.feature_mean(c) = mean;
    model.feature_sd(c) = sd > 0.0 ? sd : 1.0;
  }
  {
    double sum = 0.0;
    for (const auto r : learn_rows) sum += responses(r);
    model.response_mean = sum / static_cast<double>(learn_rows.size());
    double sq = 0.0;
    for (const auto r : learn_rows) {
      const double diff = responses(r) - model.response_mean;
      sq += diff * diff;
    }
    const double sd = std::sqrt(sq / static_cast<double>(learn_rows.size()));
    model.response_sd = sd > 0.0 ? sd : 1.0;
  }

  auto standardized = [&](const std::vector<Eigen::Index>& rows,
                          Eigen::MatrixXd& x, Eigen::VectorXd& y) {
    x.resize(static_cast<Eigen::Index>(rows.size()), d);
    y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto r = rows[k];
      for (Eigen::Index c = 0; c < d; ++c) {
        x(static_cast<Eigen::Index>(k), c) =
            (features(r, c) - model.feature_mean(c)) / model.feature_sd(c);
      }
      y(static_cast<Eigen::Index>(k)) =
          (responses(r) - model.response_mean) / model.response_sd;
    }
  };
  Eigen::MatrixXd x_learn;
  Eigen::VectorXd y_learn;
  standardized(learn_rows, x_learn, y_learn);
  Eigen::MatrixXd x_val;
  Eigen::VectorXd y_val;
  standardized(val_rows.empty() ? learn_rows : val_rows, x_val, y_val);

  const Eigen::Index n_learn = x_learn.rows();
  const Eigen::Index batch =
      std::min<Eigen::Index>(config.batch_size, n_learn);

  model.members.resize(static_cast<std::size_t>(config.ensemble));
  parallel_for(static_cast<std::size_t>(config.ensemble), [&](std::size_t m) {
    Philox rng(config.seed + m, 0);
    fnn_detail::Member member =
        fnn_detail::make_member(static_cast<int>(d), config.hidden, rng);

    Eigen::VectorXd params;
    member.get_params(params);
    Eigen::VectorXd adam_m = Eigen::VectorXd::Zero(params.size());
    Eigen::VectorXd adam_v = Eigen::VectorXd::Zero(params.size());
    const double beta1 = 0.9;
    const double beta2 = 0.999;
    const double adam_eps = 1e-8;
    double lr = config.learning_rate;
    long step = 0;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_learn));
    for (Eigen::Index r = 0; r < n_learn; ++r) {
      order[static_cast<std::size_t>(r)] = r;
    }

    double best_val = std::numeric_limits<double>::infinity();
    int wait = 0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd xb;
    Eigen::VectorXd yb;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      for (std::size_t k = order.size(); k > 1; --k) {
        std::swap(order[k - 1], order[rng.uniform_index(k)]);
      }
      for (Eigen::Index start = 0; start < n_learn; start += batch) {
        const Eigen::Index size = std::min(batch, n_learn - start);
        xb.resize(size, d);
        yb.resize(size);
        for (Eigen::Index r = 0; r < size; ++r) {
          xb.row(r) = x_learn.row(order[static_cast<std::size_t>(start + r)]);
          yb(r) = y_learn(order[static_cast<std::size_t>(start + r)]);
        }
        const double loss = fnn_detail::loss_and_gradient(member, xb, yb, &grad);
        if (!std::isfinite(loss)) {
          throw DegenerateError(
              "fnn: non-finite training loss at epoch " + std::to_string(epoch) +
              " (member " + std::to_string(m) + ", lr " + std::to_string(lr) +
              ")");
        }
        ++step;
        member.get_params(params);
        adam_m = beta1 * adam_m + (1.0 - beta1) * grad;
        adam_v = beta2 * adam_v.array().matrix() +
                 (1.0 - beta2) * grad.array().square().matrix();
        const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        params -= (lr * (adam_m / corr1).array() /
                   ((adam_v / corr2).array().sqrt() + adam_eps))
                      .matrix();
        member.set_params(params);
      }
      const double val_loss =
          fnn_detail::loss_and_gradient(member, x_val, y_val, nullptr);
      if (val_loss < best_val - 1e-12) {
        best_val = val_loss;
        wait = 0;
      } else if (++wait >= config.plateau_patience) {
        lr *= config.plateau_factor;
        wait = 0;
      }
    }
    model.members[m] = std::move(member);
  });
  return model;
}

/// Multiplicative rescaling so that in-sample predictions sum to the
/// response total.
inline FnnModel calibrate_balance(FnnModel model,
                                  const Eigen::MatrixXd& features,
                                  const Eigen::VectorXd& responses) {
  model.scale = 1.0;
  const double predicted = model.predict_batch(features).sum();
  if (predicted == 0.0) {
    throw DegenerateError("fnn: zero prediction total, cannot calibrate");
  }
  model.scale = responses.sum() / predicted;
  return model;
}

inline double predict_fnn(const FnnModel& model,
                          const Eigen::RowVectorXd& features) {
  return model.predict(features);
}

// -------------------------------------------------------------------------
// Serialization
// -------------------------------------------------------------------------

inline void save_fnn(const FnnModel& model, const std::string& path) {
  nlohmann::json doc;
  doc["response_mean"] = model.response_mean;
  doc["response_sd"] = model.response_sd;
  doc["scale"] = model.scale;
  doc["feature_mean"] = std::vector<double>(
      model.feature_mean.data(), model.feature_mean.data() + model.feature_mean.size());
  doc["feature_sd"] = std::vector<double>(
      model.feature_sd.data(), model.feature_sd.data() + model.feature_sd.size());
  doc["members"] = nlohmann::json::array();
  for (const auto& member : model.members) {
    nlohmann::json jm = nlohmann::json::array();
    for (const auto& layer : member.layers) {
      nlohmann::json jl;
      jl["rows"] = layer.w.rows();
      jl["cols"] = layer.w.cols();
      std::vector<double> w(layer.w.data(), layer.w.data() + layer.w.size());
      std::vector<double> b(layer.b.data(), layer.b.data() + layer.b.size());
      jl["w"] = w;
      jl["b"] = b;
      jm.push_back(std::move(jl));
    }
    doc["members"].push_back(std::move(jm));
  }
  std::ofstream out(path);
  if (!out) throw IoError("fnn: cannot write " + path);
  out << doc.dump();
}

inline FnnModel load_fnn(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("fnn: cannot open " + path);
  nlohmann::json doc;
  in >> doc;
  FnnModel model;
  model.response_mean = doc.at("response_mean").get<double>();
  model.response_sd = doc.at("response_sd").get<double>();
  model.scale = doc.at("scale").get<double>();
  const auto fm = doc.at("feature_mean").get<std::vector<double>>();
  const auto fs = doc.at("feature_sd").get<std::vector<double>>();
  model.feature_mean = Eigen::Map<const Eigen::VectorXd>(
      fm.data(), static_cast<Eigen::Index>(fm.size()));
  model.feature_sd = Eigen::Map<const Eigen::VectorXd>(
      fs.data(), static_cast<Eigen::Index>(fs.size()));
  for (const auto& jm : doc.at("members")) {
    fnn_detail::Member member;
    for (const auto& jl : jm) {
      fnn_detail::Layer layer;
      const auto rows = jl.at("rows").get<Eigen::Index>();
      const auto cols = jl.at("cols").get<Eigen::Index>();
      const auto w = jl.at("w").get<std::vector<double>>();
      const auto b = jl.at("b").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
          static_cast<Eigen::Index>(b.size()) != rows) {
        throw SchemaError("fnn: corrupt model file " + path);
      }
      layer.w = Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, cols);
      layer.b = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
      member.layers.push_back(std::move(layer));
    }
    model.members.push_back(std::move(member));
  }
  return model;
}

// -------------------------------------------------------------------------
// Pluggable step regressor
// -------------------------------------------------------------------------

/// Network step regressor for the one-shot driver: trains an ensemble on the
/// learning sample and applies the balance calibration before predicting.
class FnnRegressor {
 public:
  explicit FnnRegressor(FnnConfig config) : config_(config) {}

  FittedStep fit(int step, const Design& design) const {
    if (design.weights.size() > 0) {
      throw ConfigError("fnn: resampling weights are not supported");
    }
    FnnModel model =
        train_fnn(design.X, design.y, design.row_ids, config_);
    model = calibrate_balance(model, design.X, design.y);

    FittedStep out;
    out.info.step = step;
    out.info.columns = design.columns;
    out.info.coefficients.assign(design.columns.size(), 0.0);
    out.info.std_errors.assign(design.columns.size(), 0.0);
    out.info.has_intercept = true;  // balance enforced by calibration
    out.info.sample_size = static_cast<std::size_t>(design.X.rows());
    out.info.response_total = design.y.sum();
    const Eigen::VectorXd fitted = model.predict_batch(design.X);
    out.info.balance_residual = fitted.sum() - out.info.response_total;
    out.info.in_sample_mse = (fitted - design.y).squaredNorm() /
                             static_cast<double>(design.X.rows());
    auto shared = std::make_shared<FnnModel>(std::move(model));
    out.predict = [shared](const Eigen::RowVectorXd& row) {
      return shared->predict(row);
    };
    return out;
  }

 private:
  FnnConfig config_;
};

/// One-shot run with the network regressor on the network feature layout.
inline OneshotResult run_oneshot_fnn(const Portfolio& portfolio,
                                     const ModelSpec& spec,
                                     const FnnConfig& config) {
  const DesignPlan plan = DesignPlan::for_network(portfolio, spec);
  return run_oneshot_with(portfolio, spec, plan, FnnRegressor(config));
}

}  // namespace oneshot
