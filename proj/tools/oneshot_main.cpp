// Command-line driver: simulate -> reserve -> bootstrap workflows over the
// canonical long-format claims CSV.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oneshot/bootstrap.hpp"
#include "oneshot/chain_ladder.hpp"
#include "oneshot/claims.hpp"
#include "oneshot/config.hpp"
#include "oneshot/csv.hpp"
#include "oneshot/errors.hpp"
#include "oneshot/fnn.hpp"
#include "oneshot/ibnr.hpp"
#include "oneshot/rbns.hpp"
#include "oneshot/regression.hpp"
#include "oneshot/simulator.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const json& inputs, const std::vector<std::string>& outputs,
                    std::uint64_t seed) {
  json doc;
  doc["command"] = command;
  doc["inputs"] = inputs;
  doc["outputs"] = outputs;
  doc["seed"] = seed;
  doc["tool_version"] = oneshot::kVersion;
  doc["timestamp"] = timestamp_utc();
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw oneshot::IoError("cannot write manifest.json");
  out << doc.dump(2) << '\n';
}

struct LoadedData {
  oneshot::Portfolio fitting;          // upper triangle
  std::optional<oneshot::Portfolio> truth_square;
};

/// Loads --data (and optionally --truth). A full-square data file doubles as
/// its own ground truth and is censored for fitting.
LoadedData load_data(const std::string& data_path,
                     const std::string& truth_path) {
  LoadedData out;
  oneshot::Portfolio data = oneshot::load_portfolio(data_path).portfolio;
  if (data.has_lower_triangle) {
    out.truth_square = data;
    out.fitting = oneshot::censor(data, data.periods);
  } else {
    out.fitting = std::move(data);
  }
  if (!truth_path.empty()) {
    oneshot::Portfolio truth = oneshot::load_portfolio(truth_path).portfolio;
    if (!truth.has_lower_triangle) {
      throw oneshot::SchemaError("--truth file must contain a full square");
    }
    if (truth.periods != out.fitting.periods || truth.dev != out.fitting.dev) {
      throw oneshot::SchemaError("--truth geometry does not match --data");
    }
    out.truth_square = std::move(truth);
  }
  return out;
}

void write_fits_csv(const std::vector<oneshot::PtUFit>& fits,
                    const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw oneshot::IoError("cannot write " + path.string());
  out << "step,column,estimate,std_error\n";
  for (const auto& fit : fits) {
    for (std::size_t k = 0; k < fit.columns.size(); ++k) {
      out << fit.step << ',' << fit.columns[k] << ','
          << oneshot::detail::format_double(fit.coefficients[k]) << ','
          << oneshot::detail::format_double(fit.std_errors[k]) << '\n';
    }
  }
}

void write_mack_csv(const oneshot::MackResult& mack, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw oneshot::IoError("cannot write " + path.string());
  out << "period,latest,ultimate,reserve,process_sd,estimation_sd,rmsep\n";
  using oneshot::detail::format_double;
  double latest_total = 0.0;
  double ultimate_total = 0.0;
  for (const auto& [i, ultimate] : mack.ultimates) {
    latest_total += mack.latest_by_period.at(i);
    ultimate_total += ultimate;
    out << i << ',' << format_double(mack.latest_by_period.at(i)) << ','
        << format_double(ultimate) << ','
        << format_double(mack.reserves_by_period.at(i)) << ','
        << format_double(mack.process_sd_by_period.at(i)) << ','
        << format_double(mack.estimation_sd_by_period.at(i)) << ','
        << format_double(mack.rmsep_by_period.at(i)) << '\n';
  }
  out << "total," << format_double(latest_total) << ','
      << format_double(ultimate_total) << ','
      << format_double(mack.total_reserve) << ','
      << format_double(mack.process_sd) << ','
      << format_double(mack.estimation_sd) << ',' << format_double(mack.rmsep)
      << '\n';
}

struct MethodChoice {
  enum Kind { kMack, kClOneshot, kRbnsCl, kLr, kFnn } kind = kMack;
  oneshot::Variant variant = oneshot::Variant::kLrPaid;
};

MethodChoice parse_method(const std::string& method) {
  MethodChoice out;
  if (method == "mack") {
    out.kind = MethodChoice::kMack;
  } else if (method == "cl-oneshot") {
    out.kind = MethodChoice::kClOneshot;
  } else if (method == "rbns-cl") {
    out.kind = MethodChoice::kRbnsCl;
  } else if (method.rfind("lr:", 0) == 0) {
    out.kind = MethodChoice::kLr;
    out.variant = oneshot::parse_variant(method.substr(3));
  } else if (method == "fnn") {
    out.kind = MethodChoice::kFnn;
  } else {
    throw CLI::ValidationError("--method",
                               "unknown method '" + method +
                                   "' (expected mack|cl-oneshot|rbns-cl|"
                                   "lr:<variant>|fnn)");
  }
  return out;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_override) {
  oneshot::SimConfig config = config_path.empty()
                                  ? oneshot::SimConfig::defaults()
                                  : oneshot::SimConfig::from_config(
                                        oneshot::Config::from_file(config_path));
  if (seed_override) config.seed = *seed_override;
  config.validate();
  const oneshot::Portfolio portfolio = oneshot::simulate(config);
  fs::create_directories(out_dir);
  oneshot::write_portfolio((fs::path(out_dir) / "claims.csv").string(),
                           portfolio);
  json inputs;
  inputs["config"] = config_path;
  write_manifest(out_dir, "simulate", inputs, {"claims.csv"}, config.seed);
  std::cout << "simulate: wrote " << portfolio.claims.size() << " claims to "
            << out_dir << "/claims.csv\n";
  return kExitOk;
}

int cmd_reserve(const std::string& data_path, const std::string& method_name,
                const std::string& config_path, const std::string& truth_path,
                const std::string& out_dir, std::uint64_t seed) {
  const MethodChoice method = parse_method(method_name);
  const LoadedData data = load_data(data_path, truth_path);
  const oneshot::Portfolio& pf = data.fitting;
  const oneshot::Triangle tri = oneshot::aggregate(pf);

  oneshot::Config file_config;
  if (!config_path.empty()) {
    file_config = oneshot::Config::from_file(config_path);
  }
  oneshot::ModelSpec spec = oneshot::ModelSpec::from_config(file_config);

  std::optional<std::map<int, double>> truth_oll;
  if (data.truth_square) truth_oll = oneshot::true_oll(*data.truth_square);

  fs::create_directories(out_dir);
  std::vector<std::string> outputs;
  json summary;
  summary["method"] = method_name;
  summary["data"] = data_path;
  summary["truth_columns_present"] = truth_oll.has_value();

  std::optional<oneshot::MackResult> mack;
  try {
    mack = oneshot::mack_msep(tri, oneshot::fit_cl_factors(tri));
  } catch (const oneshot::DegenerateError&) {
    if (method.kind == MethodChoice::kMack) throw;
  }

  if (method.kind == MethodChoice::kMack ||
      method.kind == MethodChoice::kClOneshot) {
    const oneshot::OneshotCl cl = oneshot::predict_oneshot(tri);
    if (method.kind == MethodChoice::kMack) {
      write_mack_csv(*mack, fs::path(out_dir) / "report.csv");
      summary["total_reserve"] = mack->total_reserve;
      summary["rmsep"] = mack->rmsep;
      summary["process_sd"] = mack->process_sd;
      summary["estimation_sd"] = mack->estimation_sd;
      if (truth_oll) {
        double err = 0.0;
        for (const auto& [i, r] : mack->reserves_by_period) {
          err += r - truth_oll->at(i);
        }
        summary["error"] = err;
        if (mack->rmsep > 0.0) {
          summary["pct_rmsep"] = std::abs(err) / mack->rmsep;
        }
      }
    } else {
      std::ofstream out(fs::path(out_dir) / "report.csv");
      out << "period,latest,ultimate,reserve\n";
      double total = 0.0;
      for (const auto& [i, ultimate] : cl.ultimates) {
        const double latest = tri.at(i, pf.latest_dev(i));
        out << i << ',' << oneshot::detail::format_double(latest) << ','
            << oneshot::detail::format_double(ultimate) << ','
            << oneshot::detail::format_double(ultimate - latest) << '\n';
        total += ultimate - latest;
      }
      out << "total,,," << oneshot::detail::format_double(total) << '\n';
      summary["total_reserve"] = total;
      if (truth_oll) {
        double err = 0.0;
        for (const auto& [i, ultimate] : cl.ultimates) {
          err += (ultimate - tri.at(i, pf.latest_dev(i))) - truth_oll->at(i);
        }
        summary["error"] = err;
      }
    }
    outputs.push_back("report.csv");
  } else {
    // Per-claim pipelines: RBNS prediction plus reporting-lag IBNR.
    oneshot::RbnsPrediction prediction;
    std::vector<oneshot::PtUFit> fits;
    if (method.kind == MethodChoice::kRbnsCl) {
      prediction = oneshot::predict_rbns_cl(pf);
    } else if (method.kind == MethodChoice::kLr) {
      spec.variant = method.variant;
      oneshot::OneshotResult result = oneshot::run_oneshot(pf, spec);
      prediction = std::move(result.prediction);
      fits = std::move(result.fits);
    } else {
      oneshot::FnnConfig fnn_config = oneshot::FnnConfig::from_config(file_config);
      fnn_config.seed = seed;
      oneshot::OneshotResult result = oneshot::run_oneshot_fnn(pf, spec, fnn_config);
      prediction = std::move(result.prediction);
      fits = std::move(result.fits);
    }

    const oneshot::STriangle s =
        oneshot::build_s_triangle(pf, prediction.per_claim_ultimates);
    const std::map<int, double> ibnr = oneshot::predict_ibnr_from_s(s);
    const oneshot::ReserveReport report = oneshot::assemble_report(
        pf, prediction, ibnr, truth_oll ? &*truth_oll : nullptr,
        mack ? std::optional<double>(mack->rmsep) : std::nullopt);
    oneshot::write_report_csv(report, (fs::path(out_dir) / "report.csv").string());
    oneshot::write_s_triangle_csv(s, (fs::path(out_dir) / "s_triangle.csv").string());
    outputs.push_back("report.csv");
    outputs.push_back("s_triangle.csv");
    if (!fits.empty()) {
      write_fits_csv(fits, fs::path(out_dir) / "coefficients.csv");
      outputs.push_back("coefficients.csv");
    }
    summary["report"] = oneshot::report_to_json(report);
    if (data.truth_square) {
      const auto rmse = oneshot::ind_rmse(prediction.per_claim_ultimates,
                                          *data.truth_square);
      json by_period;
      for (const auto& [i, v] : rmse) by_period[std::to_string(i)] = v;
      summary["ind_rmse"] = by_period;
    }
  }

  std::ofstream json_out(fs::path(out_dir) / "report.json");
  json_out << summary.dump(2) << '\n';
  outputs.push_back("report.json");
  json inputs;
  inputs["data"] = data_path;
  inputs["config"] = config_path;
  inputs["truth"] = truth_path;
  write_manifest(out_dir, "reserve", inputs, outputs, seed);
  std::cout << "reserve: method " << method_name << " done, outputs in "
            << out_dir << "\n";
  return kExitOk;
}

int cmd_bootstrap(const std::string& data_path, const std::string& method_name,
                  const std::string& config_path, const std::string& truth_path,
                  const std::string& out_dir, std::size_t replicates,
                  std::uint64_t seed, bool stratified) {
  const MethodChoice method = parse_method(method_name);
  oneshot::BootstrapMethod boot_method;
  switch (method.kind) {
    case MethodChoice::kMack:
    case MethodChoice::kClOneshot:
      boot_method = oneshot::BootstrapMethod::cl_factors();
      break;
    case MethodChoice::kRbnsCl:
      boot_method = oneshot::BootstrapMethod::rbns_cl();
      break;
    case MethodChoice::kLr: {
      oneshot::ModelSpec spec;
      if (!config_path.empty()) {
        spec = oneshot::ModelSpec::from_config(
            oneshot::Config::from_file(config_path));
      }
      spec.variant = method.variant;
      boot_method = oneshot::BootstrapMethod::regression(spec);
      break;
    }
    case MethodChoice::kFnn:
      throw CLI::ValidationError("--method",
                                 "bootstrap supports factor and linear "
                                 "regression methods only");
  }

  const LoadedData data = load_data(data_path, truth_path);
  // Truth (when present) rides along so replicate-level accuracy spreads can
  // be reported; fitting always happens on the censored view.
  const oneshot::Portfolio& pf =
      data.truth_square ? *data.truth_square : data.fitting;

  oneshot::BootstrapOptions options;
  options.stratified = stratified;
  const oneshot::BootstrapResult result = oneshot::bootstrap_estimation_error(
      pf, boot_method, replicates, seed, options);

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "replicates.csv");
    out << "replicate,total";
    for (const int i : result.period_ids) out << ",period_" << i;
    out << '\n';
    for (std::size_t b = 0; b < result.replicate_totals.size(); ++b) {
      out << b << ',' << oneshot::detail::format_double(result.replicate_totals[b]);
      for (std::size_t c = 0; c < result.period_ids.size(); ++c) {
        out << ','
            << oneshot::detail::format_double(result.replicate_period_reserves[b][c]);
      }
      out << '\n';
    }
  }
  json summary;
  summary["method"] = method_name;
  summary["replicates_requested"] = result.requested;
  summary["replicates_failed"] = result.failed;
  summary["seed"] = result.seed;
  summary["stratified"] = stratified;
  summary["mean"] = result.mean;
  summary["estimation_sd"] = result.sd;
  summary["point_total"] = result.point_total;
  summary["estimation_error_only"] = true;  // process variance not resampled
  json per_period;
  for (const int i : result.period_ids) {
    json p;
    p["mean"] = result.period_mean.at(i);
    p["sd"] = result.period_sd.at(i);
    p["point"] = result.point_by_period.at(i);
    if (result.ind_rmse_sd.count(i)) {
      p["ind_rmse_mean"] = result.ind_rmse_mean.at(i);
      p["ind_rmse_sd"] = result.ind_rmse_sd.at(i);
    }
    per_period[std::to_string(i)] = p;
  }
  summary["periods"] = per_period;
  std::ofstream json_out(fs::path(out_dir) / "summary.json");
  json_out << summary.dump(2) << '\n';

  json inputs;
  inputs["data"] = data_path;
  inputs["config"] = config_path;
  inputs["truth"] = truth_path;
  inputs["replicates"] = replicates;
  write_manifest(out_dir, "bootstrap", inputs,
                 {"replicates.csv", "summary.json"}, seed);
  std::cout << "bootstrap: mean " << result.mean << ", estimation sd "
            << result.sd << " (" << result.replicate_totals.size()
            << " replicates)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-shot claims reserving toolkit"};
  app.require_subcommand(1);

  std::string data_path;
  std::string config_path;
  std::string truth_path;
  std::string out_dir = ".";
  std::string method = "mack";
  std::uint64_t seed = 1;
  std::size_t boot_b = 1000;
  bool stratified = false;
  bool seed_given = false;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic full square");
  sim->add_option("--config", config_path, "simulator configuration file");
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--seed", seed, "RNG seed (overrides config)")
      ->envname("ONESHOT_SEED")
      ->each([&](const std::string&) { seed_given = true; });

  auto* res = app.add_subcommand("reserve", "fit and report reserves");
  res->add_option("--data", data_path, "claims CSV")->required();
  res->add_option("--method", method,
                  "mack|cl-oneshot|rbns-cl|lr:<variant>|fnn")
      ->required();
  res->add_option("--config", config_path, "model configuration file");
  res->add_option("--truth", truth_path, "ground-truth full-square CSV");
  res->add_option("--out", out_dir, "output directory")->required();
  res->add_option("--seed", seed, "RNG seed")->envname("ONESHOT_SEED");

  auto* boot = app.add_subcommand("bootstrap",
                                  "estimation error via claims resampling");
  boot->add_option("--data", data_path, "claims CSV")->required();
  boot->add_option("--method", method, "cl-oneshot|rbns-cl|lr:<variant>")
      ->required();
  boot->add_option("--config", config_path, "model configuration file");
  boot->add_option("--truth", truth_path, "ground-truth full-square CSV");
  boot->add_option("--out", out_dir, "output directory")->required();
  boot->add_option("--boot-B", boot_b, "number of bootstrap replicates")
      ->envname("ONESHOT_BOOT_B");
  boot->add_option("--seed", seed, "RNG seed")->envname("ONESHOT_SEED");
  boot->add_flag("--stratified", stratified,
                 "resample within accident periods instead of one pooled urn");

  try {
    app.parse(argc, argv);
    if (sim->parsed()) {
      return cmd_simulate(config_path, out_dir,
                          seed_given ? std::optional<std::uint64_t>(seed)
                                     : std::nullopt);
    }
    if (res->parsed()) {
      return cmd_reserve(data_path, method, config_path, truth_path, out_dir,
                         seed);
    }
    return cmd_bootstrap(data_path, method, config_path, truth_path, out_dir,
                         boot_b, seed, stratified);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const oneshot::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const oneshot::SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const oneshot::DegenerateError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const oneshot::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const oneshot::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
