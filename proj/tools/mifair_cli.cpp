// Command-line front end over the C interface.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "mifair/mifair.h"

namespace fs = std::filesystem;

namespace {

int fail(int status, const std::string& context) {
  std::cerr << "mifair: " << context << ": " << mifair_last_error() << '\n';
  return status;
}

struct AssessArgs {
  std::string data, schema, model, predictions, notions, out;
  std::optional<double> threshold;
  bool normalize = false, hard = false;
  int class_index = -1;
  double lambda0 = 1.0, lambda1 = 1.0;
};

int run_assess(const AssessArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  if (a.model.empty() == a.predictions.empty()) {
    std::cerr << "mifair: assess needs exactly one of --model or --predictions\n";
    return MIFAIR_E_INPUT;
  }
  if (a.schema.empty() && a.model.empty()) {
    std::cerr << "mifair: assess with --predictions needs --schema\n";
    return MIFAIR_E_INPUT;
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) {
    std::cerr << "mifair: cannot create '" << a.out << "': " << ec.message() << '\n';
    return MIFAIR_E_INPUT;
  }

  mifair_model* model = nullptr;
  mifair_dataset* ds = nullptr;
  mifair_predictions* pred = nullptr;
  auto cleanup = [&] {
    mifair_predictions_free(pred);
    mifair_dataset_free(ds);
    mifair_model_free(model);
  };
  int rc = MIFAIR_OK;
  if (!a.model.empty() && (rc = mifair_model_load(a.model.c_str(), &model)) != MIFAIR_OK) {
    cleanup();
    return fail(rc, "loading model");
  }
  if ((rc = mifair_dataset_load(a.data.c_str(), a.schema.empty() ? nullptr : a.schema.c_str(), model, &ds)) !=
      MIFAIR_OK) {
    cleanup();
    return fail(rc, "loading data");
  }
  rc = model ? mifair_model_predict(model, ds, &pred) : mifair_predictions_load(a.predictions.c_str(), ds, &pred);
  if (rc != MIFAIR_OK) {
    cleanup();
    return fail(rc, "loading predictions");
  }

  mifair_assess_options opts;
  mifair_assess_defaults(&opts);
  opts.notions = a.notions.c_str();
  opts.normalize = a.normalize;
  opts.hard = a.hard;
  opts.threshold = a.threshold.value_or(0.0);
  opts.lambda0 = a.lambda0;
  opts.lambda1 = a.lambda1;
  opts.class_index = a.class_index;
  const fs::path report = fs::path(a.out) / "report.csv";
  int verdict = -1;
  rc = mifair_assess(ds, pred, &opts, report.string().c_str(), &verdict);
  const std::size_t rows = mifair_dataset_rows(ds);
  const std::size_t groups = mifair_dataset_groups(ds);
  cleanup();
  if (rc != MIFAIR_OK && rc != MIFAIR_E_THRESHOLD) return fail(rc, "assessing");

  auto absolute = [](const std::string& p) { return p.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(fs::absolute(p).lexically_normal().string()); };
  nlohmann::ordered_json manifest{
      {"manifest_version", 1},
      {"tool", "mifair"},
      {"version", mifair_version()},
      {"command", "assess"},
      {"inputs",
       {{"data", absolute(a.data)},
        {"schema", absolute(a.schema)},
        {"model", absolute(a.model)},
        {"predictions", absolute(a.predictions)}}},
      {"options",
       {{"notions", a.notions.empty() ? "SP,EO,PE,EOdds,OAE" : a.notions},
        {"normalize", a.normalize},
        {"hard", a.hard},
        {"threshold", a.threshold ? nlohmann::ordered_json(*a.threshold) : nlohmann::ordered_json(nullptr)},
        {"lambda0", a.lambda0},
        {"lambda1", a.lambda1},
        {"class_index", a.class_index < 0 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(a.class_index)}}},
      {"rows", rows},
      {"groups", groups},
      {"verdict", verdict < 0 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(verdict ? "pass" : "fail")},
      {"artifacts", {{{"kind", "report"}, {"path", "report.csv"}}, {{"kind", "manifest"}, {"path", "manifest.json"}}}},
      {"timings", {{"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}}}};
  std::ofstream(fs::path(a.out) / "manifest.json") << manifest.dump(2) << '\n';

  std::cout << "report written to " << report.string() << '\n';
  if (verdict >= 0) std::cout << "verdict: " << (verdict ? "pass" : "fail") << '\n';
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mutual-information group fairness: assess, train, sweep, selfcheck"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mifair_version()));

  AssessArgs assess;
  auto* cmd_assess = app.add_subcommand("assess", "Compute fairness metrics for a prediction dump or a checkpoint");
  cmd_assess->add_option("--data", assess.data, "CSV file to assess")->required();
  cmd_assess->add_option("--schema", assess.schema, "Schema JSON (optional with --model)");
  cmd_assess->add_option("--model", assess.model, "Checkpoint written by 'train'");
  cmd_assess->add_option("--predictions", assess.predictions, "Per-row class probabilities, header = class names");
  cmd_assess->add_option("--notions", assess.notions, "Comma-separated subset of SP,EO,PE,EOdds,OAE");
  cmd_assess->add_option("--threshold", assess.threshold, "Verdict threshold s on the matching pairwise tables");
  cmd_assess->add_option("--out", assess.out, "Output directory")->required();
  cmd_assess->add_flag("--normalize", assess.normalize, "Also report iota divided by the benefit entropy");
  cmd_assess->add_flag("--hard", assess.hard, "Evaluate iota on one-hot argmax predictions");
  cmd_assess->add_option("--class-index", assess.class_index, "Class the separation notions condition on");
  cmd_assess->add_option("--lambda0", assess.lambda0, "EOdds weight on the Y != c term");
  cmd_assess->add_option("--lambda1", assess.lambda1, "EOdds weight on the Y = c term");

  std::string config, out, data, schema;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 0;
  std::optional<double> threshold;
  auto run_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "Config document or a previous run manifest")->required();
    cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--data", data, "Override the data path");
    cmd->add_option("--schema", schema, "Override the schema");
    cmd->add_option("--seed", seed, "Override the training seed");
  };
  auto* cmd_train = app.add_subcommand("train", "Train one model and write checkpoint, trace and report");
  run_options(cmd_train);
  auto* cmd_sweep = app.add_subcommand("sweep", "Run an eta-by-seed sweep and write trial and aggregate tables");
  run_options(cmd_sweep);
  cmd_sweep->add_option("--jobs", jobs, "Concurrent trials (MIFAIR_JOBS takes precedence)");
  cmd_sweep->add_option("--threshold", threshold, "Override the sweep threshold s");

  std::uint64_t check_seed = 20240601;
  std::string check_out;
  auto* cmd_check = app.add_subcommand("selfcheck", "Run the oracle batteries");
  cmd_check->add_option("--seed", check_seed, "Seed for the random instances");
  cmd_check->add_option("--out", check_out, "Also write the summary to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return MIFAIR_E_INPUT;
  }

  if (cmd_assess->parsed()) return run_assess(assess);

  if (cmd_train->parsed() || cmd_sweep->parsed()) {
    mifair_run_options opts;
    mifair_run_defaults(&opts);
    if (!data.empty()) opts.data_path = data.c_str();
    if (!schema.empty()) opts.schema_path = schema.c_str();
    if (seed) {
      opts.has_seed = 1;
      opts.seed = *seed;
    }
    opts.jobs = jobs;
    opts.threshold = threshold.value_or(0.0);
    const bool is_train = cmd_train->parsed();
    int rc = is_train ? mifair_run_train(config.c_str(), out.c_str(), &opts)
                      : mifair_run_sweep(config.c_str(), out.c_str(), &opts);
    if (rc != MIFAIR_OK) return fail(rc, is_train ? "train" : "sweep");
    std::cout << "artifacts written to " << out << '\n';
    if (!is_train) {
      std::ifstream summary(fs::path(out) / "summary.txt");
      std::cout << summary.rdbuf();
    }
    return MIFAIR_OK;
  }

  char* summary = nullptr;
  int rc = mifair_selfcheck(check_seed, &summary);
  if (summary) {
    std::cout << summary;
    if (!check_out.empty()) std::ofstream(check_out) << summary;
    mifair_string_free(summary);
  }
  if (rc != MIFAIR_OK) return fail(rc, "selfcheck");
  return MIFAIR_OK;
}
