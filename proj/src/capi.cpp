#include "mifair/mifair.h"

#include <chrono>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "io_util.hpp"
#include "mifair/config.hpp"
#include "mifair/data.hpp"
#include "mifair/error.hpp"
#include "mifair/estimation.hpp"
#include "mifair/experiment.hpp"
#include "mifair/metrics.hpp"
#include "mifair/model.hpp"
#include "mifair/training.hpp"
#include "mifair/verify.hpp"

using namespace mifair;

struct mifair_dataset {
  Dataset data;
  SubgroupIndex groups;
};

struct mifair_model {
  ModelParams params;
  Json metadata;
};

struct mifair_predictions {
  Prediction pred;
};

namespace {

constexpr const char* kVersion = "0.1.0";
thread_local std::string last_error;

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::coverage: return MIFAIR_E_COVERAGE;
    case ErrorKind::divergence: return MIFAIR_E_INTERNAL;
    default: return MIFAIR_E_INPUT;
  }
}

template <class F>
int guard(F&& f) noexcept {
  try {
    last_error.clear();
    return f();
  } catch (const Error& e) {
    last_error = std::string(to_string(e.kind())) + " error: " + e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return MIFAIR_E_INTERNAL;
  } catch (const std::exception& e) {
    last_error = std::string("internal error: ") + e.what();
    return MIFAIR_E_INTERNAL;
  } catch (...) {
    last_error = "internal error";
    return MIFAIR_E_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw Error(ErrorKind::value, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

AssessOptions assess_options(const mifair_assess_options* in) {
  mifair_assess_options o;
  mifair_assess_defaults(&o);
  if (in) o = *in;
  AssessOptions out;
  if (o.notions && *o.notions) {
    out.notions.clear();
    std::stringstream names(o.notions);
    std::string name;
    while (std::getline(names, name, ',')) {
      auto n = parse_notion(name);
      if (!n) throw Error(ErrorKind::config, "unknown fairness notion '" + name + "'");
      out.notions.push_back(*n);
    }
  }
  out.normalize = o.normalize != 0;
  out.hard = o.hard != 0;
  if (o.lambda0 > 0) out.lambda0 = o.lambda0;
  if (o.lambda1 > 0) out.lambda1 = o.lambda1;
  if (o.class_index >= 0) out.class_index = o.class_index;
  return out;
}

RunConfig resolve_run(const char* config_path, const mifair_run_options* opts) {
  require(config_path, "config path");
  RunConfig rc = load_run_config(config_path);
  if (opts && opts->data_path) {
    rc.data.csv = std::filesystem::absolute(opts->data_path).lexically_normal();
    rc.data.synthetic.reset();
  }
  if (opts && opts->schema_path) rc.schema = load_schema(opts->schema_path);
  if (opts && opts->has_seed) rc.train.seed = opts->seed;
  if (rc.sweep) {
    rc.sweep->base = rc.train;
    if (opts && opts->threshold > 0) rc.sweep->threshold = opts->threshold;
    if (opts && opts->jobs > 0) rc.sweep->jobs = opts->jobs;
    rc.sweep->validate();
  }
  return rc;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

void write_manifest(const std::filesystem::path& out_dir, const std::string& command, const RunConfig& rc,
                    const std::vector<std::pair<std::string, std::string>>& artifacts, const Json& timings,
                    const std::vector<std::string>& warnings) {
  Json arts = Json::array();
  for (const auto& [kind, name] : artifacts) arts.push_back({{"kind", kind}, {"path", name}});
  arts.push_back({{"kind", "manifest"}, {"path", "manifest.json"}});
  Json seeds{{"train", rc.train.seed}, {"split", rc.data.split_seed}};
  if (rc.data.synthetic) seeds["synthetic"] = rc.data.synthetic_seed;
  if (rc.sweep) seeds["sweep"] = rc.sweep->seeds;
  Json m{{"manifest_version", 1},   {"tool", "mifair"},  {"version", kVersion}, {"command", command},
         {"config", run_config_to_json(rc)}, {"seeds", seeds}, {"artifacts", arts}, {"timings", timings},
         {"warnings", warnings}};
  detail::write_text_file(out_dir / "manifest.json", m.dump(2) + "\n");
}

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create '" + dir.string() + "': " + ec.message());
}

}  // namespace

extern "C" {

const char* mifair_version(void) { return kVersion; }
const char* mifair_last_error(void) { return last_error.c_str(); }
void mifair_string_free(char* s) { std::free(s); }

int mifair_dataset_load(const char* csv_path, const char* schema_path, const mifair_model* model,
                        mifair_dataset** out) {
  return guard([&] {
    require(csv_path, "csv path");
    require(out, "output handle");
    *out = nullptr;
    SchemaConfig schema;
    Encoder encoder;
    LoadOptions opts;
    if (schema_path) {
      schema = load_schema(schema_path);
    } else if (model && model->metadata.contains("schema") && !model->metadata["schema"].is_null()) {
      schema = schema_from_json(model->metadata["schema"]);
    } else {
      throw Error(ErrorKind::config, "a schema is required (none given and the model carries none)");
    }
    if (model) {
      if (!model->metadata.contains("encoder")) throw Error(ErrorKind::config, "checkpoint has no stored encoding");
      encoder = encoder_from_json(model->metadata["encoder"]);
      opts.encoder = &encoder;
    }
    auto loaded = load_csv(csv_path, schema, opts);
    auto* ds = new mifair_dataset{std::move(loaded.data), {}};
    ds->groups = enumerate_subgroups(ds->data);
    *out = ds;
    return MIFAIR_OK;
  });
}

void mifair_dataset_free(mifair_dataset* ds) { delete ds; }
size_t mifair_dataset_rows(const mifair_dataset* ds) { return ds ? ds->data.rows() : 0; }
size_t mifair_dataset_classes(const mifair_dataset* ds) { return ds ? ds->data.num_classes() : 0; }
size_t mifair_dataset_groups(const mifair_dataset* ds) { return ds ? ds->groups.size() : 0; }

int mifair_model_load(const char* checkpoint_path, mifair_model** out) {
  return guard([&] {
    require(checkpoint_path, "checkpoint path");
    require(out, "output handle");
    *out = nullptr;
    auto ck = load_checkpoint(checkpoint_path);
    Json meta = Json::object();
    if (!ck.metadata.empty()) {
      try {
        meta = Json::parse(ck.metadata);
      } catch (const Json::exception&) {
        throw Error(ErrorKind::value, "checkpoint metadata is not valid JSON");
      }
    }
    *out = new mifair_model{std::move(ck.params), std::move(meta)};
    return MIFAIR_OK;
  });
}

void mifair_model_free(mifair_model* model) { delete model; }

int mifair_model_predict(const mifair_model* model, const mifair_dataset* ds, mifair_predictions** out) {
  return guard([&] {
    require(model, "model");
    require(ds, "dataset");
    require(out, "output handle");
    *out = nullptr;
    if (model->params.sizes.back() != ds->data.num_classes())
      throw Error(ErrorKind::shape, "model has " + std::to_string(model->params.sizes.back()) +
                                        " outputs but the data has " + std::to_string(ds->data.num_classes()) +
                                        " classes");
    *out = new mifair_predictions{Prediction(forward(model->params, ds->data.features()))};
    return MIFAIR_OK;
  });
}

int mifair_predictions_load(const char* csv_path, const mifair_dataset* ds, mifair_predictions** out) {
  return guard([&] {
    require(csv_path, "predictions path");
    require(ds, "dataset");
    require(out, "output handle");
    *out = nullptr;
    std::istringstream in(detail::read_text_file(csv_path));
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::value, "predictions file is empty");
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    const auto header = split_csv_line(line);
    if (header != ds->data.class_names()) {
      std::string expected;
      for (const auto& c : ds->data.class_names()) expected += (expected.empty() ? "" : ",") + c;
      throw Error(ErrorKind::schema, "predictions header must list the classes " + expected);
    }
    std::vector<double> values;
    std::size_t rows = 0, lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != header.size())
        throw Error(ErrorKind::shape, "predictions line " + std::to_string(lineno) + " has " +
                                          std::to_string(cells.size()) + " cells, expected " +
                                          std::to_string(header.size()));
      for (const auto& c : cells) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
        if (ec != std::errc() || ptr != c.data() + c.size())
          throw Error(ErrorKind::value, "predictions line " + std::to_string(lineno) + ": '" + c + "' is not a number");
        values.push_back(v);
      }
      ++rows;
    }
    if (rows != ds->data.rows())
      throw Error(ErrorKind::shape, "predictions have " + std::to_string(rows) + " rows but the data has " +
                                        std::to_string(ds->data.rows()) + " (after dropping rows with missing values)");
    Matrix probs = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(rows),
                                            static_cast<Eigen::Index>(header.size()));
    *out = new mifair_predictions{Prediction(std::move(probs))};
    return MIFAIR_OK;
  });
}

int mifair_predictions_from_array(const double* probs, size_t rows, size_t classes, mifair_predictions** out) {
  return guard([&] {
    require(probs, "probabilities");
    require(out, "output handle");
    *out = nullptr;
    Matrix m = Eigen::Map<const Matrix>(probs, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(classes));
    *out = new mifair_predictions{Prediction(std::move(m))};
    return MIFAIR_OK;
  });
}

void mifair_predictions_free(mifair_predictions* pred) { delete pred; }

void mifair_assess_defaults(mifair_assess_options* opts) {
  if (!opts) return;
  *opts = mifair_assess_options{nullptr, 0, 0, 0.0, 1.0, 1.0, -1};
}

int mifair_assess(const mifair_dataset* ds, const mifair_predictions* pred, const mifair_assess_options* opts,
                  const char* report_path, int* verdict) {
  if (verdict) *verdict = -1;
  return guard([&] {
    require(ds, "dataset");
    require(pred, "predictions");
    require(report_path, "report path");
    if (pred->pred.rows() != ds->data.rows())
      throw Error(ErrorKind::shape, "predictions have " + std::to_string(pred->pred.rows()) +
                                        " rows but the data has " + std::to_string(ds->data.rows()));
    if (pred->pred.num_classes() != ds->data.num_classes())
      throw Error(ErrorKind::shape, "predictions have " + std::to_string(pred->pred.num_classes()) +
                                        " classes but the data has " + std::to_string(ds->data.num_classes()));
    const auto options = assess_options(opts);
    const auto report = assess(ds->data, pred->pred, options);
    std::string text = report_csv(report);
    int status = MIFAIR_OK;
    if (opts && opts->threshold > 0) {
      if (opts->threshold > 1) throw Error(ErrorKind::config, "threshold s must lie in (0, 1]");
      const bool pass = within_threshold(report, options.notions, opts->threshold);
      text += "verdict,,," + std::string(pass ? "pass" : "fail") + "\n";
      if (verdict) *verdict = pass ? 1 : 0;
      if (!pass) {
        status = MIFAIR_E_THRESHOLD;
        last_error = "fairness verdict failed at threshold " + detail::format_double(opts->threshold);
      }
    }
    detail::write_text_file(report_path, text);
    return status;
  });
}

int mifair_mutual_information(const double* joint, size_t rows, size_t cols, double* out) {
  return guard([&] {
    require(joint, "joint table");
    require(out, "output");
    if (rows == 0 || cols == 0) throw Error(ErrorKind::empty_data, "joint table is empty");
    EmpiricalJoint j;
    j.joint = Eigen::Map<const Matrix>(joint, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if ((j.joint.array() < 0.0).any() || std::abs(j.joint.sum() - 1.0) > 1e-9)
      throw Error(ErrorKind::value, "joint table must be nonnegative and sum to 1");
    j.group_marginal = j.joint.rowwise().sum();
    j.benefit_marginal = j.joint.colwise().sum().transpose();
    j.effective_count = 1.0;
    *out = mutual_information(j);
    return MIFAIR_OK;
  });
}

int mifair_entropy(const double* dist, size_t n, double* out) {
  return guard([&] {
    require(dist, "distribution");
    require(out, "output");
    *out = entropy(std::span<const double>(dist, n));
    return MIFAIR_OK;
  });
}

void mifair_run_defaults(mifair_run_options* opts) {
  if (!opts) return;
  *opts = mifair_run_options{nullptr, nullptr, 0, 0, 0, 0.0};
}

int mifair_run_train(const char* config_path, const char* out_dir, const mifair_run_options* opts) {
  return guard([&] {
    require(out_dir, "output directory");
    const auto start = std::chrono::steady_clock::now();
    const RunConfig rc = resolve_run(config_path, opts);
    const std::filesystem::path dir(out_dir);
    make_dir(dir);

    const auto load_start = std::chrono::steady_clock::now();
    const auto data = prepare_data(rc);
    const double load_seconds = seconds_since(load_start);

    const auto train_start = std::chrono::steady_clock::now();
    TrainResult result;
    try {
      result = train(data.train, &data.test, rc.train);
    } catch (const TrainingDiverged& e) {
      detail::write_text_file(dir / "trace.csv", trace_csv(e.trace()));
      throw;
    }
    const double train_seconds = seconds_since(train_start);

    Json attributes = Json::array();
    for (const auto& a : data.train.attributes()) attributes.push_back({{"name", a.name}, {"categories", a.categories}});
    Json meta{{"schema", rc.schema ? schema_to_json(*rc.schema) : Json(nullptr)},
              {"encoder", encoder_to_json(data.encoder)},
              {"classes", data.train.class_names()},
              {"attributes", attributes},
              {"notion", std::string(notion_name(rc.train.notion.tag))},
              {"eta", rc.train.eta},
              {"seed", rc.train.seed}};
    save_checkpoint(dir / "model.ckpt", result.params, meta.dump());
    detail::write_text_file(dir / "trace.csv", trace_csv(result.trace));
    write_report(*result.trace.final_report, dir / "report.csv");

    Json timings{{"load_seconds", load_seconds},
                 {"train_seconds", train_seconds},
                 {"total_seconds", seconds_since(start)}};
    write_manifest(dir, "train", rc, {{"checkpoint", "model.ckpt"}, {"trace", "trace.csv"}, {"report", "report.csv"}},
                   timings, result.trace.warnings);
    return MIFAIR_OK;
  });
}

int mifair_run_sweep(const char* config_path, const char* out_dir, const mifair_run_options* opts) {
  return guard([&] {
    require(out_dir, "output directory");
    const auto start = std::chrono::steady_clock::now();
    const RunConfig rc = resolve_run(config_path, opts);
    if (!rc.sweep) throw Error(ErrorKind::config, "the config has no sweep section");
    const std::filesystem::path dir(out_dir);
    make_dir(dir);

    const auto load_start = std::chrono::steady_clock::now();
    const auto data = prepare_data(rc);
    const double load_seconds = seconds_since(load_start);

    const auto sweep_start = std::chrono::steady_clock::now();
    const auto report = sweep(*rc.sweep, data.train, data.test);
    const double sweep_seconds = seconds_since(sweep_start);
    emit_report(report, dir);

    std::vector<std::string> warnings;
    if (report.failures() > 0) warnings.push_back(std::to_string(report.failures()) + " trial(s) failed");
    Json timings{{"load_seconds", load_seconds},
                 {"sweep_seconds", sweep_seconds},
                 {"total_seconds", seconds_since(start)},
                 {"jobs", resolve_jobs(rc.sweep->jobs)}};
    write_manifest(dir, "sweep", rc,
                   {{"trials", "trials.csv"}, {"aggregates", "aggregates.csv"}, {"summary", "summary.txt"}}, timings,
                   warnings);
    return MIFAIR_OK;
  });
}

int mifair_selfcheck(uint64_t seed, char** summary) {
  return guard([&] {
    if (summary) *summary = nullptr;
    const auto result = verify::run_selfcheck(seed);
    if (summary) *summary = dup_string(result.text());
    if (!result.pass()) {
      last_error = "self-check failed";
      return MIFAIR_E_INTERNAL;
    }
    return MIFAIR_OK;
  });
}

}  // extern "C"
