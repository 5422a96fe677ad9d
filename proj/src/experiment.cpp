#include "mifair/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <thread>

#include "io_util.hpp"
#include "mifair/config.hpp"
#include "mifair/error.hpp"

namespace mifair {

namespace {

bool same_eta(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

}  // namespace

void SweepConfig::validate() const {
  base.validate();
  if (seeds.empty()) throw Error(ErrorKind::config, "a sweep needs at least one seed");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error(ErrorKind::config, "threshold s must lie in (0, 1]");
  for (double eta : etas)
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error(ErrorKind::config, "sweep eta values must be finite and >= 0");
  if (assess.notions.empty()) throw Error(ErrorKind::config, "a sweep needs at least one notion to evaluate");
  for (const auto& o : overrides)
    for (const auto& step : o.lr_schedule)
      if (!(step.rate > 0.0)) throw Error(ErrorKind::config, "override learning rates must be positive");
}

std::vector<double> SweepConfig::grid() const {
  std::vector<double> g = etas;
  g.push_back(0.0);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end(), same_eta), g.end());
  return g;
}

TrainConfig SweepConfig::trial_config(double eta, std::uint64_t seed) const {
  TrainConfig cfg = base;
  cfg.eta = eta;
  cfg.seed = seed;
  cfg.evaluate_each_epoch = false;
  for (const auto& o : overrides)
    if (same_eta(o.eta, eta)) cfg.lr_schedule = o.lr_schedule;
  return cfg;
}

std::vector<double> log_grid(double log10_lo, double log10_hi, std::size_t points) {
  if (points == 0) throw Error(ErrorKind::config, "a log grid needs at least one point");
  std::vector<double> out;
  for (std::size_t i = 0; i < points; ++i) {
    double t = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    out.push_back(std::pow(10.0, log10_lo + t * (log10_hi - log10_lo)));
  }
  return out;
}

std::size_t SweepReport::failures() const {
  return static_cast<std::size_t>(std::count_if(trials.begin(), trials.end(), [](const Trial& t) { return t.failed; }));
}

int SweepReport::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return static_cast<int>(i);
  return -1;
}

std::optional<double> SweepReport::mean_at(std::size_t grid_index, const std::string& name) const {
  int c = column(name);
  if (c < 0 || grid_index >= aggregates.size()) return std::nullopt;
  return aggregates[grid_index].mean[static_cast<std::size_t>(c)];
}

std::string pair_column(PairwiseKind kind, const std::string& a, const std::string& b) {
  return std::string(pairwise_name(kind)) + "[" + a + ";" + b + "]";
}

std::size_t resolve_jobs(std::size_t requested) {
  if (const char* env = std::getenv("MIFAIR_JOBS"); env && *env) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw Error(ErrorKind::config, "MIFAIR_JOBS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

using Record = std::vector<std::pair<std::string, std::optional<double>>>;

Record trial_record(const Trial& t) {
  Record r;
  r.emplace_back("final_loss", t.failed ? std::nullopt : std::optional<double>(t.final_loss));
  r.emplace_back("final_train_iota", t.failed ? std::nullopt : std::optional<double>(t.final_iota));
  if (!t.report) return r;
  const auto& rep = *t.report;
  r.emplace_back("ACC_mean", rep.acc_mean);
  r.emplace_back("ACC_weighted", rep.acc_weighted);
  if (rep.ddp) r.emplace_back("DDP", rep.ddp);
  for (const auto& rec : rep.iotas) {
    const std::string name = "iota_" + std::string(notion_name(rec.notion));
    r.emplace_back(name, rec.value ? std::optional<double>(rec.value->raw) : std::nullopt);
    if (rec.value && rec.value->normalized) r.emplace_back(name + "_normalized", rec.value->normalized);
  }
  for (const auto& table : rep.tables) {
    const std::string kind(pairwise_name(table.kind));
    std::optional<double> max_abs, mean_abs;
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& e : table.entries)
      if (e.value) {
        sum += std::abs(*e.value);
        ++defined;
        max_abs = std::max(max_abs.value_or(0.0), std::abs(*e.value));
      }
    if (defined) mean_abs = sum / static_cast<double>(defined);
    r.emplace_back("max_abs_" + kind, max_abs);
    r.emplace_back("mean_abs_" + kind, mean_abs);
    for (const auto& e : table.entries)
      r.emplace_back(pair_column(table.kind, rep.group_labels[e.a], rep.group_labels[e.b]), e.value);
  }
  return r;
}

}  // namespace

void aggregate(SweepReport& report) {
  report.columns.clear();
  report.aggregates.clear();
  report.crossings.clear();

  std::vector<Record> records;
  std::map<std::string, std::size_t> index;
  for (const auto& t : report.trials) {
    records.push_back(trial_record(t));
    for (const auto& [name, value] : records.back())
      if (!index.count(name)) {
        index[name] = report.columns.size();
        report.columns.push_back({name, {}});
      }
  }
  for (auto& col : report.columns) col.values.assign(report.trials.size(), std::nullopt);
  for (std::size_t t = 0; t < records.size(); ++t)
    for (const auto& [name, value] : records[t])
      if (!report.trials[t].failed) report.columns[index[name]].values[t] = value;

  for (double eta : report.grid) {
    Aggregate agg;
    agg.eta = eta;
    std::vector<std::size_t> members;
    for (std::size_t t = 0; t < report.trials.size(); ++t)
      if (same_eta(report.trials[t].eta, eta)) {
        if (report.trials[t].failed)
          ++agg.failed;
        else
          members.push_back(t);
      }
    agg.ok = members.size();
    for (const auto& col : report.columns) {
      std::vector<double> xs;
      for (auto t : members)
        if (col.values[t]) xs.push_back(*col.values[t]);
      if (xs.empty()) {
        agg.mean.push_back(std::nullopt);
        agg.stddev.push_back(std::nullopt);
        continue;
      }
      double sum = 0.0;
      for (double x : xs) sum += x;
      const double mean = sum / static_cast<double>(xs.size());
      double ss = 0.0;
      for (double x : xs) ss += (x - mean) * (x - mean);
      agg.mean.push_back(mean);
      agg.stddev.push_back(xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0);
    }
    report.aggregates.push_back(std::move(agg));
  }

  for (PairwiseKind kind : kAllPairwise) {
    const std::string prefix = std::string(pairwise_name(kind)) + "[";
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < report.columns.size(); ++c)
      if (report.columns[c].name.rfind(prefix, 0) == 0) cols.push_back(c);
    if (cols.empty()) continue;
    Crossing crossing;
    crossing.kind = kind;
    for (const auto& agg : report.aggregates) {
      if (agg.ok == 0) continue;
      std::size_t defined = 0;
      bool all_within = true;
      for (auto c : cols)
        if (agg.mean[c]) {
          ++defined;
          all_within = all_within && std::abs(*agg.mean[c]) <= report.config.threshold;
        }
      if (defined > 0 && all_within) {
        crossing.eta = agg.eta;
        crossing.pairs = defined;
        break;
      }
    }
    report.crossings.push_back(crossing);
  }
}

SweepReport sweep(const SweepConfig& config, const Dataset& train_set, const Dataset& eval_set) {
  config.validate();
  SweepReport report;
  report.config = config;
  report.grid = config.grid();
  for (double eta : report.grid)
    for (auto seed : config.seeds) report.trials.push_back({eta, seed, false, {}, std::nullopt, 0.0, 0.0});

  const auto eval_groups = enumerate_subgroups(eval_set);
  report.group_labels = eval_groups.labels;
  report.group_counts = eval_groups.counts;

  AssessOptions assess_opts = config.assess;
  if (!assess_opts.class_index) assess_opts.class_index = config.base.notion.class_index;

  auto run_one = [&](Trial& trial) {
    try {
      const auto cfg = config.trial_config(trial.eta, trial.seed);
      auto result = train(train_set, nullptr, cfg);
      trial.final_loss = result.trace.epochs.back().loss;
      trial.final_iota = result.trace.epochs.back().iota;
      trial.report = assess(eval_set, Prediction(forward(result.params, eval_set.features())), assess_opts);
    } catch (const std::exception& e) {
      trial.failed = true;
      trial.error = e.what();
      trial.report.reset();
    }
  };

  const std::size_t workers = std::min(resolve_jobs(config.jobs), report.trials.size());
  if (workers <= 1) {
    for (auto& t : report.trials) run_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < report.trials.size(); i = next++) run_one(report.trials[i]);
      });
    for (auto& th : pool) th.join();
  }
  aggregate(report);
  return report;
}

namespace {

std::string fixed(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

std::string trials_csv(const SweepReport& rep) {
  std::ostringstream out;
  out << "eta,seed,status,error";
  for (const auto& c : rep.columns) out << ',' << detail::csv_cell(c.name);
  out << '\n';
  for (std::size_t t = 0; t < rep.trials.size(); ++t) {
    const auto& trial = rep.trials[t];
    out << detail::format_double(trial.eta) << ',' << trial.seed << ',' << (trial.failed ? "failed" : "ok") << ','
        << detail::csv_cell(trial.error);
    for (const auto& c : rep.columns) out << ',' << detail::format_optional(c.values[t]);
    out << '\n';
  }
  return out.str();
}

std::string aggregates_csv(const SweepReport& rep) {
  std::ostringstream out;
  out << "eta,ok,failed";
  for (const auto& c : rep.columns) out << ',' << detail::csv_cell(c.name + "_mean") << ',' << detail::csv_cell(c.name + "_std");
  out << '\n';
  for (const auto& agg : rep.aggregates) {
    out << detail::format_double(agg.eta) << ',' << agg.ok << ',' << agg.failed;
    for (std::size_t c = 0; c < rep.columns.size(); ++c)
      out << ',' << detail::format_optional(agg.mean[c]) << ',' << detail::format_optional(agg.stddev[c]);
    out << '\n';
  }
  return out.str();
}

}  // namespace

std::string summary_text(const SweepReport& rep) {
  std::ostringstream out;
  out << "# sweep summary\n";
  out << "notion " << notion_name(rep.config.base.notion.tag) << '\n';
  out << "grid";
  for (double eta : rep.grid) out << ' ' << detail::format_double(eta);
  out << "\nseeds";
  for (auto s : rep.config.seeds) out << ' ' << s;
  out << "\nthreshold " << detail::format_double(rep.config.threshold) << '\n';
  out << "trials " << rep.trials.size() << " failed " << rep.failures() << '\n';
  out << "groups " << rep.group_labels.size() << '\n';
  for (std::size_t g = 0; g < rep.group_labels.size(); ++g)
    out << "  " << rep.group_labels[g] << " n=" << rep.group_counts[g] << '\n';

  out << "\n# threshold crossing (smallest eta with every per-pair mean |x| <= s)\n";
  out << "kind eta pairs\n";
  for (const auto& c : rep.crossings)
    out << pairwise_name(c.kind) << ' ' << (c.eta ? detail::format_double(*c.eta) : std::string("none")) << ' '
        << c.pairs << '\n';

  out << "\n# per-eta means\n";
  std::vector<std::string> shown;
  for (const auto& c : rep.columns)
    if (c.name.find('[') == std::string::npos) shown.push_back(c.name);
  out << "eta ok failed";
  for (const auto& name : shown) out << ' ' << name;
  out << '\n';
  for (std::size_t i = 0; i < rep.aggregates.size(); ++i) {
    const auto& agg = rep.aggregates[i];
    out << detail::format_double(agg.eta) << ' ' << agg.ok << ' ' << agg.failed;
    for (const auto& name : shown) out << ' ' << fixed(rep.mean_at(i, name));
    out << '\n';
  }

  if (rep.failures() > 0) {
    out << "\n# failed trials\n";
    for (const auto& t : rep.trials)
      if (t.failed) out << "eta=" << detail::format_double(t.eta) << " seed=" << t.seed << ": " << t.error << '\n';
  }
  return out.str();
}

SweepFiles emit_report(const SweepReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create '" + out_dir.string() + "': " + ec.message());
  SweepFiles files{out_dir / "trials.csv", out_dir / "aggregates.csv", out_dir / "summary.txt"};
  detail::write_text_file(files.trials, trials_csv(report));
  detail::write_text_file(files.aggregates, aggregates_csv(report));
  detail::write_text_file(files.summary, summary_text(report));
  return files;
}

PreparedData prepare_data(const RunConfig& config) {
  PreparedData out;
  Dataset all;
  if (config.data.csv) {
    if (!config.schema) throw Error(ErrorKind::config, "a CSV data section needs a schema");
    LoadOptions opts;
    opts.standardize = false;
    auto loaded = load_csv(*config.data.csv, *config.schema, opts);
    all = std::move(loaded.data);
    out.encoder = std::move(loaded.encoder);
    out.dropped_rows = loaded.dropped_rows;
  } else if (config.data.synthetic) {
    all = synth_biased(*config.data.synthetic, config.data.synthetic_seed);
  } else {
    throw Error(ErrorKind::config, "the data section needs either 'path' or 'synthetic'");
  }
  auto [train_set, test_set] = split(all, config.data.train_fraction, config.data.split_seed);
  if (config.data.standardize) {
    // Statistics come from the training side only.
    out.encoder.standardization = Standardization::fit(train_set.features(), train_set.continuous_columns());
    Matrix a = train_set.features(), b = test_set.features();
    out.encoder.standardization.apply(a);
    out.encoder.standardization.apply(b);
    train_set = train_set.with_features(std::move(a));
    test_set = test_set.with_features(std::move(b));
  }
  out.train = std::move(train_set);
  out.test = std::move(test_set);
  return out;
}

std::string trace_csv(const TrainTrace& trace) {
  std::ostringstream out;
  out << "epoch,loss,iota,objective,train_acc,eval_acc,skipped_steps\n";
  for (const auto& r : trace.epochs)
    out << r.epoch << ',' << detail::format_double(r.loss) << ',' << detail::format_double(r.iota) << ','
        << detail::format_double(r.objective) << ',' << detail::format_double(r.train_acc) << ','
        << detail::format_optional(r.eval_acc) << ',' << r.skipped_steps << '\n';
  return out.str();
}

}  // namespace mifair
