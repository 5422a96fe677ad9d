// End-to-end acceptance run. Prints one PASS/FAIL/SKIP line per criterion
// and exits nonzero when any criterion fails. Pass criterion numbers as
// arguments to run a subset.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mifair/config.hpp"
#include "mifair/experiment.hpp"
#include "mifair/verify.hpp"

using namespace mifair;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr std::uint64_t kSeed = 20240601;
constexpr double kMiTolerance = 1e-12;
constexpr double kZeroIota = 1e-12;
constexpr double kPerturbedIota = 1e-9;
constexpr double kGradTolerance = 1e-4;
constexpr double kSynthReduction = 0.90;
constexpr double kOaeReduction = 0.80;
constexpr double kEodKeep = 0.50;
constexpr double kAdultAccLo = 0.82, kAdultAccHi = 0.87;
constexpr double kSpdCrossLog10 = -0.8;
constexpr double kThreshold = 0.2;
constexpr double kOrderOfMagnitude = 10.0;
constexpr double kAntisymmetry = 1e-12;
constexpr double kMonotoneNoise = 0.10;
constexpr double kMulticlassReduction = 0.80;
constexpr double kMulticlassAccLoss = 0.15;

const fs::path kRoot = MIFAIR_SOURCE_DIR;
const fs::path kArtifacts = fs::current_path() / "acceptance_artifacts";

enum class Outcome { pass, fail, skip };

struct Result {
  Outcome outcome = Outcome::fail;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Result verdict(bool ok, const std::string& detail) { return {ok ? Outcome::pass : Outcome::fail, detail}; }

Result from_battery(const verify::Battery& b) {
  std::string d = "checks=" + std::to_string(b.checks) + " failures=" + std::to_string(b.failures) +
                  " worst=" + num(b.worst) + " tol=" + num(b.tolerance);
  for (std::size_t i = 0; i < b.messages.size() && i < 3; ++i) d += "; " + b.messages[i];
  return verdict(b.pass(), d);
}

double mean_or_nan(const SweepReport& r, std::size_t i, const std::string& col) {
  return r.mean_at(i, col).value_or(std::nan(""));
}

SweepReport run_sweep(const RunConfig& rc, const std::string& tag) {
  const auto prep = prepare_data(rc);
  const auto t0 = std::chrono::steady_clock::now();
  auto report = sweep(*rc.sweep, prep.train, prep.test);
  emit_report(report, kArtifacts / tag);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "  [" << tag << "] " << report.trials.size() << " trials in " << num(secs) << " s\n";
  return report;
}

double majority_rate(const Dataset& ds) {
  std::vector<double> counts(ds.num_classes(), 0.0);
  for (int y : ds.labels()) counts[static_cast<std::size_t>(y)] += 1.0;
  return *std::max_element(counts.begin(), counts.end()) / static_cast<double>(ds.rows());
}

Result criterion_mi() {
  auto b = verify::mi_agreement_battery(kSeed, 500);
  auto r = from_battery(b);
  if (b.checks < 500 || b.worst > kMiTolerance) r.outcome = Outcome::fail;
  return r;
}

Result criterion_equivalence() {
  auto b = verify::equivalence_battery(kSeed + 3);
  // Spot-check the pinned thresholds in addition to the battery's own.
  bool ok = b.pass() && b.worst <= kZeroIota;
  for (Notion n : kAllNotions) {
    auto w = verify::equivalence_witness(n, 8, 2, kSeed);
    FairnessNotion fn{n};
    ok = ok && iota(fn, w.data, w.pred).raw <= kZeroIota;
    for (auto row : verify::perturbable_rows(w)) ok = ok && iota(fn, w.data, verify::perturb(w, row)).raw > kPerturbedIota;
  }
  auto r = from_battery(b);
  r.outcome = ok ? Outcome::pass : Outcome::fail;
  return r;
}

Result criterion_gradient() {
  auto obj = verify::objective_gradient_battery(kSeed + 2, 20);
  auto reg = verify::regularizer_gradient_battery(kSeed + 1, 20);
  const bool ok = obj.pass() && reg.pass() && obj.worst < kGradTolerance;
  return verdict(ok, "objective: " + from_battery(obj).detail + " | regularizer: " + from_battery(reg).detail);
}

Result criterion_synthetic() {
  auto rc = load_run_config(kRoot / "configs" / "synthetic_sweep.json");
  const auto prep = prepare_data(rc);
  auto rep = run_sweep(rc, "synthetic_sp");
  const std::size_t last = rep.grid.size() - 1;
  const double i0 = mean_or_nan(rep, 0, "iota_SP"), imax = mean_or_nan(rep, last, "iota_SP");
  const double acc = mean_or_nan(rep, last, "ACC_mean"), majority = majority_rate(prep.test);
  const double reduction = 1.0 - imax / i0;
  const bool ok = rep.grid.size() == 6 && rep.failures() == 0 && reduction >= kSynthReduction && acc > majority;
  return verdict(ok, "iota_SP " + num(i0) + " -> " + num(imax) + " (reduction " + num(reduction) + ", need >= " +
                         num(kSynthReduction) + "); ACC_mean at max eta " + num(acc) + " vs majority " +
                         num(majority));
}

Result criterion_incompatibility() {
  auto rc = load_run_config(kRoot / "configs" / "synthetic_sweep.json");
  rc.data.synthetic->groups[0].label_noise = 0.0;
  rc.data.synthetic->groups[1].label_noise = 0.25;
  rc.train.notion.tag = Notion::OAE;
  rc.sweep->base = rc.train;
  auto rep = run_sweep(rc, "synthetic_oae");
  const std::size_t last = rep.grid.size() - 1;
  const double i0 = mean_or_nan(rep, 0, "iota_OAE"), imax = mean_or_nan(rep, last, "iota_OAE");
  const double e0 = mean_or_nan(rep, 0, "mean_abs_EOD"), emax = mean_or_nan(rep, last, "mean_abs_EOD");
  const double reduction = 1.0 - imax / i0;
  const bool ok = rep.failures() == 0 && reduction >= kOaeReduction && emax >= kEodKeep * e0;
  return verdict(ok, "iota_OAE " + num(i0) + " -> " + num(imax) + " (reduction " + num(reduction) + ", need >= " +
                         num(kOaeReduction) + "); mean |EOD| " + num(e0) + " -> " + num(emax) + " (need >= " +
                         num(kEodKeep) + "x)");
}

// The Exp. 1 sweep is shared by criteria 6 and 7.
std::optional<SweepReport>& adult_sweep() {
  static std::optional<SweepReport> rep;
  if (!rep) rep = run_sweep(load_run_config(kRoot / "configs" / "adult_sweep_sp.json"), "adult_sp");
  return rep;
}

bool adult_available() { return fs::exists(kRoot / "data" / "adult.csv"); }

Result criterion_adult() {
  if (!adult_available()) return {Outcome::skip, "data/adult.csv not found (see tools/prepare_adult.py)"};
  const auto& rep = *adult_sweep();
  std::vector<std::string> notes;
  bool ok = rep.failures() == 0;
  if (!ok) notes.push_back(std::to_string(rep.failures()) + " failed trials");

  const double acc = mean_or_nan(rep, 0, "ACC_mean");
  const bool acc_ok = acc >= kAdultAccLo && acc <= kAdultAccHi;
  notes.push_back(std::string(acc_ok ? "ok" : "FAIL") + " vanilla ACC_mean " + num(acc) + " in [" + num(kAdultAccLo) +
                  ", " + num(kAdultAccHi) + "]");

  const double step = (std::log10(rep.grid.back()) - std::log10(rep.grid[1])) / static_cast<double>(rep.grid.size() - 2);
  std::optional<double> cross;
  for (const auto& c : rep.crossings)
    if (c.kind == PairwiseKind::SPD) cross = c.eta;
  const bool cross_ok = cross && *cross > 0.0 && std::abs(std::log10(*cross) - kSpdCrossLog10) <= step + 1e-9;
  notes.push_back(std::string(cross_ok ? "ok" : "FAIL") + " smallest eta with all per-pair |SPD| means <= " +
                  num(kThreshold) + ": " + (cross ? num(*cross) : std::string("none")) + " (target 10^" +
                  num(kSpdCrossLog10) + " +/- " + num(step) + " decades)");

  double oae = 0.0;
  for (std::size_t c = 0; c < rep.columns.size(); ++c)
    if (rep.columns[c].name.rfind("OAE[", 0) == 0 && rep.aggregates[0].mean[c])
      oae = std::max(oae, std::abs(*rep.aggregates[0].mean[c]));
  const bool oae_ok = oae <= kThreshold;
  notes.push_back(std::string(oae_ok ? "ok" : "FAIL") + " vanilla max per-pair |OAE| mean " + num(oae) + " <= " +
                  num(kThreshold));

  const std::pair<const char*, double> published[] = {{"iota_SP", 0.0037}, {"iota_EO", 0.0029}, {"iota_OAE", 0.0019}};
  bool mag_ok = true;
  std::string mags;
  for (const auto& [col, ref] : published) {
    const double v = mean_or_nan(rep, 0, col);
    const bool within = v >= ref / kOrderOfMagnitude && v <= ref * kOrderOfMagnitude;
    mag_ok = mag_ok && within;
    mags += std::string(" ") + col + "=" + num(v) + "(ref " + num(ref) + ")";
  }
  notes.push_back(std::string(mag_ok ? "ok" : "FAIL") + " vanilla iota within 10x of reference:" + mags);

  ok = ok && acc_ok && cross_ok && oae_ok && mag_ok;
  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
  return verdict(ok, detail);
}

std::vector<std::string> split_label(const std::string& label) {
  std::vector<std::string> parts;
  std::stringstream in(label);
  for (std::string p; std::getline(in, p, '|');) parts.push_back(p);
  return parts;
}

Result criterion_intersectional() {
  if (!adult_available()) return {Outcome::skip, "data/adult.csv not found (see tools/prepare_adult.py)"};
  const auto& rep = *adult_sweep();
  const auto& labels = rep.group_labels;
  std::size_t entries = 0;
  double worst_asym = 0.0;
  bool complete = labels.size() == 8;
  for (std::size_t a = 0; a < labels.size(); ++a)
    for (std::size_t b = 0; b < labels.size(); ++b) {
      if (a == b) continue;
      const int ab = rep.column(pair_column(PairwiseKind::SPD, labels[a], labels[b]));
      const int ba = rep.column(pair_column(PairwiseKind::SPD, labels[b], labels[a]));
      if (ab < 0 || ba < 0) {
        complete = false;
        continue;
      }
      ++entries;
      for (std::size_t t = 0; t < rep.trials.size(); ++t) {
        const auto& x = rep.columns[static_cast<std::size_t>(ab)].values[t];
        const auto& y = rep.columns[static_cast<std::size_t>(ba)].values[t];
        if (!x || !y) {
          complete = complete && rep.trials[t].failed;
          continue;
        }
        worst_asym = std::max(worst_asym, std::abs(*x + *y));
      }
    }
  complete = complete && entries == 56;

  // Pairs sharing no attribute value; each must shrink along the grid,
  // allowing a rise of up to 10% of its vanilla magnitude between neighbours.
  std::size_t disjoint = 0, violations = 0;
  std::string first_violation;
  for (std::size_t a = 0; a < labels.size(); ++a)
    for (std::size_t b = 0; b < labels.size(); ++b) {
      if (a == b) continue;
      const auto pa = split_label(labels[a]), pb = split_label(labels[b]);
      bool shares = false;
      for (std::size_t k = 0; k < pa.size() && k < pb.size(); ++k) shares = shares || pa[k] == pb[k];
      if (shares) continue;
      ++disjoint;
      const std::string col = pair_column(PairwiseKind::SPD, labels[a], labels[b]);
      const double base = std::abs(mean_or_nan(rep, 0, col));
      for (std::size_t i = 1; i < rep.grid.size(); ++i) {
        const double prev = std::abs(mean_or_nan(rep, i - 1, col)), cur = std::abs(mean_or_nan(rep, i, col));
        if (!(cur <= prev + kMonotoneNoise * base)) {
          ++violations;
          if (first_violation.empty())
            first_violation = col + " at eta " + num(rep.grid[i]) + ": " + num(prev) + " -> " + num(cur);
        }
      }
    }
  const bool ok = complete && worst_asym <= kAntisymmetry && disjoint == 8 && violations == 0;
  std::string detail = "groups=" + std::to_string(labels.size()) + " SPD entries=" + std::to_string(entries) +
                       " worst antisymmetry=" + num(worst_asym) + " disjoint pairs=" + std::to_string(disjoint) +
                       " monotonicity violations=" + std::to_string(violations);
  if (!first_violation.empty()) detail += " (first: " + first_violation + ")";
  return verdict(ok, detail);
}

Result criterion_multiclass() {
  auto rc = load_run_config(kRoot / "configs" / "synthetic_multiclass_sweep.json");
  auto rep = run_sweep(rc, "synthetic_multiclass");
  const std::size_t last = rep.grid.size() - 1;
  const double i0 = mean_or_nan(rep, 0, "iota_SP"), imax = mean_or_nan(rep, last, "iota_SP");
  const double a0 = mean_or_nan(rep, 0, "ACC_mean"), amax = mean_or_nan(rep, last, "ACC_mean");
  const double reduction = 1.0 - imax / i0, loss = (a0 - amax) / a0;
  const bool ok = rep.failures() == 0 && rep.group_labels.size() == 4 && reduction >= kMulticlassReduction &&
                  loss <= kMulticlassAccLoss;
  return verdict(ok, "classes=3 groups=" + std::to_string(rep.group_labels.size()) + " iota_SP " + num(i0) + " -> " +
                         num(imax) + " (reduction " + num(reduction) + ", need >= " + num(kMulticlassReduction) +
                         "); ACC_mean " + num(a0) + " -> " + num(amax) + " (relative loss " + num(loss) +
                         ", need <= " + num(kMulticlassAccLoss) + ")");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MIFAIR_CLI + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Result criterion_determinism() {
  const fs::path base = kArtifacts / "determinism";
  fs::remove_all(base);
  const std::string config = (kRoot / "configs" / "synthetic_train.json").string();
  const fs::path a = base / "a", b = base / "b", c = base / "c";
  const int ra = run_cli("train --config \"" + config + "\" --out \"" + a.string() + "\"");
  // Second and third runs replay the first run's manifest.
  const std::string manifest = (a / "manifest.json").string();
  const int rb = run_cli("train --config \"" + manifest + "\" --out \"" + b.string() + "\"");
  const int rcode = run_cli("train --config \"" + manifest + "\" --out \"" + c.string() + "\"");
  if (ra != 0 || rb != 0 || rcode != 0)
    return verdict(false, "train exit codes " + std::to_string(ra) + "/" + std::to_string(rb) + "/" +
                              std::to_string(rcode));
  bool ok = true;
  std::string detail;
  for (const char* f : {"model.ckpt", "trace.csv"}) {
    const std::string x = slurp(a / f), y = slurp(b / f), z = slurp(c / f);
    const bool same = !x.empty() && x == y && y == z;
    ok = ok && same;
    detail += std::string(detail.empty() ? "" : "; ") + f + (same ? " identical" : " DIFFERS") + " (" +
              std::to_string(x.size()) + " bytes)";
  }
  return verdict(ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Result()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "mi-oracle-agreement", criterion_mi},
      {2, "zero-mi-equivalence", criterion_equivalence},
      {3, "gradient-correctness", criterion_gradient},
      {4, "synthetic-mitigation", criterion_synthetic},
      {5, "oae-eod-incompatibility", criterion_incompatibility},
      {6, "adult-reproduction", criterion_adult},
      {7, "intersectional-coverage", criterion_intersectional},
      {8, "multiclass-support", criterion_multiclass},
      {9, "determinism", criterion_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  fs::create_directories(kArtifacts);
  std::size_t failed = 0;
  std::ostringstream summary;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Result r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {Outcome::fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = r.outcome == Outcome::pass ? "PASS" : r.outcome == Outcome::skip ? "SKIP" : "FAIL";
    if (r.outcome == Outcome::fail) ++failed;
    std::ostringstream line;
    line << tag << " " << c.id << " " << c.name << " [" << num(secs) << " s]: " << r.detail;
    std::cout << line.str() << std::endl;
    summary << line.str() << '\n';
  }
  std::ofstream(kArtifacts / "summary.txt") << summary.str();
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : std::string("acceptance: all criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}
