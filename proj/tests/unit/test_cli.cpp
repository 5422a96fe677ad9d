// Runs the installed command-line tool as a subprocess.
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Dir {
  fs::path path;
  Dir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("mifair-cli-" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~Dir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& s) const { return path / s; }
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

int run(const std::string& binary, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + binary + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int mifair(const std::string& args, const fs::path& log) { return run(MIFAIR_CLI, args, log); }

const char* kSchema = R"({"features": [{"name": "x", "kind": "continuous"}],
  "sensitive": [{"name": "g", "categories": ["a", "b"]}],
  "label": {"name": "y", "categories": ["no", "yes"]}})";

void write_balanced(const Dir& d) {
  std::string data = "x,g,y\n", pred = "no,yes\n";
  int i = 0;
  for (const char* g : {"a", "b"})
    for (int y = 0; y < 2; ++y)
      for (int yhat = 0; yhat < 2; ++yhat) {
        data += std::to_string(i++) + "," + g + "," + (y ? "yes" : "no") + "\n";
        pred += yhat ? "0.2,0.8\n" : "0.8,0.2\n";
      }
  write(d / "data.csv", data);
  write(d / "pred.csv", pred);
  write(d / "schema.json", kSchema);
}

std::string synth_run(const std::string& train, const std::string& extra = "") {
  return R"({"data": {"synthetic": {"groups": [{"weight": 0.4, "prevalence": 0.7}, {"weight": 0.3, "prevalence": 0.4},
      {"weight": 0.3, "prevalence": 0.2}], "rows": 300, "seed": 5}},
      "train": )" + train + extra + "}";
}

}  // namespace

TEST_CASE("assess on a balanced dump passes the threshold") {
  Dir d;
  write_balanced(d);
  const std::string base = "assess --data " + (d / "data.csv").string() + " --schema " + (d / "schema.json").string();
  CHECK(mifair(base + " --predictions " + (d / "pred.csv").string() + " --threshold 0.2 --out " +
                   (d / "out").string(),
               d / "log") == 0);
  CHECK(slurp(d / "log").find("verdict: pass") != std::string::npos);
  CHECK(fs::exists(d / "out" / "report.csv"));
  CHECK(slurp(d / "out" / "manifest.json").find("\"command\": \"assess\"") != std::string::npos);

  write(d / "short.csv", "no,yes\n0.5,0.5\n");
  CHECK(mifair(base + " --predictions " + (d / "short.csv").string() + " --out " + (d / "o2").string(), d / "log") ==
        2);
  CHECK(slurp(d / "log").find("rows") != std::string::npos);
  CHECK(mifair(base + " --predictions " + (d / "pred.csv").string() + " --notions SP,XYZ --out " +
                   (d / "o3").string(),
               d / "log") == 2);
  CHECK(mifair("assess --bogus", d / "log") == 2);
}

TEST_CASE("train is reproducible and validates its config") {
  Dir d;
  write(d / "run.json", synth_run(R"({"epochs": 8, "hidden": [4], "eta": 2, "notion": "EO"})"));
  REQUIRE(mifair("train --config " + (d / "run.json").string() + " --out " + (d / "a").string(), d / "log") == 0);
  REQUIRE(mifair("train --config " + (d / "run.json").string() + " --out " + (d / "b").string(), d / "log") == 0);
  CHECK(slurp(d / "a" / "model.ckpt") == slurp(d / "b" / "model.ckpt"));
  CHECK(slurp(d / "a" / "trace.csv") == slurp(d / "b" / "trace.csv"));
  CHECK(lines(slurp(d / "a" / "trace.csv")).size() == 9);

  // Replaying the manifest reproduces the run.
  REQUIRE(mifair("train --config " + (d / "a" / "manifest.json").string() + " --out " + (d / "c").string(), d / "log") ==
          0);
  CHECK(slurp(d / "a" / "model.ckpt") == slurp(d / "c" / "model.ckpt"));

  write(d / "negative.json", synth_run(R"({"eta": -1})"));
  CHECK(mifair("train --config " + (d / "negative.json").string() + " --out " + (d / "n").string(), d / "log") == 2);
  CHECK(mifair("train --config " + (d / "missing.json").string() + " --out " + (d / "n").string(), d / "log") == 2);
}

TEST_CASE("coverage failures have their own exit code") {
  Dir d;
  write(d / "run.json", synth_run(R"({"epochs": 2, "hidden": [], "eta": 1, "batch_size": 2, "coverage": "error"})"));
  CHECK(mifair("train --config " + (d / "run.json").string() + " --out " + (d / "o").string(), d / "log") == 4);
  CHECK(slurp(d / "log").find("lacks subgroup") != std::string::npos);
}

TEST_CASE("assess a trained checkpoint on a CSV") {
  Dir d;
  write_balanced(d);
  write(d / "run.json", R"({"data": {"path": "data.csv", "train_fraction": 0.5}, "schema": "schema.json",
      "train": {"epochs": 3, "hidden": []}})");
  REQUIRE(mifair("train --config " + (d / "run.json").string() + " --out " + (d / "t").string(), d / "log") == 0);
  CHECK(mifair("assess --data " + (d / "data.csv").string() + " --model " + (d / "t" / "model.ckpt").string() +
                   " --out " + (d / "o").string(),
               d / "log") == 0);
  CHECK(slurp(d / "o" / "report.csv").find("count,g=a,,4") != std::string::npos);
}

TEST_CASE("sweep writes trial and aggregate tables") {
  Dir d;
  write(d / "sweep.json",
        synth_run(R"({"epochs": 6, "hidden": [3]})", R"(, "sweep": {"etas": [0.5, 5], "seeds": 2, "jobs": 2})"));
  REQUIRE(mifair("sweep --config " + (d / "sweep.json").string() + " --out " + (d / "s").string(), d / "log") == 0);
  CHECK(lines(slurp(d / "s" / "trials.csv")).size() == 7);
  CHECK(lines(slurp(d / "s" / "aggregates.csv")).size() == 4);
  CHECK(fs::exists(d / "s" / "summary.txt"));
  CHECK(slurp(d / "s" / "manifest.json").find("\"command\": \"sweep\"") != std::string::npos);

  write(d / "bad.json", synth_run(R"({"epochs": 6, "hidden": [3]})",
                                  R"(, "sweep": {"etas": [0.5, 5], "seeds": 2,
                                      "overrides": [{"eta": 5, "lr_schedule": 1e300}]})"));
  REQUIRE(mifair("sweep --config " + (d / "bad.json").string() + " --out " + (d / "f").string(), d / "log") == 0);
  std::size_t failed = 0;
  for (const auto& l : lines(slurp(d / "f" / "trials.csv")))
    if (l.find(",failed,") != std::string::npos) ++failed;
  CHECK(failed == 2);
  CHECK(slurp(d / "f" / "summary.txt").find("# failed trials") != std::string::npos);
}

TEST_CASE("selfcheck is deterministic and catches an injected fault") {
  Dir d;
  REQUIRE(mifair("selfcheck --seed 3 --out " + (d / "a.txt").string(), d / "log") == 0);
  REQUIRE(mifair("selfcheck --seed 3 --out " + (d / "b.txt").string(), d / "log") == 0);
  CHECK(slurp(d / "a.txt") == slurp(d / "b.txt"));
  CHECK(run(MIFAIR_FAULT_CLI, "selfcheck --seed 3", d / "fault.log") == 5);
  const std::string fault = slurp(d / "fault.log");
  CHECK(fault.find("FAIL mi-agreement") != std::string::npos);
  CHECK(fault.find("selfcheck: FAILED") != std::string::npos);
}
