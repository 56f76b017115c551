#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "robmix/io.hpp"

namespace fs = std::filesystem;
using namespace robmix;

namespace {

const fs::path kCli = ROBMIX_CLI_PATH;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("robmix_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the CLI with `args`; stdout and stderr go to files in `dir`.
int run(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + kCli.string() + " " + args + " > " +
                          (dir / "stdout.txt").string() + " 2> " + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return io::read_text(p); }

long lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

}  // namespace

TEST_CASE("simulate writes a dataset, truth sidecar and manifest") {
  const auto dir = scratch("simulate");
  const auto out = (dir / "s4.csv").string();
  REQUIRE(run(dir, "simulate --model 1 --scenario 4 --n 200 --seed 7 --out " + out) == 0);
  CHECK(lines(slurp(out)) == 201);
  const auto truth = io::Json::parse(slurp(dir / "s4.truth.json"));
  CHECK(truth["schema"] == "robmix.truth/1");
  CHECK(truth["z"].size() == 200);
  const auto manifest = io::Json::parse(slurp(dir / "s4.manifest.json"));
  CHECK(manifest["schema"] == "robmix.manifest/1");
  CHECK(manifest["command"] == "simulate");

  const auto first = slurp(out);
  const auto first_truth = slurp(dir / "s4.truth.json");
  REQUIRE(run(dir, "simulate --model 1 --scenario 4 --n 200 --seed 7 --out " + out) == 0);
  CHECK(slurp(out) == first);
  CHECK(slurp(dir / "s4.truth.json") == first_truth);

  const auto env_out = (dir / "env.csv").string();
  REQUIRE(run(dir, "simulate --model 1 --scenario 4 --n 200 --out " + env_out, "ROBMIX_SEED=7") == 0);
  CHECK(slurp(env_out) == first);
}

TEST_CASE("usage errors exit with 2") {
  const auto dir = scratch("usage");
  CHECK(run(dir, "simulate --scenario 9") == 2);
  CHECK(run(dir, "simulate --model 3") == 2);
  CHECK(run(dir, "simulate --n 10") == 2);
  CHECK(run(dir, "fit --k 0 x.csv") == 2);
  CHECK(run(dir, "fit --solver lms x.csv") == 2);
  CHECK(run(dir, "benchmark --reps 0") == 2);
  CHECK(run(dir, "frobnicate") == 2);
  CHECK(run(dir, "") == 2);
  CHECK(run(dir, "simulate --priors 0.5,0.6 --out " + (dir / "p.csv").string()) == 2);
  CHECK(run(dir, "--help") == 0);
}

TEST_CASE("input problems exit with 4 and fit infeasibility with 3") {
  const auto dir = scratch("errors");
  CHECK(run(dir, "fit " + (dir / "missing.csv").string()) == 4);
  CHECK(slurp(dir / "stderr.txt").find("missing.csv") != std::string::npos);

  io::write_text(dir / "bad.csv", "y,x1\n1,2\n3,oops\n");
  CHECK(run(dir, "fit " + (dir / "bad.csv").string()) == 4);
  CHECK(slurp(dir / "stderr.txt").find("line 3") != std::string::npos);

  io::write_text(dir / "small.csv", "y,x1\n1,2\n3,4\n5,7\n2,1\n");
  CHECK(run(dir, "fit --k 2 " + (dir / "small.csv").string()) == 3);

  io::write_text(dir / "plain", "");
  CHECK(run(dir, "simulate --out " + (dir / "plain" / "d.csv").string()) == 4);
}

TEST_CASE("fit on the noiseless two-line fixture") {
  const auto dir = scratch("fit");
  std::ostringstream csv;
  csv << "y,x1\n";
  for (int i = 0; i < 100; ++i) {
    const int r = i % 50;
    const double t = r < 25 ? -3.0 + 0.1 * r : 3.6 + 0.1 * r;
    csv << io::format_double(i < 50 ? t : -t + 4) << ',' << io::format_double(t) << '\n';
  }
  io::write_text(dir / "lines.csv", csv.str());
  REQUIRE(run(dir, "fit --solver cem --k 2 --seed 1 --out-dir " + dir.string() + " " +
                       (dir / "lines.csv").string()) == 0);
  const auto model = io::Json::parse(slurp(dir / "fit.model.json"));
  CHECK(model["schema"] == "robmix.fit/1");
  std::vector<std::pair<double, double>> lines_found;
  for (const auto& c : model["components"])
    lines_found.emplace_back(c["beta"][0].get<double>(), c["beta"][1].get<double>());
  std::ranges::sort(lines_found);
  CHECK(std::abs(lines_found[0].first - 0.0) < 1e-6);
  CHECK(std::abs(lines_found[0].second - 1.0) < 1e-6);
  CHECK(std::abs(lines_found[1].first - 4.0) < 1e-6);
  CHECK(std::abs(lines_found[1].second + 1.0) < 1e-6);
  CHECK(lines(slurp(dir / "fit.assign.csv")) == 101);
  CHECK(lines(slurp(dir / "fit.residuals.csv")) == 101);
  CHECK(slurp(dir / "fit.trace.csv").rfind("iteration,objective\n", 0) == 0);
  const auto manifest = io::Json::parse(slurp(dir / "fit.manifest.json"));
  CHECK(manifest["command"] == "fit");
  CHECK(manifest["outputs"].size() == 4);
}

TEST_CASE("fast-CAT through the CLI finds scenario 5 outliers") {
  const auto dir = scratch("fastcat");
  std::vector<double> recall;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto data = (dir / "d.csv").string();
    REQUIRE(run(dir, "simulate --model 1 --scenario 5 --n 200 --seed " + std::to_string(seed) +
                         " --out " + data) == 0);
    REQUIRE(run(dir, "fit --solver fast-cat --seed " + std::to_string(seed) + " --out-dir " +
                         dir.string() + " " + data) == 0);
    const auto truth = io::Json::parse(slurp(dir / "d.truth.json"));
    std::istringstream assign(slurp(dir / "fit.assign.csv"));
    std::string row;
    std::getline(assign, row);
    int hit = 0;
    int total = 0;
    for (std::size_t i = 0; std::getline(assign, row); ++i) {
      const bool flagged = row.substr(row.find(',', row.find(',') + 1) + 1, 1) == "1";
      if (truth["outlier"][i].get<int>() == 1) {
        ++total;
        hit += flagged;
      }
    }
    recall.push_back(total ? static_cast<double>(hit) / total : 1.0);
  }
  std::ranges::nth_element(recall, recall.begin() + 10);
  CHECK(recall[10] >= 0.8);
}

TEST_CASE("benchmark reports are byte reproducible") {
  const auto dir = scratch("bench");
  const std::string args = "benchmark --model 1 --scenario 4 --n 200 --solver cem --starts 3 --reps 4 --seed 5 --out-dir " + dir.string();
  REQUIRE(run(dir, args + " --prefix a") == 0);
  REQUIRE(run(dir, args + " --prefix b --threads 2") == 0);
  const auto a = slurp(dir / "a.report.csv");
  CHECK(a == slurp(dir / "b.report.csv"));
  CHECK(slurp(dir / "a.report.json") == slurp(dir / "b.report.json"));
  CHECK(lines(a) == 9);
  CHECK(a.rfind("parameter,truth,bias,mse\n", 0) == 0);
}
