#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("bridgesim-cli-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args, std::string* out = nullptr) {
  std::string cmd = std::string(BRIDGESIM_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string buf;
  char chunk[4096];
  std::size_t got;
  while ((got = fread(chunk, 1, sizeof chunk, pipe)) > 0) buf.append(chunk, got);
  int status = pclose(pipe);
  if (out) *out = buf;
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const json& doc) {
  fs::path p = dir / "cfg.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

json bridge_doc(int n) {
  return {{"model", {{"name", "brownian"}}},
          {"conditioning", {{"type", "strong"}, {"z", 0.5}}},
          {"start", {{"s", 0.0}, {"x", 0.0}}},
          {"horizon", 1.0},
          {"grid", {{"refinement", "geometric"}, {"N", 200}}},
          {"ensemble", {{"n_paths", n}, {"master_seed", 42}}}};
}

}  // namespace

TEST_CASE("simulate writes paths and summary") {
  auto dir = scratch("simulate");
  auto cfg = write_config(dir, bridge_doc(100));
  REQUIRE(run("--config " + cfg.string() + " --out " + (dir / "a").string() + " simulate") == 0);
  json summary = json::parse(slurp(dir / "a" / "summary.json"));
  CHECK(summary["n_paths"] == 100);
  CHECK(summary["pinning_fraction"].get<double>() == 1.0);
  bool saw_half = false;
  for (const auto& node : summary["nodes"])
    if (std::abs(node["t"].get<double>() - 0.5) < 0.01) {
      saw_half = true;
      CHECK(std::isfinite(node["mean"][0].get<double>()));
    }
  CHECK(saw_half);

  // Recompute the per-node statistics from paths.csv.
  std::istringstream csv(slurp(dir / "a" / "paths.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "path_id,t,x_1");
  std::map<double, std::vector<double>> by_t;
  while (std::getline(csv, line)) {
    auto c1 = line.find(','), c2 = line.rfind(',');
    by_t[std::stod(line.substr(c1 + 1, c2 - c1 - 1))].push_back(std::stod(line.substr(c2 + 1)));
  }
  std::size_t checked = 0;
  for (const auto& node : summary["nodes"]) {
    auto it = by_t.find(node["t"].get<double>());
    REQUIRE(it != by_t.end());
    const auto& xs = it->second;
    double m = 0.0;
    for (double x : xs) m += x;
    m /= xs.size();
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    CHECK(std::abs(m - node["mean"][0].get<double>()) <= 1e-12);
    CHECK(std::abs(ss / (xs.size() - 1) - node["variance"][0].get<double>()) <= 1e-12);
    ++checked;
  }
  CHECK(checked == summary["nodes"].size());
}

TEST_CASE("simulate is byte-identical across reruns and thread counts") {
  auto dir = scratch("determinism");
  auto cfg = write_config(dir, bridge_doc(200));
  std::string ref_paths, ref_summary;
  for (int threads : {1, 4, 8}) {
    auto out = dir / ("t" + std::to_string(threads));
    REQUIRE(run("--config " + cfg.string() + " --threads " + std::to_string(threads) + " --out " +
                out.string() + " simulate") == 0);
    std::string p = slurp(out / "paths.csv"), s = slurp(out / "summary.json");
    if (ref_paths.empty()) {
      ref_paths = p;
      ref_summary = s;
    }
    CHECK(p == ref_paths);
    CHECK(s == ref_summary);
  }
  auto again = dir / "again";
  REQUIRE(run("--config " + cfg.string() + " --threads 1 --out " + again.string() + " simulate") == 0);
  CHECK(slurp(again / "paths.csv") == ref_paths);
  auto other = dir / "other";
  REQUIRE(run("--config " + cfg.string() + " --seed 43 --threads 1 --out " + other.string() +
              " simulate") == 0);
  CHECK(slurp(other / "paths.csv") != ref_paths);
}

TEST_CASE("config errors exit 2") {
  auto dir = scratch("errors");
  json doc = bridge_doc(10);
  doc.erase("model");
  auto cfg = write_config(dir, doc);
  CHECK(run("--config " + cfg.string() + " --out " + dir.string() + " simulate") == 2);
  CHECK(run("--config " + (dir / "missing.json").string() + " simulate") == 2);
  CHECK(run("verify nonsense") == 2);
  CHECK(run("") == 2);
}

TEST_CASE("verify appendixB on the default config passes") {
  std::string out;
  CHECK(run("--threads 1 verify appendixB", &out) == 0);
  json reports = json::parse(out);
  REQUIRE(reports.is_array());
  CHECK(reports.size() == 4);
  for (const auto& r : reports) CHECK(r["pass"] == true);
}

TEST_CASE("verify bridge and assumptions on the Brownian bridge pass") {
  auto dir = scratch("verify");
  for (const char* suite : {"bridge", "assumptions"}) {
    std::string out;
    CHECK(run(std::string("--threads 1 --out ") + dir.string() + " verify " + suite, &out) == 0);
    for (const auto& r : json::parse(out)) CHECK(r["pass"] == true);
    CHECK(json::parse(slurp(dir / "report.json")) == json::parse(out));
  }
}

TEST_CASE("classify") {
  auto dir = scratch("classify");
  std::string out;
  REQUIRE(run("classify", &out) == 0);
  json r = json::parse(out);
  REQUIRE(r.size() == 2);
  CHECK(r[0]["classification"] == "natural");
  CHECK(r[1]["classification"] == "natural");

  json doc = {{"model", {{"name", "bessel"}, {"params", {{"dimension", 3.0}}}}},
              {"conditioning", {{"type", "none"}}},
              {"start", {{"s", 0.0}, {"x", 1.0}}},
              {"horizon", 1.0}};
  REQUIRE(run("--config " + write_config(dir, doc).string() + " classify", &out) == 0);
  r = json::parse(out);
  CHECK(r[0]["classification"] == "entrance");
  CHECK(r[1]["classification"] == "natural");

  doc = {{"model", {{"name", "ou"}, {"params", {{"theta", 1.0}}}}},
         {"conditioning", {{"type", "none"}}},
         {"horizon", 1.0}};
  REQUIRE(run("--config " + write_config(dir, doc).string() + " classify", &out) == 0);
  r = json::parse(out);
  CHECK(r[0]["classification"] == "natural");
  CHECK(r[1]["classification"] == "natural");

  doc = {{"model", {{"name", "brownian"}, {"params", {{"dim", 2}}}}},
         {"conditioning", {{"type", "none"}}},
         {"horizon", 1.0}};
  CHECK(run("--config " + write_config(dir, doc).string() + " classify") == 2);
}

TEST_CASE("density tabulation") {
  auto dir = scratch("density");
  REQUIRE(run("--out " + dir.string() + " density --t 0.5 --points 11 --lo -1 --hi 1") == 0);
  std::istringstream csv(slurp(dir / "density.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "y,p,h,drift");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 11);
}
