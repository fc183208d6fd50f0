#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "fixloc/cli.hpp"

using namespace fixloc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "fixloc");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("fixloc-cli-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("cli: usage and domain errors") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"train", "--no-such-flag"}).code == 2);
  CHECK(run({"train", "--out", "x"}).code == 2);  // --data missing
  CHECK(run({"--help"}).code == 0);
  const auto missing = run({"effort-stats", "--data", "/nonexistent/file.jsonl"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("NotFound") != std::string::npos);
}

TEST_CASE("cli: gradcheck") {
  const auto r = run({"gradcheck", "--dims", "4", "--seed", "7"});
  CHECK(r.code == 0);
  CHECK(r.out.find("max relative error") != std::string::npos);
}

TEST_CASE("cli: corpus, train, predict, evaluate, repair, effort-stats") {
  TempDir dir;
  const auto corpus = dir / "c.jsonl";
  REQUIRE(run({"--seed", "5", "gen-corpus", "--n", "60", "--synth", "30", "--out", corpus}).code == 0);
  CHECK(fs::exists(corpus + ".manifest.json"));
  const auto manifest = nlohmann::json::parse(read_file(corpus + ".manifest.json"));
  CHECK(manifest.at("seed") == 5);
  CHECK(manifest.at("subcommand") == "gen-corpus");

  // Config fills unset options; flags win.
  const auto cfg = dir / "train.cfg";
  std::ofstream(cfg) << "# small model\ndims = 6\nepochs=3\nbatch-size=8\nlr=0.01\n";
  const auto model = dir / "m.ckpt";
  REQUIRE(run({"train", "--config", cfg, "--epochs", "2", "--data", corpus, "--out", model}).code == 0);
  const auto tm = nlohmann::json::parse(read_file(model + ".manifest.json"));
  CHECK(tm.at("hyper_params").at("d_t") == 6);
  CHECK(tm.at("hyper_params").at("epochs") == 2);
  CHECK(tm.at("epochs").size() == 2);

  std::ofstream(dir / "bad.cfg") << "no-such-key=1\n";
  CHECK(run({"train", "--config", dir / "bad.cfg", "--data", corpus, "--out", model}).code == 2);

  std::string first_line;
  {
    std::ifstream in(corpus);
    std::getline(in, first_line);
  }
  const auto method = dir / "f.mj";
  std::ofstream(method) << nlohmann::json::parse(first_line).at("buggy_src").get<std::string>();
  const auto p = run({"predict", "--model", model, "--method", method, "--top", "10"});
  REQUIRE(p.code == 0);
  std::istringstream lines(p.out);
  const std::regex shape(R"(^(\d+) (0\.\d{6}|1\.0{6}) (UPDATE|DELETE|INSERT) \S+ @\d+:\d+ MethodDeclaration(>\w+)+$)");
  int n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    CAPTURE(line);
    std::smatch m;
    REQUIRE(std::regex_match(line, m, shape));
    CHECK(std::stoi(m[1]) == n + 1);
  }
  CHECK(n == 10);

  const auto e = run({"evaluate", "--model", model, "--data", corpus, "--scenario", "method"});
  REQUIRE(e.code == 0);
  const auto report = nlohmann::json::parse(e.out);
  for (const char* k : {"1", "3", "5", "10", "20"}) CHECK(report.at("recall_at").contains(k));
  CHECK(report.contains("mfr"));
  CHECK(report.at("n_bugs") == 60);

  const auto cv = run({"evaluate", "--data", corpus, "--folds", "3", "--dims", "4", "--epochs", "1",
                       "--forest-trees", "3", "--scenario", "both", "--out", dir / "cv.json"});
  REQUIRE(cv.code == 0);
  CHECK(cv.out.find("forest-baseline") != std::string::npos);
  CHECK(nlohmann::json::parse(read_file(dir / "cv.json")).at("reports").size() == 6);

  const auto rp = run({"repair", "--data", corpus, "--perfect", "--out", dir / "o.jsonl"});
  REQUIRE(rp.code == 0);
  CHECK(nlohmann::json::parse(rp.out).at("correctness_ratio") == 1.0);
  CHECK(run({"repair", "--data", corpus}).code == 2);

  const auto es = run({"effort-stats", "--data", corpus});
  REQUIRE(es.code == 0);
  CHECK(nlohmann::json::parse(es.out).at("method_tokens").at("count") == 60);
}

TEST_CASE("cli: extract") {
  TempDir dir;
  std::ofstream(dir / "pairs.jsonl")
      << R"({"id":"a","buggy_src":"int f(int a) { return a - 1; }","fixed_src":"int f(int a) { return a + 1; }"})" "\n"
      << R"({"id":"b","buggy_src":"int f() { return 1; }","fixed_src":"int f() { return 1; }"})" "\n";
  const auto r = run({"extract", "--pairs", dir / "pairs.jsonl", "--out", dir / "r.jsonl"});
  CHECK(r.code == 0);
  CHECK(r.err.find("skip b") != std::string::npos);
  const auto rec = nlohmann::json::parse(read_file(dir / "r.jsonl"));
  CHECK(rec.at("oracle").at(0).at("token") == "-");
}
