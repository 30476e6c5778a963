#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("scdh_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run run(const std::string& args, const fs::path& dir) {
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(SCDH_CLI_PATH) + " " + args + " 2>" + err.string() + " >/dev/null";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

// Every regular file under `dir` except the captured stderr, by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "stderr.txt")
      files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

const std::string kSmallGen =
    "gen --class-count 3 --feature-dim 6 --samples-per-class 60 --train-size 90 --query-size 30 "
    "--database-size 60";
const std::string kSmallTrain = "--hidden 16 --code-length 8 --epochs 3 --warmup-epochs 1 --batch-size 16";

}  // namespace

TEST(Cli, UsageAndValidationErrors) {
  const auto dir = scratch("errors");
  EXPECT_EQ(run("", dir).code, 1);
  EXPECT_EQ(run("frobnicate", dir).code, 1);
  EXPECT_EQ(run("gen --no-such-flag 1 --out " + dir.string(), dir).code, 1);
  const auto bad = run("gen --class-count 0 --out " + dir.string(), dir);
  EXPECT_EQ(bad.code, 1);
  const auto parsed = nlohmann::json::parse(bad.err);
  EXPECT_EQ(parsed.at("error"), "validation");
  EXPECT_EQ(run("train --train-data " + (dir / "missing.scds").string() + " --out " + dir.string(), dir).code, 1);
}

TEST(Cli, ConfigRejectsUnknownKeys) {
  const auto dir = scratch("config");
  std::ofstream(dir / "cfg.json") << R"({"class_count": 3, "colour": "red"})";
  EXPECT_EQ(run("gen --config " + (dir / "cfg.json").string() + " --out " + dir.string(), dir).code, 1);
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_EQ(run("gen --config " + (dir / "bad.json").string() + " --out " + dir.string(), dir).code, 1);
}

TEST(Cli, CorruptInputIsAParseError) {
  const auto dir = scratch("corrupt");
  std::ofstream(dir / "junk.scds", std::ios::binary) << "SCDS\x01";
  const auto r = run("train --train-data " + (dir / "junk.scds").string() + " --out " + dir.string(), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(nlohmann::json::parse(r.err).at("error"), "parse");
}

TEST(Cli, PipelineIsByteDeterministic) {
  std::map<std::string, std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    const auto dir = scratch("pipeline" + std::to_string(pass));
    const auto d = dir.string();
    ASSERT_EQ(run(kSmallGen + " --seed 4 --out " + d + "/data", dir).code, 0);
    ASSERT_EQ(run("train --train-data " + d + "/data/train.scds " + kSmallTrain + " --out " + d + "/model", dir).code, 0);
    for (const std::string split : {"query", "database"}) {
      ASSERT_EQ(run("encode --model " + d + "/model/model.scdm --data " + d + "/data/" + split +
                        ".scds --name " + split + " --out " + d + "/codes",
                    dir).code,
                0);
    }
    ASSERT_EQ(run("eval --query-codes " + d + "/codes/query.scdh --database-codes " + d +
                      "/codes/database.scdh --query-data " + d + "/data/query.scds --database-data " + d +
                      "/data/database.scds --out " + d + "/eval",
                  dir).code,
              0);
    // The saved manifest reproduces the run as a config file.
    ASSERT_EQ(run("gen --config " + d + "/data/manifest.json --out " + d + "/regen", dir).code, 0);
    EXPECT_EQ(slurp(dir / "data/train.scds"), slurp(dir / "regen/train.scds"));
    ASSERT_EQ(run("train-semi --train-data " + d + "/data/train.scds " + kSmallTrain +
                      " --w 0.5 --out " + d + "/semi",
                  dir).code,
              0);
    ASSERT_EQ(run("verify-bounds --instances 20 --max-n 12 --ml-configurations 2 --ml-trials 1000 --out " + d +
                      "/bounds",
                  dir).code,
              0);
    ASSERT_EQ(run("lambda-toy --sigma-grid 1,0.5 --d-grid 1,4 --samples-per-cluster 20 --sampled-triplets 5000 --out " +
                      d + "/toy",
                  dir).code,
              0);
    auto files = snapshot(dir);
    // Manifests record absolute input paths, which differ between the two passes.
    for (auto& [name, text] : files) {
      if (name.ends_with("manifest.json")) {
        auto m = nlohmann::json::parse(text);
        nlohmann::json hashes = nlohmann::json::array();
        for (const auto& [path, hash] : m.at("inputs").items()) hashes.push_back(hash);
        m["inputs"] = hashes;
        m.erase("config");
        text = m.dump();
      }
    }
    if (pass == 0) {
      first = files;
      const auto metrics = nlohmann::json::parse(files.at("eval/metrics.json"));
      EXPECT_GT(metrics.at("map").get<double>(), 0.5);
    } else {
      EXPECT_EQ(files.size(), first.size());
      for (const auto& [name, text] : files) EXPECT_EQ(text, first[name]) << name;
    }
  }
}
