#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

const std::string kCli = ISOFACE_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

fs::path fresh_root(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_tiny_config(const fs::path& path, const fs::path& root,
                       int epochs) {
  std::ofstream os(path);
  os << R"({
  "seed": 33,
  "data_dir": ")" << (root / "data").string() << R"(",
  "out_dir": ")" << (root / "run").string() << R"(",
  "model": {"height": 16, "width": 16, "branch_channels": 4,
            "fusion_channels": 8, "backbone_channels": [8, 16],
            "hidden_dim": 8, "log_scales": 2},
  "data": {"natural": 8, "manipulated": 8, "frames": 24,
           "height": 16, "width": 16},
  "train": {"epochs": )" << epochs << R"(, "window": 6, "batch_size": 4},
  "eval": {"stride": 3}
})";
}

}  // namespace

TEST_CASE("cli: full loop gen-data / train / score / eval") {
  fs::path root = fresh_root("isoface_cli_loop");
  fs::path cfg = root / "cfg.json";
  write_tiny_config(cfg, root, 1);

  CHECK(run("gen-data --config " + cfg.string()) == 0);
  CHECK(fs::exists(root / "data/manifest.json"));

  // regeneration with the same seed is byte-identical
  const std::string manifest = slurp(root / "data/manifest.json");
  CHECK(run("gen-data --config " + cfg.string()) == 0);
  CHECK(slurp(root / "data/manifest.json") == manifest);

  CHECK(run("train --config " + cfg.string()) == 0);
  CHECK(fs::exists(root / "run/checkpoint.isoc"));
  CHECK(fs::exists(root / "run/train_log.jsonl"));

  const std::string csv = (root / "scores.csv").string();
  CHECK(run("score --checkpoint " + (root / "run/checkpoint.isoc").string() +
            " --split test --out " + csv) == 0);
  const std::string scores = slurp(csv);
  CHECK(scores.rfind("video_id,sequence_index,score,label", 0) == 0);

  // scoring twice yields identical bytes
  CHECK(run("score --checkpoint " + (root / "run/checkpoint.isoc").string() +
            " --split test --out " + csv) == 0);
  CHECK(slurp(csv) == scores);

  const std::string report_dir = (root / "report").string();
  CHECK(run("eval --scores " + csv + " --out " + report_dir +
            " --cutoff 0.25 --cutoff 1.0 --recall 0.5") == 0);
  CHECK(fs::exists(root / "report/report.json"));
  CHECK(fs::exists(root / "report/roc.svg"));
  CHECK(fs::exists(root / "report/histogram.svg"));

  auto j = nlohmann::json::parse(slurp(root / "report/report.json"));
  CHECK(j.at("sequence").at("pauc").contains("0.25"));
  CHECK(j.at("sequence").at("log_wp").contains("0.5"));
  CHECK(j.at("video").contains("auc"));

  // eval on the same CSV is idempotent
  const std::string report = slurp(root / "report/report.json");
  CHECK(run("eval --scores " + csv + " --out " + report_dir +
            " --cutoff 0.25 --cutoff 1.0 --recall 0.5") == 0);
  CHECK(slurp(root / "report/report.json") == report);
}

TEST_CASE("cli: exit codes") {
  fs::path root = fresh_root("isoface_cli_codes");

  // unknown config key -> config error
  {
    std::ofstream os(root / "bad.json");
    os << R"({"sede": 1})";
  }
  CHECK(run("train --config " + (root / "bad.json").string()) == 2);

  // missing dataset -> data error
  fs::path cfg = root / "cfg.json";
  write_tiny_config(cfg, root, 0);
  CHECK(run("train --config " + cfg.string()) == 3);

  // malformed CSV -> data error
  {
    std::ofstream os(root / "bad.csv");
    os << "not,a,score,file\n1,2,3,4\n";
  }
  CHECK(run("eval --scores " + (root / "bad.csv").string() + " --out " +
            (root / "rep").string()) != 0);

  // unknown subcommand / flag -> config error
  CHECK(run("frobnicate") == 2);
  CHECK(run("train --does-not-exist 1") == 2);
}

TEST_CASE("cli: grad-check passes and the mutation sentinel fails") {
  CHECK(run("grad-check --rounds 1 --seed 5") == 0);
  CHECK(run("grad-check --rounds 1 --seed 5 --mutate") == 4);
}
