// End-to-end checks of the command-line binary: artifact layout, exit codes,
// collision policy and rerun determinism. The binary path arrives via
// SPLITSC_BIN so the suite works from any build directory.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "splitsc/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string bin_path() {
  const char* p = std::getenv("SPLITSC_BIN");
  REQUIRE_MESSAGE(p != nullptr, "SPLITSC_BIN must point at the cli binary");
  return p;
}

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr interleaved
};

RunResult run_cli(const std::vector<std::string>& args) {
  std::string cmd = "'" + bin_path() + "'";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe))
    r.output.append(buf, n);
  int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Scratch tree shared by the whole suite; training runs are slow enough
// that each case reuses earlier artifacts instead of remaking them.
struct Workspace {
  fs::path root;
  fs::path config;

  Workspace() {
    root = fs::temp_directory_path() /
           ("splitsc_cli_" + std::to_string(getpid()));
    fs::create_directories(root);
    config = root / "cfg.json";
    json j;
    j["schema_version"] = 1;
    j["dataset"] = {{"name", "synthetic"}, {"count", 64},   {"seed", 7},
                    {"height", 4},         {"width", 4},    {"channels", 4}};
    j["model"] = {{"bits", 16},        {"symbols", 8},     {"backbone", "mlp"},
                  {"source_dim", 16},  {"source_blocks", 1},
                  {"channel_dim", 8},  {"channel_blocks", 2},
                  {"channel_heads", 2},{"group_bits", 4}};
    j["cbr_target"] = 0.125;
    j["channel"] = "awgn";
    j["lambda"] = 1.0;
    j["training"] = {{"batch", 8},          {"epochs_stage1", 2},
                     {"epochs_stage2", 2},  {"lr_stage2", 0.001},
                     {"val_images", 4}};
    j["seed"] = 3;
    j["output_dir"] = (root / "run").string();
    std::ofstream(config) << j.dump(2);
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

fs::path stage1_dir() { return ws().root / "run" / "stage1"; }
fs::path stage2_dir() { return ws().root / "run" / "stage2"; }

}  // namespace

TEST_CASE("train-stage1 produces artifacts and a summary") {
  auto r = run_cli({"train-stage1", "--config", ws().config.string()});
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(stage1_dir() / "stage1.ckpt"));
  CHECK(fs::exists(stage1_dir() / "interface.spec"));
  CHECK(fs::exists(stage1_dir() / "stage1_log.jsonl"));
  CHECK(fs::exists(stage1_dir() / "manifest.json"));
  // summary line carries the three headline numbers
  CHECK(r.output.find("loss") != std::string::npos);
  CHECK(r.output.find("mean eps") != std::string::npos);
  CHECK(r.output.find("psnr") != std::string::npos);

  // jsonl log: one valid object per line with the expected fields
  std::istringstream log(slurp(stage1_dir() / "stage1_log.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    json e = json::parse(line);
    CHECK(e.contains("epoch"));
    CHECK(e.contains("loss"));
    CHECK(e.contains("mean_eps"));
    CHECK(e.contains("psnr_val"));
    ++lines;
  }
  CHECK(lines == 2);
}

TEST_CASE("manifest round-trips the exact resolved config") {
  json m = json::parse(slurp(stage1_dir() / "manifest.json"));
  REQUIRE(m.contains("config"));
  splitsc::ExperimentConfig cfg =
      splitsc::parse_config(m["config"].dump(), "");
  CHECK(splitsc::canonical_json(cfg) == m["config"].dump(2));
  CHECK(splitsc::hex64(splitsc::config_hash(cfg)) == m["config_hash"]);
  CHECK(splitsc::hex64(splitsc::stage1_hash(cfg)) == m["stage1_hash"]);
  // defaults were materialized: the resolved config spells out lr_stage1
  CHECK(m["config"].at("training").contains("lr_stage1"));
}

TEST_CASE("output collisions are refused unless --force") {
  auto r = run_cli({"train-stage1", "--config", ws().config.string()});
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("--force") != std::string::npos);

  auto forced = run_cli(
      {"train-stage1", "--config", ws().config.string(), "--force"});
  CHECK(forced.exit_code == 0);
}

TEST_CASE("stage-1 reruns with the same seed are byte-identical") {
  fs::path other = ws().root / "run" / "stage1_rerun";
  auto r = run_cli({"train-stage1", "--config", ws().config.string(),
                    "--output", other.string()});
  REQUIRE(r.exit_code == 0);
  CHECK(slurp(other / "interface.spec") ==
        slurp(stage1_dir() / "interface.spec"));
  CHECK(slurp(other / "stage1.ckpt") == slurp(stage1_dir() / "stage1.ckpt"));
}

TEST_CASE("invalid config exits 2 and names the field") {
  json j = json::parse(slurp(ws().config));
  j["lambda"] = -1.0;
  fs::path bad = ws().root / "bad.json";
  std::ofstream(bad) << j.dump();
  auto r = run_cli({"train-stage1", "--config", bad.string()});
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("lambda") != std::string::npos);
}

TEST_CASE("unknown flags and missing subcommands exit 2") {
  CHECK(run_cli({"train-stage1", "--bogus"}).exit_code == 2);
  CHECK(run_cli({}).exit_code == 2);
  CHECK(run_cli({"--help"}).exit_code == 0);
}

TEST_CASE("train-stage2 consumes stage-1 artifacts and records the arm") {
  auto r = run_cli({"train-stage2", "--config", ws().config.string(),
                    "--stage1-dir", stage1_dir().string()});
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(stage2_dir() / "stage2.ckpt"));
  CHECK(fs::exists(stage2_dir() / "stage2_log.jsonl"));
  json m = json::parse(slurp(stage2_dir() / "manifest.json"));
  CHECK(m["ablation"] == "full");
  CHECK(m["stage1_dir"] == stage1_dir().string());
  CHECK(m.contains("stage1_fingerprint"));

  // explicit --ablation choice lands in the manifest
  fs::path noian = ws().root / "run" / "stage2_noian";
  auto r2 = run_cli({"train-stage2", "--config", ws().config.string(),
                     "--stage1-dir", stage1_dir().string(), "--ablation",
                     "no-ian", "--output", noian.string()});
  REQUIRE(r2.exit_code == 0);
  json m2 = json::parse(slurp(noian / "manifest.json"));
  CHECK(m2["ablation"] == "no-ian");
}

TEST_CASE("tampered interface spec is refused with exit 3") {
  fs::path tampered = ws().root / "tampered.spec";
  std::string bytes = slurp(stage1_dir() / "interface.spec");
  bytes[bytes.size() - 5] ^= 0x40;  // inside the epsilon payload
  std::ofstream(tampered, std::ios::binary) << bytes;
  auto r = run_cli({"train-stage2", "--config", ws().config.string(),
                    "--stage1-dir", stage1_dir().string(), "--interface",
                    tampered.string(), "--output",
                    (ws().root / "run" / "never").string()});
  CHECK(r.exit_code == 3);
  CHECK_FALSE(fs::exists(ws().root / "run" / "never"));
}

TEST_CASE("stage-1/stage-2 config mismatch is refused with exit 3") {
  json j = json::parse(slurp(ws().config));
  j["seed"] = 99;  // different stage-1 seed => incompatible artifacts
  fs::path other = ws().root / "other.json";
  std::ofstream(other) << j.dump();
  auto r = run_cli({"train-stage2", "--config", other.string(),
                    "--stage1-dir", stage1_dir().string(), "--output",
                    (ws().root / "run" / "never2").string()});
  CHECK(r.exit_code == 3);
  CHECK(r.output.find("incompatible") != std::string::npos);
}

TEST_CASE("eval prints a one-row table") {
  auto r = run_cli({"eval", "--stage2-dir", stage2_dir().string(), "--snr",
                    "12", "--seed", "4"});
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  std::istringstream out(r.output);
  std::string header, row;
  REQUIRE(std::getline(out, header));
  REQUIRE(std::getline(out, row));
  CHECK(header.rfind("channel,cbr,snr_db,seed,samples,mean_psnr", 0) == 0);
  CHECK(row.rfind("awgn,0.125,12,4,", 0) == 0);
}

TEST_CASE("sweep writes tables plus a manifest naming every seed") {
  fs::path out = ws().root / "sweep_out";
  auto r = run_cli({"sweep", stage2_dir().string(), "--snr", "5", "--snr",
                    "15", "--seed", "1", "--seed", "2", "--output",
                    out.string()});
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(out / "sweep.csv"));
  REQUIRE(fs::exists(out / "records.csv"));
  json m = json::parse(slurp(out / "sweep_manifest.json"));
  CHECK(m["seeds"] == json::array({1, 2}));
  CHECK(m["snrs_db"] == json::array({5.0, 15.0}));
  REQUIRE(m["cells"].size() == 1);
  CHECK(m["cells"][0].contains("stage2_fingerprint"));
  CHECK(m["cells"][0].contains("stage1_fingerprint"));

  // same grid spelled as comma lists reproduces the table byte for byte
  fs::path out2 = ws().root / "sweep_out2";
  auto r2 = run_cli({"sweep", stage2_dir().string(), "--snr", "5,15",
                     "--seed", "1,2", "--output",
                     out2.string()});
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(out / "sweep.csv") == slurp(out2 / "sweep.csv"));
  CHECK(slurp(out / "records.csv") == slurp(out2 / "records.csv"));
}

TEST_CASE("sweep enumerates every missing cell in one message") {
  auto r = run_cli({"sweep", (ws().root / "nope_a").string(),
                    (ws().root / "nope_b").string(), "--snr", "5", "--output",
                    (ws().root / "sweep_missing").string()});
  CHECK(r.exit_code == 3);
  CHECK(r.output.find("nope_a") != std::string::npos);
  CHECK(r.output.find("nope_b") != std::string::npos);
}

TEST_CASE("export-interface copies a validated spec") {
  fs::path dest = ws().root / "exported.spec";
  auto r = run_cli({"export-interface", "--stage1-dir", stage1_dir().string(),
                    "--output", dest.string()});
  REQUIRE(r.exit_code == 0);
  CHECK(slurp(dest) == slurp(stage1_dir() / "interface.spec"));
  // collision policy applies here too
  CHECK(run_cli({"export-interface", "--stage1-dir", stage1_dir().string(),
                 "--output", dest.string()})
            .exit_code == 2);
}

TEST_CASE("plot renders a nonempty svg from a hand-written table") {
  fs::path table = ws().root / "hand.csv";
  std::ofstream(table) << "channel,cbr,snr_db,seed,samples,mean_psnr,std_psnr,"
                          "mean_ber\n"
                          "awgn,0.125,5,1,64,22.1,0.4,0.01\n"
                          "awgn,0.125,10,1,64,24.8,0.3,0.005\n"
                          "awgn,0.125,15,1,64,26.0,0.3,0.001\n";
  fs::path svg = ws().root / "hand.svg";
  auto r = run_cli({"plot", table.string(), "--output", svg.string()});
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  std::string body = slurp(svg);
  CHECK(body.size() > 0);
  CHECK(body.find("<svg") != std::string::npos);
  bool has_line = body.find("polyline") != std::string::npos ||
                  body.find("<path") != std::string::npos;
  CHECK(has_line);
}

TEST_CASE("plot on a real sweep table and cleanup") {
  fs::path svg = ws().root / "sweep.svg";
  auto r = run_cli({"plot", (ws().root / "sweep_out" / "sweep.csv").string(),
                    "--output", svg.string()});
  REQUIRE(r.exit_code == 0);
  CHECK(slurp(svg).find("awgn") != std::string::npos);

  fs::remove_all(ws().root);  // last case: drop the scratch tree
}
