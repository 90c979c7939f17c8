#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "gmml/data.hpp"
#include "gmml/encoder.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result gmml_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = gmml::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gmml_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small dataset: 12 classes, 30 samples each, 6/3/3 split.
std::string small_data(const fs::path& dir) {
  const std::string path = (dir / "small.gmds").string();
  const Result r = gmml_run({"gen-data", "--classes", "12", "--samples-per-class", "30", "--dim", "6",
                             "--split-fractions", "0.5,0.25,0.25", "--seed", "3", "-o", path});
  REQUIRE(r.code == 0);
  return path;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(gmml_run({}).code == 2);
  CHECK(gmml_run({"gen-data"}).code == 2);
  CHECK(gmml_run({"frobnicate"}).code == 2);
  const Result bad_loss = gmml_run({"train", "--data", "x", "--loss", "hinge", "-o", "y"});
  CHECK(bad_loss.code == 2);
  for (const char* name : {"pn", "nca", "gm", "bce", "asl"}) CHECK(bad_loss.err.find(name) != std::string::npos);
  CHECK(gmml_run({"gen-data", "-o", "x", "--seed", "minus-one"}).code == 2);
  CHECK(gmml_run({"gen-data", "-o", "x", "--preset", "imagenet"}).code == 2);
  CHECK(gmml_run({"--version"}).code == 0);
}

TEST_CASE("gen-data writes the preset split and is deterministic") {
  const fs::path dir = scratch("gen");
  const Result a = gmml_run({"gen-data", "--preset", "tri-modal-100", "--seed", "7", "-o", (dir / "a.gmds").string()});
  REQUIRE(a.code == 0);
  CHECK(a.out.find("64/16/20") != std::string::npos);
  const gmml::Dataset d = gmml::load_dataset(dir / "a.gmds");
  CHECK(d.classes_in(gmml::Split::train).size() == 64);
  CHECK(d.classes_in(gmml::Split::val).size() == 16);
  CHECK(d.classes_in(gmml::Split::test).size() == 20);
  REQUIRE(gmml_run({"gen-data", "--preset", "tri-modal-100", "--seed", "7", "-o", (dir / "b.gmds").string()}).code == 0);
  CHECK(slurp(dir / "a.gmds") == slurp(dir / "b.gmds"));

  const json m = read_json(dir / "a.gmds.manifest.json");
  CHECK(m["subcommand"] == "gen-data");
  CHECK(m["seed"] == 7);
  for (const char* key : {"config", "artifacts", "tool_version", "timestamp"}) CHECK(m.contains(key));
}

TEST_CASE("seed falls back to the environment") {
  const fs::path dir = scratch("env");
  ::setenv("GMML_SEED", "11", 1);
  REQUIRE(gmml_run({"gen-data", "--classes", "5", "--split-fractions", "1,0,0", "-o", (dir / "env.gmds").string()}).code == 0);
  ::unsetenv("GMML_SEED");
  REQUIRE(gmml_run({"gen-data", "--classes", "5", "--split-fractions", "1,0,0", "--seed", "11", "-o",
                    (dir / "flag.gmds").string()})
              .code == 0);
  CHECK(slurp(dir / "env.gmds") == slurp(dir / "flag.gmds"));
}

TEST_CASE("train with zero epochs leaves the initialization") {
  const fs::path dir = scratch("train0");
  const std::string data = small_data(dir);
  const std::string ckpt = (dir / "m.gmml").string();
  REQUIRE(gmml_run({"train", "--data", data, "--loss", "nca", "--epochs", "0", "--seed", "4", "-o", ckpt}).code == 0);
  gmml::Rng rng(4, "init");
  const gmml::MlpParams init = gmml::init_mlp({6, {64, 64}, 32}, rng);
  CHECK(gmml::load_checkpoint(ckpt) == init);
  CHECK(slurp(dir / "m.gmml.history.csv") == "epoch,mean_loss,lr\n");
}

TEST_CASE("train, eval and replay are reproducible") {
  const fs::path dir = scratch("replay");
  const std::string data = small_data(dir);
  const std::string ckpt = (dir / "m.gmml").string();
  const std::string report = (dir / "r.json").string();
  REQUIRE(gmml_run({"train", "--data", data, "--epochs", "3", "--batch-size", "24", "--lr", "0.02", "--seed", "5",
                    "--hidden", "16", "--head", "8", "-o", ckpt})
              .code == 0);
  REQUIRE(gmml_run({"eval", "--data", data, "--checkpoint", ckpt, "--n", "3", "--trials", "50", "--seed", "6", "-o", report, "--csv",
                    (dir / "r.csv").string()})
              .code == 0);
  const json r = read_json(report);
  CHECK(r["trials"] == 50);
  CHECK(r["n_way"] == 3);
  CHECK(r["k_shot"] == 1);
  CHECK(r["q_per_class"] == 15);
  const std::string history = slurp(dir / "m.gmml.history.csv");
  CHECK(history.find("epoch,mean_loss,lr\n0,") == 0);

  const fs::path again = dir / "again";
  fs::create_directories(again);
  REQUIRE(gmml_run({"replay", (dir / "m.gmml.manifest.json").string(), "--output-dir", again.string()}).code == 0);
  CHECK(slurp(again / "m.gmml") == slurp(ckpt));
  CHECK(slurp(again / "m.gmml.history.csv") == history);
  REQUIRE(gmml_run({"replay", (dir / "r.json.manifest.json").string(), "--output-dir", again.string()}).code == 0);
  CHECK(slurp(again / "r.json") == slurp(report));
  CHECK(slurp(again / "r.csv") == slurp(dir / "r.csv"));
}

TEST_CASE("eval with a single trial has zero half-width") {
  const fs::path dir = scratch("eval1");
  const std::string data = small_data(dir);
  const std::string ckpt = (dir / "m.gmml").string();
  REQUIRE(gmml_run({"train", "--data", data, "--epochs", "0", "-o", ckpt}).code == 0);
  REQUIRE(gmml_run({"eval", "--data", data, "--checkpoint", ckpt, "--split", "val", "--n", "3", "--trials", "1", "-o",
                    (dir / "r.json").string()})
              .code == 0);
  CHECK(read_json(dir / "r.json")["ci_halfwidth"] == 0.0);
}

TEST_CASE("random encoder on non-informative classes is at chance") {
  const fs::path dir = scratch("chance");
  const std::string data = (dir / "noise.gmds").string();
  REQUIRE(gmml_run({"gen-data", "--classes", "20", "--modes", "1", "--class-separation", "0", "--mode-separation", "0",
                    "--samples-per-class", "40", "--split-fractions", "0.5,0,0.5", "-o", data})
              .code == 0);
  const std::string ckpt = (dir / "m.gmml").string();
  REQUIRE(gmml_run({"train", "--data", data, "--epochs", "0", "-o", ckpt}).code == 0);
  REQUIRE(gmml_run({"eval", "--data", data, "--checkpoint", ckpt, "--trials", "1000", "-o", (dir / "r.json").string()})
              .code == 0);
  const json r = read_json(dir / "r.json");
  CHECK(std::abs(r["mean_accuracy"].get<double>() - 0.2) <= 3 * r["ci_halfwidth"].get<double>());
}

TEST_CASE("compare produces one row per loss and setting") {
  const fs::path dir = scratch("compare");
  const std::string data = small_data(dir);
  const std::string csv = (dir / "c.csv").string();
  const Result r = gmml_run({"compare", "--data", data, "--losses", "gm", "--shots", "1", "--n", "3", "--trials", "20",
                             "--epochs", "1", "--batch-size", "24", "--hidden", "8", "--head", "4", "-o", csv});
  REQUIRE(r.code == 0);
  const std::string table = slurp(csv);
  CHECK(table.find("loss,n_way,k_shot,mean,ci\n") == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);
  const json j = read_json(csv + ".json");
  CHECK(j["rows"].size() == 1);
  CHECK(j["rows"][0]["loss"] == "gm");

  REQUIRE(gmml_run({"compare", "--data", data, "--losses", "pn,gm", "--shots", "1,2", "--n", "3", "--trials", "10",
                    "--epochs", "1", "--batch-size", "24", "--hidden", "8", "--head", "4", "-o", csv})
              .code == 0);
  CHECK(read_json(csv + ".json")["rows"].size() == 4);
}

TEST_CASE("compare flushes failure markers when training fails") {
  const fs::path dir = scratch("compare_fail");
  const std::string data = small_data(dir);
  const std::string csv = (dir / "c.csv").string();
  const Result r = gmml_run({"compare", "--data", data, "--losses", "pn", "--shots", "1", "--n", "3", "--trials", "5",
                             "--epochs", "4", "--warmup-epochs", "0", "--lr", "1e6", "-o", csv});
  CHECK(r.code == 1);
  CHECK(slurp(csv).find("pn,3,1,FAILED,FAILED") != std::string::npos);
  CHECK(read_json(csv + ".json")["rows"][0]["mean"].is_null());
}

TEST_CASE("verify exit codes") {
  const fs::path dir = scratch("verify");
  const Result ok = gmml_run({"verify", "--trials", "10", "-o", (dir / "v.json").string()});
  CHECK(ok.code == 0);
  CHECK(read_json(dir / "v.json")["all_passed"] == true);
  const Result bad = gmml_run({"verify", "--trials", "10", "--inject-fault", "gradient", "-o", (dir / "f.json").string()});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("gradient-fd-mismatch") != std::string::npos);
}

TEST_CASE("missing input files are runtime failures") {
  const fs::path dir = scratch("missing");
  const Result r = gmml_run({"train", "--data", (dir / "nope.gmds").string(), "-o", (dir / "m.gmml").string()});
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());
}
