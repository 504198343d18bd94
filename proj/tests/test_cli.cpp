#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

const char* cli_path() { return IIHT_CLI_PATH; }

int run(const std::string& args, const std::string& log_name = "cli_out.txt") {
  const std::string out = (fs::temp_directory_path() / log_name).string();
  const std::string command =
      std::string(cli_path()) + " " + args + " > " + out + " 2>&1";
  const int status = std::system(command.c_str());
  return WEXITSTATUS(status);
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string slurp_log(const std::string& log_name = "cli_out.txt") {
  return file_bytes(fs::temp_directory_path() / log_name);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("synth-data is deterministic under a fixed seed") {
  TempDir dir_a("iiht_cli_synth_a");
  TempDir dir_b("iiht_cli_synth_b");
  const std::string common = "synth-data --seed 7 --train 6 --val 2 --test 2 --out ";
  REQUIRE(run(common + dir_a.path.string()) == 0);
  REQUIRE(run(common + dir_b.path.string()) == 0);
  for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl", "templates.txt"}) {
    CHECK(file_bytes(dir_a.path / name) == file_bytes(dir_b.path / name));
    CHECK(!file_bytes(dir_a.path / name).empty());
  }
}

TEST_CASE("unknown flags exit with usage code 1") {
  CHECK(run("synth-data --no-such-flag") == 1);
  CHECK(run("") == 1);
  CHECK(run("no-such-subcommand") == 1);
}

TEST_CASE("missing files exit with runtime code 2 and name the path") {
  CHECK(run("inspect --checkpoint /nonexistent/model.bin") == 2);
  CHECK(slurp_log().find("/nonexistent/model.bin") != std::string::npos);
  CHECK(run("generate --checkpoint /nonexistent/model.bin --corpus /nonexistent.jsonl") ==
        2);
}

TEST_CASE("gradcheck passes on a fresh build") {
  CHECK(run("gradcheck --instances 2 --seed 3") == 0);
  const std::string log = slurp_log();
  CHECK(log.find("[pass]") != std::string::npos);
  CHECK(log.find("loss_blended") != std::string::npos);
}

TEST_CASE("train, inspect, generate and evaluate work end to end") {
  TempDir dir("iiht_cli_e2e");
  const std::string data = (dir.path / "data").string();
  const std::string checkpoint = (dir.path / "model.iiht").string();
  REQUIRE(run("synth-data --seed 11 --train 6 --val 2 --test 2 --out " + data) == 0);

  REQUIRE(run("train --corpus " + data + " --checkpoint " + checkpoint +
              " --epochs 2 --batch 3 --hidden 16 --heads 2 --layers 1 --seed 11" +
              " --log " + (dir.path / "log.csv").string()) == 0);
  CHECK(fs::exists(checkpoint));
  CHECK(fs::exists(checkpoint + ".vocab.txt"));
  CHECK(fs::exists(checkpoint + ".merges.txt"));
  CHECK(fs::exists(checkpoint + ".templates.txt"));
  {
    std::ifstream log(dir.path / "log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "epoch,train_loss,val_loss,L_G,L_C,state_acc");
  }

  CHECK(run("inspect --checkpoint " + checkpoint) == 0);
  CHECK(slurp_log().find("generator/output/weight") != std::string::npos);

  CHECK(run("generate --checkpoint " + checkpoint + " --corpus " + data +
            "/test.jsonl --id test-1 --max-len 24 --set pneumonia=positive") == 0);
  const std::string generate_log = slurp_log();
  CHECK(generate_log.find("record: test-1") != std::string::npos);
  CHECK(generate_log.find("override: positive") != std::string::npos);

  CHECK(run("evaluate --checkpoint " + checkpoint + " --corpus " + data +
            "/test.jsonl --max-len 24 --out " + (dir.path / "eval.json").string()) == 0);
  const std::string eval_log = slurp_log();
  CHECK(eval_log.find("\"bleu1\"") != std::string::npos);
  CHECK(eval_log.find("\"meteor_exact\"") != std::string::npos);
  CHECK(fs::exists(dir.path / "eval.json"));
}

TEST_CASE("the seed environment variable feeds defaults") {
  TempDir dir_a("iiht_cli_env_a");
  TempDir dir_b("iiht_cli_env_b");
  const std::string base = std::string(cli_path()) +
                           " synth-data --train 3 --val 1 --test 1 --out ";
  const std::string out = (fs::temp_directory_path() / "cli_out.txt").string();
  REQUIRE(WEXITSTATUS(std::system(
              ("IIHT_SEED=42 " + base + dir_a.path.string() + " > " + out).c_str())) ==
          0);
  REQUIRE(WEXITSTATUS(std::system(
              (base + dir_b.path.string() + " --seed 42 > " + out).c_str())) == 0);
  CHECK(file_bytes(dir_a.path / "train.jsonl") == file_bytes(dir_b.path / "train.jsonl"));
}

TEST_CASE("subcommands do not mutate their input files") {
  TempDir dir("iiht_cli_immutable");
  const std::string data = (dir.path / "data").string();
  REQUIRE(run("synth-data --seed 3 --train 4 --val 1 --test 1 --out " + data) == 0);
  const std::string before = file_bytes(dir.path / "data" / "train.jsonl");
  const std::string checkpoint = (dir.path / "m.iiht").string();
  REQUIRE(run("train --corpus " + data + " --checkpoint " + checkpoint +
              " --epochs 1 --batch 2 --hidden 16 --heads 2 --layers 1") == 0);
  CHECK(file_bytes(dir.path / "data" / "train.jsonl") == before);
}
