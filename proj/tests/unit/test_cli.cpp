#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "test_util.hpp"

#ifndef NQE_CLI_PATH
#error "NQE_CLI_PATH must point at the nqe binary"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" NQE_CLI_PATH "' " + args + " 2>stderr.txt";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string stderr_of(const fs::path& cwd) { return nqe_test::read_file(cwd / "stderr.txt"); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = nqe_test::temp_dir("cli");
    ASSERT_EQ(run("--seed 5 synth --kind random --entities 30 --relations 4 --facts 200 --out facts", dir_).code, 0);
    ASSERT_EQ(run("ingest --facts facts/train.jsonl --split train --out kg.bin", dir_).code, 0);
    ASSERT_EQ(run("ingest --facts facts/valid.jsonl --split valid --out kg.bin --append", dir_).code, 0);
    ASSERT_EQ(run("ingest --facts facts/test.jsonl --split test --out kg.bin --append", dir_).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }
  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, IngestStats) {
  nqe_test::write_file(dir_ / "small.tsv", "a\tr\tb\na\tr\tc\tq\td\n");
  const auto r = run("ingest --facts small.tsv --split train --out small.bin", dir_);
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["new_facts"], 2);
  EXPECT_EQ(j["entities"], 4);
}

TEST_F(Cli, IngestMalformedLine) {
  std::string text;
  for (int i = 1; i < 17; ++i) text += "{\"s\":\"a\",\"r\":\"r\",\"o\":\"b" + std::to_string(i) + "\"}\n";
  text += "{\"s\":\"a\",\"r\":\"r\"}\n";
  nqe_test::write_file(dir_ / "bad.jsonl", text);
  const auto r = run("ingest --facts bad.jsonl --split train --out bad.bin", dir_);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(stderr_of(dir_).find("line 17"), std::string::npos);
}

TEST_F(Cli, IngestEmptyFile) {
  nqe_test::write_file(dir_ / "empty.jsonl", "");
  const auto r = run("ingest --facts empty.jsonl --split train --out empty.bin", dir_);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(json::parse(r.out)["lines"], 0);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("", dir_).code, 2);
  EXPECT_EQ(run("frobnicate", dir_).code, 2);
  EXPECT_EQ(run("ingest --split train", dir_).code, 2);
  EXPECT_EQ(run("--help", dir_).code, 0);
}

TEST_F(Cli, SampleIsDeterministic) {
  ASSERT_EQ(run("--seed 9 sample --store kg.bin --counts 1p=20,2i=10 --out ds1", dir_).code, 0);
  ASSERT_EQ(run("--seed 9 --threads 2 sample --store kg.bin --counts 1p=20,2i=10 --out ds2", dir_).code, 0);
  for (const char* f : {"manifest.json", "test-1p.jsonl", "test-2i.jsonl"}) {
    EXPECT_EQ(nqe_test::read_file(dir_ / "ds1" / f), nqe_test::read_file(dir_ / "ds2" / f)) << f;
  }
  const auto manifest = json::parse(nqe_test::read_file(dir_ / "ds1" / "manifest.json"));
  EXPECT_EQ(manifest["files"].size(), 2u);
}

TEST_F(Cli, SeedFromEnvironment) {
  ASSERT_EQ(run("sample --store kg.bin --counts 1p=5 --out env_a", dir_).code, 0);
  ASSERT_EQ(run("--seed 9 sample --store kg.bin --counts 1p=5 --out env_b", dir_).code, 0);
  ASSERT_EQ(setenv("NQE_SEED", "9", 1), 0);
  ASSERT_EQ(run("sample --store kg.bin --counts 1p=5 --out env_c", dir_).code, 0);
  unsetenv("NQE_SEED");
  EXPECT_EQ(nqe_test::read_file(dir_ / "env_b" / "test-1p.jsonl"), nqe_test::read_file(dir_ / "env_c" / "test-1p.jsonl"));
  EXPECT_NE(nqe_test::read_file(dir_ / "env_a" / "test-1p.jsonl"), nqe_test::read_file(dir_ / "env_b" / "test-1p.jsonl"));
}

TEST_F(Cli, CpOnBinaryStore) {
  nqe_test::write_file(dir_ / "bin.tsv", "a\tr\tb\nb\tr\tc\n");
  ASSERT_EQ(run("ingest --facts bin.tsv --split test --out bin.bin", dir_).code, 0);
  const auto r = run("sample --store bin.bin --counts 2cp=10 --out cp", dir_);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(stderr_of(dir_).find("arity"), std::string::npos);
}

TEST_F(Cli, AnswerMatchesBruteForce) {
  ASSERT_EQ(run("--seed 2 sample --store kg.bin --counts pni=3,1p=3 --out ans", dir_).code, 0);
  for (const char* file : {"test-pni.jsonl", "test-1p.jsonl"}) {
    std::ifstream in(dir_ / "ans" / file);
    std::string line;
    while (std::getline(in, line)) {
      const auto q = json::parse(line);
      const std::string text = q["text"];
      const auto a = run("answer --store kg.bin --query \"" + text + "\"", dir_);
      const auto b = run("answer --store kg.bin --brute-force --query \"" + text + "\"", dir_);
      ASSERT_EQ(a.code, 0);
      ASSERT_EQ(b.code, 0);
      const auto ja = json::parse(a.out);
      EXPECT_EQ(ja["answers"], json::parse(b.out)["answers"]);
      EXPECT_EQ(ja["count"].get<std::size_t>(), q["easy"].size() + q["hard"].size());
    }
  }
}

TEST_F(Cli, AnswerParseError) {
  const auto r = run("answer --store kg.bin --query \"(P 2 (f e1 r0 ?\"", dir_);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(stderr_of(dir_).find("offset"), std::string::npos);
}

TEST_F(Cli, TrainEvalQuery) {
  ASSERT_EQ(run("--seed 4 sample --store kg.bin --counts train/1p=40,train/2i=10,1p=10,2i=5,2in=5,2cp=5 --out tr", dir_).code,
            0);
  nqe_test::write_file(dir_ / "run.toml",
                       "[model]\ndim = 8\nffn_dim = 16\n[train]\nepochs = 5\nbatch_size = 16\n"
                       "[paths]\nstore = \"kg.bin\"\ndata = \"tr\"\n");
  const auto t = run("train --config run.toml --checkpoint m.ck", dir_);
  ASSERT_EQ(t.code, 0) << stderr_of(dir_);
  EXPECT_TRUE(fs::exists(dir_ / "m.ck"));
  const auto csv = nqe_test::read_file(dir_ / "m.ck.loss.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);

  const auto e = run("eval --config run.toml --checkpoint m.ck --report report.json", dir_);
  ASSERT_EQ(e.code, 0) << stderr_of(dir_);
  const auto rep = json::parse(e.out);
  EXPECT_TRUE(rep.contains("avg_p"));
  EXPECT_TRUE(fs::exists(dir_ / "report.json"));

  EXPECT_EQ(run("eval --store kg.bin --data tr --checkpoint missing.ck", dir_).code, 2);

  std::ifstream in(dir_ / "tr" / "test-2cp.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  const std::string text = json::parse(line)["text"];
  const auto q = run("query --checkpoint m.ck --top 0 --query \"" + text + "\"", dir_);
  ASSERT_EQ(q.code, 0) << stderr_of(dir_);
  const auto blocks = json::parse(q.out)["blocks"];
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0]["variable"], "V1");
  EXPECT_EQ(blocks[1]["variable"], "V_tar");
  for (const auto& b : blocks) {
    double total = 0;
    for (const auto& row : b["top"]) total += row["probability"].get<double>();
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
  const auto strict = run("query --checkpoint m.ck --threshold 1.0 --query \"" + text + "\"", dir_);
  ASSERT_EQ(strict.code, 0);
  for (const auto& b : json::parse(strict.out)["blocks"]) EXPECT_TRUE(b["answers"].empty());
}

TEST_F(Cli, TrainRejectsBadConfig) {
  nqe_test::write_file(dir_ / "bad.toml", "[model]\nwidth = 3\n");
  EXPECT_EQ(run("train --store kg.bin --data tr --config bad.toml --checkpoint x.ck", dir_).code, 2);
  nqe_test::write_file(dir_ / "bad2.toml", "[train]\nepsilon = 2.0\n");
  EXPECT_EQ(run("train --store kg.bin --data tr --config bad2.toml --checkpoint x.ck", dir_).code, 2);
}
