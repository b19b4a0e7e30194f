#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "protsent/seqio.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Result cli(const std::string& args, const fs::path& scratch) {
  const auto err = scratch / "stderr.txt";
  const std::string cmd = std::string(PROTSENT_CLI) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("protsent_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  void synth(const std::string& out) {
    const auto r = cli("gen-synthetic --out " + p(out) +
                           " --groups 4 --members 6 --heldout 6 --dim 8 --signal-dims 4 --string-groups 2"
                           " --dms-assays 2 --dms-per-assay 12",
                       dir_);
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, MissingInputNamesPath) {
  const auto r = cli("prep-dms --input " + p("nope.jsonl") + " --out " + p("o"), dir_);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(p("nope.jsonl")), std::string::npos);
}

TEST_F(Cli, UnknownOptionIsUsageError) {
  EXPECT_EQ(cli("train --bogus", dir_).code, 2);
}

TEST_F(Cli, BadConfigReportsLine) {
  std::ofstream(p("bad.ini")) << "[trainer]\n\nspeed = 3\n";
  std::ofstream(p("dms.jsonl")) << "";
  const auto r = cli("prep-dms --input " + p("dms.jsonl") + " --config " + p("bad.ini") + " --out " + p("o"), dir_);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos);
}

TEST_F(Cli, PrepDmsMatchesHandTally) {
  std::ofstream in(p("raw.jsonl"));
  // assay GB1_x is dropped by prefix; B is z-scored; C is clinical
  in << R"({"assay_id":"GB1_x","wild_type":"ACDE","mutant":"ACDF","score":1})" << '\n'
     << R"({"assay_id":"GB1_x","wild_type":"ACDE","mutant":"ACDG","score":2})" << '\n'
     << R"({"assay_id":"GB1_x","wild_type":"ACDE","mutant":"ACDH","score":3})" << '\n';
  for (int i = 1; i <= 4; ++i)
    in << R"({"assay_id":"B","wild_type":"MKLV","mutant":"MKL)" << "ACDE"[i - 1] << R"(","score":)" << i << "}\n";
  in << R"({"assay_id":"C","wild_type":"WWWW","mutant":"WWWA","label":"Pathogenic"})" << '\n'
     << R"({"assay_id":"C","wild_type":"WWWW","mutant":"WWWC","label":"Benign"})" << '\n';
  in.close();
  const auto r = cli("prep-dms --input " + p("raw.jsonl") + " --out " + p("o"), dir_);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = protsent::read_scored_file(p("o/dms.jsonl"));
  ASSERT_EQ(rows.size(), 6u);
  std::map<std::string, double> score;
  for (const auto& s : rows) score[s.seq2] = s.score;
  const double sd = std::sqrt(1.25);
  EXPECT_NEAR(score.at("MKLA"), ((1 - 2.5) / sd + 3) / 6, 1e-12);
  EXPECT_NEAR(score.at("MKLE"), ((4 - 2.5) / sd + 3) / 6, 1e-12);
  EXPECT_EQ(score.at("WWWA"), 0.0);
  EXPECT_EQ(score.at("WWWC"), 1.0);
  const auto m = nlohmann::json::parse(slurp(p("o/manifest.json")));
  EXPECT_EQ(m["counts"]["input"], 9);
  EXPECT_EQ(m["counts"]["dropped_prefix"], 3);
  EXPECT_EQ(m["counts"]["output"], 6);
}

TEST_F(Cli, MalformedTaskManifestExitsTwo) {
  synth("s");
  std::ofstream(p("task.json")) << R"({"name":"x","kind":"multiclass","metric":"spearman","labels":"s/tasks/group_class.labels.tsv"})";
  const auto r = cli("eval --embeddings " + p("s/embeddings.pemb") + " --tasks " + p("task.json") + " --out " + p("e"), dir_);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("incompatible"), std::string::npos);
}

TEST_F(Cli, IdentityEvalHasZeroDelta) {
  synth("s");
  const auto r = cli("eval --embeddings " + p("s/embeddings.pemb") + " --tasks " + p("s/tasks/group_class.json") + " " +
                         p("s/tasks/group_retrieval.json") + " --out " + p("e"),
                     dir_);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(p("e/report.json")));
  for (const auto& t : j["tasks"]) {
    EXPECT_EQ(t["baseline"], t["trained"]);
    EXPECT_EQ(t["delta_pct"].get<double>(), 0.0);
  }
  EXPECT_EQ(j["tasks_improved"], 0);
}

TEST_F(Cli, NonFiniteEmbeddingExitsThree) {
  synth("s");
  auto set = protsent::read_embeddings(p("s/embeddings.pemb"));
  set.matrix(0, 0) = std::numeric_limits<double>::quiet_NaN();
  set.normalized = false;
  protsent::write_embeddings(set, p("nan.pemb"));
  const auto r = cli("train --embeddings " + p("nan.pemb") + " --fasta " + p("s/sequences.fasta") + " --pfam " +
                         p("s/pfam.jsonl") + " --set sampler.batch_size=4 --set sampler.max_pairs=200 --out " + p("t"),
                     dir_);
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(Cli, RepeatRunsGiveIdenticalManifests) {
  synth("s");
  synth("s2");
  EXPECT_EQ(slurp(p("s/manifest.json")), slurp(p("s2/manifest.json")));
  const std::string train_args = " --embeddings " + p("s/embeddings.pemb") + " --fasta " + p("s/sequences.fasta") +
                                 " --pfam " + p("s/pfam.jsonl") + " --dms " + p("s/dms.jsonl") +
                                 " --set sampler.batch_size=4 --set sampler.max_pairs=400 --set trainer.effective_batch=8";
  ASSERT_EQ(cli("train" + train_args + " --out " + p("t1"), dir_).code, 0);
  ASSERT_EQ(cli("train" + train_args + " --out " + p("t2") + " --threads 3", dir_).code, 0);
  const auto m1 = nlohmann::json::parse(slurp(p("t1/manifest.json")));
  const auto m2 = nlohmann::json::parse(slurp(p("t2/manifest.json")));
  EXPECT_EQ(m1["outputs"], m2["outputs"]);
  EXPECT_EQ(slurp(p("t1/adapter.padp")), slurp(p("t2/adapter.padp")));
  EXPECT_GT(m1["counts"]["cosent_steps"].get<int>(), 0);
}
