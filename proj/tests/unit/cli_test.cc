// Smoke tests for the estc binary: every subcommand runs on the fixtures and
// prints parseable JSON; bad input exits nonzero.
#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include "json.hpp"
#include "test_util.h"

namespace estc {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
  json parsed() const { return json::parse(out); }
};

Result estc(const std::string& args) {
  const std::string cmd = std::string(ESTC_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  std::string config_ = "--config " + q(testing::data_dir() / "pipeline.conf");
  testing::TempDir dir_;
};

TEST_F(CliTest, RunTwiceIsIdempotent) {
  const auto store = dir_ / "store.jsonl";
  auto first = estc(config_ + " run --store " + q(store) + " --fixed-time 1700000000000");
  ASSERT_EQ(first.code, 0);
  EXPECT_EQ(first.parsed()["channels_created"], 10);
  auto second = estc(config_ + " run --store " + q(store));
  ASSERT_EQ(second.code, 0);
  EXPECT_EQ(second.parsed()["channels_created"], 0);
  EXPECT_EQ(second.parsed()["duplicate_channels"], 10);
}

TEST_F(CliTest, StagewiseCommands) {
  auto ingest = estc(config_ + " ingest --pretrain-out " + q(dir_ / "pretrain.jsonl"));
  ASSERT_EQ(ingest.code, 0);
  EXPECT_EQ(ingest.parsed()["products"], 50);
  EXPECT_GT(count_lines(dir_ / "pretrain.jsonl"), 0u);

  auto augment = estc(config_ + " augment --out " + q(dir_ / "augmented.jsonl"));
  ASSERT_EQ(augment.code, 0);
  EXPECT_TRUE(augment.parsed().contains("promoted"));
  EXPECT_GT(count_lines(dir_ / "augmented.jsonl"), 0u);

  auto generate = estc(config_ + " generate --out " + q(dir_ / "titles.jsonl"));
  ASSERT_EQ(generate.code, 0);
  EXPECT_EQ(generate.parsed()["generated"], 50);
  EXPECT_EQ(count_lines(dir_ / "titles.jsonl"), 50u);

  auto cluster = estc(config_ + " cluster --titles " + q(dir_ / "titles.jsonl") + " --out " +
                      q(dir_ / "clusters.jsonl"));
  ASSERT_EQ(cluster.code, 0);
  EXPECT_EQ(cluster.parsed()["items"], 50);
  const std::size_t clusters = cluster.parsed()["clusters"];
  EXPECT_EQ(count_lines(dir_ / "clusters.jsonl"), clusters);

  auto qc = estc(config_ + " qc --clusters " + q(dir_ / "clusters.jsonl") + " --out " +
                 q(dir_ / "channels.jsonl"));
  ASSERT_EQ(qc.code, 0);
  const std::size_t kept = qc.parsed()["channels"], rejected = qc.parsed()["rejected"];
  EXPECT_EQ(kept + rejected, clusters);
  EXPECT_EQ(count_lines(dir_ / "channels.jsonl"), kept);
  EXPECT_EQ(count_lines(dir_ / "channels.jsonl.rejected.jsonl"), rejected);
}

TEST_F(CliTest, EvalGeneration) {
  testing::write_text(dir_ / "hyp.txt", "夏日 海边 @ 防晒 必备\n冬季 @ 保暖\n");
  testing::write_text(dir_ / "ref.txt", "夏日 海边 @ 防晒 必备\n冬季 出行 @ 保暖\n");
  testing::write_text(dir_ / "train.txt", "夏日 海边 @ 防晒 必备\n");
  auto r = estc("eval-generation --hyp " + q(dir_ / "hyp.txt") + " --ref " +
                q(dir_ / "ref.txt") + " --train " + q(dir_ / "train.txt"));
  ASSERT_EQ(r.code, 0);
  auto j = r.parsed();
  EXPECT_DOUBLE_EQ(j["dr"].get<double>(), 50.0);
  EXPECT_TRUE(j.contains("bleu"));
  EXPECT_NE(estc("eval-generation --hyp " + q(dir_ / "missing.txt") + " --ref " +
                 q(dir_ / "ref.txt"))
                .code,
            0);
}

TEST_F(CliTest, EvalClustering) {
  testing::write_text(dir_ / "emb.txt",
                      "a 1 0\nb 0.99 0.1\nc 0 1\nd 0.1 0.99\n");
  testing::write_text(dir_ / "labels.tsv", "a\tx\nb\tx\nc\ty\nd\ty\n");
  const auto files = " --embeddings " + q(dir_ / "emb.txt") + " --labels " +
                     q(dir_ / "labels.tsv");
  for (const std::string method : {"agnes", "kmeans"}) {
    auto r = estc("eval-clustering --method " + method + files);
    ASSERT_EQ(r.code, 0) << method;
    auto j = r.parsed();
    EXPECT_DOUBLE_EQ(j["f1"].get<double>(), 1.0) << method;
    EXPECT_EQ(j["clusters"], 2);
    EXPECT_GT(j["silhouette"].get<double>(), 0.9);
  }
  testing::write_text(dir_ / "ragged.txt", "a 1 0\nb 1\n");
  EXPECT_NE(estc("eval-clustering --embeddings " + q(dir_ / "ragged.txt") + " --labels " +
                 q(dir_ / "labels.tsv"))
                .code,
            0);
}

TEST_F(CliTest, ServeExport) {
  const auto store = dir_ / "store.jsonl";
  ASSERT_EQ(estc(config_ + " run --store " + q(store)).code, 0);
  ASSERT_EQ(estc("serve --store " + q(store) + " --export " + q(dir_ / "export.jsonl")).code, 0);
  EXPECT_EQ(count_lines(dir_ / "export.jsonl"), 10u);
}

TEST_F(CliTest, Errors) {
  EXPECT_NE(estc("").code, 0);
  EXPECT_NE(estc("frobnicate").code, 0);
  EXPECT_NE(estc("run --store " + q(dir_ / "s.jsonl")).code, 0);
  EXPECT_NE(estc(config_ + " augment --threshold 1.5 --out " + q(dir_ / "a.jsonl")).code, 0);
  EXPECT_FALSE(fs::exists(dir_ / "s.jsonl"));
}

}  // namespace
}  // namespace estc
