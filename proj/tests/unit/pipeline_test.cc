#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "estc/errors.h"
#include "estc/pipeline.h"
#include "test_util.h"

namespace estc {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::int64_t kFixedTime = 1700000000000;

// Structural equality with a relative tolerance on floating-point numbers.
::testing::AssertionResult json_near(const json& a, const json& b, const std::string& at = "$") {
  if (a.is_number_float() || b.is_number_float()) {
    if (!a.is_number() || !b.is_number()) {
      return ::testing::AssertionFailure() << at << ": type differs";
    }
    const double x = a.get<double>(), y = b.get<double>();
    if (std::abs(x - y) > 1e-9 * std::max(1.0, std::abs(y))) {
      return ::testing::AssertionFailure() << at << ": " << x << " vs " << y;
    }
    return ::testing::AssertionSuccess();
  }
  if (a.type() != b.type()) return ::testing::AssertionFailure() << at << ": type differs";
  if (a.is_object()) {
    if (a.size() != b.size()) return ::testing::AssertionFailure() << at << ": key count";
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) {
        return ::testing::AssertionFailure() << at << ": missing " << it.key();
      }
      auto r = json_near(it.value(), b.at(it.key()), at + "." + it.key());
      if (!r) return r;
    }
    return ::testing::AssertionSuccess();
  }
  if (a.is_array()) {
    if (a.size() != b.size()) return ::testing::AssertionFailure() << at << ": length";
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto r = json_near(a[i], b[i], at + "[" + std::to_string(i) + "]");
      if (!r) return r;
    }
    return ::testing::AssertionSuccess();
  }
  if (a != b) return ::testing::AssertionFailure() << at << ": " << a << " vs " << b;
  return ::testing::AssertionSuccess();
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

PipelineConfig fixture_config(const fs::path& store) {
  auto c = load_config(testing::data_dir() / "pipeline.conf");
  c.store = store;
  return c;
}

TEST(ParseKeyValue, TypesCommentsAndQuotes) {
  auto j = parse_key_value(
      "# comment\n"
      "seed = 7\n"
      "\n"
      "threshold = 0.25  # trailing\n"
      "refine = false\n"
      "name = \"a # not a comment\"\n"
      "linkage = average\n");
  EXPECT_EQ(j.at("seed"), 7);
  EXPECT_TRUE(j.at("seed").is_number_integer());
  EXPECT_DOUBLE_EQ(j.at("threshold").get<double>(), 0.25);
  EXPECT_EQ(j.at("refine"), false);
  EXPECT_EQ(j.at("name"), "a # not a comment");
  EXPECT_EQ(j.at("linkage"), "average");
}

TEST(ParseKeyValue, Malformed) {
  EXPECT_THROW(parse_key_value("[section]\n"), ParseError);
  EXPECT_THROW(parse_key_value("no equals sign\n"), ParseError);
  EXPECT_THROW(parse_key_value(" = 3\n"), ParseError);
  EXPECT_THROW(parse_key_value("name = \"open\n"), ParseError);
}

TEST(PipelineConfig, JsonAndKeyValueAgree) {
  testing::TempDir dir;
  testing::write_text(dir / "a.json",
                      R"({"seed": 3, "catalog": "c.jsonl", "agnes_threshold": 0.4,
                          "linkage": "complete", "refine": false})");
  testing::write_text(dir / "b.conf",
                      "seed = 3\ncatalog = c.jsonl\nagnes_threshold = 0.4\n"
                      "linkage = complete\nrefine = false\n");
  auto a = load_config(dir / "a.json"), b = load_config(dir / "b.conf");
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.require_seed(), 3u);
  EXPECT_EQ(a.catalog, dir.path() / "c.jsonl");
  EXPECT_EQ(a.linkage, Linkage::kComplete);
  EXPECT_FALSE(a.refine);
  EXPECT_EQ(PipelineConfig::from_json(a.to_json()).to_json(), a.to_json());
}

TEST(PipelineConfig, Rejections) {
  EXPECT_THROW(PipelineConfig::from_json({{"sede", 1}}), ValidationError);
  EXPECT_THROW(PipelineConfig::from_json({{"seed", -1}}), ValidationError);
  EXPECT_THROW(PipelineConfig::from_json({{"generator", "magic"}}), ValidationError);
  EXPECT_THROW(PipelineConfig::from_json({{"generator", "remote"}}), ValidationError);
  EXPECT_THROW(PipelineConfig::from_json({{"coherence_threshold", 1.5}}), ValidationError);
  EXPECT_THROW(PipelineConfig::from_json({{"min_products", 0}}), ValidationError);
  EXPECT_THROW(PipelineConfig::from_json({{"linkage", "ward"}}), ValidationError);
  EXPECT_THROW(PipelineConfig::from_json({{"agnes_threshold", "high"}}), ValidationError);
  EXPECT_THROW(PipelineConfig::from_json(json::array()), ValidationError);
  EXPECT_THROW(PipelineConfig{}.require_seed(), ValidationError);
}

TEST(PipelineConfig, TrainSeedsDifferByStage) {
  auto c = PipelineConfig::from_json({{"seed", 11}});
  EXPECT_NE(c.train_config("coherence").seed, c.train_config("correlation").seed);
  EXPECT_EQ(c.train_config("coherence").seed, c.train_config("coherence").seed);
}

TEST(Pipeline, MatchesGoldenOutputs) {
  testing::TempDir dir;
  const auto store = dir / "store.jsonl";
  FixedClock clock(kFixedTime);
  auto summary = run_pipeline(fixture_config(store), clock).to_json();
  EXPECT_TRUE(summary.contains("timings_ms"));
  summary.erase("timings_ms");

  const auto golden_dir = testing::data_dir() / "golden";
  std::ifstream in(golden_dir / "run_summary.json");
  EXPECT_TRUE(json_near(summary, json::parse(in)));

  const auto produced = read_jsonl(store);
  const auto expected = read_jsonl(golden_dir / "store.jsonl");
  ASSERT_EQ(produced.size(), expected.size());
  for (std::size_t i = 0; i < produced.size(); ++i) {
    EXPECT_TRUE(json_near(produced[i], expected[i], "line " + std::to_string(i + 1)));
  }
}

TEST(Pipeline, SecondRunAddsNothing) {
  testing::TempDir dir;
  const auto store = dir / "store.jsonl";
  FixedClock clock(kFixedTime);
  const auto config = fixture_config(store);
  const auto first = run_pipeline(config, clock);
  ASSERT_GT(first.channels_created, 0u);
  const auto bytes = read_file(store);
  const auto second = run_pipeline(config, clock);
  EXPECT_EQ(second.channels_created, 0u);
  EXPECT_EQ(second.duplicate_channels, first.channels_created);
  EXPECT_TRUE(second.channel_ids.empty());
  EXPECT_EQ(read_file(store), bytes);
}

TEST(Pipeline, StoreReplayMatchesRun) {
  testing::TempDir dir;
  const auto store_path = dir / "store.jsonl";
  FixedClock clock(kFixedTime);
  const auto summary = run_pipeline(fixture_config(store_path), clock);
  const auto index = ChannelStore::replay(store_path);
  EXPECT_EQ(index.order, summary.channel_ids);
  EXPECT_EQ(index.count(ChannelStatus::kPending), summary.channels_created);
  for (const auto& [id, ch] : index.channels) {
    EXPECT_EQ(ch.created_at, kFixedTime);
    EXPECT_GE(ch.products.size(), 3u);
  }
}

TEST(Pipeline, FailuresLeaveStoreUntouched) {
  testing::TempDir dir;
  const auto store = dir / "store.jsonl";
  FixedClock clock(kFixedTime);
  run_pipeline(fixture_config(store), clock);
  const auto bytes = read_file(store);

  auto no_seed = fixture_config(store);
  no_seed.seed.reset();
  EXPECT_THROW(run_pipeline(no_seed, clock), ValidationError);

  testing::write_text(dir / "empty.jsonl", "");
  auto empty = fixture_config(store);
  empty.catalog = dir / "empty.jsonl";
  EXPECT_THROW(run_pipeline(empty, clock), Error);

  auto missing = fixture_config(store);
  missing.topics = dir / "absent.jsonl";
  EXPECT_THROW(run_pipeline(missing, clock), Error);

  auto no_store = fixture_config(store);
  no_store.store.clear();
  EXPECT_THROW(run_pipeline(no_store, clock), ValidationError);

  EXPECT_EQ(read_file(store), bytes);
}

TEST(Pipeline, TemplateGeneratorRuns) {
  testing::TempDir dir;
  auto c = fixture_config(dir / "store.jsonl");
  c.generator = "template";
  FixedClock clock(kFixedTime);
  const auto summary = run_pipeline(c, clock);
  EXPECT_EQ(summary.products, 50u);
  EXPECT_EQ(ChannelStore::replay(c.store).channels.size(), summary.channels_created);
}

}  // namespace
}  // namespace estc
