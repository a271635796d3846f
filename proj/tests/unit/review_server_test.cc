#include <gtest/gtest.h>

#include <thread>

#include "estc/review_server.h"
#include "httplib.h"
#include "test_util.h"

namespace estc {
namespace {

using nlohmann::json;

Channel make_channel(const std::string& phrase, std::size_t n_products) {
  Channel ch;
  ch.title = TopicTitle::parse(phrase + " @ 推荐", TitleSource::kGenerated);
  ch.title_candidates = {{ch.title, 0.9}};
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n_products; ++i) {
    ch.products.push_back({phrase + "-p" + std::to_string(i), 0.8});
    ids.push_back(ch.products.back().product_id);
  }
  ch.channel_id = channel_content_id(ch.title, ids);
  ch.created_at = 1000;
  return ch;
}

class ReviewServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    store_ = std::make_unique<ChannelStore>(dir_ / "store.jsonl", 3,
                                            std::make_shared<FixedClock>(5000));
    for (int i = 0; i < 4; ++i) channels_.push_back(make_channel("场景" + std::to_string(i), 4));
    store_->add_channels(channels_);
    server_ = std::make_unique<ReviewServer>(*store_);
    port_ = server_->bind_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_->stop();
    thread_.join();
  }

  std::pair<int, json> get(const std::string& path) {
    auto r = client_->Get(path);
    if (!r) return {0, nullptr};
    return {r->status, json::parse(r->body)};
  }
  std::pair<int, json> decide(const std::string& id, const std::string& body) {
    auto r = client_->Post("/api/channels/" + id + "/decision", body, "application/json");
    if (!r) return {0, nullptr};
    return {r->status, json::parse(r->body)};
  }
  std::pair<int, json> decide(const std::string& id, const json& body) {
    return decide(id, body.dump());
  }

  testing::TempDir dir_;
  std::unique_ptr<ChannelStore> store_;
  std::vector<Channel> channels_;
  std::unique_ptr<ReviewServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(ReviewServerTest, ReviewFlowAndStats) {
  auto [code, stats] = get("/api/stats");
  ASSERT_EQ(code, 200);
  EXPECT_EQ(stats["pending"], 4);
  EXPECT_TRUE(stats["acceptance_rate"].is_null());

  auto [lc, listing] = get("/api/channels?status=pending");
  ASSERT_EQ(lc, 200);
  ASSERT_EQ(listing["channels"].size(), 4u);
  EXPECT_EQ(listing["total"], 4);

  for (int i = 0; i < 3; ++i) {
    const auto& id = channels_[i].channel_id;
    json body{{"decision", "accept"}, {"reviewer", "alice"}};
    if (i == 0) body["removed_products"] = {"场景0-p1"};
    auto [dc, updated] = decide(id, body);
    ASSERT_EQ(dc, 200) << updated;
    EXPECT_EQ(updated["status"], "published");
  }
  auto [rc, rejected] = decide(channels_[3].channel_id,
                               json{{"decision", "reject"}, {"reviewer", "bob"}});
  ASSERT_EQ(rc, 200);
  EXPECT_EQ(rejected["status"], "rejected");

  std::tie(code, stats) = get("/api/stats");
  EXPECT_EQ(stats["pending"], 0);
  EXPECT_EQ(stats["published"], 3);
  EXPECT_EQ(stats["rejected"], 1);
  EXPECT_DOUBLE_EQ(stats["acceptance_rate"].get<double>(), 75.0);
  EXPECT_EQ(get("/api/channels?status=pending").second["channels"].size(), 0u);

  auto [oc, one] = get("/api/channels/" + channels_[0].channel_id);
  ASSERT_EQ(oc, 200);
  EXPECT_EQ(one["products"].size(), 3u);
  // The decision is durable: a fresh replay agrees.
  EXPECT_EQ(ChannelStore::replay(dir_ / "store.jsonl").count(ChannelStatus::kPublished), 3u);
}

TEST_F(ReviewServerTest, Pagination) {
  std::vector<Channel> more;
  for (int i = 0; i < 21; ++i) more.push_back(make_channel("页" + std::to_string(i), 3));
  store_->add_channels(more);
  auto [c1, p1] = get("/api/channels");
  ASSERT_EQ(c1, 200);
  EXPECT_EQ(p1["channels"].size(), kPageSize);
  EXPECT_EQ(p1["total"], 25);
  EXPECT_EQ(p1["channels"][0]["channel_id"], channels_[0].channel_id);
  auto [c2, p2] = get("/api/channels?page=2");
  EXPECT_EQ(p2["channels"].size(), 5u);
  EXPECT_EQ(p2["page"], 2);
  EXPECT_EQ(get("/api/channels?page=3").second["channels"].size(), 0u);
}

TEST_F(ReviewServerTest, ErrorStatuses) {
  const auto& id = channels_[0].channel_id;
  EXPECT_EQ(get("/api/channels?status=maybe").first, 400);
  EXPECT_EQ(get("/api/channels?page=0").first, 400);
  EXPECT_EQ(get("/api/channels?page=x").first, 400);
  EXPECT_EQ(get("/api/channels/ch-missing").first, 404);

  EXPECT_EQ(decide(id, std::string("not json")).first, 400);
  EXPECT_EQ(decide(id, json{{"reviewer", "a"}}).first, 400);
  EXPECT_EQ(decide(id, json{{"decision", "maybe"}, {"reviewer", "a"}}).first, 400);
  EXPECT_EQ(decide(id, json{{"decision", "accept"}}).first, 400);
  EXPECT_EQ(decide(id, json{{"decision", "accept"}, {"reviewer", "  "}}).first, 400);
  auto [ec, err] = decide(id, json{{"decision", "accept"}, {"reviewer", "a"},
                                   {"removed_products", 3}});
  EXPECT_EQ(ec, 400);
  EXPECT_TRUE(err.contains("error"));

  EXPECT_EQ(decide("ch-missing", json{{"decision", "accept"}, {"reviewer", "a"}}).first, 404);
  EXPECT_EQ(decide(id, json{{"decision", "accept"},
                            {"reviewer", "a"},
                            {"removed_products", {"场景0-p0", "场景0-p1"}}})
                .first,
            422);
  EXPECT_EQ(decide(id, json{{"decision", "accept"},
                            {"reviewer", "a"},
                            {"removed_products", {"elsewhere"}}})
                .first,
            422);
  EXPECT_EQ(decide(id, json{{"decision", "reject"}, {"reviewer", "a"}}).first, 200);
  EXPECT_EQ(decide(id, json{{"decision", "accept"}, {"reviewer", "b"}}).first, 409);
}

TEST_F(ReviewServerTest, SeesChannelsAddedByAnotherWriter) {
  {
    ChannelStore other(dir_ / "store.jsonl", 3, std::make_shared<FixedClock>(6000));
    other.add_channels({make_channel("外部", 3)});
  }
  EXPECT_EQ(get("/api/stats").second["pending"], 5);
}

}  // namespace
}  // namespace estc
