#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "estc/errors.h"
#include "estc/text_metrics.h"
#include "estc/topicgen.h"
#include "httplib.h"
#include "test_util.h"

namespace estc {
namespace {

using testing::make_product;

TEST(SerializeInput, OrderAndTruncation) {
  auto bare = make_product("p1", "纯棉T恤");
  EXPECT_EQ(serialize_input(bare).text, "纯棉T恤");

  auto full = make_product("p2", "防晒衣", {{"category", "外套"}, {"material", "冰丝"}},
                           "轻薄透气");
  EXPECT_EQ(serialize_input(full).text, "防晒衣 category:外套 material:冰丝 轻薄透气");
  EXPECT_EQ(product_text(full), "防晒衣 category:外套 material:冰丝");

  std::string long_title;
  for (int i = 0; i < 200; ++i) long_title += "海";
  auto cut = serialize_input(make_product("p3", long_title));
  EXPECT_EQ(decode_utf8(cut.text).size(), 120u);
  EXPECT_EQ(serialize_input(make_product("p3", long_title), 7).text, "海海海海海海海");
  EXPECT_EQ(serialize_input(full).text, serialize_input(full).text);
}

class RetrievalTest : public ::testing::Test {
 protected:
  void SetUp() override {
    catalog_ = {make_product("b", "羽绒 外套"), make_product("a", "防晒 衣"),
                make_product("c", "沙滩 拖鞋")};
    pairs_ = {{"b", TopicTitle::parse("冬季 @ 保暖", TitleSource::kHuman)},
              {"a", TopicTitle::parse("夏日 @ 防晒", TitleSource::kHuman)},
              {"c", TopicTitle::parse("海边 @ 度假", TitleSource::kHuman)}};
    std::vector<std::string> corpus;
    for (const auto& p : catalog_) corpus.push_back(serialize_input(p).text);
    vocab_ = fit_vocabulary(corpus, 100, false);
  }
  std::vector<Product> catalog_;
  std::vector<LabeledPair> pairs_;
  FeatureVocabulary vocab_;
};

TEST_F(RetrievalTest, IdenticalQueryReturnsItsTopic) {
  RetrievalGenerator gen(pairs_, catalog_, TextEncoder(vocab_));
  auto t = gen.generate(catalog_[2]);
  EXPECT_EQ(t.serialize(), "海边 @ 度假");
  EXPECT_EQ(t.source, TitleSource::kGenerated);
}

TEST_F(RetrievalTest, OrthogonalQueryTiesToSmallestId) {
  RetrievalGenerator gen(pairs_, catalog_, TextEncoder(vocab_));
  EXPECT_EQ(gen.generate(make_product("q", "完全 无关")).serialize(), "夏日 @ 防晒");
}

TEST_F(RetrievalTest, ArgmaxMatchesExhaustiveComparison) {
  RetrievalGenerator gen(pairs_, catalog_, TextEncoder(vocab_));
  TextEncoder enc(vocab_);
  for (const auto* q : {"羽绒 拖鞋 拖鞋", "防晒 外套", "沙滩 衣 衣 衣"}) {
    auto query = make_product("q", q);
    const auto qv = enc.encode(serialize_input(query).text);
    double best = -2;
    std::string best_id;
    for (const auto& p : catalog_) {
      const double s = cosine(qv, enc.encode(serialize_input(p).text));
      if (s > best || (s == best && p.id < best_id)) {
        best = s;
        best_id = p.id;
      }
    }
    std::string want;
    for (const auto& pair : pairs_) {
      if (pair.product_id == best_id) want = pair.title.serialize();
    }
    EXPECT_EQ(gen.generate(query).serialize(), want) << q;
  }
}

TEST_F(RetrievalTest, OnlySeenTitlesSoDrIsZero) {
  RetrievalGenerator gen(pairs_, catalog_, TextEncoder(vocab_));
  std::vector<TopicTitle> train;
  for (const auto& p : pairs_) train.push_back(p.title);
  EXPECT_DOUBLE_EQ(difference_rate(gen.generate_all(catalog_), train), 0.0);
}

TEST_F(RetrievalTest, Errors) {
  EXPECT_THROW(RetrievalGenerator({}, catalog_, TextEncoder(vocab_)), ValidationError);
  std::vector<LabeledPair> unknown{{"zzz", TopicTitle::parse("a @ b")}};
  EXPECT_THROW(RetrievalGenerator(unknown, catalog_, TextEncoder(vocab_)), ValidationError);
}

TEST(Template, MatchingRules) {
  TemplateGenerator gen({{"t-shirt", "夏日清爽", "{category}推荐"},
                         {"外套", "秋冬必备", "{category}"},
                         {"*", "{category}好物", ""}});
  auto tee = make_product("1", "Cotton T-Shirt 外套", {{"category", "上衣"}});
  EXPECT_EQ(gen.generate(tee).serialize(), "夏日清爽 @ 上衣推荐");
  auto coat = make_product("2", "羊毛大衣", {{"category", "外套"}});
  EXPECT_EQ(gen.generate(coat).serialize(), "秋冬必备 @ 外套");
  auto other = make_product("3", "陶瓷 杯");
  auto t = gen.generate(other);
  EXPECT_EQ(t.phrase_a, "陶好物");
  EXPECT_EQ(t.source, TitleSource::kGenerated);

  EXPECT_THROW(TemplateGenerator({{"x", "a", "b"}}), ValidationError);
  EXPECT_THROW(TemplateGenerator({}), ValidationError);
}

// Minimal generator service on a loopback port.
class StubServer {
 public:
  explicit StubServer(httplib::Server::Handler handler) {
    server_.Post("/generate", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  RemoteOptions options() const {
    RemoteOptions o;
    o.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/generate";
    o.timeout = std::chrono::milliseconds(2000);
    return o;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(Remote, EchoesFixedTitleAndSendsContract) {
  std::string seen_body;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content(R"({"phrase_a":"夏日海边","phrase_b":"防晒必备"})", "application/json");
  });
  auto t = remote_generate({"防晒衣 冰丝", 120}, stub.options());
  EXPECT_EQ(t.serialize(), "夏日海边 @ 防晒必备");
  EXPECT_EQ(t.source, TitleSource::kGenerated);
  auto body = nlohmann::json::parse(seen_body);
  EXPECT_EQ(body.at("input"), "防晒衣 冰丝");
  EXPECT_EQ(body.at("beam_size"), 4);
  EXPECT_EQ(body.at("max_output_length"), 20);
}

TEST(Remote, ValidationAndTransportErrors) {
  std::atomic<int> mode{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    switch (mode.load()) {
      case 0: res.set_content(R"({"phrase_a":"  ","phrase_b":"x"})", "application/json"); break;
      case 1: res.set_content(R"({"phrase_a":"一二三四五六七八九十","phrase_b":"一二三四五六七八九十一"})", "application/json"); break;
      case 2: res.set_content("not json", "text/plain"); break;
      default: res.status = 503;
    }
  });
  GeneratorInput in{"x", 120};
  EXPECT_THROW(remote_generate(in, stub.options()), ValidationError);
  mode = 1;
  EXPECT_THROW(remote_generate(in, stub.options()), ValidationError);
  mode = 2;
  EXPECT_THROW(remote_generate(in, stub.options()), TransportError);
  mode = 3;
  EXPECT_THROW(remote_generate(in, stub.options()), TransportError);
}

TEST(Remote, TimeoutAndUnreachable) {
  StubServer slow([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content(R"({"phrase_a":"a","phrase_b":"b"})", "application/json");
  });
  auto o = slow.options();
  o.timeout = std::chrono::milliseconds(200);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(remote_generate({"x", 120}, o), TransportError);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(1200));

  RemoteOptions dead;
  dead.endpoint = "http://127.0.0.1:1/generate";
  dead.timeout = std::chrono::milliseconds(300);
  EXPECT_THROW(remote_generate({"x", 120}, dead), TransportError);
  dead.endpoint = "not-a-url";
  EXPECT_THROW(remote_generate({"x", 120}, dead), ValidationError);
}

TEST(Remote, GenerateAllKeepsOrderUnderConcurrency) {
  std::atomic<int> in_flight{0}, peak{0};
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    const int now = ++in_flight;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --in_flight;
    auto input = nlohmann::json::parse(req.body).at("input").get<std::string>();
    res.set_content(nlohmann::json{{"phrase_a", input}, {"phrase_b", "b"}}.dump(),
                    "application/json");
  });
  auto o = stub.options();
  o.max_in_flight = 3;
  RemoteGenerator gen(o);
  std::vector<Product> products;
  for (int i = 0; i < 12; ++i) products.push_back(make_product(std::to_string(i), "t" + std::to_string(i)));
  auto titles = gen.generate_all(products);
  ASSERT_EQ(titles.size(), 12u);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(titles[i].phrase_a, "t" + std::to_string(i));
  EXPECT_LE(peak.load(), 3);
}

}  // namespace
}  // namespace estc
