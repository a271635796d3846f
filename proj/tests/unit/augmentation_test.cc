#include <gtest/gtest.h>

#include <algorithm>

#include "estc/augmentation.h"
#include "estc/errors.h"
#include "estc/text_metrics.h"
#include "qc_fixtures.h"
#include "test_util.h"

namespace estc {
namespace {

class AugmentationTest : public ::testing::Test {
 protected:
  void SetUp() override {
    fx_ = fixture::augmentation_fixture(3);
    std::vector<std::string> corpus;
    for (std::size_t i = 0; i < fx_.catalog.size(); ++i) {
      corpus.push_back(fx_.positives[i].title.serialize());
      corpus.push_back(product_text(fx_.catalog[i]));
      corpus.push_back(fx_.catalog[i].ocr_text);
    }
    encoder_ = std::make_shared<TextEncoder>(fit_vocabulary(corpus));
    sets_ = build_augmentation_sets(fx_.catalog, fx_.positives);
    TrainConfig cfg;
    cfg.seed = 3;
    model_ = std::make_unique<PairModel>(
        train_augment_classifier(sets_.positives, sets_.candidates, encoder_, cfg));
  }
  fixture::CorrelationFixture fx_;
  std::shared_ptr<const TextEncoder> encoder_;
  AugmentationSets sets_;
  std::unique_ptr<PairModel> model_;
};

TEST_F(AugmentationTest, FixtureShape) {
  ASSERT_EQ(sets_.positives.size(), fx_.positives.size());
  ASSERT_EQ(sets_.candidates.size(), fx_.catalog.size());
  for (std::size_t i = 0; i < fx_.catalog.size(); ++i) {
    EXPECT_LE(tokenize(sets_.positives[i].text).size(), 6u);
    EXPECT_GE(tokenize(sets_.candidates[i].text).size(), 30u);
  }
}

TEST_F(AugmentationTest, TrainingContract) {
  const auto& m = model_->classifier().metadata;
  EXPECT_LE(m.final_loss, m.initial_loss);
  for (double l : m.loss_curve) EXPECT_GE(l, m.final_loss);
  EXPECT_EQ(m.positives, m.negatives);
}

TEST(Augmentation, HeldOutSeparation) {
  auto r = fixture::augmentation_holdout(5);
  EXPECT_GE(r.accuracy, 0.90);
  EXPECT_LE(r.final_loss, r.initial_loss);
}

TEST_F(AugmentationTest, ThresholdExtremesAndMonotonicity) {
  auto none = mine_candidates(*model_, sets_.candidates, 1.0);
  EXPECT_EQ(none.promoted, 0u);
  EXPECT_EQ(none.candidates_scored, sets_.candidates.size());
  auto all = mine_candidates(*model_, sets_.candidates, 0.0);
  EXPECT_EQ(all.promoted, sets_.candidates.size());

  std::size_t previous = all.promoted;
  for (int k = 1; k <= 9; ++k) {
    auto r = mine_candidates(*model_, sets_.candidates, k / 10.0);
    EXPECT_LE(r.promoted, previous);
    previous = r.promoted;
    for (const auto& p : r.promoted_pairs) EXPECT_EQ(p.origin, PairOrigin::kAugmented);
  }
  EXPECT_THROW(mine_candidates(*model_, sets_.candidates, 1.5), ValidationError);
}

TEST_F(AugmentationTest, PromotesExactlyTheTitleLikeCandidates) {
  // Seven ordinary OCR texts and three that read like scene titles.
  std::vector<TextPair> candidates;
  for (std::size_t i = 0; i < 7; ++i) candidates.push_back(sets_.candidates[i * 11]);
  const std::vector<std::size_t> mimic{5, 40, 90};
  for (auto i : mimic) {
    candidates.push_back({&fx_.catalog[i], fx_.positives[i].title.serialize()});
  }
  auto r = mine_candidates(*model_, candidates, 0.5);
  ASSERT_EQ(r.scores.size(), 10u);
  ASSERT_EQ(r.promoted, 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(r.promoted_pairs[k].product_id, fx_.catalog[mimic[k]].id);
    EXPECT_EQ(r.promoted_pairs[k].title.phrase_a, fx_.positives[mimic[k]].title.phrase_a);
    EXPECT_EQ(r.promoted_pairs[k].title.source, TitleSource::kMined);
    EXPECT_EQ(r.promoted_pairs[k].label, 1);
  }
  const double lowest_mimic = *std::min_element(r.scores.begin() + 7, r.scores.end());
  const double highest_other = *std::max_element(r.scores.begin(), r.scores.begin() + 7);
  EXPECT_GT(lowest_mimic, highest_other);
  EXPECT_EQ(mine_candidates(*model_, candidates, 0.5).scores, r.scores);
}

TEST_F(AugmentationTest, ParsesOcrWithoutAtSignAsPhraseA) {
  std::vector<TextPair> c{{&fx_.catalog[0], "冰丝遮阳帽"}, {&fx_.catalog[1], " @ 空"}};
  auto r = mine_candidates(*model_, c, 0.0);
  ASSERT_EQ(r.promoted, 1u);
  EXPECT_EQ(r.promoted_pairs[0].title.phrase_a, "冰丝遮阳帽");
  EXPECT_EQ(r.promoted_pairs[0].title.phrase_b, "");
  EXPECT_EQ(r.candidates_scored, 2u);
}

TEST_F(AugmentationTest, EmptySidesRejected) {
  EXPECT_THROW(train_augment_classifier({}, sets_.candidates, encoder_, {}), ValidationError);
  EXPECT_THROW(train_augment_classifier(sets_.positives, {}, encoder_, {}), ValidationError);
}

TEST(MergePromoted, SkipsExistingPairsAndKeepsOnlineOrigin) {
  LabeledPair online{"p1", TopicTitle::parse("a @ b", TitleSource::kHuman), 1,
                     PairOrigin::kOnlinePositive};
  LabeledPair dup{"p1", TopicTitle::parse("a @ b", TitleSource::kMined), 1,
                  PairOrigin::kAugmented};
  LabeledPair fresh{"p2", TopicTitle::parse("c @ d", TitleSource::kMined), 1,
                    PairOrigin::kAugmented};
  auto merged = merge_promoted({online}, {dup, fresh, fresh});
  ASSERT_EQ(merged.size(), 2u);
  EXPECT_EQ(merged[0].origin, PairOrigin::kOnlinePositive);
  EXPECT_EQ(merged[1].product_id, "p2");
  EXPECT_THROW(merge_promoted({}, {online}), ValidationError);
}

TEST(AugmentationSets, OnlyProductsWithOcr) {
  std::vector<Product> catalog{testing::make_product("a", "t", {}, "ocr text"),
                               testing::make_product("b", "t", {}, "  ")};
  std::vector<LabeledPair> topics{{"a", TopicTitle::parse("x @ y", TitleSource::kHuman)},
                                  {"b", TopicTitle::parse("z @ w", TitleSource::kHuman), 0}};
  auto sets = build_augmentation_sets(catalog, topics);
  ASSERT_EQ(sets.candidates.size(), 1u);
  EXPECT_EQ(sets.candidates[0].product->id, "a");
  ASSERT_EQ(sets.positives.size(), 1u);
  EXPECT_EQ(sets.positives[0].text, "x @ y");
}

}  // namespace
}  // namespace estc
