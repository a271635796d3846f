#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "estc/catalog.h"
#include "estc/quality_control.h"
#include "json.hpp"

namespace estc {

inline constexpr double kDefaultPromotionThreshold = 0.9;

struct AugmentationReport {
  std::size_t candidates_scored = 0;
  std::size_t promoted = 0;
  double threshold = kDefaultPromotionThreshold;
  std::vector<LabeledPair> promoted_pairs;  // origin == kAugmented
  std::vector<double> scores;               // aligned with the candidates

  nlohmann::json to_json() const;
};

// Positives: (product, serialized title) of every label-1 pair.
// Candidates: (product, OCR text) for every product with nonempty OCR text.
struct AugmentationSets {
  std::vector<TextPair> positives;
  std::vector<TextPair> candidates;
};

AugmentationSets build_augmentation_sets(const std::vector<Product>& catalog,
                                         const std::vector<LabeledPair>& topics);

// Same feature scheme as the correlation model; OCR text sits in the title
// slot of the negatives. Throws ValidationError if either side is empty.
PairModel train_augment_classifier(const std::vector<TextPair>& positives,
                                   const std::vector<TextPair>& negatives,
                                   std::shared_ptr<const TextEncoder> encoder,
                                   const TrainConfig& config,
                                   const ProfileVocabulary& profile_vocab = {});

// Scores every candidate and promotes those with score >= threshold. The OCR
// text is parsed into a title (split at the first '@'). Candidates whose text
// parses to an empty phrase_a are scored but never promoted.
AugmentationReport mine_candidates(const PairModel& model,
                                   const std::vector<TextPair>& candidates,
                                   double threshold = kDefaultPromotionThreshold);

// Appends promoted pairs whose (product, title text) is not already present.
std::vector<LabeledPair> merge_promoted(const std::vector<LabeledPair>& existing,
                                        const std::vector<LabeledPair>& promoted);

}  // namespace estc
