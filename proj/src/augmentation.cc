#include "estc/augmentation.h"

#include <algorithm>
#include <exception>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <utility>

#include "estc/errors.h"

namespace estc {

using nlohmann::json;

json AugmentationReport::to_json() const {
  json pairs = json::array();
  for (const auto& p : promoted_pairs) pairs.push_back(topic_record_to_json(p));
  return {{"candidates_scored", candidates_scored},
          {"promoted", promoted},
          {"threshold", threshold},
          {"promoted_pairs", pairs}};
}

AugmentationSets build_augmentation_sets(const std::vector<Product>& catalog,
                                         const std::vector<LabeledPair>& topics) {
  std::map<std::string, const Product*> by_id;
  for (const auto& p : catalog) by_id[p.id] = &p;
  AugmentationSets sets;
  for (const auto& pair : topics) {
    if (pair.label != 1) continue;
    auto it = by_id.find(pair.product_id);
    if (it == by_id.end()) {
      throw ValidationError("topic references unknown product '" +
                            pair.product_id + "'");
    }
    sets.positives.push_back({it->second, pair.title.serialize()});
  }
  for (const auto& p : catalog) {
    auto text = trim(p.ocr_text);
    if (!text.empty()) sets.candidates.push_back({&p, std::move(text)});
  }
  return sets;
}

PairModel train_augment_classifier(const std::vector<TextPair>& positives,
                                   const std::vector<TextPair>& negatives,
                                   std::shared_ptr<const TextEncoder> encoder,
                                   const TrainConfig& config,
                                   const ProfileVocabulary& profile_vocab) {
  if (positives.empty()) throw ValidationError("augmentation needs positive pairs");
  if (negatives.empty()) throw ValidationError("augmentation needs OCR negatives");
  return train_pair_model(positives, negatives, std::move(encoder), config,
                          profile_vocab);
}

AugmentationReport mine_candidates(const PairModel& model,
                                   const std::vector<TextPair>& candidates,
                                   double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ValidationError("promotion threshold must lie in [0, 1]");
  }
  AugmentationReport report;
  report.threshold = threshold;
  report.candidates_scored = candidates.size();
  report.scores.resize(candidates.size());

  const std::size_t workers = std::clamp<std::size_t>(
      std::thread::hardware_concurrency(), 1,
      std::max<std::size_t>(candidates.size(), 1));
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < candidates.size(); i += workers) {
            report.scores[i] =
                model.score_text(*candidates[i].product, candidates[i].text);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (report.scores[i] < threshold) continue;
    auto title = TopicTitle::parse(candidates[i].text, TitleSource::kMined);
    if (title.phrase_a.empty()) continue;
    report.promoted_pairs.push_back({candidates[i].product->id, std::move(title), 1,
                                     PairOrigin::kAugmented});
  }
  report.promoted = report.promoted_pairs.size();
  return report;
}

std::vector<LabeledPair> merge_promoted(const std::vector<LabeledPair>& existing,
                                        const std::vector<LabeledPair>& promoted) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : existing) seen.emplace(p.product_id, p.title.serialize());
  std::vector<LabeledPair> out = existing;
  for (const auto& p : promoted) {
    if (p.origin != PairOrigin::kAugmented) {
      throw ValidationError("only augmented pairs can be merged");
    }
    if (seen.emplace(p.product_id, p.title.serialize()).second) out.push_back(p);
  }
  return out;
}

}  // namespace estc
