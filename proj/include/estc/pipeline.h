#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "estc/augmentation.h"
#include "estc/catalog.h"
#include "estc/clustering.h"
#include "estc/embedding.h"
#include "estc/quality_control.h"
#include "estc/store.h"
#include "estc/topicgen.h"
#include "json.hpp"

namespace estc {

struct PipelineConfig {
  std::optional<std::uint64_t> seed;

  std::filesystem::path catalog;
  std::filesystem::path topics;
  std::filesystem::path store;
  std::filesystem::path models;     // optional output directory
  std::filesystem::path templates;  // template generator only

  std::string generator = "retrieval";  // retrieval | template | remote
  RemoteOptions remote;

  std::size_t vocab_max_dim = 4096;
  bool char_bigrams = true;
  bool refine = true;
  RefinementConfig refinement;

  double agnes_threshold = 0.35;
  Linkage linkage = Linkage::kAverage;

  QcConfig qc;
  int qc_epochs = 30;
  double qc_learning_rate = 0.5;

  bool augment = true;
  double augmentation_threshold = kDefaultPromotionThreshold;

  ProfileVocabulary profile_vocab;

  // Flat keys, e.g. {"seed": 7, "catalog": "catalog.jsonl",
  // "agnes_threshold": 0.35}. Unknown keys are rejected. Relative paths are
  // resolved against base_dir.
  static PipelineConfig from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;

  std::uint64_t require_seed() const;
  TrainConfig train_config(std::string_view stage) const;
};

// Parses "key = value" lines ('#' starts a comment, strings may be quoted)
// into a flat JSON object. Values that parse as JSON numbers or booleans keep
// that type.
nlohmann::json parse_key_value(std::string_view text);

// JSON if the first non-blank character is '{', key = value otherwise.
PipelineConfig load_config(const std::filesystem::path& path);

// Text the base vocabulary is fitted on: topic titles, product text and OCR.
std::vector<std::string> vocabulary_corpus(const std::vector<Product>& catalog,
                                           const std::vector<LabeledPair>& topics);

std::shared_ptr<const TextEncoder> fit_base_encoder(
    const PipelineConfig& config, const std::vector<std::string>& corpus);

// Base vocabulary plus, when enabled, a projection refined on the titles.
std::shared_ptr<const TextEncoder> fit_cluster_encoder(
    const PipelineConfig& config, const std::vector<std::string>& corpus,
    const std::vector<std::string>& titles);

struct AugmentationOutcome {
  AugmentationReport report;
  std::vector<LabeledPair> topics;  // input topics plus promoted pairs
  std::optional<PairModel> model;
};

// Skipped (topics returned unchanged) when disabled or no OCR text exists.
AugmentationOutcome run_augmentation(const PipelineConfig& config,
                                     const std::vector<Product>& catalog,
                                     const std::vector<LabeledPair>& topics,
                                     std::shared_ptr<const TextEncoder> encoder);

std::unique_ptr<TopicGenerator> make_generator(
    const PipelineConfig& config, const std::vector<Product>& catalog,
    const std::vector<LabeledPair>& topics,
    std::shared_ptr<const TextEncoder> encoder);

std::vector<TopicTitle> positive_titles(const std::vector<LabeledPair>& topics);

struct QcModels {
  CoherenceModel coherence;
  PairModel correlation;
};

QcModels train_qc_models(const PipelineConfig& config,
                         const std::vector<Product>& catalog,
                         const std::vector<LabeledPair>& topics,
                         std::shared_ptr<const TextEncoder> encoder);

struct RunSummary {
  std::size_t products = 0;
  std::size_t training_pairs = 0;
  std::size_t augmented_pairs = 0;
  std::size_t clusters = 0;
  std::size_t channels_created = 0;
  std::size_t duplicate_channels = 0;
  std::size_t clusters_rejected = 0;
  double dr = 0.0;
  std::vector<std::string> channel_ids;
  std::map<std::string, double> timings_ms;

  nlohmann::json to_json() const;
};

// augment -> fit encoders and QC models -> generate -> cluster -> QC ->
// commit new pending channels. Any failure leaves the store untouched.
RunSummary run_pipeline(const PipelineConfig& config, const Clock& clock);

}  // namespace estc
