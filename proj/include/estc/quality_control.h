#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "estc/catalog.h"
#include "estc/clustering.h"
#include "estc/embedding.h"
#include "estc/text_metrics.h"
#include "json.hpp"

namespace estc {

struct FeatureSegment {
  std::string name;
  std::size_t size = 0;

  bool operator==(const FeatureSegment&) const = default;
};

// Input to a LinearClassifier: sparse entries over the dense layout plus the
// active one-hot slots of the profile segment (if the layout has one).
struct FeatureVector {
  SparseVector dense;
  std::vector<std::size_t> profile_slots;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  int epochs = 0;
  double learning_rate = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_curve;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Logistic model. When the layout contains a segment named "profile", the
// one-hot profile slots are first mapped through a learned linear encoder
// (profile_vocab x segment size) and the result occupies that segment.
class LinearClassifier {
 public:
  LinearClassifier() = default;
  LinearClassifier(std::vector<FeatureSegment> layout,
                   std::size_t profile_vocab = 0);

  std::size_t dim() const { return weights.size(); }
  // Offset of the profile segment, or dim() if there is none.
  std::size_t profile_offset() const;
  std::size_t profile_width() const;

  double logit(const FeatureVector& x) const;
  // Logistic of the logit clamped to [-30, 30]: always inside (0, 1).
  double score(const FeatureVector& x) const;

  nlohmann::json to_json() const;
  static LinearClassifier from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static LinearClassifier load(const std::filesystem::path& path);

  std::vector<FeatureSegment> feature_layout;
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t profile_vocab = 0;
  // profile_vocab x profile_width, row-major.
  std::vector<double> profile_encoder;
  TrainingMetadata metadata;
};

struct LabeledFeatures {
  FeatureVector x;
  int label = 0;
  // Stable identity; epoch order is derived from (seed, epoch, key), so the
  // input order of examples does not affect training.
  std::string key;
};

struct ClassifierGradient {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> profile_encoder;
};

// Mean logistic loss over the data and, optionally, its gradient.
double logistic_loss(const LinearClassifier& model,
                     const std::vector<LabeledFeatures>& data,
                     ClassifierGradient* grad = nullptr);

struct TrainConfig {
  std::uint64_t seed = 0;
  int epochs = 30;
  double learning_rate = 0.5;

  static TrainConfig from_json(const nlohmann::json& j);
};

// Per-example SGD starting from the given model. Keeps the parameters with
// the lowest full-data loss seen, so final_loss <= initial_loss.
void train_logistic(LinearClassifier& model,
                    const std::vector<LabeledFeatures>& data,
                    const TrainConfig& config);

// Token view of a title with the phrase boundary: tokens [0, boundary) come
// from phrase_a. Tokens are case-folded and punctuation-free, so titles
// rebuilt by to_title are too.
struct TitleTokens {
  TokenSequence tokens;
  std::size_t boundary = 0;

  static TitleTokens from_title(const TopicTitle& title);
  TopicTitle to_title(TitleSource source) const;
};

// Inserts `repeats` copies of tokens[start, start + n) right after the span.
TitleTokens apply_repetition(const TitleTokens& t, std::size_t n,
                             std::size_t start, std::size_t repeats);
// Drops the last `count` tokens.
TitleTokens apply_truncation(const TitleTokens& t, std::size_t count);

// Unigram or bigram (p = 1/2), uniform start, 1 or 2 repeats (p = 1/2).
// Requires at least 2 tokens.
TopicTitle synth_repetition_negative(const TopicTitle& title,
                                     std::uint64_t rng_seed);
// Removes the last two unigrams (2 tokens) or the last two bigrams
// (4 tokens), p = 1/2 each. Requires at least 5 tokens.
TopicTitle synth_incomplete_negative(const TopicTitle& title,
                                     std::uint64_t rng_seed);

// Longest run of an n-gram repeated back to back, counted as extra copies.
std::size_t max_adjacent_repetition(const TokenSequence& tokens, std::size_t n);

class CoherenceScorer {
 public:
  virtual ~CoherenceScorer() = default;
  virtual double score(const TopicTitle& title) const = 0;
};

class CorrelationScorer {
 public:
  virtual ~CorrelationScorer() = default;
  virtual double score(const Product& product, const TopicTitle& title) const = 0;
};

class CoherenceModel : public CoherenceScorer {
 public:
  static constexpr std::size_t kScalarFeatures = 4;

  CoherenceModel(LinearClassifier classifier,
                 std::shared_ptr<const TextEncoder> encoder);
  // Untrained (all-zero) model over the encoder's feature layout.
  static CoherenceModel untrained(std::shared_ptr<const TextEncoder> encoder);

  // Title embedding followed by {unigram repetition, bigram repetition,
  // token length / 10, type-token ratio}.
  FeatureVector features(const TopicTitle& title) const;
  double score(const TopicTitle& title) const override;

  const LinearClassifier& classifier() const { return classifier_; }
  LinearClassifier& classifier() { return classifier_; }

 private:
  LinearClassifier classifier_;
  std::shared_ptr<const TextEncoder> encoder_;
};

struct CoherenceTraining {
  CoherenceModel model;
  std::vector<TopicTitle> negatives;
};

// Positives are deduplicated by text. Negatives are synthesized by both
// procedures and downsampled to exactly the number of positives.
CoherenceTraining train_coherence(const std::vector<TopicTitle>& positives,
                                  std::shared_ptr<const TextEncoder> encoder,
                                  const TrainConfig& config);

// Product text embedding, candidate text embedding, their elementwise
// product, the sum of that product (cosine similarity), and the encoded
// profile.
class PairModel : public CorrelationScorer {
 public:
  static constexpr std::size_t kProfileWidth = 4;

  PairModel(LinearClassifier classifier,
            std::shared_ptr<const TextEncoder> encoder,
            ProfileVocabulary profile_vocab = {});
  static PairModel untrained(std::shared_ptr<const TextEncoder> encoder,
                             ProfileVocabulary profile_vocab = {},
                             std::uint64_t seed = 0);

  FeatureVector features(const Product& product, std::string_view text) const;
  double score_text(const Product& product, std::string_view text) const;
  double score(const Product& product, const TopicTitle& title) const override;

  const LinearClassifier& classifier() const { return classifier_; }
  LinearClassifier& classifier() { return classifier_; }

 private:
  LinearClassifier classifier_;
  std::shared_ptr<const TextEncoder> encoder_;
  ProfileVocabulary profile_vocab_;
};

struct ProductTitlePair {
  const Product* product = nullptr;
  TopicTitle title;
};

struct TextPair {
  const Product* product = nullptr;
  std::string text;
};

// Shared trainer for the correlation and augmentation classifiers.
PairModel train_pair_model(const std::vector<TextPair>& positives,
                           const std::vector<TextPair>& negatives,
                           std::shared_ptr<const TextEncoder> encoder,
                           const TrainConfig& config,
                           const ProfileVocabulary& profile_vocab = {});

struct CorrelationTraining {
  PairModel model;
  std::vector<ProductTitlePair> negatives;
};

// Negatives pair each positive's product with the title of another positive
// pair, drawn with a seed keyed to the pair and never reproducing a known
// positive. Titles thus keep their positive frequency among negatives.
CorrelationTraining train_correlation(
    const std::vector<LabeledPair>& positives,
    const std::vector<Product>& catalog,
    std::shared_ptr<const TextEncoder> encoder, const TrainConfig& config,
    const ProfileVocabulary& profile_vocab = {});

enum class ChannelStatus { kPending, kPublished, kRejected };

std::string_view to_string(ChannelStatus s);
ChannelStatus channel_status_from_string(std::string_view s);

struct ScoredTitle {
  TopicTitle title;
  double score = 0.0;
};

struct ScoredProduct {
  std::string product_id;
  double score = 0.0;
};

struct Channel {
  std::string channel_id;
  TopicTitle title;
  std::vector<ScoredTitle> title_candidates;
  std::vector<ScoredProduct> products;
  ChannelStatus status = ChannelStatus::kPending;
  std::int64_t created_at = 0;  // ms since epoch

  nlohmann::json to_json() const;
  static Channel from_json(const nlohmann::json& j);
};

// "ch-" + 16 hex digits of a hash over the title and sorted product ids.
std::string channel_content_id(const TopicTitle& title,
                               std::vector<std::string> product_ids);

struct QcConfig {
  double coherence_threshold = 0.5;
  double correlation_threshold = 0.5;
  std::size_t min_products = 3;
};

struct RejectedCluster {
  Cluster cluster;
  std::string reason;  // "incoherent" or "too_few_products"
  double best_coherence = 0.0;
  std::size_t surviving_products = 0;

  nlohmann::json to_json() const;
};

struct AssemblyResult {
  std::vector<Channel> channels;
  std::vector<RejectedCluster> rejected;
};

AssemblyResult assemble_channels(const std::vector<Cluster>& clusters,
                                 const CoherenceScorer& coherence,
                                 const CorrelationScorer& correlation,
                                 const std::vector<Product>& catalog,
                                 const QcConfig& config,
                                 std::int64_t created_at = 0);

}  // namespace estc
