#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "estc/random.h"
#include "json.hpp"

namespace estc {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const;
};

// Index-sorted sparse vector.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  bool empty() const { return index.empty(); }
  double norm() const;
  EmbeddingVector to_dense(std::size_t dim) const;
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
double dot(const EmbeddingVector& a, const EmbeddingVector& b);
// Zero vectors are returned unchanged.
void normalize(EmbeddingVector& v);

// Tokens of the text plus "#xy" character bigrams (within a token, and
// across neighbouring single-ideograph tokens).
std::vector<std::string> extract_features(std::string_view text,
                                          bool char_bigrams = true);

class FeatureVocabulary {
 public:
  std::size_t dim() const { return features_.size(); }
  std::size_t total_docs() const { return total_docs_; }
  bool char_bigrams() const { return char_bigrams_; }

  const std::vector<std::string>& features() const { return features_; }
  std::optional<std::uint32_t> find(const std::string& feature) const;
  std::uint32_t df(std::uint32_t index) const { return df_[index]; }
  // ln((1 + N) / (1 + df)) + 1
  double idf(std::uint32_t index) const;

  nlohmann::json to_json() const;
  static FeatureVocabulary from_json(const nlohmann::json& j);

  friend FeatureVocabulary fit_vocabulary(const std::vector<std::string>&,
                                          std::size_t, bool);

 private:
  std::vector<std::string> features_;
  std::vector<std::uint32_t> df_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::size_t total_docs_ = 0;
  bool char_bigrams_ = true;
};

// Features ranked by document frequency, ties lexicographic, truncated to
// max_dim. Throws ValidationError on an empty corpus or empty vocabulary.
FeatureVocabulary fit_vocabulary(const std::vector<std::string>& corpus,
                                 std::size_t max_dim = 4096,
                                 bool char_bigrams = true);

// L2-normalized tf-idf; out-of-vocabulary features are ignored.
SparseVector bow_sparse(std::string_view text, const FeatureVocabulary& vocab);
EmbeddingVector embed_bow(std::string_view text,
                          const FeatureVocabulary& vocab);

struct RefinementConfig {
  std::size_t dim_out = 128;
  double temperature = 0.05;
  double dropout_rate = 0.1;
  int epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;

  static RefinementConfig from_json(const nlohmann::json& j);
};

// Linear map applied to sparse base vectors: z = W^T x, W is dim_in x dim_out
// stored row-major.
struct RefinementProjection {
  std::size_t dim_in = 0;
  std::size_t dim_out = 0;
  std::vector<double> matrix;
  double temperature = 0.05;
  std::uint64_t seed = 0;
  int epochs = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_curve;

  static RefinementProjection identity(std::size_t dim,
                                       double temperature = 0.05);
  EmbeddingVector apply(const SparseVector& x) const;

  nlohmann::json to_json() const;
  static RefinementProjection from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static RefinementProjection load(const std::filesystem::path& path);
};

// In-batch InfoNCE: row i of the similarity matrix compares view_a[i] with
// every view_b[j] by cosine / temperature; the positive is j == i. Returns
// the mean cross-entropy. When grad is non-null it receives dLoss/dW with
// the layout of projection.matrix.
double infonce_loss(const std::vector<SparseVector>& view_a,
                    const std::vector<SparseVector>& view_b,
                    const RefinementProjection& projection,
                    std::vector<double>* grad = nullptr);

// Each stored entry is zeroed with probability rate, survivors scaled by
// 1 / (1 - rate).
SparseVector feature_dropout(const SparseVector& x, double rate, Rng& rng);

// Unsupervised contrastive refinement with dropout views. Returns the
// projection with the lowest evaluation loss seen (initial included), so
// final_loss <= initial_loss always holds.
RefinementProjection train_refinement(const std::vector<std::string>& titles,
                                      const FeatureVocabulary& vocab,
                                      const RefinementConfig& config);

// bow vector, optionally projected, then L2-normalized.
EmbeddingVector embed_title(std::string_view text,
                            const FeatureVocabulary& vocab,
                            const RefinementProjection* projection = nullptr);

// Vocabulary plus optional projection, shared by clustering and the QC
// models.
class TextEncoder {
 public:
  TextEncoder() = default;
  explicit TextEncoder(FeatureVocabulary vocab,
                       std::optional<RefinementProjection> projection = {});

  EmbeddingVector encode(std::string_view text) const;
  std::size_t dim() const;
  const FeatureVocabulary& vocab() const { return vocab_; }
  const std::optional<RefinementProjection>& projection() const {
    return projection_;
  }

 private:
  FeatureVocabulary vocab_;
  std::optional<RefinementProjection> projection_;
};

// Pretrained word vectors, one "token v1 ... vd" line per token.
class WordVectors {
 public:
  static WordVectors load(const std::filesystem::path& path);
  static WordVectors parse(std::string_view text);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  // Average of known token vectors, L2-normalized; zero if none is known.
  EmbeddingVector embed(std::string_view text) const;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

}  // namespace estc
