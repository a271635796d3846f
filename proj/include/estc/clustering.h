#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "estc/catalog.h"
#include "estc/embedding.h"
#include "json.hpp"

namespace estc {

enum class Linkage { kAverage, kComplete, kSingle };

Linkage linkage_from_string(const std::string& s);
std::string_view to_string(Linkage l);

// One merge step. Clusters are named by their lowest original member index.
struct Merge {
  std::size_t left = 0;   // smaller representative
  std::size_t right = 0;  // larger representative, absorbed into left
  double distance = 0.0;

  bool operator==(const Merge&) const = default;
};

struct AgnesResult {
  std::vector<Merge> merges;
  // Members sorted ascending; clusters ordered by their first member.
  std::vector<std::vector<std::size_t>> clusters;
  // assignment[i] = index into clusters.
  std::vector<std::size_t> assignment;
};

// 1 - cosine similarity, clamped to [0, 2]. Zero vectors sit at distance 1.
double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b);

// Agglomerative nesting over cosine distance. Repeatedly merges the pair of
// clusters with minimal linkage distance while that distance is <= threshold.
// Ties go to the lexicographically smallest (left, right) representative
// pair.
AgnesResult agnes(std::span<const EmbeddingVector> vectors, double threshold,
                  Linkage linkage = Linkage::kAverage);

struct KMeansResult {
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::size_t> assignment;
  std::vector<EmbeddingVector> centroids;
  // Within-cluster sum of squares after initialization and after each
  // iteration.
  std::vector<double> objective;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding on Euclidean distance.
KMeansResult kmeans(std::span<const EmbeddingVector> vectors, std::size_t k,
                    std::uint64_t seed, int max_iter = 100);

double euclidean(const EmbeddingVector& a, const EmbeddingVector& b);

// Mean silhouette over items with Euclidean distance; singletons score 0.
// Throws ValidationError when fewer than two clusters are present.
double silhouette(std::span<const EmbeddingVector> vectors,
                  const std::vector<std::size_t>& assignment);

struct GroupScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::string best_cluster;
};

struct ClusterEval {
  std::optional<double> silhouette;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::string, GroupScore> per_group;

  nlohmann::json to_json() const;
};

// For each reference group the (P, R, F) of the cluster maximizing F (ties:
// larger overlap, then smaller cluster label), aggregated with weights
// |group| / N.
ClusterEval cluster_prf(const std::map<std::string, std::string>& assignment,
                        const std::map<std::string, std::string>& reference);

// Products grouped by the similarity of their generated titles.
struct Cluster {
  std::vector<std::string> member_ids;
  // One candidate per member, aligned with member_ids.
  std::vector<TopicTitle> title_candidates;

  nlohmann::json to_json() const;
  static Cluster from_json(const nlohmann::json& j);
};

struct TitledItem {
  std::string product_id;
  TopicTitle title;
};

std::vector<Cluster> cluster_titles(const std::vector<TitledItem>& items,
                                    const TextEncoder& encoder,
                                    double threshold,
                                    Linkage linkage = Linkage::kAverage);

}  // namespace estc
