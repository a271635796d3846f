#include "estc/clustering.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "estc/errors.h"
#include "estc/random.h"

namespace estc {

using nlohmann::json;

Linkage linkage_from_string(const std::string& s) {
  if (s == "average") return Linkage::kAverage;
  if (s == "complete") return Linkage::kComplete;
  if (s == "single") return Linkage::kSingle;
  throw ValidationError("unknown linkage '" + s + "'");
}

std::string_view to_string(Linkage l) {
  switch (l) {
    case Linkage::kAverage:
      return "average";
    case Linkage::kComplete:
      return "complete";
    case Linkage::kSingle:
      return "single";
  }
  return "?";
}

double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  return std::clamp(1.0 - cosine(a, b), 0.0, 2.0);
}

double euclidean(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw ValidationError("dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

void check_dims(std::span<const EmbeddingVector> vectors) {
  for (const auto& v : vectors) {
    if (v.dim() != vectors.front().dim()) {
      throw ValidationError("vectors have mixed dimensions: " +
                            std::to_string(vectors.front().dim()) + " vs " +
                            std::to_string(v.dim()));
    }
  }
}

std::vector<std::vector<std::size_t>> group(
    const std::vector<std::size_t>& assignment, std::size_t k) {
  std::vector<std::vector<std::size_t>> clusters(k);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    clusters[assignment[i]].push_back(i);
  }
  return clusters;
}

}  // namespace

AgnesResult agnes(std::span<const EmbeddingVector> vectors, double threshold,
                  Linkage linkage) {
  const std::size_t n = vectors.size();
  if (n == 0) throw ValidationError("agnes: no vectors");
  check_dims(vectors);

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = cosine_distance(vectors[i], vectors[j]);
    }
  }
  auto d = [&](std::size_t i, std::size_t j) -> double& { return dist[i * n + j]; };

  std::vector<bool> active(n, true);
  std::vector<std::size_t> size(n, 1);
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};

  // Row cache over the upper triangle: nearest active j > i, smallest j on
  // ties.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> nn_dist(n, kInf);
  std::vector<std::size_t> nn_idx(n, n);
  auto refresh = [&](std::size_t i) {
    nn_dist[i] = kInf;
    nn_idx[i] = n;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (active[j] && d(i, j) < nn_dist[i]) {
        nn_dist[i] = d(i, j);
        nn_idx[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i < n; ++i) refresh(i);

  AgnesResult result;
  for (std::size_t remaining = n; remaining > 1; --remaining) {
    std::size_t a = n;
    double best = kInf;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && nn_idx[i] < n && nn_dist[i] < best) {
        best = nn_dist[i];
        a = i;
      }
    }
    if (a == n || best > threshold) break;
    const std::size_t b = nn_idx[a];
    result.merges.push_back({a, b, best});

    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a || k == b) continue;
      double merged = 0.0;
      switch (linkage) {
        case Linkage::kAverage:
          merged = (static_cast<double>(size[a]) * d(a, k) +
                    static_cast<double>(size[b]) * d(b, k)) /
                   static_cast<double>(size[a] + size[b]);
          break;
        case Linkage::kComplete:
          merged = std::max(d(a, k), d(b, k));
          break;
        case Linkage::kSingle:
          merged = std::min(d(a, k), d(b, k));
          break;
      }
      d(a, k) = d(k, a) = merged;
    }
    active[b] = false;
    size[a] += size[b];
    members[a].insert(members[a].end(), members[b].begin(), members[b].end());
    members[b].clear();

    refresh(a);
    for (std::size_t i = 0; i < b; ++i) {
      if (!active[i] || i == a) continue;
      if (nn_idx[i] == b || nn_idx[i] == a) {
        refresh(i);
      } else if (i < a && (d(i, a) < nn_dist[i] ||
                           (d(i, a) == nn_dist[i] && a < nn_idx[i]))) {
        nn_dist[i] = d(i, a);
        nn_idx[i] = a;
      }
    }
  }

  result.assignment.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    auto m = members[i];
    std::sort(m.begin(), m.end());
    for (auto idx : m) result.assignment[idx] = result.clusters.size();
    result.clusters.push_back(std::move(m));
  }
  return result;
}

KMeansResult kmeans(std::span<const EmbeddingVector> vectors, std::size_t k,
                    std::uint64_t seed, int max_iter) {
  const std::size_t n = vectors.size();
  if (k < 1 || k > n) {
    throw ValidationError("kmeans: k=" + std::to_string(k) +
                          " outside [1, " + std::to_string(n) + "]");
  }
  check_dims(vectors);
  const std::size_t dim = vectors.front().dim();
  auto sq = [](const EmbeddingVector& a, const EmbeddingVector& b) {
    const double e = euclidean(a, b);
    return e * e;
  };

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<std::size_t> seeds{static_cast<std::size_t>(rng.uniform_index(n))};
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq(vectors[i], vectors[seeds[0]]);
  while (seeds.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > r && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        for (std::size_t i = n; i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // All points coincide with a seed: choose among unused indices.
      std::vector<std::size_t> unused;
      for (std::size_t i = 0; i < n; ++i) {
        if (std::find(seeds.begin(), seeds.end(), i) == seeds.end()) {
          unused.push_back(i);
        }
      }
      pick = unused[rng.uniform_index(unused.size())];
    }
    seeds.push_back(pick);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq(vectors[i], vectors[pick]));
    }
  }

  KMeansResult res;
  for (auto s : seeds) res.centroids.push_back(vectors[s]);
  res.assignment.assign(n, 0);

  auto assign = [&] {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq(vectors[i], res.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = sq(vectors[i], res.centroids[c]);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      if (res.assignment[i] != best) changed = true;
      res.assignment[i] = best;
    }
    return changed;
  };
  auto repair = [&] {
    for (;;) {
      std::vector<std::size_t> counts(k, 0);
      for (auto a : res.assignment) ++counts[a];
      auto empty = std::find(counts.begin(), counts.end(), 0u);
      if (empty == counts.end()) return;
      const std::size_t e = static_cast<std::size_t>(empty - counts.begin());
      const std::size_t largest = static_cast<std::size_t>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (res.assignment[i] != largest) continue;
        const double di = sq(vectors[i], res.centroids[largest]);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      res.assignment[far] = e;
      res.centroids[e] = vectors[far];
    }
  };
  auto objective = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += sq(vectors[i], res.centroids[res.assignment[i]]);
    }
    return s;
  };

  assign();
  repair();
  res.objective.push_back(objective());
  for (int it = 0; it < max_iter; ++it) {
    std::vector<EmbeddingVector> sums(k, EmbeddingVector{std::vector<double>(dim, 0.0)});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[res.assignment[i]].values;
      for (std::size_t c = 0; c < dim; ++c) s[c] += vectors[i].values[c];
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      for (double& v : sums[c].values) v /= static_cast<double>(counts[c]);
      res.centroids[c] = std::move(sums[c]);
    }
    const bool changed = assign();
    repair();
    res.objective.push_back(objective());
    res.iterations = it + 1;
    if (!changed) break;
  }
  res.clusters = group(res.assignment, k);
  return res;
}

double silhouette(std::span<const EmbeddingVector> vectors,
                  const std::vector<std::size_t>& assignment) {
  const std::size_t n = vectors.size();
  if (assignment.size() != n) {
    throw ValidationError("silhouette: assignment size mismatch");
  }
  check_dims(vectors);
  std::set<std::size_t> labels(assignment.begin(), assignment.end());
  if (labels.size() < 2) {
    throw ValidationError("silhouette: undefined for fewer than two clusters");
  }
  std::map<std::size_t, std::size_t> sizes;
  for (auto a : assignment) ++sizes[a];

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[assignment[i]] == 1) continue;
    std::map<std::size_t, double> sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sum[assignment[j]] += euclidean(vectors[i], vectors[j]);
    }
    const double a = sum[assignment[i]] /
                     static_cast<double>(sizes[assignment[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, s] : sum) {
      if (label != assignment[i]) {
        b = std::min(b, s / static_cast<double>(sizes[label]));
      }
    }
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

json ClusterEval::to_json() const {
  json groups = json::object();
  for (const auto& [g, s] : per_group) {
    groups[g] = {{"precision", s.precision},
                 {"recall", s.recall},
                 {"f1", s.f1},
                 {"cluster", s.best_cluster}};
  }
  json j{{"precision", precision},
         {"recall", recall},
         {"f1", f1},
         {"per_group", groups}};
  j["silhouette"] = silhouette ? json(*silhouette) : json(nullptr);
  return j;
}

ClusterEval cluster_prf(const std::map<std::string, std::string>& assignment,
                        const std::map<std::string, std::string>& reference) {
  if (assignment.size() != reference.size()) {
    throw ValidationError("cluster_prf: item sets differ in size");
  }
  if (assignment.empty()) throw ValidationError("cluster_prf: no items");
  std::map<std::string, std::size_t> cluster_size, group_size;
  std::map<std::pair<std::string, std::string>, std::size_t> tp;
  for (const auto& [item, cluster] : assignment) {
    auto it = reference.find(item);
    if (it == reference.end()) {
      throw ValidationError("cluster_prf: item '" + item +
                            "' missing from reference");
    }
    ++cluster_size[cluster];
    ++group_size[it->second];
    ++tp[{it->second, cluster}];
  }

  ClusterEval eval;
  const double total = static_cast<double>(assignment.size());
  for (const auto& [g, t] : group_size) {
    GroupScore best;
    std::size_t best_tp = 0;
    bool found = false;
    for (const auto& [c, nj] : cluster_size) {
      auto it = tp.find({g, c});
      if (it == tp.end()) continue;
      const double p = static_cast<double>(it->second) / static_cast<double>(nj);
      const double r = static_cast<double>(it->second) / static_cast<double>(t);
      const double f = 2.0 * p * r / (p + r);
      // Cluster labels iterate ascending, so strict comparisons keep the
      // smaller label on full ties.
      if (!found || f > best.f1 || (f == best.f1 && it->second > best_tp)) {
        best = {p, r, f, c};
        best_tp = it->second;
        found = true;
      }
    }
    const double w = static_cast<double>(t) / total;
    eval.precision += w * best.precision;
    eval.recall += w * best.recall;
    eval.f1 += w * best.f1;
    eval.per_group[g] = best;
  }
  return eval;
}

json Cluster::to_json() const {
  json titles = json::array();
  for (const auto& t : title_candidates) {
    titles.push_back({{"phrase_a", t.phrase_a},
                      {"phrase_b", t.phrase_b},
                      {"source", to_string(t.source)}});
  }
  return {{"members", member_ids}, {"title_candidates", titles}};
}

Cluster Cluster::from_json(const json& j) {
  Cluster c;
  c.member_ids = j.at("members").get<std::vector<std::string>>();
  for (const auto& t : j.at("title_candidates")) {
    TopicTitle title;
    title.phrase_a = t.at("phrase_a").get<std::string>();
    title.phrase_b = t.value("phrase_b", "");
    title.source = title_source_from_string(t.value("source", "generated"));
    c.title_candidates.push_back(std::move(title));
  }
  if (c.member_ids.empty()) throw ParseError("cluster without members");
  if (c.member_ids.size() != c.title_candidates.size()) {
    throw ParseError("cluster members and title candidates differ in count");
  }
  return c;
}

std::vector<Cluster> cluster_titles(const std::vector<TitledItem>& items,
                                    const TextEncoder& encoder,
                                    double threshold, Linkage linkage) {
  if (items.empty()) return {};
  std::vector<EmbeddingVector> vectors;
  vectors.reserve(items.size());
  for (const auto& item : items) {
    vectors.push_back(encoder.encode(item.title.serialize()));
  }
  auto res = agnes(vectors, threshold, linkage);
  std::vector<Cluster> out;
  out.reserve(res.clusters.size());
  for (const auto& members : res.clusters) {
    Cluster c;
    for (auto idx : members) {
      c.member_ids.push_back(items[idx].product_id);
      c.title_candidates.push_back(items[idx].title);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace estc
