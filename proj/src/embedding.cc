#include "estc/embedding.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "estc/catalog.h"
#include "estc/errors.h"
#include "estc/text_metrics.h"

namespace estc {

using nlohmann::json;

double EmbeddingVector::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

double SparseVector::norm() const {
  double s = 0.0;
  for (double v : value) s += v * v;
  return std::sqrt(s);
}

EmbeddingVector SparseVector::to_dense(std::size_t dim) const {
  EmbeddingVector out{std::vector<double>(dim, 0.0)};
  for (std::size_t k = 0; k < index.size(); ++k) out.values[index[k]] = value[k];
  return out;
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("dimension mismatch: " + std::to_string(a.dim()) +
                          " vs " + std::to_string(b.dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a.values[i] * b.values[i];
  return s;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  const double d = dot(a, b);
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(d / (na * nb), -1.0, 1.0);
}

void normalize(EmbeddingVector& v) {
  const double n = v.norm();
  if (n == 0.0) return;
  for (double& x : v.values) x /= n;
}

std::vector<std::string> extract_features(std::string_view text,
                                          bool char_bigrams) {
  auto tokens = tokenize(text);
  std::vector<std::string> out = tokens;
  if (!char_bigrams) return out;
  std::vector<std::vector<char32_t>> cps;
  cps.reserve(tokens.size());
  for (const auto& t : tokens) cps.push_back(decode_utf8(t));
  auto bigram = [](char32_t a, char32_t b) {
    return "#" + encode_utf8(a) + encode_utf8(b);
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    for (std::size_t k = 0; k + 1 < cps[i].size(); ++k) {
      out.push_back(bigram(cps[i][k], cps[i][k + 1]));
    }
    if (i + 1 < cps.size() && cps[i].size() == 1 && cps[i + 1].size() == 1 &&
        is_cjk(cps[i][0]) && is_cjk(cps[i + 1][0])) {
      out.push_back(bigram(cps[i][0], cps[i + 1][0]));
    }
  }
  return out;
}

std::optional<std::uint32_t> FeatureVocabulary::find(
    const std::string& feature) const {
  auto it = index_.find(feature);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double FeatureVocabulary::idf(std::uint32_t index) const {
  return std::log((1.0 + static_cast<double>(total_docs_)) /
                  (1.0 + static_cast<double>(df_[index]))) +
         1.0;
}

json FeatureVocabulary::to_json() const {
  return {{"features", features_},
          {"df", df_},
          {"total_docs", total_docs_},
          {"char_bigrams", char_bigrams_}};
}

FeatureVocabulary FeatureVocabulary::from_json(const json& j) {
  FeatureVocabulary v;
  v.features_ = j.at("features").get<std::vector<std::string>>();
  v.df_ = j.at("df").get<std::vector<std::uint32_t>>();
  v.total_docs_ = j.at("total_docs").get<std::size_t>();
  v.char_bigrams_ = j.value("char_bigrams", true);
  if (v.features_.size() != v.df_.size()) {
    throw ParseError("vocabulary features/df length mismatch");
  }
  for (std::uint32_t i = 0; i < v.features_.size(); ++i) {
    v.index_.emplace(v.features_[i], i);
  }
  return v;
}

FeatureVocabulary fit_vocabulary(const std::vector<std::string>& corpus,
                                 std::size_t max_dim, bool char_bigrams) {
  if (corpus.empty()) throw ValidationError("fit_vocabulary: empty corpus");
  std::map<std::string, std::uint32_t> df;
  for (const auto& doc : corpus) {
    auto feats = extract_features(doc, char_bigrams);
    std::set<std::string> unique(feats.begin(), feats.end());
    for (const auto& f : unique) ++df[f];
  }
  std::vector<std::pair<std::string, std::uint32_t>> ranked(df.begin(),
                                                            df.end());
  // std::map iteration is already lexicographic, so a stable sort on df
  // keeps the tie order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_dim) ranked.resize(max_dim);
  if (ranked.empty()) {
    throw ValidationError("fit_vocabulary: corpus yields no features");
  }
  FeatureVocabulary v;
  v.total_docs_ = corpus.size();
  v.char_bigrams_ = char_bigrams;
  for (auto& [feature, count] : ranked) {
    v.index_.emplace(feature, static_cast<std::uint32_t>(v.features_.size()));
    v.features_.push_back(feature);
    v.df_.push_back(count);
  }
  return v;
}

SparseVector bow_sparse(std::string_view text, const FeatureVocabulary& vocab) {
  std::map<std::uint32_t, double> tf;
  for (const auto& f : extract_features(text, vocab.char_bigrams())) {
    if (auto idx = vocab.find(f)) tf[*idx] += 1.0;
  }
  SparseVector v;
  double norm2 = 0.0;
  for (auto& [idx, count] : tf) {
    const double w = count * vocab.idf(idx);
    v.index.push_back(idx);
    v.value.push_back(w);
    norm2 += w * w;
  }
  if (norm2 > 0.0) {
    const double n = std::sqrt(norm2);
    for (double& w : v.value) w /= n;
  }
  return v;
}

EmbeddingVector embed_bow(std::string_view text,
                          const FeatureVocabulary& vocab) {
  return bow_sparse(text, vocab).to_dense(vocab.dim());
}

RefinementConfig RefinementConfig::from_json(const json& j) {
  RefinementConfig c;
  c.dim_out = j.value("dim_out", c.dim_out);
  c.temperature = j.value("temperature", c.temperature);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  return c;
}

RefinementProjection RefinementProjection::identity(std::size_t dim,
                                                    double temperature) {
  RefinementProjection p;
  p.dim_in = dim;
  p.dim_out = dim;
  p.temperature = temperature;
  p.matrix.assign(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) p.matrix[i * dim + i] = 1.0;
  return p;
}

EmbeddingVector RefinementProjection::apply(const SparseVector& x) const {
  EmbeddingVector z{std::vector<double>(dim_out, 0.0)};
  for (std::size_t k = 0; k < x.index.size(); ++k) {
    if (x.index[k] >= dim_in) {
      throw ValidationError("feature index outside projection input");
    }
    const double* row = &matrix[static_cast<std::size_t>(x.index[k]) * dim_out];
    const double xv = x.value[k];
    for (std::size_t c = 0; c < dim_out; ++c) z.values[c] += xv * row[c];
  }
  return z;
}

json RefinementProjection::to_json() const {
  return {{"dim_in", dim_in},
          {"dim_out", dim_out},
          {"temperature", temperature},
          {"seed", seed},
          {"epochs", epochs},
          {"initial_loss", initial_loss},
          {"final_loss", final_loss},
          {"loss_curve", loss_curve},
          {"matrix", matrix}};
}

RefinementProjection RefinementProjection::from_json(const json& j) {
  RefinementProjection p;
  p.dim_in = j.at("dim_in").get<std::size_t>();
  p.dim_out = j.at("dim_out").get<std::size_t>();
  p.temperature = j.at("temperature").get<double>();
  p.seed = j.value("seed", std::uint64_t{0});
  p.epochs = j.value("epochs", 0);
  p.initial_loss = j.value("initial_loss", 0.0);
  p.final_loss = j.value("final_loss", 0.0);
  p.loss_curve = j.value("loss_curve", std::vector<double>{});
  p.matrix = j.at("matrix").get<std::vector<double>>();
  if (p.matrix.size() != p.dim_in * p.dim_out) {
    throw ParseError("projection matrix has " + std::to_string(p.matrix.size()) +
                     " entries, expected " +
                     std::to_string(p.dim_in * p.dim_out));
  }
  if (!(p.temperature > 0.0)) throw ParseError("temperature must be positive");
  return p;
}

void RefinementProjection::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump();
}

RefinementProjection RefinementProjection::load(
    const std::filesystem::path& path) {
  return from_json(json::parse(read_file(path)));
}

namespace {

struct ViewState {
  EmbeddingVector unit;  // z / |z|, zero when z == 0
  double norm = 0.0;
};

ViewState project_view(const SparseVector& x, const RefinementProjection& p) {
  ViewState s{p.apply(x), 0.0};
  s.norm = s.unit.norm();
  if (s.norm > 0.0) {
    for (double& v : s.unit.values) v /= s.norm;
  }
  return s;
}

// Row-sparse gradient: only rows of W touched by a stored feature.
using RowGrad = std::map<std::uint32_t, std::vector<double>>;

double infonce_impl(const std::vector<SparseVector>& view_a,
                    const std::vector<SparseVector>& view_b,
                    const RefinementProjection& p, RowGrad* grad) {
  const std::size_t b = view_a.size();
  if (b != view_b.size() || b == 0) {
    throw ValidationError("infonce: view batches must be equal and nonempty");
  }
  const double inv_tau = 1.0 / p.temperature;
  std::vector<ViewState> u, w;
  u.reserve(b);
  w.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    u.push_back(project_view(view_a[i], p));
    w.push_back(project_view(view_b[i], p));
  }
  std::vector<double> c(b * b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      c[i * b + j] = dot(u[i].unit, w[j].unit);
    }
  }

  double loss = 0.0;
  std::vector<double> g(b * b);  // dLoss/ds_ij
  for (std::size_t i = 0; i < b; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < b; ++j) mx = std::max(mx, c[i * b + j] * inv_tau);
    double z = 0.0;
    for (std::size_t j = 0; j < b; ++j) z += std::exp(c[i * b + j] * inv_tau - mx);
    loss += mx + std::log(z) - c[i * b + i] * inv_tau;
    for (std::size_t j = 0; j < b; ++j) {
      const double prob = std::exp(c[i * b + j] * inv_tau - mx) / z;
      g[i * b + j] = (prob - (i == j ? 1.0 : 0.0)) / static_cast<double>(b);
    }
  }
  loss /= static_cast<double>(b);
  if (grad == nullptr) return loss;

  const std::size_t d = p.dim_out;
  auto accumulate = [&](const SparseVector& x, const std::vector<double>& dz) {
    for (std::size_t k = 0; k < x.index.size(); ++k) {
      auto& row = (*grad)[x.index[k]];
      if (row.empty()) row.assign(d, 0.0);
      for (std::size_t col = 0; col < d; ++col) row[col] += x.value[k] * dz[col];
    }
  };
  std::vector<double> dz(d);
  for (std::size_t i = 0; i < b; ++i) {
    if (u[i].norm == 0.0) continue;
    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::size_t j = 0; j < b; ++j) {
      if (w[j].norm == 0.0) continue;
      const double coef = g[i * b + j] * inv_tau / u[i].norm;
      const double cij = c[i * b + j];
      for (std::size_t col = 0; col < d; ++col) {
        dz[col] += coef * (w[j].unit.values[col] - cij * u[i].unit.values[col]);
      }
    }
    accumulate(view_a[i], dz);
  }
  for (std::size_t j = 0; j < b; ++j) {
    if (w[j].norm == 0.0) continue;
    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      if (u[i].norm == 0.0) continue;
      const double coef = g[i * b + j] * inv_tau / w[j].norm;
      const double cij = c[i * b + j];
      for (std::size_t col = 0; col < d; ++col) {
        dz[col] += coef * (u[i].unit.values[col] - cij * w[j].unit.values[col]);
      }
    }
    accumulate(view_b[j], dz);
  }
  return loss;
}

std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<std::size_t>& order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    std::size_t e = std::min(order.size(), s + batch_size);
    std::vector<std::size_t> batch(order.begin() + s, order.begin() + e);
    if (batch.size() < 2 && !batches.empty()) {
      // A lone trailing item has no in-batch negative; fold it back.
      batches.back().insert(batches.back().end(), batch.begin(), batch.end());
    } else {
      batches.push_back(std::move(batch));
    }
  }
  return batches;
}

double evaluate(const std::vector<SparseVector>& base,
                const std::vector<std::vector<std::size_t>>& batches,
                const RefinementProjection& p, double dropout,
                std::uint64_t eval_seed) {
  Rng rng(eval_seed);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& batch : batches) {
    std::vector<SparseVector> a, b;
    for (auto idx : batch) {
      a.push_back(feature_dropout(base[idx], dropout, rng));
      b.push_back(feature_dropout(base[idx], dropout, rng));
    }
    total += infonce_impl(a, b, p, nullptr) * static_cast<double>(batch.size());
    count += batch.size();
  }
  return total / static_cast<double>(count);
}

}  // namespace

double infonce_loss(const std::vector<SparseVector>& view_a,
                    const std::vector<SparseVector>& view_b,
                    const RefinementProjection& projection,
                    std::vector<double>* grad) {
  if (grad == nullptr) return infonce_impl(view_a, view_b, projection, nullptr);
  RowGrad rows;
  const double loss = infonce_impl(view_a, view_b, projection, &rows);
  grad->assign(projection.matrix.size(), 0.0);
  for (const auto& [r, values] : rows) {
    std::copy(values.begin(), values.end(),
              grad->begin() + static_cast<std::ptrdiff_t>(r * projection.dim_out));
  }
  return loss;
}

SparseVector feature_dropout(const SparseVector& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  SparseVector out;
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t k = 0; k < x.index.size(); ++k) {
    if (!rng.bernoulli(rate)) {
      out.index.push_back(x.index[k]);
      out.value.push_back(x.value[k] * scale);
    }
  }
  return out;
}

RefinementProjection train_refinement(const std::vector<std::string>& titles,
                                      const FeatureVocabulary& vocab,
                                      const RefinementConfig& config) {
  if (config.batch_size < 2) {
    throw ValidationError("train_refinement: batch_size must be at least 2");
  }
  if (!(config.temperature > 0.0)) {
    throw ValidationError("train_refinement: temperature must be positive");
  }
  if (config.dropout_rate < 0.0 || config.dropout_rate >= 1.0) {
    throw ValidationError("train_refinement: dropout_rate must be in [0, 1)");
  }
  if (config.dim_out == 0) throw ValidationError("train_refinement: dim_out 0");

  std::vector<SparseVector> base;
  std::unordered_set<std::string> seen;
  for (const auto& t : titles) {
    if (!seen.insert(t).second) continue;
    auto v = bow_sparse(t, vocab);
    if (!v.empty()) base.push_back(std::move(v));
  }
  if (base.size() < 2) {
    throw ValidationError(
        "train_refinement: need at least 2 distinct titles with features");
  }

  RefinementProjection p;
  p.dim_in = vocab.dim();
  p.dim_out = config.dim_out;
  p.temperature = config.temperature;
  p.seed = config.seed;
  p.epochs = config.epochs;
  p.matrix.resize(p.dim_in * p.dim_out);
  {
    Rng init(derive_seed(config.seed, "init"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.dim_out));
    for (double& w : p.matrix) w = init.normal() * scale;
  }

  const std::size_t batch_size = std::min(config.batch_size, base.size());
  std::vector<std::size_t> identity_order(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) identity_order[i] = i;
  const auto eval_batches = make_batches(identity_order, batch_size);
  const std::uint64_t eval_seed = derive_seed(config.seed, "eval");

  p.initial_loss = evaluate(base, eval_batches, p, config.dropout_rate, eval_seed);
  double best_loss = p.initial_loss;
  std::vector<double> best = p.matrix;

  Rng rng(derive_seed(config.seed, "train"));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto order = identity_order;
    rng.shuffle(order);
    for (const auto& batch : make_batches(order, batch_size)) {
      std::vector<SparseVector> a, b;
      for (auto idx : batch) {
        a.push_back(feature_dropout(base[idx], config.dropout_rate, rng));
        b.push_back(feature_dropout(base[idx], config.dropout_rate, rng));
      }
      RowGrad rows;
      infonce_impl(a, b, p, &rows);
      for (const auto& [r, values] : rows) {
        double* row = &p.matrix[static_cast<std::size_t>(r) * p.dim_out];
        for (std::size_t c = 0; c < p.dim_out; ++c) {
          row[c] -= config.learning_rate * values[c];
        }
      }
    }
    const double loss =
        evaluate(base, eval_batches, p, config.dropout_rate, eval_seed);
    p.loss_curve.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best = p.matrix;
    }
  }
  p.matrix = std::move(best);
  p.final_loss = best_loss;
  return p;
}

EmbeddingVector embed_title(std::string_view text,
                            const FeatureVocabulary& vocab,
                            const RefinementProjection* projection) {
  if (projection != nullptr && projection->dim_in != vocab.dim()) {
    throw ValidationError("projection expects dim_in " +
                          std::to_string(projection->dim_in) +
                          " but vocabulary has " + std::to_string(vocab.dim()));
  }
  auto base = bow_sparse(text, vocab);
  EmbeddingVector out =
      projection ? projection->apply(base) : base.to_dense(vocab.dim());
  normalize(out);
  return out;
}

TextEncoder::TextEncoder(FeatureVocabulary vocab,
                         std::optional<RefinementProjection> projection)
    : vocab_(std::move(vocab)), projection_(std::move(projection)) {
  if (projection_ && projection_->dim_in != vocab_.dim()) {
    throw ValidationError("projection dim_in does not match vocabulary");
  }
}

EmbeddingVector TextEncoder::encode(std::string_view text) const {
  return embed_title(text, vocab_, projection_ ? &*projection_ : nullptr);
}

std::size_t TextEncoder::dim() const {
  return projection_ ? projection_->dim_out : vocab_.dim();
}

WordVectors WordVectors::parse(std::string_view text) {
  WordVectors wv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> values;
    double v;
    while (ls >> v) values.push_back(v);
    if (!ls.eof()) {
      throw ParseError("word vectors line " + std::to_string(line_no) +
                       ": non-numeric component");
    }
    if (wv.dim_ == 0) wv.dim_ = values.size();
    if (values.size() != wv.dim_ || values.empty()) {
      throw ParseError("word vectors line " + std::to_string(line_no) +
                       ": expected " + std::to_string(wv.dim_) +
                       " components");
    }
    wv.vectors_[token] = std::move(values);
  }
  return wv;
}

WordVectors WordVectors::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

EmbeddingVector WordVectors::embed(std::string_view text) const {
  EmbeddingVector out{std::vector<double>(dim_, 0.0)};
  for (const auto& t : tokenize(text)) {
    auto it = vectors_.find(t);
    if (it == vectors_.end()) continue;
    for (std::size_t i = 0; i < dim_; ++i) out.values[i] += it->second[i];
  }
  normalize(out);
  return out;
}

}  // namespace estc
