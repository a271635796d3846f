#include "estc/quality_control.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <exception>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <variant>

#include "estc/errors.h"
#include "estc/random.h"
#include "estc/topicgen.h"

namespace estc {

using nlohmann::json;

namespace {

constexpr double kLogitClamp = 30.0;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Profile encoding: sum of the encoder rows of the active slots.
std::vector<double> encode_profile(const LinearClassifier& m,
                                   const std::vector<std::size_t>& slots) {
  const std::size_t width = m.profile_width();
  std::vector<double> enc(width, 0.0);
  for (std::size_t s : slots) {
    if (s >= m.profile_vocab) {
      throw ValidationError("profile slot " + std::to_string(s) +
                            " outside vocabulary of " +
                            std::to_string(m.profile_vocab));
    }
    for (std::size_t h = 0; h < width; ++h) {
      enc[h] += m.profile_encoder[s * width + h];
    }
  }
  return enc;
}

void append_dense(SparseVector& out, const EmbeddingVector& v,
                  std::size_t offset) {
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    if (v.values[i] == 0.0) continue;
    out.index.push_back(static_cast<std::uint32_t>(offset + i));
    out.value.push_back(v.values[i]);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// LinearClassifier

LinearClassifier::LinearClassifier(std::vector<FeatureSegment> layout,
                                   std::size_t profile_vocab_size)
    : feature_layout(std::move(layout)), profile_vocab(profile_vocab_size) {
  std::size_t total = 0;
  for (const auto& seg : feature_layout) total += seg.size;
  weights.assign(total, 0.0);
  if (profile_offset() < dim()) {
    if (profile_vocab == 0) {
      throw ValidationError("profile segment needs a nonempty vocabulary");
    }
    profile_encoder.assign(profile_vocab * profile_width(), 0.0);
  }
}

std::size_t LinearClassifier::profile_offset() const {
  std::size_t offset = 0;
  for (const auto& seg : feature_layout) {
    if (seg.name == "profile") return offset;
    offset += seg.size;
  }
  return dim();
}

std::size_t LinearClassifier::profile_width() const {
  for (const auto& seg : feature_layout) {
    if (seg.name == "profile") return seg.size;
  }
  return 0;
}

double LinearClassifier::logit(const FeatureVector& x) const {
  double z = bias;
  for (std::size_t k = 0; k < x.dense.index.size(); ++k) {
    const std::size_t i = x.dense.index[k];
    if (i >= weights.size()) {
      throw ValidationError("feature index " + std::to_string(i) +
                            " outside layout of " + std::to_string(dim()));
    }
    z += weights[i] * x.dense.value[k];
  }
  if (!x.profile_slots.empty()) {
    const std::size_t off = profile_offset();
    const auto enc = encode_profile(*this, x.profile_slots);
    for (std::size_t h = 0; h < enc.size(); ++h) z += weights[off + h] * enc[h];
  }
  return z;
}

double LinearClassifier::score(const FeatureVector& x) const {
  return sigmoid(std::clamp(logit(x), -kLogitClamp, kLogitClamp));
}

json LinearClassifier::to_json() const {
  json layout = json::array();
  for (const auto& seg : feature_layout) {
    layout.push_back({{"name", seg.name}, {"size", seg.size}});
  }
  return {{"feature_layout", layout},
          {"weights", weights},
          {"bias", bias},
          {"profile_vocab", profile_vocab},
          {"profile_encoder", profile_encoder},
          {"metadata",
           {{"seed", metadata.seed},
            {"epochs", metadata.epochs},
            {"learning_rate", metadata.learning_rate},
            {"initial_loss", metadata.initial_loss},
            {"final_loss", metadata.final_loss},
            {"loss_curve", metadata.loss_curve},
            {"positives", metadata.positives},
            {"negatives", metadata.negatives}}}};
}

LinearClassifier LinearClassifier::from_json(const json& j) {
  std::vector<FeatureSegment> layout;
  for (const auto& seg : j.at("feature_layout")) {
    layout.push_back({seg.at("name").get<std::string>(),
                      seg.at("size").get<std::size_t>()});
  }
  LinearClassifier m(std::move(layout), j.value("profile_vocab", std::size_t{0}));
  auto weights = j.at("weights").get<std::vector<double>>();
  if (weights.size() != m.weights.size()) {
    throw ValidationError("classifier has " + std::to_string(weights.size()) +
                          " weights but its layout declares " +
                          std::to_string(m.weights.size()));
  }
  m.weights = std::move(weights);
  m.bias = j.at("bias").get<double>();
  if (j.contains("profile_encoder")) {
    auto enc = j.at("profile_encoder").get<std::vector<double>>();
    if (enc.size() != m.profile_encoder.size()) {
      throw ValidationError("profile encoder size mismatch");
    }
    m.profile_encoder = std::move(enc);
  }
  if (!all_finite(m.weights) || !all_finite(m.profile_encoder) ||
      !std::isfinite(m.bias)) {
    throw ValidationError("classifier parameters must be finite");
  }
  if (j.contains("metadata")) {
    const auto& md = j.at("metadata");
    m.metadata.seed = md.value("seed", std::uint64_t{0});
    m.metadata.epochs = md.value("epochs", 0);
    m.metadata.learning_rate = md.value("learning_rate", 0.0);
    m.metadata.initial_loss = md.value("initial_loss", 0.0);
    m.metadata.final_loss = md.value("final_loss", 0.0);
    m.metadata.loss_curve = md.value("loss_curve", std::vector<double>{});
    m.metadata.positives = md.value("positives", std::size_t{0});
    m.metadata.negatives = md.value("negatives", std::size_t{0});
  }
  return m;
}

void LinearClassifier::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

LinearClassifier LinearClassifier::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training

double logistic_loss(const LinearClassifier& model,
                     const std::vector<LabeledFeatures>& data,
                     ClassifierGradient* grad) {
  if (grad) {
    grad->weights.assign(model.weights.size(), 0.0);
    grad->bias = 0.0;
    grad->profile_encoder.assign(model.profile_encoder.size(), 0.0);
  }
  if (data.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  const std::size_t off = model.profile_offset();
  const std::size_t width = model.profile_width();
  double total = 0.0;
  for (const auto& ex : data) {
    const double z = model.logit(ex.x);
    const double y = ex.label == 1 ? 1.0 : 0.0;
    total += softplus(z) - y * z;
    if (!grad) continue;
    const double g = (sigmoid(z) - y) * inv_n;
    for (std::size_t k = 0; k < ex.x.dense.index.size(); ++k) {
      grad->weights[ex.x.dense.index[k]] += g * ex.x.dense.value[k];
    }
    grad->bias += g;
    if (!ex.x.profile_slots.empty()) {
      const auto enc = encode_profile(model, ex.x.profile_slots);
      for (std::size_t h = 0; h < width; ++h) {
        grad->weights[off + h] += g * enc[h];
        for (std::size_t s : ex.x.profile_slots) {
          grad->profile_encoder[s * width + h] += g * model.weights[off + h];
        }
      }
    }
  }
  return total * inv_n;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.seed = j.value("seed", c.seed);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (c.epochs < 0) throw ValidationError("epochs must be non-negative");
  if (!(c.learning_rate > 0)) throw ValidationError("learning_rate must be positive");
  return c;
}

void train_logistic(LinearClassifier& model,
                    const std::vector<LabeledFeatures>& data,
                    const TrainConfig& config) {
  if (data.empty()) throw ValidationError("no training examples");
  const std::size_t off = model.profile_offset();
  const std::size_t width = model.profile_width();

  LinearClassifier best = model;
  double best_loss = logistic_loss(model, data);
  std::vector<double> curve{best_loss};
  const double initial = best_loss;

  std::vector<std::size_t> order(data.size());
  std::vector<double> enc;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::string suffix = "#" + std::to_string(epoch);
    std::vector<std::tuple<std::uint64_t, std::string_view, std::size_t>> keyed;
    keyed.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      keyed.emplace_back(derive_seed(config.seed, data[i].key + suffix),
                         data[i].key, i);
    }
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t i = 0; i < keyed.size(); ++i) order[i] = std::get<2>(keyed[i]);

    for (std::size_t i : order) {
      const auto& ex = data[i];
      const double y = ex.label == 1 ? 1.0 : 0.0;
      const double step = config.learning_rate * (sigmoid(model.logit(ex.x)) - y);
      for (std::size_t k = 0; k < ex.x.dense.index.size(); ++k) {
        model.weights[ex.x.dense.index[k]] -= step * ex.x.dense.value[k];
      }
      model.bias -= step;
      if (!ex.x.profile_slots.empty()) {
        enc = encode_profile(model, ex.x.profile_slots);
        for (std::size_t h = 0; h < width; ++h) {
          const double w = model.weights[off + h];
          model.weights[off + h] -= step * enc[h];
          for (std::size_t s : ex.x.profile_slots) {
            model.profile_encoder[s * width + h] -= step * w;
          }
        }
      }
    }
    const double loss = logistic_loss(model, data);
    if (!std::isfinite(loss)) throw Error("training diverged");
    curve.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best = model;
    }
  }
  model = std::move(best);
  model.metadata.seed = config.seed;
  model.metadata.epochs = config.epochs;
  model.metadata.learning_rate = config.learning_rate;
  model.metadata.initial_loss = initial;
  model.metadata.final_loss = best_loss;
  model.metadata.loss_curve = std::move(curve);
}

// ---------------------------------------------------------------------------
// Negative synthesis

TitleTokens TitleTokens::from_title(const TopicTitle& title) {
  TitleTokens t;
  t.tokens = tokenize(title.phrase_a);
  t.boundary = t.tokens.size();
  auto rest = tokenize(title.phrase_b);
  t.tokens.insert(t.tokens.end(), rest.begin(), rest.end());
  return t;
}

TopicTitle TitleTokens::to_title(TitleSource source) const {
  const std::size_t cut = std::min(boundary, tokens.size());
  TokenSequence a(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(cut));
  TokenSequence b(tokens.begin() + static_cast<std::ptrdiff_t>(cut), tokens.end());
  if (a.empty()) std::swap(a, b);
  return {detokenize(a), detokenize(b), source};
}

TitleTokens apply_repetition(const TitleTokens& t, std::size_t n,
                             std::size_t start, std::size_t repeats) {
  if (n == 0 || start + n > t.tokens.size()) {
    throw ValidationError("repetition span out of range");
  }
  TitleTokens out;
  const auto first = t.tokens.begin() + static_cast<std::ptrdiff_t>(start);
  const auto last = first + static_cast<std::ptrdiff_t>(n);
  out.tokens.assign(t.tokens.begin(), last);
  for (std::size_t r = 0; r < repeats; ++r) out.tokens.insert(out.tokens.end(), first, last);
  out.tokens.insert(out.tokens.end(), last, t.tokens.end());
  out.boundary = t.boundary;
  if (start + n <= t.boundary) out.boundary += n * repeats;
  return out;
}

TitleTokens apply_truncation(const TitleTokens& t, std::size_t count) {
  if (count >= t.tokens.size()) {
    throw ValidationError("truncation would leave an empty title");
  }
  TitleTokens out;
  out.tokens.assign(t.tokens.begin(),
                    t.tokens.end() - static_cast<std::ptrdiff_t>(count));
  out.boundary = std::min(t.boundary, out.tokens.size());
  return out;
}

TopicTitle synth_repetition_negative(const TopicTitle& title,
                                     std::uint64_t rng_seed) {
  const auto t = TitleTokens::from_title(title);
  if (t.tokens.size() < 2) {
    throw ValidationError("repetition negative needs at least 2 tokens, got " +
                          std::to_string(t.tokens.size()));
  }
  Rng rng(rng_seed);
  const std::size_t n = rng.bernoulli(0.5) ? 1 : 2;
  const std::size_t start = rng.uniform_index(t.tokens.size() - n + 1);
  const std::size_t repeats = rng.bernoulli(0.5) ? 1 : 2;
  return apply_repetition(t, n, start, repeats).to_title(TitleSource::kGenerated);
}

TopicTitle synth_incomplete_negative(const TopicTitle& title,
                                     std::uint64_t rng_seed) {
  const auto t = TitleTokens::from_title(title);
  if (t.tokens.size() < 5) {
    throw ValidationError("incomplete negative needs at least 5 tokens, got " +
                          std::to_string(t.tokens.size()));
  }
  Rng rng(rng_seed);
  const std::size_t count = rng.bernoulli(0.5) ? 2 : 4;
  return apply_truncation(t, count).to_title(TitleSource::kGenerated);
}

std::size_t max_adjacent_repetition(const TokenSequence& tokens, std::size_t n) {
  if (n == 0 || tokens.size() < 2 * n) return 0;
  std::size_t best = 0;
  for (std::size_t start = 0; start + 2 * n <= tokens.size(); ++start) {
    std::size_t copies = 0;
    std::size_t pos = start + n;
    while (pos + n <= tokens.size() &&
           std::equal(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                      tokens.begin() + static_cast<std::ptrdiff_t>(start + n),
                      tokens.begin() + static_cast<std::ptrdiff_t>(pos))) {
      ++copies;
      pos += n;
    }
    best = std::max(best, copies);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Coherence

CoherenceModel::CoherenceModel(LinearClassifier classifier,
                               std::shared_ptr<const TextEncoder> encoder)
    : classifier_(std::move(classifier)), encoder_(std::move(encoder)) {
  if (!encoder_) throw ValidationError("coherence model needs an encoder");
  if (classifier_.dim() != encoder_->dim() + kScalarFeatures) {
    throw ValidationError("coherence classifier layout does not match encoder");
  }
}

CoherenceModel CoherenceModel::untrained(
    std::shared_ptr<const TextEncoder> encoder) {
  if (!encoder) throw ValidationError("coherence model needs an encoder");
  LinearClassifier c({{"title_embedding", encoder->dim()},
                      {"scalars", kScalarFeatures}});
  return CoherenceModel(std::move(c), std::move(encoder));
}

FeatureVector CoherenceModel::features(const TopicTitle& title) const {
  FeatureVector x;
  const std::size_t d = encoder_->dim();
  append_dense(x.dense, encoder_->encode(title.serialize()), 0);
  const auto tokens = TitleTokens::from_title(title).tokens;
  std::set<std::string> types(tokens.begin(), tokens.end());
  const double scalars[kScalarFeatures] = {
      static_cast<double>(max_adjacent_repetition(tokens, 1)),
      static_cast<double>(max_adjacent_repetition(tokens, 2)),
      static_cast<double>(tokens.size()) / 10.0,
      tokens.empty() ? 0.0
                     : static_cast<double>(types.size()) /
                           static_cast<double>(tokens.size())};
  for (std::size_t k = 0; k < kScalarFeatures; ++k) {
    if (scalars[k] == 0.0) continue;
    x.dense.index.push_back(static_cast<std::uint32_t>(d + k));
    x.dense.value.push_back(scalars[k]);
  }
  return x;
}

double CoherenceModel::score(const TopicTitle& title) const {
  return classifier_.score(features(title));
}

CoherenceTraining train_coherence(const std::vector<TopicTitle>& positives,
                                  std::shared_ptr<const TextEncoder> encoder,
                                  const TrainConfig& config) {
  // Deduplicate by text; sorting makes synthesis independent of input order.
  std::map<std::string, TopicTitle> unique;
  for (const auto& t : positives) {
    TopicTitle clean{trim(t.phrase_a), trim(t.phrase_b), t.source};
    if (clean.phrase_a.empty()) continue;
    unique.emplace(clean.serialize(), clean);
  }
  if (unique.size() < 10) {
    throw ValidationError("coherence training needs at least 10 distinct "
                          "positives, got " + std::to_string(unique.size()));
  }

  std::vector<TopicTitle> pool;
  auto add = [&](TopicTitle neg) {
    if (!unique.contains(neg.serialize())) pool.push_back(std::move(neg));
  };
  for (const auto& [text, title] : unique) {
    const std::size_t len = TitleTokens::from_title(title).tokens.size();
    if (len >= 2) add(synth_repetition_negative(title, derive_seed(config.seed, "rep:" + text)));
    if (len >= 5) add(synth_incomplete_negative(title, derive_seed(config.seed, "inc:" + text)));
  }
  // Short titles only admit repetition; extra rounds keep the ratio at 1:1.
  for (int round = 1; pool.size() < unique.size() && round <= 8; ++round) {
    for (const auto& [text, title] : unique) {
      if (TitleTokens::from_title(title).tokens.size() < 2) continue;
      add(synth_repetition_negative(
          title, derive_seed(config.seed, "rep" + std::to_string(round) + ":" + text)));
    }
  }
  if (pool.size() < unique.size()) {
    throw ValidationError("positives too short to synthesize enough negatives");
  }
  Rng rng(derive_seed(config.seed, "downsample"));
  rng.shuffle(pool);
  pool.resize(unique.size());

  std::vector<LabeledFeatures> data;
  auto model = CoherenceModel::untrained(encoder);
  for (const auto& [text, title] : unique) {
    data.push_back({model.features(title), 1, "pos:" + text});
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    data.push_back({model.features(pool[i]), 0,
                    "neg:" + pool[i].serialize() + "#" + std::to_string(i)});
  }
  train_logistic(model.classifier(), data, config);
  model.classifier().metadata.positives = unique.size();
  model.classifier().metadata.negatives = pool.size();
  return {std::move(model), std::move(pool)};
}

// ---------------------------------------------------------------------------
// Product/title pairs

PairModel::PairModel(LinearClassifier classifier,
                     std::shared_ptr<const TextEncoder> encoder,
                     ProfileVocabulary profile_vocab)
    : classifier_(std::move(classifier)),
      encoder_(std::move(encoder)),
      profile_vocab_(std::move(profile_vocab)) {
  if (!encoder_) throw ValidationError("pair model needs an encoder");
  if (classifier_.dim() != 3 * encoder_->dim() + 1 + kProfileWidth ||
      classifier_.profile_vocab != profile_vocab_.size()) {
    throw ValidationError("pair classifier layout does not match encoder");
  }
}

PairModel PairModel::untrained(std::shared_ptr<const TextEncoder> encoder,
                               ProfileVocabulary profile_vocab,
                               std::uint64_t seed) {
  if (!encoder) throw ValidationError("pair model needs an encoder");
  const std::size_t d = encoder->dim();
  LinearClassifier c({{"product_embedding", d},
                      {"text_embedding", d},
                      {"interaction", d},
                      {"similarity", 1},
                      {"profile", kProfileWidth}},
                     profile_vocab.size());
  // Random encoder, zero read-out weights: untrained scores stay at 0.5 while
  // the profile path still receives gradient.
  Rng rng(derive_seed(seed, "profile"));
  for (double& w : c.profile_encoder) w = 0.5 * rng.normal();
  return PairModel(std::move(c), std::move(encoder), std::move(profile_vocab));
}

FeatureVector PairModel::features(const Product& product,
                                  std::string_view text) const {
  const std::size_t d = encoder_->dim();
  const auto p = encoder_->encode(product_text(product));
  const auto t = encoder_->encode(text);
  EmbeddingVector inter;
  inter.values.resize(d);
  double similarity = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    inter.values[i] = p.values[i] * t.values[i];
    similarity += inter.values[i];
  }
  FeatureVector x;
  append_dense(x.dense, p, 0);
  append_dense(x.dense, t, d);
  append_dense(x.dense, inter, 2 * d);
  if (similarity != 0.0) {
    x.dense.index.push_back(static_cast<std::uint32_t>(3 * d));
    x.dense.value.push_back(similarity);
  }
  x.profile_slots = profile_vocab_.one_hot(product.profile);
  return x;
}

double PairModel::score_text(const Product& product, std::string_view text) const {
  return classifier_.score(features(product, text));
}

double PairModel::score(const Product& product, const TopicTitle& title) const {
  return score_text(product, title.serialize());
}

PairModel train_pair_model(const std::vector<TextPair>& positives,
                           const std::vector<TextPair>& negatives,
                           std::shared_ptr<const TextEncoder> encoder,
                           const TrainConfig& config,
                           const ProfileVocabulary& profile_vocab) {
  if (positives.empty() || negatives.empty()) {
    throw ValidationError("pair training needs positives and negatives");
  }
  auto model = PairModel::untrained(std::move(encoder), profile_vocab, config.seed);
  std::vector<LabeledFeatures> data;
  std::map<std::string, int> seen;
  auto add = [&](const TextPair& pair, int label) {
    if (!pair.product) throw ValidationError("pair without a product");
    std::string key = (label ? "pos:" : "neg:") + pair.product->id + "\x1f" + pair.text;
    const int dup = seen[key]++;
    if (dup > 0) key += "#" + std::to_string(dup);
    data.push_back({model.features(*pair.product, pair.text), label, std::move(key)});
  };
  for (const auto& p : positives) add(p, 1);
  for (const auto& n : negatives) add(n, 0);
  train_logistic(model.classifier(), data, config);
  model.classifier().metadata.positives = positives.size();
  model.classifier().metadata.negatives = negatives.size();
  return model;
}

CorrelationTraining train_correlation(
    const std::vector<LabeledPair>& positives,
    const std::vector<Product>& catalog,
    std::shared_ptr<const TextEncoder> encoder, const TrainConfig& config,
    const ProfileVocabulary& profile_vocab) {
  std::map<std::string, const Product*> by_id;
  for (const auto& p : catalog) by_id[p.id] = &p;

  // (product id, title text) -> title, sorted for order independence.
  std::map<std::pair<std::string, std::string>, TopicTitle> unique;
  for (const auto& pair : positives) {
    if (pair.label != 1) continue;
    if (!by_id.contains(pair.product_id)) {
      throw ValidationError("positive pair references unknown product '" +
                            pair.product_id + "'");
    }
    unique.emplace(std::pair{pair.product_id, pair.title.serialize()}, pair.title);
  }
  std::map<std::string, TopicTitle> titles;
  for (const auto& [key, title] : unique) titles.emplace(key.second, title);
  if (unique.size() < 10) {
    throw ValidationError("correlation training needs at least 10 positives, got " +
                          std::to_string(unique.size()));
  }
  if (titles.size() < 2) {
    throw ValidationError("correlation training needs at least 2 distinct titles");
  }
  // Mismatches are drawn from the positive pairs themselves, so every title
  // is as frequent among negatives as among positives and the title alone
  // carries no label signal.
  std::vector<const std::pair<const std::pair<std::string, std::string>, TopicTitle>*> pool;
  for (const auto& entry : unique) pool.push_back(&entry);

  std::vector<TextPair> pos;
  std::vector<TextPair> neg;
  std::vector<ProductTitlePair> negatives;
  for (const auto& [key, title] : unique) {
    const Product* product = by_id.at(key.first);
    pos.push_back({product, key.second});
    Rng rng(derive_seed(config.seed, "mismatch:" + key.first + "\x1f" + key.second));
    const std::size_t n = pool.size();
    const std::size_t start = rng.uniform_index(n);
    const TopicTitle* pick = nullptr;
    for (std::size_t k = 0; k < n && pick == nullptr; ++k) {
      const auto& [other_key, other_title] = *pool[(start + k) % n];
      if (!unique.contains({key.first, other_key.second})) pick = &other_title;
    }
    if (pick == nullptr) {
      throw ValidationError("product '" + key.first +
                            "' is paired with every title; no mismatch exists");
    }
    neg.push_back({product, pick->serialize()});
    negatives.push_back({product, *pick});
  }
  auto model = train_pair_model(pos, neg, std::move(encoder), config, profile_vocab);
  return {std::move(model), std::move(negatives)};
}

// ---------------------------------------------------------------------------
// Channels

std::string_view to_string(ChannelStatus s) {
  switch (s) {
    case ChannelStatus::kPending: return "pending";
    case ChannelStatus::kPublished: return "published";
    case ChannelStatus::kRejected: return "rejected";
  }
  return "pending";
}

ChannelStatus channel_status_from_string(std::string_view s) {
  if (s == "pending") return ChannelStatus::kPending;
  if (s == "published") return ChannelStatus::kPublished;
  if (s == "rejected") return ChannelStatus::kRejected;
  throw ValidationError("unknown channel status '" + std::string(s) + "'");
}

namespace {

json title_json(const TopicTitle& t) {
  return {{"phrase_a", t.phrase_a},
          {"phrase_b", t.phrase_b},
          {"source", std::string(to_string(t.source))}};
}

TopicTitle title_from(const json& j) {
  return {j.at("phrase_a").get<std::string>(), j.value("phrase_b", ""),
          title_source_from_string(j.value("source", "generated"))};
}

}  // namespace

json Channel::to_json() const {
  json cands = json::array();
  for (const auto& c : title_candidates) {
    auto t = title_json(c.title);
    t["score"] = c.score;
    cands.push_back(std::move(t));
  }
  json prods = json::array();
  for (const auto& p : products) {
    prods.push_back({{"product_id", p.product_id}, {"score", p.score}});
  }
  return {{"channel_id", channel_id},
          {"title", title_json(title)},
          {"title_candidates", cands},
          {"products", prods},
          {"status", std::string(to_string(status))},
          {"created_at", created_at}};
}

Channel Channel::from_json(const json& j) {
  Channel c;
  c.channel_id = j.at("channel_id").get<std::string>();
  c.title = title_from(j.at("title"));
  for (const auto& t : j.at("title_candidates")) {
    c.title_candidates.push_back({title_from(t), t.at("score").get<double>()});
  }
  for (const auto& p : j.at("products")) {
    c.products.push_back({p.at("product_id").get<std::string>(),
                          p.at("score").get<double>()});
  }
  c.status = channel_status_from_string(j.at("status").get<std::string>());
  c.created_at = j.at("created_at").get<std::int64_t>();
  return c;
}

std::string channel_content_id(const TopicTitle& title,
                               std::vector<std::string> product_ids) {
  std::sort(product_ids.begin(), product_ids.end());
  std::uint64_t h = fnv1a(title.serialize());
  for (const auto& id : product_ids) {
    h = fnv1a("\n", h);
    h = fnv1a(id, h);
  }
  std::ostringstream out;
  out << "ch-" << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

json RejectedCluster::to_json() const {
  return {{"cluster", cluster.to_json()},
          {"reason", reason},
          {"best_coherence", best_coherence},
          {"surviving_products", surviving_products}};
}

namespace {

using Outcome = std::variant<Channel, RejectedCluster>;

Outcome assemble_one(const Cluster& cluster, const CoherenceScorer& coherence,
                     const CorrelationScorer& correlation,
                     const std::map<std::string, const Product*>& by_id,
                     const QcConfig& config, std::int64_t created_at) {
  Channel ch;
  std::set<std::string> seen;
  const ScoredTitle* best = nullptr;
  for (const auto& t : cluster.title_candidates) {
    if (!seen.insert(t.serialize()).second) continue;
    ch.title_candidates.push_back({t, coherence.score(t)});
  }
  for (const auto& c : ch.title_candidates) {
    if (!best || c.score > best->score ||
        (c.score == best->score && c.title.serialize() < best->title.serialize())) {
      best = &c;
    }
  }
  const double best_score = best ? best->score : 0.0;
  if (!best || best_score < config.coherence_threshold) {
    return RejectedCluster{cluster, "incoherent", best_score, 0};
  }
  ch.title = best->title;
  std::vector<std::string> ids;
  for (const auto& id : cluster.member_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw ValidationError("cluster references unknown product '" + id + "'");
    }
    const double s = correlation.score(*it->second, ch.title);
    if (s < config.correlation_threshold) continue;
    ch.products.push_back({id, s});
    ids.push_back(id);
  }
  if (ch.products.empty() || ch.products.size() < config.min_products) {
    return RejectedCluster{cluster, "too_few_products", best_score,
                           ch.products.size()};
  }
  ch.channel_id = channel_content_id(ch.title, ids);
  ch.status = ChannelStatus::kPending;
  ch.created_at = created_at;
  return ch;
}

}  // namespace

AssemblyResult assemble_channels(const std::vector<Cluster>& clusters,
                                 const CoherenceScorer& coherence,
                                 const CorrelationScorer& correlation,
                                 const std::vector<Product>& catalog,
                                 const QcConfig& config,
                                 std::int64_t created_at) {
  std::map<std::string, const Product*> by_id;
  for (const auto& p : catalog) by_id[p.id] = &p;

  std::vector<std::optional<Outcome>> outcomes(clusters.size());
  std::vector<std::exception_ptr> errors(clusters.size());
  const std::size_t workers = std::clamp<std::size_t>(
      std::thread::hardware_concurrency(), 1, std::max<std::size_t>(clusters.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < clusters.size(); i += workers) {
          try {
            outcomes[i] = assemble_one(clusters[i], coherence, correlation, by_id,
                                       config, created_at);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  AssemblyResult result;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    if (auto* ch = std::get_if<Channel>(&*outcomes[i])) {
      result.channels.push_back(std::move(*ch));
    } else {
      result.rejected.push_back(std::get<RejectedCluster>(std::move(*outcomes[i])));
    }
  }
  return result;
}

}  // namespace estc
