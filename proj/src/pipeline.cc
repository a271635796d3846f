#include "estc/pipeline.h"

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "estc/errors.h"
#include "estc/random.h"
#include "estc/text_metrics.h"

namespace estc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "seed", "catalog", "topics", "store", "models", "templates", "generator",
      "remote_endpoint", "remote_timeout_ms", "remote_beam_size",
      "remote_max_output", "remote_max_input", "remote_max_in_flight",
      "vocab_max_dim", "char_bigrams", "refine", "refine_dim",
      "refine_temperature", "refine_dropout", "refine_epochs",
      "refine_batch_size", "refine_learning_rate", "agnes_threshold", "linkage",
      "coherence_threshold", "correlation_threshold", "min_products",
      "qc_epochs", "qc_learning_rate", "augment", "augmentation_threshold",
      "profile_vocab"};
  return keys;
}

fs::path resolve(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key)) return {};
  fs::path p = j.at(key).get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void check_unit_interval(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ValidationError(std::string(name) + " must lie in [0, 1]");
  }
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw ValidationError(std::string("config lacks '") + what + "'");
  if (!fs::exists(p)) {
    throw ValidationError(std::string(what) + " file not found: " + p.string());
  }
}

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& out) : out_(out) {}
  void mark(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    out_[stage] = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
  }

 private:
  std::map<std::string, double>& out_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) throw ValidationError("config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known_keys().contains(key)) {
      throw ValidationError("unknown config key '" + key + "'");
    }
  }
  PipelineConfig c;
  try {
    if (j.contains("seed")) {
      const auto& s = j.at("seed");
      if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
        throw ValidationError("seed must be a non-negative integer");
      }
      c.seed = s.get<std::uint64_t>();
    }
    c.catalog = resolve(j, "catalog", base);
    c.topics = resolve(j, "topics", base);
    c.store = resolve(j, "store", base);
    c.models = resolve(j, "models", base);
    c.templates = resolve(j, "templates", base);
    c.generator = j.value("generator", c.generator);
    c.remote.endpoint = j.value("remote_endpoint", c.remote.endpoint);
    c.remote.timeout =
        std::chrono::milliseconds(j.value("remote_timeout_ms", c.remote.timeout.count()));
    c.remote.beam_size = j.value("remote_beam_size", c.remote.beam_size);
    c.remote.max_output = j.value("remote_max_output", c.remote.max_output);
    c.remote.max_input = j.value("remote_max_input", c.remote.max_input);
    c.remote.max_in_flight = j.value("remote_max_in_flight", c.remote.max_in_flight);
    c.vocab_max_dim = j.value("vocab_max_dim", c.vocab_max_dim);
    c.char_bigrams = j.value("char_bigrams", c.char_bigrams);
    c.refine = j.value("refine", c.refine);
    c.refinement.dim_out = j.value("refine_dim", c.refinement.dim_out);
    c.refinement.temperature = j.value("refine_temperature", c.refinement.temperature);
    c.refinement.dropout_rate = j.value("refine_dropout", c.refinement.dropout_rate);
    c.refinement.epochs = j.value("refine_epochs", c.refinement.epochs);
    c.refinement.batch_size = j.value("refine_batch_size", c.refinement.batch_size);
    c.refinement.learning_rate =
        j.value("refine_learning_rate", c.refinement.learning_rate);
    c.agnes_threshold = j.value("agnes_threshold", c.agnes_threshold);
    c.linkage = linkage_from_string(j.value("linkage", std::string("average")));
    c.qc.coherence_threshold = j.value("coherence_threshold", c.qc.coherence_threshold);
    c.qc.correlation_threshold =
        j.value("correlation_threshold", c.qc.correlation_threshold);
    c.qc.min_products = j.value("min_products", c.qc.min_products);
    c.qc_epochs = j.value("qc_epochs", c.qc_epochs);
    c.qc_learning_rate = j.value("qc_learning_rate", c.qc_learning_rate);
    c.augment = j.value("augment", c.augment);
    c.augmentation_threshold = j.value("augmentation_threshold", c.augmentation_threshold);
    if (j.contains("profile_vocab")) {
      c.profile_vocab = ProfileVocabulary::from_json(j.at("profile_vocab"));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }
  if (c.generator != "retrieval" && c.generator != "template" &&
      c.generator != "remote") {
    throw ValidationError("generator must be retrieval, template or remote");
  }
  if (c.generator == "remote" && c.remote.endpoint.empty()) {
    throw ValidationError("remote generator needs remote_endpoint");
  }
  if (!(c.agnes_threshold >= 0.0 && c.agnes_threshold <= 2.0)) {
    throw ValidationError("agnes_threshold must lie in [0, 2]");
  }
  check_unit_interval(c.qc.coherence_threshold, "coherence_threshold");
  check_unit_interval(c.qc.correlation_threshold, "correlation_threshold");
  check_unit_interval(c.augmentation_threshold, "augmentation_threshold");
  if (c.qc.min_products == 0) throw ValidationError("min_products must be positive");
  if (c.qc_epochs < 0 || !(c.qc_learning_rate > 0)) {
    throw ValidationError("qc_epochs must be >= 0 and qc_learning_rate > 0");
  }
  return c;
}

json PipelineConfig::to_json() const {
  json j{{"catalog", catalog.string()},
         {"topics", topics.string()},
         {"store", store.string()},
         {"models", models.string()},
         {"templates", templates.string()},
         {"generator", generator},
         {"remote_endpoint", remote.endpoint},
         {"remote_timeout_ms", remote.timeout.count()},
         {"remote_beam_size", remote.beam_size},
         {"remote_max_output", remote.max_output},
         {"remote_max_input", remote.max_input},
         {"remote_max_in_flight", remote.max_in_flight},
         {"vocab_max_dim", vocab_max_dim},
         {"char_bigrams", char_bigrams},
         {"refine", refine},
         {"refine_dim", refinement.dim_out},
         {"refine_temperature", refinement.temperature},
         {"refine_dropout", refinement.dropout_rate},
         {"refine_epochs", refinement.epochs},
         {"refine_batch_size", refinement.batch_size},
         {"refine_learning_rate", refinement.learning_rate},
         {"agnes_threshold", agnes_threshold},
         {"linkage", std::string(to_string(linkage))},
         {"coherence_threshold", qc.coherence_threshold},
         {"correlation_threshold", qc.correlation_threshold},
         {"min_products", qc.min_products},
         {"qc_epochs", qc_epochs},
         {"qc_learning_rate", qc_learning_rate},
         {"augment", augment},
         {"augmentation_threshold", augmentation_threshold}};
  if (seed) j["seed"] = *seed;
  return j;
}

std::uint64_t PipelineConfig::require_seed() const {
  if (!seed) throw ValidationError("config must set 'seed' (or pass --seed)");
  return *seed;
}

TrainConfig PipelineConfig::train_config(std::string_view stage) const {
  TrainConfig t;
  t.seed = derive_seed(require_seed(), stage);
  t.epochs = qc_epochs;
  t.learning_rate = qc_learning_rate;
  return t;
}

json parse_key_value(std::string_view text) {
  json out = json::object();
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto where = "config line " + std::to_string(line_no);
    if (line.front() == '[') throw ParseError(where + ": sections are not supported");
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where + ": empty key");
    if (!value.empty() && value.front() == '"') {
      const auto close = value.find('"', 1);
      if (close == std::string::npos) throw ParseError(where + ": unterminated string");
      out[key] = value.substr(1, close - 1);
      continue;
    }
    if (auto hash = value.find(" #"); hash != std::string::npos) {
      value = trim(value.substr(0, hash));
    }
    json parsed = json::parse(value, nullptr, false);
    if (!parsed.is_discarded() && (parsed.is_number() || parsed.is_boolean() ||
                                   parsed.is_object())) {
      out[key] = parsed;
    } else {
      out[key] = value;
    }
  }
  return out;
}

PipelineConfig load_config(const fs::path& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  json j;
  if (first != std::string::npos && text[first] == '{') {
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  } else {
    j = parse_key_value(text);
  }
  return PipelineConfig::from_json(j, path.parent_path());
}

std::vector<std::string> vocabulary_corpus(const std::vector<Product>& catalog,
                                           const std::vector<LabeledPair>& topics) {
  std::vector<std::string> corpus;
  for (const auto& t : topics) corpus.push_back(t.title.serialize());
  for (const auto& p : catalog) {
    corpus.push_back(product_text(p));
    if (!trim(p.ocr_text).empty()) corpus.push_back(p.ocr_text);
  }
  return corpus;
}

std::shared_ptr<const TextEncoder> fit_base_encoder(
    const PipelineConfig& config, const std::vector<std::string>& corpus) {
  return std::make_shared<const TextEncoder>(
      fit_vocabulary(corpus, config.vocab_max_dim, config.char_bigrams));
}

std::shared_ptr<const TextEncoder> fit_cluster_encoder(
    const PipelineConfig& config, const std::vector<std::string>& corpus,
    const std::vector<std::string>& titles) {
  auto vocab = fit_vocabulary(corpus, config.vocab_max_dim, config.char_bigrams);
  if (!config.refine) return std::make_shared<const TextEncoder>(std::move(vocab));
  auto rc = config.refinement;
  rc.seed = derive_seed(config.require_seed(), "refine");
  auto projection = train_refinement(titles, vocab, rc);
  return std::make_shared<const TextEncoder>(std::move(vocab), std::move(projection));
}

AugmentationOutcome run_augmentation(const PipelineConfig& config,
                                     const std::vector<Product>& catalog,
                                     const std::vector<LabeledPair>& topics,
                                     std::shared_ptr<const TextEncoder> encoder) {
  AugmentationOutcome out;
  out.topics = topics;
  out.report.threshold = config.augmentation_threshold;
  if (!config.augment) return out;
  auto sets = build_augmentation_sets(catalog, topics);
  if (sets.positives.empty() || sets.candidates.empty()) return out;
  out.model = train_augment_classifier(sets.positives, sets.candidates,
                                       std::move(encoder),
                                       config.train_config("augment"),
                                       config.profile_vocab);
  out.report = mine_candidates(*out.model, sets.candidates,
                               config.augmentation_threshold);
  out.topics = merge_promoted(topics, out.report.promoted_pairs);
  return out;
}

std::unique_ptr<TopicGenerator> make_generator(
    const PipelineConfig& config, const std::vector<Product>& catalog,
    const std::vector<LabeledPair>& topics,
    std::shared_ptr<const TextEncoder> encoder) {
  if (config.generator == "retrieval") {
    return std::make_unique<RetrievalGenerator>(topics, catalog, *encoder);
  }
  if (config.generator == "template") {
    require_file(config.templates, "templates");
    return std::make_unique<TemplateGenerator>(
        TemplateGenerator::load_templates(config.templates));
  }
  auto remote = config.remote;
  return std::make_unique<RemoteGenerator>(std::move(remote));
}

std::vector<TopicTitle> positive_titles(const std::vector<LabeledPair>& topics) {
  std::vector<TopicTitle> out;
  for (const auto& t : topics) {
    if (t.label == 1) out.push_back(t.title);
  }
  return out;
}

QcModels train_qc_models(const PipelineConfig& config,
                         const std::vector<Product>& catalog,
                         const std::vector<LabeledPair>& topics,
                         std::shared_ptr<const TextEncoder> encoder) {
  auto coherence = train_coherence(positive_titles(topics), encoder,
                                   config.train_config("coherence"));
  auto correlation = train_correlation(topics, catalog, encoder,
                                       config.train_config("correlation"),
                                       config.profile_vocab);
  return {std::move(coherence.model), std::move(correlation.model)};
}

json RunSummary::to_json() const {
  return {{"products", products},
          {"training_pairs", training_pairs},
          {"augmented_pairs", augmented_pairs},
          {"clusters", clusters},
          {"channels_created", channels_created},
          {"duplicate_channels", duplicate_channels},
          {"clusters_rejected", clusters_rejected},
          {"dr", dr},
          {"channel_ids", channel_ids},
          {"timings_ms", timings_ms}};
}

RunSummary run_pipeline(const PipelineConfig& config, const Clock& clock) {
  RunSummary summary;
  StageTimer timer(summary.timings_ms);
  config.require_seed();
  require_file(config.catalog, "catalog");
  require_file(config.topics, "topics");
  if (config.store.empty()) throw ValidationError("config lacks 'store'");

  const auto catalog = load_catalog(config.catalog, config.profile_vocab);
  if (catalog.empty()) throw ValidationError("catalog is empty");
  const auto topics = load_topics(config.topics, catalog);
  summary.products = catalog.size();
  timer.mark("load");

  const auto corpus = vocabulary_corpus(catalog, topics);
  const auto base = fit_base_encoder(config, corpus);
  auto augmentation = run_augmentation(config, catalog, topics, base);
  summary.augmented_pairs = augmentation.report.promoted;
  summary.training_pairs = augmentation.topics.size();
  timer.mark("augment");

  std::set<std::string> title_set;
  for (const auto& t : positive_titles(augmentation.topics)) title_set.insert(t.serialize());
  const std::vector<std::string> titles(title_set.begin(), title_set.end());
  const auto cluster_encoder = fit_cluster_encoder(config, corpus, titles);
  const auto qc = train_qc_models(config, catalog, augmentation.topics, base);
  timer.mark("train");

  const auto generator = make_generator(config, catalog, augmentation.topics, base);
  const auto generated = generator->generate_all(catalog);
  summary.dr = difference_rate(generated, positive_titles(augmentation.topics));
  timer.mark("generate");

  std::vector<TitledItem> items;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    items.push_back({catalog[i].id, generated[i]});
  }
  const auto clusters =
      cluster_titles(items, *cluster_encoder, config.agnes_threshold, config.linkage);
  summary.clusters = clusters.size();
  timer.mark("cluster");

  auto assembled = assemble_channels(clusters, qc.coherence, qc.correlation, catalog,
                                     config.qc, clock.now_ms());
  summary.clusters_rejected = assembled.rejected.size();
  timer.mark("qc");

  ChannelStore store(config.store, config.qc.min_products,
                     std::shared_ptr<const Clock>(&clock, [](const Clock*) {}));
  const auto added = store.add_channels(assembled.channels);
  summary.channels_created = added.size();
  summary.duplicate_channels = assembled.channels.size() - added.size();
  for (const auto& c : added) summary.channel_ids.push_back(c.channel_id);
  timer.mark("store");

  if (!config.models.empty()) {
    fs::create_directories(config.models);
    write_jsonl(config.models / "vocabulary.json", {base->vocab().to_json()});
    if (cluster_encoder->projection()) {
      cluster_encoder->projection()->save(config.models / "refinement.json");
    }
    qc.coherence.classifier().save(config.models / "coherence.json");
    qc.correlation.classifier().save(config.models / "correlation.json");
    if (augmentation.model) {
      augmentation.model->classifier().save(config.models / "augmentation.json");
    }
  }
  return summary;
}

}  // namespace estc
