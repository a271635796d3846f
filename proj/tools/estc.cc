// estc: command-line front end for the channel construction engine.

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "estc/augmentation.h"
#include "estc/catalog.h"
#include "estc/clustering.h"
#include "estc/errors.h"
#include "estc/pipeline.h"
#include "estc/random.h"
#include "estc/review_server.h"
#include "estc/store.h"
#include "estc/text_metrics.h"
#include "estc/topicgen.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace estc;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

struct Paths {
  std::string catalog, topics, store;
};

PipelineConfig load(const Globals& g, const Paths& p = {}) {
  PipelineConfig c = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (g.seed) c.seed = g.seed;
  if (!p.catalog.empty()) c.catalog = p.catalog;
  if (!p.topics.empty()) c.topics = p.topics;
  if (!p.store.empty()) c.store = p.store;
  return c;
}

void need(const fs::path& path, const char* what) {
  if (path.empty()) {
    throw ValidationError(std::string("no ") + what + " given (flag or config)");
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) out.push_back(line);
  }
  return out;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + " record " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

json title_record(const std::string& id, const TopicTitle& t) {
  return {{"product_id", id}, {"phrase_a", t.phrase_a}, {"phrase_b", t.phrase_b}};
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

ReviewServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-based topic channel construction engine"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON or key = value config file");
  app.add_option("--seed", g.seed, "Override the config seed");

  // ingest
  Paths ingest_paths;
  std::string pretrain_out;
  auto* ingest = app.add_subcommand("ingest", "Validate inputs and emit pretraining corpora");
  ingest->add_option("--catalog", ingest_paths.catalog);
  ingest->add_option("--topics", ingest_paths.topics);
  ingest->add_option("--pretrain-out", pretrain_out, "Write pretrain.jsonl here");

  // augment
  Paths aug_paths;
  std::optional<double> aug_threshold;
  std::string aug_out;
  auto* augment = app.add_subcommand("augment", "Mine OCR text into weak training pairs");
  augment->add_option("--catalog", aug_paths.catalog);
  augment->add_option("--topics", aug_paths.topics);
  augment->add_option("--threshold", aug_threshold)->check(CLI::Range(0.0, 1.0));
  augment->add_option("--out", aug_out)->required();

  // generate
  Paths gen_paths;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Generate one title per product");
  generate->add_option("--catalog", gen_paths.catalog);
  generate->add_option("--topics", gen_paths.topics);
  generate->add_option("--out", gen_out)->required();

  // cluster
  std::string cl_titles, cl_out;
  std::optional<double> cl_threshold;
  std::optional<std::string> cl_linkage;
  auto* cluster = app.add_subcommand("cluster", "Group products by generated title");
  cluster->add_option("--titles", cl_titles, "Output of generate")->required();
  cluster->add_option("--out", cl_out)->required();
  cluster->add_option("--threshold", cl_threshold);
  cluster->add_option("--linkage", cl_linkage)
      ->check(CLI::IsMember({"average", "complete", "single"}));

  // qc
  Paths qc_paths;
  std::string qc_clusters, qc_out, qc_rejected;
  auto* qc = app.add_subcommand("qc", "Score clusters into pending channels");
  qc->add_option("--catalog", qc_paths.catalog);
  qc->add_option("--topics", qc_paths.topics);
  qc->add_option("--clusters", qc_clusters)->required();
  qc->add_option("--out", qc_out)->required();
  qc->add_option("--rejected", qc_rejected, "Rejection report (default <out>.rejected.jsonl)");

  // run
  Paths run_paths;
  std::optional<std::int64_t> fixed_time;
  auto* run = app.add_subcommand("run", "Run the full pipeline into the channel store");
  run->add_option("--catalog", run_paths.catalog);
  run->add_option("--topics", run_paths.topics);
  run->add_option("--store", run_paths.store);
  run->add_option("--fixed-time", fixed_time, "Freeze the clock (ms since epoch)");

  // serve
  Paths serve_paths;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  std::string export_path;
  auto* serve = app.add_subcommand("serve", "Serve the review API");
  serve->add_option("--store", serve_paths.store);
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--static", static_dir, "Directory of UI assets");
  serve->add_option("--export", export_path, "Write channels.jsonl and exit");

  // eval-generation
  std::string hyp, ref, train;
  auto* evalgen = app.add_subcommand("eval-generation", "BLEU, ROUGE, METEOR and DR");
  evalgen->add_option("--hyp", hyp)->required()->check(CLI::ExistingFile);
  evalgen->add_option("--ref", ref)->required()->check(CLI::ExistingFile);
  evalgen->add_option("--train", train, "Training titles for DR")->check(CLI::ExistingFile);

  // eval-clustering
  std::string emb_file, labels_file, method = "agnes";
  std::optional<double> ec_threshold;
  std::optional<std::size_t> ec_k;
  auto* evalcl = app.add_subcommand("eval-clustering", "Silhouette and F-measure");
  evalcl->add_option("--embeddings", emb_file)->required()->check(CLI::ExistingFile);
  evalcl->add_option("--labels", labels_file)->required()->check(CLI::ExistingFile);
  evalcl->add_option("--method", method)->check(CLI::IsMember({"agnes", "kmeans"}));
  evalcl->add_option("--threshold", ec_threshold);
  evalcl->add_option("--k", ec_k, "Cluster count for kmeans (default: group count)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      auto c = load(g, ingest_paths);
      need(c.catalog, "catalog");
      const auto catalog = load_catalog(c.catalog, c.profile_vocab);
      json out{{"products", catalog.size()}};
      if (!c.topics.empty()) out["topics"] = load_topics(c.topics, catalog).size();
      if (!pretrain_out.empty()) {
        const auto seed = c.require_seed();
        std::vector<json> records;
        for (const auto& e : build_consistency_corpus(catalog, derive_seed(seed, "consistency"))) {
          records.push_back(e.to_json());
        }
        out["consistency_examples"] = records.size();
        const auto reorder = build_reorder_corpus(catalog, derive_seed(seed, "reorder"));
        for (const auto& e : reorder) records.push_back(e.to_json());
        out["reorder_examples"] = reorder.size();
        write_jsonl(pretrain_out, records);
      }
      print(out);
    } else if (*augment) {
      auto c = load(g, aug_paths);
      if (aug_threshold) c.augmentation_threshold = *aug_threshold;
      c.augment = true;
      need(c.catalog, "catalog");
      need(c.topics, "topics");
      const auto catalog = load_catalog(c.catalog, c.profile_vocab);
      const auto topics = load_topics(c.topics, catalog);
      const auto encoder = fit_base_encoder(c, vocabulary_corpus(catalog, topics));
      auto outcome = run_augmentation(c, catalog, topics, encoder);
      write_topics(aug_out, outcome.topics);
      auto report = outcome.report.to_json();
      report.erase("promoted_pairs");
      print(report);
    } else if (*generate) {
      auto c = load(g, gen_paths);
      need(c.catalog, "catalog");
      const auto catalog = load_catalog(c.catalog, c.profile_vocab);
      std::vector<LabeledPair> topics;
      if (!c.topics.empty()) topics = load_topics(c.topics, catalog);
      const auto encoder = fit_base_encoder(c, vocabulary_corpus(catalog, topics));
      const auto generator = make_generator(c, catalog, topics, encoder);
      const auto titles = generator->generate_all(catalog);
      std::vector<json> records;
      for (std::size_t i = 0; i < catalog.size(); ++i) {
        records.push_back(title_record(catalog[i].id, titles[i]));
      }
      write_jsonl(gen_out, records);
      json out{{"generated", titles.size()}, {"generator", generator->name()}};
      if (!topics.empty()) out["dr"] = difference_rate(titles, positive_titles(topics));
      print(out);
    } else if (*cluster) {
      auto c = load(g);
      if (cl_threshold) c.agnes_threshold = *cl_threshold;
      if (cl_linkage) c.linkage = linkage_from_string(*cl_linkage);
      std::vector<TitledItem> items;
      std::vector<std::string> texts;
      for (const auto& r : read_jsonl(cl_titles)) {
        TopicTitle t{r.at("phrase_a").get<std::string>(), r.value("phrase_b", ""),
                     TitleSource::kGenerated};
        texts.push_back(t.serialize());
        items.push_back({r.at("product_id").get<std::string>(), std::move(t)});
      }
      std::set<std::string> distinct(texts.begin(), texts.end());
      const auto encoder = fit_cluster_encoder(
          c, texts, std::vector<std::string>(distinct.begin(), distinct.end()));
      const auto clusters = cluster_titles(items, *encoder, c.agnes_threshold, c.linkage);
      std::vector<json> records;
      for (const auto& cl : clusters) records.push_back(cl.to_json());
      write_jsonl(cl_out, records);
      print({{"items", items.size()}, {"clusters", clusters.size()}});
    } else if (*qc) {
      auto c = load(g, qc_paths);
      need(c.catalog, "catalog");
      need(c.topics, "topics");
      const auto catalog = load_catalog(c.catalog, c.profile_vocab);
      const auto topics = load_topics(c.topics, catalog);
      const auto encoder = fit_base_encoder(c, vocabulary_corpus(catalog, topics));
      const auto models = train_qc_models(c, catalog, topics, encoder);
      std::vector<Cluster> clusters;
      for (const auto& r : read_jsonl(qc_clusters)) clusters.push_back(Cluster::from_json(r));
      const auto result = assemble_channels(clusters, models.coherence, models.correlation,
                                            catalog, c.qc, SystemClock().now_ms());
      std::vector<json> channels, rejected;
      for (const auto& ch : result.channels) channels.push_back(ch.to_json());
      for (const auto& r : result.rejected) rejected.push_back(r.to_json());
      write_jsonl(qc_out, channels);
      write_jsonl(qc_rejected.empty() ? qc_out + ".rejected.jsonl" : qc_rejected, rejected);
      print({{"channels", channels.size()}, {"rejected", rejected.size()}});
    } else if (*run) {
      auto c = load(g, run_paths);
      std::unique_ptr<Clock> clock;
      if (fixed_time) {
        clock = std::make_unique<FixedClock>(*fixed_time);
      } else {
        clock = std::make_unique<SystemClock>();
      }
      print(run_pipeline(c, *clock).to_json());
    } else if (*serve) {
      auto c = load(g, serve_paths);
      need(c.store, "store");
      ChannelStore store(c.store, c.qc.min_products);
      if (!export_path.empty()) {
        store.export_channels(export_path);
        return 0;
      }
      ReviewServer server(store, static_dir.empty()
                                     ? std::nullopt
                                     : std::optional<fs::path>(static_dir));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving " << c.store << " on http://" << host << ':' << port << '\n';
      if (!server.listen(host, port)) {
        throw Error("cannot listen on " + host + ":" + std::to_string(port));
      }
    } else if (*evalgen) {
      const auto hyps = read_lines(hyp);
      const auto refs = read_lines(ref);
      auto out = evaluate_generation(hyps, refs).to_json();
      if (!train.empty()) {
        std::vector<TopicTitle> gen, seen;
        for (const auto& h : hyps) gen.push_back(TopicTitle::parse(h));
        for (const auto& t : read_lines(train)) seen.push_back(TopicTitle::parse(t));
        out["dr"] = difference_rate(gen, seen);
      }
      print(out);
    } else if (*evalcl) {
      std::vector<std::string> ids;
      std::vector<EmbeddingVector> vectors;
      std::size_t line_no = 0;
      for (const auto& line : read_lines(emb_file)) {
        ++line_no;
        std::istringstream in(line);
        std::string id;
        in >> id;
        EmbeddingVector v;
        double x;
        while (in >> x) v.values.push_back(x);
        if (!in.eof() || v.values.empty() ||
            (!vectors.empty() && v.dim() != vectors.front().dim())) {
          throw ParseError(emb_file + " line " + std::to_string(line_no) +
                           ": expected 'id v1 ... vd' with a consistent dimension");
        }
        ids.push_back(id);
        vectors.push_back(std::move(v));
      }
      std::map<std::string, std::string> reference;
      line_no = 0;
      for (const auto& line : read_lines(labels_file)) {
        ++line_no;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
          throw ParseError(labels_file + " line " + std::to_string(line_no) +
                           ": expected item_id<TAB>group_id");
        }
        reference[line.substr(0, tab)] = trim(line.substr(tab + 1));
      }
      std::vector<std::size_t> assignment;
      if (method == "agnes") {
        auto c = load(g);
        const double threshold = ec_threshold.value_or(c.agnes_threshold);
        assignment = agnes(vectors, threshold, c.linkage).assignment;
      } else {
        std::set<std::string> groups;
        for (const auto& [_, grp] : reference) groups.insert(grp);
        const std::size_t k = ec_k.value_or(groups.size());
        assignment = kmeans(vectors, k, g.seed.value_or(0)).assignment;
      }
      std::map<std::string, std::string> predicted;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        predicted[ids[i]] = std::to_string(assignment[i]);
      }
      auto eval = cluster_prf(predicted, reference);
      const auto n_clusters = std::set<std::size_t>(assignment.begin(), assignment.end()).size();
      if (n_clusters >= 2) {
        eval.silhouette = silhouette(vectors, assignment);
      }
      auto out = eval.to_json();
      out["method"] = method;
      out["clusters"] = n_clusters;
      print(out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
