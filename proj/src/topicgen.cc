#include "estc/topicgen.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "estc/errors.h"
#include "estc/text_metrics.h"
#include "httplib.h"

namespace estc {

using nlohmann::json;

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string replace_all(std::string s, std::string_view from,
                        std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

void append_part(std::string& out, std::string_view part) {
  auto t = trim(part);
  if (t.empty()) return;
  if (!out.empty()) out += ' ';
  out += t;
}

}  // namespace

GeneratorInput serialize_input(const Product& product, std::size_t max_length) {
  std::string text;
  append_part(text, product.title);
  for (const auto& a : product.attributes) append_part(text, a.key + ":" + a.value);
  append_part(text, product.ocr_text);
  return {truncate_codepoints(text, max_length), max_length};
}

std::string product_text(const Product& product) {
  std::string text;
  append_part(text, product.title);
  for (const auto& a : product.attributes) append_part(text, a.key + ":" + a.value);
  return text;
}

std::vector<TopicTitle> TopicGenerator::generate_all(
    const std::vector<Product>& products) const {
  std::vector<TopicTitle> out;
  out.reserve(products.size());
  for (const auto& p : products) out.push_back(generate(p));
  return out;
}

RetrievalGenerator::RetrievalGenerator(
    const std::vector<LabeledPair>& training_pairs,
    const std::vector<Product>& catalog, TextEncoder encoder)
    : encoder_(std::move(encoder)) {
  std::map<std::string, const Product*> by_id;
  for (const auto& p : catalog) by_id[p.id] = &p;
  std::set<std::string> added;
  for (const auto& pair : training_pairs) {
    if (pair.label != 1) continue;
    if (!added.insert(pair.product_id).second) continue;
    auto it = by_id.find(pair.product_id);
    if (it == by_id.end()) {
      throw ValidationError("training pair references unknown product '" +
                            pair.product_id + "'");
    }
    entries_.push_back({pair.product_id,
                        encoder_.encode(serialize_input(*it->second).text),
                        pair.title});
  }
  if (entries_.empty()) {
    throw ValidationError("retrieval generator needs training pairs");
  }
  std::sort(entries_.begin(), entries_.end(),
            [](const Entry& a, const Entry& b) { return a.product_id < b.product_id; });
}

TopicTitle RetrievalGenerator::generate(const Product& product) const {
  const auto query = encoder_.encode(serialize_input(product).text);
  const Entry* best = &entries_.front();
  double best_sim = cosine(query, best->vector);
  for (const auto& e : entries_) {
    const double s = cosine(query, e.vector);
    if (s > best_sim) {
      best_sim = s;
      best = &e;
    }
  }
  TopicTitle t = best->title;
  t.source = TitleSource::kGenerated;
  return t;
}

std::string category_token(const Product& product) {
  for (const auto& a : product.attributes) {
    if (lower_ascii(a.key) == "category" && !trim(a.value).empty()) {
      return trim(a.value);
    }
  }
  auto tokens = tokenize(product.title);
  return tokens.empty() ? product.title : tokens.front();
}

TemplateGenerator::TemplateGenerator(std::vector<TitleTemplate> templates)
    : templates_(std::move(templates)) {
  if (templates_.empty()) throw ValidationError("no title templates");
  bool has_catch_all = false;
  for (const auto& t : templates_) {
    if (t.pattern == "*") has_catch_all = true;
    if (trim(t.phrase_a).empty()) {
      throw ValidationError("template '" + t.pattern + "' has empty phrase_a");
    }
  }
  if (!has_catch_all) {
    throw ValidationError("title templates need a '*' catch-all pattern");
  }
}

std::vector<TitleTemplate> TemplateGenerator::load_templates(
    const std::filesystem::path& path) {
  std::vector<TitleTemplate> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto j = json::parse(line);
    out.push_back({j.at("pattern").get<std::string>(),
                   j.at("phrase_a").get<std::string>(),
                   j.value("phrase_b", "")});
  }
  return out;
}

TopicTitle TemplateGenerator::generate(const Product& product) const {
  const std::string title = lower_ascii(product.title);
  for (const auto& t : templates_) {
    bool match = t.pattern == "*";
    const std::string pattern = lower_ascii(t.pattern);
    if (!match) match = title.find(pattern) != std::string::npos;
    for (std::size_t k = 0; !match && k < product.attributes.size(); ++k) {
      match = lower_ascii(product.attributes[k].value).find(pattern) !=
              std::string::npos;
    }
    if (!match) continue;
    const std::string category = category_token(product);
    return {trim(replace_all(t.phrase_a, "{category}", category)),
            trim(replace_all(t.phrase_b, "{category}", category)),
            TitleSource::kGenerated};
  }
  // Unreachable: the constructor guarantees a catch-all.
  throw ValidationError("no template matched");
}

TopicTitle remote_generate(const GeneratorInput& input,
                           const RemoteOptions& options) {
  const auto& url = options.endpoint;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("endpoint must be an absolute URL: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path =
      path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
      options.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  json body{{"input", input.text},
            {"beam_size", options.beam_size},
            {"max_output_length", options.max_output}};
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    throw TransportError("request to " + url + " failed: " +
                         httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("generator returned HTTP " +
                         std::to_string(res->status));
  }
  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed generator reply: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("phrase_a") ||
      !reply.at("phrase_a").is_string() ||
      (reply.contains("phrase_b") && !reply.at("phrase_b").is_string())) {
    throw TransportError("generator reply lacks string phrase_a/phrase_b");
  }
  TopicTitle title{trim(reply.at("phrase_a").get<std::string>()),
                   trim(reply.value("phrase_b", "")), TitleSource::kGenerated};
  if (title.phrase_a.empty()) {
    throw ValidationError("generator returned an empty phrase_a");
  }
  const std::size_t length =
      tokenize(title.phrase_a).size() + tokenize(title.phrase_b).size();
  if (length > options.max_output) {
    throw ValidationError("generated title has " + std::to_string(length) +
                          " tokens, limit " + std::to_string(options.max_output));
  }
  return title;
}

RemoteGenerator::RemoteGenerator(RemoteOptions options)
    : options_(std::move(options)) {
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

TopicTitle RemoteGenerator::generate(const Product& product) const {
  return remote_generate(serialize_input(product, options_.max_input), options_);
}

std::vector<TopicTitle> RemoteGenerator::generate_all(
    const std::vector<Product>& products) const {
  std::vector<TopicTitle> out(products.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= products.size()) return;
      try {
        out[i] = generate(products[i]);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = products.size();
        return;
      }
    }
  };
  const std::size_t workers = std::min(options_.max_in_flight, products.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace estc
