#include "estc/catalog.h"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "estc/errors.h"
#include "estc/random.h"

namespace estc {

using nlohmann::json;

namespace {

std::size_t index_of(const std::vector<std::string>& codes,
                     const std::string& code, const char* field) {
  auto it = std::find(codes.begin(), codes.end(), code);
  if (it == codes.end()) {
    throw ValidationError(std::string("unknown profile code for ") + field +
                          ": '" + code + "'");
  }
  return static_cast<std::size_t>(it - codes.begin());
}

std::vector<std::string> string_list(const json& j, const char* key,
                                     std::vector<std::string> fallback) {
  if (!j.contains(key)) return fallback;
  auto codes = j.at(key).get<std::vector<std::string>>();
  if (std::find(codes.begin(), codes.end(), "unknown") == codes.end()) {
    codes.insert(codes.begin(), "unknown");
  }
  return codes;
}

const std::string& required_string(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ParseError(std::string("missing or non-string field '") + key + "'");
  }
  return j.at(key).get_ref<const std::string&>();
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) {
      f(line, line_no);
    }
    pos = end + 1;
  }
}

}  // namespace

std::vector<std::size_t> ProfileVocabulary::one_hot(
    const ProfileFeatures& p) const {
  return {index_of(age, p.age, "age"),
          age.size() + index_of(gender, p.gender, "gender"),
          age.size() + gender.size() + index_of(season, p.season, "season")};
}

void ProfileVocabulary::validate(const ProfileFeatures& p) const {
  (void)one_hot(p);
}

ProfileVocabulary ProfileVocabulary::from_json(const json& j) {
  ProfileVocabulary v;
  v.age = string_list(j, "age", v.age);
  v.gender = string_list(j, "gender", v.gender);
  v.season = string_list(j, "season", v.season);
  return v;
}

std::string_view to_string(TitleSource s) {
  switch (s) {
    case TitleSource::kHuman:
      return "human";
    case TitleSource::kMined:
      return "mined";
    case TitleSource::kGenerated:
      return "generated";
  }
  return "?";
}

TitleSource title_source_from_string(std::string_view s) {
  if (s == "human") return TitleSource::kHuman;
  if (s == "mined") return TitleSource::kMined;
  if (s == "generated") return TitleSource::kGenerated;
  throw ParseError("unknown title source '" + std::string(s) + "'");
}

std::string_view to_string(PairOrigin o) {
  switch (o) {
    case PairOrigin::kOnlinePositive:
      return "online_positive";
    case PairOrigin::kSynthesizedNegative:
      return "synthesized_negative";
    case PairOrigin::kAugmented:
      return "augmented";
  }
  return "?";
}

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::string TopicTitle::serialize() const {
  return phrase_a + " @ " + phrase_b;
}

TopicTitle TopicTitle::parse(std::string_view text, TitleSource source) {
  TopicTitle t;
  t.source = source;
  auto at = text.find('@');
  if (at == std::string_view::npos) {
    t.phrase_a = trim(text);
  } else {
    t.phrase_a = trim(text.substr(0, at));
    t.phrase_b = trim(text.substr(at + 1));
  }
  return t;
}

json PretrainExample::to_json() const {
  json j;
  j["task"] = task == PretrainTask::kConsistency ? "consistency" : "reorder";
  j["input"] = input_text;
  if (std::holds_alternative<int>(target)) {
    j["target"] = std::get<int>(target);
  } else {
    j["target"] = std::get<std::string>(target);
  }
  return j;
}

Product product_from_json(const json& j, const ProfileVocabulary& vocab) {
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  Product p;
  p.id = required_string(j, "id");
  p.title = required_string(j, "title");
  if (p.id.empty()) throw ParseError("empty product id");
  if (p.title.empty()) throw ParseError("empty title for product " + p.id);
  if (j.contains("attributes")) {
    for (const auto& a : j.at("attributes")) {
      Attribute attr{required_string(a, "k"), required_string(a, "v")};
      if (attr.key.empty()) {
        throw ParseError("empty attribute key in product " + p.id);
      }
      p.attributes.push_back(std::move(attr));
    }
  }
  if (j.contains("ocr_text")) p.ocr_text = required_string(j, "ocr_text");
  if (j.contains("profile")) {
    const auto& prof = j.at("profile");
    if (prof.contains("age")) p.profile.age = required_string(prof, "age");
    if (prof.contains("gender")) {
      p.profile.gender = required_string(prof, "gender");
    }
    if (prof.contains("season")) {
      p.profile.season = required_string(prof, "season");
    }
  }
  vocab.validate(p.profile);
  if (j.contains("copywriting") && !j.at("copywriting").is_null()) {
    p.copywriting = required_string(j, "copywriting");
  }
  return p;
}

json product_to_json(const Product& p) {
  json attrs = json::array();
  for (const auto& a : p.attributes) attrs.push_back({{"k", a.key}, {"v", a.value}});
  json j{{"id", p.id},
         {"title", p.title},
         {"attributes", attrs},
         {"ocr_text", p.ocr_text},
         {"profile",
          {{"age", p.profile.age},
           {"gender", p.profile.gender},
           {"season", p.profile.season}}}};
  if (p.copywriting) j["copywriting"] = *p.copywriting;
  return j;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

std::vector<Product> parse_catalog(std::string_view text,
                                   const ProfileVocabulary& vocab) {
  std::vector<Product> products;
  std::unordered_set<std::string> seen;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    Product p;
    try {
      p = product_from_json(json::parse(line), vocab);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(p.id).second) {
      throw ValidationError("duplicate product id '" + p.id + "' at line " +
                            std::to_string(line_no));
    }
    products.push_back(std::move(p));
  });
  return products;
}

std::vector<Product> load_catalog(const std::filesystem::path& path,
                                  const ProfileVocabulary& vocab) {
  return parse_catalog(read_file(path), vocab);
}

std::vector<LabeledPair> parse_topics(std::string_view text,
                                      const std::vector<Product>& catalog) {
  std::unordered_set<std::string> ids;
  for (const auto& p : catalog) ids.insert(p.id);
  std::vector<LabeledPair> pairs;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    LabeledPair pair;
    try {
      json j = json::parse(line);
      pair.product_id = required_string(j, "product_id");
      pair.title.phrase_a = trim(required_string(j, "phrase_a"));
      pair.title.phrase_b =
          j.contains("phrase_b") ? trim(required_string(j, "phrase_b")) : "";
      pair.title.source = j.contains("source")
                              ? title_source_from_string(
                                    required_string(j, "source"))
                              : TitleSource::kHuman;
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (pair.title.phrase_a.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty phrase_a");
    }
    if (pair.title.source == TitleSource::kGenerated) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": generated titles are not training topics");
    }
    if (!ids.contains(pair.product_id)) {
      throw ValidationError("dangling product_id '" + pair.product_id +
                            "' at line " + std::to_string(line_no));
    }
    pair.label = 1;
    pair.origin = pair.title.source == TitleSource::kHuman
                      ? PairOrigin::kOnlinePositive
                      : PairOrigin::kAugmented;
    pairs.push_back(std::move(pair));
  });
  return pairs;
}

std::vector<LabeledPair> load_topics(const std::filesystem::path& path,
                                     const std::vector<Product>& catalog) {
  return parse_topics(read_file(path), catalog);
}

json topic_record_to_json(const LabeledPair& pair) {
  return {{"product_id", pair.product_id},
          {"phrase_a", pair.title.phrase_a},
          {"phrase_b", pair.title.phrase_b},
          {"source", to_string(pair.title.source)}};
}

void write_topics(const std::filesystem::path& path,
                  const std::vector<LabeledPair>& pairs) {
  std::vector<json> records;
  records.reserve(pairs.size());
  for (const auto& p : pairs) records.push_back(topic_record_to_json(p));
  write_jsonl(path, records);
}

std::string join_attributes(const std::vector<Attribute>& attributes) {
  std::string out;
  for (const auto& a : attributes) {
    if (!out.empty()) out += ' ';
    out += a.key;
    out += ':';
    out += a.value;
  }
  return out;
}

std::vector<PretrainExample> build_consistency_corpus(
    const std::vector<Product>& products, std::uint64_t rng_seed) {
  if (products.size() < 2) {
    throw ValidationError(
        "consistency corpus needs at least 2 products for negatives");
  }
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < products.size(); ++i) {
    if (!products[i].attributes.empty()) eligible.push_back(i);
  }
  if (eligible.size() < 2) {
    throw ValidationError(
        "consistency corpus needs at least 2 products with attributes");
  }

  Rng rng(rng_seed);
  std::vector<PretrainExample> out;
  out.reserve(2 * eligible.size());
  for (std::size_t k = 0; k < eligible.size(); ++k) {
    const Product& p = products[eligible[k]];
    auto own = p.attributes;
    rng.shuffle(own);
    out.push_back({PretrainTask::kConsistency,
                   p.title + std::string(kPairSeparator) + join_attributes(own),
                   1});

    // Uniform over the other eligible products.
    std::size_t pick = rng.uniform_index(eligible.size() - 1);
    if (pick >= k) ++pick;
    auto other = products[eligible[pick]].attributes;
    rng.shuffle(other);
    out.push_back({PretrainTask::kConsistency,
                   p.title + std::string(kPairSeparator) +
                       join_attributes(other),
                   0});
  }
  return out;
}

std::vector<std::string> split_copywriting(std::string_view text) {
  static constexpr std::array<std::string_view, 4> kMarks{",", ".", "，",
                                                          "。"};
  std::vector<std::string> pieces;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t mark_len = 0;
    for (auto m : kMarks) {
      if (text.substr(i, m.size()) == m) {
        mark_len = m.size();
        break;
      }
    }
    if (mark_len == 0) {
      ++i;
      continue;
    }
    auto piece = trim(text.substr(start, i - start));
    if (!piece.empty()) pieces.push_back(std::move(piece));
    i += mark_len;
    start = i;
  }
  auto tail = trim(text.substr(start));
  if (!tail.empty()) pieces.push_back(std::move(tail));
  return pieces;
}

std::vector<PretrainExample> build_reorder_corpus(
    const std::vector<Product>& products, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  std::vector<PretrainExample> out;
  for (const auto& p : products) {
    if (!p.copywriting || p.copywriting->empty()) continue;
    auto pieces = split_copywriting(*p.copywriting);
    if (pieces.empty()) continue;
    rng.shuffle(pieces);
    std::string input;
    for (const auto& piece : pieces) {
      if (!input.empty()) input += ' ';
      input += piece;
    }
    out.push_back({PretrainTask::kReorder, std::move(input), *p.copywriting});
  }
  return out;
}

}  // namespace estc
