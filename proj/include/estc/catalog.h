#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace estc {

struct Attribute {
  std::string key;
  std::string value;

  bool operator==(const Attribute&) const = default;
};

// Coarse audience profile used by the correlation model. Codes are strings
// drawn from a ProfileVocabulary.
struct ProfileFeatures {
  std::string age = "unknown";
  std::string gender = "unknown";
  std::string season = "unknown";

  bool operator==(const ProfileFeatures&) const = default;
};

// Closed code sets per profile field. Every field carries an "unknown" code.
struct ProfileVocabulary {
  std::vector<std::string> age{"unknown", "baby", "child", "adult", "senior"};
  std::vector<std::string> gender{"unknown", "female", "male"};
  std::vector<std::string> season{"unknown", "spring", "summer", "autumn",
                                  "winter"};

  std::size_t size() const { return age.size() + gender.size() + season.size(); }

  // Indices of the three active one-hot slots, in [0, size()).
  std::vector<std::size_t> one_hot(const ProfileFeatures& p) const;

  // Throws ValidationError naming the field and value on unknown codes.
  void validate(const ProfileFeatures& p) const;

  static ProfileVocabulary from_json(const nlohmann::json& j);
};

struct Product {
  std::string id;
  std::string title;
  std::vector<Attribute> attributes;
  std::string ocr_text;
  ProfileFeatures profile;
  std::optional<std::string> copywriting;

  bool operator==(const Product&) const = default;
};

enum class TitleSource { kHuman, kMined, kGenerated };

std::string_view to_string(TitleSource s);
TitleSource title_source_from_string(std::string_view s);

// Two short scene phrases. Serialized as "phrase_a @ phrase_b".
struct TopicTitle {
  std::string phrase_a;
  std::string phrase_b;
  TitleSource source = TitleSource::kHuman;

  std::string serialize() const;
  // Splits at the first '@' and trims both sides; a string without '@'
  // becomes phrase_a with an empty phrase_b.
  static TopicTitle parse(std::string_view text,
                          TitleSource source = TitleSource::kGenerated);

  // Same phrases, ignoring the source tag.
  bool same_text(const TopicTitle& other) const {
    return phrase_a == other.phrase_a && phrase_b == other.phrase_b;
  }
  bool operator==(const TopicTitle&) const = default;
};

enum class PairOrigin { kOnlinePositive, kSynthesizedNegative, kAugmented };

std::string_view to_string(PairOrigin o);

struct LabeledPair {
  std::string product_id;
  TopicTitle title;
  int label = 1;
  PairOrigin origin = PairOrigin::kOnlinePositive;

  bool operator==(const LabeledPair&) const = default;
};

enum class PretrainTask { kConsistency, kReorder };

struct PretrainExample {
  PretrainTask task;
  std::string input_text;
  // Binary label for consistency examples, original text for reorder ones.
  std::variant<int, std::string> target;

  nlohmann::json to_json() const;
};

// Separator between the title and the attribute sequence of a consistency
// example.
inline constexpr std::string_view kPairSeparator = " [SEP] ";

std::string trim(std::string_view s);

Product product_from_json(const nlohmann::json& j,
                          const ProfileVocabulary& vocab = {});
nlohmann::json product_to_json(const Product& p);

// One JSON object per line. Blank lines are skipped. Errors name the
// 1-based line number.
std::vector<Product> load_catalog(const std::filesystem::path& path,
                                  const ProfileVocabulary& vocab = {});
std::vector<Product> parse_catalog(std::string_view text,
                                   const ProfileVocabulary& vocab = {});

std::vector<LabeledPair> load_topics(const std::filesystem::path& path,
                                     const std::vector<Product>& catalog);
std::vector<LabeledPair> parse_topics(std::string_view text,
                                      const std::vector<Product>& catalog);
nlohmann::json topic_record_to_json(const LabeledPair& pair);
void write_topics(const std::filesystem::path& path,
                  const std::vector<LabeledPair>& pairs);

// "key:value" pairs joined by single spaces.
std::string join_attributes(const std::vector<Attribute>& attributes);

// Positive: own attributes in seeded random order paired with the title.
// Negative: attributes of a different product chosen uniformly. Products
// without attributes are skipped.
std::vector<PretrainExample> build_consistency_corpus(
    const std::vector<Product>& products, std::uint64_t rng_seed);

// Pieces of the copywriting split at , . ， and 。 with surrounding
// whitespace trimmed and empty pieces dropped.
std::vector<std::string> split_copywriting(std::string_view text);

std::vector<PretrainExample> build_reorder_corpus(
    const std::vector<Product>& products, std::uint64_t rng_seed);

std::string read_file(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<nlohmann::json>& records);

}  // namespace estc
