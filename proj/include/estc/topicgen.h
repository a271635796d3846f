#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "estc/catalog.h"
#include "estc/embedding.h"
#include "json.hpp"

namespace estc {

// Serialized product text fed to a generator: title, attribute pairs in
// catalog order, then OCR text, joined with single spaces and cut to
// max_length codepoints.
struct GeneratorInput {
  std::string text;
  std::size_t max_length = 120;
};

GeneratorInput serialize_input(const Product& product,
                               std::size_t max_length = 120);

// Title plus attribute pairs, without OCR text. Used as the product side of
// pair classifiers.
std::string product_text(const Product& product);

// Produces one scene title per product. Implementations must return titles
// with a nonempty phrase_a and source == kGenerated.
class TopicGenerator {
 public:
  virtual ~TopicGenerator() = default;
  virtual std::string name() const = 0;
  virtual TopicTitle generate(const Product& product) const = 0;

  // Default: sequential. Order of the result matches the input.
  virtual std::vector<TopicTitle> generate_all(
      const std::vector<Product>& products) const;
};

// Nearest training product by cosine similarity of serialized inputs; ties
// go to the smallest product id. Returns that product's first topic.
class RetrievalGenerator : public TopicGenerator {
 public:
  RetrievalGenerator(const std::vector<LabeledPair>& training_pairs,
                     const std::vector<Product>& catalog, TextEncoder encoder);

  std::string name() const override { return "retrieval"; }
  TopicTitle generate(const Product& product) const override;

 private:
  struct Entry {
    std::string product_id;
    EmbeddingVector vector;
    TopicTitle title;
  };
  TextEncoder encoder_;
  std::vector<Entry> entries_;  // sorted by product_id
};

struct TitleTemplate {
  // Case-insensitive substring matched against the title and attribute
  // values; "*" matches everything.
  std::string pattern;
  // "{category}" is replaced with the product's category token.
  std::string phrase_a;
  std::string phrase_b;
};

// Value of the "category" attribute if present, else the first title token.
std::string category_token(const Product& product);

class TemplateGenerator : public TopicGenerator {
 public:
  // Throws ValidationError if templates are empty or lack a "*" catch-all.
  explicit TemplateGenerator(std::vector<TitleTemplate> templates);

  static std::vector<TitleTemplate> load_templates(
      const std::filesystem::path& path);

  std::string name() const override { return "template"; }
  TopicTitle generate(const Product& product) const override;

 private:
  std::vector<TitleTemplate> templates_;
};

struct RemoteOptions {
  std::string endpoint;  // http://host:port/path
  std::chrono::milliseconds timeout{5000};
  int beam_size = 4;
  std::size_t max_output = 20;
  std::size_t max_input = 120;
  std::size_t max_in_flight = 8;
};

// POSTs {input, beam_size, max_output_length} and expects
// {phrase_a, phrase_b}. Network and HTTP failures raise TransportError;
// an empty phrase_a or an over-long title raises ValidationError.
TopicTitle remote_generate(const GeneratorInput& input,
                           const RemoteOptions& options);

class RemoteGenerator : public TopicGenerator {
 public:
  explicit RemoteGenerator(RemoteOptions options);

  std::string name() const override { return "remote"; }
  TopicTitle generate(const Product& product) const override;
  // At most max_in_flight concurrent requests.
  std::vector<TopicTitle> generate_all(
      const std::vector<Product>& products) const override;

 private:
  RemoteOptions options_;
};

}  // namespace estc
