#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "estc/catalog.h"
#include "json.hpp"

namespace estc {

using TokenSequence = std::vector<std::string>;

// UTF-8 helpers. Invalid bytes decode as U+FFFD and advance by one byte.
std::vector<char32_t> decode_utf8(std::string_view text);
std::string encode_utf8(char32_t cp);
std::size_t codepoint_count(std::string_view text);
// Prefix of at most max_codepoints codepoints, cut on a codepoint boundary.
std::string truncate_codepoints(std::string_view text,
                                std::size_t max_codepoints);

bool is_cjk(char32_t cp);

// CJK ideographs become single-character tokens. Maximal runs of other
// letters and digits become one lowercased token; a run directly followed by
// one CJK ideograph absorbs it ("T恤" -> "t恤"). Whitespace and punctuation
// are dropped. Fullwidth ASCII letters and digits are folded to ASCII.
TokenSequence tokenize(std::string_view text);

// Inverse of tokenize for display: single-ideograph neighbours are glued,
// everything else is space separated.
std::string detokenize(const TokenSequence& tokens);

// Corpus BLEU with uniform weights and brevity penalty computed on the
// summed lengths. In smoothed mode orders n >= 2 use (m+1)/(c+1).
double bleu(const std::vector<TokenSequence>& candidates,
            const std::vector<TokenSequence>& references, int max_n = 4,
            bool smoothed = false);

struct RougeScores {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

// F1 variants of ROUGE-1, ROUGE-2 and ROUGE-L.
RougeScores rouge(const TokenSequence& candidate,
                  const TokenSequence& reference);

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b);

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

// METEOR restricted to exact unigram matches.
double meteor_exact(const TokenSequence& candidate,
                    const TokenSequence& reference,
                    const MeteorParams& params = {});

// Percentage of distinct generated titles (by trimmed "a @ b" text) that do
// not occur in the training set.
double difference_rate(const std::vector<TopicTitle>& generated,
                       const std::vector<TopicTitle>& training);

struct MetricReport {
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double meteor_exact = 0.0;
  std::size_t n_pairs = 0;

  nlohmann::json to_json() const;
};

// Corpus BLEU plus per-pair ROUGE/METEOR averaged over pairs.
MetricReport evaluate_generation(const std::vector<std::string>& hypotheses,
                                 const std::vector<std::string>& references);

}  // namespace estc
