#include "estc/text_metrics.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "estc/errors.h"

namespace estc {

namespace {

bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') ||
           (cp >= 'A' && cp <= 'Z');
  }
  if (cp <= 0xBF || cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, symbols
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE10 && cp <= 0xFE6F) return false;  // vertical/small forms
  if (cp >= 0xFF00 && cp <= 0xFFEF) return false;  // remaining halfwidth
  if (cp == 0xFFFD) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;  // emoji
  return true;
}

char32_t fold(char32_t cp) {
  // Fullwidth digits and Latin letters map onto ASCII.
  if ((cp >= 0xFF10 && cp <= 0xFF19) || (cp >= 0xFF21 && cp <= 0xFF3A) ||
      (cp >= 0xFF41 && cp <= 0xFF5A)) {
    cp = cp - 0xFF00 + 0x20;
  }
  if (cp >= 'A' && cp <= 'Z') cp = cp - 'A' + 'a';
  return cp;
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const TokenSequence& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i,
                                      tokens.begin() + i + n)];
  }
  return counts;
}

double f1(double p, double r) {
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

double rouge_n(const TokenSequence& cand, const TokenSequence& ref,
               std::size_t n) {
  auto c = count_ngrams(cand, n);
  auto r = count_ngrams(ref, n);
  std::size_t c_total = cand.size() >= n ? cand.size() - n + 1 : 0;
  std::size_t r_total = ref.size() >= n ? ref.size() - n + 1 : 0;
  if (r_total == 0 || c_total == 0) {
    // Too short to hold an n-gram: agreement only if the texts coincide.
    return (r_total == 0 && c_total == 0 && !cand.empty() && cand == ref) ? 1.0
                                                                          : 0.0;
  }
  std::size_t overlap = 0;
  for (const auto& [gram, count] : c) {
    auto it = r.find(gram);
    if (it != r.end()) overlap += std::min(count, it->second);
  }
  return f1(static_cast<double>(overlap) / c_total,
            static_cast<double>(overlap) / r_total);
}

std::string normalize_title(const TopicTitle& t) {
  return trim(t.phrase_a) + " @ " + trim(t.phrase_b);
}

}  // namespace

std::vector<char32_t> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c >> 5) == 0x6) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c >> 4) == 0xE) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c >> 3) == 0x1E) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len > 0 && i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc >> 6) != 0x2) {
        ok = false;
      } else {
        cp = (cp << 6) | (cc & 0x3F);
      }
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(char32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s += static_cast<char>(cp);
  } else if (cp < 0x800) {
    s += static_cast<char>(0xC0 | (cp >> 6));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    s += static_cast<char>(0xE0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    s += static_cast<char>(0xF0 | (cp >> 18));
    s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return s;
}

std::size_t codepoint_count(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string truncate_codepoints(std::string_view text,
                                std::size_t max_codepoints) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
      if (seen == max_codepoints) return std::string(text.substr(0, i));
      ++seen;
    }
  }
  return std::string(text);
}

bool is_cjk(char32_t cp) {
  return (cp >= 0x3400 && cp <= 0x4DBF) || (cp >= 0x4E00 && cp <= 0x9FFF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2FA1F);
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::string run;
  auto flush = [&] {
    if (!run.empty()) tokens.push_back(std::move(run));
    run.clear();
  };
  for (char32_t raw : decode_utf8(text)) {
    char32_t cp = fold(raw);
    if (is_cjk(cp)) {
      if (!run.empty()) {
        run += encode_utf8(cp);
        flush();
      } else {
        tokens.push_back(encode_utf8(cp));
      }
    } else if (is_word_char(cp)) {
      run += encode_utf8(cp);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::string detokenize(const TokenSequence& tokens) {
  auto single_cjk = [](const std::string& t) {
    auto cps = decode_utf8(t);
    return cps.size() == 1 && is_cjk(cps[0]);
  };
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !(single_cjk(tokens[i - 1]) && single_cjk(tokens[i]))) {
      out += ' ';
    }
    out += tokens[i];
  }
  return out;
}

double bleu(const std::vector<TokenSequence>& candidates,
            const std::vector<TokenSequence>& references, int max_n,
            bool smoothed) {
  if (candidates.size() != references.size()) {
    throw ValidationError("bleu: " + std::to_string(candidates.size()) +
                          " candidates vs " +
                          std::to_string(references.size()) + " references");
  }
  if (max_n < 1) throw ValidationError("bleu: max_n must be positive");
  for (const auto& r : references) {
    if (r.empty()) throw ValidationError("bleu: empty reference");
  }
  std::vector<double> matches(max_n, 0.0);
  std::vector<double> totals(max_n, 0.0);
  double cand_len = 0.0;
  double ref_len = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    cand_len += static_cast<double>(candidates[k].size());
    ref_len += static_cast<double>(references[k].size());
    for (int n = 1; n <= max_n; ++n) {
      auto c = count_ngrams(candidates[k], n);
      auto r = count_ngrams(references[k], n);
      for (const auto& [gram, count] : c) {
        totals[n - 1] += static_cast<double>(count);
        auto it = r.find(gram);
        if (it != r.end()) {
          matches[n - 1] += static_cast<double>(std::min(count, it->second));
        }
      }
    }
  }
  if (cand_len == 0.0) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    double m = matches[n - 1];
    double t = totals[n - 1];
    if (smoothed && n >= 2) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / max_n);
}

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScores rouge(const TokenSequence& candidate,
                  const TokenSequence& reference) {
  if (reference.empty()) throw ValidationError("rouge: empty reference");
  RougeScores s;
  if (candidate.empty()) return s;
  s.rouge1 = rouge_n(candidate, reference, 1);
  s.rouge2 = rouge_n(candidate, reference, 2);
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  s.rougeL = f1(lcs / candidate.size(), lcs / reference.size());
  return s;
}

double meteor_exact(const TokenSequence& candidate,
                    const TokenSequence& reference,
                    const MeteorParams& params) {
  if (reference.empty()) throw ValidationError("meteor: empty reference");
  if (candidate.empty()) return 0.0;

  // Greedy exact alignment: continue the current chunk when possible,
  // otherwise take the earliest unused reference position.
  std::vector<bool> used(reference.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> alignment;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    std::size_t pick = reference.size();
    if (!alignment.empty() && alignment.back().first + 1 == i) {
      std::size_t next = alignment.back().second + 1;
      if (next < reference.size() && !used[next] &&
          reference[next] == candidate[i]) {
        pick = next;
      }
    }
    for (std::size_t j = 0; pick == reference.size() && j < reference.size();
         ++j) {
      if (!used[j] && reference[j] == candidate[i]) pick = j;
    }
    if (pick < reference.size()) {
      used[pick] = true;
      alignment.emplace_back(i, pick);
    }
  }
  const double m = static_cast<double>(alignment.size());
  if (m == 0.0) return 0.0;

  std::size_t chunks = 1;
  for (std::size_t k = 1; k < alignment.size(); ++k) {
    if (alignment[k].first != alignment[k - 1].first + 1 ||
        alignment[k].second != alignment[k - 1].second + 1) {
      ++chunks;
    }
  }
  const double p = m / candidate.size();
  const double r = m / reference.size();
  const double fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
  const double penalty =
      params.gamma * std::pow(static_cast<double>(chunks) / m, params.beta);
  return fmean * (1.0 - penalty);
}

double difference_rate(const std::vector<TopicTitle>& generated,
                       const std::vector<TopicTitle>& training) {
  if (generated.empty()) {
    throw ValidationError("difference_rate: empty generated set");
  }
  std::set<std::string> seen;
  for (const auto& t : training) seen.insert(normalize_title(t));
  std::set<std::string> distinct;
  for (const auto& t : generated) distinct.insert(normalize_title(t));
  std::size_t novel = 0;
  for (const auto& t : distinct) {
    if (!seen.contains(t)) ++novel;
  }
  return 100.0 * static_cast<double>(novel) /
         static_cast<double>(distinct.size());
}

nlohmann::json MetricReport::to_json() const {
  return {{"bleu", bleu},         {"rouge1", rouge1},
          {"rouge2", rouge2},     {"rougeL", rougeL},
          {"meteor_exact", meteor_exact}, {"n_pairs", n_pairs}};
}

MetricReport evaluate_generation(const std::vector<std::string>& hypotheses,
                                 const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size()) {
    throw ValidationError("hypothesis and reference counts differ: " +
                          std::to_string(hypotheses.size()) + " vs " +
                          std::to_string(references.size()));
  }
  if (hypotheses.empty()) throw ValidationError("no pairs to evaluate");
  std::vector<TokenSequence> hyp, ref;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp.push_back(tokenize(hypotheses[i]));
    ref.push_back(tokenize(references[i]));
    if (ref.back().empty()) {
      throw ValidationError("reference " + std::to_string(i + 1) +
                            " has no tokens");
    }
  }
  MetricReport report;
  report.n_pairs = hyp.size();
  report.bleu = bleu(hyp, ref);
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    auto r = rouge(hyp[i], ref[i]);
    report.rouge1 += r.rouge1;
    report.rouge2 += r.rouge2;
    report.rougeL += r.rougeL;
    report.meteor_exact += meteor_exact(hyp[i], ref[i]);
  }
  const double n = static_cast<double>(hyp.size());
  report.rouge1 /= n;
  report.rouge2 /= n;
  report.rougeL /= n;
  report.meteor_exact /= n;
  return report;
}

}  // namespace estc
