#include "fashionfb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "fashionfb/rng.hpp"

namespace fashionfb {

namespace {

constexpr int kMaxOrder = 4;
constexpr double kRougeBeta = 1.2;
constexpr double kCiderSigma = 6.0;

using Counts = std::unordered_map<std::string, int>;

// n-grams keyed by tokens joined on an unprintable separator.
std::string gram_key(const TokenSentence& s, int start, int n) {
  std::string key;
  for (int i = start; i < start + n; ++i) {
    if (i > start) key += '\x1f';
    key += s[i];
  }
  return key;
}

Counts ngram_counts(const TokenSentence& s, int n) {
  Counts counts;
  for (int i = 0; i + n <= static_cast<int>(s.size()); ++i) ++counts[gram_key(s, i, n)];
  return counts;
}

void check_inputs(const std::vector<TokenSentence>& candidates,
                  const std::vector<ReferenceSet>& references) {
  if (candidates.empty()) throw std::runtime_error("no candidates to score");
  if (candidates.size() != references.size())
    throw std::runtime_error("candidate/reference image counts differ");
  for (const ReferenceSet& refs : references)
    if (refs.empty()) throw std::runtime_error("image with no references");
}

int lcs_length(const TokenSentence& a, const TokenSentence& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu4(const std::vector<TokenSentence>& candidates,
             const std::vector<ReferenceSet>& references) {
  check_inputs(candidates, references);

  long long matched[kMaxOrder] = {0, 0, 0, 0};
  long long total[kMaxOrder] = {0, 0, 0, 0};
  long long cand_len = 0, ref_len = 0;

  for (std::size_t img = 0; img < candidates.size(); ++img) {
    const TokenSentence& cand = candidates[img];
    cand_len += static_cast<long long>(cand.size());

    long long closest = -1;
    for (const TokenSentence& ref : references[img]) {
      const long long r = static_cast<long long>(ref.size());
      const long long c = static_cast<long long>(cand.size());
      if (closest < 0 || std::llabs(r - c) < std::llabs(closest - c) ||
          (std::llabs(r - c) == std::llabs(closest - c) && r < closest))
        closest = r;
    }
    ref_len += closest;

    for (int n = 1; n <= kMaxOrder; ++n) {
      Counts cand_counts = ngram_counts(cand, n);
      Counts ceiling;
      for (const TokenSentence& ref : references[img])
        for (const auto& [gram, count] : ngram_counts(ref, n)) {
          int& best = ceiling[gram];
          best = std::max(best, count);
        }
      for (const auto& [gram, count] : cand_counts) {
        auto it = ceiling.find(gram);
        matched[n - 1] += std::min(count, it == ceiling.end() ? 0 : it->second);
        total[n - 1] += count;
      }
    }
  }

  double log_sum = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    double p = total[n] > 0 ? static_cast<double>(matched[n]) / static_cast<double>(total[n])
                            : 0.0;
    if (p == 0.0) p = 1e-9;
    log_sum += std::log(p) / kMaxOrder;
  }
  const double bp =
      cand_len > ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * std::exp(log_sum);
}

double rouge_l(const std::vector<TokenSentence>& candidates,
               const std::vector<ReferenceSet>& references) {
  check_inputs(candidates, references);
  const double b2 = kRougeBeta * kRougeBeta;
  double sum = 0.0;
  for (std::size_t img = 0; img < candidates.size(); ++img) {
    const TokenSentence& cand = candidates[img];
    double best = 0.0;
    for (const TokenSentence& ref : references[img]) {
      if (cand.empty() || ref.empty()) continue;
      const double lcs = lcs_length(cand, ref);
      const double recall = lcs / static_cast<double>(ref.size());
      const double precision = lcs / static_cast<double>(cand.size());
      const double denom = recall + b2 * precision;
      if (denom > 0.0) best = std::max(best, (1.0 + b2) * recall * precision / denom);
    }
    sum += best;
  }
  return sum / static_cast<double>(candidates.size());
}

namespace {

// Per-sentence tf-idf vectors for all orders, plus norms and bigram length.
struct CiderVec {
  std::unordered_map<std::string, double> weights[kMaxOrder];
  double norm[kMaxOrder] = {0.0, 0.0, 0.0, 0.0};
  double bigrams = 0.0;
};

CiderVec cider_vector(const TokenSentence& s, const Counts& df, double log_images) {
  CiderVec out;
  for (int n = 1; n <= kMaxOrder; ++n) {
    double sq = 0.0;
    for (const auto& [gram, count] : ngram_counts(s, n)) {
      auto it = df.find(gram);
      const double idf = log_images - std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
      const double w = static_cast<double>(count) * idf;
      out.weights[n - 1].emplace(gram, w);
      sq += w * w;
    }
    out.norm[n - 1] = std::sqrt(sq);
  }
  if (s.size() > 1) out.bigrams = static_cast<double>(s.size()) - 1.0;
  return out;
}

double cider_sim(const CiderVec& cand, const CiderVec& ref) {
  const double delta = cand.bigrams - ref.bigrams;
  const double penalty = std::exp(-delta * delta / (2.0 * kCiderSigma * kCiderSigma));
  double sum = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    if (cand.norm[n] == 0.0 || ref.norm[n] == 0.0) continue;
    double dot = 0.0;
    for (const auto& [gram, w] : cand.weights[n]) {
      auto it = ref.weights[n].find(gram);
      if (it != ref.weights[n].end()) dot += std::min(w, it->second) * it->second;
    }
    sum += penalty * dot / (cand.norm[n] * ref.norm[n]);
  }
  return sum / kMaxOrder;
}

}  // namespace

double cider_d(const std::vector<TokenSentence>& candidates,
               const std::vector<ReferenceSet>& references) {
  check_inputs(candidates, references);
  if (candidates.size() < 2) throw std::runtime_error("idf needs at least two images");

  Counts df;
  for (const ReferenceSet& refs : references) {
    std::unordered_set<std::string> seen;
    for (const TokenSentence& ref : refs)
      for (int n = 1; n <= kMaxOrder; ++n)
        for (const auto& [gram, count] : ngram_counts(ref, n)) seen.insert(gram);
    for (const std::string& gram : seen) ++df[gram];
  }
  const double log_images = std::log(static_cast<double>(references.size()));

  double sum = 0.0;
  for (std::size_t img = 0; img < candidates.size(); ++img) {
    const CiderVec cand = cider_vector(candidates[img], df, log_images);
    double image_sum = 0.0;
    for (const TokenSentence& ref : references[img])
      image_sum += cider_sim(cand, cider_vector(ref, df, log_images));
    sum += 10.0 * image_sum / static_cast<double>(references[img].size());
  }
  return sum / static_cast<double>(candidates.size());
}

double diversity(const std::vector<TokenSentence>& generated) {
  if (generated.empty()) throw std::runtime_error("no generated sentences");
  std::set<TokenSentence> distinct(generated.begin(), generated.end());
  return static_cast<double>(distinct.size()) / static_cast<double>(generated.size());
}

double vocab_usage(const std::vector<TokenSentence>& generated, const Vocabulary& vocab) {
  std::unordered_set<std::string> used;
  for (const TokenSentence& s : generated)
    for (const std::string& token : s) used.insert(token);

  long long usable = 0, hit = 0;
  for (int id = 0; id < vocab.size(); ++id) {
    if (vocab.is_special(id)) continue;
    ++usable;
    if (used.count(vocab.token(id))) ++hit;
  }
  if (usable == 0) return 0.0;
  return static_cast<double>(hit) / static_cast<double>(usable);
}

MetricsReport evaluate_generated(const std::vector<TokenSentence>& candidates,
                                 const std::vector<ReferenceSet>& references,
                                 const Vocabulary& vocab) {
  MetricsReport report;
  report.bleu4 = bleu4(candidates, references);
  report.rouge_l = rouge_l(candidates, references);
  report.cider_d = cider_d(candidates, references);
  report.diversity = diversity(candidates);
  report.vocab_usage = vocab_usage(candidates, vocab);
  return report;
}

MetricsReport fs_baseline(const std::vector<ReferenceSet>& references, const Vocabulary& vocab,
                          std::uint64_t seed) {
  if (references.empty()) throw std::runtime_error("no images");
  DetRng rng(seed);
  std::vector<TokenSentence> drawn;
  std::vector<ReferenceSet> rest;
  drawn.reserve(references.size());
  rest.reserve(references.size());
  for (const ReferenceSet& refs : references) {
    if (refs.size() < 2) throw std::runtime_error("leave-one-out needs two references per image");
    const std::size_t pick = static_cast<std::size_t>(rng.below(refs.size()));
    drawn.push_back(refs[pick]);
    ReferenceSet others;
    for (std::size_t i = 0; i < refs.size(); ++i)
      if (i != pick) others.push_back(refs[i]);
    rest.push_back(std::move(others));
  }
  MetricsReport report;
  report.bleu4 = bleu4(drawn, rest);
  report.rouge_l = rouge_l(drawn, rest);
  report.cider_d = cider_d(drawn, rest);
  report.diversity = diversity(drawn);
  report.vocab_usage = vocab_usage(drawn, vocab);
  return report;
}

}  // namespace fashionfb
