#include "naive_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace naive {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> count_ngrams(const Sentence& s, int n) {
  std::map<Ngram, int> counts;
  for (int i = 0; i + n <= static_cast<int>(s.size()); ++i)
    counts[Ngram(s.begin() + i, s.begin() + i + n)] += 1;
  return counts;
}

}  // namespace

double bleu4(const std::vector<Sentence>& candidates, const std::vector<RefSet>& references) {
  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    long long matched = 0, total = 0;
    for (std::size_t img = 0; img < candidates.size(); ++img) {
      std::map<Ngram, int> cand = count_ngrams(candidates[img], n);
      for (const auto& [gram, count] : cand) {
        int best_ref = 0;
        for (const Sentence& ref : references[img]) {
          std::map<Ngram, int> rc = count_ngrams(ref, n);
          auto it = rc.find(gram);
          if (it != rc.end()) best_ref = std::max(best_ref, it->second);
        }
        matched += std::min(count, best_ref);
        total += count;
      }
    }
    double p = total > 0 ? static_cast<double>(matched) / static_cast<double>(total) : 0.0;
    if (p == 0.0) p = 1e-9;
    log_sum += 0.25 * std::log(p);
  }

  long long cand_len = 0, ref_len = 0;
  for (std::size_t img = 0; img < candidates.size(); ++img) {
    const long long c = static_cast<long long>(candidates[img].size());
    cand_len += c;
    long long best = -1;
    for (const Sentence& ref : references[img]) {
      const long long r = static_cast<long long>(ref.size());
      if (best < 0 || std::llabs(r - c) < std::llabs(best - c) ||
          (std::llabs(r - c) == std::llabs(best - c) && r < best))
        best = r;
    }
    ref_len += best;
  }
  const double bp =
      cand_len > ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * std::exp(log_sum);
}

double rouge_l(const std::vector<Sentence>& candidates, const std::vector<RefSet>& references) {
  const double beta = 1.2;
  double sum = 0.0;
  for (std::size_t img = 0; img < candidates.size(); ++img) {
    const Sentence& cand = candidates[img];
    double best = 0.0;
    for (const Sentence& ref : references[img]) {
      // plain quadratic LCS table
      const std::size_t a = cand.size(), b = ref.size();
      std::vector<std::vector<int>> lcs(a + 1, std::vector<int>(b + 1, 0));
      for (std::size_t i = 1; i <= a; ++i)
        for (std::size_t j = 1; j <= b; ++j)
          lcs[i][j] = cand[i - 1] == ref[j - 1] ? lcs[i - 1][j - 1] + 1
                                                : std::max(lcs[i - 1][j], lcs[i][j - 1]);
      if (a == 0 || b == 0) continue;
      const double r = static_cast<double>(lcs[a][b]) / static_cast<double>(b);
      const double p = static_cast<double>(lcs[a][b]) / static_cast<double>(a);
      if (r + beta * beta * p > 0.0)
        best = std::max(best, (1.0 + beta * beta) * r * p / (r + beta * beta * p));
    }
    sum += best;
  }
  return sum / static_cast<double>(candidates.size());
}

double cider_d(const std::vector<Sentence>& candidates, const std::vector<RefSet>& references) {
  const double sigma = 6.0;
  const double log_num_images = std::log(static_cast<double>(references.size()));

  // document frequency: number of images whose reference set mentions the n-gram
  std::map<Ngram, int> df;
  for (const RefSet& refs : references) {
    std::set<Ngram> seen;
    for (const Sentence& ref : refs)
      for (int n = 1; n <= 4; ++n)
        for (const auto& [gram, count] : count_ngrams(ref, n)) seen.insert(gram);
    for (const Ngram& gram : seen) df[gram] += 1;
  }

  auto tfidf = [&](const Sentence& s, int n) {
    std::map<Ngram, double> vec;
    for (const auto& [gram, count] : count_ngrams(s, n)) {
      auto it = df.find(gram);
      const double d = std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
      vec[gram] = static_cast<double>(count) * (log_num_images - d);
    }
    return vec;
  };
  auto norm_of = [](const std::map<Ngram, double>& vec) {
    double s = 0.0;
    for (const auto& [gram, w] : vec) s += w * w;
    return std::sqrt(s);
  };

  double corpus = 0.0;
  for (std::size_t img = 0; img < candidates.size(); ++img) {
    const Sentence& cand = candidates[img];
    const double cand_bigrams = cand.empty() ? 0.0 : static_cast<double>(cand.size()) - 1.0;
    double image_score = 0.0;
    for (const Sentence& ref : references[img]) {
      const double ref_bigrams = ref.empty() ? 0.0 : static_cast<double>(ref.size()) - 1.0;
      const double delta = cand_bigrams - ref_bigrams;
      double sim_sum = 0.0;
      for (int n = 1; n <= 4; ++n) {
        std::map<Ngram, double> cv = tfidf(cand, n), rv = tfidf(ref, n);
        double dot = 0.0;
        for (const auto& [gram, w] : cv) {
          auto it = rv.find(gram);
          if (it != rv.end()) dot += std::min(w, it->second) * it->second;
        }
        const double cn = norm_of(cv), rn = norm_of(rv);
        double val = 0.0;
        if (cn != 0.0 && rn != 0.0) val = dot / (cn * rn);
        val *= std::exp(-delta * delta / (2.0 * sigma * sigma));
        sim_sum += val;
      }
      image_score += sim_sum / 4.0;
    }
    corpus += 10.0 * image_score / static_cast<double>(references[img].size());
  }
  return corpus / static_cast<double>(candidates.size());
}

}  // namespace naive
