#pragma once

// Node features (author rank, venue rank, abstract vectors) and the
// log-citation label matrix with its validity mask.

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "citeflow/corpus.hpp"
#include "citeflow/dyngraph.hpp"
#include "citeflow/tensor.hpp"

namespace citeflow {

// Dense ranking (ties share a rank, no gaps) by total descending, min-max
// normalized so the top rank maps to 0 and the bottom to 1. All keys tied
// maps everything to 0.
template <class K>
std::map<K, double> dense_rank_normalize(const std::map<K, long long>& totals) {
  std::vector<long long> distinct;
  distinct.reserve(totals.size());
  for (const auto& [k, v] : totals) distinct.push_back(v);
  std::sort(distinct.begin(), distinct.end(), std::greater<>());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::map<long long, std::size_t, std::greater<>> rank_of;
  for (std::size_t r = 0; r < distinct.size(); ++r) rank_of[distinct[r]] = r + 1;

  const double denom = distinct.size() > 1 ? static_cast<double>(distinct.size() - 1) : 1.0;
  std::map<K, double> out;
  for (const auto& [k, v] : totals)
    out[k] = static_cast<double>(rank_of[v] - 1) / denom;
  return out;
}

// Authors ordered by the total citations of their papers, counting citing
// years <= year. The most-cited author(s) map to 0, the least-cited to 1.
std::map<std::string, double> author_rank(const Corpus& corpus, const TimelineSet& timelines,
                                          int year);
std::map<std::string, double> author_rank(const Corpus& corpus, int year);

// Same scheme over (canonical venue, publication year) keys.
std::map<VenueKey, double> venue_rank(const Corpus& corpus, const TimelineSet& timelines,
                                      int year);
std::map<VenueKey, double> venue_rank(const Corpus& corpus, int year);

// Fixed-width abstract vectors: external rows where available, otherwise a
// seeded token-hash fallback (L2-normalized; empty abstract gives zeros).
class EmbeddingStore {
 public:
  static EmbeddingStore load(const std::string& path);
  void save(const std::string& path) const;

  int width() const { return width_; }
  // "external", "fallback-hash", or "external+fallback-hash"
  const std::string& provenance() const { return provenance_; }
  bool contains(const std::string& id) const { return vectors_.count(id) > 0; }
  const std::vector<double>& vector_for(const std::string& id) const;  // throws on miss
  std::size_t size() const { return vectors_.size(); }

  friend EmbeddingStore abstract_features(const Corpus&, const std::string&, int, std::uint64_t);

 private:
  int width_ = 0;
  std::string provenance_;
  std::map<std::string, std::vector<double>> vectors_;
};

// store_path "" means pure fallback. A non-empty store must match `width`;
// papers missing from it are filled by the fallback hash.
EmbeddingStore abstract_features(const Corpus& corpus, const std::string& store_path,
                                 int width = 768, std::uint64_t fallback_seed = 0);

// Deterministic hash embedding of one abstract (exposed for tests).
std::vector<double> fallback_embedding(const std::string& abstract_text, int width,
                                       std::uint64_t seed);

// Reference year for rank features at snapshot t: `rolling` uses t-1,
// `final_year` uses the last snapshot year for every t.
enum class RankReference { rolling, final_year };

struct FeatureConfig {
  bool use_abstract = false;
  bool use_author = false;
  bool use_venue = false;
  RankReference rank_ref = RankReference::rolling;

  // "abstract" | "author" | "venue" | "author+venue" | "all"
  static FeatureConfig parse(const std::string& set);
  std::string set_name() const;
  // 3 author values [best, mean, worst] + 1 venue value + embedding width
  int width(int embedding_width) const;
};

// Per-year m x n feature matrices over the graph's dense index. Abstract
// columns are constant over time; rank columns follow the rank reference.
struct FeatureTensor {
  std::vector<int> years;
  std::vector<Matrix> x;
  int width() const { return x.empty() ? 0 : x.front().cols; }
};

// Column layout: [abstract | author best, mean, worst | venue], restricted to
// the active blocks. Papers without authors take the worst rank (1.0).
FeatureTensor assemble_feature_tensor(const DynamicGraph& graph, const Corpus& corpus,
                                      const FeatureConfig& config,
                                      const EmbeddingStore* store = nullptr);

struct LabelMatrix {
  Matrix labels;  // m x T, ln(count + 1)
  Matrix mask;    // m x T, 1.0 from the publication year onward else 0.0
};

LabelMatrix label_matrix(const DynamicGraph& graph, const TimelineSet& timelines,
                         const Corpus& corpus);

// features directory: features_<year>.tsv matrices, labels.tsv, mask.tsv,
// meta.json
void save_features(const FeatureTensor& features, const LabelMatrix& labels,
                   const std::string& dir);
void load_features(const std::string& dir, FeatureTensor& features, LabelMatrix& labels);

}  // namespace citeflow
