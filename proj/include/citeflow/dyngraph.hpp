#pragma once

// Dynamic graph construction: per-year connected components of the
// symmetrized citation graph, probe scoring, snapshot selection, symmetric
// normalized adjacency, and per-year statistics.

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "citeflow/corpus.hpp"
#include "citeflow/tensor.hpp"

namespace citeflow {

// Which papers get probed when picking the anchor of the dynamic graph.
// `alg1` probes the earliest-year papers; `final_component` probes every
// node of the largest last-year component.
enum class ProbeMode { alg1, final_component };

ProbeMode parse_probe_mode(const std::string& s);  // "alg1" | "final-component"
std::string to_string(ProbeMode mode);

// Partition of all papers published <= year into components of the
// symmetrized citation graph. Each component's ids are sorted; components are
// ordered by size descending, ties by smallest member id.
std::vector<std::vector<std::string>> components_at(const Corpus& corpus, int year);

// Sum over corpus years of the size of the component containing the paper
// (0 in years before publication).
long long probe_score(const Corpus& corpus, const std::string& paper_id);

std::unordered_map<std::string, long long> probe_scores(const Corpus& corpus,
                                                        ProbeMode mode = ProbeMode::alg1);

// One year's view of the dynamic graph, over dense node indices.
struct Snapshot {
  int year = 0;
  std::vector<int> nodes;                  // indices present, ascending
  std::vector<std::pair<int, int>> edges;  // undirected, first < second, sorted
};

// Year-ordered monotone snapshots with a stable dense index over the final
// snapshot's nodes. Nodes and edges carry the year they first appear.
class DynamicGraph {
 public:
  // Edge years are derived as max of the endpoint arrival years. Validates
  // index consistency, monotone arrivals and final-year connectivity.
  DynamicGraph(std::vector<int> years, std::vector<std::string> index_to_id,
               std::vector<int> node_arrival_years, std::vector<std::pair<int, int>> edges,
               std::string probe_mode, std::string best_paper);

  int node_count() const { return static_cast<int>(index_to_id_.size()); }
  const std::vector<int>& years() const { return years_; }
  const std::vector<std::string>& index_to_id() const { return index_to_id_; }
  int node_index(const std::string& id) const;  // -1 when absent
  const std::vector<int>& arrival_years() const { return arrival_years_; }
  // all undirected edges of the final snapshot with their arrival years
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<int>& edge_years() const { return edge_years_; }

  const std::string& probe_mode() const { return probe_mode_; }
  const std::string& best_paper() const { return best_paper_; }

  bool has_year(int year) const;
  Snapshot snapshot(int year) const;  // throws on unknown year

 private:
  std::vector<int> years_;
  std::vector<std::string> index_to_id_;
  std::unordered_map<std::string, int> id_to_index_;
  std::vector<int> arrival_years_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<int> edge_years_;
  std::string probe_mode_;
  std::string best_paper_;
};

DynamicGraph build_dynamic_graph(const Corpus& corpus, ProbeMode mode = ProbeMode::alg1);

// Same graph restricted to the last k snapshot years (k <= 0 or k >= T keeps
// all). The node index is unchanged.
DynamicGraph window_last(const DynamicGraph& graph, int k);

// A-hat = D-tilde^{-1/2} (A + I) D-tilde^{-1/2} over the full index; nodes
// absent at `year` carry a self-loop only. Exactly symmetric by construction.
SparseMatrix normalized_adjacency(const DynamicGraph& graph, int year);

struct YearStats {
  int year = 0;
  long long n_nodes = 0;
  long long n_directed_edges = 0;  // in-snapshot citation count, directed
  double mean_degree = 0.0;        // over symmetrized in-snapshot edges
  long long max_degree = 0;
  long long max_citations = 0;  // from full-corpus timelines
  double avg_citations = 0.0;
};

std::vector<YearStats> snapshot_stats(const DynamicGraph& graph, const Corpus& corpus);

// Directory layout: meta.json, index.tsv (paper_id<TAB>dense_index),
// nodes.tsv (paper_id<TAB>arrival_year), edges_<year>.tsv per snapshot year
// (node_a<TAB>node_b cumulative edge list).
void save_graph(const DynamicGraph& graph, const std::string& dir);
DynamicGraph load_graph(const std::string& dir);

}  // namespace citeflow
