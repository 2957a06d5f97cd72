#pragma once

// Experiment orchestration: train/val/test splits, a synthetic citation
// corpus generator, multi-seed experiment cells with mean/std aggregation,
// per-timestep error curves, and per-venue error tables.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "citeflow/corpus.hpp"
#include "citeflow/dyngraph.hpp"
#include "citeflow/features.hpp"
#include "citeflow/models.hpp"
#include "citeflow/tensor.hpp"

namespace citeflow {

// 60/20/20 node split. Lists are ascending; together they cover every node
// exactly once.
struct SplitAssignment {
  std::uint64_t seed = 0;
  std::vector<int> train, val, test;

  int node_count() const {
    return static_cast<int>(train.size() + val.size() + test.size());
  }
};

// Seeded uniform shuffle, then a 60/20/20 cut (each size within one node of
// exact). Throws below 5 nodes.
SplitAssignment split_nodes(int node_count, std::uint64_t seed);

void save_split(const SplitAssignment& split, const std::string& path);
SplitAssignment load_split(const std::string& path);

// Reuses a stored split verbatim when the file exists (the node count and
// seed must agree); otherwise creates and saves one.
SplitAssignment load_or_create_split(const std::string& path, int node_count,
                                     std::uint64_t seed);

struct SynthConfig {
  int n_years = 10;
  int papers_per_year = 200;
  double exponent = 1.0;          // attachment weight (citations + 1 + s*q)^exponent
  double quality_strength = 5.0;  // s above; 0 removes the latent-quality bias
  int n_venues = 4;
  int n_authors = 60;
  int min_authors_per_paper = 1;
  int max_authors_per_paper = 3;
  int refs_per_paper = 3;  // citations per paper past the first year
  int first_year = 2000;
  std::uint64_t seed = 0;

  // key = value lines; '#' starts a comment. Unknown keys are an error.
  static SynthConfig parse_file(const std::string& path);
  void validate() const;
};

// Papers arrive year by year; each paper past the first year cites
// `refs_per_paper` distinct strictly-earlier papers drawn without
// replacement with weight (citations + 1 + quality_strength * quality) ^
// exponent. Paper quality is the mean of its venue's and its authors' latent
// qualities, so venue and author ranks genuinely predict citation counts.
// Fully deterministic given the seed.
Corpus generate_synthetic_corpus(const SynthConfig& config);

// One point of a per-timestep error curve. `mae` is empty when no masked
// test cell exists at that timestep (a plot gap, not a zero).
struct TimestepMae {
  int year = 0;
  long long cells = 0;
  std::optional<double> mae;
};

// Per-timestep masked MAE over `nodes`. `predictions` has one row per subset
// entry (as produced by predict()); `years` labels the columns. The overall
// MAE equals the cell-weighted average of the defined curve points.
std::vector<TimestepMae> per_timestep_mae(const Matrix& predictions, const Matrix& labels,
                                          const Matrix& mask, const std::vector<int>& nodes,
                                          const std::vector<int>& years);

struct VenueMaeRow {
  VenueKey venue;
  double mean_mae = 0.0;   // mean over the group's per-paper masked MAE
  double avg_degree = 0.0; // mean final-snapshot degree of the group's papers
  long long n = 0;         // papers in the group
};

// Papers grouped by (canonical venue, publication year), sorted ascending by
// mean MAE (ties by venue key). Papers with no masked cell are omitted.
// `predictions` has one row per `nodes` entry.
std::vector<VenueMaeRow> venue_mae_table(const Matrix& predictions, const Matrix& labels,
                                         const Matrix& mask, const Corpus& corpus,
                                         const DynamicGraph& graph,
                                         const std::vector<int>& nodes);

void save_venue_table(const std::vector<VenueMaeRow>& rows, const std::string& path);

// One experiment suite: the cross product of models x feature sets x
// years-back windows, each run over the listed seeds on a shared split.
struct ExperimentSuite {
  std::string corpus_path;
  std::string embeddings_path;  // "" = hash fallback for abstract features
  ProbeMode probe = ProbeMode::alg1;
  std::vector<ModelKind> models;
  std::vector<std::string> feature_sets;  // FeatureConfig::parse names
  std::vector<int> years_back;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::uint64_t split_seed = 0;
  int embedding_width = 32;
  int gcn_hidden = 256;
  int lstm_hidden = 128;
  bool gcn_tanh = false;
  TrainConfig train;  // per-run seed is overridden with the cell seed

  void validate() const;
};

// key = value text config. Recognized keys: corpus, embeddings, probe,
// models, features, years-back, seeds, split-seed, embedding-width,
// gcn-hidden, lstm-hidden, gcn-tanh, lr, batch-size, max-epochs, patience.
ExperimentSuite parse_suite_file(const std::string& path);

struct CellReport {
  std::string model;
  std::string feature_set;
  int years_back = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed_test_mae;  // parallel to seeds
  double mean_mae = 0.0;
  double std_mae = 0.0;                   // population std over the seeds
  std::vector<int> years;                 // window snapshot years (length T)
  std::vector<std::vector<TimestepMae>> curves;  // one per seed
};

double mean_of(const std::vector<double>& values);
double population_std(const std::vector<double>& values);

// Runs every cell of the suite, writing per-seed artifacts under
// <out_dir>/cells/<model>_<features>_y<back>/seed_<s>/ and a summary per
// cell. The split is persisted at <out_dir>/split.tsv and reused on re-runs.
// If a cell fails, artifacts written so far stay on disk and the error names
// the cell.
std::vector<CellReport> run_experiment(const ExperimentSuite& suite,
                                       const std::string& out_dir);

// Re-aggregates the per-seed artifacts under `dir` (independently of
// run_experiment's in-memory results) into summary.tsv, curves.tsv and
// venues.tsv at the top of `dir`.
void write_report(const std::string& dir);

}  // namespace citeflow
