#include "citeflow/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace citeflow {
namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return in;
}

// key = value lines, '#' comments, duplicate keys rejected.
std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ": expected key = value", line_no);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ParseError(path + ": empty key", line_no);
    if (!out.emplace(key, value).second)
      throw ParseError(path + ": duplicate key " + key, line_no);
  }
  return out;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  for (const std::string& part : split(csv, ',')) {
    const std::string item = trim(part);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

long long parse_int(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(what + ": not an integer: " + text);
  }
}

double parse_real(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(what + ": not a number: " + text);
  }
}

bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error(what + ": expected true or false, got " + text);
}

}  // namespace

SplitAssignment split_nodes(int node_count, std::uint64_t seed) {
  if (node_count < 5)
    throw Error("cannot split " + std::to_string(node_count) +
                " nodes; at least 5 are needed for a 60/20/20 cut");
  std::vector<int> order(static_cast<std::size_t>(node_count));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = uniform_below(rng, i);
    std::swap(order[i - 1], order[j]);
  }

  const int train_n = node_count * 6 / 10;
  const int val_n = (node_count - train_n) / 2;
  SplitAssignment s;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + train_n);
  s.val.assign(order.begin() + train_n, order.begin() + train_n + val_n);
  s.test.assign(order.begin() + train_n + val_n, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void save_split(const SplitAssignment& split, const std::string& path) {
  std::vector<const char*> label(static_cast<std::size_t>(split.node_count()), nullptr);
  const auto put = [&](const std::vector<int>& nodes, const char* name) {
    for (int n : nodes) {
      if (n < 0 || n >= split.node_count() || label[static_cast<std::size_t>(n)] != nullptr)
        throw Error("split does not cover every node exactly once");
      label[static_cast<std::size_t>(n)] = name;
    }
  };
  put(split.train, "train");
  put(split.val, "val");
  put(split.test, "test");

  std::ofstream out = open_out(path);
  out << "# split seed=" << split.seed << "\n";
  for (std::size_t n = 0; n < label.size(); ++n) out << n << "\t" << label[n] << "\n";
}

SplitAssignment load_split(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# split seed=", 0) != 0)
    throw Error(path + ": missing split header");
  SplitAssignment s;
  s.seed = static_cast<std::uint64_t>(
      parse_int(line.substr(std::string("# split seed=").size()), path));

  int expected = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cols = split(line, '\t');
    if (cols.size() != 2) throw ParseError(path + ": expected index<TAB>split", line_no);
    const int node = static_cast<int>(parse_int(cols[0], path));
    if (node != expected)
      throw ParseError(path + ": node indices must be 0..n-1 in order", line_no);
    ++expected;
    if (cols[1] == "train")
      s.train.push_back(node);
    else if (cols[1] == "val")
      s.val.push_back(node);
    else if (cols[1] == "test")
      s.test.push_back(node);
    else
      throw ParseError(path + ": unknown split name " + cols[1], line_no);
  }
  if (expected < 5) throw Error(path + ": split covers fewer than 5 nodes");
  return s;
}

SplitAssignment load_or_create_split(const std::string& path, int node_count,
                                     std::uint64_t seed) {
  if (fs::exists(path)) {
    SplitAssignment s = load_split(path);
    if (s.node_count() != node_count)
      throw Error(path + ": stored split covers " + std::to_string(s.node_count()) +
                  " nodes but the graph has " + std::to_string(node_count));
    if (s.seed != seed)
      throw Error(path + ": stored split used seed " + std::to_string(s.seed) +
                  ", not " + std::to_string(seed));
    return s;
  }
  SplitAssignment s = split_nodes(node_count, seed);
  save_split(s, path);
  return s;
}

void SynthConfig::validate() const {
  if (n_years <= 0 || papers_per_year <= 0 || n_venues <= 0 || n_authors <= 0 ||
      min_authors_per_paper <= 0 || max_authors_per_paper <= 0 || refs_per_paper <= 0)
    throw Error("synthetic config: all counts must be positive");
  if (min_authors_per_paper > max_authors_per_paper)
    throw Error("synthetic config: min authors exceeds max authors");
  if (max_authors_per_paper > n_authors)
    throw Error("synthetic config: authors per paper exceeds the author pool");
  if (exponent < 0.0 || quality_strength < 0.0)
    throw Error("synthetic config: exponent and quality strength must be non-negative");
}

SynthConfig SynthConfig::parse_file(const std::string& path) {
  SynthConfig cfg;
  for (const auto& [key, value] : parse_kv_file(path)) {
    if (key == "years")
      cfg.n_years = static_cast<int>(parse_int(value, key));
    else if (key == "papers-per-year")
      cfg.papers_per_year = static_cast<int>(parse_int(value, key));
    else if (key == "exponent")
      cfg.exponent = parse_real(value, key);
    else if (key == "quality-strength")
      cfg.quality_strength = parse_real(value, key);
    else if (key == "venues")
      cfg.n_venues = static_cast<int>(parse_int(value, key));
    else if (key == "authors")
      cfg.n_authors = static_cast<int>(parse_int(value, key));
    else if (key == "min-authors")
      cfg.min_authors_per_paper = static_cast<int>(parse_int(value, key));
    else if (key == "max-authors")
      cfg.max_authors_per_paper = static_cast<int>(parse_int(value, key));
    else if (key == "refs-per-paper")
      cfg.refs_per_paper = static_cast<int>(parse_int(value, key));
    else if (key == "first-year")
      cfg.first_year = static_cast<int>(parse_int(value, key));
    else if (key == "seed")
      cfg.seed = static_cast<std::uint64_t>(parse_int(value, key));
    else
      throw Error(path + ": unknown synthetic config key " + key);
  }
  cfg.validate();
  return cfg;
}

Corpus generate_synthetic_corpus(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);

  std::vector<double> venue_quality(static_cast<std::size_t>(config.n_venues));
  for (double& q : venue_quality) q = uniform01(rng);
  std::vector<double> author_quality(static_cast<std::size_t>(config.n_authors));
  for (double& q : author_quality) q = uniform01(rng);

  const auto padded = [](const char* prefix, int value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*d", prefix, std::min(width, 12), value);
    return std::string(buf);
  };
  const int total = config.n_years * config.papers_per_year;
  const int id_width = std::max<int>(5, static_cast<int>(std::to_string(total - 1).size()));
  const int venue_width = static_cast<int>(std::to_string(config.n_venues - 1).size());
  const int author_width =
      std::max<int>(3, static_cast<int>(std::to_string(config.n_authors - 1).size()));

  static const char* kVocab[] = {
      "graph",    "network", "citation", "dynamic",  "learning", "model",
      "temporal", "vector",  "ranking",  "venue",    "author",   "signal",
      "growth",   "pattern", "structure", "sequence", "feature",  "measure",
      "archive",  "study",   "method",   "analysis", "impact",   "trend"};
  constexpr std::size_t kVocabSize = sizeof(kVocab) / sizeof(kVocab[0]);

  std::vector<PaperRecord> records;
  records.reserve(static_cast<std::size_t>(total));
  std::vector<double> paper_quality;
  paper_quality.reserve(static_cast<std::size_t>(total));
  std::vector<long long> citations(static_cast<std::size_t>(total), 0);

  int next = 0;
  for (int y = 0; y < config.n_years; ++y) {
    // Only papers from strictly earlier years are citable.
    const int citable = y * config.papers_per_year;
    for (int p = 0; p < config.papers_per_year; ++p, ++next) {
      PaperRecord rec;
      rec.id = padded("S", next, id_width);
      rec.year = config.first_year + y;

      const int venue = static_cast<int>(uniform_below(rng, config.n_venues));
      rec.venue_raw = padded("V", venue, venue_width);

      const int n_auth =
          config.min_authors_per_paper +
          static_cast<int>(uniform_below(
              rng, config.max_authors_per_paper - config.min_authors_per_paper + 1));
      double author_sum = 0.0;
      while (static_cast<int>(rec.author_ids.size()) < n_auth) {
        const int a = static_cast<int>(uniform_below(rng, config.n_authors));
        const std::string id = padded("A", a, author_width);
        if (std::find(rec.author_ids.begin(), rec.author_ids.end(), id) !=
            rec.author_ids.end())
          continue;
        rec.author_ids.push_back(id);
        author_sum += author_quality[static_cast<std::size_t>(a)];
      }

      const int n_tokens = 4 + static_cast<int>(uniform_below(rng, 5));
      std::string abstract;
      for (int t = 0; t < n_tokens; ++t) {
        if (t > 0) abstract += ' ';
        abstract += kVocab[uniform_below(rng, kVocabSize)];
      }
      rec.abstract_text = abstract;

      const double quality =
          0.5 * (venue_quality[static_cast<std::size_t>(venue)] + author_sum / n_auth);
      if (citable > 0) {
        std::vector<double> weight(static_cast<std::size_t>(citable));
        for (int c = 0; c < citable; ++c)
          weight[static_cast<std::size_t>(c)] =
              std::pow(static_cast<double>(citations[static_cast<std::size_t>(c)]) + 1.0 +
                           config.quality_strength * paper_quality[static_cast<std::size_t>(c)],
                       config.exponent);
        const int k = std::min(config.refs_per_paper, citable);
        for (int pick = 0; pick < k; ++pick) {
          double sum = 0.0;
          for (double w : weight) sum += w;
          double r = uniform01(rng) * sum;
          int chosen = citable - 1;
          for (int c = 0; c < citable; ++c) {
            r -= weight[static_cast<std::size_t>(c)];
            if (r < 0.0 && weight[static_cast<std::size_t>(c)] > 0.0) {
              chosen = c;
              break;
            }
          }
          weight[static_cast<std::size_t>(chosen)] = 0.0;  // without replacement
          ++citations[static_cast<std::size_t>(chosen)];
          rec.cited_ids.push_back(padded("S", chosen, id_width));
        }
      }

      paper_quality.push_back(quality);
      records.push_back(std::move(rec));
    }
  }

  std::vector<std::string> venue_names;
  for (int v = 0; v < config.n_venues; ++v) venue_names.push_back(padded("V", v, venue_width));
  return Corpus::from_records(std::move(records), AliasTable::identity(venue_names));
}

std::vector<TimestepMae> per_timestep_mae(const Matrix& predictions, const Matrix& labels,
                                          const Matrix& mask, const std::vector<int>& nodes,
                                          const std::vector<int>& years) {
  if (!labels.same_shape(mask)) throw Error("mask shape does not match labels");
  if (predictions.rows != static_cast<int>(nodes.size()))
    throw Error("per-timestep mae expects one prediction row per subset entry");
  if (predictions.cols != labels.cols ||
      labels.cols != static_cast<int>(years.size()))
    throw Error("per-timestep mae: column count does not match the year list");

  std::vector<TimestepMae> curve;
  curve.reserve(years.size());
  for (int t = 0; t < labels.cols; ++t) {
    TimestepMae point;
    point.year = years[static_cast<std::size_t>(t)];
    double sum = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const int node = nodes[k];
      if (node < 0 || node >= labels.rows)
        throw Error("node index " + std::to_string(node) + " out of range");
      if (mask.at(node, t) == 0.0) continue;
      sum += std::abs(predictions.at(static_cast<int>(k), t) - labels.at(node, t));
      ++point.cells;
    }
    if (point.cells > 0) point.mae = sum / static_cast<double>(point.cells);
    curve.push_back(point);
  }
  return curve;
}

std::vector<VenueMaeRow> venue_mae_table(const Matrix& predictions, const Matrix& labels,
                                         const Matrix& mask, const Corpus& corpus,
                                         const DynamicGraph& graph,
                                         const std::vector<int>& nodes) {
  if (!labels.same_shape(mask)) throw Error("mask shape does not match labels");
  if (predictions.rows != static_cast<int>(nodes.size()))
    throw Error("venue table expects one prediction row per subset entry");
  if (predictions.cols != labels.cols) throw Error("prediction width does not match labels");

  std::vector<long long> degree(static_cast<std::size_t>(graph.node_count()), 0);
  for (const auto& [u, v] : graph.edges()) {
    ++degree[static_cast<std::size_t>(u)];
    ++degree[static_cast<std::size_t>(v)];
  }

  struct Group {
    double mae_sum = 0.0;
    long long degree_sum = 0;
    long long n = 0;
  };
  std::map<VenueKey, Group> groups;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const int node = nodes[k];
    if (node < 0 || node >= graph.node_count())
      throw Error("node index " + std::to_string(node) + " out of range");
    double sum = 0.0;
    long long cells = 0;
    for (int t = 0; t < labels.cols; ++t) {
      if (mask.at(node, t) == 0.0) continue;
      sum += std::abs(predictions.at(static_cast<int>(k), t) - labels.at(node, t));
      ++cells;
    }
    if (cells == 0) continue;  // paper contributes nothing; empty groups drop out
    const PaperRecord& rec = corpus.paper(graph.index_to_id()[static_cast<std::size_t>(node)]);
    Group& g = groups[corpus.venue_key(rec)];
    g.mae_sum += sum / static_cast<double>(cells);
    g.degree_sum += degree[static_cast<std::size_t>(node)];
    ++g.n;
  }

  std::vector<VenueMaeRow> rows;
  rows.reserve(groups.size());
  for (const auto& [key, g] : groups) {
    VenueMaeRow row;
    row.venue = key;
    row.mean_mae = g.mae_sum / static_cast<double>(g.n);
    row.avg_degree = static_cast<double>(g.degree_sum) / static_cast<double>(g.n);
    row.n = g.n;
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(), [](const VenueMaeRow& a, const VenueMaeRow& b) {
    if (a.mean_mae != b.mean_mae) return a.mean_mae < b.mean_mae;
    return a.venue < b.venue;
  });
  return rows;
}

void save_venue_table(const std::vector<VenueMaeRow>& rows, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "venue\tyear\tmean_mae\tavg_degree\tn\n";
  for (const VenueMaeRow& r : rows)
    out << r.venue.canonical_name << "\t" << r.venue.year << "\t" << g17(r.mean_mae) << "\t"
        << g17(r.avg_degree) << "\t" << r.n << "\n";
}

void ExperimentSuite::validate() const {
  if (corpus_path.empty()) throw Error("experiment suite: corpus path is required");
  if (models.empty()) throw Error("experiment suite: at least one model is required");
  if (feature_sets.empty()) throw Error("experiment suite: at least one feature set is required");
  if (years_back.empty()) throw Error("experiment suite: at least one years-back value is required");
  if (seeds.empty()) throw Error("experiment suite: at least one seed is required");
  for (const std::string& f : feature_sets) FeatureConfig::parse(f);  // throws on bad names
}

ExperimentSuite parse_suite_file(const std::string& path) {
  ExperimentSuite suite;
  for (const auto& [key, value] : parse_kv_file(path)) {
    if (key == "corpus")
      suite.corpus_path = value;
    else if (key == "embeddings")
      suite.embeddings_path = value;
    else if (key == "probe")
      suite.probe = parse_probe_mode(value);
    else if (key == "models") {
      for (const std::string& m : split_list(value)) suite.models.push_back(parse_model_kind(m));
    } else if (key == "features")
      suite.feature_sets = split_list(value);
    else if (key == "years-back") {
      suite.years_back.clear();
      for (const std::string& y : split_list(value))
        suite.years_back.push_back(y == "all" ? 0
                                              : static_cast<int>(parse_int(y, key)));
    } else if (key == "seeds") {
      suite.seeds.clear();
      for (const std::string& s : split_list(value))
        suite.seeds.push_back(static_cast<std::uint64_t>(parse_int(s, key)));
    } else if (key == "split-seed")
      suite.split_seed = static_cast<std::uint64_t>(parse_int(value, key));
    else if (key == "embedding-width")
      suite.embedding_width = static_cast<int>(parse_int(value, key));
    else if (key == "gcn-hidden")
      suite.gcn_hidden = static_cast<int>(parse_int(value, key));
    else if (key == "lstm-hidden")
      suite.lstm_hidden = static_cast<int>(parse_int(value, key));
    else if (key == "gcn-tanh")
      suite.gcn_tanh = parse_bool(value, key);
    else if (key == "lr")
      suite.train.learning_rate = parse_real(value, key);
    else if (key == "batch-size")
      suite.train.batch_size = static_cast<int>(parse_int(value, key));
    else if (key == "max-epochs")
      suite.train.max_epochs = static_cast<int>(parse_int(value, key));
    else if (key == "patience")
      suite.train.patience = static_cast<int>(parse_int(value, key));
    else
      throw Error(path + ": unknown suite key " + key);
  }
  suite.validate();
  return suite;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) throw Error("mean of an empty list is undefined");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double population_std(const std::vector<double>& values) {
  const double mean = mean_of(values);
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return std::sqrt(sq / static_cast<double>(values.size()));
}

namespace {

std::string cell_name(ModelKind kind, const std::string& feature_set, int years_back) {
  return to_string(kind) + "_" + feature_set + "_y" + std::to_string(years_back);
}

void write_curve(const std::vector<TimestepMae>& curve, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "year\tn_cells\tmae\n";
  for (const TimestepMae& p : curve) {
    out << p.year << "\t" << p.cells << "\t";
    if (p.mae.has_value())
      out << g17(*p.mae) << "\n";
    else
      out << "NA\n";
  }
}

std::vector<TimestepMae> read_curve(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty curve file");
  std::vector<TimestepMae> curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cols = split(line, '\t');
    if (cols.size() != 3) throw Error(path.string() + ": malformed curve row");
    TimestepMae p;
    p.year = static_cast<int>(parse_int(cols[0], path.string()));
    p.cells = parse_int(cols[1], path.string());
    if (cols[2] != "NA") p.mae = parse_real(cols[2], path.string());
    curve.push_back(p);
  }
  return curve;
}

void write_kv_tsv(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::ofstream out = open_out(path);
  for (const auto& [k, v] : rows) out << k << "\t" << v << "\n";
}

std::map<std::string, std::string> read_kv_tsv(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cols = split(line, '\t');
    if (cols.size() != 2) throw Error(path.string() + ": malformed key-value row");
    out[cols[0]] = cols[1];
  }
  return out;
}

struct CellInputs {
  const DynamicGraph* window = nullptr;
  const std::vector<SparseMatrix>* adjacencies = nullptr;
  const FeatureTensor* features = nullptr;
  const LabelMatrix* labels = nullptr;
};

CellReport run_cell(const ExperimentSuite& suite, const Corpus& corpus, const CellInputs& in,
                    const SplitAssignment& split, ModelKind kind,
                    const std::string& feature_set, int years_back, const fs::path& out_dir) {
  CellReport cell;
  cell.model = to_string(kind);
  cell.feature_set = feature_set;
  cell.years_back = years_back;
  cell.seeds = suite.seeds;
  cell.years = in.window->years();

  const std::string name = cell_name(kind, feature_set, years_back);
  const fs::path cell_dir = out_dir / "cells" / name;
  fs::create_directories(cell_dir);

  std::ostringstream years_csv;
  for (std::size_t i = 0; i < cell.years.size(); ++i)
    years_csv << (i > 0 ? "," : "") << cell.years[i];
  write_kv_tsv(cell_dir / "cell.tsv", {{"model", cell.model},
                                       {"features", cell.feature_set},
                                       {"years_back", std::to_string(years_back)},
                                       {"years", years_csv.str()}});

  const bool needs_graph = kind == ModelKind::gcn_lstm || kind == ModelKind::gcn_only;
  TrainData data;
  data.adjacencies = needs_graph ? in.adjacencies : nullptr;
  data.node_features = in.features->x;
  data.labels = in.labels->labels;
  data.mask = in.labels->mask;
  data.train_nodes = split.train;
  data.val_nodes = split.val;

  Matrix first_predictions(0, 0);
  for (const std::uint64_t seed : suite.seeds) {
    const fs::path seed_dir = cell_dir / ("seed_" + std::to_string(seed));
    try {
      ModelConfig mc;
      mc.kind = kind;
      mc.input_width = in.features->width();
      mc.gcn_hidden = suite.gcn_hidden;
      mc.lstm_hidden = suite.lstm_hidden;
      mc.gcn_tanh = suite.gcn_tanh;
      TrainConfig tc = suite.train;
      tc.seed = seed;

      const TrainResult r = train_model(mc, tc, data);
      const Matrix test_pred = predict(r.params, data.adjacencies, data.node_features, split.test);
      const double test_mae = mae_rows(test_pred, data.labels, data.mask, split.test);
      const std::vector<TimestepMae> curve =
          per_timestep_mae(test_pred, data.labels, data.mask, split.test, cell.years);

      fs::create_directories(seed_dir);
      write_kv_tsv(seed_dir / "metrics.tsv",
                   {{"seed", std::to_string(seed)},
                    {"test_mae", g17(test_mae)},
                    {"best_epoch", std::to_string(r.best_epoch)},
                    {"best_val_mae", g17(r.best_val_mae)},
                    {"epochs_run", std::to_string(r.history.size())}});
      {
        std::ofstream hist = open_out(seed_dir / "history.tsv");
        hist << "epoch\ttrain_mae\tval_mae\n";
        for (const EpochStats& e : r.history)
          hist << e.epoch << "\t" << g17(e.train_mae) << "\t" << g17(e.val_mae) << "\n";
      }
      write_curve(curve, seed_dir / "curve.tsv");
      {
        std::ofstream pred = open_out(seed_dir / "predictions.tsv");
        pred << "node";
        for (int year : cell.years) pred << "\t" << year;
        pred << "\n";
        for (std::size_t k = 0; k < split.test.size(); ++k) {
          pred << split.test[k];
          for (int t = 0; t < test_pred.cols; ++t)
            pred << "\t" << g17(test_pred.at(static_cast<int>(k), t));
          pred << "\n";
        }
      }
      save_params(r.params, (seed_dir / "model.ckpt").string());

      cell.per_seed_test_mae.push_back(test_mae);
      cell.curves.push_back(curve);
      if (first_predictions.rows == 0) first_predictions = test_pred;
    } catch (const Error& err) {
      throw Error("cell " + name + ", seed " + std::to_string(seed) + ": " + err.what());
    }
  }

  cell.mean_mae = mean_of(cell.per_seed_test_mae);
  cell.std_mae = population_std(cell.per_seed_test_mae);
  {
    std::ofstream sum = open_out(cell_dir / "summary.tsv");
    sum << "seed\ttest_mae\n";
    for (std::size_t i = 0; i < suite.seeds.size(); ++i)
      sum << suite.seeds[i] << "\t" << g17(cell.per_seed_test_mae[i]) << "\n";
    sum << "mean\t" << g17(cell.mean_mae) << "\n";
    sum << "std\t" << g17(cell.std_mae) << "\n";
  }
  save_venue_table(venue_mae_table(first_predictions, data.labels, data.mask, corpus,
                                   *in.window, split.test),
                   (cell_dir / "venues.tsv").string());
  return cell;
}

}  // namespace

std::vector<CellReport> run_experiment(const ExperimentSuite& suite,
                                       const std::string& out_dir) {
  suite.validate();
  const fs::path out(out_dir);
  fs::create_directories(out / "cells");

  const Corpus corpus = load_corpus(suite.corpus_path);
  const TimelineSet timelines = cumulative_citation_counts(corpus);
  const DynamicGraph graph = build_dynamic_graph(corpus, suite.probe);
  const SplitAssignment split =
      load_or_create_split((out / "split.tsv").string(), graph.node_count(), suite.split_seed);

  bool needs_abstract = false;
  for (const std::string& f : suite.feature_sets)
    needs_abstract = needs_abstract || FeatureConfig::parse(f).use_abstract;
  std::optional<EmbeddingStore> store;
  if (needs_abstract)
    store.emplace(abstract_features(corpus, suite.embeddings_path, suite.embedding_width));

  std::vector<CellReport> reports;
  for (const int yb : suite.years_back) {
    const DynamicGraph window = window_last(graph, yb);
    const LabelMatrix labels = label_matrix(window, timelines, corpus);
    std::vector<SparseMatrix> adjacencies;
    adjacencies.reserve(window.years().size());
    for (const int year : window.years())
      adjacencies.push_back(normalized_adjacency(window, year));

    for (const std::string& feature_set : suite.feature_sets) {
      const FeatureConfig fc = FeatureConfig::parse(feature_set);
      const FeatureTensor features =
          assemble_feature_tensor(window, corpus, fc, store ? &*store : nullptr);
      CellInputs inputs;
      inputs.window = &window;
      inputs.adjacencies = &adjacencies;
      inputs.features = &features;
      inputs.labels = &labels;
      for (const ModelKind kind : suite.models)
        reports.push_back(run_cell(suite, corpus, inputs, split, kind, feature_set, yb, out));
    }
  }
  return reports;
}

void write_report(const std::string& dir) {
  const fs::path root(dir);
  const fs::path cells = root / "cells";
  if (!fs::is_directory(cells)) throw Error(dir + ": no cells directory to report on");

  std::vector<fs::path> cell_dirs;
  for (const auto& entry : fs::directory_iterator(cells))
    if (entry.is_directory()) cell_dirs.push_back(entry.path());
  std::sort(cell_dirs.begin(), cell_dirs.end());
  if (cell_dirs.empty()) throw Error(dir + ": no experiment cells found");

  std::ofstream summary = open_out(root / "summary.tsv");
  summary << "model\tfeatures\tyears_back\tn_seeds\tmean_mae\tstd_mae\n";
  std::ofstream curves = open_out(root / "curves.tsv");
  curves << "model\tfeatures\tyears_back\tseed\tyear\tn_cells\tmae\n";
  std::ofstream venues = open_out(root / "venues.tsv");
  venues << "model\tfeatures\tyears_back\tvenue\tyear\tmean_mae\tavg_degree\tn\n";

  for (const fs::path& cell_dir : cell_dirs) {
    const auto meta = read_kv_tsv(cell_dir / "cell.tsv");
    const std::string model = meta.at("model");
    const std::string features = meta.at("features");
    const std::string years_back = meta.at("years_back");
    const std::string prefix = model + "\t" + features + "\t" + years_back + "\t";

    std::vector<std::pair<long long, fs::path>> seed_dirs;
    for (const auto& entry : fs::directory_iterator(cell_dir)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_directory() && name.rfind("seed_", 0) == 0)
        seed_dirs.emplace_back(parse_int(name.substr(5), name), entry.path());
    }
    std::sort(seed_dirs.begin(), seed_dirs.end());
    if (seed_dirs.empty()) throw Error(cell_dir.string() + ": no per-seed artifacts");

    std::vector<double> maes;
    std::vector<std::vector<TimestepMae>> cell_curves;
    for (const auto& [seed, seed_dir] : seed_dirs) {
      const auto metrics = read_kv_tsv(seed_dir / "metrics.tsv");
      maes.push_back(parse_real(metrics.at("test_mae"), "test_mae"));
      const std::vector<TimestepMae> curve = read_curve(seed_dir / "curve.tsv");
      for (const TimestepMae& p : curve) {
        curves << prefix << seed << "\t" << p.year << "\t" << p.cells << "\t";
        if (p.mae.has_value())
          curves << g17(*p.mae) << "\n";
        else
          curves << "NA\n";
      }
      cell_curves.push_back(curve);
    }

    summary << prefix << maes.size() << "\t" << g17(mean_of(maes)) << "\t"
            << g17(population_std(maes)) << "\n";

    // Seed-averaged curve; a year stays a gap only if every seed missed it.
    const std::size_t t_count = cell_curves.front().size();
    for (std::size_t t = 0; t < t_count; ++t) {
      std::vector<double> defined;
      long long cells_total = 0;
      for (const auto& curve : cell_curves) {
        if (curve.size() != t_count)
          throw Error(cell_dir.string() + ": seed curves disagree on length");
        cells_total += curve[t].cells;
        if (curve[t].mae.has_value()) defined.push_back(*curve[t].mae);
      }
      curves << prefix << "mean\t" << cell_curves.front()[t].year << "\t" << cells_total
             << "\t";
      if (defined.empty())
        curves << "NA\n";
      else
        curves << g17(mean_of(defined)) << "\n";
    }

    std::ifstream vt(cell_dir / "venues.tsv", std::ios::binary);
    if (vt) {
      std::string line;
      std::getline(vt, line);  // header
      while (std::getline(vt, line))
        if (!line.empty()) venues << prefix << line << "\n";
    }
  }
}

}  // namespace citeflow
