#include "citeflow/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace citeflow {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, long long line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad float '" + s + "'", line_no);
  }
}

void write_matrix_tsv(const Matrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      if (j) out << '\t';
      out << format_double(m.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path);
}

Matrix read_matrix_tsv(const std::string& path, int rows, int cols) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  Matrix m(rows, cols);
  std::string line;
  long long line_no = 0;
  int r = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (r >= rows) throw ParseError(path + ": more rows than expected", line_no);
    auto cells = split(line, '\t');
    if (static_cast<int>(cells.size()) != cols)
      throw ParseError(path + ": expected " + std::to_string(cols) + " columns", line_no);
    for (int j = 0; j < cols; ++j) m.at(r, j) = parse_double(cells[j], line_no);
    ++r;
  }
  if (r != rows) throw Error(path + ": expected " + std::to_string(rows) + " rows");
  return m;
}

}  // namespace

std::map<std::string, double> author_rank(const Corpus& corpus, const TimelineSet& timelines,
                                          int year) {
  std::map<std::string, long long> totals;
  for (const PaperRecord& p : corpus.papers()) {
    const long long c = timelines.count_at(p.id, year);
    for (const std::string& a : p.author_ids) totals[a] += c;
  }
  return dense_rank_normalize(totals);
}

std::map<std::string, double> author_rank(const Corpus& corpus, int year) {
  return author_rank(corpus, cumulative_citation_counts(corpus), year);
}

std::map<VenueKey, double> venue_rank(const Corpus& corpus, const TimelineSet& timelines,
                                      int year) {
  std::map<VenueKey, long long> totals;
  for (const PaperRecord& p : corpus.papers())
    totals[corpus.venue_key(p)] += timelines.count_at(p.id, year);
  return dense_rank_normalize(totals);
}

std::map<VenueKey, double> venue_rank(const Corpus& corpus, int year) {
  return venue_rank(corpus, cumulative_citation_counts(corpus), year);
}

std::vector<double> fallback_embedding(const std::string& abstract_text, int width,
                                       std::uint64_t seed) {
  std::vector<double> v(width, 0.0);
  std::istringstream in(abstract_text);
  std::string token;
  while (in >> token) {
    const std::uint64_t h = fnv1a64(token, seed);
    const int idx = static_cast<int>(h % static_cast<std::uint64_t>(width));
    v[idx] += ((h >> 32) & 1) ? 1.0 : -1.0;
  }
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
  }
  return v;
}

const std::vector<double>& EmbeddingStore::vector_for(const std::string& id) const {
  auto it = vectors_.find(id);
  if (it == vectors_.end()) throw Error("no embedding for paper " + id);
  return it->second;
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("embedding store: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("embedding store: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("width=", 0) != 0)
    throw ParseError("embedding store: first line must be width=<n>", 1);
  EmbeddingStore store;
  try {
    store.width_ = std::stoi(line.substr(6));
  } catch (const std::exception&) {
    throw ParseError("embedding store: bad width value", 1);
  }
  if (store.width_ <= 0) throw ParseError("embedding store: width must be positive", 1);
  store.provenance_ = "external";

  long long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 2) throw ParseError("embedding store: expected id<TAB>csv", line_no);
    auto cells = split(cols[1], ',');
    if (static_cast<int>(cells.size()) != store.width_)
      throw ParseError("embedding store: row width " + std::to_string(cells.size()) +
                           " does not match header width " + std::to_string(store.width_),
                       line_no);
    std::vector<double> v(store.width_);
    for (int j = 0; j < store.width_; ++j) v[j] = parse_double(cells[j], line_no);
    if (!store.vectors_.emplace(cols[0], std::move(v)).second)
      throw ParseError("embedding store: duplicate id " + cols[0], line_no);
  }
  return store;
}

void EmbeddingStore::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("embedding store: cannot write " + path);
  out << "width=" << width_ << '\n';
  for (const auto& [id, v] : vectors_) {
    out << id << '\t';
    for (int j = 0; j < width_; ++j) {
      if (j) out << ',';
      out << format_double(v[j]);
    }
    out << '\n';
  }
  if (!out) throw Error("embedding store: write failed for " + path);
}

EmbeddingStore abstract_features(const Corpus& corpus, const std::string& store_path, int width,
                                 std::uint64_t fallback_seed) {
  EmbeddingStore external;
  bool have_external = false;
  if (!store_path.empty()) {
    external = EmbeddingStore::load(store_path);
    if (external.width() != width)
      throw Error("embedding store width " + std::to_string(external.width()) +
                  " does not match configured width " + std::to_string(width));
    have_external = true;
  }

  EmbeddingStore store;
  store.width_ = width;
  long long n_external = 0, n_fallback = 0;
  for (const PaperRecord& p : corpus.papers()) {
    if (have_external && external.contains(p.id)) {
      store.vectors_.emplace(p.id, external.vector_for(p.id));
      ++n_external;
    } else {
      store.vectors_.emplace(p.id, fallback_embedding(p.abstract_text, width, fallback_seed));
      ++n_fallback;
    }
  }
  if (n_external > 0 && n_fallback > 0)
    store.provenance_ = "external+fallback-hash";
  else if (n_external > 0)
    store.provenance_ = "external";
  else
    store.provenance_ = "fallback-hash";
  return store;
}

FeatureConfig FeatureConfig::parse(const std::string& set) {
  FeatureConfig cfg;
  if (set == "abstract") {
    cfg.use_abstract = true;
  } else if (set == "author") {
    cfg.use_author = true;
  } else if (set == "venue") {
    cfg.use_venue = true;
  } else if (set == "author+venue") {
    cfg.use_author = cfg.use_venue = true;
  } else if (set == "all") {
    cfg.use_abstract = cfg.use_author = cfg.use_venue = true;
  } else {
    throw Error("unknown feature set: " + set);
  }
  return cfg;
}

std::string FeatureConfig::set_name() const {
  if (use_abstract && use_author && use_venue) return "all";
  if (use_abstract) return "abstract";
  if (use_author && use_venue) return "author+venue";
  if (use_author) return "author";
  if (use_venue) return "venue";
  throw Error("feature config selects nothing");
}

int FeatureConfig::width(int embedding_width) const {
  return (use_abstract ? embedding_width : 0) + (use_author ? 3 : 0) + (use_venue ? 1 : 0);
}

FeatureTensor assemble_feature_tensor(const DynamicGraph& graph, const Corpus& corpus,
                                      const FeatureConfig& config, const EmbeddingStore* store) {
  if (!config.use_abstract && !config.use_author && !config.use_venue)
    throw Error("feature config selects nothing");
  if (config.use_abstract && store == nullptr)
    throw Error("abstract features need an embedding store");

  const int m = graph.node_count();
  const int embed_w = config.use_abstract ? store->width() : 0;
  const int n = config.width(embed_w);
  const TimelineSet timelines = cumulative_citation_counts(corpus);
  const int final_year = graph.years().back();

  FeatureTensor out;
  out.years = graph.years();
  out.x.reserve(out.years.size());

  // rank maps per distinct reference year
  std::map<int, std::map<std::string, double>> author_ranks;
  std::map<int, std::map<VenueKey, double>> venue_ranks;
  for (int year : out.years) {
    const int ref = config.rank_ref == RankReference::rolling ? year - 1 : final_year;
    if (config.use_author && !author_ranks.count(ref))
      author_ranks.emplace(ref, author_rank(corpus, timelines, ref));
    if (config.use_venue && !venue_ranks.count(ref))
      venue_ranks.emplace(ref, venue_rank(corpus, timelines, ref));
  }

  for (int year : out.years) {
    const int ref = config.rank_ref == RankReference::rolling ? year - 1 : final_year;
    Matrix x(m, n);
    for (int i = 0; i < m; ++i) {
      const PaperRecord& p = corpus.paper(graph.index_to_id()[i]);
      int col = 0;
      if (config.use_abstract) {
        const std::vector<double>& v = store->vector_for(p.id);
        std::copy(v.begin(), v.end(), x.row_ptr(i));
        col += embed_w;
      }
      if (config.use_author) {
        // no authors: treat as unranked, i.e. the worst rank
        double best = 1.0, worst = 1.0, mean = 1.0;
        if (!p.author_ids.empty()) {
          const auto& ranks = author_ranks.at(ref);
          best = 2.0;
          worst = -1.0;
          double sum = 0.0;
          for (const std::string& a : p.author_ids) {
            const double r = ranks.at(a);
            best = std::min(best, r);
            worst = std::max(worst, r);
            sum += r;
          }
          mean = sum / static_cast<double>(p.author_ids.size());
        }
        x.at(i, col) = best;
        x.at(i, col + 1) = mean;
        x.at(i, col + 2) = worst;
        col += 3;
      }
      if (config.use_venue) {
        x.at(i, col) = venue_ranks.at(ref).at(corpus.venue_key(p));
        ++col;
      }
    }
    out.x.push_back(std::move(x));
  }
  return out;
}

LabelMatrix label_matrix(const DynamicGraph& graph, const TimelineSet& timelines,
                         const Corpus& corpus) {
  const int m = graph.node_count();
  const int t_count = static_cast<int>(graph.years().size());
  LabelMatrix out{Matrix(m, t_count), Matrix(m, t_count)};
  for (int i = 0; i < m; ++i) {
    const std::string& id = graph.index_to_id()[i];
    const PaperRecord& p = corpus.paper(id);
    for (int t = 0; t < t_count; ++t) {
      const int year = graph.years()[t];
      const long long c = timelines.count_at(id, year);
      out.labels.at(i, t) = std::log1p(static_cast<double>(c));
      out.mask.at(i, t) = year >= p.year ? 1.0 : 0.0;
    }
  }
  return out;
}

void save_features(const FeatureTensor& features, const LabelMatrix& labels,
                   const std::string& dir) {
  if (features.x.empty()) throw Error("save_features: empty tensor");
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["schema"] = "citeflow-features-v1";
  meta["years"] = features.years;
  meta["node_count"] = features.x.front().rows;
  meta["width"] = features.width();
  std::ofstream mf(dir + "/meta.json");
  if (!mf) throw Error("save_features: cannot write meta.json");
  mf << meta.dump(2) << '\n';

  for (std::size_t t = 0; t < features.years.size(); ++t)
    write_matrix_tsv(features.x[t], dir + "/features_" + std::to_string(features.years[t]) + ".tsv");
  write_matrix_tsv(labels.labels, dir + "/labels.tsv");
  write_matrix_tsv(labels.mask, dir + "/mask.tsv");
}

void load_features(const std::string& dir, FeatureTensor& features, LabelMatrix& labels) {
  std::ifstream mf(dir + "/meta.json");
  if (!mf) throw Error("load_features: cannot open " + dir + "/meta.json");
  nlohmann::json meta;
  try {
    mf >> meta;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("load_features: bad meta.json: ") + e.what());
  }
  if (meta.value("schema", "") != "citeflow-features-v1")
    throw Error("load_features: unrecognized schema in " + dir);
  const int m = meta.at("node_count").get<int>();
  const int width = meta.at("width").get<int>();
  features.years = meta.at("years").get<std::vector<int>>();
  if (features.years.empty()) throw Error("load_features: empty year list");

  features.x.clear();
  for (int year : features.years)
    features.x.push_back(
        read_matrix_tsv(dir + "/features_" + std::to_string(year) + ".tsv", m, width));
  const int t_count = static_cast<int>(features.years.size());
  labels.labels = read_matrix_tsv(dir + "/labels.tsv", m, t_count);
  labels.mask = read_matrix_tsv(dir + "/mask.tsv", m, t_count);
}

}  // namespace citeflow
