#include "citeflow/dyngraph.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

namespace citeflow {

namespace {

struct Dsu {
  std::vector<int> parent;
  std::vector<int> size;
  explicit Dsu(int n) : parent(n), size(n, 1) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  // true when the call actually merged two components
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size[a] < size[b]) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
    return true;
  }
};

// Paper positions and citation edges grouped by corpus-year index. Edges are
// keyed by the citing paper's year: the cited paper is never newer.
struct YearPlan {
  std::vector<std::vector<int>> papers;
  std::vector<std::vector<std::pair<int, int>>> edges;
};

YearPlan make_plan(const Corpus& corpus) {
  const auto& years = corpus.years();
  YearPlan plan;
  plan.papers.resize(years.size());
  plan.edges.resize(years.size());
  for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
    const PaperRecord& p = corpus.paper_at(pos);
    auto yit = std::lower_bound(years.begin(), years.end(), p.year);
    std::size_t yi = static_cast<std::size_t>(yit - years.begin());
    plan.papers[yi].push_back(static_cast<int>(pos));
    for (const std::string& target : p.cited_ids)
      plan.edges[yi].emplace_back(static_cast<int>(pos), corpus.position(target));
  }
  return plan;
}

// Runs the union-find evolution over corpus years; fn(year_index, dsu) fires
// after each year's nodes and edges are in.
template <class F>
void evolve(const Corpus& corpus, F&& fn) {
  const YearPlan plan = make_plan(corpus);
  Dsu dsu(static_cast<int>(corpus.size()));
  for (std::size_t yi = 0; yi < corpus.years().size(); ++yi) {
    for (auto [a, b] : plan.edges[yi]) dsu.unite(a, b);
    fn(yi, dsu);
  }
}

}  // namespace

ProbeMode parse_probe_mode(const std::string& s) {
  if (s == "alg1") return ProbeMode::alg1;
  if (s == "final-component") return ProbeMode::final_component;
  throw Error("unknown probe mode: " + s);
}

std::string to_string(ProbeMode mode) {
  return mode == ProbeMode::alg1 ? "alg1" : "final-component";
}

std::vector<std::vector<std::string>> components_at(const Corpus& corpus, int year) {
  const auto& years = corpus.years();
  if (!std::binary_search(years.begin(), years.end(), year))
    throw Error("components_at: year " + std::to_string(year) + " not in corpus");

  Dsu dsu(static_cast<int>(corpus.size()));
  for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
    const PaperRecord& p = corpus.paper_at(pos);
    if (p.year > year) continue;
    for (const std::string& target : p.cited_ids)
      dsu.unite(static_cast<int>(pos), corpus.position(target));
  }

  // positions ascend in id order, so each component's ids come out sorted
  std::unordered_map<int, std::vector<std::string>> by_root;
  for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
    if (corpus.paper_at(pos).year > year) continue;
    by_root[dsu.find(static_cast<int>(pos))].push_back(corpus.paper_at(pos).id);
  }
  std::vector<std::vector<std::string>> components;
  components.reserve(by_root.size());
  for (auto& [root, ids] : by_root) components.push_back(std::move(ids));
  std::sort(components.begin(), components.end(),
            [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
              if (a.size() != b.size()) return a.size() > b.size();
              return a.front() < b.front();
            });
  return components;
}

long long probe_score(const Corpus& corpus, const std::string& paper_id) {
  const PaperRecord& p = corpus.paper(paper_id);
  const int pos = corpus.position(paper_id);
  long long score = 0;
  evolve(corpus, [&](std::size_t yi, Dsu& dsu) {
    if (corpus.years()[yi] >= p.year) score += dsu.size[dsu.find(pos)];
  });
  return score;
}

std::unordered_map<std::string, long long> probe_scores(const Corpus& corpus, ProbeMode mode) {
  if (corpus.empty()) throw Error("probe_scores: empty corpus");

  std::vector<int> probed;
  if (mode == ProbeMode::alg1) {
    const int first = corpus.min_year();
    for (std::size_t pos = 0; pos < corpus.size(); ++pos)
      if (corpus.paper_at(pos).year == first) probed.push_back(static_cast<int>(pos));
  } else {
    auto components = components_at(corpus, corpus.max_year());
    for (const std::string& id : components.front()) probed.push_back(corpus.position(id));
  }

  std::unordered_map<std::string, long long> scores;
  scores.reserve(probed.size());
  for (int pos : probed) scores[corpus.paper_at(pos).id] = 0;

  evolve(corpus, [&](std::size_t yi, Dsu& dsu) {
    const int year = corpus.years()[yi];
    for (int pos : probed) {
      const PaperRecord& p = corpus.paper_at(pos);
      if (p.year <= year) scores[p.id] += dsu.size[dsu.find(pos)];
    }
  });
  return scores;
}

DynamicGraph build_dynamic_graph(const Corpus& corpus, ProbeMode mode) {
  if (corpus.empty()) throw Error("build_dynamic_graph: empty corpus");

  const auto scores = probe_scores(corpus, mode);
  if (scores.empty()) throw Error("build_dynamic_graph: empty probe set");
  std::string best;
  long long best_score = -1;
  for (const auto& [id, score] : scores) {
    if (score > best_score || (score == best_score && id < best)) {
      best = id;
      best_score = score;
    }
  }

  const int best_pos = corpus.position(best);
  const int best_year = corpus.paper(best).year;

  std::vector<int> arrival(corpus.size(), -1);
  evolve(corpus, [&](std::size_t yi, Dsu& dsu) {
    const int year = corpus.years()[yi];
    if (year < best_year) return;
    const int root = dsu.find(best_pos);
    for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
      if (arrival[pos] >= 0 || corpus.paper_at(pos).year > year) continue;
      if (dsu.find(static_cast<int>(pos)) == root) arrival[pos] = year;
    }
  });

  // members in id order become the dense index 0..m-1
  std::vector<std::string> index_to_id;
  std::vector<int> node_arrivals;
  std::vector<int> member_index(corpus.size(), -1);
  for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
    if (arrival[pos] < 0) continue;
    member_index[pos] = static_cast<int>(index_to_id.size());
    index_to_id.push_back(corpus.paper_at(pos).id);
    node_arrivals.push_back(arrival[pos]);
  }

  std::set<std::pair<int, int>> edge_set;
  for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
    if (member_index[pos] < 0) continue;
    const int u = member_index[pos];
    for (const std::string& target : corpus.paper_at(pos).cited_ids) {
      const int v = member_index[corpus.position(target)];
      if (v < 0) throw Error("build_dynamic_graph: cited paper outside the component");
      if (u != v) edge_set.insert({std::min(u, v), std::max(u, v)});
    }
  }

  std::vector<int> snapshot_years;
  for (int y : corpus.years())
    if (y >= best_year) snapshot_years.push_back(y);

  return DynamicGraph(std::move(snapshot_years), std::move(index_to_id), std::move(node_arrivals),
                      std::vector<std::pair<int, int>>(edge_set.begin(), edge_set.end()),
                      to_string(mode), best);
}

DynamicGraph::DynamicGraph(std::vector<int> years, std::vector<std::string> index_to_id,
                           std::vector<int> node_arrival_years,
                           std::vector<std::pair<int, int>> edges, std::string probe_mode,
                           std::string best_paper)
    : years_(std::move(years)),
      index_to_id_(std::move(index_to_id)),
      arrival_years_(std::move(node_arrival_years)),
      edges_(std::move(edges)),
      probe_mode_(std::move(probe_mode)),
      best_paper_(std::move(best_paper)) {
  const int m = node_count();
  if (m == 0) throw Error("dynamic graph: no nodes");
  if (years_.empty()) throw Error("dynamic graph: no years");
  if (!std::is_sorted(years_.begin(), years_.end()) ||
      std::adjacent_find(years_.begin(), years_.end()) != years_.end())
    throw Error("dynamic graph: years must be strictly increasing");
  if (static_cast<int>(arrival_years_.size()) != m)
    throw Error("dynamic graph: arrival year count mismatch");

  id_to_index_.reserve(index_to_id_.size());
  for (int i = 0; i < m; ++i) {
    if (!id_to_index_.emplace(index_to_id_[i], i).second)
      throw Error("dynamic graph: duplicate node id " + index_to_id_[i]);
  }
  for (int a : arrival_years_)
    if (a > years_.back()) throw Error("dynamic graph: node arrives after the final year");

  std::sort(edges_.begin(), edges_.end());
  edge_years_.reserve(edges_.size());
  std::pair<int, int> prev{-1, -1};
  for (const auto& [u, v] : edges_) {
    if (u < 0 || v >= m || u >= v) throw Error("dynamic graph: bad edge");
    if (std::pair<int, int>{u, v} == prev) throw Error("dynamic graph: duplicate edge");
    prev = {u, v};
    edge_years_.push_back(std::max(arrival_years_[u], arrival_years_[v]));
  }

  // every snapshot must be a single connected component
  Dsu dsu(m);
  std::vector<std::size_t> nodes_by_arrival(m);
  std::iota(nodes_by_arrival.begin(), nodes_by_arrival.end(), 0);
  std::sort(nodes_by_arrival.begin(), nodes_by_arrival.end(),
            [&](std::size_t a, std::size_t b) { return arrival_years_[a] < arrival_years_[b]; });
  std::vector<std::size_t> edges_by_year(edges_.size());
  std::iota(edges_by_year.begin(), edges_by_year.end(), 0);
  std::sort(edges_by_year.begin(), edges_by_year.end(),
            [&](std::size_t a, std::size_t b) { return edge_years_[a] < edge_years_[b]; });
  std::size_t ni = 0, ei = 0;
  long long active = 0, merges = 0;
  for (int year : years_) {
    while (ni < nodes_by_arrival.size() && arrival_years_[nodes_by_arrival[ni]] <= year) {
      ++active;
      ++ni;
    }
    while (ei < edges_by_year.size() && edge_years_[edges_by_year[ei]] <= year) {
      if (dsu.unite(edges_[edges_by_year[ei]].first, edges_[edges_by_year[ei]].second)) ++merges;
      ++ei;
    }
    if (active > 0 && active - merges != 1)
      throw Error("dynamic graph: snapshot at year " + std::to_string(year) +
                  " is not connected");
  }
  if (active != m) throw Error("dynamic graph: some nodes never arrive within the year range");
}

int DynamicGraph::node_index(const std::string& id) const {
  auto it = id_to_index_.find(id);
  return it == id_to_index_.end() ? -1 : it->second;
}

bool DynamicGraph::has_year(int year) const {
  return std::binary_search(years_.begin(), years_.end(), year);
}

Snapshot DynamicGraph::snapshot(int year) const {
  if (!has_year(year)) throw Error("dynamic graph: no snapshot for year " + std::to_string(year));
  Snapshot s;
  s.year = year;
  for (int i = 0; i < node_count(); ++i)
    if (arrival_years_[i] <= year) s.nodes.push_back(i);
  for (std::size_t e = 0; e < edges_.size(); ++e)
    if (edge_years_[e] <= year) s.edges.push_back(edges_[e]);
  return s;
}

DynamicGraph window_last(const DynamicGraph& graph, int k) {
  const int t = static_cast<int>(graph.years().size());
  if (k <= 0 || k >= t) {
    return DynamicGraph(graph.years(), graph.index_to_id(), graph.arrival_years(), graph.edges(),
                        graph.probe_mode(), graph.best_paper());
  }
  std::vector<int> years(graph.years().end() - k, graph.years().end());
  return DynamicGraph(std::move(years), graph.index_to_id(), graph.arrival_years(), graph.edges(),
                      graph.probe_mode(), graph.best_paper());
}

SparseMatrix normalized_adjacency(const DynamicGraph& graph, int year) {
  if (!graph.has_year(year))
    throw Error("normalized_adjacency: no snapshot for year " + std::to_string(year));
  const int m = graph.node_count();

  std::vector<long long> degree(m, 0);
  const auto& edges = graph.edges();
  const auto& edge_years = graph.edge_years();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edge_years[e] > year) continue;
    ++degree[edges[e].first];
    ++degree[edges[e].second];
  }

  // d-tilde counts the self-loop; absent nodes carry the self-loop alone
  std::vector<std::tuple<int, int, double>> triplets;
  triplets.reserve(m + 2 * edges.size());
  std::vector<double> inv_sqrt(m);
  for (int i = 0; i < m; ++i) {
    const double d = static_cast<double>(degree[i]) + 1.0;
    inv_sqrt[i] = 1.0 / std::sqrt(d);
    triplets.emplace_back(i, i, 1.0 / d);
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edge_years[e] > year) continue;
    const auto [u, v] = edges[e];
    const double w = inv_sqrt[u] * inv_sqrt[v];  // one value for both mirror entries
    triplets.emplace_back(u, v, w);
    triplets.emplace_back(v, u, w);
  }
  return SparseMatrix::from_triplets(m, m, std::move(triplets));
}

std::vector<YearStats> snapshot_stats(const DynamicGraph& graph, const Corpus& corpus) {
  const TimelineSet timelines = cumulative_citation_counts(corpus);
  const int m = graph.node_count();
  std::vector<YearStats> out;
  out.reserve(graph.years().size());

  for (int year : graph.years()) {
    YearStats st;
    st.year = year;

    std::vector<long long> degree(m, 0);
    const auto& edges = graph.edges();
    const auto& edge_years = graph.edge_years();
    long long pairs = 0;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (edge_years[e] > year) continue;
      ++degree[edges[e].first];
      ++degree[edges[e].second];
      ++pairs;
    }

    long long cite_sum = 0;
    for (int i = 0; i < m; ++i) {
      if (graph.arrival_years()[i] > year) continue;
      ++st.n_nodes;
      st.max_degree = std::max(st.max_degree, degree[i]);
      const std::string& id = graph.index_to_id()[i];
      const long long c = timelines.count_at(id, year);
      st.max_citations = std::max(st.max_citations, c);
      cite_sum += c;
      const PaperRecord& p = corpus.paper(id);
      for (const std::string& target : p.cited_ids) {
        const int v = graph.node_index(target);
        if (v >= 0 && graph.arrival_years()[v] <= year) ++st.n_directed_edges;
      }
    }
    if (st.n_nodes > 0) {
      st.mean_degree = 2.0 * static_cast<double>(pairs) / static_cast<double>(st.n_nodes);
      st.avg_citations = static_cast<double>(cite_sum) / static_cast<double>(st.n_nodes);
    }
    out.push_back(st);
  }
  return out;
}

void save_graph(const DynamicGraph& graph, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::ordered_json meta;
  meta["schema"] = "citeflow-graph-v1";
  meta["probe"] = graph.probe_mode();
  meta["best_paper"] = graph.best_paper();
  meta["node_count"] = graph.node_count();
  meta["years"] = graph.years();
  std::ofstream mf(dir + "/meta.json");
  if (!mf) throw Error("save_graph: cannot write " + dir + "/meta.json");
  mf << meta.dump(2) << '\n';

  std::ofstream xf(dir + "/index.tsv");
  for (int i = 0; i < graph.node_count(); ++i)
    xf << graph.index_to_id()[i] << '\t' << i << '\n';

  std::ofstream nf(dir + "/nodes.tsv");
  for (int i = 0; i < graph.node_count(); ++i)
    nf << graph.index_to_id()[i] << '\t' << graph.arrival_years()[i] << '\n';

  for (int year : graph.years()) {
    std::ofstream ef(dir + "/edges_" + std::to_string(year) + ".tsv");
    const auto& edges = graph.edges();
    const auto& edge_years = graph.edge_years();
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (edge_years[e] > year) continue;
      ef << graph.index_to_id()[edges[e].first] << '\t' << graph.index_to_id()[edges[e].second]
         << '\n';
    }
  }
}

DynamicGraph load_graph(const std::string& dir) {
  std::ifstream mf(dir + "/meta.json");
  if (!mf) throw Error("load_graph: cannot open " + dir + "/meta.json");
  nlohmann::json meta;
  try {
    mf >> meta;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("load_graph: bad meta.json: ") + e.what());
  }
  if (meta.value("schema", "") != "citeflow-graph-v1")
    throw Error("load_graph: unrecognized schema in " + dir);
  const int m = meta.at("node_count").get<int>();
  std::vector<int> years = meta.at("years").get<std::vector<int>>();
  if (years.empty()) throw Error("load_graph: empty year list");

  std::vector<std::string> index_to_id(m);
  {
    std::ifstream in(dir + "/index.tsv");
    if (!in) throw Error("load_graph: cannot open " + dir + "/index.tsv");
    std::string line;
    long long line_no = 0;
    std::vector<bool> seen(m, false);
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cols = split(line, '\t');
      if (cols.size() != 2) throw ParseError("index.tsv: expected id<TAB>index", line_no);
      const int idx = std::stoi(cols[1]);
      if (idx < 0 || idx >= m || seen[idx])
        throw ParseError("index.tsv: bad or repeated index", line_no);
      seen[idx] = true;
      index_to_id[idx] = cols[0];
    }
    for (int i = 0; i < m; ++i)
      if (!seen[i]) throw Error("load_graph: index.tsv is missing index " + std::to_string(i));
  }

  std::vector<int> arrivals(m, 0);
  {
    std::unordered_map<std::string, int> pos;
    for (int i = 0; i < m; ++i) pos[index_to_id[i]] = i;
    std::ifstream in(dir + "/nodes.tsv");
    if (!in) throw Error("load_graph: cannot open " + dir + "/nodes.tsv");
    std::string line;
    long long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cols = split(line, '\t');
      if (cols.size() != 2) throw ParseError("nodes.tsv: expected id<TAB>year", line_no);
      auto it = pos.find(cols[0]);
      if (it == pos.end()) throw ParseError("nodes.tsv: unknown node id " + cols[0], line_no);
      arrivals[it->second] = std::stoi(cols[1]);
    }
  }

  std::vector<std::pair<int, int>> edges;
  {
    std::unordered_map<std::string, int> pos;
    for (int i = 0; i < m; ++i) pos[index_to_id[i]] = i;
    const std::string path = dir + "/edges_" + std::to_string(years.back()) + ".tsv";
    std::ifstream in(path);
    if (!in) throw Error("load_graph: cannot open " + path);
    std::string line;
    long long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto cols = split(line, '\t');
      if (cols.size() != 2) throw ParseError("edges: expected node_a<TAB>node_b", line_no);
      auto a = pos.find(cols[0]);
      auto b = pos.find(cols[1]);
      if (a == pos.end() || b == pos.end())
        throw ParseError("edges: unknown node id", line_no);
      edges.emplace_back(std::min(a->second, b->second), std::max(a->second, b->second));
    }
  }

  return DynamicGraph(std::move(years), std::move(index_to_id), std::move(arrivals),
                      std::move(edges), meta.value("probe", "alg1"),
                      meta.value("best_paper", ""));
}

}  // namespace citeflow
