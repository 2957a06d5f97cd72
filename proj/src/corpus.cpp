#include "citeflow/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <unordered_set>

#include "json.hpp"

namespace citeflow {

AliasTable AliasTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("alias table: cannot open " + path);
  AliasTable table;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    auto cols = split(line, '\t');
    if (cols.size() != 2 || cols[0].empty() || cols[1].empty())
      throw ParseError("alias table: expected raw<TAB>canonical", line_no);
    table.add(cols[0], cols[1]);
  }
  return table;
}

AliasTable AliasTable::identity(const std::vector<std::string>& names) {
  AliasTable table;
  for (const std::string& n : names) table.add(n, n);
  return table;
}

void AliasTable::add(const std::string& raw, const std::string& canonical) {
  map_[raw] = canonical;
}

const std::string* AliasTable::lookup(const std::string& raw) const {
  auto it = map_.find(raw);
  return it == map_.end() ? nullptr : &it->second;
}

VenueKey canonicalize_venue(const std::string& venue_raw, int year, const AliasTable& aliases) {
  const std::string* canonical = aliases.lookup(venue_raw);
  return VenueKey{canonical ? *canonical : "UNKNOWN", year};
}

Corpus Corpus::from_records(std::vector<PaperRecord> records, AliasTable aliases,
                            CorpusDiagnostics diag) {
  Corpus c;
  c.aliases_ = std::move(aliases);
  c.diag_ = diag;

  std::sort(records.begin(), records.end(),
            [](const PaperRecord& a, const PaperRecord& b) { return a.id < b.id; });
  c.papers_ = std::move(records);
  c.index_.reserve(c.papers_.size());
  for (std::size_t i = 0; i < c.papers_.size(); ++i) {
    auto [it, inserted] = c.index_.emplace(c.papers_[i].id, static_cast<int>(i));
    if (!inserted) throw Error("duplicate paper id: " + c.papers_[i].id);
  }

  for (PaperRecord& p : c.papers_) {
    std::vector<std::string> kept;
    kept.reserve(p.cited_ids.size());
    std::unordered_set<std::string> seen;
    for (const std::string& target : p.cited_ids) {
      if (target == p.id) {
        ++c.diag_.self_citations;
        continue;
      }
      if (!seen.insert(target).second) {
        ++c.diag_.duplicate_citations;
        continue;
      }
      auto it = c.index_.find(target);
      if (it == c.index_.end()) {
        ++c.diag_.dangling_citations;
        continue;
      }
      if (c.papers_[it->second].year > p.year) {
        ++c.diag_.time_travel_citations;
        continue;
      }
      kept.push_back(target);
    }
    p.cited_ids = std::move(kept);
  }

  std::vector<int> years;
  for (const PaperRecord& p : c.papers_) years.push_back(p.year);
  std::sort(years.begin(), years.end());
  years.erase(std::unique(years.begin(), years.end()), years.end());
  c.years_ = std::move(years);
  return c;
}

const PaperRecord* Corpus::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &papers_[it->second];
}

const PaperRecord& Corpus::paper(const std::string& id) const {
  const PaperRecord* p = find(id);
  if (!p) throw Error("unknown paper id: " + id);
  return *p;
}

int Corpus::position(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : it->second;
}

int Corpus::min_year() const {
  if (years_.empty()) throw Error("empty corpus has no years");
  return years_.front();
}

int Corpus::max_year() const {
  if (years_.empty()) throw Error("empty corpus has no years");
  return years_.back();
}

namespace {

using nlohmann::json;

std::string require_string(const json& j, const char* field, long long line_no) {
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(std::string("missing field '") + field + "'", line_no);
  if (!it->is_string()) throw ParseError(std::string("field '") + field + "' is not a string", line_no);
  return it->get<std::string>();
}

int require_year(const json& j, long long line_no) {
  auto it = j.find("year");
  if (it == j.end()) throw ParseError("missing field 'year'", line_no);
  if (!it->is_number_integer()) throw ParseError("field 'year' is not an integer", line_no);
  return it->get<int>();
}

std::vector<std::string> require_string_array(const json& j, const char* field,
                                              long long line_no) {
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(std::string("missing field '") + field + "'", line_no);
  if (!it->is_array())
    throw ParseError(std::string("field '") + field + "' is not an array", line_no);
  std::vector<std::string> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_string())
      throw ParseError(std::string("field '") + field + "' has a non-string entry", line_no);
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

Corpus parse_corpus(std::istream& in, AliasTable aliases) {
  std::vector<PaperRecord> records;
  std::unordered_set<std::string> ids;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!j.is_object()) throw ParseError("record is not a JSON object", line_no);
    PaperRecord r;
    r.id = require_string(j, "id", line_no);
    if (r.id.empty()) throw ParseError("empty paper id", line_no);
    r.year = require_year(j, line_no);
    r.venue_raw = require_string(j, "venue", line_no);
    r.author_ids = require_string_array(j, "authors", line_no);
    r.abstract_text = require_string(j, "abstract", line_no);
    r.cited_ids = require_string_array(j, "outCitations", line_no);
    if (!ids.insert(r.id).second) throw ParseError("duplicate paper id '" + r.id + "'", line_no);
    records.push_back(std::move(r));
  }
  return Corpus::from_records(std::move(records), std::move(aliases));
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("corpus: cannot open " + path);
  // identity aliases over the venues present: a saved corpus already carries
  // canonical names
  Corpus raw = parse_corpus(in);
  std::vector<std::string> venues;
  for (const PaperRecord& p : raw.papers()) venues.push_back(p.venue_raw);
  return Corpus::from_records(std::vector<PaperRecord>(raw.papers()),
                              AliasTable::identity(venues));
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("corpus: cannot open " + path + " for writing");
  for (const PaperRecord& p : corpus.papers()) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["year"] = p.year;
    j["venue"] = p.venue_raw;
    j["authors"] = p.author_ids;
    j["abstract"] = p.abstract_text;
    j["outCitations"] = p.cited_ids;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("corpus: write failed for " + path);
}

Corpus filter_by_venues(const Corpus& corpus, const std::vector<std::string>& allowlist) {
  if (allowlist.empty()) throw Error("filter_by_venues: empty allowlist");
  std::unordered_set<std::string> allowed(allowlist.begin(), allowlist.end());
  std::vector<PaperRecord> kept;
  for (const PaperRecord& p : corpus.papers())
    if (allowed.count(corpus.venue_key(p).canonical_name)) kept.push_back(p);
  return Corpus::from_records(std::move(kept), corpus.aliases(), corpus.diagnostics());
}

Corpus canonicalized(const Corpus& corpus) {
  std::vector<PaperRecord> records(corpus.papers());
  std::vector<std::string> venues;
  for (PaperRecord& p : records) {
    p.venue_raw = corpus.venue_key(p).canonical_name;
    venues.push_back(p.venue_raw);
  }
  return Corpus::from_records(std::move(records), AliasTable::identity(venues),
                              corpus.diagnostics());
}

const std::vector<long long>& TimelineSet::counts_for(const std::string& id) const {
  auto it = counts_.find(id);
  if (it == counts_.end()) throw Error("no citation timeline for paper " + id);
  return it->second;
}

long long TimelineSet::count_at(const std::string& id, int year) const {
  const auto& counts = counts_for(id);
  auto it = std::upper_bound(years_.begin(), years_.end(), year);
  if (it == years_.begin()) return 0;
  return counts[static_cast<std::size_t>(it - years_.begin()) - 1];
}

TimelineSet cumulative_citation_counts(const Corpus& corpus) {
  const std::vector<int>& years = corpus.years();
  std::unordered_map<std::string, std::vector<long long>> counts;
  counts.reserve(corpus.size());
  for (const PaperRecord& p : corpus.papers())
    counts.emplace(p.id, std::vector<long long>(years.size(), 0));

  for (const PaperRecord& p : corpus.papers()) {
    auto yit = std::lower_bound(years.begin(), years.end(), p.year);
    std::size_t yi = static_cast<std::size_t>(yit - years.begin());
    for (const std::string& target : p.cited_ids) counts[target][yi] += 1;
  }
  for (auto& [id, c] : counts)
    for (std::size_t k = 1; k < c.size(); ++k) c[k] += c[k - 1];
  return TimelineSet(years, std::move(counts));
}

}  // namespace citeflow
