#pragma once

// Paper-metadata ingestion: JSONL parsing, venue canonicalization, venue
// filtering, and cumulative citation timelines.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "citeflow/common.hpp"

namespace citeflow {

struct PaperRecord {
  std::string id;
  int year = 0;
  std::string venue_raw;
  std::vector<std::string> author_ids;
  std::string abstract_text;
  std::vector<std::string> cited_ids;
};

struct VenueKey {
  std::string canonical_name;
  int year = 0;
  bool operator==(const VenueKey&) const = default;
  auto operator<=>(const VenueKey&) const = default;
};

// raw venue spelling -> canonical name. Unknown spellings are not an error;
// canonicalize_venue buckets them to "UNKNOWN".
class AliasTable {
 public:
  AliasTable() = default;

  // Two-column TSV raw<TAB>canonical. Blank lines and lines starting with
  // '#' are skipped.
  static AliasTable load(const std::string& path);
  static AliasTable identity(const std::vector<std::string>& names);

  void add(const std::string& raw, const std::string& canonical);
  // nullptr when the spelling is not in the table.
  const std::string* lookup(const std::string& raw) const;
  std::size_t size() const { return map_.size(); }

 private:
  std::unordered_map<std::string, std::string> map_;
};

VenueKey canonicalize_venue(const std::string& venue_raw, int year, const AliasTable& aliases);

// Citation edges dropped during validation, by reason.
struct CorpusDiagnostics {
  long long dangling_citations = 0;     // target id not in the corpus
  long long time_travel_citations = 0;  // citing paper older than cited paper
  long long self_citations = 0;
  long long duplicate_citations = 0;  // repeated target within one record
};

// Immutable, id-sorted paper collection. cited_ids of every stored record are
// fully resolved: each target exists in the corpus and is not newer than the
// citing paper.
class Corpus {
 public:
  Corpus() = default;

  // Validates and canonicalizes arbitrary records: sorts by id, rejects
  // duplicate ids, drops bad citation edges into `diag`.
  static Corpus from_records(std::vector<PaperRecord> records, AliasTable aliases = {},
                             CorpusDiagnostics diag = {});

  std::size_t size() const { return papers_.size(); }
  bool empty() const { return papers_.empty(); }
  const std::vector<PaperRecord>& papers() const { return papers_; }
  const PaperRecord& paper_at(std::size_t i) const { return papers_[i]; }

  const PaperRecord* find(const std::string& id) const;
  const PaperRecord& paper(const std::string& id) const;  // throws on miss
  int position(const std::string& id) const;              // -1 on miss

  // Distinct publication years, ascending. Empty for an empty corpus.
  const std::vector<int>& years() const { return years_; }
  int min_year() const;
  int max_year() const;

  const AliasTable& aliases() const { return aliases_; }
  VenueKey venue_key(const PaperRecord& p) const {
    return canonicalize_venue(p.venue_raw, p.year, aliases_);
  }

  const CorpusDiagnostics& diagnostics() const { return diag_; }

 private:
  std::vector<PaperRecord> papers_;  // sorted by id
  std::unordered_map<std::string, int> index_;
  std::vector<int> years_;
  AliasTable aliases_;
  CorpusDiagnostics diag_;
};

// One JSON object per line: id, year, venue, authors, abstract, outCitations.
// Throws ParseError with a 1-based line number on malformed input.
Corpus parse_corpus(std::istream& in, AliasTable aliases = {});
Corpus load_corpus(const std::string& path);

// Canonical JSONL, id-sorted, resolved citations only. Reloading with
// load_corpus installs identity aliases over the venue strings present, so a
// corpus whose venues were canonicalized survives the round trip.
void save_corpus(const Corpus& corpus, const std::string& path);

// Keeps exactly the papers whose canonical venue is in the allowlist and
// re-resolves citations within the kept set; newly dangling edges are added
// to the diagnostics carried over from the input corpus.
Corpus filter_by_venues(const Corpus& corpus, const std::vector<std::string>& allowlist);

// Rewrites each record's venue to its canonical name and installs identity
// aliases. Used after venue filtering so saved corpora are self-contained.
Corpus canonicalized(const Corpus& corpus);

// Cumulative citers per paper per corpus year: counts[k] = number of corpus
// papers citing it with citing-year <= years()[k].
class TimelineSet {
 public:
  TimelineSet() = default;
  TimelineSet(std::vector<int> years, std::unordered_map<std::string, std::vector<long long>> c)
      : years_(std::move(years)), counts_(std::move(c)) {}

  const std::vector<int>& years() const { return years_; }
  bool contains(const std::string& id) const { return counts_.count(id) > 0; }
  const std::vector<long long>& counts_for(const std::string& id) const;  // throws on miss

  // Floor lookup: cumulative count at the largest listed year <= year,
  // 0 before the first year.
  long long count_at(const std::string& id, int year) const;

  const std::unordered_map<std::string, std::vector<long long>>& all() const { return counts_; }

 private:
  std::vector<int> years_;
  std::unordered_map<std::string, std::vector<long long>> counts_;
};

TimelineSet cumulative_citation_counts(const Corpus& corpus);

}  // namespace citeflow
