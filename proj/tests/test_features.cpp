#include "citeflow/features.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

using namespace citeflow;

TEST_CASE("dense ranking with min-max normalization") {
  SUBCASE("ties share the top rank") {
    std::map<std::string, long long> totals{{"A", 10}, {"B", 10}, {"C", 5}};
    auto r = dense_rank_normalize(totals);
    CHECK(r["A"] == 0.0);
    CHECK(r["B"] == 0.0);
    CHECK(r["C"] == 1.0);
  }
  SUBCASE("three distinct values spread evenly") {
    std::map<std::string, long long> totals{{"A", 3}, {"B", 2}, {"C", 1}};
    auto r = dense_rank_normalize(totals);
    CHECK(r["A"] == 0.0);
    CHECK(r["B"] == 0.5);
    CHECK(r["C"] == 1.0);
  }
  SUBCASE("degenerate all-equal maps to 0") {
    std::map<std::string, long long> totals{{"A", 7}, {"B", 7}};
    auto r = dense_rank_normalize(totals);
    CHECK(r["A"] == 0.0);
    CHECK(r["B"] == 0.0);
  }
  SUBCASE("single key maps to 0") {
    auto r = dense_rank_normalize(std::map<std::string, long long>{{"A", 42}});
    CHECK(r["A"] == 0.0);
  }
  SUBCASE("scaling all totals by a positive constant changes nothing") {
    std::map<std::string, long long> totals{{"A", 9}, {"B", 4}, {"C", 4}, {"D", 0}};
    std::map<std::string, long long> scaled;
    for (auto& [k, v] : totals) scaled[k] = 7 * v;
    CHECK(dense_rank_normalize(totals) == dense_rank_normalize(scaled));
  }
  SUBCASE("venue keys work the same way") {
    std::map<VenueKey, long long> totals{
        {{"ACL", 2019}, 100}, {{"X", 2019}, 100}, {{"Y", 2018}, 10}};
    auto r = dense_rank_normalize(totals);
    CHECK(r[{"ACL", 2019}] == 0.0);
    CHECK(r[{"X", 2019}] == 0.0);
    CHECK(r[{"Y", 2018}] == 1.0);
  }
}

TEST_CASE("author rank on the toy corpus") {
  Corpus c = toy_corpus();
  auto r = author_rank(c, 2002);
  // totals up to 2002: A1 = 2 + 1 = 3, A2 = 1 + 0 = 1, A3 = 0
  CHECK(r["A1"] == 0.0);
  CHECK(r["A2"] == 0.5);
  CHECK(r["A3"] == 1.0);

  SUBCASE("every value lies in [0,1], someone at 0 and someone at 1") {
    bool has0 = false, has1 = false;
    for (auto& [a, v] : r) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      has0 |= v == 0.0;
      has1 |= v == 1.0;
    }
    CHECK(has0);
    CHECK(has1);
  }
  SUBCASE("before any citations everyone is tied at 0") {
    auto r0 = author_rank(c, 1999);
    for (auto& [a, v] : r0) CHECK(v == 0.0);
  }
}

TEST_CASE("venue rank on the toy corpus") {
  Corpus c = toy_corpus();
  auto r = venue_rank(c, 2002);
  // totals: (ACL,2000)=2, (ACL,2001)=1, (COLING,2002)=0, (EMNLP,2002)=0
  CHECK(r[{"ACL", 2000}] == 0.0);
  CHECK(r[{"ACL", 2001}] == 0.5);
  CHECK(r[{"COLING", 2002}] == 1.0);
  CHECK(r[{"EMNLP", 2002}] == 1.0);
}

TEST_CASE("fallback embeddings are deterministic and normalized") {
  auto v1 = fallback_embedding("graph neural networks for citations", 16, 7);
  auto v2 = fallback_embedding("graph neural networks for citations", 16, 7);
  CHECK(v1 == v2);
  auto v3 = fallback_embedding("graph neural networks for citations", 16, 8);
  CHECK(v1 != v3);

  double norm2 = 0.0;
  for (double x : v1) norm2 += x * x;
  CHECK(norm2 == doctest::Approx(1.0));

  SUBCASE("empty abstract gives the zero vector") {
    auto z = fallback_embedding("", 16, 7);
    CHECK(z == std::vector<double>(16, 0.0));
  }
}

TEST_CASE("abstract_features merges an external store with the fallback") {
  Corpus c = toy_corpus();
  const char* path = "store_test.tsv";
  {
    std::ofstream out(path);
    out << "width=4\n";
    out << "P1\t0.25,-1,3.5,0\n";
  }
  EmbeddingStore store = abstract_features(c, path, 4, 99);
  CHECK(store.width() == 4);
  CHECK(store.provenance() == "external+fallback-hash");
  CHECK(store.vector_for("P1") == std::vector<double>{0.25, -1, 3.5, 0});
  CHECK(store.vector_for("P2") == fallback_embedding(c.paper("P2").abstract_text, 4, 99));
  CHECK(store.vector_for("P4") == std::vector<double>(4, 0.0));  // empty abstract

  SUBCASE("pure fallback is tagged as such") {
    EmbeddingStore fb = abstract_features(c, "", 4, 99);
    CHECK(fb.provenance() == "fallback-hash");
    CHECK(fb.size() == 4);
  }
  SUBCASE("width mismatch is an error") {
    CHECK_THROWS_AS(abstract_features(c, path, 8, 99), Error);
  }
  SUBCASE("store round-trips through save/load") {
    const char* out_path = "store_roundtrip.tsv";
    store.save(out_path);
    EmbeddingStore back = EmbeddingStore::load(out_path);
    CHECK(back.width() == store.width());
    for (const PaperRecord& p : c.papers()) CHECK(back.vector_for(p.id) == store.vector_for(p.id));
    std::remove(out_path);
  }
  std::remove(path);
}

TEST_CASE("malformed embedding stores are rejected") {
  const char* path = "store_bad.tsv";
  SUBCASE("missing width header") {
    std::ofstream(path) << "P1\t1,2\n";
    CHECK_THROWS_AS(EmbeddingStore::load(path), ParseError);
  }
  SUBCASE("row width differs from header") {
    std::ofstream(path) << "width=3\nP1\t1,2\n";
    CHECK_THROWS_AS(EmbeddingStore::load(path), ParseError);
  }
  SUBCASE("bad float") {
    std::ofstream(path) << "width=2\nP1\t1,zz\n";
    CHECK_THROWS_AS(EmbeddingStore::load(path), ParseError);
  }
  SUBCASE("duplicate id") {
    std::ofstream(path) << "width=2\nP1\t1,2\nP1\t3,4\n";
    CHECK_THROWS_AS(EmbeddingStore::load(path), ParseError);
  }
  std::remove(path);
}

TEST_CASE("feature config parsing and widths") {
  CHECK(FeatureConfig::parse("venue").width(768) == 1);
  CHECK(FeatureConfig::parse("author").width(768) == 3);
  CHECK(FeatureConfig::parse("author+venue").width(768) == 4);
  CHECK(FeatureConfig::parse("abstract").width(768) == 768);
  CHECK(FeatureConfig::parse("all").width(768) == 772);
  CHECK(FeatureConfig::parse("all").set_name() == "all");
  CHECK_THROWS_AS(FeatureConfig::parse("everything"), Error);
}

TEST_CASE("assemble_feature_tensor") {
  Corpus c = toy_corpus();
  DynamicGraph g = build_dynamic_graph(c);

  SUBCASE("venue-only tensor has width 1") {
    FeatureTensor f = assemble_feature_tensor(g, c, FeatureConfig::parse("venue"));
    CHECK(f.width() == 1);
    CHECK(f.x.size() == 3);
    CHECK(f.x[0].rows == 3);
  }
  SUBCASE("rolling author+venue at 2002 matches the hand trace") {
    FeatureTensor f = assemble_feature_tensor(g, c, FeatureConfig::parse("author+venue"));
    CHECK(f.width() == 4);
    // reference year 2001: author totals A1=1, A2=0, A3=0; venue totals
    // (ACL,2000)=1, rest 0. P2's authors are A1 (rank 0) and A2 (rank 1).
    const int p2 = g.node_index("P2");
    CHECK(f.x[2].at(p2, 0) == 0.0);   // best
    CHECK(f.x[2].at(p2, 1) == 0.5);   // mean
    CHECK(f.x[2].at(p2, 2) == 1.0);   // worst
    CHECK(f.x[2].at(p2, 3) == 1.0);   // venue (ACL,2001)
    // first snapshot's reference year predates all citations: everything 0
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) CHECK(f.x[0].at(i, j) == 0.0);
  }
  SUBCASE("final rank reference makes rank features time-invariant") {
    FeatureConfig cfg = FeatureConfig::parse("author+venue");
    cfg.rank_ref = RankReference::final_year;
    FeatureTensor f = assemble_feature_tensor(g, c, cfg);
    CHECK(f.x[0].data == f.x[1].data);
    CHECK(f.x[1].data == f.x[2].data);
  }
  SUBCASE("abstract columns are constant over time, rank columns vary") {
    EmbeddingStore store = abstract_features(c, "", 8, 5);
    FeatureTensor f = assemble_feature_tensor(g, c, FeatureConfig::parse("all"), &store);
    CHECK(f.width() == 12);
    const int p1 = g.node_index("P1");
    for (int j = 0; j < 8; ++j) {
      CHECK(f.x[0].at(p1, j) == f.x[2].at(p1, j));
    }
    // P2's worst-author rank moves from 0 (all tied) to 1 once A1 leads
    const int p2 = g.node_index("P2");
    CHECK(f.x[0].at(p2, 10) == 0.0);
    CHECK(f.x[2].at(p2, 10) == 1.0);
  }
  SUBCASE("a paper without authors takes the worst rank") {
    std::istringstream in(
        R"({"id":"P1","year":2000,"venue":"V","authors":["A1"],"abstract":"","outCitations":[]}
{"id":"P2","year":2001,"venue":"V","authors":[],"abstract":"","outCitations":["P1"]}
)");
    Corpus c2 = parse_corpus(in);
    DynamicGraph g2 = build_dynamic_graph(c2);
    FeatureConfig cfg = FeatureConfig::parse("author");
    cfg.rank_ref = RankReference::final_year;
    FeatureTensor f = assemble_feature_tensor(g2, c2, cfg);
    const int p2 = g2.node_index("P2");
    CHECK(f.x[0].at(p2, 0) == 1.0);
    CHECK(f.x[0].at(p2, 1) == 1.0);
    CHECK(f.x[0].at(p2, 2) == 1.0);
  }
  SUBCASE("abstract without a store is an error") {
    CHECK_THROWS_AS(assemble_feature_tensor(g, c, FeatureConfig::parse("abstract")), Error);
  }
}

TEST_CASE("label matrix") {
  Corpus c = toy_corpus();
  DynamicGraph g = build_dynamic_graph(c);
  TimelineSet tl = cumulative_citation_counts(c);
  LabelMatrix lm = label_matrix(g, tl, c);

  const int p1 = g.node_index("P1");
  const int p3 = g.node_index("P3");

  SUBCASE("log1p of the cumulative counts") {
    CHECK(lm.labels.at(p1, 0) == 0.0);                                   // c = 0
    CHECK(lm.labels.at(p1, 1) == doctest::Approx(std::log(2.0)));        // c = 1
    CHECK(lm.labels.at(p1, 2) == doctest::Approx(1.0986).epsilon(1e-4));  // c = 2
  }
  SUBCASE("mask covers exactly the post-publication years") {
    CHECK(lm.mask.at(p3, 0) == 0.0);
    CHECK(lm.mask.at(p3, 1) == 0.0);
    CHECK(lm.mask.at(p3, 2) == 1.0);
    CHECK(lm.mask.at(p1, 0) == 1.0);
  }
  SUBCASE("labels are monotone wherever masked in") {
    for (int i = 0; i < lm.labels.rows; ++i)
      for (int t = 1; t < lm.labels.cols; ++t)
        if (lm.mask.at(i, t - 1) == 1.0 && lm.mask.at(i, t) == 1.0)
          CHECK(lm.labels.at(i, t) >= lm.labels.at(i, t - 1));
  }
  SUBCASE("missing timeline for a node is an error") {
    TimelineSet partial = cumulative_citation_counts(filter_by_venues(c, {"ACL"}));
    CHECK_THROWS_AS(label_matrix(g, partial, c), Error);
  }
}

TEST_CASE("feature tensors round-trip through the directory format") {
  Corpus c = toy_corpus();
  DynamicGraph g = build_dynamic_graph(c);
  EmbeddingStore store = abstract_features(c, "", 8, 5);
  FeatureTensor f = assemble_feature_tensor(g, c, FeatureConfig::parse("all"), &store);
  LabelMatrix lm = label_matrix(g, cumulative_citation_counts(c), c);

  const std::string dir = "features_roundtrip_dir";
  save_features(f, lm, dir);
  FeatureTensor f2;
  LabelMatrix lm2;
  load_features(dir, f2, lm2);

  CHECK(f2.years == f.years);
  REQUIRE(f2.x.size() == f.x.size());
  for (std::size_t t = 0; t < f.x.size(); ++t) CHECK(f2.x[t].data == f.x[t].data);
  CHECK(lm2.labels.data == lm.labels.data);
  CHECK(lm2.mask.data == lm.mask.data);
  std::filesystem::remove_all(dir);
}
