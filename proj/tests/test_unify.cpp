#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include "fairlens/unify.hpp"

using namespace fairlens;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

Record fixture_p1() {
  std::ifstream in(std::string(FAIRLENS_FIXTURES) + "/records.jsonl");
  std::string line;
  std::getline(in, line);
  return record_from_json(json::parse(line));
}

std::map<std::string, double> ngram_counts(const std::vector<std::string>& tokens) {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out[tokens[i]] += 1;
    if (i > 0) out[tokens[i - 1] + " " + tokens[i]] += 1;
  }
  return out;
}

double exact_cosine(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [k, v] : a) {
    na += v * v;
    auto it = b.find(k);
    if (it != b.end()) dot += v * it->second;
  }
  for (const auto& [k, v] : b) nb += v * v;
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST(Unify, GoldenString) {
  const auto u = unify(fixture_p1(), all_modalities());
  EXPECT_EQ(u.record_id, "p1");
  EXPECT_EQ(u.full_text, read_file(std::string(FAIRLENS_FIXTURES) + "/unify_p1.txt"));
}

TEST(Unify, SubsetAndAbsentModalities) {
  const auto r = fixture_p1();
  EXPECT_EQ(unify(r, std::vector<std::string>{"lab"}).full_text, "[lab] sodium abnormal value 170 at t=4.");
  Record sparse;
  sparse.id = "s";
  sparse.modalities.notes = "Hello";
  EXPECT_EQ(unify(sparse, std::vector<std::string>{"structured", "notes"}).full_text, "[structured]  [notes] hello");
  EXPECT_THROW(unify(r, std::vector<std::string>{"audio"}), UsageError);
}

TEST(Unify, StructuredSentences) {
  std::map<std::string, Scalar> payload{{"temp", 37.5}, {"age", std::int64_t{70}}, {"sex", std::string("F")},
                                        {"alert", true}};
  EXPECT_EQ(textualize_structured(payload), "age is 70. alert is true. sex is F. temp is 37.5.");
}

TEST(Unify, TukeyOutliers) {
  const std::vector<double> v{1, 2, 3, 4, 100};
  EXPECT_EQ(detect_outliers_tukey(v), std::vector<std::size_t>{4});
  const std::vector<double> low{-50, 10, 11, 12, 13};
  EXPECT_EQ(detect_outliers_tukey(low), std::vector<std::size_t>{0});
  const std::vector<double> flat{5, 5, 5, 5};
  EXPECT_TRUE(detect_outliers_tukey(flat).empty());
  const std::vector<double> few{1, 100, 1000};
  EXPECT_TRUE(detect_outliers_tukey(few).empty());
  const std::vector<double> sorted{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(sorted_quantile(sorted, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(sorted_quantile(sorted, 0.75), 3.25);
}

TEST(Unify, EventDedupKeepsFirst) {
  const std::vector<Event> e{{10, "A"}, {20, "B"}, {30, "A"}, {40, "C"}, {50, "B"}};
  const auto d = dedup_events(e);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].t, 10);
  EXPECT_EQ(d[2].code, "C");
  EXPECT_EQ(textualize_events({{10, "A"}, {30, "A"}}), "event A at t=10.");
}

TEST(Unify, NoteCleaning) {
  EXPECT_EQ(clean_notes("  Seen by [**Name**] TODAY\n\n  ok "), "seen by today ok");
  EXPECT_EQ(clean_notes("unterminated [** tag"), "unterminated [** tag");
  EXPECT_EQ(clean_notes(""), "");
}

TEST(Embedding, Tokenizer) {
  EXPECT_EQ(tokenize("[lab] Sodium=170, at t=4."),
            (std::vector<std::string>{"lab", "sodium", "170", "at", "t", "4"}));
  EXPECT_TRUE(tokenize(" .,; ").empty());
}

TEST(Embedding, NormalizedAndDeterministic) {
  const auto tokens = tokenize("patient admitted with chest pain");
  const auto a = embed(tokens, 64, 9);
  const auto b = embed(tokens, 64, 9);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NEAR(a.norm(), 1.0, 1e-12);
  EXPECT_NE(embed(tokens, 64, 10).values, a.values);
  EXPECT_EQ(embed({}, 16, 1).norm(), 0.0);
  EXPECT_THROW(embed(tokens, 4, 1), UsageError);
}

TEST(Embedding, UnigramModeIgnoresOrder) {
  const auto a = embed(tokenize("a b c"), 128, 3, 1);
  const auto b = embed(tokenize("c a b"), 128, 3, 1);
  EXPECT_EQ(a.values, b.values);
  const auto a2 = embed(tokenize("a b c"), 128, 3, 2);
  const auto b2 = embed(tokenize("c a b"), 128, 3, 2);
  EXPECT_NE(a2.values, b2.values);
}

TEST(Embedding, CosineMatchesExactBagOfNgrams) {
  const std::vector<std::string> texts{"chest pain radiating to left arm", "chest pain resolved after rest",
                                       "shortness of breath and chest pain", "fall at home no head injury",
                                       "left arm pain after fall at home"};
  const std::size_t dim = 1u << 16;
  for (const auto& s : texts) {
    for (const auto& t : texts) {
      const auto ts = tokenize(s), tt = tokenize(t);
      const auto cs = ngram_counts(ts), ct = ngram_counts(tt);
      std::set<std::string> keys;
      for (const auto& [k, v] : cs) keys.insert(k);
      for (const auto& [k, v] : ct) keys.insert(k);
      std::set<std::size_t> buckets;
      for (const auto& k : keys) buckets.insert(hash_feature(k, dim, 5).bucket);
      ASSERT_EQ(buckets.size(), keys.size()) << "bucket collision; pick another seed";
      const auto es = embed(ts, dim, 5), et = embed(tt, dim, 5);
      EXPECT_NEAR(cosine(es.values, et.values), exact_cosine(cs, ct), 1e-12) << s << " | " << t;
    }
  }
}

TEST(Embedding, ConfigRoundTrip) {
  EmbedConfig c;
  c.dim = 32;
  c.seed = 77;
  c.modalities = {Modality::notes, Modality::lab};
  EXPECT_EQ(embed_config_from_json(embed_config_to_json(c)), c);
  EXPECT_THROW(embed_config_from_json(json{{"dim", 2}}), UsageError);
  EXPECT_THROW(embed_config_from_json(json{{"ngram", 3}}), UsageError);
}
