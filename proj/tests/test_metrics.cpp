#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "fairlens/metrics.hpp"
#include "oracles.hpp"

using namespace fairlens;

namespace {

AttributeSchema two_by_two() {
  return AttributeSchema({{"gender", {"male", "female"}}, {"race", {"white", "nonwhite"}}});
}

struct Fixture {
  Dataset d{two_by_two(), {"disposition"}, {}};
  PredictionSet p{"disposition", PredictionKind::base, 0.5, {}};

  void add(const std::string& gender, const std::string& race, int label, int pred, const std::string& arrival = "walk") {
    Record r;
    r.id = "r" + std::to_string(d.size());
    r.sensitive = {{"gender", gender}, {"race", race}};
    r.labels = {{"disposition", label}};
    r.modalities.structured = std::map<std::string, Scalar>{{"arrival", arrival}};
    p.entries.emplace(r.id, Prediction{pred ? 0.9 : 0.1, pred});
    d.records.push_back(std::move(r));
  }
};

// male/white: 4 records, 3 predicted positive (dp 0.75), 2 positives both hit (tpr 1)
// female/nonwhite: 4 records, 1 predicted positive (dp 0.25), 2 positives one hit (tpr 0.5)
Fixture small_fixture() {
  Fixture f;
  f.add("male", "white", 1, 1);
  f.add("male", "white", 1, 1);
  f.add("male", "white", 0, 1);
  f.add("male", "white", 0, 0);
  f.add("female", "nonwhite", 1, 1, "ambulance");
  f.add("female", "nonwhite", 1, 0, "ambulance");
  f.add("female", "nonwhite", 0, 0);
  f.add("female", "nonwhite", 0, 0);
  return f;
}

template <typename F>
void for_each_binary(std::size_t n, F&& f) {
  std::vector<int> v(n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>((mask >> i) & 1);
    f(v);
  }
}

}  // namespace

TEST(WorstCaseParity, KnownRatesArithmetic) {
  EXPECT_NEAR(worst_case_parity({0.702, 0.703}), 0.998, 0.002);
  EXPECT_NEAR(worst_case_parity({0.708, 0.707, 0.575}), 0.812, 0.002);
  EXPECT_NEAR(worst_case_parity({0.511, 0.720}), 0.709, 0.002);
  EXPECT_NEAR(worst_case_parity({0.420, 0.339}), 0.807, 0.002);
}

TEST(WorstCaseParity, EdgeCases) {
  EXPECT_DOUBLE_EQ(worst_case_parity({0.0, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(worst_case_parity({0.0, 0.4}), 0.0);
  EXPECT_DOUBLE_EQ(worst_case_parity({0.5, 0.5, 0.5}), 1.0);
  EXPECT_THROW(worst_case_parity({0.5}), DataError);
  std::vector<Rate> with_gap{0.4, std::nullopt, 0.8};
  EXPECT_DOUBLE_EQ(worst_case_parity(with_gap), 0.5);
  std::vector<Rate> one_defined{0.4, std::nullopt};
  EXPECT_THROW(worst_case_parity(one_defined), DataError);
}

TEST(WorstCaseParity, MatchesPairwiseOracle) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + gen() % 8;
    std::vector<Rate> rates;
    for (std::size_t i = 0; i < k; ++i) rates.push_back(u(gen));
    EXPECT_NEAR(worst_case_parity(rates), oracle::worst_case_parity(rates), 1e-12);
  }
}

TEST(WorstCaseParity, EightyPercentBoundary) {
  EXPECT_TRUE(eighty_percent_rule(0.8));
  EXPECT_FALSE(eighty_percent_rule(0.7999));
}

TEST(Performance, F1MatchesOracleExhaustively) {
  for (std::size_t n = 1; n <= 8; ++n) {
    for_each_binary(n, [&](const std::vector<int>& truth) {
      for_each_binary(n, [&](const std::vector<int>& pred) {
        ASSERT_NEAR(f1_score(pred, truth), oracle::f1(pred, truth), 1e-12);
      });
    });
  }
}

TEST(Performance, RankingMetricsMatchOracleExhaustively) {
  const double levels[] = {0.0, 0.5, 1.0};
  for (std::size_t n = 1; n <= 8; ++n) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= 3;
    std::vector<double> scores(n);
    for (std::size_t code = 0; code < combos; ++code) {
      std::size_t c = code;
      for (std::size_t i = 0; i < n; ++i, c /= 3) scores[i] = levels[c % 3];
      for_each_binary(n, [&](const std::vector<int>& truth) {
        const auto pos = std::count(truth.begin(), truth.end(), 1);
        if (pos > 0) {
          ASSERT_NEAR(auprc(scores, truth), oracle::auprc(scores, truth), 1e-12);
        }
        if (pos > 0 && static_cast<std::size_t>(pos) < n) {
          ASSERT_NEAR(auroc(scores, truth), oracle::auroc(scores, truth), 1e-12);
        }
      });
    }
  }
}

TEST(Performance, KnownValues) {
  const std::vector<double> separated{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> truth{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auroc(separated, truth), 1.0);
  EXPECT_DOUBLE_EQ(auprc(separated, truth), 1.0);
  const std::vector<double> flat{0.5, 0.5, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(auroc(flat, truth), 0.5);
  EXPECT_DOUBLE_EQ(auprc(flat, truth), 0.5);
  EXPECT_THROW(auroc(flat, std::vector<int>{1, 1, 1, 1}), DataError);
  EXPECT_THROW(auprc(flat, std::vector<int>{0, 0, 0, 0}), DataError);
  const std::vector<int> pred{1, 0, 1, 1};
  EXPECT_DOUBLE_EQ(f1_score(pred, truth), 0.8);
  EXPECT_DOUBLE_EQ(macro_f1_score(pred, truth), 0.5 * (0.8 + 2.0 / 3.0));
}

TEST(Rates, DemographicParityAndTpr) {
  const auto f = small_fixture();
  const std::vector<std::string> wm{"r0", "r1", "r2", "r3"};
  EXPECT_DOUBLE_EQ(*dp_rate(f.p, wm), 0.75);
  EXPECT_DOUBLE_EQ(*tpr(f.p, f.d, wm), 1.0);
  EXPECT_FALSE(dp_rate(f.p, {}));
  const std::vector<std::string> negatives{"r2", "r3"};
  EXPECT_FALSE(tpr(f.p, f.d, negatives));
}

TEST(Report, IntersectionAndMarginal) {
  const auto f = small_fixture();
  const SubgroupIndex index(two_by_two());
  const auto rep = fairness_report(f.d, f.p, index, Grouping::intersection());
  ASSERT_EQ(rep.rates.size(), 4u);
  EXPECT_DOUBLE_EQ(*rep.rates[0].dp, 0.75);
  EXPECT_FALSE(rep.rates[1].dp);
  EXPECT_DOUBLE_EQ(*rep.rates[3].dp, 0.25);
  EXPECT_NEAR(*rep.wp_dp, 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(*rep.wp_tpr, 0.5);
  EXPECT_FALSE(rep.passes_80_dp);

  const auto gender = fairness_report(f.d, f.p, index, Grouping::marginal("race"));
  ASSERT_EQ(gender.rates.size(), 2u);
  EXPECT_EQ(gender.rates[1].label, "nonwhite");
  EXPECT_EQ(gender.rates[1].n, 4u);
  EXPECT_THROW(fairness_report(f.d, f.p, index, Grouping::marginal("age")), UsageError);
}

TEST(Report, ConditionFiltersRecords) {
  const auto f = small_fixture();
  const SubgroupIndex index(two_by_two());
  const auto rep = fairness_report(f.d, f.p, index, Grouping::intersection(), Condition{"arrival", "ambulance"});
  EXPECT_EQ(rep.rates[3].n, 2u);
  EXPECT_EQ(rep.rates[0].n, 0u);
  EXPECT_FALSE(rep.wp_dp);
}

// Each subgroup holds at least 2000 records, so a coin-flip model keeps every
// DP rate within a few hundredths of 0.5 and the min/max ratio above 0.9.
TEST(Report, FairRandomModelPasses) {
  Fixture f;
  std::mt19937_64 gen(21);
  const char* genders[] = {"male", "female"};
  const char* races[] = {"white", "nonwhite"};
  for (int i = 0; i < 20000; ++i) {
    f.add(genders[gen() % 2], races[gen() % 2], static_cast<int>(gen() % 2), static_cast<int>(gen() % 2));
  }
  const auto rep = fairness_report(f.d, f.p, SubgroupIndex(two_by_two()), Grouping::intersection());
  for (const auto& g : rep.rates) EXPECT_GE(g.n, 2000u);
  EXPECT_GE(*rep.wp_dp, 0.9);
  EXPECT_GE(*rep.wp_tpr, 0.9);
}

TEST(Delta, LevelingDownFlag) {
  FairnessReport before, after;
  before.task = after.task = "disposition";
  before.rates = {GroupRates{"asian"}, GroupRates{"white"}};
  after.rates = before.rates;
  before.rates[0].dp = 0.575;
  after.rates[0].dp = 0.468;
  before.rates[1].dp = 0.708;
  after.rates[1].dp = 0.700;
  auto d = group_delta(before, after);
  EXPECT_TRUE(d[0].leveling_down);
  EXPECT_NEAR(*d[0].dp_change, -0.107, 1e-12);
  EXPECT_FALSE(d[1].leveling_down);
  after.rates[0].dp = 0.601;
  EXPECT_FALSE(group_delta(before, after)[0].leveling_down);
  for (const auto& g : group_delta(before, before)) {
    EXPECT_EQ(*g.dp_change, 0.0);
    EXPECT_FALSE(g.leveling_down);
  }
  after.grouping = Grouping::marginal("race");
  EXPECT_THROW(group_delta(before, after), UsageError);
}

TEST(Delta, FlagRequiresMoreThanFivePercent) {
  FairnessReport before, after;
  before.rates = {GroupRates{"g"}};
  after.rates = before.rates;
  before.rates[0].dp = 0.5;
  after.rates[0].dp = 0.476;
  EXPECT_FALSE(group_delta(before, after)[0].leveling_down);
  after.rates[0].dp = 0.474;
  EXPECT_TRUE(group_delta(before, after)[0].leveling_down);
}

TEST(Serialization, CsvAndMarkdownLayout) {
  const auto f = small_fixture();
  const SubgroupIndex index(two_by_two());
  const auto base = fairness_report(f.d, f.p, index, Grouping::intersection());
  std::ostringstream csv;
  write_report_csv(with_baseline(base, base), csv);
  EXPECT_EQ(csv.str(),
            "group,n,dp,tpr,dp_delta,leveling_down\n"
            "male/white,4,0.750,1.000,+0.000,0\n"
            "male/nonwhite,0,NA,NA,NA,0\n"
            "female/white,0,NA,NA,NA,0\n"
            "female/nonwhite,4,0.250,0.500,+0.000,0\n"
            "WP,,0.333,0.500,,\n");
  std::ostringstream md;
  write_report_markdown(base, md);
  EXPECT_NE(md.str().find("| female/nonwhite | 4 | 0.250 | 0.500 |"), std::string::npos);
  EXPECT_NE(md.str().find("80% rule: DP fail"), std::string::npos);
  const auto j = report_to_json(base);
  EXPECT_EQ(j["groups"].size(), 4u);
  EXPECT_TRUE(j["groups"][1]["dp"].is_null());
}
