#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "fairlens/mitigation.hpp"

using namespace fairlens;

namespace {

AttributeSchema two_by_two() {
  return AttributeSchema({{"gender", {"male", "female"}}, {"race", {"white", "nonwhite"}}});
}

struct Scored {
  Dataset d{two_by_two(), {"disposition"}, {}};
  PredictionSet p{"disposition", PredictionKind::base, 0.5, {}};

  void add(const std::string& gender, const std::string& race, double prob, int label = 0) {
    Record r;
    r.id = "r" + std::to_string(d.size());
    r.sensitive = {{"gender", gender}, {"race", race}};
    r.labels = {{"disposition", label}};
    r.modalities.notes = "x";
    p.entries.emplace(r.id, Prediction{prob, prob > 0.5 ? 1 : 0});
    d.records.push_back(std::move(r));
  }
};

FairnessReport report_with_dp(std::vector<std::optional<double>> dp) {
  FairnessReport r;
  r.task = "disposition";
  for (std::size_t i = 0; i < dp.size(); ++i) {
    GroupRates g{"g" + std::to_string(i)};
    g.dp = dp[i];
    r.rates.push_back(g);
  }
  std::vector<Rate> rates(dp.begin(), dp.end());
  if (std::count_if(dp.begin(), dp.end(), [](const auto& v) { return v.has_value(); }) >= 2) {
    r.wp_dp = worst_case_parity(rates);
  }
  return r;
}

}  // namespace

TEST(Vote, ConsensusReturnsCommonVote) {
  const std::vector<int> ones{1, 1, 1, 1};
  const std::vector<double> low{0.1, 0.2, 0.3, 0.4};
  const auto v = vote_score(ones, low, 0.5);
  EXPECT_TRUE(v.consensus);
  EXPECT_EQ(v.z, 1);
  EXPECT_FALSE(v.eta);
  const std::vector<int> zeros{0, 0, 0};
  const std::vector<double> high{0.9, 0.9, 0.9};
  EXPECT_EQ(vote_score(zeros, high, 0.5).z, 0);
}

TEST(Vote, DisagreementBlendsMajorityAndProbability) {
  const std::vector<int> votes{1, 1, 1, 0};
  const std::vector<double> probs{0.6, 0.7, 0.55, 0.35};
  const auto v = vote_score(votes, probs, 0.5);
  EXPECT_FALSE(v.consensus);
  EXPECT_DOUBLE_EQ(v.h, 0.75);
  EXPECT_DOUBLE_EQ(v.v_bar, 0.75);
  EXPECT_NEAR(v.p_bar, 0.55, 1e-12);
  EXPECT_NEAR(*v.eta, 0.75 * 0.75 + 0.25 * 0.55, 1e-12);
  EXPECT_EQ(v.z, 1);
  EXPECT_EQ(vote_score(votes, probs, 0.71).z, 0);
}

TEST(Vote, EvenSplitIsDecidedByProbability) {
  const std::vector<int> votes{1, 0, 1, 0};
  const std::vector<double> low{0.6, 0.1, 0.55, 0.05};
  const auto v = vote_score(votes, low, 0.5);
  EXPECT_DOUBLE_EQ(v.v_bar, 0.5);
  EXPECT_NEAR(*v.eta, 0.75 * 0.5 + 0.25 * 0.325, 1e-12);
  EXPECT_EQ(v.z, 0);
  const std::vector<double> high{0.9, 0.45, 0.95, 0.4};
  EXPECT_EQ(vote_score(votes, high, 0.5).z, 1);
}

TEST(Vote, EtaStaysInUnitInterval) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + gen() % 10;
    std::vector<int> votes(n);
    std::vector<double> probs(n);
    for (std::size_t i = 0; i < n; ++i) {
      votes[i] = static_cast<int>(gen() % 2);
      probs[i] = u(gen);
    }
    const auto v = vote_score(votes, probs, 0.5);
    if (v.eta) {
      ASSERT_GE(*v.eta, 0.0);
      ASSERT_LE(*v.eta, 1.0);
    }
  }
}

TEST(Vote, Errors) {
  const std::vector<int> votes{1};
  const std::vector<double> probs{0.5, 0.5};
  EXPECT_THROW(vote_score(votes, probs, 0.5), UsageError);
  EXPECT_THROW(vote_score({}, {}, 0.5), UsageError);
  EXPECT_THROW(h_param(0), UsageError);
  EXPECT_DOUBLE_EQ(h_param(1), 0.0);
}

TEST(Sdae, VoterSetSkipsAbstainingPairs) {
  SdaeEnsemble e;
  e.index = SubgroupIndex(two_by_two());
  e.pairs = pair_splits(e.index);
  e.base.weights = {0.0};
  for (const auto& p : e.pairs) {
    BinaryModel m;
    m.weights = {0.0};
    e.pair_models.push_back(p.contains(1) && p.contains(3) ? BinaryModel::abstaining(1, TrainHyper{}) : m);
  }
  EXPECT_EQ(voter_set(e, 0).size(), 4u);
  EXPECT_EQ(voter_set(e, 3).size(), 3u);
  EXPECT_EQ(voter_set(e, 3).back(), &e.base);
  e.include_base_vote = false;
  EXPECT_EQ(voter_set(e, 0).size(), 3u);
  EXPECT_THROW(voter_set(e, 4), UsageError);
}

TEST(Sdae, TrainsOnePairModelPerSplitAndRoundTrips) {
  Dataset d{two_by_two(), {"disposition"}, {}};
  const char* genders[] = {"male", "female"};
  const char* races[] = {"white", "nonwhite"};
  for (int i = 0; i < 80; ++i) {
    Record r;
    r.id = "r" + std::to_string(i);
    r.sensitive = {{"gender", genders[i % 2]}, {"race", races[(i / 2) % 2]}};
    const int y = (i / 4) % 2;
    r.modalities.notes = y ? "admit ward" : "discharge home";
    r.labels = {{"disposition", y}};
    d.records.push_back(std::move(r));
  }
  const SubgroupIndex index(two_by_two());
  EmbedConfig ec;
  ec.dim = 32;
  TrainHyper h;
  h.epochs = 20;
  h.learning_rate = 0.5;
  SdaeOptions opts;
  opts.threads = 2;
  const auto e = train_sdae(d, index, "disposition", h, ec, opts);
  ASSERT_EQ(e.pair_models.size(), 6u);
  for (const auto& m : e.pair_models) EXPECT_EQ(m.meta.n, 40u);
  const auto preds = sdae_predict_set(e, d);
  EXPECT_EQ(preds.kind, PredictionKind::derived);
  for (const auto& r : d.records) EXPECT_EQ(preds.at(r.id).label, r.labels.at("disposition"));

  const auto dir = std::filesystem::temp_directory_path() / "fairlens_test_ensemble";
  std::filesystem::remove_all(dir);
  save_ensemble(e, dir);
  const auto back = load_ensemble(dir);
  EXPECT_EQ(back.pair_models, e.pair_models);
  EXPECT_EQ(back.base, e.base);
  EXPECT_EQ(back.tau, e.tau);
  EXPECT_EQ(back.embed, e.embed);
  EXPECT_EQ(sdae_predict(back, d.records[5]).first, sdae_predict(e, d.records[5]).first);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_ensemble(dir), DataError);
}

TEST(Roc, FlipsOnlyInsideCriticalRegion) {
  Scored s;
  s.add("male", "white", 0.58);
  s.add("male", "white", 0.90);
  s.add("female", "nonwhite", 0.45);
  s.add("female", "nonwhite", 0.40);  // on the boundary
  s.add("female", "nonwhite", 0.10);
  const SubgroupIndex index(two_by_two());
  const auto out = roc_mitigate(s.p, s.d, index, RocPolicy{0.6, {1, 2, 3}});
  EXPECT_EQ(out.critical, 3u);
  EXPECT_EQ(out.flipped, 3u);
  EXPECT_EQ(out.derived.at("r0").label, 0);
  EXPECT_EQ(out.derived.at("r1").label, 1);
  EXPECT_EQ(out.derived.at("r2").label, 1);
  EXPECT_EQ(out.derived.at("r3").label, 1);
  EXPECT_EQ(out.derived.at("r4").label, 0);
  EXPECT_DOUBLE_EQ(out.derived.at("r2").probability, 0.45);
  EXPECT_THROW(roc_mitigate(s.p, s.d, index, RocPolicy{0.5, {1}}), UsageError);
  EXPECT_THROW(roc_mitigate(s.p, s.d, index, RocPolicy{0.6, {}}), UsageError);
  EXPECT_THROW(roc_mitigate(s.p, s.d, index, RocPolicy{0.6, {0, 1, 2, 3}}), UsageError);
}

TEST(Roc, DeprivedSubgroupsFollowGrouping) {
  const SubgroupIndex index(two_by_two());
  auto inter = report_with_dp({0.7, 0.5, std::nullopt, 0.4});
  inter.grouping = Grouping::intersection();
  EXPECT_EQ(deprived_subgroups(index, inter), (std::set<std::size_t>{1, 2, 3}));
  auto gender = report_with_dp({0.4, 0.6});
  gender.grouping = Grouping::marginal("gender");
  EXPECT_EQ(deprived_subgroups(index, gender), (std::set<std::size_t>{0, 1}));
  auto race = report_with_dp({0.6, 0.4});
  race.grouping = Grouping::marginal("race");
  EXPECT_EQ(deprived_subgroups(index, race), (std::set<std::size_t>{1, 3}));
  auto none = report_with_dp({std::nullopt, std::nullopt});
  EXPECT_THROW(deprived_subgroups(index, none), DataError);
}

TEST(Roc, ThetaTuningPicksBestParity) {
  Scored s;
  for (int i = 0; i < 10; ++i) s.add("male", "white", 0.7);
  for (int i = 0; i < 10; ++i) s.add("female", "nonwhite", i < 5 ? 0.34 : 0.2);
  const SubgroupIndex index(two_by_two());
  const auto grid = default_theta_grid();
  ASSERT_EQ(grid.size(), 9u);
  EXPECT_NEAR(grid.front(), 0.55, 1e-12);
  EXPECT_NEAR(grid.back(), 0.95, 1e-12);
  // Every grid point leaves one of the two groups at zero, so the smallest theta wins.
  EXPECT_NEAR(tune_roc_theta(s.p, s.d, index, {3}, grid), 0.55, 1e-12);
  Scored t;
  for (int i = 0; i < 10; ++i) t.add("male", "white", i < 6 ? 0.9 : 0.1);
  for (int i = 0; i < 10; ++i) t.add("female", "nonwhite", i < 3 ? 0.9 : i < 6 ? 0.38 : 0.1);
  // Below 0.65 the deprived rate is 0.3; at 0.65 it reaches the favored 0.6.
  EXPECT_NEAR(tune_roc_theta(t.p, t.d, index, {3}, grid), 0.65, 1e-12);
  EXPECT_THROW(tune_roc_theta(t.p, t.d, index, {3}, std::vector<double>{}), UsageError);
}

TEST(Check, Verdicts) {
  auto base = report_with_dp({0.708, 0.707, 0.575});
  auto fair = report_with_dp({0.708, 0.707, 0.606});
  EXPECT_NEAR(*fair.wp_dp, 0.856, 0.001);
  EXPECT_EQ(mitigation_check(base, fair), Verdict::fair);

  auto leveled = report_with_dp({0.468, 0.468, 0.468});
  EXPECT_DOUBLE_EQ(*leveled.wp_dp, 1.0);
  EXPECT_EQ(mitigation_check(base, leveled), Verdict::fair_but_leveling_down);

  auto unfair = report_with_dp({0.720, 0.720, 0.511});
  EXPECT_NEAR(*unfair.wp_dp, 0.709, 0.001);
  EXPECT_EQ(mitigation_check(base, unfair), Verdict::unfair);
  EXPECT_EQ(verdict_name(Verdict::fair_but_leveling_down), "fair_but_leveling_down");

  auto edge = report_with_dp({1.0, 0.79});
  auto edge_base = report_with_dp({1.0, 0.79});
  EXPECT_EQ(mitigation_check(edge_base, edge), Verdict::unfair);
  EXPECT_EQ(mitigation_check(edge_base, edge, 0.02), Verdict::fair);
}
