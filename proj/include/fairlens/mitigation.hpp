#pragma once

// Post-processing mitigation.
//
// SdaeEnsemble: one classifier per pair of intersectional subgroups plus the
// base classifier. A record is scored by the pair models whose pair contains
// its subgroup and by the base model. Unanimous votes are returned as is;
// otherwise the score eta = h * v_bar + (1 - h) * p_bar is thresholded at the
// subgroup's tau, where v_bar is the share of the majority vote, p_bar the
// mean probability and h = (voters - 1) / voters.
//
// Reject option classification: inside the low-confidence band
// max(p, 1 - p) <= theta, deprived groups get the positive label and favored
// groups the negative one.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fairlens/classifier.hpp"
#include "fairlens/metrics.hpp"
#include "fairlens/subgroups.hpp"
#include "fairlens/unify.hpp"

namespace fairlens {

inline constexpr double kDefaultTau = 0.5;

struct SdaeEnsemble {
  SubgroupIndex index;
  std::string task;
  BinaryModel base;
  std::vector<SubgroupPair> pairs;       // pair_splits(index)
  std::vector<BinaryModel> pair_models;  // aligned with `pairs`
  std::vector<double> tau;               // per subgroup id
  bool include_base_vote = true;
  EmbedConfig embed;

  const BinaryModel& pair_model(const SubgroupPair& p) const {
    auto it = std::lower_bound(pairs.begin(), pairs.end(), p);
    if (it == pairs.end() || *it != p) throw UsageError("ensemble has no model for the pair");
    return pair_models[static_cast<std::size_t>(it - pairs.begin())];
  }
};

struct SdaeOptions {
  bool include_base_vote = true;
  double tau = kDefaultTau;
  unsigned threads = 1;  // pair models train concurrently when > 1
};

// Trains the pair models on `train` (with embeddings `x` in the same order).
// The base model is trained on all of `train` unless one is supplied.
inline SdaeEnsemble train_sdae(const Dataset& train, const EmbeddingMatrix& x, const SubgroupIndex& index,
                               const std::string& task, const TrainHyper& hyper, const EmbedConfig& embed,
                               const SdaeOptions& opts = {}, std::optional<BinaryModel> base = std::nullopt) {
  if (index.size() < 2) throw UsageError("the ensemble needs at least two subgroups");
  if (train.empty()) throw DataError("cannot train the ensemble on an empty dataset");
  if (x.rows() != train.size()) throw UsageError("embedding rows and records differ in count");
  if (!(opts.tau > 0.0 && opts.tau < 1.0)) throw UsageError("tau must lie in (0, 1)");

  const auto labels = task_labels(train, task);
  SdaeEnsemble e;
  e.index = index;
  e.task = task;
  e.embed = embed;
  e.include_base_vote = opts.include_base_vote;
  e.tau.assign(index.size(), opts.tau);
  e.pairs = pair_splits(index);
  e.base = base ? std::move(*base) : train_binary(x, labels, hyper);

  std::vector<std::size_t> group(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) group[i] = index.membership(train.records[i]);

  e.pair_models.resize(e.pairs.size());
  auto fit = [&](std::size_t k) {
    const auto& p = e.pairs[k];
    std::vector<std::size_t> rows;
    std::vector<int> y;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (p.contains(group[i])) {
        rows.push_back(i);
        y.push_back(labels[i]);
      }
    }
    TrainHyper h = hyper;
    h.seed = derive_seed(hyper.seed, k + 1);
    e.pair_models[k] = rows.empty() ? BinaryModel::abstaining(x.dim(), h) : train_binary(x.select(rows), y, h);
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(e.pairs.size())));
  if (threads == 1) {
    for (std::size_t k = 0; k < e.pairs.size(); ++k) fit(k);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t k = t; k < e.pairs.size(); k += threads) fit(k);
      });
    }
  }
  return e;
}

inline SdaeEnsemble train_sdae(const Dataset& train, const SubgroupIndex& index, const std::string& task,
                               const TrainHyper& hyper, const EmbedConfig& embed, const SdaeOptions& opts = {}) {
  return train_sdae(train, embed_dataset(train, embed), index, task, hyper, embed, opts);
}

// Pair models containing `subgroup` that do not abstain, then the base model
// when it votes.
inline std::vector<const BinaryModel*> voter_set(const SdaeEnsemble& e, std::size_t subgroup) {
  if (subgroup >= e.index.size()) throw UsageError("unknown subgroup id");
  std::vector<const BinaryModel*> out;
  for (std::size_t k = 0; k < e.pairs.size(); ++k) {
    if (e.pairs[k].contains(subgroup) && !e.pair_models[k].abstains) out.push_back(&e.pair_models[k]);
  }
  if (e.include_base_vote) out.push_back(&e.base);
  return out;
}

inline double h_param(std::size_t num_voters) {
  if (num_voters == 0) throw UsageError("h needs at least one voter");
  return static_cast<double>(num_voters - 1) / static_cast<double>(num_voters);
}

struct VoteOutcome {
  std::vector<int> votes;
  double v_bar = 0.0;
  double p_bar = 0.0;
  double h = 0.0;
  std::optional<double> eta;  // absent under consensus
  int z = 0;
  bool consensus = false;
};

inline VoteOutcome vote_score(std::span<const int> votes, std::span<const double> probs, double tau) {
  if (votes.size() != probs.size()) throw UsageError("votes and probabilities differ in count");
  if (votes.empty()) throw UsageError("no voters");
  VoteOutcome out;
  out.votes.assign(votes.begin(), votes.end());
  const auto n = static_cast<double>(votes.size());
  const auto ones = static_cast<std::size_t>(std::count(votes.begin(), votes.end(), 1));
  const std::size_t zeros = votes.size() - ones;
  double psum = 0.0;
  for (double p : probs) psum += p;
  out.p_bar = psum / n;
  out.h = h_param(votes.size());
  // Majority share; an even split gives exactly 0.5.
  out.v_bar = static_cast<double>(std::max(ones, zeros)) / n;
  if (ones == 0 || zeros == 0) {
    out.consensus = true;
    out.z = ones > 0 ? 1 : 0;
    return out;
  }
  out.eta = out.h * out.v_bar + (1.0 - out.h) * out.p_bar;
  out.z = *out.eta > tau ? 1 : 0;
  return out;
}

// Scores one embedded record of subgroup `subgroup`.
inline VoteOutcome sdae_vote(const SdaeEnsemble& e, std::size_t subgroup, std::span<const double> x) {
  const auto voters = voter_set(e, subgroup);
  std::vector<int> votes;
  std::vector<double> probs;
  for (const BinaryModel* m : voters) {
    const double p = predict_proba(*m, x);
    probs.push_back(p);
    votes.push_back(p > 0.5 ? 1 : 0);
  }
  return vote_score(votes, probs, e.tau.at(subgroup));
}

inline std::pair<int, VoteOutcome> sdae_predict(const SdaeEnsemble& e, const Record& r) {
  const auto x = embed_record(r, e.embed);
  auto outcome = sdae_vote(e, e.index.membership(r), x.values);
  return {outcome.z, std::move(outcome)};
}

// Derived prediction set. The stored probability is eta where it was computed
// and p_bar under consensus.
inline PredictionSet sdae_predict_set(const SdaeEnsemble& e, const Dataset& d, const EmbeddingMatrix& x) {
  if (x.rows() != d.size()) throw UsageError("embedding rows and records differ in count");
  PredictionSet out{e.task, PredictionKind::derived, kDefaultTau, {}};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto v = sdae_vote(e, e.index.membership(d.records[i]), x.row(i));
    out.entries.emplace(d.records[i].id, Prediction{v.eta.value_or(v.p_bar), v.z});
  }
  return out;
}

inline PredictionSet sdae_predict_set(const SdaeEnsemble& e, const Dataset& d) {
  return sdae_predict_set(e, d, embed_dataset(d, e.embed));
}

// Greedy per-subgroup tau search on validation data: each subgroup in turn
// takes the grid value that maximizes intersectional WP(DP) while the
// macro F1 stays within `f1_budget` of the all-default ensemble.
inline std::vector<double> tune_tau(const SdaeEnsemble& e, const Dataset& validation, const EmbeddingMatrix& x,
                                    double f1_budget, std::span<const double> grid) {
  const auto truth = task_labels(validation, e.task);
  std::vector<std::size_t> group(validation.size());
  std::vector<VoteOutcome> outcomes;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    group[i] = e.index.membership(validation.records[i]);
    outcomes.push_back(sdae_vote(e, group[i], x.row(i)));
  }
  auto score = [&](const std::vector<double>& tau, double& macro) {
    std::vector<int> z(validation.size());
    std::vector<std::size_t> n(e.index.size(), 0), pos(e.index.size(), 0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const auto& o = outcomes[i];
      z[i] = o.consensus ? o.z : (*o.eta > tau[group[i]] ? 1 : 0);
      ++n[group[i]];
      pos[group[i]] += static_cast<std::size_t>(z[i]);
    }
    macro = macro_f1_score(z, truth);
    std::vector<Rate> rates;
    for (std::size_t g = 0; g < n.size(); ++g) {
      rates.push_back(n[g] ? Rate(static_cast<double>(pos[g]) / static_cast<double>(n[g])) : std::nullopt);
    }
    return detail::wp_or_none(rates).value_or(1.0);
  };
  std::vector<double> tau = e.tau;
  double reference_f1 = 0.0;
  double best_wp = score(tau, reference_f1);
  for (std::size_t g = 0; g < tau.size(); ++g) {
    for (double t : grid) {
      if (!(t > 0.0 && t < 1.0)) throw UsageError("tau grid values must lie in (0, 1)");
      auto trial = tau;
      trial[g] = t;
      double macro = 0.0;
      const double wp = score(trial, macro);
      if (wp > best_wp && reference_f1 - macro <= f1_budget) {
        best_wp = wp;
        tau = std::move(trial);
      }
    }
  }
  return tau;
}

// ---------------------------------------------------------------------------
// Reject option classification

struct RocPolicy {
  double theta = 0.6;
  std::set<std::size_t> deprived;  // subgroup ids; the rest are favored

  void check(std::size_t num_subgroups) const {
    if (!(theta > 0.5 && theta < 1.0)) throw UsageError("theta must lie in (0.5, 1)");
    if (deprived.empty() || deprived.size() >= num_subgroups) {
      throw UsageError("deprived subgroups must be a non-empty proper subset");
    }
    for (std::size_t g : deprived) {
      if (g >= num_subgroups) throw UsageError("unknown subgroup id in policy");
    }
  }
};

struct RocOutcome {
  PredictionSet derived;
  std::size_t critical = 0;  // records inside the low-confidence band
  std::size_t flipped = 0;   // labels that changed
};

inline RocOutcome roc_mitigate(const PredictionSet& probs, const Dataset& d, const SubgroupIndex& index,
                               const RocPolicy& policy) {
  policy.check(index.size());
  RocOutcome out;
  out.derived = PredictionSet{probs.task, PredictionKind::derived, probs.threshold, {}};
  for (const auto& r : d.records) {
    const auto& p = probs.at(r.id);
    Prediction q = p;
    if (std::max(p.probability, 1.0 - p.probability) <= policy.theta) {
      ++out.critical;
      q.label = policy.deprived.contains(index.membership(r)) ? 1 : 0;
      if (q.label != p.label) ++out.flipped;
    }
    out.derived.entries.emplace(r.id, q);
  }
  return out;
}

// Subgroups whose group under `grouping` is not the one with the highest
// positive rate in `base`. For a marginal grouping every subgroup carrying a
// deprived attribute value is deprived.
inline std::set<std::size_t> deprived_subgroups(const SubgroupIndex& index, const FairnessReport& base) {
  std::size_t best = base.rates.size();
  for (std::size_t i = 0; i < base.rates.size(); ++i) {
    if (!base.rates[i].dp) continue;
    if (best == base.rates.size() || *base.rates[i].dp > *base.rates[best].dp) best = i;
  }
  if (best == base.rates.size()) throw DataError("no group has a defined positive rate");
  std::set<std::size_t> out;
  for (const auto& g : index.subgroups()) {
    std::size_t pos = g.id;
    if (!base.grouping.is_intersection()) {
      const auto k = *index.schema().find(base.grouping.attribute());
      pos = *index.schema().position(k, g.value_of(base.grouping.attribute()));
    }
    if (pos != best) out.insert(g.id);
  }
  return out;
}

inline std::vector<double> default_theta_grid() {
  std::vector<double> grid;
  for (int k = 11; k <= 19; ++k) grid.push_back(k * 0.05);
  return grid;
}

// Theta from `grid` maximizing intersectional WP(DP) on validation
// probabilities; ties go to the smaller theta.
inline double tune_roc_theta(const PredictionSet& probs, const Dataset& validation, const SubgroupIndex& index,
                             const std::set<std::size_t>& deprived, std::span<const double> grid) {
  if (grid.empty()) throw UsageError("empty theta grid");
  double best_theta = grid.front();
  double best_wp = -1.0;
  for (double theta : grid) {
    auto out = roc_mitigate(probs, validation, index, RocPolicy{theta, deprived});
    auto rep = fairness_report(validation, out.derived, index, Grouping::intersection());
    const double wp = rep.wp_dp.value_or(0.0);
    if (wp > best_wp + 1e-12) {
      best_wp = wp;
      best_theta = theta;
    }
  }
  return best_theta;
}

// ---------------------------------------------------------------------------
// Fairness of derived predictions

enum class Verdict { fair, unfair, fair_but_leveling_down };

constexpr std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::fair: return "fair";
    case Verdict::unfair: return "unfair";
    case Verdict::fair_but_leveling_down: return "fair_but_leveling_down";
  }
  return "";
}

// Fair iff the derived WP(DP) reaches 0.8 - epsilon; fair results are
// annotated when any group was leveled down relative to the base.
inline Verdict mitigation_check(const FairnessReport& base, const FairnessReport& derived, double epsilon = 0.0) {
  const auto deltas = group_delta(base, derived);
  if (!derived.wp_dp || *derived.wp_dp < kEightyPercent - epsilon) return Verdict::unfair;
  const bool leveled = std::any_of(deltas.begin(), deltas.end(), [](const GroupDelta& d) { return d.leveling_down; });
  return leveled ? Verdict::fair_but_leveling_down : Verdict::fair;
}

// ---------------------------------------------------------------------------
// Ensemble artifact directory: manifest.json, base.json, pair_<a>_<b>.json

inline constexpr std::string_view kEnsembleFormat = "fairlens-sdae/1";

inline std::string pair_file_name(const SubgroupPair& p) {
  return "pair_" + std::to_string(p.a) + "_" + std::to_string(p.b) + ".json";
}

inline void save_ensemble(const SdaeEnsemble& e, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json tau = json::object();
  for (const auto& g : e.index.subgroups()) tau[g.label()] = e.tau[g.id];
  json pairs = json::array();
  for (const auto& p : e.pairs) {
    pairs.push_back({{"a", p.a}, {"b", p.b}, {"label", e.index.pair_label(p)}, {"file", pair_file_name(p)}});
  }
  json manifest{{"format", kEnsembleFormat},
                {"task", e.task},
                {"schema", schema_to_json(e.index.schema())},
                {"tau", tau},
                {"include_base_vote", e.include_base_vote},
                {"embedder", embed_config_to_json(e.embed)},
                {"base", "base.json"},
                {"pairs", pairs}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  std::ofstream(dir / "base.json") << binary_model_to_json(e.base).dump() << '\n';
  for (std::size_t k = 0; k < e.pairs.size(); ++k) {
    std::ofstream(dir / pair_file_name(e.pairs[k])) << binary_model_to_json(e.pair_models[k]).dump() << '\n';
  }
}

inline SdaeEnsemble load_ensemble(const std::filesystem::path& dir) {
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open '" + p.string() + "'");
    try {
      return json::parse(in);
    } catch (const json::parse_error& e) {
      throw DataError("'" + p.string() + "': " + e.what());
    }
  };
  const json manifest = read(dir / "manifest.json");
  if (manifest.value("format", "") != kEnsembleFormat) throw DataError("unsupported ensemble format");
  SdaeEnsemble e;
  e.index = SubgroupIndex(schema_from_json(manifest.at("schema")));
  e.task = manifest.at("task").get<std::string>();
  e.include_base_vote = manifest.at("include_base_vote").get<bool>();
  e.embed = embed_config_from_json(manifest.at("embedder"));
  e.base = binary_model_from_json(read(dir / manifest.at("base").get<std::string>()));
  e.pairs = pair_splits(e.index);
  for (const auto& p : e.pairs) e.pair_models.push_back(binary_model_from_json(read(dir / pair_file_name(p))));
  for (const auto& g : e.index.subgroups()) e.tau.push_back(manifest.at("tau").at(g.label()).get<double>());
  return e;
}

}  // namespace fairlens
