#pragma once

// Group fairness and predictive performance metrics.
//
// Rates are optional: a group with no members has no positive rate and a
// group with no positive labels has no true positive rate. Undefined rates
// are skipped by worst_case_parity instead of counting as zero.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fairlens/data_model.hpp"
#include "fairlens/subgroups.hpp"

namespace fairlens {

using Rate = std::optional<double>;

inline constexpr double kEightyPercent = 0.8;
inline constexpr double kLevelingDownRelativeDrop = 0.05;

// Fraction of members predicted positive.
inline Rate dp_rate(const PredictionSet& preds, std::span<const std::string> member_ids) {
  if (member_ids.empty()) return std::nullopt;
  std::size_t pos = 0;
  for (const auto& id : member_ids) pos += preds.at(id).label == 1 ? 1 : 0;
  return static_cast<double>(pos) / static_cast<double>(member_ids.size());
}

// Among members labelled 1 for the prediction set's task, the fraction predicted 1.
inline Rate tpr(const PredictionSet& preds, const Dataset& labels, std::span<const std::string> member_ids) {
  const auto by_id = index_by_id(labels);
  std::size_t positives = 0;
  std::size_t hits = 0;
  for (const auto& id : member_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("unknown record '" + id + "'");
    const auto& rec = labels.records[it->second];
    auto lab = rec.labels.find(preds.task);
    if (lab == rec.labels.end()) throw DataError("record '" + id + "' has no label for '" + preds.task + "'");
    if (lab->second != 1) continue;
    ++positives;
    hits += preds.at(id).label == 1 ? 1 : 0;
  }
  if (positives == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(positives);
}

// min / max over the defined rates. All-zero rates count as parity (1.0).
inline double worst_case_parity(std::span<const Rate> rates) {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t defined = 0;
  for (const auto& r : rates) {
    if (!r) continue;
    lo = defined == 0 ? *r : std::min(lo, *r);
    hi = defined == 0 ? *r : std::max(hi, *r);
    ++defined;
  }
  if (defined < 2) throw DataError("worst-case parity needs at least two defined rates");
  if (hi <= 0.0) return 1.0;
  return std::clamp(lo / hi, 0.0, 1.0);
}

inline double worst_case_parity(std::initializer_list<double> rates) {
  std::vector<Rate> r(rates.begin(), rates.end());
  return worst_case_parity(std::span<const Rate>(r));
}

inline bool eighty_percent_rule(double wp) { return wp >= kEightyPercent; }

// ---------------------------------------------------------------------------
// Predictive performance

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw UsageError("prediction and label counts differ");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predicted[i] == 1) {
      (labels[i] == 1 ? c.tp : c.fp)++;
    } else {
      (labels[i] == 1 ? c.fn : c.tn)++;
    }
  }
  return c;
}

// F1 of the positive class; 0 when precision + recall = 0.
inline double f1_score(std::span<const int> predicted, std::span<const int> labels) {
  const Confusion c = confusion(predicted, labels);
  const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp + c.fn);
  return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / denom;
}

// Mean of the F1 scores of both classes.
inline double macro_f1_score(std::span<const int> predicted, std::span<const int> labels) {
  std::vector<int> p(predicted.begin(), predicted.end());
  std::vector<int> l(labels.begin(), labels.end());
  for (auto& v : p) v = 1 - v;
  for (auto& v : l) v = 1 - v;
  return 0.5 * (f1_score(predicted, labels) + f1_score(p, l));
}

// Probability that a random positive outscores a random negative, ties count
// one half. Computed from average ranks.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw UsageError("score and label counts differ");
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("AUROC needs both classes");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

// Step-wise area under the precision-recall curve: sum over distinct score
// thresholds of (recall gain) x precision.
inline double auprc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw UsageError("score and label counts differ");
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0) throw DataError("AUPRC needs at least one positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] == 1 ? 1 : 0;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

// Aligned probability, label and ground-truth columns for one task, in
// dataset order.
struct ScoredColumns {
  std::vector<double> probability;
  std::vector<int> predicted;
  std::vector<int> truth;
};

inline ScoredColumns scored_columns(const PredictionSet& preds, const Dataset& d) {
  ScoredColumns out;
  out.probability.reserve(d.size());
  for (const auto& r : d.records) {
    const auto& p = preds.at(r.id);
    auto lab = r.labels.find(preds.task);
    if (lab == r.labels.end()) throw DataError("record '" + r.id + "' has no label for '" + preds.task + "'");
    out.probability.push_back(p.probability);
    out.predicted.push_back(p.label);
    out.truth.push_back(lab->second);
  }
  return out;
}

inline double f1(const PredictionSet& preds, const Dataset& d) {
  auto c = scored_columns(preds, d);
  return f1_score(c.predicted, c.truth);
}

inline double auroc(const PredictionSet& preds, const Dataset& d) {
  auto c = scored_columns(preds, d);
  return auroc(c.probability, c.truth);
}

inline double auprc(const PredictionSet& preds, const Dataset& d) {
  auto c = scored_columns(preds, d);
  return auprc(c.probability, c.truth);
}

// ---------------------------------------------------------------------------
// Fairness reports

class Grouping {
public:
  static Grouping marginal(std::string attribute) { return Grouping(std::move(attribute)); }
  static Grouping intersection() { return Grouping(std::string{}); }

  bool is_intersection() const { return attribute_.empty(); }
  const std::string& attribute() const { return attribute_; }
  std::string label() const { return is_intersection() ? "intersection" : attribute_; }

  bool operator==(const Grouping&) const = default;

private:
  explicit Grouping(std::string attribute) : attribute_(std::move(attribute)) {}
  std::string attribute_;
};

struct GroupRates {
  std::string label;
  std::size_t n = 0;
  std::size_t n_pos_pred = 0;
  std::size_t n_pos_label = 0;
  std::size_t n_true_pos = 0;
  Rate dp{};
  Rate tpr{};
};

struct GroupDelta {
  std::string label;
  Rate dp_change;
  Rate tpr_change;
  bool leveling_down = false;
};

struct FairnessReport {
  std::string task;
  Grouping grouping = Grouping::intersection();
  std::vector<GroupRates> rates;
  Rate wp_dp;
  Rate wp_tpr;
  bool passes_80_dp = false;
  bool passes_80_tpr = false;
  std::optional<std::vector<GroupDelta>> deltas;

  const GroupRates& group(std::string_view label) const {
    for (const auto& g : rates) {
      if (g.label == label) return g;
    }
    throw UsageError("report has no group '" + std::string(label) + "'");
  }
};

// Optional restriction of a report to records whose structured field `key`
// renders as `value`.
struct Condition {
  std::string key;
  std::string value;
};

namespace detail {

inline bool satisfies(const Record& r, const Condition& c) {
  if (!r.modalities.structured) return false;
  auto it = r.modalities.structured->find(c.key);
  return it != r.modalities.structured->end() && scalar_text(it->second) == c.value;
}

inline Rate wp_or_none(const std::vector<Rate>& rates) {
  std::size_t defined = 0;
  for (const auto& r : rates) defined += r ? 1 : 0;
  if (defined < 2) return std::nullopt;
  return worst_case_parity(std::span<const Rate>(rates));
}

}  // namespace detail

// Group labels of a grouping: attribute values for a marginal grouping,
// subgroup labels for the intersection.
inline std::vector<std::string> group_labels(const SubgroupIndex& index, const Grouping& grouping) {
  if (grouping.is_intersection()) {
    std::vector<std::string> out;
    for (const auto& g : index.subgroups()) out.push_back(g.label());
    return out;
  }
  auto k = index.schema().find(grouping.attribute());
  if (!k) throw UsageError("unknown attribute '" + grouping.attribute() + "'");
  return index.schema().attributes()[*k].domain;
}

// Group position of a record under a grouping.
inline std::size_t group_of(const Record& r, const SubgroupIndex& index, const Grouping& grouping) {
  const std::size_t sg = index.membership(r);
  if (grouping.is_intersection()) return sg;
  auto k = index.schema().find(grouping.attribute());
  if (!k) throw UsageError("unknown attribute '" + grouping.attribute() + "'");
  return *index.schema().position(*k, index[sg].value_of(grouping.attribute()));
}

inline FairnessReport fairness_report(const Dataset& d, const PredictionSet& preds, const SubgroupIndex& index,
                                      const Grouping& grouping,
                                      const std::optional<Condition>& condition = std::nullopt) {
  FairnessReport rep;
  rep.task = preds.task;
  rep.grouping = grouping;
  for (auto& label : group_labels(index, grouping)) rep.rates.push_back(GroupRates{std::move(label)});
  for (const auto& r : d.records) {
    if (condition && !detail::satisfies(r, *condition)) continue;
    auto& g = rep.rates[group_of(r, index, grouping)];
    const auto& p = preds.at(r.id);
    auto lab = r.labels.find(preds.task);
    if (lab == r.labels.end()) throw DataError("record '" + r.id + "' has no label for '" + preds.task + "'");
    ++g.n;
    g.n_pos_pred += p.label == 1 ? 1 : 0;
    if (lab->second == 1) {
      ++g.n_pos_label;
      g.n_true_pos += p.label == 1 ? 1 : 0;
    }
  }
  std::vector<Rate> dps, tprs;
  for (auto& g : rep.rates) {
    if (g.n > 0) g.dp = static_cast<double>(g.n_pos_pred) / static_cast<double>(g.n);
    if (g.n_pos_label > 0) g.tpr = static_cast<double>(g.n_true_pos) / static_cast<double>(g.n_pos_label);
    dps.push_back(g.dp);
    tprs.push_back(g.tpr);
  }
  rep.wp_dp = detail::wp_or_none(dps);
  rep.wp_tpr = detail::wp_or_none(tprs);
  rep.passes_80_dp = rep.wp_dp && eighty_percent_rule(*rep.wp_dp);
  rep.passes_80_tpr = rep.wp_tpr && eighty_percent_rule(*rep.wp_tpr);
  return rep;
}

// Per-group changes from `before` to `after`. A group is flagged as leveled
// down when its positive rate falls by more than 5% of its baseline value.
inline std::vector<GroupDelta> group_delta(const FairnessReport& before, const FairnessReport& after) {
  if (!(before.grouping == after.grouping) || before.task != after.task ||
      before.rates.size() != after.rates.size()) {
    throw UsageError("reports differ in grouping or task");
  }
  std::vector<GroupDelta> out;
  for (std::size_t i = 0; i < before.rates.size(); ++i) {
    const auto& b = before.rates[i];
    const auto& a = after.rates[i];
    if (a.label != b.label) throw UsageError("reports differ in group order");
    GroupDelta gd{b.label, std::nullopt, std::nullopt, false};
    if (a.dp && b.dp) {
      gd.dp_change = *a.dp - *b.dp;
      gd.leveling_down = *gd.dp_change < -kLevelingDownRelativeDrop * *b.dp;
    }
    if (a.tpr && b.tpr) gd.tpr_change = *a.tpr - *b.tpr;
    out.push_back(std::move(gd));
  }
  return out;
}

inline FairnessReport with_baseline(FairnessReport after, const FairnessReport& before) {
  after.deltas = group_delta(before, after);
  return after;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string rate_text(const Rate& r) { return r ? format_rate(*r) : "NA"; }

inline std::string signed_rate_text(const Rate& r) {
  if (!r) return "NA";
  std::string s = format_rate(*r);
  if (s == "-0.000") s = "0.000";
  return (*r >= 0.0 && s[0] != '-') ? "+" + s : s;
}

// One row per group: group label, n, dp, tpr, dp_delta, flag.
inline void write_report_csv(const FairnessReport& rep, std::ostream& out) {
  out << "group,n,dp,tpr,dp_delta,leveling_down\n";
  for (std::size_t i = 0; i < rep.rates.size(); ++i) {
    const auto& g = rep.rates[i];
    out << csv_escape(g.label) << ',' << g.n << ',' << rate_text(g.dp) << ',' << rate_text(g.tpr) << ',';
    if (rep.deltas) {
      const auto& d = (*rep.deltas)[i];
      out << signed_rate_text(d.dp_change) << ',' << (d.leveling_down ? 1 : 0);
    } else {
      out << "NA,0";
    }
    out << '\n';
  }
  out << "WP,," << rate_text(rep.wp_dp) << ',' << rate_text(rep.wp_tpr) << ",,\n";
}

inline json rate_json(const Rate& r) { return r ? json(*r) : json(nullptr); }

inline json report_to_json(const FairnessReport& rep) {
  json groups = json::array();
  for (std::size_t i = 0; i < rep.rates.size(); ++i) {
    const auto& g = rep.rates[i];
    json row{{"group", g.label},       {"n", g.n},       {"positive_predictions", g.n_pos_pred},
             {"positive_labels", g.n_pos_label}, {"true_positives", g.n_true_pos},
             {"dp", rate_json(g.dp)}, {"tpr", rate_json(g.tpr)}};
    if (rep.deltas) {
      const auto& d = (*rep.deltas)[i];
      row["dp_delta"] = rate_json(d.dp_change);
      row["tpr_delta"] = rate_json(d.tpr_change);
      row["leveling_down"] = d.leveling_down;
    }
    groups.push_back(std::move(row));
  }
  return json{{"task", rep.task},
              {"grouping", rep.grouping.label()},
              {"wp_dp", rate_json(rep.wp_dp)},
              {"wp_tpr", rate_json(rep.wp_tpr)},
              {"passes_80_dp", rep.passes_80_dp},
              {"passes_80_tpr", rep.passes_80_tpr},
              {"groups", std::move(groups)}};
}

// Markdown table with groups as rows and DP/TPR columns, WP as the last row.
inline void write_report_markdown(const FairnessReport& rep, std::ostream& out) {
  const bool deltas = rep.deltas.has_value();
  out << "| Group | n | DP | TPR |" << (deltas ? " DP change | Leveling down |" : "") << '\n';
  out << "|---|---|---|---|" << (deltas ? "---|---|" : "") << '\n';
  for (std::size_t i = 0; i < rep.rates.size(); ++i) {
    const auto& g = rep.rates[i];
    out << "| " << g.label << " | " << g.n << " | " << rate_text(g.dp) << " | " << rate_text(g.tpr) << " |";
    if (deltas) {
      const auto& d = (*rep.deltas)[i];
      out << ' ' << signed_rate_text(d.dp_change) << " | " << (d.leveling_down ? "yes" : "no") << " |";
    }
    out << '\n';
  }
  out << "| WP | | " << rate_text(rep.wp_dp) << " | " << rate_text(rep.wp_tpr) << " |" << (deltas ? " | |" : "")
      << '\n';
  out << "\n80% rule: DP " << (rep.passes_80_dp ? "pass" : "fail") << ", TPR "
      << (rep.passes_80_tpr ? "pass" : "fail") << '\n';
}

}  // namespace fairlens
