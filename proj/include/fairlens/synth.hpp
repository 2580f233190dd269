#pragma once

// Synthetic multimodal records with controllable intersectional bias, and
// the biased subsampling procedure used to induce disparities in otherwise
// balanced data.
//
// Each record draws its subgroup from the configured fractions and one label
// per task from that subgroup's positive rate. Label-indicative marker tokens
// are planted in each modality with probability modality_signal[m] (scaled
// per subgroup); labels are then flipped with probability label_noise, so
// markers follow the clean label. Filler tokens, events and lab series carry
// no label information.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fairlens/common.hpp"
#include "fairlens/data_model.hpp"
#include "fairlens/subgroups.hpp"

namespace fairlens {

struct SynthConfig {
  AttributeSchema schema;
  std::vector<std::string> tasks{"disposition"};
  std::vector<double> subgroup_fractions;                      // by subgroup id, sums to 1
  std::map<std::string, std::vector<double>> positive_rate;    // task -> rate by subgroup id
  std::map<Modality, double> modality_signal;                  // marker probability per modality
  double label_noise = 0.0;                                    // in [0, 0.5)
  std::size_t n = 0;
  std::uint64_t seed = 0;

  // Per-subgroup bias controls (empty means neutral for every subgroup).
  std::vector<double> signal_scale;  // multiplies every marker probability
  std::vector<double> understate;    // chance a positive record is charted with the negative marker
  std::vector<bool> dialect;         // markers use a subgroup-specific spelling
  bool expose_sensitive = true;      // sensitive values appear in the structured payload
  std::set<std::size_t> privileged;  // documentation only; used by acceptance checks

  bool operator==(const SynthConfig&) const = default;

  void check() const {
    const SubgroupIndex index(schema);
    const std::size_t k = index.size();
    if (subgroup_fractions.size() != k) throw UsageError("one subgroup fraction per subgroup is required");
    double total = 0.0;
    for (double f : subgroup_fractions) {
      if (!(f >= 0.0)) throw UsageError("subgroup fractions must be non-negative");
      total += f;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw UsageError("subgroup fractions must sum to 1");
    if (tasks.empty()) throw UsageError("at least one task is required");
    for (const auto& t : tasks) {
      auto it = positive_rate.find(t);
      if (it == positive_rate.end() || it->second.size() != k) {
        throw UsageError("task '" + t + "' needs one positive rate per subgroup");
      }
      for (double r : it->second) {
        if (!(r >= 0.0 && r <= 1.0)) throw UsageError("positive rates must lie in [0, 1]");
      }
    }
    for (const auto& [m, s] : modality_signal) {
      if (!(s >= 0.0)) throw UsageError("modality signal must be non-negative");
    }
    if (!(label_noise >= 0.0 && label_noise < 0.5)) throw UsageError("label noise must lie in [0, 0.5)");
    if (!signal_scale.empty() && signal_scale.size() != k) throw UsageError("signal_scale needs one value per subgroup");
    if (!understate.empty() && understate.size() != k) throw UsageError("understate needs one value per subgroup");
    if (!dialect.empty() && dialect.size() != k) throw UsageError("dialect needs one value per subgroup");
    for (double s : signal_scale) {
      if (!(s >= 0.0)) throw UsageError("signal_scale must be non-negative");
    }
    for (double u : understate) {
      if (!(u >= 0.0 && u <= 1.0)) throw UsageError("understate must lie in [0, 1]");
    }
    for (std::size_t g : privileged) {
      if (g >= k) throw UsageError("unknown privileged subgroup");
    }
  }
};

namespace detail {

inline constexpr std::array<std::string_view, 24> kNoteWords = {
    "patient", "reports", "mild",    "pain",    "since",  "morning", "denies",  "fever",
    "history", "of",      "chronic", "cough",   "stable", "vitals",  "alert",   "oriented",
    "no",      "acute",   "distress", "abdomen", "soft",   "nontender", "follow", "up"};

inline constexpr std::array<std::string_view, 10> kEventCodes = {
    "TRIAGE", "VITALS", "ECG", "IVACCESS", "MEDADMIN", "XRAYORDER", "LABDRAW", "REASSESS", "CONSULT", "PAIN"};

inline constexpr std::array<std::string_view, 4> kLabTests = {"glucose", "sodium", "creatinine", "hemoglobin"};

inline constexpr std::array<std::string_view, 12> kReportWords = {
    "lungs", "clear", "heart", "size", "normal", "no", "effusion", "mild", "atelectasis", "bases", "stable",
    "mediastinum"};

inline constexpr std::array<double, 4> kLabCenter = {100.0, 140.0, 1.0, 13.5};
inline constexpr std::array<double, 4> kLabSpread = {10.0, 3.0, 0.15, 1.0};

inline std::string modality_code(Modality m) {
  switch (m) {
    case Modality::structured: return "st";
    case Modality::notes: return "nt";
    case Modality::events: return "ev";
    case Modality::lab: return "lb";
    case Modality::xray_report: return "xr";
  }
  return "";
}

template <std::size_t N>
std::string words(Rng& rng, const std::array<std::string_view, N>& vocab, std::size_t count) {
  std::string out;
  for (std::size_t i = 0; i < count; ++i) {
    if (!out.empty()) out += ' ';
    out += vocab[rng.below(N)];
  }
  return out;
}

}  // namespace detail

// Single alphanumeric token, e.g. "dispositionposnt" or "dispositionposnt3"
// for a subgroup-specific spelling.
inline std::string marker_token(const std::string& task, int label, Modality m,
                                std::optional<std::size_t> dialect_of = std::nullopt) {
  std::string out;
  for (char c : task) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  out += label == 1 ? "pos" : "neg";
  out += detail::modality_code(m);
  if (dialect_of) out += "d" + std::to_string(*dialect_of);
  return out;
}

inline Dataset generate(const SynthConfig& cfg) {
  cfg.check();
  const SubgroupIndex index(cfg.schema);
  Dataset d{cfg.schema, cfg.tasks, {}};
  d.records.reserve(cfg.n);
  Rng rng(cfg.seed);
  std::vector<double> cdf;
  double acc = 0.0;
  for (double f : cfg.subgroup_fractions) cdf.push_back(acc += f);

  for (std::size_t i = 0; i < cfg.n; ++i) {
    Record r;
    r.id = "s" + std::to_string(i);
    const double u = rng.uniform();
    std::size_t g = 0;
    while (g + 1 < cdf.size() && u >= cdf[g]) ++g;
    while (cfg.subgroup_fractions[g] == 0.0 && g > 0) --g;  // guards u landing exactly on a boundary
    for (const auto& [attr, value] : index[g].values) r.sensitive.emplace(attr, value);

    std::map<std::string, int> clean;
    for (const auto& t : cfg.tasks) {
      const int y = rng.bernoulli(cfg.positive_rate.at(t)[g]) ? 1 : 0;
      clean.emplace(t, y);
      r.labels.emplace(t, rng.bernoulli(cfg.label_noise) ? 1 - y : y);
    }

    const double scale = cfg.signal_scale.empty() ? 1.0 : cfg.signal_scale[g];
    const double understate = cfg.understate.empty() ? 0.0 : cfg.understate[g];
    const bool dialect = !cfg.dialect.empty() && cfg.dialect[g];
    std::map<Modality, std::vector<std::string>> markers;
    for (const auto& t : cfg.tasks) {
      int shown = clean.at(t);
      if (shown == 1 && rng.bernoulli(understate)) shown = 0;
      for (Modality m : kModalityOrder) {
        auto it = cfg.modality_signal.find(m);
        const double p = it == cfg.modality_signal.end() ? 0.0 : std::min(1.0, it->second * scale);
        if (rng.bernoulli(p)) {
          markers[m].push_back(marker_token(t, shown, m, dialect ? std::optional<std::size_t>(g) : std::nullopt));
        }
      }
    }

    // structured
    std::map<std::string, Scalar> structured;
    structured.emplace("age", static_cast<std::int64_t>(18 + rng.below(73)));
    structured.emplace("acuity", static_cast<std::int64_t>(1 + rng.below(5)));
    structured.emplace("heartrate", static_cast<std::int64_t>(60 + rng.below(60)));
    if (cfg.expose_sensitive) {
      for (const auto& [attr, value] : index[g].values) structured.emplace(attr, value);
    }
    for (std::size_t k = 0; k < markers[Modality::structured].size(); ++k) {
      structured.emplace("flag" + std::to_string(k), markers[Modality::structured][k]);
    }
    r.modalities.structured = std::move(structured);

    // notes
    std::string notes = detail::words(rng, detail::kNoteWords, 8 + rng.below(8));
    for (const auto& mk : markers[Modality::notes]) notes += " " + mk;
    if (rng.bernoulli(0.3)) notes += " seen by [**Name**] today";
    r.modalities.notes = std::move(notes);

    // events, with repeats
    std::vector<Event> events;
    std::int64_t t = 0;
    const std::size_t n_events = 3 + rng.below(5);
    for (std::size_t k = 0; k < n_events; ++k) {
      t += static_cast<std::int64_t>(60 + rng.below(600));
      events.push_back({t, std::string(detail::kEventCodes[rng.below(detail::kEventCodes.size())])});
    }
    for (const auto& mk : markers[Modality::events]) {
      t += static_cast<std::int64_t>(60 + rng.below(600));
      events.push_back({t, mk});
    }
    r.modalities.events = std::move(events);

    // lab series: noisy values around fixed centers; markers become a test
    // with one outlying spike
    std::vector<LabEntry> lab;
    for (std::size_t k = 0; k < detail::kLabTests.size(); ++k) {
      for (std::int64_t s = 0; s < 6; ++s) {
        const double noise = (rng.uniform() - 0.5) * 2.0 * detail::kLabSpread[k];
        const double v = std::round((detail::kLabCenter[k] + noise) * 100.0) / 100.0;
        lab.push_back({s * 3600, std::string(detail::kLabTests[k]), v});
      }
    }
    for (const auto& mk : markers[Modality::lab]) {
      for (std::int64_t s = 0; s < 6; ++s) lab.push_back({s * 3600, mk, s == 5 ? 50.0 : 1.0 + 0.1 * static_cast<double>(s % 2)});
    }
    r.modalities.lab = std::move(lab);

    // x-ray report
    std::string report = detail::words(rng, detail::kReportWords, 6 + rng.below(6));
    for (const auto& mk : markers[Modality::xray_report]) report += " " + mk;
    r.modalities.xray_report = std::move(report);

    d.records.push_back(std::move(r));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Biased sampling

enum class SampleBasis { predictions, labels };

struct BiasedSampleSpec {
  std::set<std::size_t> privileged;  // subgroup ids kept in full
  double minority_fraction = 0.5;
  std::uint64_t seed = 0;
  SampleBasis basis = SampleBasis::predictions;
  bool keep_minority_errors = false;  // also sample minority FP/FN at the same fraction

  void check(std::size_t num_subgroups) const {
    if (privileged.empty() || privileged.size() >= num_subgroups) {
      throw UsageError("privileged subgroups must be a non-empty proper subset");
    }
    for (std::size_t g : privileged) {
      if (g >= num_subgroups) throw UsageError("unknown privileged subgroup");
    }
    if (!(minority_fraction > 0.0 && minority_fraction <= 1.0)) {
      throw UsageError("minority fraction must lie in (0, 1]");
    }
  }
};

// All privileged records, plus floor(f * |cell|) seeded draws from each
// minority cell: true positives and true negatives of `base_preds` (or, with
// SampleBasis::labels, positives and negatives by label). Output keeps the
// input order.
inline Dataset biased_sample(const Dataset& d, const PredictionSet& base_preds, const SubgroupIndex& index,
                             const BiasedSampleSpec& spec) {
  spec.check(index.size());
  enum Cell { tp, tn, fp, fn, count };
  std::array<std::vector<std::size_t>, count> cells;
  std::vector<char> keep(d.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& r = d.records[i];
    if (spec.privileged.contains(index.membership(r))) {
      keep[i] = 1;
      continue;
    }
    auto lab = r.labels.find(base_preds.task);
    if (lab == r.labels.end()) throw DataError("record '" + r.id + "' has no label for '" + base_preds.task + "'");
    const int y = lab->second;
    if (spec.basis == SampleBasis::labels) {
      cells[y == 1 ? tp : tn].push_back(i);
      continue;
    }
    auto it = base_preds.entries.find(r.id);
    if (it == base_preds.entries.end()) throw DataError("no prediction for record '" + r.id + "'");
    const int p = it->second.label;
    cells[p == 1 ? (y == 1 ? tp : fp) : (y == 1 ? fn : tn)].push_back(i);
  }
  Rng rng(spec.seed);
  const int last = spec.keep_minority_errors ? count : fp;
  for (int c = 0; c < last; ++c) {
    auto& cell = cells[static_cast<std::size_t>(c)];
    const auto take = static_cast<std::size_t>(
        std::floor(spec.minority_fraction * static_cast<double>(cell.size()) * (1.0 + 1e-12)));
    rng.shuffle(cell);
    for (std::size_t k = 0; k < take; ++k) keep[cell[k]] = 1;
  }
  Dataset out = d.like();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (keep[i]) out.records.push_back(d.records[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config files and presets

inline json synth_config_to_json(const SynthConfig& c) {
  const SubgroupIndex index(c.schema);
  auto by_label = [&](const auto& values) {
    json out = json::object();
    for (const auto& g : index.subgroups()) out[g.label()] = values[g.id];
    return out;
  };
  json rates = json::object();
  for (const auto& [task, r] : c.positive_rate) rates[task] = by_label(r);
  json signal = json::object();
  for (const auto& [m, s] : c.modality_signal) signal[std::string(modality_name(m))] = s;
  json j{{"schema", schema_to_json(c.schema)},
         {"tasks", c.tasks},
         {"subgroup_fractions", by_label(c.subgroup_fractions)},
         {"positive_rate", rates},
         {"modality_signal", signal},
         {"label_noise", c.label_noise},
         {"n", c.n},
         {"seed", c.seed},
         {"expose_sensitive", c.expose_sensitive}};
  if (!c.signal_scale.empty()) j["signal_scale"] = by_label(c.signal_scale);
  if (!c.understate.empty()) j["understate"] = by_label(c.understate);
  if (!c.dialect.empty()) {
    json dj = json::object();
    for (const auto& g : index.subgroups()) dj[g.label()] = static_cast<bool>(c.dialect[g.id]);
    j["dialect"] = dj;
  }
  json priv = json::array();
  for (std::size_t g : c.privileged) priv.push_back(index[g].label());
  j["privileged"] = priv;
  return j;
}

inline SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  try {
    c.schema = schema_from_json(j.at("schema"));
    const SubgroupIndex index(c.schema);
    auto per_group = [&](const json& obj, auto fallback) {
      using T = decltype(fallback);
      std::vector<T> out;
      for (const auto& g : index.subgroups()) {
        if (!obj.contains(g.label())) throw UsageError("missing value for subgroup '" + g.label() + "'");
        out.push_back(obj.at(g.label()).template get<T>());
      }
      return out;
    };
    c.tasks = j.value("tasks", c.tasks);
    c.subgroup_fractions = per_group(j.at("subgroup_fractions"), 0.0);
    for (const auto& [task, rates] : j.at("positive_rate").items()) c.positive_rate[task] = per_group(rates, 0.0);
    const json signal = j.value("modality_signal", json::object());
    for (const auto& [m, s] : signal.items()) {
      c.modality_signal[parse_modality(m)] = s.get<double>();
    }
    c.label_noise = j.value("label_noise", 0.0);
    c.n = j.value("n", std::size_t{0});
    c.seed = j.value("seed", std::uint64_t{0});
    c.expose_sensitive = j.value("expose_sensitive", true);
    if (j.contains("signal_scale")) c.signal_scale = per_group(j["signal_scale"], 0.0);
    if (j.contains("understate")) c.understate = per_group(j["understate"], 0.0);
    if (j.contains("dialect")) c.dialect = per_group(j["dialect"], false);
    for (const auto& label : j.value("privileged", json::array())) {
      auto id = index.find_label(label.get<std::string>());
      if (!id) throw UsageError("unknown privileged subgroup '" + label.get<std::string>() + "'");
      c.privileged.insert(*id);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed synth config: ") + e.what());
  }
  c.check();
  return c;
}

inline std::vector<std::string> preset_names() { return {"parity_gap_2x2", "asian_minority_2x3", "modality_complement"}; }

// Committed benchmark configurations (also shipped as presets/<name>.json).
//
// parity_gap_2x2: gender x race, the female/nonwhite positive rate is 0.55x
// the male/white rate. Sensitive values are not written into the records;
// the minority subgroups are charted with weaker marker signal, and a share
// of female/nonwhite positives is charted with the negative marker.
//
// asian_minority_2x3: gender x {white, black, asian}, female/asian holds 3%
// of the records.
//
// modality_complement: label signal only in notes and lab, each planted
// independently, so the union carries more evidence than either alone.
inline SynthConfig preset_benchmark(const std::string& name) {
  SynthConfig c;
  c.tasks = {"disposition"};
  c.n = 20000;
  if (name == "parity_gap_2x2") {
    c.schema = AttributeSchema({{"gender", {"male", "female"}}, {"race", {"white", "nonwhite"}}});
    c.subgroup_fractions = {0.272, 0.2, 0.442, 0.086};
    c.positive_rate["disposition"] = {0.674, 0.575, 0.643, 0.55 * 0.674};
    for (Modality m : kModalityOrder) c.modality_signal[m] = 0.55;
    c.signal_scale = {1.0, 0.55, 0.75, 0.4};
    c.understate = {0.0, 0.0, 0.0, 0.4};
    c.dialect = {false, true, false, false};
    c.label_noise = 0.02;
    c.expose_sensitive = false;
    c.privileged = {0, 2};
  } else if (name == "asian_minority_2x3") {
    c.schema = AttributeSchema({{"gender", {"male", "female"}}, {"race", {"white", "black", "asian"}}});
    c.subgroup_fractions = {0.30, 0.10, 0.07, 0.32, 0.18, 0.03};
    c.positive_rate["disposition"] = {0.70, 0.62, 0.60, 0.70, 0.60, 0.40};
    for (Modality m : kModalityOrder) c.modality_signal[m] = 0.4;
    c.label_noise = 0.05;
    c.privileged = {0, 3};
  } else if (name == "modality_complement") {
    c.schema = AttributeSchema({{"gender", {"male", "female"}}, {"race", {"white", "nonwhite"}}});
    c.subgroup_fractions = {0.35, 0.15, 0.35, 0.15};
    c.positive_rate["disposition"] = {0.5, 0.5, 0.5, 0.5};
    c.modality_signal = {{Modality::notes, 0.5}, {Modality::lab, 0.5}};
    c.label_noise = 0.05;
    c.privileged = {0, 2};
  } else {
    throw UsageError("unknown preset '" + name + "'");
  }
  c.check();
  return c;
}

}  // namespace fairlens
