#pragma once

// Unified text representation of a record and its hashed embedding.
//
// Every modality is rendered as plain sentences, the segments are
// concatenated in a fixed modality order, and the result is tokenized and
// embedded with a seeded feature-hashing bag of unigrams and bigrams.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "fairlens/common.hpp"
#include "fairlens/data_model.hpp"

namespace fairlens {

// "<key> is <value>." per field, keys in lexicographic order.
inline std::string textualize_structured(const std::map<std::string, Scalar>& payload) {
  std::string out;
  for (const auto& [key, value] : payload) {
    if (!out.empty()) out += ' ';
    out += key;
    out += " is ";
    out += scalar_text(value);
    out += '.';
  }
  return out;
}

// Linear-interpolation quantile of an ascending sample at position (n-1)*q.
inline double sorted_quantile(std::span<const double> sorted, double q) {
  const double pos = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Box-plot (Tukey) outliers: indices of values outside
// [Q1 - 1.5 IQR, Q3 + 1.5 IQR]. Fewer than four values have no outliers.
inline std::vector<std::size_t> detect_outliers_tukey(std::span<const double> values) {
  std::vector<std::size_t> out;
  if (values.size() < 4) return out;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double q1 = sorted_quantile(sorted, 0.25);
  const double q3 = sorted_quantile(sorted, 0.75);
  const double iqr = q3 - q1;
  const double lo = q1 - 1.5 * iqr;
  const double hi = q3 + 1.5 * iqr;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < lo || values[i] > hi) out.push_back(i);
  }
  return out;
}

// Outlying lab values only, "<test> abnormal value <v> at t=<t>.", tests in
// name order and points in time order.
inline std::string textualize_labs(const std::vector<LabEntry>& series) {
  std::map<std::string, std::vector<LabEntry>> by_test;
  for (const auto& e : series) by_test[e.test].push_back(e);
  std::string out;
  for (auto& [test, entries] : by_test) {
    std::stable_sort(entries.begin(), entries.end(), [](const LabEntry& a, const LabEntry& b) { return a.t < b.t; });
    std::vector<double> values;
    values.reserve(entries.size());
    for (const auto& e : entries) values.push_back(e.value);
    for (std::size_t i : detect_outliers_tukey(values)) {
      if (!out.empty()) out += ' ';
      out += test + " abnormal value " + format_number(entries[i].value) + " at t=" + std::to_string(entries[i].t) +
             ".";
    }
  }
  return out;
}

// First occurrence of each code is kept; order is preserved.
inline std::vector<Event> dedup_events(const std::vector<Event>& events) {
  std::vector<Event> out;
  std::unordered_set<std::string> seen;
  for (const auto& e : events) {
    if (seen.insert(e.code).second) out.push_back(e);
  }
  return out;
}

inline std::string textualize_events(const std::vector<Event>& events) {
  std::string out;
  for (const auto& e : dedup_events(events)) {
    if (!out.empty()) out += ' ';
    out += "event " + e.code + " at t=" + std::to_string(e.t) + ".";
  }
  return out;
}

// Lowercase, drop "[** ... **]" de-identification placeholders, collapse
// whitespace, trim.
inline std::string clean_notes(std::string_view text) {
  std::string stripped;
  stripped.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    if (text.compare(i, 3, "[**") == 0) {
      auto end = text.find("**]", i + 3);
      if (end != std::string_view::npos) {
        i = end + 3;
        continue;
      }
    }
    stripped += text[i++];
  }
  std::string out;
  out.reserve(stripped.size());
  bool pending_space = false;
  for (char c : stripped) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

struct UnifiedText {
  std::string record_id;
  std::map<Modality, std::string> per_modality_text;
  std::string full_text;
};

inline std::string modality_text(const Record& r, Modality m) {
  const auto& mods = r.modalities;
  switch (m) {
    case Modality::structured: return mods.structured ? textualize_structured(*mods.structured) : "";
    case Modality::notes: return mods.notes ? clean_notes(*mods.notes) : "";
    case Modality::events: return mods.events ? textualize_events(*mods.events) : "";
    case Modality::lab: return mods.lab ? textualize_labs(*mods.lab) : "";
    case Modality::xray_report: return mods.xray_report ? clean_notes(*mods.xray_report) : "";
  }
  return "";
}

// Segments "[<modality>] <text>" for the selected modalities, in listing
// order, joined by single spaces. Absent modalities contribute an empty
// segment.
inline UnifiedText unify(const Record& r, const ModalitySet& subset) {
  UnifiedText u;
  u.record_id = r.id;
  for (Modality m : kModalityOrder) {
    if (!subset.contains(m)) continue;
    std::string text = modality_text(r, m);
    if (!u.full_text.empty()) u.full_text += ' ';
    u.full_text += "[";
    u.full_text += modality_name(m);
    u.full_text += "] ";
    u.full_text += text;
    u.per_modality_text.emplace(m, std::move(text));
  }
  return u;
}

inline UnifiedText unify(const Record& r, const std::vector<std::string>& modality_names) {
  ModalitySet subset;
  for (const auto& name : modality_names) subset.insert(parse_modality(name));
  return unify(r, subset);
}

// Lowercase alphanumeric runs.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

struct EmbedConfig {
  std::size_t dim = 256;
  std::uint64_t seed = 0;
  int ngram = 2;
  ModalitySet modalities = all_modalities();

  bool operator==(const EmbedConfig&) const = default;
};

inline constexpr std::size_t kMinEmbeddingDim = 8;

struct HashedFeature {
  std::size_t bucket;
  double sign;
};

inline HashedFeature hash_feature(std::string_view ngram, std::size_t dim, std::uint64_t seed) {
  const std::uint64_t h = keyed_hash(ngram, seed);
  // Low bits pick the bucket, the top bit the sign.
  return {static_cast<std::size_t>(h % dim), (h >> 63) ? -1.0 : 1.0};
}

// Signed hashed counts of unigrams and (for ngram >= 2) bigrams, before
// normalization. Bigram keys join the two tokens with a space, which cannot
// occur inside a token.
inline std::vector<double> embed_counts(std::span<const std::string> tokens, std::size_t dim, std::uint64_t seed,
                                        int ngram = 2) {
  if (dim < kMinEmbeddingDim) throw UsageError("embedding dimension must be at least 8");
  std::vector<double> v(dim, 0.0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto f = hash_feature(tokens[i], dim, seed);
    v[f.bucket] += f.sign;
    if (ngram >= 2 && i > 0) {
      auto g = hash_feature(tokens[i - 1] + " " + tokens[i], dim, seed);
      v[g.bucket] += g.sign;
    }
  }
  return v;
}

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const {
    double s = 0.0;
    for (double x : values) s += x * x;
    return std::sqrt(s);
  }
};

// L2-normalized hashed bag of n-grams; the zero vector for no tokens.
inline EmbeddingVector embed(std::span<const std::string> tokens, std::size_t dim, std::uint64_t seed,
                             int ngram = 2) {
  EmbeddingVector e{embed_counts(tokens, dim, seed, ngram)};
  const double n = e.norm();
  if (n > 0.0) {
    for (double& x : e.values) x /= n;
  }
  return e;
}

inline EmbeddingVector embed_record(const Record& r, const EmbedConfig& cfg) {
  const auto tokens = tokenize(unify(r, cfg.modalities).full_text);
  return embed(tokens, cfg.dim, cfg.seed, cfg.ngram);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

inline json embed_config_to_json(const EmbedConfig& c) {
  json mods = json::array();
  for (Modality m : kModalityOrder) {
    if (c.modalities.contains(m)) mods.push_back(std::string(modality_name(m)));
  }
  return json{{"dim", c.dim}, {"seed", c.seed}, {"ngram", c.ngram}, {"modalities", mods}};
}

inline EmbedConfig embed_config_from_json(const json& j) {
  EmbedConfig c;
  c.dim = j.value("dim", c.dim);
  c.seed = j.value("seed", c.seed);
  c.ngram = j.value("ngram", c.ngram);
  if (j.contains("modalities")) {
    c.modalities.clear();
    for (const auto& m : j["modalities"]) c.modalities.insert(parse_modality(m.get<std::string>()));
  }
  if (c.dim < kMinEmbeddingDim) throw UsageError("embedding dimension must be at least 8");
  if (c.ngram < 1 || c.ngram > 2) throw UsageError("n-gram order must be 1 or 2");
  return c;
}

}  // namespace fairlens
