#pragma once

// Records, datasets, attribute schemas and their file formats.
//
// A record is one stay: up to five modality payloads, the values of the
// sensitive attributes, and one binary label per task. Datasets are plain
// values; every operation here takes them by const reference and returns new
// datasets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "fairlens/common.hpp"

namespace fairlens {

using json = nlohmann::json;

enum class Modality { structured, notes, events, lab, xray_report };

// Fixed listing order; unified text concatenates segments in this order.
inline constexpr std::array<Modality, 5> kModalityOrder = {
    Modality::structured, Modality::notes, Modality::events, Modality::lab,
    Modality::xray_report};

constexpr std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::structured: return "structured";
    case Modality::notes: return "notes";
    case Modality::events: return "events";
    case Modality::lab: return "lab";
    case Modality::xray_report: return "xray_report";
  }
  return "";
}

inline Modality parse_modality(std::string_view name) {
  for (Modality m : kModalityOrder) {
    if (modality_name(m) == name) return m;
  }
  throw UsageError("unknown modality '" + std::string(name) + "'");
}

using ModalitySet = std::set<Modality>;

inline ModalitySet all_modalities() {
  return ModalitySet(kModalityOrder.begin(), kModalityOrder.end());
}

// "structured+lab" style label, in listing order. Empty set renders "none".
inline std::string modality_set_label(const ModalitySet& set) {
  std::string out;
  for (Modality m : kModalityOrder) {
    if (!set.contains(m)) continue;
    if (!out.empty()) out += '+';
    out += modality_name(m);
  }
  return out.empty() ? "none" : out;
}

using Scalar = std::variant<std::int64_t, double, std::string, bool>;

inline std::string scalar_text(const Scalar& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else {
          return format_number(v);
        }
      },
      s);
}

struct Event {
  std::int64_t t = 0;
  std::string code;
  bool operator==(const Event&) const = default;
};

struct LabEntry {
  std::int64_t t = 0;
  std::string test;
  double value = 0.0;
  bool operator==(const LabEntry&) const = default;
};

struct Modalities {
  std::optional<std::map<std::string, Scalar>> structured;
  std::optional<std::string> notes;
  std::optional<std::vector<Event>> events;
  std::optional<std::vector<LabEntry>> lab;
  std::optional<std::string> xray_report;

  bool has(Modality m) const {
    switch (m) {
      case Modality::structured: return structured.has_value();
      case Modality::notes: return notes.has_value();
      case Modality::events: return events.has_value();
      case Modality::lab: return lab.has_value();
      case Modality::xray_report: return xray_report.has_value();
    }
    return false;
  }

  bool empty() const {
    return std::none_of(kModalityOrder.begin(), kModalityOrder.end(),
                        [this](Modality m) { return has(m); });
  }

  bool operator==(const Modalities&) const = default;
};

struct Record {
  std::string id;
  Modalities modalities;
  std::map<std::string, std::string> sensitive;
  std::map<std::string, int> labels;

  bool operator==(const Record&) const = default;
};

struct Attribute {
  std::string name;
  std::vector<std::string> domain;
  bool operator==(const Attribute&) const = default;
};

// Ordered sensitive attributes, each with an ordered domain of at least two
// distinct values. Construction validates; an instance is always well formed.
class AttributeSchema {
public:
  AttributeSchema() = default;

  explicit AttributeSchema(std::vector<Attribute> attributes) : attributes_(std::move(attributes)) {
    std::set<std::string> names;
    for (const auto& a : attributes_) {
      if (a.name.empty()) throw UsageError("attribute name must not be empty");
      if (!names.insert(a.name).second) throw UsageError("duplicate attribute '" + a.name + "'");
      if (a.domain.size() < 2) {
        throw UsageError("attribute '" + a.name + "' needs at least two values");
      }
      std::set<std::string> values(a.domain.begin(), a.domain.end());
      if (values.size() != a.domain.size()) {
        throw UsageError("attribute '" + a.name + "' has duplicate values");
      }
    }
  }

  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::size_t size() const { return attributes_.size(); }
  bool empty() const { return attributes_.empty(); }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
      if (attributes_[i].name == name) return i;
    }
    return std::nullopt;
  }

  // Position of `value` in the domain of attribute `attr`.
  std::optional<std::size_t> position(std::size_t attr, std::string_view value) const {
    const auto& d = attributes_.at(attr).domain;
    auto it = std::find(d.begin(), d.end(), value);
    if (it == d.end()) return std::nullopt;
    return static_cast<std::size_t>(it - d.begin());
  }

  bool operator==(const AttributeSchema&) const = default;

private:
  std::vector<Attribute> attributes_;
};

struct Dataset {
  AttributeSchema schema;
  std::vector<std::string> tasks;
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  // Same schema and tasks, no records.
  Dataset like() const { return Dataset{schema, tasks, {}}; }
};

inline std::unordered_map<std::string, std::size_t> index_by_id(const Dataset& d) {
  std::unordered_map<std::string, std::size_t> out;
  out.reserve(d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) out.emplace(d.records[i].id, i);
  return out;
}

enum class PredictionKind { base, derived };

struct Prediction {
  double probability = 0.0;
  int label = 0;
  bool operator==(const Prediction&) const = default;
};

// Per-record predictions for one task. For base sets the label is the
// thresholded probability; derived sets (mitigated labels) carry the score
// that produced them but their labels need not follow the threshold.
struct PredictionSet {
  std::string task;
  PredictionKind kind = PredictionKind::base;
  double threshold = 0.5;
  std::map<std::string, Prediction> entries;

  const Prediction& at(const std::string& id) const {
    auto it = entries.find(id);
    if (it == entries.end()) throw DataError("no prediction for record '" + id + "'");
    return it->second;
  }
};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string record_id;
  std::string rule;
  bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline void check_record(const Record& r, const AttributeSchema& schema,
                         const std::vector<std::string>& tasks, ValidationReport& out) {
  if (r.id.empty()) out.push_back({r.id, "record id is empty"});
  if (r.modalities.empty()) out.push_back({r.id, "no modality present"});
  for (const auto& a : schema.attributes()) {
    auto it = r.sensitive.find(a.name);
    if (it == r.sensitive.end()) {
      out.push_back({r.id, "sensitive attribute '" + a.name + "' missing"});
    } else if (std::find(a.domain.begin(), a.domain.end(), it->second) == a.domain.end()) {
      out.push_back({r.id, "value '" + it->second + "' not in domain of '" + a.name + "'"});
    }
  }
  for (const auto& [name, value] : r.sensitive) {
    if (!schema.find(name)) out.push_back({r.id, "unknown sensitive attribute '" + name + "'"});
  }
  for (const auto& t : tasks) {
    auto it = r.labels.find(t);
    if (it == r.labels.end()) {
      out.push_back({r.id, "label for task '" + t + "' missing"});
    } else if (it->second != 0 && it->second != 1) {
      out.push_back({r.id, "label for task '" + t + "' is not 0 or 1"});
    }
  }
  for (const auto& [task, value] : r.labels) {
    if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) {
      out.push_back({r.id, "label for undeclared task '" + task + "'"});
    }
  }
}

}  // namespace detail

inline ValidationReport validate_record(const Record& r, const AttributeSchema& schema,
                                        const std::vector<std::string>& tasks) {
  ValidationReport out;
  detail::check_record(r, schema, tasks, out);
  return out;
}

inline ValidationReport validate(const Dataset& d) {
  ValidationReport out;
  std::unordered_set<std::string> seen;
  for (const auto& r : d.records) {
    if (!seen.insert(r.id).second) out.push_back({r.id, "duplicate record id '" + r.id + "'"});
    detail::check_record(r, d.schema, d.tasks, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON encoding

inline json scalar_to_json(const Scalar& s) {
  return std::visit([](const auto& v) { return json(v); }, s);
}

inline Scalar scalar_from_json(const json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw DataError("structured values must be numbers, strings or booleans");
}

inline json record_to_json(const Record& r) {
  json mods = json::object();
  const auto& m = r.modalities;
  if (m.structured) {
    json s = json::object();
    for (const auto& [k, v] : *m.structured) s[k] = scalar_to_json(v);
    mods["structured"] = std::move(s);
  }
  if (m.notes) mods["notes"] = *m.notes;
  if (m.events) {
    json ev = json::array();
    for (const auto& e : *m.events) ev.push_back({{"t", e.t}, {"code", e.code}});
    mods["events"] = std::move(ev);
  }
  if (m.lab) {
    json lab = json::array();
    for (const auto& e : *m.lab) lab.push_back({{"t", e.t}, {"test", e.test}, {"value", e.value}});
    mods["lab"] = std::move(lab);
  }
  if (m.xray_report) mods["xray_report"] = *m.xray_report;
  return json{{"id", r.id}, {"modalities", std::move(mods)}, {"sensitive", r.sensitive},
              {"labels", r.labels}};
}

inline Record record_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record must be a JSON object");
  for (const char* key : {"id", "modalities", "sensitive", "labels"}) {
    if (!j.contains(key)) throw DataError(std::string("missing key '") + key + "'");
  }
  Record r;
  if (!j["id"].is_string()) throw DataError("field 'id' must be a string");
  r.id = j["id"].get<std::string>();
  auto fail = [&](const std::string& what) -> DataError {
    return DataError("record '" + r.id + "': " + what);
  };
  const json& mods = j["modalities"];
  if (!mods.is_object()) throw fail("field 'modalities' must be an object");
  for (const auto& [key, value] : mods.items()) {
    Modality m;
    try {
      m = parse_modality(key);
    } catch (const UsageError&) {
      throw fail("field 'modalities." + key + "' is not a known modality");
    }
    try {
      switch (m) {
        case Modality::structured: {
          std::map<std::string, Scalar> s;
          for (const auto& [k, v] : value.items()) s.emplace(k, scalar_from_json(v));
          r.modalities.structured = std::move(s);
          break;
        }
        case Modality::notes: r.modalities.notes = value.get<std::string>(); break;
        case Modality::xray_report: r.modalities.xray_report = value.get<std::string>(); break;
        case Modality::events: {
          std::vector<Event> ev;
          for (const auto& e : value) ev.push_back({e.at("t").get<std::int64_t>(), e.at("code").get<std::string>()});
          r.modalities.events = std::move(ev);
          break;
        }
        case Modality::lab: {
          std::vector<LabEntry> lab;
          for (const auto& e : value) {
            lab.push_back({e.at("t").get<std::int64_t>(), e.at("test").get<std::string>(),
                           e.at("value").get<double>()});
          }
          r.modalities.lab = std::move(lab);
          break;
        }
      }
    } catch (const json::exception& e) {
      throw fail("field 'modalities." + key + "' is malformed (" + e.what() + ")");
    } catch (const DataError& e) {
      throw fail("field 'modalities." + key + "': " + e.what());
    }
  }
  if (!j["sensitive"].is_object()) throw fail("field 'sensitive' must be an object");
  for (const auto& [k, v] : j["sensitive"].items()) {
    if (!v.is_string()) throw fail("field 'sensitive." + k + "' must be a string");
    r.sensitive.emplace(k, v.get<std::string>());
  }
  if (!j["labels"].is_object()) throw fail("field 'labels' must be an object");
  for (const auto& [k, v] : j["labels"].items()) {
    if (!v.is_number_integer()) throw fail("field 'labels." + k + "' must be 0 or 1");
    r.labels.emplace(k, v.get<int>());
  }
  return r;
}

inline json schema_to_json(const AttributeSchema& s) {
  json attrs = json::array();
  for (const auto& a : s.attributes()) attrs.push_back({{"name", a.name}, {"values", a.domain}});
  return json{{"attributes", attrs}};
}

inline AttributeSchema schema_from_json(const json& j) {
  std::vector<Attribute> attrs;
  try {
    for (const auto& a : j.at("attributes")) {
      attrs.push_back({a.at("name").get<std::string>(), a.at("values").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed attribute schema: ") + e.what());
  }
  return AttributeSchema(std::move(attrs));
}

// ---------------------------------------------------------------------------
// JSON-lines

inline void write_jsonl(const Dataset& d, std::ostream& out) {
  for (const auto& r : d.records) out << record_to_json(r).dump() << '\n';
}

inline std::string to_jsonl(const Dataset& d) {
  std::ostringstream os;
  write_jsonl(d, os);
  return os.str();
}

inline Dataset parse_jsonl(std::istream& in, const AttributeSchema& schema,
                           const std::vector<std::string>& tasks) {
  Dataset d{schema, tasks, {}};
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + "parse error: " + e.what());
    }
    Record r;
    try {
      r = record_from_json(j);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    auto violations = validate_record(r, schema, tasks);
    if (!violations.empty()) {
      throw DataError(where + "record '" + r.id + "': " + violations.front().rule);
    }
    if (!seen.insert(r.id).second) throw DataError(where + "duplicate record id '" + r.id + "'");
    d.records.push_back(std::move(r));
  }
  return d;
}

inline Dataset load_jsonl(const std::string& path, const AttributeSchema& schema,
                          const std::vector<std::string>& tasks) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_jsonl(in, schema, tasks);
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

namespace detail {

// Returns false at end of input. Quoted fields may span lines.
inline bool read_csv_row(std::istream& in, std::vector<std::string>& row) {
  row.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      break;
    } else {
      field += c;
    }
  }
  if (quoted) throw DataError("unterminated quoted CSV field");
  if (any) row.push_back(std::move(field));
  return any;
}

}  // namespace detail

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// Structured-only ingestion. Required columns: id, one per sensitive
// attribute, one per task. Every other column becomes a structured field whose
// value is the cell text.
inline Dataset parse_csv(std::istream& in, const AttributeSchema& schema,
                         const std::vector<std::string>& tasks) {
  std::vector<std::string> header;
  if (!detail::read_csv_row(in, header)) throw DataError("CSV input has no header row");
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!column.emplace(header[i], i).second) throw DataError("duplicate CSV column '" + header[i] + "'");
  }
  std::vector<std::string> required{"id"};
  for (const auto& a : schema.attributes()) required.push_back(a.name);
  for (const auto& t : tasks) required.push_back(t);
  for (const auto& name : required) {
    if (!column.contains(name)) throw DataError("missing required CSV column '" + name + "'");
  }
  std::set<std::string> reserved(required.begin(), required.end());

  Dataset d{schema, tasks, {}};
  std::unordered_set<std::string> seen;
  std::vector<std::string> row;
  std::size_t lineno = 1;
  while (detail::read_csv_row(in, row)) {
    ++lineno;
    if (row.size() == 1 && row[0].empty()) continue;
    const std::string where = "row " + std::to_string(lineno) + ": ";
    if (row.size() != header.size()) {
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(row.size()));
    }
    Record r;
    r.id = row[column["id"]];
    for (const auto& a : schema.attributes()) {
      const std::string& v = row[column[a.name]];
      if (std::find(a.domain.begin(), a.domain.end(), v) == a.domain.end()) {
        throw DataError(where + "record '" + r.id + "': unknown value '" + v + "' for attribute '" +
                        a.name + "'");
      }
      r.sensitive.emplace(a.name, v);
    }
    for (const auto& t : tasks) {
      const std::string& v = row[column[t]];
      if (v != "0" && v != "1") {
        throw DataError(where + "record '" + r.id + "': label '" + v + "' for task '" + t +
                        "' is not 0 or 1");
      }
      r.labels.emplace(t, v == "1" ? 1 : 0);
    }
    std::map<std::string, Scalar> structured;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (!reserved.contains(header[i])) structured.emplace(header[i], row[i]);
    }
    r.modalities.structured = std::move(structured);
    if (!seen.insert(r.id).second) throw DataError(where + "duplicate record id '" + r.id + "'");
    d.records.push_back(std::move(r));
  }
  return d;
}

inline Dataset load_csv(const std::string& path, const AttributeSchema& schema,
                        const std::vector<std::string>& tasks) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_csv(in, schema, tasks);
}

// ---------------------------------------------------------------------------
// Splitting

// Seeded permutation; the first floor(fraction * n) permuted records form the
// training part. Both parts keep the input order. Splits are by record (stay),
// so stays of one patient can land on both sides.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& d, double train_fraction,
                                                    std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw UsageError("train fraction must lie in (0, 1)");
  }
  if (d.empty()) throw DataError("cannot split an empty dataset");
  const std::size_t n = d.size();
  // The epsilon absorbs products such as 0.29 * 100 = 28.999999999999996.
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(n) * (1.0 + 1e-12)));
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(perm);
  std::vector<char> in_train(n, 0);
  for (std::size_t i = 0; i < n_train; ++i) in_train[perm[i]] = 1;
  Dataset train = d.like();
  Dataset test = d.like();
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? train : test).records.push_back(d.records[i]);
  return {std::move(train), std::move(test)};
}

// Records whose index satisfies `keep`, order preserved.
template <typename Pred>
Dataset filter_records(const Dataset& d, Pred&& keep) {
  Dataset out = d.like();
  for (const auto& r : d.records) {
    if (keep(r)) out.records.push_back(r);
  }
  return out;
}

}  // namespace fairlens
