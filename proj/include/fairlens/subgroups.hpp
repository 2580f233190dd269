#pragma once

// Intersectional subgroups: the Cartesian product of the attribute domains,
// record membership, and the pairwise splits the ensemble trains on.

#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "fairlens/data_model.hpp"

namespace fairlens {

struct Subgroup {
  std::size_t id = 0;
  std::vector<std::pair<std::string, std::string>> values;  // one entry per attribute, schema order

  // "female/white"
  std::string label() const {
    std::string out;
    for (const auto& [attr, value] : values) {
      if (!out.empty()) out += '/';
      out += value;
    }
    return out;
  }

  const std::string& value_of(std::string_view attribute) const {
    for (const auto& [attr, value] : values) {
      if (attr == attribute) return value;
    }
    throw UsageError("subgroup has no attribute '" + std::string(attribute) + "'");
  }
};

struct SubgroupPair {
  std::size_t a = 0;
  std::size_t b = 0;

  bool contains(std::size_t g) const { return a == g || b == g; }
  auto operator<=>(const SubgroupPair&) const = default;
};

// Subgroups in lexicographic order of domain positions, first attribute most
// significant, so ids are stable for a given schema.
class SubgroupIndex {
public:
  SubgroupIndex() = default;

  explicit SubgroupIndex(AttributeSchema schema) : schema_(std::move(schema)) {
    if (schema_.empty()) throw UsageError("schema has no attributes");
    std::size_t total = 1;
    for (const auto& a : schema_.attributes()) total *= a.domain.size();
    subgroups_.reserve(total);
    std::vector<std::size_t> digits(schema_.size(), 0);
    for (std::size_t id = 0; id < total; ++id) {
      Subgroup g;
      g.id = id;
      for (std::size_t k = 0; k < schema_.size(); ++k) {
        const auto& a = schema_.attributes()[k];
        g.values.emplace_back(a.name, a.domain[digits[k]]);
      }
      subgroups_.push_back(std::move(g));
      for (std::size_t k = schema_.size(); k-- > 0;) {
        if (++digits[k] < schema_.attributes()[k].domain.size()) break;
        digits[k] = 0;
      }
    }
  }

  const AttributeSchema& schema() const { return schema_; }
  const std::vector<Subgroup>& subgroups() const { return subgroups_; }
  std::size_t size() const { return subgroups_.size(); }
  const Subgroup& operator[](std::size_t id) const { return subgroups_.at(id); }

  // Mixed-radix position of the record's sensitive values.
  std::size_t membership(const Record& r) const {
    std::size_t id = 0;
    for (std::size_t k = 0; k < schema_.size(); ++k) {
      const auto& a = schema_.attributes()[k];
      auto it = r.sensitive.find(a.name);
      if (it == r.sensitive.end()) {
        throw DataError("record '" + r.id + "' has no value for attribute '" + a.name + "'");
      }
      auto pos = schema_.position(k, it->second);
      if (!pos) {
        throw DataError("record '" + r.id + "': unknown value '" + it->second +
                        "' for attribute '" + a.name + "'");
      }
      id = id * a.domain.size() + *pos;
    }
    return id;
  }

  std::optional<std::size_t> find_label(std::string_view label) const {
    for (const auto& g : subgroups_) {
      if (g.label() == label) return g.id;
    }
    return std::nullopt;
  }

  std::string pair_label(const SubgroupPair& p) const {
    return subgroups_.at(p.a).label() + "|" + subgroups_.at(p.b).label();
  }

private:
  AttributeSchema schema_;
  std::vector<Subgroup> subgroups_;
};

inline SubgroupIndex enumerate_subgroups(const AttributeSchema& schema) { return SubgroupIndex(schema); }

inline std::size_t membership(const Record& r, const SubgroupIndex& index) { return index.membership(r); }

// All unordered pairs (a < b), ordered by a then b.
inline std::vector<SubgroupPair> pair_splits(const SubgroupIndex& index) {
  if (index.size() < 2) throw UsageError("pairwise splits need at least two subgroups");
  std::vector<SubgroupPair> out;
  out.reserve(index.size() * (index.size() - 1) / 2);
  for (std::size_t a = 0; a < index.size(); ++a) {
    for (std::size_t b = a + 1; b < index.size(); ++b) out.push_back({a, b});
  }
  return out;
}

// Records belonging to either subgroup of the pair, order preserved. May be
// empty or single-class.
inline Dataset partition(const Dataset& d, const SubgroupPair& pair, const SubgroupIndex& index) {
  if (pair.a >= pair.b || pair.b >= index.size()) throw UsageError("invalid subgroup pair");
  return filter_records(d, [&](const Record& r) { return pair.contains(index.membership(r)); });
}

struct GroupCount {
  std::size_t subgroup = 0;
  std::string label;
  std::size_t count = 0;
  double fraction = 0.0;  // 0 for every group when the dataset is empty
};

inline std::vector<GroupCount> group_counts(const Dataset& d, const SubgroupIndex& index) {
  std::vector<GroupCount> out;
  for (const auto& g : index.subgroups()) out.push_back({g.id, g.label(), 0, 0.0});
  for (const auto& r : d.records) ++out[index.membership(r)].count;
  if (!d.empty()) {
    for (auto& c : out) c.fraction = static_cast<double>(c.count) / static_cast<double>(d.size());
  }
  return out;
}

// Subgroups with fewer records than `threshold`. Callers warn; nothing is dropped.
inline std::vector<std::size_t> small_subgroups(const std::vector<GroupCount>& counts,
                                                std::size_t threshold = 30) {
  std::vector<std::size_t> out;
  for (const auto& c : counts) {
    if (c.count < threshold) out.push_back(c.subgroup);
  }
  return out;
}

inline void write_group_counts_csv(const std::vector<GroupCount>& counts, std::ostream& out) {
  out << "subgroup,count,fraction\n";
  for (const auto& c : counts) {
    out << csv_escape(c.label) << ',' << c.count << ',' << format_number(c.fraction) << '\n';
  }
}

}  // namespace fairlens
