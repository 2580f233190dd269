#pragma once

// Command implementations behind the `fairlens` tool. Each command reads a
// JSON run config plus explicit paths and writes a deterministic set of
// artifacts into an output directory.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fairlens/classifier.hpp"
#include "fairlens/common.hpp"
#include "fairlens/data_model.hpp"
#include "fairlens/metrics.hpp"
#include "fairlens/mitigation.hpp"
#include "fairlens/subgroups.hpp"
#include "fairlens/synth.hpp"
#include "fairlens/unify.hpp"

namespace fairlens {

namespace fs = std::filesystem;

enum class GroupingChoice { marginal, intersection, both };
enum class MitigatorChoice { roc, sdae };

inline GroupingChoice parse_grouping_choice(std::string_view s) {
  if (s == "marginal") return GroupingChoice::marginal;
  if (s == "intersection") return GroupingChoice::intersection;
  if (s == "both") return GroupingChoice::both;
  throw UsageError("grouping must be marginal, intersection or both");
}

inline MitigatorChoice parse_mitigator_choice(std::string_view s) {
  if (s == "roc") return MitigatorChoice::roc;
  if (s == "sdae") return MitigatorChoice::sdae;
  throw UsageError("mitigator must be roc or sdae");
}

struct RunOptions {
  json config = json::object();
  std::optional<std::uint64_t> seed;  // overrides config "seed"
  fs::path out;
  fs::path dataset;
  fs::path model;
  MitigatorChoice mitigator = MitigatorChoice::sdae;
  GroupingChoice grouping = GroupingChoice::both;
};

inline json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("'" + path.filename().string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Provenance

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version{kVersion};

  json to_json() const { return json{{"tool", "fairlens"}, {"version", version}, {"config_hash", config_hash}, {"seed", seed}}; }
  std::string csv_line() const { return "# fairlens " + version + " config=" + config_hash + " seed=" + std::to_string(seed) + "\n"; }
  std::string markdown_line() const {
    return "_fairlens " + version + ", config " + config_hash + ", seed " + std::to_string(seed) + "_\n";
  }
};

inline std::uint64_t run_seed(const RunOptions& o) {
  if (o.seed) return *o.seed;
  return o.config.value("seed", std::uint64_t{0});
}

// The hash covers the config with the effective seed folded in.
inline Provenance provenance(const RunOptions& o) {
  json c = o.config;
  c["seed"] = run_seed(o);
  return {hex64(fnv1a64(c.dump())), run_seed(o)};
}

// ---------------------------------------------------------------------------
// Dataset and model loading

// "<stem>.meta.json" next to the dataset file.
inline fs::path sidecar_path(const fs::path& dataset) {
  fs::path p = dataset;
  p.replace_extension(".meta.json");
  return p;
}

inline Dataset load_dataset(const RunOptions& o) {
  if (o.dataset.empty()) throw UsageError("--dataset is required");
  if (!fs::exists(o.dataset)) throw UsageError("dataset '" + o.dataset.string() + "' does not exist");
  json meta = json::object();
  if (fs::exists(sidecar_path(o.dataset))) meta = load_json_file(sidecar_path(o.dataset));
  const json& schema_src = o.config.contains("schema") ? o.config : meta;
  if (!schema_src.contains("schema")) throw UsageError("no schema: give one in the config or a .meta.json sidecar");
  const AttributeSchema schema = schema_from_json(schema_src["schema"]);
  std::vector<std::string> tasks;
  if (meta.contains("tasks")) tasks = meta["tasks"].get<std::vector<std::string>>();
  if (o.config.contains("dataset_tasks")) tasks = o.config["dataset_tasks"].get<std::vector<std::string>>();
  if (tasks.empty()) throw UsageError("no task list: give dataset_tasks in the config or a .meta.json sidecar");
  if (o.dataset.extension() == ".csv") return load_csv(o.dataset.string(), schema, tasks);
  return load_jsonl(o.dataset.string(), schema, tasks);
}

inline std::vector<std::string> run_tasks(const RunOptions& o, const Dataset& d) {
  if (!o.config.contains("tasks")) return d.tasks;
  auto tasks = o.config["tasks"].get<std::vector<std::string>>();
  if (tasks.empty()) throw UsageError("task list must not be empty");
  for (const auto& t : tasks) {
    if (std::find(d.tasks.begin(), d.tasks.end(), t) == d.tasks.end()) {
      throw UsageError("dataset has no task '" + t + "'");
    }
  }
  return tasks;
}

inline double run_train_fraction(const RunOptions& o) { return o.config.value("train_fraction", 0.8); }

inline EmbedConfig run_embed(const RunOptions& o) {
  EmbedConfig e = embed_config_from_json(o.config.value("embed", json::object()));
  e.seed = run_seed(o);
  if (o.config.contains("modalities")) {
    e.modalities.clear();
    for (const auto& m : o.config["modalities"]) e.modalities.insert(parse_modality(m.get<std::string>()));
    if (e.modalities.empty()) throw UsageError("modality subset must not be empty");
  }
  return e;
}

inline TrainHyper run_hyper(const RunOptions& o) {
  TrainHyper h = hyper_from_json(o.config.value("hyper", json::object()));
  h.seed = run_seed(o);
  return h;
}

struct LoadedModel {
  MultitaskModel model;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
};

inline LoadedModel load_model(const RunOptions& o) {
  if (o.model.empty()) throw UsageError("--model is required");
  if (!fs::exists(o.model)) throw UsageError("model '" + o.model.string() + "' does not exist");
  const json j = load_json_file(o.model);
  LoadedModel m{model_from_json(j)};
  try {
    m.train_fraction = j.at("split").at("train_fraction").get<double>();
    m.split_seed = j.at("split").at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("model has no split record: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// synth

inline SynthConfig run_synth_config(const RunOptions& o) {
  SynthConfig c;
  if (o.config.contains("preset")) {
    c = preset_benchmark(o.config["preset"].get<std::string>());
  } else if (o.config.contains("synth")) {
    c = synth_config_from_json(o.config["synth"]);
  } else {
    throw UsageError("synth needs a \"preset\" or a \"synth\" block in the config");
  }
  if (o.config.contains("n")) c.n = o.config["n"].get<std::size_t>();
  c.seed = run_seed(o);
  c.check();
  return c;
}

inline void cmd_synth(const RunOptions& o, std::ostream& log) {
  const SynthConfig c = run_synth_config(o);
  const Dataset d = generate(c);
  const auto prov = provenance(o);
  write_text(o.out / "dataset.jsonl", to_jsonl(d));
  write_json(o.out / "dataset.meta.json", json{{"schema", schema_to_json(d.schema)},
                                                {"tasks", d.tasks},
                                                {"synth", synth_config_to_json(c)},
                                                {"provenance", prov.to_json()}});
  std::ostringstream counts;
  counts << prov.csv_line();
  const SubgroupIndex index(d.schema);
  write_group_counts_csv(group_counts(d, index), counts);
  write_text(o.out / "group_counts.csv", counts.str());
  log << "wrote " << d.size() << " records\n";
}

// ---------------------------------------------------------------------------
// train

inline std::string metric_text(const Rate& r) { return r ? format_rate(*r) : "NA"; }

inline json task_metrics_json(const TaskMetrics& t) {
  return json{{"f1", t.f1}, {"macro_f1", t.macro_f1}, {"auroc", rate_json(t.auroc)}, {"auprc", rate_json(t.auprc)}};
}

inline void cmd_train(const RunOptions& o, std::ostream& log) {
  const Dataset d = load_dataset(o);
  const auto tasks = run_tasks(o, d);
  const auto prov = provenance(o);
  const double frac = run_train_fraction(o);
  auto [train, test] = split_train_test(d, frac, run_seed(o));
  train.tasks = tasks;
  test.tasks = tasks;
  const EmbedConfig ec = run_embed(o);
  const TrainHyper h = run_hyper(o);
  const auto model = train_multitask(embed_dataset(train, ec), train, h, ec);
  json artifact = model_to_json(model);
  artifact["split"] = {{"train_fraction", frac}, {"seed", run_seed(o)}};
  artifact["provenance"] = prov.to_json();
  write_json(o.out / "model.json", artifact);

  json metrics = json::object();
  for (const auto& [task, t] : evaluate(model, test)) {
    metrics[task] = task_metrics_json(t);
    log << task << ": f1 " << format_rate(t.f1) << " auroc " << metric_text(t.auroc) << "\n";
  }
  write_json(o.out / "metrics.json", json{{"provenance", prov.to_json()},
                                          {"n_train", train.size()},
                                          {"n_test", test.size()},
                                          {"tasks", metrics}});
}

// ---------------------------------------------------------------------------
// ablate

struct AblationRow {
  std::string subset;
  std::map<std::string, TaskMetrics> metrics;
};

inline std::vector<ModalitySet> run_subsets(const RunOptions& o) {
  std::vector<ModalitySet> out;
  if (!o.config.contains("subsets")) {
    for (Modality m : kModalityOrder) out.push_back({m});
    out.push_back(all_modalities());
    return out;
  }
  for (const auto& s : o.config["subsets"]) {
    ModalitySet set;
    for (const auto& name : s) {
      const auto n = name.get<std::string>();
      if (n == "all") {
        set = all_modalities();
      } else {
        set.insert(parse_modality(n));
      }
    }
    if (set.empty()) throw UsageError("modality subsets must not be empty");
    out.push_back(set);
  }
  if (out.empty()) throw UsageError("no modality subsets given");
  return out;
}

inline std::vector<AblationRow> ablate(const Dataset& d, const std::vector<std::string>& tasks,
                                      const std::vector<ModalitySet>& subsets, double train_fraction,
                                      const EmbedConfig& base_embed, const TrainHyper& hyper, std::uint64_t split_seed) {
  auto [train, test] = split_train_test(d, train_fraction, split_seed);
  train.tasks = tasks;
  test.tasks = tasks;
  std::vector<AblationRow> rows;
  for (const auto& subset : subsets) {
    EmbedConfig ec = base_embed;
    ec.modalities = subset;
    const auto model = train_multitask(embed_dataset(train, ec), train, hyper, ec);
    rows.push_back({modality_set_label(subset), evaluate(model, test)});
  }
  return rows;
}

inline void cmd_ablate(const RunOptions& o, std::ostream& log) {
  const Dataset d = load_dataset(o);
  const auto tasks = run_tasks(o, d);
  const auto prov = provenance(o);
  const auto rows = ablate(d, tasks, run_subsets(o), run_train_fraction(o), run_embed(o), run_hyper(o), run_seed(o));

  std::ostringstream csv, md;
  csv << prov.csv_line() << "subset";
  md << "## Modality ablation\n\n" << prov.markdown_line() << "\n| Modalities |";
  for (const auto& t : tasks) {
    csv << "," << t << "_f1," << t << "_auroc," << t << "_auprc";
    md << " " << t << " F1 | " << t << " AUROC | " << t << " AUPRC |";
  }
  csv << "\n";
  md << "\n|---|";
  for (std::size_t i = 0; i < tasks.size(); ++i) md << "---|---|---|";
  md << "\n";
  for (const auto& row : rows) {
    csv << csv_escape(row.subset);
    md << "| " << row.subset << " |";
    for (const auto& t : tasks) {
      const auto& m = row.metrics.at(t);
      csv << "," << format_rate(m.f1) << "," << metric_text(m.auroc) << "," << metric_text(m.auprc);
      md << " " << format_rate(m.f1) << " | " << metric_text(m.auroc) << " | " << metric_text(m.auprc) << " |";
    }
    csv << "\n";
    md << "\n";
  }
  write_text(o.out / "ablation.csv", csv.str());
  write_text(o.out / "ablation.md", md.str());
  log << "ablation: " << rows.size() << " subsets\n";
}

// ---------------------------------------------------------------------------
// audit

inline std::vector<Grouping> groupings_for(const AttributeSchema& schema, GroupingChoice choice) {
  std::vector<Grouping> out;
  if (choice != GroupingChoice::intersection) {
    for (const auto& a : schema.attributes()) out.push_back(Grouping::marginal(a.name));
  }
  if (choice != GroupingChoice::marginal) out.push_back(Grouping::intersection());
  return out;
}

inline std::string grouping_slug(const Grouping& g) {
  return g.is_intersection() ? std::string("intersection") : g.attribute();
}

struct TestContext {
  Dataset test;
  EmbeddingMatrix x;
};

inline TestContext test_split(const Dataset& d, const LoadedModel& m) {
  auto [train, test] = split_train_test(d, m.train_fraction, m.split_seed);
  EmbeddingMatrix x = embed_dataset(test, m.model.embed);
  return {std::move(test), std::move(x)};
}

inline void cmd_audit(const RunOptions& o, std::ostream& log) {
  const Dataset d = load_dataset(o);
  const auto m = load_model(o);
  const auto prov = provenance(o);
  const SubgroupIndex index(d.schema);
  const auto ctx = test_split(d, m);

  for (const auto& c : small_subgroups(group_counts(ctx.test, index))) {
    log << "warning: subgroup " << index[c].label() << " has fewer than 30 test records\n";
  }
  json summary{{"provenance", prov.to_json()}, {"n_test", ctx.test.size()}, {"tasks", json::object()}};
  std::ostringstream md;
  md << "## Fairness audit\n\n" << prov.markdown_line();
  for (const auto& task : m.model.tasks) {
    const auto preds = predict_set(m.model.head(task), ctx.test, ctx.x, task);
    json blocks = json::array();
    for (const auto& g : groupings_for(d.schema, o.grouping)) {
      const auto rep = fairness_report(ctx.test, preds, index, g);
      std::ostringstream csv;
      csv << prov.csv_line();
      write_report_csv(rep, csv);
      write_text(o.out / ("audit_" + task + "_" + grouping_slug(g) + ".csv"), csv.str());
      md << "\n### " << task << ", " << g.label() << "\n\n";
      write_report_markdown(rep, md);
      blocks.push_back(report_to_json(rep));
      log << task << " " << grouping_slug(g) << ": WP(DP) " << rate_text(rep.wp_dp) << "\n";
    }
    summary["tasks"][task] = blocks;
  }
  write_json(o.out / "audit.json", summary);
  write_text(o.out / "audit.md", md.str());
}

// ---------------------------------------------------------------------------
// mitigate

inline std::string prediction_jsonl(const PredictionSet& p) {
  std::string out;
  for (const auto& [id, e] : p.entries) {
    out += json{{"id", id}, {"probability", e.probability}, {"label", e.label}}.dump() + "\n";
  }
  return out;
}

inline std::string policy_grouping(const RunOptions& o, const AttributeSchema& schema) {
  const json roc = o.config.value("roc", json::object());
  return roc.value("grouping", schema.attributes().front().name);
}

struct MitigationResult {
  FairnessReport base;
  FairnessReport derived;
  std::vector<GroupDelta> deltas;
  Verdict verdict = Verdict::unfair;
  double f1_before = 0.0;
  double f1_after = 0.0;
  json details = json::object();
  PredictionSet derived_preds;
};

inline MitigationResult mitigate_roc(const RunOptions& o, const Dataset& d, const LoadedModel& m,
                                     const SubgroupIndex& index, const std::string& task, const TestContext& ctx,
                                     const PredictionSet& base_preds) {
  const json cfg = o.config.value("roc", json::object());
  auto [train, test] = split_train_test(d, m.train_fraction, m.split_seed);
  auto [fit, val] = split_train_test(train, 1.0 - cfg.value("validation_fraction", 0.2), derive_seed(m.split_seed, 101));
  const auto val_preds = predict_set(m.model.head(task), val, embed_dataset(val, m.model.embed), task);

  const std::string by = policy_grouping(o, d.schema);
  const Grouping g = by == "intersection" ? Grouping::intersection() : Grouping::marginal(by);
  if (!g.is_intersection() && !d.schema.find(by)) throw UsageError("unknown attribute '" + by + "' for roc grouping");
  const auto deprived = deprived_subgroups(index, fairness_report(val, val_preds, index, g));
  double theta = 0.0;
  if (cfg.contains("theta") && !cfg["theta"].is_null()) {
    theta = cfg["theta"].get<double>();
  } else {
    const auto grid = default_theta_grid();
    theta = tune_roc_theta(val_preds, val, index, deprived, grid);
  }
  const auto out = roc_mitigate(base_preds, ctx.test, index, RocPolicy{theta, deprived});

  MitigationResult r;
  r.derived_preds = out.derived;
  json dep = json::array();
  for (std::size_t s : deprived) dep.push_back(index[s].label());
  r.details = json{{"theta", theta},
                   {"policy_grouping", by},
                   {"deprived", dep},
                   {"critical_region", out.critical},
                   {"flipped", out.flipped}};
  return r;
}

inline MitigationResult mitigate_sdae(const RunOptions& o, const Dataset& d, const LoadedModel& m,
                                      const SubgroupIndex& index, const std::string& task, const TestContext& ctx) {
  const json cfg = o.config.value("sdae", json::object());
  SdaeOptions opts;
  opts.include_base_vote = cfg.value("include_base_vote", opts.include_base_vote);
  opts.tau = cfg.value("tau", opts.tau);
  opts.threads = cfg.value("threads", opts.threads);
  auto [train, test] = split_train_test(d, m.train_fraction, m.split_seed);
  const auto& head = m.model.head(task);
  const auto ens = train_sdae(train, embed_dataset(train, m.model.embed), index, task, head.hyper, m.model.embed, opts,
                              head);
  save_ensemble(ens, o.out / ("sdae_" + task));
  MitigationResult r;
  r.derived_preds = sdae_predict_set(ens, ctx.test, ctx.x);
  std::size_t consensus = 0;
  for (std::size_t i = 0; i < ctx.test.size(); ++i) {
    consensus += sdae_vote(ens, index.membership(ctx.test.records[i]), ctx.x.row(i)).consensus ? 1 : 0;
  }
  r.details = json{{"pairs", ens.pairs.size()},
                   {"include_base_vote", ens.include_base_vote},
                   {"tau", opts.tau},
                   {"consensus", consensus},
                   {"disagreement", ctx.test.size() - consensus}};
  return r;
}

inline json plot_data(const MitigationResult& r) {
  json groups = json::array();
  for (std::size_t i = 0; i < r.base.rates.size(); ++i) {
    groups.push_back(json{{"group", r.base.rates[i].label},
                          {"base_dp", rate_json(r.base.rates[i].dp)},
                          {"derived_dp", rate_json(r.derived.rates[i].dp)},
                          {"base_tpr", rate_json(r.base.rates[i].tpr)},
                          {"derived_tpr", rate_json(r.derived.rates[i].tpr)}});
  }
  return json{{"grouping", r.base.grouping.label()},
              {"bars", groups},
              {"wp", {{"base_dp", rate_json(r.base.wp_dp)},
                      {"derived_dp", rate_json(r.derived.wp_dp)},
                      {"base_tpr", rate_json(r.base.wp_tpr)},
                      {"derived_tpr", rate_json(r.derived.wp_tpr)}}}};
}

inline void cmd_mitigate(const RunOptions& o, std::ostream& log) {
  const Dataset d = load_dataset(o);
  const auto m = load_model(o);
  const auto prov = provenance(o);
  const SubgroupIndex index(d.schema);
  const auto ctx = test_split(d, m);
  const std::string name = o.mitigator == MitigatorChoice::roc ? "roc" : "sdae";
  const std::string task = o.config.value("task", m.model.tasks.front());
  const auto base_preds = predict_set(m.model.head(task), ctx.test, ctx.x, task);

  MitigationResult r = o.mitigator == MitigatorChoice::roc ? mitigate_roc(o, d, m, index, task, ctx, base_preds)
                                                           : mitigate_sdae(o, d, m, index, task, ctx);
  r.base = fairness_report(ctx.test, base_preds, index, Grouping::intersection());
  r.derived = with_baseline(fairness_report(ctx.test, r.derived_preds, index, Grouping::intersection()), r.base);
  r.deltas = group_delta(r.base, r.derived);
  r.verdict = mitigation_check(r.base, r.derived);
  r.f1_before = f1(base_preds, ctx.test);
  r.f1_after = f1(r.derived_preds, ctx.test);
  const auto cb = scored_columns(base_preds, ctx.test);
  const auto cd = scored_columns(r.derived_preds, ctx.test);

  const std::string stem = "mitigate_" + name + "_" + task;
  std::ostringstream csv;
  csv << prov.csv_line() << "group,base_dp,derived_dp,dp_change,tpr_change,leveling_down\n";
  for (std::size_t i = 0; i < r.deltas.size(); ++i) {
    const auto& dl = r.deltas[i];
    csv << csv_escape(dl.label) << "," << rate_text(r.base.rates[i].dp) << "," << rate_text(r.derived.rates[i].dp)
        << "," << signed_rate_text(dl.dp_change) << "," << signed_rate_text(dl.tpr_change) << ","
        << (dl.leveling_down ? 1 : 0) << "\n";
  }
  write_text(o.out / (stem + "_delta.csv"), csv.str());

  std::ostringstream md;
  md << "## Mitigation: " << name << " (" << task << ")\n\n" << prov.markdown_line() << "\n";
  md << "Verdict: " << verdict_name(r.verdict) << "\n\n";
  md << "F1 " << format_rate(r.f1_before) << " -> " << format_rate(r.f1_after) << "\n\n";
  if (r.details.contains("critical_region")) {
    md << "Critical region: " << r.details["critical_region"].get<std::size_t>() << " records, "
       << r.details["flipped"].get<std::size_t>() << " flipped (theta " << format_number(r.details["theta"].get<double>())
       << ")\n\n";
  }
  md << "| Group | Base DP | Derived DP | DP change | Leveling down |\n|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < r.deltas.size(); ++i) {
    const auto& dl = r.deltas[i];
    md << "| " << dl.label << " | " << rate_text(r.base.rates[i].dp) << " | " << rate_text(r.derived.rates[i].dp)
       << " | " << signed_rate_text(dl.dp_change) << " | " << (dl.leveling_down ? "yes" : "") << " |\n";
  }
  md << "| WP | " << rate_text(r.base.wp_dp) << " | " << rate_text(r.derived.wp_dp) << " | | |\n";
  write_text(o.out / (stem + ".md"), md.str());

  json summary{{"provenance", prov.to_json()},
               {"mitigator", name},
               {"task", task},
               {"verdict", verdict_name(r.verdict)},
               {"f1_before", r.f1_before},
               {"f1_after", r.f1_after},
               {"macro_f1_before", macro_f1_score(cb.predicted, cb.truth)},
               {"macro_f1_after", macro_f1_score(cd.predicted, cd.truth)},
               {"base", report_to_json(r.base)},
               {"derived", report_to_json(r.derived)},
               {"details", r.details}};
  write_json(o.out / (stem + ".json"), summary);
  write_json(o.out / ("plot_" + name + "_" + task + ".json"), json{{"provenance", prov.to_json()}, {"plot", plot_data(r)}});
  write_text(o.out / ("derived_" + name + "_" + task + ".jsonl"), prediction_jsonl(r.derived_preds));
  log << name << ": WP(DP) " << rate_text(r.base.wp_dp) << " -> " << rate_text(r.derived.wp_dp) << ", "
      << verdict_name(r.verdict) << "\n";
}

// ---------------------------------------------------------------------------
// report

inline std::vector<fs::path> sorted_matches(const fs::path& dir, const std::string& prefix, const std::string& suffix) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with(prefix) && name.ends_with(suffix)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void cmd_report(const RunOptions& o, std::ostream& log) {
  const fs::path dir = o.out;
  if (!fs::is_directory(dir)) throw UsageError("run directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> parts;
  for (const auto& p : sorted_matches(dir, "ablation", ".md")) parts.push_back(p);
  for (const auto& p : sorted_matches(dir, "audit", ".md")) parts.push_back(p);
  for (const auto& p : sorted_matches(dir, "mitigate_", ".md")) parts.push_back(p);
  if (parts.empty()) throw DataError("no ablation, audit or mitigation tables in '" + dir.string() + "'");
  std::ostringstream md;
  md << "# fairlens run report\n";
  for (const auto& p : parts) md << "\n" << read_text(p);
  const auto prov = provenance(o);
  md << "\n---\n" << prov.markdown_line();
  write_text(dir / "report.md", md.str());
  log << "report: " << parts.size() << " sections\n";
}

}  // namespace fairlens
