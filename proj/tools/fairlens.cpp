#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fairlens/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairlens: multimodal fairness audit and bias mitigation"};
  app.set_version_flag("--version", std::string(fairlens::kVersion));
  app.require_subcommand(1, 1);

  std::string config_path, out, dataset, model, mitigator = "sdae", grouping = "both";
  std::uint64_t seed = 0;

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const fairlens::RunOptions&, std::ostream&);
  };
  const Command commands[] = {
      {"synth", "generate a synthetic dataset from a preset or synth config", fairlens::cmd_synth},
      {"train", "train the base classifier and write test metrics", fairlens::cmd_train},
      {"ablate", "train on modality subsets and tabulate metrics", fairlens::cmd_ablate},
      {"audit", "per-group DP/TPR and worst-case parity", fairlens::cmd_audit},
      {"mitigate", "apply roc or sdae and compare against the base model", fairlens::cmd_mitigate},
      {"report", "aggregate the tables of a run directory", fairlens::cmd_report},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "seed; overrides the config");
    sub->add_option("--out", out, "output directory")->required();
    if (std::string_view(c.name) != "synth" && std::string_view(c.name) != "report") {
      sub->add_option("--dataset", dataset, "dataset (.jsonl or .csv)")->required();
    }
    if (std::string_view(c.name) == "audit" || std::string_view(c.name) == "mitigate") {
      sub->add_option("--model", model, "model.json written by train")->required();
      sub->add_option("--grouping", grouping, "marginal, intersection or both")
          ->check(CLI::IsMember({"marginal", "intersection", "both"}));
    }
    if (std::string_view(c.name) == "mitigate") {
      sub->add_option("--mitigator", mitigator, "roc or sdae")->check(CLI::IsMember({"roc", "sdae"}));
    }
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (const auto& [sub, cmd] : subs) {
      if (!sub->parsed()) continue;
      fairlens::RunOptions o;
      if (!config_path.empty()) o.config = fairlens::load_json_file(config_path);
      if (!o.config.is_object()) throw fairlens::UsageError("config must be a JSON object");
      if (sub->count("--seed") > 0) o.seed = seed;
      o.out = out;
      o.dataset = dataset;
      o.model = model;
      o.mitigator = fairlens::parse_mitigator_choice(mitigator);
      o.grouping = fairlens::parse_grouping_choice(grouping);
      cmd->run(o, std::cerr);
    }
  } catch (const fairlens::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const fairlens::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}
