// convgen: generation pipeline and evaluation harness for task-oriented
// dialogue data.
//
// Subcommands: gen-intents, plan, generate, validate, stats, eval.
// Exit codes: 0 ok, 1 validation failures present, 2 fatal error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "convgen/config.hpp"
#include "convgen/dataset.hpp"
#include "convgen/eval.hpp"
#include "convgen/pipeline.hpp"
#include "convgen/planner.hpp"
#include "convgen/schema.hpp"
#include "convgen/validation.hpp"

namespace {

namespace fs = std::filesystem;
using namespace convgen;

struct GlobalFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> n;
    std::optional<std::string> provider;
    std::optional<std::string> out;
};

RunConfig resolve_config(const GlobalFlags& flags) {
    RunConfig config;
    if (!flags.config_path.empty()) config = load_config(flags.config_path);
    if (flags.seed) config.seed = *flags.seed;
    if (flags.n) config.n_conversations = *flags.n;
    if (flags.provider) config.provider.kind = *flags.provider;
    if (flags.out) config.out_dir = *flags.out;
    validate_config(config);
    return config;
}

void add_global_flags(CLI::App* cmd, GlobalFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Run configuration (JSON)");
    cmd->add_option("--seed", flags.seed, "Root seed (overrides config)");
    cmd->add_option("--n", flags.n, "Conversation count (overrides config)");
    cmd->add_option("--provider", flags.provider, "Provider kind: scripted or remote")
        ->check(CLI::IsMember({"scripted", "remote", "simulated"}));
    cmd->add_option("--out", flags.out, "Output directory (overrides config)");
}

int cmd_gen_intents(const GlobalFlags& flags) {
    RunConfig config = resolve_config(flags);
    if (config.descriptions_file.empty())
        throw ConfigError("gen-intents needs paths.descriptions_file");
    auto provider = make_provider(config.provider);
    auto descriptions = pipeline::read_description_file(config.descriptions_file);
    std::vector<schema::SlotValuePool> pools;
    auto catalog =
        pipeline::generate_catalog(descriptions, config.intent_denylist, *provider,
                                   config.limits.temperature, config.seed, pools);
    fs::create_directories(config.out_dir);
    std::string catalog_path = (fs::path(config.out_dir) / "catalog.jsonl").string();
    std::string pools_path = (fs::path(config.out_dir) / "pools.jsonl").string();
    schema::save_catalog(catalog, catalog_path);
    schema::save_pools(pools, pools_path);

    std::size_t transactional = 0, queries = 0;
    for (const auto& intent : catalog.intents)
        (intent.kind == schema::IntentKind::query ? queries : transactional) += 1;
    std::cout << "intents: " << catalog.intents.size() << " (" << transactional
              << " transactional + " << queries << " query) across "
              << catalog.domains().size() << " domains, " << catalog.total_slot_count()
              << " slots\n";
    std::cout << "catalog: " << catalog_path << "\npools:   " << pools_path << "\n";
    return 0;
}

int cmd_plan(const GlobalFlags& flags) {
    RunConfig config = resolve_config(flags);
    if (config.catalog_file.empty())
        throw ConfigError("plan needs paths.catalog_file");
    auto catalog = schema::load_catalog(config.catalog_file);
    std::vector<schema::SlotValuePool> pools;
    if (!config.pools_file.empty()) pools = schema::load_pools(config.pools_file);
    auto provider = make_provider(config.provider);
    auto plans = pipeline::plan_conversations(catalog, pools, *provider, config,
                                              config.n_conversations);
    fs::create_directories(config.out_dir);
    std::string plans_path = (fs::path(config.out_dir) / "plans.jsonl").string();
    planner::save_plans(plans, plans_path);
    std::cout << "planned " << plans.size() << " conversations -> " << plans_path << "\n";
    return 0;
}

int cmd_generate(const GlobalFlags& flags) {
    RunConfig config = resolve_config(flags);
    auto manifest = pipeline::run_pipeline(config);
    std::cout << "generated=" << manifest.generated << " validated=" << manifest.validated
              << " salvaged=" << manifest.salvaged << " discarded=" << manifest.discarded
              << "\n";
    std::cout << "dataset:  " << manifest.dataset_file << "\n";
    std::cout << "manifest: " << manifest.manifest_file << "\n";
    return manifest.discarded > 0 ? 1 : 0;
}

int cmd_validate(const GlobalFlags& flags, const std::string& dataset_path,
                 const std::string& catalog_path, const std::string& plans_path,
                 const std::string& log_path) {
    RunConfig config = resolve_config(flags);
    auto catalog = schema::load_catalog(catalog_path);
    auto records = dataset::read_dataset(dataset_path);
    if (!plans_path.empty())
        dataset::attach_plans(records, planner::load_plans(plans_path));

    std::vector<std::pair<std::string, validation::Verdict>> verdicts;
    std::size_t failures = 0;
    for (const auto& record : records) {
        auto verdict = validation::validate_record(record, catalog);
        if (!verdict.passed) ++failures;
        verdicts.emplace_back(record.id, std::move(verdict));
    }
    std::string log = log_path.empty()
                          ? (fs::path(config.out_dir) / "verdicts.jsonl").string()
                          : log_path;
    fs::create_directories(fs::path(log).parent_path().empty()
                               ? "."
                               : fs::path(log).parent_path().string());
    validation::write_verdict_log(verdicts, log);
    std::cout << records.size() - failures << "/" << records.size()
              << " conversations pass validation (log: " << log << ")\n";
    return failures > 0 ? 1 : 0;
}

int cmd_stats(const std::string& dataset_path, const std::string& catalog_path,
              bool as_json) {
    auto catalog = schema::load_catalog(catalog_path);
    auto records = dataset::read_dataset(dataset_path);
    auto stats = dataset::compute_stats(records, catalog);
    std::cout << (as_json ? dataset::stats_to_json(stats) + "\n"
                          : dataset::format_stats(stats));
    return 0;
}

// The predictions argument accepts either a prediction file or a dataset
// file (scored against itself, useful as a sanity check).
eval::PredictionFile load_predictions_flexible(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open predictions: " + path);
    std::string first_line;
    std::getline(in, first_line);
    in.close();
    if (first_line.find("\"point_index\"") != std::string::npos)
        return eval::load_predictions(path);
    return eval::predictions_from_gold(dataset::read_dataset(path));
}

int cmd_eval(const std::string& gold_path, const std::string& predictions_path,
             bool as_json, const std::string& report_path) {
    auto gold = dataset::read_dataset(gold_path);
    auto predictions = load_predictions_flexible(predictions_path);
    auto report = eval::evaluate(gold, predictions);
    std::cout << (as_json ? eval::report_to_json(report) + "\n"
                          : eval::format_report(report));
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) throw IoError("cannot write report: " + report_path);
        out << eval::report_to_json(report) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"task-oriented dialogue data generation and evaluation"};
    app.require_subcommand(1);

    GlobalFlags flags;

    auto* gen_intents = app.add_subcommand(
        "gen-intents", "Generate intent schemas and slot value pools from descriptions");
    add_global_flags(gen_intents, flags);

    auto* plan = app.add_subcommand("plan", "Plan conversations for an existing catalog");
    add_global_flags(plan, flags);

    auto* generate =
        app.add_subcommand("generate", "Run the full pipeline and write a dataset");
    add_global_flags(generate, flags);

    std::string dataset_path, catalog_path, plans_path, log_path, report_path;
    bool as_json = false;

    auto* validate = app.add_subcommand("validate", "Re-run validation over a dataset");
    add_global_flags(validate, flags);
    validate->add_option("--dataset", dataset_path, "Dataset file")->required();
    validate->add_option("--catalog", catalog_path, "Catalog file")->required();
    validate->add_option("--plans", plans_path, "Plan file (enables plan-aware checks)");
    validate->add_option("--log", log_path, "Verdict log path");

    auto* stats = app.add_subcommand("stats", "Dataset statistics");
    stats->add_option("--dataset", dataset_path, "Dataset file")->required();
    stats->add_option("--catalog", catalog_path, "Catalog file")->required();
    stats->add_flag("--json", as_json, "Machine-readable output");

    std::string gold_path, predictions_path;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold");
    eval_cmd->add_option("gold", gold_path, "Gold dataset file")->required();
    eval_cmd->add_option("predictions", predictions_path,
                         "Prediction file (or a dataset file to self-score)")
        ->required();
    eval_cmd->add_flag("--json", as_json, "Machine-readable output");
    eval_cmd->add_option("--report", report_path, "Also write the JSON report here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_intents->parsed()) return cmd_gen_intents(flags);
        if (plan->parsed()) return cmd_plan(flags);
        if (generate->parsed()) return cmd_generate(flags);
        if (validate->parsed())
            return cmd_validate(flags, dataset_path, catalog_path, plans_path, log_path);
        if (stats->parsed()) return cmd_stats(dataset_path, catalog_path, as_json);
        if (eval_cmd->parsed())
            return cmd_eval(gold_path, predictions_path, as_json, report_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
