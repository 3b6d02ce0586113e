#include "convgen/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "convgen/rng.hpp"

namespace convgen::pipeline {

namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string conversation_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "conv-%06zu", index);
    return buf;
}

const prompts::PromptLibrary& library_for(const RunConfig& config) {
    static std::mutex mu;
    static std::map<std::string, prompts::PromptLibrary> cache;
    if (config.prompts_dir.empty()) return prompts::PromptLibrary::builtin();
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(config.prompts_dir);
    if (it == cache.end())
        it = cache.emplace(config.prompts_dir,
                           prompts::PromptLibrary::from_dir(config.prompts_dir)).first;
    return it->second;
}

}  // namespace

std::vector<std::string> read_description_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open descriptions file: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (!line.empty() && line[0] != '#') out.push_back(line);
    }
    return out;
}

schema::SchemaCatalog generate_catalog(const std::vector<std::string>& descriptions,
                                       const std::vector<std::string>& denylist,
                                       LLMProvider& provider, double temperature,
                                       std::uint64_t seed,
                                       std::vector<schema::SlotValuePool>& pools_out) {
    schema::SchemaCatalog catalog;
    for (std::size_t i = 0; i < descriptions.size(); ++i) {
        schema::IntentSchema intent = schema::generate_intent_schema(
            descriptions[i], provider, temperature, derive_seed(seed, 100 + i));
        bool denied = std::find(denylist.begin(), denylist.end(), intent.intent_name) !=
                      denylist.end();
        if (denied) continue;
        if (catalog.find(intent.intent_name))
            throw ParseError("stage-1 produced a duplicate intent name: " +
                             intent.intent_name);
        catalog.intents.push_back(std::move(intent));
    }

    // stage 2 runs per transactional intent; queries share those pools
    for (std::size_t i = 0; i < catalog.intents.size(); ++i)
        pools_out.push_back(schema::generate_slot_value_pool(
            catalog.intents[i], provider, temperature, derive_seed(seed, 200 + i)));

    std::vector<schema::IntentSchema> queries;
    for (const auto& intent : catalog.intents)
        queries.push_back(schema::derive_query_intent(intent));
    for (auto& query : queries) catalog.intents.push_back(std::move(query));
    catalog = schema::merge_query_intents(catalog);
    catalog.validate();
    return catalog;
}

std::vector<planner::ConversationPlan> plan_conversations(
    const schema::SchemaCatalog& catalog, const std::vector<schema::SlotValuePool>& pools,
    LLMProvider& provider, const RunConfig& config, int n) {
    std::vector<std::string> transactional;
    for (const auto& intent : catalog.intents)
        if (intent.kind == schema::IntentKind::transactional)
            transactional.push_back(intent.intent_name);
    if (transactional.empty())
        throw PreconditionError("catalog has no transactional intents to plan around");

    std::vector<planner::ConversationPlan> plans;
    for (int i = 0; i < n; ++i) {
        std::uint64_t conv_seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
        const std::string& primary =
            transactional[static_cast<std::size_t>(mix64(conv_seed) % transactional.size())];
        plans.push_back(planner::build_plan(primary, catalog, pools, provider,
                                            config.sampling, conv_seed,
                                            config.limits.temperature));
    }
    return plans;
}

GenerationResult generate_conversations(const schema::SchemaCatalog& catalog,
                                        const std::vector<planner::ConversationPlan>& plans,
                                        const RunConfig& config) {
    std::vector<std::optional<planner::ConversationPlan>> slots;
    for (const auto& plan : plans) slots.emplace_back(plan);
    return generate_conversations_indexed(catalog, slots, {}, config);
}

GenerationResult generate_conversations_indexed(
    const schema::SchemaCatalog& catalog,
    const std::vector<std::optional<planner::ConversationPlan>>& maybe_plans,
    const std::vector<validation::Verdict>& plan_verdicts, const RunConfig& config) {
    const prompts::PromptLibrary& lib = library_for(config);

    struct Slot {
        std::optional<dataset::ConversationRecord> record;
        validation::Verdict verdict;
        bool salvaged = false;
    };
    std::vector<Slot> slots(maybe_plans.size());

    auto provider = make_provider(config.provider);
    agents::AgentProviders providers = agents::AgentProviders::shared(provider);

    // File-scripted ordinal replies depend on global call order, so those
    // runs are forced single-threaded.
    int workers = config.concurrency > 0
                      ? config.concurrency
                      : static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    if (config.provider.kind == "scripted" && !config.provider.script_file.empty())
        workers = 1;

    std::ofstream sarcasm_review;
    std::mutex sarcasm_mu;
    if (!config.sarcasm_review_file.empty()) {
        sarcasm_review.open(config.sarcasm_review_file, std::ios::app);
        if (!sarcasm_review)
            throw IoError("cannot open sarcasm review file: " + config.sarcasm_review_file);
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= maybe_plans.size()) return;
            Slot& slot = slots[i];
            if (!maybe_plans[i]) {
                slot.verdict = i < plan_verdicts.size()
                                   ? plan_verdicts[i]
                                   : validation::Verdict::fail("plan_error", "no plan", 0);
                continue;
            }
            const planner::ConversationPlan& plan = *maybe_plans[i];
            planner::ConversationRules rules = planner::compile_conversation_rules(plan);

            agents::ValidationHook hook = nullptr;
            if (config.run_validators) {
                hook = [&, i](const std::vector<agents::TurnRecord>& history)
                    -> std::optional<std::string> {
                    std::uint64_t point_seed =
                        derive_seed(plan.seed, 9000 + history.size());
                    auto v13 = validation::self_consistency_check(
                        history, catalog, *provider, config.validator, point_seed, lib);
                    if (!v13.passed) return v13.reasons.front().check;
                    auto v14 = validation::rule_aware_validate(
                        history, rules, catalog, *provider, config.validator,
                        derive_seed(point_seed, 14), lib);
                    if (!v14.passed) return v14.reasons.front().check;
                    return std::nullopt;
                };
            }

            try {
                agents::GeneratedConversation generated = agents::run_conversation(
                    plan, rules, catalog, providers, config.limits, plan.seed, hook, lib);
                dataset::ConversationRecord record;
                record.turns = std::move(generated.turns);
                record.phenomena = std::move(generated.phenomena);
                record.plan = plan;
                record.seed = plan.seed;
                slot.verdict = validation::validate_record(record, catalog);
                if (slot.verdict.passed) slot.record = std::move(record);
            } catch (const agents::AbortedConversation& aborted) {
                slot.verdict = validation::Verdict::fail(
                    "aborted_" + agents::to_string(aborted.reason()), aborted.what(),
                    aborted.turn_index());
                auto rescued = validation::salvage(aborted, plan, *provider,
                                                   config.limits.temperature, plan.seed, lib);
                if (rescued) {
                    auto check = validation::validate_record(*rescued, catalog);
                    if (check.passed) {
                        slot.record = std::move(rescued);
                        slot.salvaged = true;
                    } else {
                        slot.verdict.merge(check);
                    }
                }
            } catch (const Error& e) {
                slot.verdict =
                    validation::Verdict::fail("pipeline_error", e.what(), 0);
            }

            if (sarcasm_review.is_open() && slot.record) {
                for (std::size_t t = 0; t < slot.record->turns.size(); ++t) {
                    const auto& turn = slot.record->turns[t];
                    if (turn.phenomenon == planner::PhenomenonKind::sarcasm) {
                        std::lock_guard<std::mutex> lock(sarcasm_mu);
                        sarcasm_review << conversation_id(i) << "\t" << t << "\t" << turn.text
                                       << "\n";
                    }
                }
            }
        }
    };

    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    GenerationResult result;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        Slot& slot = slots[i];
        std::string id = conversation_id(i);
        if (slot.record) {
            slot.record->id = id;
            slot.record->salvaged = slot.salvaged;
            result.records.push_back(std::move(*slot.record));
            result.verdicts.emplace_back(id, validation::Verdict::pass());
            if (slot.salvaged) ++result.salvaged;
            else ++result.validated;
        } else {
            result.verdicts.emplace_back(id, std::move(slot.verdict));
            ++result.discarded;
        }
    }
    return result;
}

RunManifest run_pipeline(const RunConfig& config) {
    fs::create_directories(config.out_dir);
    auto provider = make_provider(config.provider);

    schema::SchemaCatalog catalog;
    std::vector<schema::SlotValuePool> pools;
    if (!config.catalog_file.empty()) {
        catalog = schema::load_catalog(config.catalog_file);
        if (!config.pools_file.empty()) pools = schema::load_pools(config.pools_file);
    } else {
        if (config.descriptions_file.empty())
            throw ConfigError("either catalog_file or descriptions_file must be set");
        auto descriptions = read_description_file(config.descriptions_file);
        catalog = generate_catalog(descriptions, config.intent_denylist, *provider,
                                   config.limits.temperature, config.seed, pools);
        schema::save_catalog(catalog, (fs::path(config.out_dir) / "catalog.jsonl").string());
        schema::save_pools(pools, (fs::path(config.out_dir) / "pools.jsonl").string());
    }

    std::vector<std::optional<planner::ConversationPlan>> maybe_plans;
    std::vector<validation::Verdict> plan_verdicts;
    std::vector<planner::ConversationPlan> plans;
    if (!config.plans_file.empty()) {
        for (auto& plan : planner::load_plans(config.plans_file)) {
            maybe_plans.emplace_back(std::move(plan));
            plan_verdicts.push_back(validation::Verdict::pass());
        }
    } else {
        std::vector<std::string> transactional;
        for (const auto& intent : catalog.intents)
            if (intent.kind == schema::IntentKind::transactional)
                transactional.push_back(intent.intent_name);
        if (transactional.empty())
            throw ConfigError("catalog has no transactional intents to plan around");
        for (int i = 0; i < config.n_conversations; ++i) {
            std::uint64_t conv_seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
            const std::string& primary = transactional[static_cast<std::size_t>(
                mix64(conv_seed) % transactional.size())];
            try {
                maybe_plans.emplace_back(planner::build_plan(primary, catalog, pools,
                                                             *provider, config.sampling,
                                                             conv_seed,
                                                             config.limits.temperature));
                plan_verdicts.push_back(validation::Verdict::pass());
            } catch (const Error& e) {
                maybe_plans.emplace_back(std::nullopt);
                plan_verdicts.push_back(
                    validation::Verdict::fail("plan_error", e.what(), 0));
            }
        }
    }
    for (const auto& plan : maybe_plans)
        if (plan) plans.push_back(*plan);

    GenerationResult generation =
        generate_conversations_indexed(catalog, maybe_plans, plan_verdicts, config);

    dataset::assign_splits(generation.records, catalog, config.ood_intents,
                           config.split_ratios, derive_seed(config.seed, 0x5117));

    RunManifest manifest;
    manifest.seed = config.seed;
    manifest.config_fingerprint = config_hash(config);
    manifest.generated = maybe_plans.size();
    manifest.validated = generation.validated;
    manifest.salvaged = generation.salvaged;
    manifest.discarded = generation.discarded;
    manifest.dataset_file = (fs::path(config.out_dir) / "dataset.jsonl").string();
    manifest.plans_file = (fs::path(config.out_dir) / "plans.jsonl").string();
    manifest.verdicts_file = (fs::path(config.out_dir) / "verdicts.jsonl").string();
    manifest.stats_file = (fs::path(config.out_dir) / "stats.json").string();
    manifest.manifest_file = (fs::path(config.out_dir) / "manifest.json").string();

    dataset::write_dataset(generation.records, manifest.dataset_file);
    planner::save_plans(plans, manifest.plans_file);
    validation::write_verdict_log(generation.verdicts, manifest.verdicts_file);
    {
        std::ofstream out(manifest.stats_file);
        if (!out) throw IoError("cannot write stats file");
        out << dataset::stats_to_json(dataset::compute_stats(generation.records, catalog))
            << "\n";
    }
    write_manifest(manifest, manifest.manifest_file);
    return manifest;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
    nlohmann::ordered_json j;
    j["seed"] = manifest.seed;
    j["config_hash"] = manifest.config_fingerprint;
    j["generated"] = manifest.generated;
    j["validated"] = manifest.validated;
    j["salvaged"] = manifest.salvaged;
    j["discarded"] = manifest.discarded;
    j["files"] = {{"dataset", manifest.dataset_file},
                  {"plans", manifest.plans_file},
                  {"verdicts", manifest.verdicts_file},
                  {"stats", manifest.stats_file}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace convgen::pipeline
