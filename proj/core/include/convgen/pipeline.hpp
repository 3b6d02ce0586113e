#pragma once
// End-to-end orchestration: schema generation, planning, turn-by-turn
// generation, validation, salvage, splits, stats and the run manifest.

#include <string>
#include <vector>

#include "convgen/config.hpp"
#include "convgen/dataset.hpp"
#include "convgen/eval.hpp"
#include "convgen/planner.hpp"
#include "convgen/schema.hpp"
#include "convgen/validation.hpp"

namespace convgen::pipeline {

struct RunManifest {
    std::uint64_t seed = 0;
    std::string config_fingerprint;
    std::size_t generated = 0;
    std::size_t validated = 0;
    std::size_t salvaged = 0;
    std::size_t discarded = 0;
    std::string dataset_file;
    std::string plans_file;
    std::string verdicts_file;
    std::string stats_file;
    std::string manifest_file;
};

// Stages 1-2 for every description, denylist applied, query intents
// derived and merged. Also fills the per-intent slot value pools.
schema::SchemaCatalog generate_catalog(const std::vector<std::string>& descriptions,
                                       const std::vector<std::string>& denylist,
                                       LLMProvider& provider, double temperature,
                                       std::uint64_t seed,
                                       std::vector<schema::SlotValuePool>& pools_out);

std::vector<std::string> read_description_file(const std::string& path);

// Stages 3-8 for n conversations. Per-conversation failures are skipped
// (reported in the returned count mismatch), never fatal.
std::vector<planner::ConversationPlan> plan_conversations(
    const schema::SchemaCatalog& catalog, const std::vector<schema::SlotValuePool>& pools,
    LLMProvider& provider, const RunConfig& config, int n);

struct GenerationResult {
    std::vector<dataset::ConversationRecord> records;  // validated + salvaged
    std::vector<std::pair<std::string, validation::Verdict>> verdicts;
    std::size_t validated = 0;
    std::size_t salvaged = 0;
    std::size_t discarded = 0;
};

// Stages 9-14 plus salvage for every plan.
GenerationResult generate_conversations(const schema::SchemaCatalog& catalog,
                                        const std::vector<planner::ConversationPlan>& plans,
                                        const RunConfig& config);

// Index-aligned variant used by run_pipeline: a missing plan keeps its id
// and is recorded as discarded with its planning verdict.
GenerationResult generate_conversations_indexed(
    const schema::SchemaCatalog& catalog,
    const std::vector<std::optional<planner::ConversationPlan>>& maybe_plans,
    const std::vector<validation::Verdict>& plan_verdicts, const RunConfig& config);

// The whole run. Writes dataset, plans, verdict log, stats and manifest
// under config.out_dir.
RunManifest run_pipeline(const RunConfig& config);

void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace convgen::pipeline
