#pragma once
// Run configuration: provider settings, sampling distributions, budgets,
// seeds, paths and split policy. Loaded from JSON; every field has a
// default so a minimal config is enough.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "convgen/agents.hpp"
#include "convgen/planner.hpp"
#include "convgen/provider.hpp"
#include "convgen/validation.hpp"

namespace convgen {

struct ProviderSettings {
    std::string kind = "scripted";  // scripted | remote (simulated also accepted)
    std::string script_file;        // scripted with a file -> replayed replies;
                                    // scripted without one -> built-in simulator
    RemoteProviderConfig remote;
};

struct RunConfig {
    ProviderSettings provider;
    planner::SamplingConfig sampling;
    agents::Limits limits;
    validation::ValidatorOptions validator;
    bool run_validators = true;

    std::uint64_t seed = 1;
    int n_conversations = 10;
    int concurrency = 0;  // 0 = hardware concurrency

    std::string prompts_dir;  // empty -> built-in templates
    std::string out_dir = "out";
    std::string descriptions_file;
    std::string catalog_file;  // reuse an existing catalog instead of stage 1-2
    std::string pools_file;
    std::string plans_file;    // reuse existing plans instead of stages 3-8
    std::string sarcasm_review_file;

    std::vector<std::string> intent_denylist;
    std::vector<std::string> ood_intents;
    std::array<double, 3> split_ratios = {0.8, 0.1, 0.1};
};

// Throws ConfigError on malformed or out-of-range settings.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);
void validate_config(const RunConfig& config);

// Stable fingerprint of every setting that affects output.
std::string config_hash(const RunConfig& config);

std::shared_ptr<LLMProvider> make_provider(const ProviderSettings& settings);

}  // namespace convgen
