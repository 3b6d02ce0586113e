#include "convgen/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "convgen/rng.hpp"
#include "convgen/simulated_provider.hpp"

namespace convgen {

namespace {

using ordered_json = nlohmann::ordered_json;

void read_sampling(const ordered_json& j, planner::SamplingConfig& sampling) {
    if (j.contains("intent_count_weights")) {
        sampling.intent_count_weights.clear();
        for (const auto& [k, v] : j.at("intent_count_weights").items())
            sampling.intent_count_weights[std::stoi(k)] = v.get<double>();
    }
    sampling.optional_slot_p = j.value("optional_slot_p", sampling.optional_slot_p);
    sampling.phenomenon_rate = j.value("phenomenon_rate", sampling.phenomenon_rate);
    if (j.contains("phenomenon_kind_weights")) {
        sampling.phenomenon_kind_weights.clear();
        for (const auto& [k, v] : j.at("phenomenon_kind_weights").items()) {
            auto kind = planner::phenomenon_from_string(k);
            if (!kind || *kind == planner::PhenomenonKind::none)
                throw ConfigError("unknown phenomenon kind in config: " + k);
            sampling.phenomenon_kind_weights[*kind] = v.get<double>();
        }
    }
    sampling.extra_phenomenon_p = j.value("extra_phenomenon_p", sampling.extra_phenomenon_p);
    sampling.candidate_intents = j.value("candidate_intents", sampling.candidate_intents);
    sampling.entities_per_query = j.value("entities_per_query", sampling.entities_per_query);
}

ordered_json sampling_to_json(const planner::SamplingConfig& sampling) {
    ordered_json j;
    ordered_json weights = ordered_json::object();
    for (const auto& [count, weight] : sampling.intent_count_weights)
        weights[std::to_string(count)] = weight;
    j["intent_count_weights"] = std::move(weights);
    j["optional_slot_p"] = sampling.optional_slot_p;
    j["phenomenon_rate"] = sampling.phenomenon_rate;
    ordered_json kinds = ordered_json::object();
    for (const auto& [kind, weight] : sampling.phenomenon_kind_weights)
        kinds[planner::to_string(kind)] = weight;
    j["phenomenon_kind_weights"] = std::move(kinds);
    j["extra_phenomenon_p"] = sampling.extra_phenomenon_p;
    j["candidate_intents"] = sampling.candidate_intents;
    j["entities_per_query"] = sampling.entities_per_query;
    return j;
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    RunConfig config;
    try {
        if (j.contains("provider")) {
            const auto& p = j.at("provider");
            config.provider.kind = p.value("kind", config.provider.kind);
            config.provider.script_file = p.value("script_file", config.provider.script_file);
            config.provider.remote.endpoint =
                p.value("endpoint", config.provider.remote.endpoint);
            config.provider.remote.model = p.value("model", config.provider.remote.model);
            config.provider.remote.api_key_env =
                p.value("api_key_env", config.provider.remote.api_key_env);
            config.provider.remote.max_concurrent =
                p.value("max_concurrent", config.provider.remote.max_concurrent);
            config.provider.remote.timeout_ms =
                p.value("timeout_ms", config.provider.remote.timeout_ms);
            config.provider.remote.max_retries =
                p.value("max_retries", config.provider.remote.max_retries);
        }
        if (j.contains("sampling")) read_sampling(j.at("sampling"), config.sampling);
        if (j.contains("limits")) {
            const auto& l = j.at("limits");
            config.limits.max_turns = l.value("max_turns", config.limits.max_turns);
            config.limits.retries = l.value("retries", config.limits.retries);
            config.limits.temperature = l.value("temperature", config.limits.temperature);
        }
        if (j.contains("validation")) {
            const auto& v = j.at("validation");
            config.run_validators = v.value("enabled", config.run_validators);
            config.validator.trials = v.value("trials", config.validator.trials);
            config.validator.raw_equality =
                v.value("raw_equality", config.validator.raw_equality);
            config.validator.temperature =
                v.value("temperature", config.validator.temperature);
        }
        config.seed = j.value("seed", config.seed);
        config.n_conversations = j.value("n", config.n_conversations);
        config.concurrency = j.value("concurrency", config.concurrency);
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            config.prompts_dir = p.value("prompts_dir", config.prompts_dir);
            config.out_dir = p.value("out_dir", config.out_dir);
            config.descriptions_file =
                p.value("descriptions_file", config.descriptions_file);
            config.catalog_file = p.value("catalog_file", config.catalog_file);
            config.pools_file = p.value("pools_file", config.pools_file);
            config.plans_file = p.value("plans_file", config.plans_file);
            config.sarcasm_review_file =
                p.value("sarcasm_review_file", config.sarcasm_review_file);
        }
        config.intent_denylist =
            j.value("intent_denylist", std::vector<std::string>{});
        if (j.contains("splits")) {
            const auto& s = j.at("splits");
            config.ood_intents = s.value("ood_intents", std::vector<std::string>{});
            if (s.contains("ratios")) {
                auto ratios = s.at("ratios").get<std::vector<double>>();
                if (ratios.size() != 3)
                    throw ConfigError("splits.ratios must have 3 entries (train/dev/test)");
                config.split_ratios = {ratios[0], ratios[1], ratios[2]};
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config field: ") + e.what());
    }
    validate_config(config);
    return config;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void validate_config(const RunConfig& config) {
    auto probability = [](double p, const char* name) {
        if (p < 0.0 || p > 1.0)
            throw ConfigError(std::string(name) + " must be within [0, 1]");
    };
    probability(config.sampling.optional_slot_p, "sampling.optional_slot_p");
    probability(config.sampling.phenomenon_rate, "sampling.phenomenon_rate");
    probability(config.sampling.extra_phenomenon_p, "sampling.extra_phenomenon_p");
    for (const auto& [count, weight] : config.sampling.intent_count_weights)
        if (count < 1 || weight < 0)
            throw ConfigError("intent_count_weights entries must be positive");
    for (const auto& [kind, weight] : config.sampling.phenomenon_kind_weights)
        if (weight < 0) throw ConfigError("phenomenon_kind_weights must be non-negative");
    double ratio_sum =
        config.split_ratios[0] + config.split_ratios[1] + config.split_ratios[2];
    if (std::abs(ratio_sum - 1.0) > 1e-9)
        throw ConfigError("splits.ratios must sum to 1");
    for (double ratio : config.split_ratios) probability(ratio, "splits.ratios entry");
    if (config.n_conversations < 0) throw ConfigError("n must be non-negative");
    if (config.limits.max_turns < 5) throw ConfigError("limits.max_turns must be at least 5");
    if (config.validator.trials < 2)
        throw ConfigError("validation.trials must be at least 2");
    if (config.provider.kind != "scripted" && config.provider.kind != "remote" &&
        config.provider.kind != "simulated")
        throw ConfigError("provider.kind must be scripted, simulated or remote");
    if (config.provider.kind == "remote" && config.provider.remote.endpoint.empty())
        throw ConfigError("remote provider requires an endpoint");
    if (!config.prompts_dir.empty() && !std::filesystem::is_directory(config.prompts_dir))
        throw ConfigError("prompts_dir does not exist: " + config.prompts_dir);
    for (const char* path : {config.descriptions_file.c_str(), config.catalog_file.c_str(),
                             config.pools_file.c_str(), config.plans_file.c_str(),
                             config.provider.script_file.c_str()}) {
        if (path[0] != '\0' && !std::filesystem::exists(path))
            throw ConfigError(std::string("configured path does not exist: ") + path);
    }
}

std::string config_hash(const RunConfig& config) {
    ordered_json j;
    j["provider"] = {{"kind", config.provider.kind},
                     {"script_file", config.provider.script_file},
                     {"endpoint", config.provider.remote.endpoint},
                     {"model", config.provider.remote.model}};
    j["sampling"] = sampling_to_json(config.sampling);
    j["limits"] = {{"max_turns", config.limits.max_turns},
                   {"retries", config.limits.retries},
                   {"temperature", config.limits.temperature}};
    j["validation"] = {{"enabled", config.run_validators},
                       {"trials", config.validator.trials},
                       {"raw_equality", config.validator.raw_equality}};
    j["seed"] = config.seed;
    j["n"] = config.n_conversations;
    j["denylist"] = config.intent_denylist;
    j["ood"] = config.ood_intents;
    j["ratios"] = config.split_ratios;
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

std::shared_ptr<LLMProvider> make_provider(const ProviderSettings& settings) {
    if (settings.kind == "remote") return make_remote_provider(settings.remote);
    if (settings.kind == "scripted" && !settings.script_file.empty())
        return std::make_shared<ScriptedProvider>(ProviderScript::load(settings.script_file));
    return std::make_shared<SimulatedProvider>();
}

}  // namespace convgen
