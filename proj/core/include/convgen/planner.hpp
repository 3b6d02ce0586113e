#pragma once
// The conversation planner: samples a conversation shape, picks the
// intent sequence, settles slot values (stages 3-7), seeds query
// entities (stage 8), places conversational phenomena, and compiles the
// per-conversation rules the user agent follows.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convgen/backend.hpp"
#include "convgen/command_dsl.hpp"
#include "convgen/provider.hpp"
#include "convgen/schema.hpp"

namespace convgen::planner {

enum class PhenomenonKind {
    cancellation,
    asr_early_end,
    sarcasm,
    delay_confirmation,
    answer_about_another_slot,
    irrelevant_answer,
    overheard_answer,
    in_turn_correction,
    correction,
    none,
};

// Slug used in dataset files and stats ("correction", "sarcasm", ...).
std::string to_string(PhenomenonKind k);
std::optional<PhenomenonKind> phenomenon_from_string(const std::string& s);

// The special token the user agent must emit ("<CORRECTION>", ...).
std::string phenomenon_token(PhenomenonKind k);
std::optional<PhenomenonKind> phenomenon_from_token(const std::string& token);
const std::vector<PhenomenonKind>& all_phenomena();

enum class TriggerHint { on_slot_request, on_confirmation_request, anywhere };
std::string to_string(TriggerHint t);

struct Phenomenon {
    PhenomenonKind kind = PhenomenonKind::none;
    std::size_t target_intent = 0;  // index into intent_sequence
    std::optional<std::string> target_slot;
    TriggerHint trigger = TriggerHint::anywhere;
    // First-given wrong value for the correction kinds.
    std::optional<dsl::Value> decoy_value;

    friend bool operator==(const Phenomenon&, const Phenomenon&) = default;
};

struct ConversationPlan {
    std::vector<std::string> intent_sequence;
    // Parallel to intent_sequence; queries carry empty maps.
    std::vector<std::map<std::string, dsl::Value>> slot_assignments;
    std::vector<std::vector<std::string>> optional_slot_choices;
    std::vector<Phenomenon> phenomena;
    std::map<std::size_t, std::string> justifications;  // follow-up index -> reason
    std::map<std::string, std::vector<std::map<std::string, dsl::Value>>> query_entities;
    std::uint64_t seed = 0;

    void validate(const schema::SchemaCatalog& catalog) const;
};

struct Rule {
    std::string scope;  // "global" | "intent:<i>" | "phenomenon:<slug>"
    std::string instruction;
    std::optional<PhenomenonKind> marker;
    std::optional<std::string> token;  // expected signal token

    friend bool operator==(const Rule&, const Rule&) = default;
};

struct ConversationRules {
    std::vector<Rule> rules;

    friend bool operator==(const ConversationRules&, const ConversationRules&) = default;
};

struct SamplingConfig {
    std::map<int, double> intent_count_weights = {{1, 0.55}, {2, 0.30}, {3, 0.15}};
    double optional_slot_p = 0.4;
    double phenomenon_rate = 0.25;
    // Defaults proportional to the observed per-kind mix.
    std::map<PhenomenonKind, double> phenomenon_kind_weights = {
        {PhenomenonKind::correction, 250},
        {PhenomenonKind::in_turn_correction, 215},
        {PhenomenonKind::overheard_answer, 203},
        {PhenomenonKind::irrelevant_answer, 163},
        {PhenomenonKind::answer_about_another_slot, 113},
        {PhenomenonKind::delay_confirmation, 76},
        {PhenomenonKind::sarcasm, 63},
        {PhenomenonKind::asr_early_end, 58},
        {PhenomenonKind::cancellation, 12},
    };
    double extra_phenomenon_p = 0.07;  // chance of a second phenomenon
    int candidate_intents = 15;        // stage-3 sample size
    int entities_per_query = 2;        // stage-8 entities per query intent
};

struct ShapeRecord {
    int intent_count = 1;
    std::vector<PhenomenonKind> phenomenon_kinds;
    std::uint64_t slot_choice_seed = 0;

    friend bool operator==(const ShapeRecord&, const ShapeRecord&) = default;
};

// Draws intent count, phenomenon kinds and the per-conversation seed used
// for optional-slot inclusion. Deterministic given rng_seed.
ShapeRecord sample_conversation_shape(const schema::SchemaCatalog& catalog,
                                      std::uint64_t rng_seed, const SamplingConfig& config);

// Stage 3. The candidate set is sampled with `seed`; the reply must start
// with the primary intent, use offered intents only, and match `length`.
std::vector<std::string> plan_intent_sequence(const std::string& primary_intent,
                                              const schema::SchemaCatalog& catalog,
                                              LLMProvider& provider, int length,
                                              const SamplingConfig& config,
                                              std::uint64_t seed,
                                              double temperature = 0.7);

// Stage 4: full replacement mapping over the same slot keys.
std::map<std::string, dsl::Value> refine_slot_values(
    const schema::IntentSchema& intent, const std::map<std::string, dsl::Value>& draft,
    LLMProvider& provider, double temperature = 0.7,
    std::optional<std::uint64_t> seed = std::nullopt);

// Stage 5: single-paragraph reason for a follow-up intent.
std::string justify_followup(const std::string& history_summary,
                             const std::string& next_intent, LLMProvider& provider,
                             double temperature = 0.7,
                             std::optional<std::uint64_t> seed = std::nullopt);

// Stage 6: values for a follow-up intent given the justification. The
// reply must cover exactly the keys of `slots_to_fill`.
std::map<std::string, dsl::Value> followup_slot_values(
    const schema::IntentSchema& intent, const std::string& justification,
    const std::vector<std::string>& slots_to_fill, const schema::SlotValuePool& pool,
    LLMProvider& provider, double temperature = 0.7,
    std::optional<std::uint64_t> seed = std::nullopt);

// Stage 7: cross-intent consistency pass. Only values may change.
ConversationPlan harmonize_slot_values(const ConversationPlan& plan,
                                       const schema::SchemaCatalog& catalog,
                                       LLMProvider& provider, double temperature = 0.7,
                                       std::optional<std::uint64_t> seed = std::nullopt);

// Stage 8: entities to be returned by each query intent in the plan.
std::map<std::string, std::vector<std::map<std::string, dsl::Value>>> generate_query_entities(
    const ConversationPlan& plan, const schema::SchemaCatalog& catalog,
    const std::vector<schema::SlotValuePool>& pools, LLMProvider& provider,
    const SamplingConfig& config, double temperature = 0.7,
    std::optional<std::uint64_t> seed = std::nullopt);

// Pure, deterministic: one preamble rule, one rule per intent, one rule
// per phenomenon (carrying its marker and token).
ConversationRules compile_conversation_rules(const ConversationPlan& plan);

// Structured view of a compiled rule, parsed back from its instruction.
struct IntentRuleFields {
    std::size_t index = 0;
    std::string intent_name;
    std::map<std::string, dsl::Value> values;
    std::string reason;
};
std::optional<IntentRuleFields> parse_intent_rule(const Rule& rule);

struct PhenomenonRuleFields {
    PhenomenonKind kind = PhenomenonKind::none;
    std::size_t intent = 0;
    std::optional<std::string> slot;
    TriggerHint trigger = TriggerHint::anywhere;
    std::optional<dsl::Value> decoy;
    std::string token;
};
std::optional<PhenomenonRuleFields> parse_phenomenon_rule(const Rule& rule);

// Runs stages 3-8 plus phenomenon placement for one conversation.
ConversationPlan build_plan(const std::string& primary_intent,
                            const schema::SchemaCatalog& catalog,
                            const std::vector<schema::SlotValuePool>& pools,
                            LLMProvider& provider, const SamplingConfig& config,
                            std::uint64_t seed, double temperature = 0.7);

// Merged candidate pool for any intent (queries fall back to the pools of
// the transactional intents producing their entity).
schema::SlotValuePool pool_for_intent(const schema::IntentSchema& intent,
                                      const schema::SchemaCatalog& catalog,
                                      const std::vector<schema::SlotValuePool>& pools);

backend::EntityStore make_entity_store(const ConversationPlan& plan);

void save_plans(const std::vector<ConversationPlan>& plans, const std::string& path);
std::vector<ConversationPlan> load_plans(const std::string& path);

}  // namespace convgen::planner
