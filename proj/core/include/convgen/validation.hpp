#pragma once
// Stages 13-14, phenomenon-signal checks, post-filters and salvage.
// The governing policy: if in doubt, discard.

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "convgen/agents.hpp"
#include "convgen/dataset.hpp"
#include "convgen/planner.hpp"
#include "convgen/prompts.hpp"
#include "convgen/provider.hpp"
#include "convgen/schema.hpp"

namespace convgen::validation {

struct Reason {
    std::string check;
    std::string detail;
    std::size_t turn = 0;

    friend bool operator==(const Reason&, const Reason&) = default;
};

struct Verdict {
    bool passed = true;
    std::vector<Reason> reasons;

    static Verdict pass() { return Verdict{}; }
    static Verdict fail(std::string check, std::string detail, std::size_t turn) {
        Verdict v;
        v.passed = false;
        v.reasons.push_back({std::move(check), std::move(detail), turn});
        return v;
    }
    void merge(const Verdict& other) {
        if (!other.passed) passed = false;
        reasons.insert(reasons.end(), other.reasons.begin(), other.reasons.end());
    }
};

struct ValidatorOptions {
    int trials = 3;              // stage-13 total predictions, original included
    bool raw_equality = false;   // compare raw text instead of canonical commands
    double temperature = 0.7;
};

// Stage 13: repeats the system prediction and passes only when all trials
// agree. `history` ends at the system labelling turn, before string slot
// values are filled. Unparseable re-predictions count as disagreement.
Verdict self_consistency_check(const std::vector<agents::TurnRecord>& history,
                               const schema::SchemaCatalog& catalog, LLMProvider& provider,
                               const ValidatorOptions& options, std::uint64_t seed,
                               const prompts::PromptLibrary& lib =
                                   prompts::PromptLibrary::builtin());

// Stage 14: an independent labelling pass that can see the conversation
// rules; must match the original prediction exactly.
Verdict rule_aware_validate(const std::vector<agents::TurnRecord>& history,
                            const planner::ConversationRules& rules,
                            const schema::SchemaCatalog& catalog, LLMProvider& provider,
                            const ValidatorOptions& options, std::uint64_t seed,
                            const prompts::PromptLibrary& lib =
                                prompts::PromptLibrary::builtin());

struct PhenomenonCheckContext {
    // (var, slot) pairs assigned before the phenomenon turn.
    std::set<std::pair<int, std::string>> prior_assignments;
    // Slot the assistant asked for right before the turn, if any.
    std::optional<std::string> requested_slot;
    // nth intent call -> var, for resolving plan targets.
    std::vector<int> intent_vars;
    const planner::ConversationPlan* plan = nullptr;
};

// Checks that the system command following a phenomenon-carrying user turn
// has the shape that phenomenon demands.
Verdict phenomenon_signal_check(const agents::TurnRecord& turn,
                                const std::vector<dsl::Command>& following_commands,
                                const PhenomenonCheckContext& context,
                                std::size_t turn_index = 0);

// Post-processing filters: slot overwritten without a correction token,
// empty string slot values, hints predicted as system commands, and
// planned intents left unperformed without a cancellation.
Verdict post_filters(const dataset::ConversationRecord& record);

// The full provider-free suite: record invariants, phenomenon checks,
// post-filters, and (when the plan is attached) a back-end replay that
// must reproduce the recorded signal turns.
Verdict validate_record(const dataset::ConversationRecord& record,
                        const schema::SchemaCatalog& catalog);

// Keeps the prefix of an aborted conversation when at least one intent was
// performed or at least ten turns elapsed; appends a provider-written
// closing response. Returns nullopt to discard.
std::optional<dataset::ConversationRecord> salvage(
    const agents::AbortedConversation& aborted, const planner::ConversationPlan& plan,
    LLMProvider& provider, double temperature, std::uint64_t seed,
    const prompts::PromptLibrary& lib = prompts::PromptLibrary::builtin());

// Verdict log: one line per conversation, `conversation_id, passed, reasons[]`.
void write_verdict_log(const std::vector<std::pair<std::string, Verdict>>& entries,
                       const std::string& path);

}  // namespace convgen::validation
