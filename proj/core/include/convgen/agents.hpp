#pragma once
// User, System and Response agents (stages 9-12) and the turn loop that
// drives one conversation against the mock back-end.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "convgen/backend.hpp"
#include "convgen/command_dsl.hpp"
#include "convgen/planner.hpp"
#include "convgen/prompts.hpp"
#include "convgen/provider.hpp"
#include "convgen/schema.hpp"

namespace convgen::agents {

enum class TurnKind { user, system, signal, response };

std::string to_string(TurnKind k);
std::optional<TurnKind> turn_kind_from_string(const std::string& s);

struct TurnRecord {
    TurnKind kind = TurnKind::user;
    std::string text;                               // user, response
    std::vector<dsl::Command> commands;             // system
    std::optional<dsl::SignalPayload> signal;       // signal
    std::optional<planner::PhenomenonKind> phenomenon;  // user turns only

    friend bool operator==(const TurnRecord&, const TurnRecord&) = default;
};

// Throws PreconditionError when a turn's payload does not match its kind
// or the ordering breaks the turn grammar (conversations start with a
// user turn, system follows user or signal, signal follows system,
// response follows system).
void check_turn_grammar(const std::vector<TurnRecord>& turns);

enum class AbortReason {
    provider_failure,
    parse_failure,
    span_violation,
    missing_token,
    turn_limit,
    validation_failed,
    backend_error,
};

std::string to_string(AbortReason r);

// Thrown by run_conversation; carries the salvageable prefix.
class AbortedConversation : public Error {
public:
    AbortedConversation(AbortReason reason, std::size_t turn_index,
                        std::vector<TurnRecord> prefix, const std::string& detail)
        : Error("conversation aborted (" + to_string(reason) + " at turn " +
                std::to_string(turn_index) + "): " + detail),
          reason_(reason), turn_index_(turn_index), prefix_(std::move(prefix)) {}

    AbortReason reason() const { return reason_; }
    std::size_t turn_index() const { return turn_index_; }
    const std::vector<TurnRecord>& prefix() const { return prefix_; }

private:
    AbortReason reason_;
    std::size_t turn_index_;
    std::vector<TurnRecord> prefix_;
};

struct AgentProviders {
    std::shared_ptr<LLMProvider> user;
    std::shared_ptr<LLMProvider> system;
    std::shared_ptr<LLMProvider> response;

    static AgentProviders shared(std::shared_ptr<LLMProvider> one) {
        return AgentProviders{one, one, one};
    }
};

struct Limits {
    int max_turns = 120;
    int retries = 2;       // extra attempts per stage call
    double temperature = 0.7;
};

// ---- prompt assembly ----

// Token-bearing rendering is only ever shown to the user agent; the
// labelling agents get include_tokens=false.
std::string render_history(const std::vector<TurnRecord>& turns, bool include_tokens);
std::string render_rules(const planner::ConversationRules& rules);
std::string render_tools(const schema::SchemaCatalog& catalog);

// Stage-10 prompt, shared verbatim by the stage-13 consistency checker.
std::string build_label_prompt(const std::vector<TurnRecord>& history,
                               const schema::SchemaCatalog& catalog,
                               const prompts::PromptLibrary& lib);

// ---- stages 9-12 ----

// Stage 9. Strips the phenomenon token from the stored text and records
// it; throws MissingToken when a due phenomenon's token never shows up
// within the retry budget.
TurnRecord user_turn(const planner::ConversationRules& rules,
                     const std::vector<TurnRecord>& history, LLMProvider& provider,
                     const Limits& limits, std::uint64_t seed,
                     const prompts::PromptLibrary& lib = prompts::PromptLibrary::builtin());

// Stage 10. Commands with every string slot value left as <STR>.
std::vector<dsl::Command> system_label(
    const std::vector<TurnRecord>& history, const schema::SchemaCatalog& catalog,
    LLMProvider& provider, const Limits& limits, std::uint64_t seed,
    const prompts::PromptLibrary& lib = prompts::PromptLibrary::builtin());

// Stage 11. Replaces placeholders with spans of user_text; one re-ask,
// then SpanViolation.
std::vector<dsl::Command> extract_string_slots(
    const std::vector<dsl::Command>& commands, const std::string& user_text,
    LLMProvider& provider, const Limits& limits, std::uint64_t seed,
    const prompts::PromptLibrary& lib = prompts::PromptLibrary::builtin());

// Stage 12.
TurnRecord respond(const std::vector<TurnRecord>& history,
                   const std::optional<dsl::SignalPayload>& last_signal,
                   LLMProvider& provider, const Limits& limits, std::uint64_t seed,
                   const prompts::PromptLibrary& lib = prompts::PromptLibrary::builtin());

// ---- the turn loop ----

struct GeneratedConversation {
    std::vector<TurnRecord> turns;
    std::vector<planner::PhenomenonKind> phenomena;  // observed, in turn order
};

// Called after each provisional system turn (before string filling);
// returns a failure detail to abort, nullopt to continue.
using ValidationHook =
    std::function<std::optional<std::string>(const std::vector<TurnRecord>& history)>;

GeneratedConversation run_conversation(
    const planner::ConversationPlan& plan, const planner::ConversationRules& rules,
    const schema::SchemaCatalog& catalog, const AgentProviders& providers,
    const Limits& limits, std::uint64_t seed,
    const ValidationHook& hook = nullptr,
    const prompts::PromptLibrary& lib = prompts::PromptLibrary::builtin());

}  // namespace convgen::agents
