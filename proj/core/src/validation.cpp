#include "convgen/validation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "convgen/backend.hpp"
#include "convgen/rng.hpp"

namespace convgen::validation {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::optional<std::vector<dsl::Command>> try_parse_commands(const std::string& reply) {
    std::vector<dsl::Command> cmds;
    std::istringstream in(reply);
    std::string line;
    try {
        while (std::getline(in, line)) {
            line = trim(line);
            if (!line.empty()) cmds.push_back(dsl::parse_command(line));
        }
    } catch (const SyntaxError&) {
        return std::nullopt;
    }
    if (cmds.empty()) return std::nullopt;
    return cmds;
}

// Commands at a labelling point may reference variables bound earlier in
// the conversation, so canonical comparison happens with the committed
// command stream prepended; fresh variables still compare up to
// renumbering, references to existing ones must agree.
bool predictions_equal(const std::vector<dsl::Command>& context,
                       const std::vector<dsl::Command>& a, const std::vector<dsl::Command>& b,
                       bool raw_equality) {
    if (raw_equality) return dsl::commands_equal_raw(a, b);
    std::vector<dsl::Command> full_a = context;
    full_a.insert(full_a.end(), a.begin(), a.end());
    std::vector<dsl::Command> full_b = context;
    full_b.insert(full_b.end(), b.begin(), b.end());
    try {
        return dsl::commands_equal(full_a, full_b);
    } catch (const DanglingVarRef&) {
        // Un-canonicalizable predictions are doubt; doubt means discard.
        return false;
    }
}

std::vector<dsl::Command> committed_commands(const std::vector<agents::TurnRecord>& prefix) {
    std::vector<dsl::Command> out;
    for (const auto& turn : prefix)
        if (turn.kind == agents::TurnKind::system)
            out.insert(out.end(), turn.commands.begin(), turn.commands.end());
    return out;
}

// Assignments made by one command list: intent-call args plus attribute
// assignments, as (var, slot, value).
struct Assignment {
    int var = 0;
    std::string slot;
    dsl::Value value;
    bool from_attr_assign = false;
};

std::vector<Assignment> assignments_of(const std::vector<dsl::Command>& cmds) {
    std::vector<Assignment> out;
    for (const auto& cmd : cmds) {
        if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd)) {
            for (const auto& [slot, value] : ic->args)
                out.push_back({ic->var, slot, value, false});
        } else if (const auto* aa = std::get_if<dsl::AttrAssign>(&cmd)) {
            out.push_back({aa->var, aa->slot, aa->value, true});
        }
    }
    return out;
}

bool has_confirm(const std::vector<dsl::Command>& cmds) {
    return std::any_of(cmds.begin(), cmds.end(), [](const dsl::Command& c) {
        return std::holds_alternative<dsl::Confirm>(c);
    });
}

bool say_only(const std::vector<dsl::Command>& cmds) {
    return std::all_of(cmds.begin(), cmds.end(), [](const dsl::Command& c) {
        return std::holds_alternative<dsl::Say>(c);
    });
}

const planner::Phenomenon* find_plan_phenomenon(const planner::ConversationPlan* plan,
                                                planner::PhenomenonKind kind) {
    if (!plan) return nullptr;
    for (const auto& ph : plan->phenomena)
        if (ph.kind == kind) return &ph;
    return nullptr;
}

}  // namespace

Verdict self_consistency_check(const std::vector<agents::TurnRecord>& history,
                               const schema::SchemaCatalog& catalog, LLMProvider& provider,
                               const ValidatorOptions& options, std::uint64_t seed,
                               const prompts::PromptLibrary& lib) {
    if (history.empty() || history.back().kind != agents::TurnKind::system)
        throw PreconditionError("stage 13 runs at a system labelling point");
    const std::size_t point = history.size() - 1;
    const auto& original = history.back().commands;
    std::vector<agents::TurnRecord> prefix(history.begin(), history.end() - 1);
    std::vector<dsl::Command> context = committed_commands(prefix);
    std::string prompt = agents::build_label_prompt(prefix, catalog, lib);

    for (int trial = 1; trial < options.trials; ++trial) {
        std::string reply =
            provider.complete(prompt, options.temperature, derive_seed(seed, trial));
        auto cmds = try_parse_commands(reply);
        if (!cmds)
            return Verdict::fail("stage13_unparseable",
                                 "re-prediction " + std::to_string(trial) + " did not parse",
                                 point);
        if (!predictions_equal(context, original, *cmds, options.raw_equality))
            return Verdict::fail("stage13_mismatch",
                                 "re-prediction " + std::to_string(trial) +
                                     " disagrees with the original labels",
                                 point);
    }
    return Verdict::pass();
}

Verdict rule_aware_validate(const std::vector<agents::TurnRecord>& history,
                            const planner::ConversationRules& rules,
                            const schema::SchemaCatalog& catalog, LLMProvider& provider,
                            const ValidatorOptions& options, std::uint64_t seed,
                            const prompts::PromptLibrary& lib) {
    if (history.empty() || history.back().kind != agents::TurnKind::system)
        throw PreconditionError("stage 14 runs at a system labelling point");
    const std::size_t point = history.size() - 1;
    const auto& original = history.back().commands;
    std::vector<agents::TurnRecord> prefix(history.begin(), history.end() - 1);
    std::vector<dsl::Command> context = committed_commands(prefix);

    std::string prompt =
        lib.render("stage14", {{"rules", agents::render_rules(rules)},
                               {"tools", agents::render_tools(catalog)},
                               {"history", agents::render_history(prefix, false)}});
    std::string reply = provider.complete(prompt, options.temperature, derive_seed(seed, 14));
    auto cmds = try_parse_commands(reply);
    if (!cmds)
        return Verdict::fail("stage14_unparseable", "validator reply did not parse", point);
    if (!predictions_equal(context, original, *cmds, options.raw_equality))
        return Verdict::fail("stage14_mismatch",
                             "rule-aware validator disagrees with the original labels", point);
    return Verdict::pass();
}

Verdict phenomenon_signal_check(const agents::TurnRecord& turn,
                                const std::vector<dsl::Command>& following_commands,
                                const PhenomenonCheckContext& context,
                                std::size_t turn_index) {
    if (turn.kind != agents::TurnKind::user || !turn.phenomenon)
        throw PreconditionError("phenomenon check requires a token-carrying user turn");
    const planner::PhenomenonKind kind = *turn.phenomenon;
    const auto assignments = assignments_of(following_commands);

    switch (kind) {
        case planner::PhenomenonKind::irrelevant_answer:
        case planner::PhenomenonKind::overheard_answer:
        case planner::PhenomenonKind::sarcasm: {
            if (!say_only(following_commands))
                return Verdict::fail("phenomenon_" + planner::to_string(kind),
                                     "expected a say-only system turn, found an assignment",
                                     turn_index);
            return Verdict::pass();
        }
        case planner::PhenomenonKind::correction:
        case planner::PhenomenonKind::in_turn_correction: {
            for (const auto& a : assignments)
                if (a.from_attr_assign && context.prior_assignments.count({a.var, a.slot}))
                    return Verdict::pass();
            return Verdict::fail("phenomenon_" + planner::to_string(kind),
                                 "no assignment overwriting a previously provided slot",
                                 turn_index);
        }
        case planner::PhenomenonKind::delay_confirmation:
        case planner::PhenomenonKind::cancellation: {
            if (has_confirm(following_commands))
                return Verdict::fail("phenomenon_" + planner::to_string(kind),
                                     "system confirmed during a " + planner::to_string(kind) +
                                         " turn",
                                     turn_index);
            return Verdict::pass();
        }
        case planner::PhenomenonKind::asr_early_end: {
            const auto* ph =
                find_plan_phenomenon(context.plan, planner::PhenomenonKind::asr_early_end);
            if (!ph || !ph->target_slot)
                return Verdict::fail("phenomenon_asr_early_end",
                                     "no plan target to check the truncated value against",
                                     turn_index);
            const auto& planned =
                context.plan->slot_assignments[ph->target_intent].at(*ph->target_slot);
            for (const auto& a : assignments) {
                if (a.slot != *ph->target_slot || !a.value.is_text()) continue;
                const std::string& got = a.value.text_value();
                const std::string& want = planned.text_value();
                if (!got.empty() && got.size() < want.size() &&
                    want.compare(0, got.size(), got) == 0)
                    return Verdict::pass();
                return Verdict::fail("phenomenon_asr_early_end",
                                     "value '" + got + "' is not a strict prefix of '" +
                                         want + "'",
                                     turn_index);
            }
            return Verdict::fail("phenomenon_asr_early_end",
                                 "no assignment to the truncated slot", turn_index);
        }
        case planner::PhenomenonKind::answer_about_another_slot: {
            if (!context.requested_slot)
                return Verdict::fail("phenomenon_answer_about_another_slot",
                                     "no slot request precedes the turn", turn_index);
            if (assignments.empty())
                return Verdict::fail("phenomenon_answer_about_another_slot",
                                     "expected an assignment to a different slot",
                                     turn_index);
            for (const auto& a : assignments)
                if (a.slot == *context.requested_slot)
                    return Verdict::fail("phenomenon_answer_about_another_slot",
                                         "assignment targets the requested slot '" + a.slot +
                                             "'",
                                         turn_index);
            return Verdict::pass();
        }
        case planner::PhenomenonKind::none:
            break;
    }
    return Verdict::pass();
}

Verdict post_filters(const dataset::ConversationRecord& record) {
    Verdict verdict = Verdict::pass();
    const auto& turns = record.turns;

    std::set<std::pair<int, std::string>> provided;
    std::size_t cancel_tokens = 0;
    std::vector<int> intent_vars;
    std::set<int> performed_vars;

    for (std::size_t i = 0; i < turns.size(); ++i) {
        const auto& turn = turns[i];
        if (turn.kind == agents::TurnKind::user &&
            turn.phenomenon == planner::PhenomenonKind::cancellation)
            ++cancel_tokens;
        if (turn.kind == agents::TurnKind::signal && turn.signal) {
            if (const auto* pf = std::get_if<dsl::Performed>(&*turn.signal))
                performed_vars.insert(pf->var);
            if (const auto* qr = std::get_if<dsl::QueryResult>(&*turn.signal))
                performed_vars.insert(qr->var);
        }
        if (turn.kind != agents::TurnKind::system) continue;

        // (c) hints must never be predicted as system commands
        for (const auto& cmd : turn.commands)
            if (std::holds_alternative<dsl::HintCall>(cmd))
                verdict.merge(Verdict::fail("hint_in_system_turn",
                                            "system turn predicts a hint", i));

        // the user turn this labelling responds to
        const agents::TurnRecord* user = nullptr;
        for (std::size_t k = i; k-- > 0;) {
            if (turns[k].kind == agents::TurnKind::user) {
                user = &turns[k];
                break;
            }
        }
        bool correction_token =
            user && (user->phenomenon == planner::PhenomenonKind::correction ||
                     user->phenomenon == planner::PhenomenonKind::in_turn_correction);

        for (const auto& cmd : turn.commands)
            if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd))
                intent_vars.push_back(ic->var);

        for (const auto& a : assignments_of(turn.commands)) {
            // (b) empty string slot values
            if (a.value.is_text() && trim(a.value.text_value()).empty())
                verdict.merge(Verdict::fail("empty_string_slot",
                                            "empty string value for slot '" + a.slot + "'",
                                            i));
            // (a) overwrite requires a correction token on the user turn
            if (provided.count({a.var, a.slot}) && !correction_token)
                verdict.merge(Verdict::fail(
                    "overwrite_without_correction",
                    "slot '" + a.slot + "' overwritten without a correction token", i));
            provided.insert({a.var, a.slot});
        }
    }

    // (d) every planned (or at least initiated) intent performs, cancels,
    // or was cut by an accepted salvage
    std::size_t expected =
        record.plan ? record.plan->intent_sequence.size() : intent_vars.size();
    std::size_t unperformed = 0;
    for (std::size_t p = 0; p < expected; ++p) {
        bool performed =
            p < intent_vars.size() && performed_vars.count(intent_vars[p]) > 0;
        if (!performed) ++unperformed;
    }
    if (unperformed > cancel_tokens && !record.salvaged)
        verdict.merge(Verdict::fail(
            "unperformed_intent",
            std::to_string(unperformed - cancel_tokens) +
                " intent(s) not performed and not covered by a cancellation signal",
            turns.empty() ? 0 : turns.size() - 1));
    return verdict;
}

Verdict validate_record(const dataset::ConversationRecord& record,
                        const schema::SchemaCatalog& catalog) {
    Verdict verdict = Verdict::pass();
    try {
        dataset::check_record_invariants(record);
    } catch (const Error& e) {
        verdict.merge(Verdict::fail("record_invariants", e.what(), 0));
        return verdict;  // structurally broken; further checks would mislead
    }

    const auto& turns = record.turns;

    // phenomenon-signal checks, with running context
    std::set<std::pair<int, std::string>> provided;
    std::vector<int> intent_vars;
    std::optional<std::string> requested_slot;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const auto& turn = turns[i];
        if (turn.kind == agents::TurnKind::signal && turn.signal) {
            if (const auto* ms = std::get_if<dsl::MissingSlots>(&*turn.signal))
                requested_slot = ms->slots.empty() ? std::optional<std::string>()
                                                   : std::optional(ms->slots.front());
        }
        if (turn.kind == agents::TurnKind::user && turn.phenomenon) {
            const std::vector<dsl::Command>* following = nullptr;
            for (std::size_t k = i + 1; k < turns.size(); ++k) {
                if (turns[k].kind == agents::TurnKind::system) {
                    following = &turns[k].commands;
                    break;
                }
            }
            if (!following) {
                verdict.merge(Verdict::fail("phenomenon_shape",
                                            "phenomenon turn has no following system turn",
                                            i));
                continue;
            }
            PhenomenonCheckContext context;
            context.prior_assignments = provided;
            context.requested_slot = requested_slot;
            context.intent_vars = intent_vars;
            context.plan = record.plan ? &*record.plan : nullptr;
            verdict.merge(phenomenon_signal_check(turn, *following, context, i));
        }
        if (turn.kind == agents::TurnKind::system) {
            for (const auto& cmd : turn.commands)
                if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd))
                    intent_vars.push_back(ic->var);
            for (const auto& a : assignments_of(turn.commands))
                provided.insert({a.var, a.slot});
        }
    }

    verdict.merge(post_filters(record));

    // back-end replay regression: recorded signal turns must reproduce
    if (record.plan) {
        backend::BackendSession session(catalog, planner::make_entity_store(*record.plan));
        std::size_t replay_failures = 0;
        for (std::size_t i = 0; i < turns.size() && replay_failures == 0; ++i) {
            if (turns[i].kind != agents::TurnKind::system) continue;
            if (say_only(turns[i].commands)) continue;
            std::optional<dsl::SignalPayload> signal;
            try {
                for (const auto& cmd : turns[i].commands) {
                    if (std::holds_alternative<dsl::Say>(cmd)) continue;
                    auto s = session.apply_command(cmd);
                    if (s) signal = std::move(s);
                }
            } catch (const Error& e) {
                verdict.merge(Verdict::fail("replay_error", e.what(), i));
                ++replay_failures;
                break;
            }
            const agents::TurnRecord* next_signal =
                i + 1 < turns.size() && turns[i + 1].kind == agents::TurnKind::signal
                    ? &turns[i + 1]
                    : nullptr;
            if (!next_signal || !signal || !(*next_signal->signal == *signal)) {
                verdict.merge(Verdict::fail("replay_mismatch",
                                            "replayed signal differs from the recorded one",
                                            i));
                ++replay_failures;
            }
        }
    }
    return verdict;
}

std::optional<dataset::ConversationRecord> salvage(const agents::AbortedConversation& aborted,
                                                   const planner::ConversationPlan& plan,
                                                   LLMProvider& provider, double temperature,
                                                   std::uint64_t seed,
                                                   const prompts::PromptLibrary& lib) {
    const auto& prefix = aborted.prefix();
    std::size_t performed = 0;
    for (const auto& turn : prefix) {
        if (turn.kind != agents::TurnKind::signal || !turn.signal) continue;
        if (std::holds_alternative<dsl::Performed>(*turn.signal) ||
            std::holds_alternative<dsl::QueryResult>(*turn.signal))
            ++performed;
    }
    if (performed < 1 && prefix.size() < 10) return std::nullopt;

    // Cut back to the last complete exchange and replace its response with
    // a closing that justifies the interruption.
    std::size_t last_response = prefix.size();
    for (std::size_t i = prefix.size(); i-- > 0;) {
        if (prefix[i].kind == agents::TurnKind::response) {
            last_response = i;
            break;
        }
    }
    if (last_response == prefix.size()) return std::nullopt;

    std::vector<agents::TurnRecord> turns(prefix.begin(), prefix.begin() + last_response);
    std::string closing;
    try {
        std::string prompt =
            lib.render("salvage", {{"history", agents::render_history(turns, false)}});
        closing = trim(provider.complete(prompt, temperature, derive_seed(seed, 99)));
    } catch (const ProviderError&) {
        return std::nullopt;
    }
    if (closing.empty()) return std::nullopt;

    agents::TurnRecord closing_turn;
    closing_turn.kind = agents::TurnKind::response;
    closing_turn.text = closing;
    turns.push_back(std::move(closing_turn));

    dataset::ConversationRecord record;
    record.turns = std::move(turns);
    record.plan = plan;
    record.seed = plan.seed;
    record.salvaged = true;
    for (const auto& turn : record.turns)
        if (turn.kind == agents::TurnKind::user && turn.phenomenon)
            record.phenomena.push_back(*turn.phenomenon);
    return record;
}

void write_verdict_log(const std::vector<std::pair<std::string, Verdict>>& entries,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open verdict log for writing: " + path);
    for (const auto& [id, verdict] : entries) {
        ordered_json j;
        j["conversation_id"] = id;
        j["passed"] = verdict.passed;
        ordered_json reasons = ordered_json::array();
        for (const auto& reason : verdict.reasons) {
            ordered_json r;
            r["check"] = reason.check;
            r["detail"] = reason.detail;
            r["turn"] = reason.turn;
            reasons.push_back(std::move(r));
        }
        j["reasons"] = std::move(reasons);
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing verdict log: " + path);
}

}  // namespace convgen::validation
