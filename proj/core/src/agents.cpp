#include "convgen/agents.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "convgen/rng.hpp"

namespace convgen::agents {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string collapse_ws(const std::string& s) {
    std::string out;
    bool in_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(c);
    }
    return out;
}

const std::string& last_user_text(const std::vector<TurnRecord>& turns) {
    for (auto it = turns.rbegin(); it != turns.rend(); ++it)
        if (it->kind == TurnKind::user) return it->text;
    throw PreconditionError("history has no user turn");
}

// State reconstructed from history for phenomenon due-ness checks.
struct HistoryScan {
    std::vector<int> intent_vars;  // var of the n-th intent call
    std::optional<dsl::SignalPayload> last_signal;
    std::set<std::string> fired_tokens;
    std::set<std::pair<int, std::string>> provided;
};

HistoryScan scan_history(const std::vector<TurnRecord>& turns) {
    HistoryScan scan;
    for (const auto& turn : turns) {
        if (turn.kind == TurnKind::user && turn.phenomenon)
            scan.fired_tokens.insert(planner::phenomenon_token(*turn.phenomenon));
        if (turn.kind == TurnKind::signal && turn.signal) scan.last_signal = turn.signal;
        if (turn.kind != TurnKind::system) continue;
        for (const auto& cmd : turn.commands) {
            if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd)) {
                scan.intent_vars.push_back(ic->var);
                for (const auto& [slot, value] : ic->args)
                    scan.provided.insert({ic->var, slot});
            } else if (const auto* aa = std::get_if<dsl::AttrAssign>(&cmd)) {
                scan.provided.insert({aa->var, aa->slot});
            }
        }
    }
    return scan;
}

// The first unfired phenomenon whose trigger condition holds right now.
std::optional<planner::PhenomenonRuleFields> due_phenomenon(
    const planner::ConversationRules& rules, const HistoryScan& scan) {
    for (const auto& rule : rules.rules) {
        auto fields = planner::parse_phenomenon_rule(rule);
        if (!fields) continue;
        if (scan.fired_tokens.count(fields->token)) continue;
        if (fields->intent >= scan.intent_vars.size()) continue;
        int var = scan.intent_vars[fields->intent];
        switch (fields->trigger) {
            case planner::TriggerHint::on_confirmation_request: {
                if (!scan.last_signal) break;
                const auto* cr = std::get_if<dsl::ConfirmationRequired>(&*scan.last_signal);
                if (cr && cr->var == var) return fields;
                break;
            }
            case planner::TriggerHint::on_slot_request: {
                if (!scan.last_signal || !fields->slot) break;
                const auto* ms = std::get_if<dsl::MissingSlots>(&*scan.last_signal);
                if (ms && ms->var == var && !ms->slots.empty() &&
                    ms->slots.front() == *fields->slot)
                    return fields;
                break;
            }
            case planner::TriggerHint::anywhere: {
                if (fields->slot && scan.provided.count({var, *fields->slot})) return fields;
                break;
            }
        }
    }
    return std::nullopt;
}

// Finds any known phenomenon token in the reply; strips it and reports it.
std::pair<std::string, std::optional<planner::PhenomenonKind>> strip_token(
    const std::string& reply) {
    for (planner::PhenomenonKind kind : planner::all_phenomena()) {
        const std::string token = planner::phenomenon_token(kind);
        auto pos = reply.find(token);
        if (pos == std::string::npos) continue;
        std::string text = reply.substr(0, pos) + reply.substr(pos + token.size());
        return {collapse_ws(trim(text)), kind};
    }
    return {collapse_ws(trim(reply)), std::nullopt};
}

bool is_say_only(const std::vector<dsl::Command>& cmds) {
    return std::all_of(cmds.begin(), cmds.end(), [](const dsl::Command& c) {
        return std::holds_alternative<dsl::Say>(c);
    });
}

bool value_has_literal_text(const dsl::Value& v) {
    if (v.is_text()) return true;
    if (v.is_list())
        for (const auto& item : v.list_value())
            if (value_has_literal_text(item)) return true;
    return false;
}

// Stage-10 contract: string slot values must be <STR>, never literals.
bool has_literal_text(const std::vector<dsl::Command>& cmds) {
    for (const auto& cmd : cmds) {
        if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd)) {
            for (const auto& [k, v] : ic->args)
                if (value_has_literal_text(v)) return true;
        } else if (const auto* aa = std::get_if<dsl::AttrAssign>(&cmd)) {
            if (value_has_literal_text(aa->value)) return true;
        } else if (const auto* say = std::get_if<dsl::Say>(&cmd)) {
            for (const auto& [k, v] : say->args)
                if (value_has_literal_text(v)) return true;
        }
    }
    return false;
}

std::vector<dsl::Command> parse_label_reply(const std::string& reply) {
    std::vector<dsl::Command> cmds;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        try {
            cmds.push_back(dsl::parse_command(line));
        } catch (const SyntaxError& e) {
            throw ParseError(std::string("unparseable system command: ") + e.what());
        }
    }
    if (cmds.empty()) throw ParseError("labelling reply contains no commands");
    if (has_literal_text(cmds))
        throw ParseError("labelling reply contains a literal string value instead of <STR>");
    return cmds;
}

}  // namespace

std::string to_string(TurnKind k) {
    switch (k) {
        case TurnKind::user: return "user";
        case TurnKind::system: return "system";
        case TurnKind::signal: return "signal";
        case TurnKind::response: return "response";
    }
    return "user";
}

std::optional<TurnKind> turn_kind_from_string(const std::string& s) {
    if (s == "user") return TurnKind::user;
    if (s == "system") return TurnKind::system;
    if (s == "signal") return TurnKind::signal;
    if (s == "response") return TurnKind::response;
    return std::nullopt;
}

std::string to_string(AbortReason r) {
    switch (r) {
        case AbortReason::provider_failure: return "provider_failure";
        case AbortReason::parse_failure: return "parse_failure";
        case AbortReason::span_violation: return "span_violation";
        case AbortReason::missing_token: return "missing_token";
        case AbortReason::turn_limit: return "turn_limit";
        case AbortReason::validation_failed: return "validation_failed";
        case AbortReason::backend_error: return "backend_error";
    }
    return "provider_failure";
}

void check_turn_grammar(const std::vector<TurnRecord>& turns) {
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const TurnRecord& turn = turns[i];
        switch (turn.kind) {
            case TurnKind::user:
                if (turn.text.empty())
                    throw PreconditionError("user turn " + std::to_string(i) + " has no text");
                break;
            case TurnKind::system:
                if (turn.commands.empty())
                    throw PreconditionError("system turn " + std::to_string(i) +
                                            " has no commands");
                break;
            case TurnKind::signal:
                if (!turn.signal)
                    throw PreconditionError("signal turn " + std::to_string(i) +
                                            " has no payload");
                break;
            case TurnKind::response:
                if (turn.text.empty())
                    throw PreconditionError("response turn " + std::to_string(i) +
                                            " has no text");
                break;
        }
        if (i == 0) {
            if (turn.kind != TurnKind::user)
                throw PreconditionError("conversations must start with a user turn");
            continue;
        }
        TurnKind prev = turns[i - 1].kind;
        bool ok = false;
        switch (turn.kind) {
            case TurnKind::user: ok = prev == TurnKind::response; break;
            case TurnKind::system: ok = prev == TurnKind::user || prev == TurnKind::signal; break;
            case TurnKind::signal: ok = prev == TurnKind::system; break;
            case TurnKind::response: ok = prev == TurnKind::system; break;
        }
        if (!ok)
            throw PreconditionError("turn " + std::to_string(i) + " (" + to_string(turn.kind) +
                                    ") cannot follow " + to_string(prev));
    }
}

std::string render_history(const std::vector<TurnRecord>& turns, bool include_tokens) {
    std::string out;
    for (const auto& turn : turns) {
        switch (turn.kind) {
            case TurnKind::user:
                out += "user: " + turn.text;
                if (include_tokens && turn.phenomenon)
                    out += " " + planner::phenomenon_token(*turn.phenomenon);
                out += "\n";
                break;
            case TurnKind::system:
                for (const auto& cmd : turn.commands)
                    out += "system: " + dsl::serialize_command(cmd) + "\n";
                break;
            case TurnKind::signal:
                out += dsl::serialize_signal(*turn.signal) + "\n";
                break;
            case TurnKind::response:
                out += "response: " + turn.text + "\n";
                break;
        }
    }
    return out.empty() ? "(conversation start)\n" : out;
}

std::string render_rules(const planner::ConversationRules& rules) {
    std::string out;
    for (const auto& rule : rules.rules) {
        out += "RULE[" + rule.scope + "]";
        if (rule.token) out += " token=" + *rule.token;
        out += ": " + rule.instruction + "\n";
    }
    return out;
}

std::string render_tools(const schema::SchemaCatalog& catalog) {
    std::string out;
    for (const auto& intent : catalog.intents) out += schema::render_prompt_block(intent);
    return out;
}

std::string build_label_prompt(const std::vector<TurnRecord>& history,
                               const schema::SchemaCatalog& catalog,
                               const prompts::PromptLibrary& lib) {
    return lib.render("stage10", {{"tools", render_tools(catalog)},
                                  {"history", render_history(history, false)}});
}

TurnRecord user_turn(const planner::ConversationRules& rules,
                     const std::vector<TurnRecord>& history, LLMProvider& provider,
                     const Limits& limits, std::uint64_t seed,
                     const prompts::PromptLibrary& lib) {
    check_turn_grammar(history);
    HistoryScan scan = scan_history(history);
    auto due = due_phenomenon(rules, scan);

    std::string prompt = lib.render("stage09", {{"rules", render_rules(rules)},
                                                {"history", render_history(history, true)}});
    std::string last_error = "empty user reply";
    for (int attempt = 0; attempt <= limits.retries; ++attempt) {
        std::string reply = provider.complete(prompt, limits.temperature,
                                              derive_seed(seed, attempt));
        auto [text, kind] = strip_token(reply);
        if (text.empty()) {
            last_error = "empty user reply";
            continue;
        }
        if (due && (!kind || planner::phenomenon_token(*kind) != due->token)) {
            last_error = "phenomenon " + planner::to_string(due->kind) +
                         " is due but its token " + due->token + " is missing";
            continue;
        }
        TurnRecord turn;
        turn.kind = TurnKind::user;
        turn.text = std::move(text);
        turn.phenomenon = kind;
        return turn;
    }
    if (due) throw MissingToken(last_error);
    throw ParseError(last_error);
}

std::vector<dsl::Command> system_label(const std::vector<TurnRecord>& history,
                                       const schema::SchemaCatalog& catalog,
                                       LLMProvider& provider, const Limits& limits,
                                       std::uint64_t seed,
                                       const prompts::PromptLibrary& lib) {
    if (history.empty() ||
        (history.back().kind != TurnKind::user && history.back().kind != TurnKind::signal))
        throw PreconditionError("system labelling requires a trailing user or signal turn");
    std::string prompt = build_label_prompt(history, catalog, lib);
    std::string last_error;
    for (int attempt = 0; attempt <= limits.retries; ++attempt) {
        std::string reply = provider.complete(prompt, limits.temperature,
                                              derive_seed(seed, attempt));
        try {
            return parse_label_reply(reply);
        } catch (const ParseError& e) {
            last_error = e.what();
        }
    }
    throw ParseError("stage-10 labelling failed: " + last_error);
}

namespace {

// Structural equality up to placeholder substitution; returns the failure
// detail or nullopt when `filled` is `original` with spans filled in.
std::optional<std::string> check_filled(const std::vector<dsl::Command>& original,
                                        const std::vector<dsl::Command>& filled,
                                        const std::string& user_text) {
    if (original.size() != filled.size()) return "command count changed";
    const std::string normalized_user = collapse_ws(user_text);

    auto check_value = [&](const dsl::Value& before,
                           const dsl::Value& after) -> std::optional<std::string> {
        if (before.is_placeholder()) {
            if (!after.is_text()) return "placeholder filled with a non-string value";
            std::string span = collapse_ws(after.text_value());
            if (span.empty()) return "placeholder filled with an empty string";
            if (normalized_user.find(span) == std::string::npos)
                return "value '" + after.text_value() + "' is not a span of the user text";
            return std::nullopt;
        }
        if (!(before == after)) return "non-placeholder value was changed";
        return std::nullopt;
    };

    for (std::size_t i = 0; i < original.size(); ++i) {
        const auto& a = original[i];
        const auto& b = filled[i];
        if (a.index() != b.index()) return "command kind changed";
        if (const auto* ia = std::get_if<dsl::IntentCall>(&a)) {
            const auto* ib = std::get_if<dsl::IntentCall>(&b);
            if (ia->var != ib->var || ia->intent != ib->intent ||
                ia->args.size() != ib->args.size())
                return "intent call structure changed";
            for (std::size_t k = 0; k < ia->args.size(); ++k) {
                if (ia->args[k].first != ib->args[k].first) return "argument name changed";
                if (auto err = check_value(ia->args[k].second, ib->args[k].second)) return err;
            }
        } else if (const auto* aa = std::get_if<dsl::AttrAssign>(&a)) {
            const auto* ab = std::get_if<dsl::AttrAssign>(&b);
            if (aa->var != ab->var || aa->slot != ab->slot)
                return "assignment structure changed";
            if (auto err = check_value(aa->value, ab->value)) return err;
        } else if (const auto* sa = std::get_if<dsl::Say>(&a)) {
            const auto* sb = std::get_if<dsl::Say>(&b);
            if (sa->args.size() != sb->args.size()) return "say structure changed";
            for (std::size_t k = 0; k < sa->args.size(); ++k) {
                if (sa->args[k].first != sb->args[k].first) return "argument name changed";
                if (auto err = check_value(sa->args[k].second, sb->args[k].second)) return err;
            }
        } else if (!(a == b)) {
            return "command changed";
        }
    }
    return std::nullopt;
}

}  // namespace

std::vector<dsl::Command> extract_string_slots(const std::vector<dsl::Command>& commands,
                                               const std::string& user_text,
                                               LLMProvider& provider, const Limits& limits,
                                               std::uint64_t seed,
                                               const prompts::PromptLibrary& lib) {
    if (!dsl::contains_placeholder(commands))
        throw PreconditionError("extract_string_slots requires at least one <STR>");
    std::string rendered;
    for (const auto& cmd : commands) rendered += dsl::serialize_command(cmd) + "\n";
    std::string prompt = lib.render(
        "stage11", {{"user_text", user_text}, {"commands", rendered}});

    std::string last_error;
    // One re-ask on violation, then the conversation is aborted.
    for (int attempt = 0; attempt <= 1; ++attempt) {
        std::string reply = provider.complete(prompt, limits.temperature,
                                              derive_seed(seed, attempt));
        std::vector<dsl::Command> filled;
        try {
            std::istringstream in(reply);
            std::string line;
            while (std::getline(in, line)) {
                line = trim(line);
                if (!line.empty()) filled.push_back(dsl::parse_command(line));
            }
        } catch (const SyntaxError& e) {
            last_error = std::string("unparseable filled command: ") + e.what();
            continue;
        }
        auto err = check_filled(commands, filled, user_text);
        if (!err && dsl::contains_placeholder(filled)) err = "a placeholder was left unfilled";
        if (!err) return filled;
        last_error = *err;
    }
    throw SpanViolation("stage-11 extraction failed: " + last_error);
}

TurnRecord respond(const std::vector<TurnRecord>& history,
                   const std::optional<dsl::SignalPayload>& last_signal,
                   LLMProvider& provider, const Limits& limits, std::uint64_t seed,
                   const prompts::PromptLibrary& lib) {
    if (history.empty() || history.back().kind != TurnKind::system)
        throw PreconditionError("a response must follow a system turn");
    std::string signal_text = last_signal ? dsl::serialize_signal(*last_signal) : "none";
    std::string prompt = lib.render(
        "stage12",
        {{"history", render_history(history, false)}, {"signal", signal_text}});
    for (int attempt = 0; attempt <= limits.retries; ++attempt) {
        std::string reply = trim(provider.complete(prompt, limits.temperature,
                                                   derive_seed(seed, attempt)));
        if (reply.empty()) continue;
        TurnRecord turn;
        turn.kind = TurnKind::response;
        turn.text = collapse_ws(reply);
        return turn;
    }
    throw ParseError("response agent returned empty replies");
}

GeneratedConversation run_conversation(const planner::ConversationPlan& plan,
                                       const planner::ConversationRules& rules,
                                       const schema::SchemaCatalog& catalog,
                                       const AgentProviders& providers, const Limits& limits,
                                       std::uint64_t seed, const ValidationHook& hook,
                                       const prompts::PromptLibrary& lib) {
    backend::BackendSession session(catalog, planner::make_entity_store(plan));
    std::vector<TurnRecord> turns;
    std::vector<planner::PhenomenonKind> observed;
    std::vector<int> intent_vars;                       // nth intent call -> var
    std::vector<bool> resolved(plan.intent_sequence.size(), false);
    std::vector<bool> cancelled(plan.intent_sequence.size(), false);
    std::uint64_t call = 0;

    auto abort = [&](AbortReason reason, const std::string& detail) {
        throw AbortedConversation(reason, turns.size(), turns, detail);
    };

    auto resolve_var = [&](int var) {
        for (std::size_t p = 0; p < intent_vars.size(); ++p)
            if (intent_vars[p] == var && p < resolved.size()) resolved[p] = true;
    };

    auto all_resolved = [&] {
        for (std::size_t p = 0; p < resolved.size(); ++p)
            if (!resolved[p] && !cancelled[p]) return false;
        return true;
    };

    while (true) {
        if (static_cast<int>(turns.size()) >= limits.max_turns)
            abort(AbortReason::turn_limit, "max turn count reached");

        TurnRecord user;
        try {
            user = user_turn(rules, turns, *providers.user, limits, derive_seed(seed, ++call),
                             lib);
        } catch (const MissingToken& e) {
            abort(AbortReason::missing_token, e.what());
        } catch (const ProviderError& e) {
            abort(AbortReason::provider_failure, e.what());
        } catch (const ParseError& e) {
            abort(AbortReason::parse_failure, e.what());
        }
        turns.push_back(user);
        if (user.phenomenon) {
            observed.push_back(*user.phenomenon);
            if (*user.phenomenon == planner::PhenomenonKind::cancellation) {
                // Resolve the first in-progress intent a cancellation targets.
                for (const auto& ph : plan.phenomena) {
                    if (ph.kind != planner::PhenomenonKind::cancellation) continue;
                    std::size_t p = ph.target_intent;
                    if (p < intent_vars.size() && !resolved[p] && !cancelled[p]) {
                        cancelled[p] = true;
                        break;
                    }
                }
            }
        }

        // One or more system steps; the exchange ends with a say-only turn.
        std::optional<dsl::SignalPayload> exchange_signal;
        while (true) {
            if (static_cast<int>(turns.size()) >= limits.max_turns)
                abort(AbortReason::turn_limit, "max turn count reached");

            std::vector<dsl::Command> cmds;
            try {
                cmds = system_label(turns, catalog, *providers.system, limits,
                                    derive_seed(seed, ++call), lib);
            } catch (const ProviderError& e) {
                abort(AbortReason::provider_failure, e.what());
            } catch (const ParseError& e) {
                abort(AbortReason::parse_failure, e.what());
            }

            if (hook) {
                TurnRecord provisional;
                provisional.kind = TurnKind::system;
                provisional.commands = cmds;
                turns.push_back(provisional);
                std::optional<std::string> failure;
                try {
                    failure = hook(turns);
                } catch (const ProviderError& e) {
                    turns.pop_back();
                    abort(AbortReason::provider_failure, e.what());
                }
                turns.pop_back();
                if (failure) abort(AbortReason::validation_failed, *failure);
            }

            if (dsl::contains_placeholder(cmds)) {
                try {
                    cmds = extract_string_slots(cmds, last_user_text(turns),
                                                *providers.system, limits,
                                                derive_seed(seed, ++call), lib);
                } catch (const SpanViolation& e) {
                    abort(AbortReason::span_violation, e.what());
                } catch (const ProviderError& e) {
                    abort(AbortReason::provider_failure, e.what());
                }
            }

            TurnRecord system_turn;
            system_turn.kind = TurnKind::system;
            system_turn.commands = cmds;
            turns.push_back(system_turn);

            if (is_say_only(cmds)) break;

            std::optional<dsl::SignalPayload> signal;
            try {
                for (const auto& cmd : cmds) {
                    if (std::holds_alternative<dsl::Say>(cmd)) continue;
                    if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd))
                        intent_vars.push_back(ic->var);
                    auto s = session.apply_command(cmd);
                    if (s) signal = std::move(s);
                }
            } catch (const Error& e) {
                abort(AbortReason::backend_error, e.what());
            }
            if (!signal) abort(AbortReason::backend_error, "commands produced no signal");

            if (const auto* pf = std::get_if<dsl::Performed>(&*signal)) resolve_var(pf->var);
            if (const auto* qr = std::get_if<dsl::QueryResult>(&*signal)) resolve_var(qr->var);

            TurnRecord signal_turn;
            signal_turn.kind = TurnKind::signal;
            signal_turn.signal = signal;
            turns.push_back(signal_turn);
            exchange_signal = std::move(signal);
        }

        TurnRecord response;
        try {
            response = respond(turns, exchange_signal, *providers.response, limits,
                               derive_seed(seed, ++call), lib);
        } catch (const ProviderError& e) {
            abort(AbortReason::provider_failure, e.what());
        } catch (const ParseError& e) {
            abort(AbortReason::parse_failure, e.what());
        }
        turns.push_back(response);

        if (all_resolved()) break;
    }

    for (std::size_t p = 0; p < cancelled.size(); ++p)
        if (cancelled[p] && p < intent_vars.size()) session.mark_cancelled(intent_vars[p]);

    check_turn_grammar(turns);
    return GeneratedConversation{std::move(turns), std::move(observed)};
}

}  // namespace convgen::agents
