#include "convgen/simulated_provider.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "convgen/command_dsl.hpp"
#include "convgen/errors.hpp"
#include "convgen/planner.hpp"
#include "convgen/rng.hpp"
#include "convgen/schema.hpp"

namespace convgen {

namespace {

// ---------------------------------------------------------------- helpers

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string spaced(std::string name) {
    std::replace(name.begin(), name.end(), '_', ' ');
    return name;
}

std::string plain(const dsl::Value& v) {
    if (v.is_text()) return v.text_value();
    if (v.is_boolean()) return v.boolean_value() ? "true" : "false";
    return dsl::serialize_value(v);
}

std::size_t pick(std::uint64_t seed, const std::string& salt, std::size_t n) {
    return static_cast<std::size_t>(mix64(seed ^ fnv1a64(salt)) % n);
}

// ------------------------------------------------------------ prompt view

struct PromptView {
    std::string stage;
    std::map<std::string, std::string> sections;
    std::map<std::string, std::string> fields;  // PRIMARY, COUNT, NEXT, SIGNAL, ...

    const std::string& section(const std::string& name) const {
        static const std::string kEmpty;
        auto it = sections.find(name);
        return it == sections.end() ? kEmpty : it->second;
    }
    std::string field(const std::string& name) const {
        auto it = fields.find(name);
        return it == fields.end() ? std::string() : it->second;
    }
};

PromptView parse_prompt(const std::string& prompt) {
    PromptView view;
    std::istringstream in(prompt);
    std::string line;
    std::string current;
    bool first_line = true;
    while (std::getline(in, line)) {
        if (first_line) {
            first_line = false;
            if (line.rfind("STAGE:", 0) == 0) {
                view.stage = trim(line.substr(6));
                continue;
            }
        }
        if (line.rfind("== ", 0) == 0 && line.find(" ==") != std::string::npos) {
            current = trim(line.substr(3, line.find(" ==") - 3));
            continue;
        }
        for (const char* key : {"PRIMARY", "COUNT", "NEXT", "SIGNAL", "REASON"}) {
            std::string prefix = std::string(key) + ":";
            if (line.rfind(prefix, 0) == 0) view.fields[key] = trim(line.substr(prefix.size()));
        }
        if (!current.empty()) view.sections[current] += line + "\n";
    }
    return view;
}

// ------------------------------------------------------------- tool table

struct SimSlot {
    std::string name;
    schema::SlotType type = schema::SlotType::text;
    bool mandatory = false;
    std::vector<std::string> allowed;
};

struct SimTool {
    std::string name;
    bool query = false;
    std::string entity;
    bool confirm = true;
    std::vector<SimSlot> slots;

    const SimSlot* slot(const std::string& slot_name) const {
        for (const auto& s : slots)
            if (s.name == slot_name) return &s;
        return nullptr;
    }
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<SimTool> parse_tools(const std::string& section) {
    std::vector<SimTool> tools;
    std::istringstream in(section);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.rfind("TOOL:", 0) == 0) {
            auto fields = split(line.substr(5), '|');
            SimTool tool;
            tool.name = trim(fields[0]);
            for (const auto& raw : fields) {
                std::string f = trim(raw);
                if (f == "query") tool.query = true;
                if (f.rfind("entity=", 0) == 0) tool.entity = f.substr(7);
                if (f.rfind("confirm=", 0) == 0) tool.confirm = f.substr(8) == "true";
            }
            tools.push_back(std::move(tool));
        } else if (line.rfind("SLOT:", 0) == 0 && !tools.empty()) {
            auto fields = split(trim(line.substr(5)), '|');
            if (fields.size() < 3) continue;
            SimSlot slot;
            slot.name = trim(fields[0]);
            if (auto t = schema::slot_type_from_string(trim(fields[1]))) slot.type = *t;
            slot.mandatory = trim(fields[2]) == "mandatory";
            if (fields.size() >= 4)
                for (const auto& v : split(fields[3], ','))
                    if (!trim(v).empty()) slot.allowed.push_back(trim(v));
            tools.back().slots.push_back(std::move(slot));
        }
    }
    return tools;
}

// --------------------------------------------------------- history replay

struct SimHistory {
    std::vector<std::pair<int, std::string>> intent_calls;  // var, tool name
    std::set<std::pair<int, std::string>> provided;
    std::vector<dsl::SignalPayload> signals;
    std::set<std::string> fired_tokens;
    std::string last_line_kind;  // "user" | "signal" | other
    std::string last_user_text;
    std::size_t resolved = 0;  // performed + query results + cancel tokens
};

SimHistory parse_history(const std::string& section) {
    SimHistory h;
    std::istringstream in(section);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line == "(conversation start)") continue;
        if (line.rfind("user:", 0) == 0) {
            std::string text = trim(line.substr(5));
            for (planner::PhenomenonKind kind : planner::all_phenomena()) {
                const std::string token = planner::phenomenon_token(kind);
                auto pos = text.find(token);
                if (pos != std::string::npos) {
                    h.fired_tokens.insert(token);
                    if (kind == planner::PhenomenonKind::cancellation) ++h.resolved;
                    text = trim(text.substr(0, pos) + text.substr(pos + token.size()));
                }
            }
            h.last_user_text = text;
            h.last_line_kind = "user";
        } else if (line.rfind("system:", 0) == 0) {
            try {
                dsl::Command cmd = dsl::parse_command(trim(line.substr(7)));
                if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd)) {
                    h.intent_calls.emplace_back(ic->var, ic->intent);
                    for (const auto& [slot, value] : ic->args)
                        h.provided.insert({ic->var, slot});
                } else if (const auto* aa = std::get_if<dsl::AttrAssign>(&cmd)) {
                    h.provided.insert({aa->var, aa->slot});
                }
            } catch (const SyntaxError&) {
                // foreign commands in scripted histories are ignorable
            }
            h.last_line_kind = "system";
        } else if (line.rfind("signal:", 0) == 0) {
            try {
                auto sig = dsl::parse_signal(line);
                if (std::holds_alternative<dsl::Performed>(sig) ||
                    std::holds_alternative<dsl::QueryResult>(sig))
                    ++h.resolved;
                h.signals.push_back(std::move(sig));
            } catch (const SyntaxError&) {
            }
            h.last_line_kind = "signal";
        } else if (line.rfind("response:", 0) == 0) {
            h.last_line_kind = "response";
        }
    }
    return h;
}

// Most recent confirmation request whose variable has not performed since.
std::optional<int> pending_confirm_var(const SimHistory& h) {
    std::optional<int> pending;
    std::set<int> performed;
    for (const auto& sig : h.signals) {
        if (const auto* cr = std::get_if<dsl::ConfirmationRequired>(&sig)) pending = cr->var;
        if (const auto* pf = std::get_if<dsl::Performed>(&sig)) performed.insert(pf->var);
    }
    if (pending && !performed.count(*pending)) return pending;
    return std::nullopt;
}

// Most recent unresolved slot request.
std::optional<dsl::MissingSlots> pending_missing(const SimHistory& h) {
    for (auto it = h.signals.rbegin(); it != h.signals.rend(); ++it) {
        if (const auto* ms = std::get_if<dsl::MissingSlots>(&*it)) {
            // resolved once the slot later shows up as provided
            if (!ms->slots.empty() &&
                h.provided.count({ms->var, ms->slots.front()}))
                return std::nullopt;
            return *ms;
        }
        if (std::holds_alternative<dsl::ConfirmationRequired>(*it) ||
            std::holds_alternative<dsl::Performed>(*it) ||
            std::holds_alternative<dsl::QueryResult>(*it))
            return std::nullopt;
    }
    return std::nullopt;
}

// ----------------------------------------------------------- rules replay

struct SimRules {
    std::vector<planner::IntentRuleFields> intents;    // by index
    std::vector<planner::PhenomenonRuleFields> phenomena;
};

SimRules parse_rules(const std::string& section) {
    SimRules rules;
    std::istringstream in(section);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.rfind("RULE[", 0) != 0) continue;
        auto close = line.find(']');
        if (close == std::string::npos) continue;
        std::string scope = line.substr(5, close - 5);
        std::string rest = line.substr(close + 1);
        std::optional<std::string> token;
        if (rest.rfind(" token=", 0) == 0) {
            auto colon = rest.find(": ");
            if (colon == std::string::npos) continue;
            token = rest.substr(7, colon - 7);
            rest = rest.substr(colon + 2);
        } else if (rest.rfind(": ", 0) == 0) {
            rest = rest.substr(2);
        }
        planner::Rule rule;
        rule.scope = scope;
        rule.instruction = rest;
        rule.token = token;
        if (scope.rfind("phenomenon:", 0) == 0)
            rule.marker = planner::phenomenon_from_string(scope.substr(11));
        if (auto intent = planner::parse_intent_rule(rule)) {
            if (rules.intents.size() <= intent->index) rules.intents.resize(intent->index + 1);
            rules.intents[intent->index] = *intent;
        } else if (auto ph = planner::parse_phenomenon_rule(rule)) {
            rules.phenomena.push_back(*ph);
        }
    }
    return rules;
}

// ------------------------------------------------------ clause extraction

// Finds the value span of "the <slot words> is|are <value>" or of a
// correction clause. Returns the span exactly as it appears in `text`.
std::optional<std::string> find_clause(const std::string& text, const std::string& slot_name) {
    const std::string text_lower = lower(text);
    const std::string words = spaced(lower(slot_name));

    auto clause_end = [&](std::size_t from) {
        std::size_t end = text.size();
        for (const char* sep : {". ", "? ", "! "}) {
            auto p = text.find(sep, from);
            if (p != std::string::npos) end = std::min(end, p);
        }
        return end;
    };
    auto finish = [&](std::size_t from) -> std::optional<std::string> {
        std::size_t end = clause_end(from);
        std::string value = text.substr(from, end - from);
        value = trim(value);
        while (!value.empty() && (value.back() == '.' || value.back() == '?' ||
                                  value.back() == '!' || value.back() == ','))
            value.pop_back();
        value = trim(value);
        if (value.empty()) return std::nullopt;
        return value;
    };

    // correction: "change the <slot> to X[, no wait, make that Y]"
    const std::string correction = "change the " + words + " to ";
    auto pos = text_lower.find(correction);
    if (pos != std::string::npos) {
        std::size_t from = pos + correction.size();
        const std::string rewrite = ", no wait, make that ";
        auto again = text_lower.find(rewrite, from);
        if (again != std::string::npos && again < clause_end(from))
            return finish(again + rewrite.size());
        return finish(from);
    }

    for (const char* verb : {" is ", " are "}) {
        const std::string pattern = "the " + words + verb;
        pos = text_lower.find(pattern);
        if (pos != std::string::npos) return finish(pos + pattern.size());
    }
    return std::nullopt;
}

// Typed value for a labelled slot: string slots stay placeholders until
// stage 11; others parse from the clause text.
std::optional<dsl::Value> typed_value(const SimSlot& slot, const std::string& clause) {
    switch (slot.type) {
        case schema::SlotType::text:
        case schema::SlotType::date_text:
        case schema::SlotType::time_text:
        case schema::SlotType::enum_text:
            return dsl::Value::placeholder();
        case schema::SlotType::integer: {
            try {
                std::size_t used = 0;
                long long v = std::stoll(clause, &used);
                if (used != clause.size()) return std::nullopt;
                return dsl::Value::integer(v);
            } catch (const std::exception&) {
                return std::nullopt;
            }
        }
        case schema::SlotType::number: {
            try {
                std::size_t used = 0;
                double v = std::stod(clause, &used);
                if (used != clause.size()) return std::nullopt;
                return dsl::Value::number(v);
            } catch (const std::exception&) {
                return std::nullopt;
            }
        }
        case schema::SlotType::boolean: {
            std::string v = lower(clause);
            if (v == "true" || v == "yes") return dsl::Value::boolean(true);
            if (v == "false" || v == "no") return dsl::Value::boolean(false);
            return std::nullopt;
        }
    }
    return std::nullopt;
}

// ------------------------------------------------------------ stage 1 & 2

const char* kStopwords[] = {"a", "an", "the", "to", "my", "for", "in", "with", "on", "of"};

bool is_stopword(const std::string& w) {
    for (const char* s : kStopwords)
        if (w == s) return true;
    return false;
}

std::vector<std::string> content_words(const std::string& text) {
    std::vector<std::string> words;
    std::string word;
    auto flush = [&] {
        if (!word.empty() && !is_stopword(word)) words.push_back(word);
        word.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        else
            flush();
    }
    flush();
    return words;
}

std::string stage1(const PromptView& view) {
    std::string description = trim(view.section("DESCRIPTION"));
    auto words = content_words(description);
    if (words.empty()) words.push_back("task");
    std::string intent_name;
    for (const auto& w : words) intent_name += (intent_name.empty() ? "" : "_") + w;
    std::string key = words.back();
    std::string entity = key.back() == 's' ? key : key + "s";

    std::string out;
    out += "INTENT: " + intent_name + "\n";
    out += "DOMAIN: general\n";
    out += "SLOT: " + key + "_name|text|mandatory\n";
    out += "SLOT: scheduled_date|date_text|mandatory\n";
    out += "SLOT: notes|text|optional\n";
    out += "ENTITY: " + entity + "\n";
    out += "CONFIRM: true\n";
    return out;
}

std::string stage2(const PromptView& view) {
    auto tools = parse_tools(view.section("SCHEMA"));
    if (tools.empty()) return "";
    const SimTool& tool = tools.front();

    static const char* kAdjectives[] = {"grand",  "sunny",  "quiet",   "golden",
                                        "coastal", "modern", "classic", "amber"};
    static const char* kNouns[] = {"plaza",  "harbor", "garden",  "meadow",
                                   "summit", "corner", "terrace", "junction"};
    static const char* kDates[] = {"5th of March",     "12th of June", "28th of September",
                                   "3rd of January",   "19th of July", "31st of October"};
    static const char* kTimes[] = {"7am", "9:30am", "noon", "4:15pm", "6:30pm", "8pm"};
    static const char* kNumbers[] = {"4.5", "2.0", "7.25", "3.75", "9.5", "1.5"};

    std::string out;
    for (const auto& slot : tool.slots) {
        std::uint64_t h = fnv1a64(tool.name + "." + slot.name);
        for (int k = 0; k < 3; ++k) {
            std::string value;
            switch (slot.type) {
                case schema::SlotType::text:
                    value = std::string(kAdjectives[(h + k) % 8]) + " " +
                            kNouns[(h / 8 + 2 * k) % 8];
                    break;
                case schema::SlotType::date_text:
                    value = kDates[(h + k) % 6];
                    break;
                case schema::SlotType::time_text:
                    value = kTimes[(h + k) % 6];
                    break;
                case schema::SlotType::integer:
                    value = std::to_string(static_cast<int>(h % 5) + 1 + 2 * k);
                    break;
                case schema::SlotType::number:
                    value = kNumbers[(h + k) % 6];
                    break;
                case schema::SlotType::boolean:
                    value = k % 2 == 0 ? "true" : "false";
                    break;
                case schema::SlotType::enum_text:
                    if (slot.allowed.empty()) continue;
                    value = slot.allowed[(h + k) % slot.allowed.size()];
                    break;
            }
            out += "VALUE: " + slot.name + "|" + value + "\n";
        }
    }
    return out;
}

// -------------------------------------------------------------- stage 3-8

std::string stage3(const PromptView& view) {
    std::string primary = view.field("PRIMARY");
    int count = 1;
    try {
        count = std::stoi(view.field("COUNT"));
    } catch (const std::exception&) {
    }
    std::vector<std::string> names;
    std::istringstream in(view.section("CANDIDATES"));
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.rfind("INTENT:", 0) != 0) continue;
        names.push_back(trim(split(line.substr(7), '|')[0]));
    }
    std::string out = "SEQUENCE: " + primary;
    int taken = 1;
    for (const auto& name : names) {
        if (taken >= count) break;
        if (name == primary) continue;
        out += ", " + name;
        ++taken;
    }
    return out + "\n";
}

// Stages 4 and 7 accept the values as given; stage 6 picks from the pool.
std::string stage4(const PromptView& view) {
    std::string out;
    std::istringstream in(view.section("VALUES"));
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.rfind("VALUE:", 0) == 0) out += line + "\n";
    }
    return out;
}

std::string stage5(const PromptView& view) {
    std::string next = view.field("NEXT");
    return "Now that this is sorted, I also need to " + spaced(next) +
           " before I forget.\n";
}

std::string stage6(const PromptView& view, std::uint64_t seed) {
    std::map<std::string, std::vector<std::string>> candidates;
    std::vector<std::string> order;
    std::istringstream in(view.section("CANDIDATES"));
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.rfind("VALUE:", 0) != 0) continue;
        std::string rest = trim(line.substr(6));
        auto bar = rest.find('|');
        if (bar == std::string::npos) continue;
        std::string slot = trim(rest.substr(0, bar));
        if (!candidates.count(slot)) order.push_back(slot);
        candidates[slot].push_back(rest.substr(bar + 1));
    }
    std::string out;
    for (const auto& slot : order) {
        const auto& values = candidates[slot];
        out += "VALUE: " + slot + "|" + values[pick(seed, slot, values.size())] + "\n";
    }
    return out;
}

std::string stage8(const PromptView& view, std::uint64_t seed) {
    auto tools = parse_tools(view.section("SCHEMA"));
    if (tools.empty()) return "";
    const SimTool& tool = tools.front();
    int count = 1;
    try {
        count = std::stoi(view.field("COUNT"));
    } catch (const std::exception&) {
    }

    std::map<std::string, std::vector<std::string>> candidates;
    std::istringstream in(view.section("CANDIDATES"));
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.rfind("VALUE:", 0) != 0) continue;
        std::string rest = trim(line.substr(6));
        auto bar = rest.find('|');
        if (bar == std::string::npos) continue;
        candidates[trim(rest.substr(0, bar))].push_back(rest.substr(bar + 1));
    }

    std::string out;
    for (int e = 0; e < count; ++e) {
        nlohmann::ordered_json j = nlohmann::ordered_json::object();
        for (const auto& slot : tool.slots) {
            auto it = candidates.find(slot.name);
            std::string text;
            if (it != candidates.end() && !it->second.empty()) {
                text = it->second[(pick(seed, slot.name, 97) + e) % it->second.size()];
            } else {
                text = "entry " + std::to_string(e + 1);
            }
            switch (slot.type) {
                case schema::SlotType::integer:
                    try {
                        j[slot.name] = std::stoll(text);
                    } catch (const std::exception&) {
                        j[slot.name] = e + 1;
                    }
                    break;
                case schema::SlotType::number:
                    try {
                        j[slot.name] = std::stod(text);
                    } catch (const std::exception&) {
                        j[slot.name] = 1.0 + e;
                    }
                    break;
                case schema::SlotType::boolean:
                    j[slot.name] = lower(text) == "true";
                    break;
                default:
                    j[slot.name] = text;
            }
        }
        out += "ENTITY: " + j.dump() + "\n";
    }
    return out;
}

// -------------------------------------------------------- stage 9 (user)

std::string asr_prefix(const std::string& value) {
    std::size_t keep = std::max<std::size_t>(1, value.size() * 3 / 5);
    if (keep >= value.size()) keep = value.size() - 1;
    std::string out = trim(value.substr(0, keep));
    while (!out.empty() && out.size() >= value.size()) out.pop_back();
    return out.empty() ? value.substr(0, 1) : out;
}

struct UserState {
    SimRules rules;
    SimHistory history;
};

const planner::PhenomenonRuleFields* due_phenomenon(const UserState& st) {
    for (const auto& ph : st.rules.phenomena) {
        if (st.history.fired_tokens.count(ph.token)) continue;
        if (ph.intent >= st.history.intent_calls.size()) continue;
        int var = st.history.intent_calls[ph.intent].first;
        switch (ph.trigger) {
            case planner::TriggerHint::on_confirmation_request: {
                auto pending = pending_confirm_var(st.history);
                if (pending && *pending == var) return &ph;
                break;
            }
            case planner::TriggerHint::on_slot_request: {
                auto pending = pending_missing(st.history);
                if (pending && pending->var == var && ph.slot &&
                    !pending->slots.empty() && pending->slots.front() == *ph.slot)
                    return &ph;
                break;
            }
            case planner::TriggerHint::anywhere: {
                if (ph.slot && st.history.provided.count({var, *ph.slot})) return &ph;
                break;
            }
        }
    }
    return nullptr;
}

std::string stage9(const PromptView& view, std::uint64_t seed) {
    UserState st;
    st.rules = parse_rules(view.section("RULES"));
    st.history = parse_history(view.section("HISTORY"));

    const std::size_t introduced = st.history.intent_calls.size();
    const std::size_t resolved = st.history.resolved;
    const std::size_t total = st.rules.intents.size();

    auto value_of = [&](std::size_t intent_index,
                        const std::string& slot) -> std::optional<std::string> {
        if (intent_index >= st.rules.intents.size()) return std::nullopt;
        auto it = st.rules.intents[intent_index].values.find(slot);
        if (it == st.rules.intents[intent_index].values.end()) return std::nullopt;
        return plain(it->second);
    };

    // A pending correction means this slot is first given its decoy value;
    // the planned value arrives with the correction message later.
    auto spoken_value = [&](std::size_t intent_index,
                            const std::string& slot) -> std::optional<std::string> {
        for (const auto& ph : st.rules.phenomena) {
            bool corrective = ph.kind == planner::PhenomenonKind::correction ||
                              ph.kind == planner::PhenomenonKind::in_turn_correction;
            if (corrective && ph.intent == intent_index && ph.slot && *ph.slot == slot &&
                ph.decoy && !st.history.fired_tokens.count(ph.token))
                return plain(*ph.decoy);
        }
        return value_of(intent_index, slot);
    };

    // Corrections fire at the first user turn after the slot was provided.
    if (const auto* ph = due_phenomenon(st)) {
        if (ph->trigger == planner::TriggerHint::anywhere && ph->slot) {
            auto final_value = value_of(ph->intent, *ph->slot);
            if (final_value) {
                std::string decoy = ph->decoy ? plain(*ph->decoy) : "that";
                if (ph->kind == planner::PhenomenonKind::in_turn_correction)
                    return "Actually, change the " + spaced(*ph->slot) + " to " + decoy +
                           ", no wait, make that " + *final_value + ". " + ph->token;
                return "Actually, change the " + spaced(*ph->slot) + " to " + *final_value +
                       ". " + ph->token;
            }
        }
    }

    auto pending_ms = pending_missing(st.history);
    auto pending_cr = pending_confirm_var(st.history);

    // Answer an open slot request (or derail it, when a phenomenon is due).
    if (pending_ms && !pending_ms->slots.empty() && introduced > resolved) {
        const std::string asked = pending_ms->slots.front();
        std::size_t current = introduced - 1;
        if (const auto* ph = due_phenomenon(st)) {
            if (ph->trigger == planner::TriggerHint::on_slot_request) {
                switch (ph->kind) {
                    case planner::PhenomenonKind::irrelevant_answer: {
                        static const char* kLines[] = {
                            "Did you catch the football game last night?",
                            "I keep meaning to water those plants.",
                            "Do you know any good pasta recipes?"};
                        return std::string(kLines[pick(seed, "irr", 3)]) + " " + ph->token;
                    }
                    case planner::PhenomenonKind::overheard_answer: {
                        static const char* kLines[] = {
                            "Just leave it by the door, thanks.",
                            "No, put it next to the window please.",
                            "Tell him I will call back in five minutes."};
                        return std::string(kLines[pick(seed, "over", 3)]) + " " + ph->token;
                    }
                    case planner::PhenomenonKind::sarcasm: {
                        static const char* kLines[] = {
                            "Oh brilliant, because I just love answering questions.",
                            "Wow, what a thrilling question that is.",
                            "Oh joy, more details, my favourite thing ever."};
                        return std::string(kLines[pick(seed, "sarc", 3)]) + " " + ph->token;
                    }
                    case planner::PhenomenonKind::asr_early_end: {
                        auto planned = value_of(current, asked);
                        if (planned)
                            return "The " + spaced(asked) + " is " + asr_prefix(*planned) +
                                   " " + ph->token;
                        break;
                    }
                    case planner::PhenomenonKind::answer_about_another_slot: {
                        int var = st.history.intent_calls[current].first;
                        std::string other;
                        if (ph->slot && *ph->slot != asked &&
                            !st.history.provided.count({var, *ph->slot}) &&
                            value_of(current, *ph->slot))
                            other = *ph->slot;
                        if (other.empty()) {
                            for (const auto& [slot, value] :
                                 st.rules.intents[current].values) {
                                if (slot == asked) continue;
                                if (st.history.provided.count({var, slot})) continue;
                                other = slot;
                                break;
                            }
                        }
                        if (!other.empty())
                            return "The " + spaced(other) + " is " +
                                   *spoken_value(current, other) + ". " + ph->token;
                        break;
                    }
                    default:
                        break;
                }
            }
        }
        if (auto value = spoken_value(current, asked))
            return "The " + spaced(asked) + " is " + *value + ".";
    }

    // Confirm, stall, cancel, or volunteer remaining planned values.
    if (pending_cr && introduced > resolved) {
        std::size_t current = introduced - 1;
        if (const auto* ph = due_phenomenon(st)) {
            if (ph->trigger == planner::TriggerHint::on_confirmation_request) {
                if (ph->kind == planner::PhenomenonKind::cancellation) {
                    static const char* kLines[] = {
                        "Actually, never mind, please cancel that.",
                        "On second thought, forget it, cancel that one."};
                    return std::string(kLines[pick(seed, "cancel", 2)]) + " " + ph->token;
                }
                if (ph->kind == planner::PhenomenonKind::delay_confirmation) {
                    static const char* kLines[] = {
                        "Hold on, let me check my calendar first.",
                        "One moment, I need to think about it."};
                    return std::string(kLines[pick(seed, "delay", 2)]) + " " + ph->token;
                }
            }
        }
        int var = *pending_cr;
        std::string volunteered;
        for (const auto& [slot, value] : st.rules.intents[current].values) {
            if (st.history.provided.count({var, slot})) continue;
            volunteered += volunteered.empty() ? "Also, the " : " The ";
            volunteered += spaced(slot) + " is " + *spoken_value(current, slot) + ".";
        }
        if (!volunteered.empty()) return volunteered;
        static const char* kLines[] = {"Yes, please go ahead.", "Yes, confirm it.",
                                       "Sounds good, go ahead."};
        return kLines[pick(seed, "confirm", 3)];
    }

    // Introduce the next goal.
    if (introduced == resolved && introduced < total) {
        const auto& rule = st.rules.intents[introduced];
        static const char* kIntro[] = {"I want to %s", "I would like to %s",
                                       "Can you %s for me", "Please %s"};
        std::string verb = kIntro[pick(seed, "intro" + std::to_string(introduced), 4)];
        std::string phrase = spaced(rule.intent_name);
        std::string msg = verb;
        auto fmt = msg.find("%s");
        msg.replace(fmt, 2, phrase);
        msg += msg.find("Can you") == 0 ? "?" : ".";
        if (!rule.reason.empty() && introduced > 0) msg = rule.reason + " " + msg;
        if (rule.values.size() >= 2) {
            const std::string& slot = rule.values.begin()->first;
            msg += " The " + spaced(slot) + " is " + *spoken_value(introduced, slot) + ".";
        }
        return msg;
    }

    return "Thanks, that is everything.";
}

// ---------------------------------------------------- stage 10 (labeller)

bool contains_word(const std::string& haystack_lower, const std::string& needle_lower) {
    auto pos = haystack_lower.find(needle_lower);
    while (pos != std::string::npos) {
        bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(
                                       haystack_lower[pos - 1]));
        std::size_t end = pos + needle_lower.size();
        bool right_ok = end >= haystack_lower.size() ||
                        !std::isalnum(static_cast<unsigned char>(haystack_lower[end]));
        if (left_ok && right_ok) return true;
        pos = haystack_lower.find(needle_lower, pos + 1);
    }
    return false;
}

std::string stage10(const PromptView& view) {
    auto tools = parse_tools(view.section("TOOLS"));
    SimHistory history = parse_history(view.section("HISTORY"));

    if (history.last_line_kind != "user") return "say()\n";
    const std::string& text = history.last_user_text;
    const std::string text_lower = lower(text);

    auto tool_by_name = [&](const std::string& name) -> const SimTool* {
        for (const auto& tool : tools)
            if (tool.name == name) return &tool;
        return nullptr;
    };

    // confirmation
    bool has_clause = text_lower.find(" is ") != std::string::npos ||
                      text_lower.find(" are ") != std::string::npos;
    bool is_correction = text_lower.find("change the ") != std::string::npos;
    bool affirmative = !has_clause && !is_correction &&
                       (contains_word(text_lower, "yes") ||
                        text_lower.find("go ahead") != std::string::npos ||
                        text_lower.find("sounds good") != std::string::npos ||
                        contains_word(text_lower, "confirm"));
    bool cancels = text_lower.find("cancel") != std::string::npos ||
                   text_lower.find("never mind") != std::string::npos ||
                   text_lower.find("forget it") != std::string::npos;
    auto pending_cr = pending_confirm_var(history);
    if (cancels) return "say()\n";
    if (affirmative && pending_cr)
        return "confirm(x" + std::to_string(*pending_cr) + ")\n";

    // correction of an existing intent's slot
    if (is_correction) {
        for (auto it = history.intent_calls.rbegin(); it != history.intent_calls.rend();
             ++it) {
            const SimTool* tool = tool_by_name(it->second);
            if (!tool) continue;
            for (const auto& slot : tool->slots) {
                const std::string pattern = "change the " + spaced(lower(slot.name)) + " to ";
                if (text_lower.find(pattern) == std::string::npos) continue;
                auto clause = find_clause(text, slot.name);
                if (!clause) continue;
                auto value = typed_value(slot, *clause);
                if (!value) continue;
                return "x" + std::to_string(it->first) + "." + slot.name + " = " +
                       dsl::serialize_value(*value) + "\n";
            }
        }
        return "say()\n";
    }

    // new intent: longest tool-name match wins
    const SimTool* intro_tool = nullptr;
    for (const auto& tool : tools) {
        const std::string phrase = spaced(lower(tool.name));
        if (text_lower.find(phrase) == std::string::npos) continue;
        if (!intro_tool || phrase.size() > spaced(intro_tool->name).size())
            intro_tool = &tool;
    }
    if (intro_tool) {
        int var = static_cast<int>(history.intent_calls.size());
        std::string args;
        for (const auto& slot : intro_tool->slots) {
            auto clause = find_clause(text, slot.name);
            if (!clause) continue;
            auto value = typed_value(slot, *clause);
            if (!value) continue;
            if (!args.empty()) args += ", ";
            args += slot.name + "=" + dsl::serialize_value(*value);
        }
        return "x" + std::to_string(var) + " = " + intro_tool->name + "(" + args + ")\n";
    }

    // slot answers for an existing, unfinished intent
    std::set<int> performed;
    for (const auto& sig : history.signals)
        if (const auto* pf = std::get_if<dsl::Performed>(&sig)) performed.insert(pf->var);
    std::string out;
    for (auto it = history.intent_calls.rbegin(); it != history.intent_calls.rend(); ++it) {
        if (performed.count(it->first)) continue;
        const SimTool* tool = tool_by_name(it->second);
        if (!tool || tool->query) continue;
        for (const auto& slot : tool->slots) {
            auto clause = find_clause(text, slot.name);
            if (!clause) continue;
            auto value = typed_value(slot, *clause);
            if (!value) continue;
            out += "x" + std::to_string(it->first) + "." + slot.name + " = " +
                   dsl::serialize_value(*value) + "\n";
        }
        if (!out.empty()) break;
    }
    if (!out.empty()) return out;

    return "say()\n";
}

// --------------------------------------------------- stage 11 (extractor)

std::string stage11(const PromptView& view) {
    std::string user_text;
    {
        std::istringstream in(view.section("USER"));
        std::string line;
        std::getline(in, user_text);
        user_text = trim(user_text);
    }
    std::string out;
    std::istringstream in(view.section("COMMANDS"));
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        dsl::Command cmd;
        try {
            cmd = dsl::parse_command(line);
        } catch (const SyntaxError&) {
            continue;
        }
        auto fill = [&](const std::string& slot, const dsl::Value& value) -> dsl::Value {
            if (!value.is_placeholder()) return value;
            if (auto clause = find_clause(user_text, slot)) return dsl::Value::text(*clause);
            return dsl::Value::text(trim(user_text));
        };
        if (auto* ic = std::get_if<dsl::IntentCall>(&cmd)) {
            for (auto& [slot, value] : ic->args) value = fill(slot, value);
        } else if (auto* aa = std::get_if<dsl::AttrAssign>(&cmd)) {
            aa->value = fill(aa->slot, aa->value);
        } else if (auto* say = std::get_if<dsl::Say>(&cmd)) {
            for (auto& [slot, value] : say->args) value = fill(slot, value);
        }
        out += dsl::serialize_command(cmd) + "\n";
    }
    return out;
}

// --------------------------------------------------- stage 12 (responder)

std::string stage12(const PromptView& view, std::uint64_t seed) {
    SimHistory history = parse_history(view.section("HISTORY"));
    std::string signal_field = view.field("SIGNAL");

    std::optional<dsl::SignalPayload> signal;
    if (!signal_field.empty() && signal_field != "none") {
        try {
            signal = dsl::parse_signal(signal_field);
        } catch (const SyntaxError&) {
        }
    }

    auto ask_slot = [&](const dsl::MissingSlots& ms, bool again) {
        std::string slot = ms.slots.empty() ? "that" : spaced(ms.slots.front());
        if (again) return "No problem. What is the " + slot + "?";
        static const char* kAsk[] = {"Could you tell me the %s?", "What should the %s be?",
                                     "Sure. What is the %s?"};
        std::string msg = kAsk[pick(seed, "ask", 3)];
        msg.replace(msg.find("%s"), 2, slot);
        return msg;
    };

    if (signal) {
        if (const auto* ms = std::get_if<dsl::MissingSlots>(&*signal)) return ask_slot(*ms, false);
        if (std::holds_alternative<dsl::ConfirmationRequired>(*signal)) {
            static const char* kConfirm[] = {"Shall I go ahead and finalise that?",
                                             "Would you like me to go ahead?",
                                             "Shall I book it in?"};
            return kConfirm[pick(seed, "cr", 3)];
        }
        if (const auto* pf = std::get_if<dsl::Performed>(&*signal)) {
            static const char* kDone[] = {"All done. Your reference is %s.",
                                          "Done. The reference is %s.",
                                          "That is sorted, reference %s."};
            std::string msg = kDone[pick(seed, "done", 3)];
            msg.replace(msg.find("%s"), 2, pf->entity_id);
            return msg;
        }
        if (const auto* qr = std::get_if<dsl::QueryResult>(&*signal)) {
            std::string msg = "I found " + std::to_string(qr->entities.size()) + " result" +
                              (qr->entities.size() == 1 ? "" : "s");
            if (!qr->entities.empty()) {
                msg += ": ";
                for (std::size_t i = 0; i < qr->entities.size(); ++i)
                    msg += (i ? ", " : "") + qr->entities[i].id;
            }
            return msg + ".";
        }
        if (const auto* hint = std::get_if<dsl::Hint>(&*signal)) return hint->text;
    }

    // say() follow-ups steer back to whatever is still open
    if (auto ms = pending_missing(history)) return ask_slot(*ms, true);
    if (pending_confirm_var(history)) return "Sure. Shall I go ahead?";
    return "Sorry, could you say that again?";
}

std::string stage14(const PromptView& view) { return stage10(view); }

std::string salvage_reply(std::uint64_t seed) {
    static const char* kLines[] = {
        "Sorry to cut this short, something has come up. Let us finish another time.",
        "Apologies, I have to stop here for now. We can pick this up later.",
        "I need to interrupt this conversation here. Let us continue another time."};
    return kLines[pick(seed, "salvage", 3)];
}

}  // namespace

std::string SimulatedProvider::complete(const std::string& prompt, double /*temperature*/,
                                        std::optional<std::uint64_t> seed) {
    PromptView view = parse_prompt(prompt);
    const std::uint64_t s = seed.value_or(0) ^ fnv1a64(prompt);

    if (view.stage == "1") return stage1(view);
    if (view.stage == "2") return stage2(view);
    if (view.stage == "3") return stage3(view);
    if (view.stage == "4" || view.stage == "7")
        return view.stage == "4" ? stage4(view) : "OK\n";
    if (view.stage == "5") return stage5(view);
    if (view.stage == "6") return stage6(view, s);
    if (view.stage == "8") return stage8(view, s);
    if (view.stage == "9") return stage9(view, s);
    if (view.stage == "10") return stage10(view);
    if (view.stage == "11") return stage11(view);
    if (view.stage == "12") return stage12(view, s);
    if (view.stage == "14") return stage14(view);
    if (view.stage == "salvage") return salvage_reply(s);
    throw ProviderError("simulated provider cannot play this prompt (no STAGE marker)");
}

std::unique_ptr<LLMProvider> make_simulated_provider() {
    return std::make_unique<SimulatedProvider>();
}

}  // namespace convgen
