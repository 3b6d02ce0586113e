#include "convgen/planner.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "convgen/prompts.hpp"
#include "convgen/rng.hpp"

namespace convgen::planner {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Plain (unquoted) spelling for VALUE: lines; coerce_candidate reads it back.
std::string value_to_plain(const dsl::Value& v) {
    if (v.is_text()) return v.text_value();
    if (v.is_boolean()) return v.boolean_value() ? "true" : "false";
    return dsl::serialize_value(v);
}

std::string render_values_block(const std::map<std::string, dsl::Value>& values) {
    std::string out;
    for (const auto& [slot, value] : values)
        out += "VALUE: " + slot + "|" + value_to_plain(value) + "\n";
    return out;
}

// Parses `VALUE: slot|value` lines into a full replacement mapping over
// exactly `keys`; used by stages 4 and 6.
std::map<std::string, dsl::Value> parse_value_lines(const std::string& reply,
                                                    const schema::IntentSchema& intent,
                                                    const std::set<std::string>& keys,
                                                    const char* stage) {
    std::map<std::string, dsl::Value> out;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (line.rfind("VALUE:", 0) != 0)
            throw ParseError(std::string(stage) + " reply line must start with VALUE: '" +
                             line + "'");
        std::string rest = trim(line.substr(6));
        auto bar = rest.find('|');
        if (bar == std::string::npos)
            throw ParseError(std::string(stage) + " VALUE line needs slot|value: '" + line +
                             "'");
        std::string slot = trim(rest.substr(0, bar));
        std::string text = rest.substr(bar + 1);
        if (!keys.count(slot))
            throw ParseError(std::string(stage) + " reply names slot '" + slot +
                             "' outside the requested key set");
        const auto* spec = intent.find_slot(slot);
        auto value = schema::coerce_candidate(*spec, text);
        if (!value)
            throw TypeMismatch(std::string(stage) + " value for '" + slot +
                               "' fails the " + schema::to_string(spec->value_type) +
                               " type check: '" + text + "'");
        out[slot] = std::move(*value);
    }
    for (const auto& key : keys)
        if (!out.count(key))
            throw ParseError(std::string(stage) + " reply is missing slot '" + key + "'");
    return out;
}

std::size_t weighted_pick(std::mt19937_64& rng, const std::vector<double>& weights) {
    double total = 0;
    for (double w : weights) total += w;
    std::uniform_real_distribution<double> dist(0.0, total);
    double x = dist(rng);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (x < weights[i]) return i;
        x -= weights[i];
    }
    return weights.empty() ? 0 : weights.size() - 1;
}

bool chance(std::mt19937_64& rng, double p) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return dist(rng) < p;
}

}  // namespace

std::string to_string(PhenomenonKind k) {
    switch (k) {
        case PhenomenonKind::cancellation: return "cancellation";
        case PhenomenonKind::asr_early_end: return "asr_early_end";
        case PhenomenonKind::sarcasm: return "sarcasm";
        case PhenomenonKind::delay_confirmation: return "delay_confirmation";
        case PhenomenonKind::answer_about_another_slot: return "answer_about_another_slot";
        case PhenomenonKind::irrelevant_answer: return "irrelevant_answer";
        case PhenomenonKind::overheard_answer: return "overheard_answer";
        case PhenomenonKind::in_turn_correction: return "in_turn_correction";
        case PhenomenonKind::correction: return "correction";
        case PhenomenonKind::none: return "none";
    }
    return "none";
}

std::optional<PhenomenonKind> phenomenon_from_string(const std::string& s) {
    for (PhenomenonKind k : all_phenomena())
        if (to_string(k) == s) return k;
    if (s == "none") return PhenomenonKind::none;
    return std::nullopt;
}

std::string phenomenon_token(PhenomenonKind k) {
    switch (k) {
        case PhenomenonKind::cancellation: return "<CANCEL>";
        case PhenomenonKind::asr_early_end: return "<ASR_END>";
        case PhenomenonKind::sarcasm: return "<SARCASM>";
        case PhenomenonKind::delay_confirmation: return "<DELAY_CONFIRM>";
        case PhenomenonKind::answer_about_another_slot: return "<OTHER_SLOT>";
        case PhenomenonKind::irrelevant_answer: return "<IRRELEVANT>";
        case PhenomenonKind::overheard_answer: return "<OVERHEARD>";
        case PhenomenonKind::in_turn_correction: return "<INTURN_CORRECTION>";
        case PhenomenonKind::correction: return "<CORRECTION>";
        case PhenomenonKind::none: return "";
    }
    return "";
}

std::optional<PhenomenonKind> phenomenon_from_token(const std::string& token) {
    for (PhenomenonKind k : all_phenomena())
        if (phenomenon_token(k) == token) return k;
    return std::nullopt;
}

const std::vector<PhenomenonKind>& all_phenomena() {
    static const std::vector<PhenomenonKind> kinds = {
        PhenomenonKind::cancellation,
        PhenomenonKind::asr_early_end,
        PhenomenonKind::sarcasm,
        PhenomenonKind::delay_confirmation,
        PhenomenonKind::answer_about_another_slot,
        PhenomenonKind::irrelevant_answer,
        PhenomenonKind::overheard_answer,
        PhenomenonKind::in_turn_correction,
        PhenomenonKind::correction,
    };
    return kinds;
}

std::string to_string(TriggerHint t) {
    switch (t) {
        case TriggerHint::on_slot_request: return "on_slot_request";
        case TriggerHint::on_confirmation_request: return "on_confirmation_request";
        case TriggerHint::anywhere: return "anywhere";
    }
    return "anywhere";
}

namespace {

TriggerHint trigger_from_string(const std::string& s) {
    if (s == "on_slot_request") return TriggerHint::on_slot_request;
    if (s == "on_confirmation_request") return TriggerHint::on_confirmation_request;
    if (s == "anywhere") return TriggerHint::anywhere;
    throw ParseError("unknown trigger hint: " + s);
}

}  // namespace

void ConversationPlan::validate(const schema::SchemaCatalog& catalog) const {
    if (intent_sequence.empty()) throw PreconditionError("plan has no intents");
    if (slot_assignments.size() != intent_sequence.size())
        throw PreconditionError("plan slot assignments do not line up with intents");
    for (std::size_t i = 0; i < intent_sequence.size(); ++i) {
        const auto* schema = catalog.find(intent_sequence[i]);
        if (!schema) throw PreconditionError("plan uses unknown intent " + intent_sequence[i]);
        for (const auto& name : schema->mandatory_slots())
            if (schema->kind == schema::IntentKind::transactional &&
                !slot_assignments[i].count(name))
                throw PreconditionError("plan misses mandatory slot " + name + " of " +
                                        intent_sequence[i]);
    }
    for (const auto& ph : phenomena) {
        if (ph.target_intent >= intent_sequence.size())
            throw PreconditionError("phenomenon targets intent index out of range");
        if (ph.target_slot) {
            const auto* schema = catalog.find(intent_sequence[ph.target_intent]);
            if (!schema->find_slot(*ph.target_slot))
                throw PreconditionError("phenomenon targets unknown slot " + *ph.target_slot);
        }
    }
}

ShapeRecord sample_conversation_shape(const schema::SchemaCatalog& catalog,
                                      std::uint64_t rng_seed, const SamplingConfig& config) {
    auto rng = make_rng(rng_seed);
    ShapeRecord shape;

    std::vector<int> counts;
    std::vector<double> weights;
    for (const auto& [count, weight] : config.intent_count_weights) {
        counts.push_back(count);
        weights.push_back(weight);
    }
    shape.intent_count = counts.empty() ? 1 : counts[weighted_pick(rng, weights)];

    if (chance(rng, config.phenomenon_rate)) {
        std::vector<PhenomenonKind> kinds;
        std::vector<double> kind_weights;
        for (const auto& [kind, weight] : config.phenomenon_kind_weights) {
            if (weight <= 0) continue;
            kinds.push_back(kind);
            kind_weights.push_back(weight);
        }
        if (!kinds.empty()) {
            shape.phenomenon_kinds.push_back(kinds[weighted_pick(rng, kind_weights)]);
            if (chance(rng, config.extra_phenomenon_p))
                shape.phenomenon_kinds.push_back(kinds[weighted_pick(rng, kind_weights)]);
        }
    }
    shape.slot_choice_seed = rng();
    (void)catalog;
    return shape;
}

std::vector<std::string> plan_intent_sequence(const std::string& primary_intent,
                                              const schema::SchemaCatalog& catalog,
                                              LLMProvider& provider, int length,
                                              const SamplingConfig& config,
                                              std::uint64_t seed, double temperature) {
    const auto* primary = catalog.find(primary_intent);
    if (!primary) throw PreconditionError("unknown primary intent: " + primary_intent);
    if (length <= 1) return {primary_intent};

    // Offer same-domain intents first, then fill uniformly across the rest.
    auto rng = make_rng(derive_seed(seed, 3));
    std::vector<std::string> offered;
    std::set<std::string> seen{primary_intent};
    for (const auto& intent : catalog.intents) {
        if (intent.domain == primary->domain && !seen.count(intent.intent_name)) {
            offered.push_back(intent.intent_name);
            seen.insert(intent.intent_name);
        }
    }
    std::vector<std::string> rest;
    for (const auto& intent : catalog.intents)
        if (!seen.count(intent.intent_name)) rest.push_back(intent.intent_name);
    std::shuffle(rest.begin(), rest.end(), rng);
    for (const auto& name : rest) {
        if (offered.size() >= static_cast<std::size_t>(config.candidate_intents)) break;
        offered.push_back(name);
    }
    if (offered.size() > static_cast<std::size_t>(config.candidate_intents))
        offered.resize(config.candidate_intents);

    std::string candidates;
    for (const auto& name : offered) {
        const auto* intent = catalog.find(name);
        candidates += "INTENT: " + name + " | " +
                      (intent->kind == schema::IntentKind::query ? "query" : "transactional") +
                      " | domain=" + intent->domain + " | entity=" + intent->entity_name + "\n";
    }

    std::string prompt = prompts::PromptLibrary::builtin().render(
        "stage03", {{"count", std::to_string(length)},
                    {"primary", primary_intent},
                    {"candidates", candidates}});
    std::string reply = provider.complete(prompt, temperature, seed);

    std::string line = trim(reply);
    if (line.rfind("SEQUENCE:", 0) != 0)
        throw ParseError("stage-3 reply must start with SEQUENCE: '" + line + "'");
    std::vector<std::string> sequence;
    std::istringstream items(line.substr(9));
    std::string item;
    while (std::getline(items, item, ',')) {
        item = trim(item);
        if (!item.empty()) sequence.push_back(item);
    }
    if (sequence.empty() || sequence.front() != primary_intent)
        throw ParseError("stage-3 sequence must begin with the primary intent");
    if (sequence.size() != static_cast<std::size_t>(length))
        throw ParseError("stage-3 sequence length " + std::to_string(sequence.size()) +
                         " does not match the requested " + std::to_string(length));
    std::set<std::string> allowed(offered.begin(), offered.end());
    allowed.insert(primary_intent);
    for (const auto& name : sequence)
        if (!allowed.count(name))
            throw UnknownIntent("stage-3 sequence names unoffered intent: " + name);
    return sequence;
}

std::map<std::string, dsl::Value> refine_slot_values(
    const schema::IntentSchema& intent, const std::map<std::string, dsl::Value>& draft,
    LLMProvider& provider, double temperature, std::optional<std::uint64_t> seed) {
    std::set<std::string> keys;
    for (const auto& [slot, value] : draft) {
        const auto* spec = intent.find_slot(slot);
        if (!spec || !schema::value_conforms(*spec, value))
            throw PreconditionError("draft value for '" + slot + "' does not type-check");
        keys.insert(slot);
    }
    std::string prompt = prompts::PromptLibrary::builtin().render(
        "stage04", {{"schema", schema::render_prompt_block(intent)},
                    {"values", render_values_block(draft)}});
    std::string reply = provider.complete(prompt, temperature, seed);
    return parse_value_lines(reply, intent, keys, "stage-4");
}

std::string justify_followup(const std::string& history_summary,
                             const std::string& next_intent, LLMProvider& provider,
                             double temperature, std::optional<std::uint64_t> seed) {
    std::string prompt = prompts::PromptLibrary::builtin().render(
        "stage05",
        {{"history_summary", history_summary}, {"next_intent", next_intent}});
    std::string reply = provider.complete(prompt, temperature, seed);
    // Keep the first paragraph only.
    auto cut = reply.find("\n\n");
    std::string paragraph = trim(cut == std::string::npos ? reply : reply.substr(0, cut));
    std::replace(paragraph.begin(), paragraph.end(), '\n', ' ');
    if (paragraph.empty()) throw ParseError("stage-5 reply is empty");
    return paragraph;
}

std::map<std::string, dsl::Value> followup_slot_values(
    const schema::IntentSchema& intent, const std::string& justification,
    const std::vector<std::string>& slots_to_fill, const schema::SlotValuePool& pool,
    LLMProvider& provider, double temperature, std::optional<std::uint64_t> seed) {
    std::string candidates;
    for (const auto& slot : slots_to_fill) {
        auto it = pool.values_per_slot.find(slot);
        if (it == pool.values_per_slot.end()) continue;
        for (const auto& v : it->second)
            candidates += "VALUE: " + slot + "|" + value_to_plain(v) + "\n";
    }
    std::string prompt = prompts::PromptLibrary::builtin().render(
        "stage06", {{"schema", schema::render_prompt_block(intent)},
                    {"justification", justification},
                    {"candidates", candidates}});
    std::string reply = provider.complete(prompt, temperature, seed);
    return parse_value_lines(reply, intent,
                             std::set<std::string>(slots_to_fill.begin(), slots_to_fill.end()),
                             "stage-6");
}

ConversationPlan harmonize_slot_values(const ConversationPlan& plan,
                                       const schema::SchemaCatalog& catalog,
                                       LLMProvider& provider, double temperature,
                                       std::optional<std::uint64_t> seed) {
    std::string rendered;
    for (std::size_t i = 0; i < plan.intent_sequence.size(); ++i) {
        rendered += "INTENT: " + std::to_string(i) + " | " + plan.intent_sequence[i] + "\n";
        for (const auto& [slot, value] : plan.slot_assignments[i])
            rendered += "VALUE: " + std::to_string(i) + "|" + slot + "|" +
                        value_to_plain(value) + "\n";
    }
    std::string prompt =
        prompts::PromptLibrary::builtin().render("stage07", {{"plan", rendered}});
    std::string reply = provider.complete(prompt, temperature, seed);

    ConversationPlan out = plan;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line == "OK") continue;
        if (line.rfind("VALUE:", 0) != 0)
            throw ParseError("stage-7 reply line must be OK or VALUE: '" + line + "'");
        std::string rest = trim(line.substr(6));
        auto bar1 = rest.find('|');
        auto bar2 = bar1 == std::string::npos ? std::string::npos : rest.find('|', bar1 + 1);
        if (bar2 == std::string::npos)
            throw ParseError("stage-7 VALUE line needs index|slot|value: '" + line + "'");
        std::size_t index = 0;
        try {
            index = std::stoul(trim(rest.substr(0, bar1)));
        } catch (const std::exception&) {
            throw ParseError("stage-7 VALUE line has a bad intent index: '" + line + "'");
        }
        if (index >= out.intent_sequence.size())
            throw ParseError("stage-7 edit targets intent index out of range");
        std::string slot = trim(rest.substr(bar1 + 1, bar2 - bar1 - 1));
        std::string text = rest.substr(bar2 + 1);
        auto& values = out.slot_assignments[index];
        if (!values.count(slot))
            throw ParseError("stage-7 edit targets slot '" + slot +
                             "' outside the plan's key set");
        const auto* schema = catalog.find(out.intent_sequence[index]);
        auto value = schema::coerce_candidate(*schema->find_slot(slot), text);
        if (!value)
            throw ParseError("stage-7 value for '" + slot + "' fails its type check");
        values[slot] = std::move(*value);
    }
    return out;
}

schema::SlotValuePool pool_for_intent(const schema::IntentSchema& intent,
                                      const schema::SchemaCatalog& catalog,
                                      const std::vector<schema::SlotValuePool>& pools) {
    schema::SlotValuePool merged;
    merged.intent_name = intent.intent_name;
    auto absorb = [&](const std::string& name) {
        for (const auto& pool : pools) {
            if (pool.intent_name != name) continue;
            for (const auto& [slot, values] : pool.values_per_slot) {
                auto& vec = merged.values_per_slot[slot];
                for (const auto& v : values)
                    if (std::find(vec.begin(), vec.end(), v) == vec.end()) vec.push_back(v);
            }
        }
    };
    absorb(intent.intent_name);
    if (intent.kind == schema::IntentKind::query) {
        for (const auto& other : catalog.intents)
            if (other.kind == schema::IntentKind::transactional &&
                other.entity_name == intent.entity_name)
                absorb(other.intent_name);
    }
    return merged;
}

std::map<std::string, std::vector<std::map<std::string, dsl::Value>>> generate_query_entities(
    const ConversationPlan& plan, const schema::SchemaCatalog& catalog,
    const std::vector<schema::SlotValuePool>& pools, LLMProvider& provider,
    const SamplingConfig& config, double temperature, std::optional<std::uint64_t> seed) {
    std::map<std::string, std::vector<std::map<std::string, dsl::Value>>> out;
    for (const auto& name : plan.intent_sequence) {
        const auto* intent = catalog.find(name);
        if (!intent || intent->kind != schema::IntentKind::query) continue;
        if (out.count(intent->entity_name)) continue;

        // An entity must carry at least the mandatory slots of the first
        // transactional intent that produces it.
        std::vector<std::string> required;
        for (const auto& other : catalog.intents) {
            if (other.kind == schema::IntentKind::transactional &&
                other.entity_name == intent->entity_name) {
                required = other.mandatory_slots();
                break;
            }
        }

        schema::SlotValuePool pool = pool_for_intent(*intent, catalog, pools);
        std::string candidates;
        for (const auto& [slot, values] : pool.values_per_slot)
            for (const auto& v : values)
                candidates += "VALUE: " + slot + "|" + value_to_plain(v) + "\n";

        std::string prompt = prompts::PromptLibrary::builtin().render(
            "stage08", {{"count", std::to_string(config.entities_per_query)},
                        {"schema", schema::render_prompt_block(*intent)},
                        {"candidates", candidates}});
        std::string reply = provider.complete(prompt, temperature, seed);

        std::vector<std::map<std::string, dsl::Value>> entities;
        std::istringstream in(reply);
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty()) continue;
            if (line.rfind("ENTITY:", 0) != 0)
                throw ParseError("stage-8 reply line must start with ENTITY: '" + line + "'");
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line.substr(7));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(std::string("stage-8 entity is not valid JSON: ") + e.what());
            }
            if (!j.is_object()) throw ParseError("stage-8 entity must be a JSON object");
            std::map<std::string, dsl::Value> entity;
            for (const auto& [slot, value] : j.items()) {
                const auto* spec = intent->find_slot(slot);
                if (!spec)
                    throw ParseError("stage-8 entity names unknown slot '" + slot + "'");
                dsl::Value typed;
                if (value.is_string()) typed = dsl::Value::text(value.get<std::string>());
                else if (value.is_number_integer()) typed = dsl::Value::integer(value.get<std::int64_t>());
                else if (value.is_number_float()) typed = dsl::Value::number(value.get<double>());
                else if (value.is_boolean()) typed = dsl::Value::boolean(value.get<bool>());
                else throw ParseError("stage-8 entity field '" + slot + "' has an unsupported type");
                if (!schema::value_conforms(*spec, typed))
                    throw ParseError("stage-8 entity field '" + slot + "' fails its type check");
                entity[slot] = std::move(typed);
            }
            for (const auto& req : required)
                if (!entity.count(req))
                    throw ParseError("stage-8 entity is missing required field '" + req + "'");
            entities.push_back(std::move(entity));
        }
        if (entities.empty())
            throw ParseError("stage-8 reply contains no entities for " + intent->intent_name);
        out[intent->entity_name] = std::move(entities);
    }
    return out;
}

namespace {

std::string phenomenon_behaviour(PhenomenonKind kind) {
    switch (kind) {
        case PhenomenonKind::correction:
            return "first give the decoy value for the slot; in a later message ask to "
                   "change it to the planned value";
        case PhenomenonKind::in_turn_correction:
            return "first give the decoy value for the slot; later send one message that "
                   "starts restating the decoy and corrects itself to the planned value "
                   "mid-message";
        case PhenomenonKind::answer_about_another_slot:
            return "when the assistant asks for a different slot, answer with this slot's "
                   "planned value instead; answer the asked slot next time";
        case PhenomenonKind::irrelevant_answer:
            return "when the assistant asks for this slot, reply with something unrelated "
                   "to the conversation; answer properly next time";
        case PhenomenonKind::overheard_answer:
            return "when the assistant asks for this slot, reply as if answering someone "
                   "else nearby; answer properly next time";
        case PhenomenonKind::sarcasm:
            return "when the assistant asks for this slot, reply sarcastically without "
                   "answering; answer properly next time";
        case PhenomenonKind::asr_early_end:
            return "when giving this slot, provide only the beginning of the planned "
                   "value, as if the message was cut off";
        case PhenomenonKind::delay_confirmation:
            return "when asked to confirm, stall for one message without confirming; "
                   "confirm when asked again";
        case PhenomenonKind::cancellation:
            return "when asked to confirm, cancel this goal instead and move on";
        case PhenomenonKind::none:
            return "";
    }
    return "";
}

}  // namespace

ConversationRules compile_conversation_rules(const ConversationPlan& plan) {
    ConversationRules rules;
    rules.rules.push_back(Rule{
        "global",
        "act as the user; pursue each goal in order; answer the assistant's questions "
        "with the planned values; confirm a goal only when asked",
        std::nullopt, std::nullopt});

    for (std::size_t i = 0; i < plan.intent_sequence.size(); ++i) {
        std::string instruction = "perform " + plan.intent_sequence[i];
        const auto& values = plan.slot_assignments[i];
        if (!values.empty()) {
            instruction += " with ";
            bool first = true;
            for (const auto& [slot, value] : values) {
                if (!first) instruction += "; ";
                instruction += slot + "=" + dsl::serialize_value(value);
                first = false;
            }
        }
        auto just = plan.justifications.find(i);
        if (just != plan.justifications.end()) instruction += " | reason: " + just->second;
        rules.rules.push_back(
            Rule{"intent:" + std::to_string(i), std::move(instruction), std::nullopt,
                 std::nullopt});
    }

    for (const auto& ph : plan.phenomena) {
        std::string instruction = "intent=" + std::to_string(ph.target_intent);
        if (ph.target_slot) instruction += " | slot=" + *ph.target_slot;
        if (ph.decoy_value)
            instruction += " | decoy=" + dsl::serialize_value(*ph.decoy_value);
        instruction += " | trigger=" + to_string(ph.trigger);
        instruction += " | behave: " + phenomenon_behaviour(ph.kind) +
                       "; end that message with " + phenomenon_token(ph.kind);
        rules.rules.push_back(Rule{"phenomenon:" + to_string(ph.kind), std::move(instruction),
                                   ph.kind, phenomenon_token(ph.kind)});
    }
    return rules;
}

std::optional<IntentRuleFields> parse_intent_rule(const Rule& rule) {
    if (rule.scope.rfind("intent:", 0) != 0) return std::nullopt;
    IntentRuleFields fields;
    try {
        fields.index = std::stoul(rule.scope.substr(7));
    } catch (const std::exception&) {
        return std::nullopt;
    }
    std::string body = rule.instruction;
    auto reason_pos = body.find(" | reason: ");
    if (reason_pos != std::string::npos) {
        fields.reason = body.substr(reason_pos + 11);
        body = body.substr(0, reason_pos);
    }
    if (body.rfind("perform ", 0) != 0) return std::nullopt;
    body = body.substr(8);
    auto with_pos = body.find(" with ");
    if (with_pos == std::string::npos) {
        fields.intent_name = trim(body);
        return fields;
    }
    fields.intent_name = trim(body.substr(0, with_pos));
    std::string values = body.substr(with_pos + 6);
    std::size_t start = 0;
    while (start < values.size()) {
        auto end = values.find("; ", start);
        std::string pair =
            end == std::string::npos ? values.substr(start) : values.substr(start, end - start);
        auto eq = pair.find('=');
        if (eq == std::string::npos) return std::nullopt;
        fields.values[trim(pair.substr(0, eq))] = dsl::parse_value(pair.substr(eq + 1));
        if (end == std::string::npos) break;
        start = end + 2;
    }
    return fields;
}

std::optional<PhenomenonRuleFields> parse_phenomenon_rule(const Rule& rule) {
    if (rule.scope.rfind("phenomenon:", 0) != 0 || !rule.marker) return std::nullopt;
    PhenomenonRuleFields fields;
    fields.kind = *rule.marker;
    fields.token = rule.token.value_or(phenomenon_token(fields.kind));
    std::size_t start = 0;
    const std::string& body = rule.instruction;
    while (start < body.size()) {
        auto end = body.find(" | ", start);
        std::string field =
            end == std::string::npos ? body.substr(start) : body.substr(start, end - start);
        if (field.rfind("intent=", 0) == 0) {
            try {
                fields.intent = std::stoul(field.substr(7));
            } catch (const std::exception&) {
                return std::nullopt;
            }
        } else if (field.rfind("slot=", 0) == 0) {
            fields.slot = trim(field.substr(5));
        } else if (field.rfind("decoy=", 0) == 0) {
            fields.decoy = dsl::parse_value(field.substr(6));
        } else if (field.rfind("trigger=", 0) == 0) {
            fields.trigger = trigger_from_string(trim(field.substr(8)));
        }
        if (end == std::string::npos) break;
        start = end + 3;
    }
    return fields;
}

namespace {

struct Placement {
    std::size_t intent = 0;
    std::optional<std::string> slot;
    TriggerHint trigger = TriggerHint::anywhere;
    std::optional<dsl::Value> decoy;
};

// The user agent opens an intent by volunteering its alphabetically first
// assigned slot when it has two or more; with a single assigned slot the
// opening holds none back, so every mandatory slot gets asked.
std::optional<std::string> opening_slot(const std::map<std::string, dsl::Value>& assigned) {
    if (assigned.size() < 2) return std::nullopt;
    return assigned.begin()->first;
}

std::optional<Placement> place_phenomenon(PhenomenonKind kind, const ConversationPlan& plan,
                                          const schema::SchemaCatalog& catalog,
                                          const std::vector<schema::SlotValuePool>& pools,
                                          const std::set<std::pair<std::size_t, std::string>>& used_slots,
                                          const std::set<std::size_t>& used_confirmations,
                                          std::mt19937_64& rng) {
    std::vector<Placement> options;
    for (std::size_t i = 0; i < plan.intent_sequence.size(); ++i) {
        const auto* intent = catalog.find(plan.intent_sequence[i]);
        if (!intent || intent->kind != schema::IntentKind::transactional) continue;
        const auto& assigned = plan.slot_assignments[i];
        auto opening = opening_slot(assigned);

        auto asked = [&](const std::string& slot) {
            const auto* spec = intent->find_slot(slot);
            return spec && spec->mandatory && (!opening || *opening != slot);
        };

        switch (kind) {
            case PhenomenonKind::correction:
            case PhenomenonKind::in_turn_correction: {
                schema::SlotValuePool pool = pool_for_intent(*intent, catalog, pools);
                for (const auto& [slot, value] : assigned) {
                    if (used_slots.count({i, slot})) continue;
                    auto it = pool.values_per_slot.find(slot);
                    if (it == pool.values_per_slot.end()) continue;
                    for (const auto& candidate : it->second) {
                        if (candidate == value) continue;
                        options.push_back(
                            Placement{i, slot, TriggerHint::anywhere, candidate});
                        break;
                    }
                }
                break;
            }
            case PhenomenonKind::answer_about_another_slot: {
                // Derails the first ask, which needs a spare unprovided slot
                // to answer about; with three assigned slots one always
                // remains at that point.
                if (assigned.size() < 3) break;
                for (const auto& slot : intent->slots) {
                    if (!asked(slot.name) || !assigned.count(slot.name)) continue;
                    if (!used_slots.count({i, slot.name}))
                        options.push_back(Placement{i, slot.name,
                                                    TriggerHint::on_slot_request,
                                                    std::nullopt});
                    break;  // only the first-asked slot is a sound target
                }
                break;
            }
            case PhenomenonKind::asr_early_end: {
                for (const auto& [slot, value] : assigned) {
                    if (!asked(slot) || used_slots.count({i, slot})) continue;
                    const auto* spec = intent->find_slot(slot);
                    if (spec->value_type == schema::SlotType::enum_text) continue;
                    if (!schema::is_string_slot(spec->value_type)) continue;
                    if (!value.is_text() || value.text_value().size() < 4) continue;
                    options.push_back(Placement{i, slot, TriggerHint::on_slot_request,
                                                std::nullopt});
                }
                break;
            }
            case PhenomenonKind::irrelevant_answer:
            case PhenomenonKind::overheard_answer:
            case PhenomenonKind::sarcasm: {
                for (const auto& [slot, value] : assigned) {
                    if (!asked(slot) || used_slots.count({i, slot})) continue;
                    options.push_back(Placement{i, slot, TriggerHint::on_slot_request,
                                                std::nullopt});
                }
                break;
            }
            case PhenomenonKind::delay_confirmation:
            case PhenomenonKind::cancellation: {
                if (!intent->requires_confirmation || used_confirmations.count(i)) break;
                options.push_back(
                    Placement{i, std::nullopt, TriggerHint::on_confirmation_request,
                              std::nullopt});
                break;
            }
            case PhenomenonKind::none:
                break;
        }
    }
    if (options.empty()) return std::nullopt;
    return options[bounded(rng, options.size())];
}

}  // namespace

ConversationPlan build_plan(const std::string& primary_intent,
                            const schema::SchemaCatalog& catalog,
                            const std::vector<schema::SlotValuePool>& pools,
                            LLMProvider& provider, const SamplingConfig& config,
                            std::uint64_t seed, double temperature) {
    ShapeRecord shape = sample_conversation_shape(catalog, seed, config);

    ConversationPlan plan;
    plan.seed = seed;
    plan.intent_sequence = plan_intent_sequence(primary_intent, catalog, provider,
                                                shape.intent_count, config, seed, temperature);

    auto slot_rng = make_rng(shape.slot_choice_seed);
    std::string summary;
    for (std::size_t i = 0; i < plan.intent_sequence.size(); ++i) {
        const auto* intent = catalog.find(plan.intent_sequence[i]);
        std::map<std::string, dsl::Value> values;
        std::vector<std::string> optional_included;

        if (intent->kind == schema::IntentKind::transactional) {
            schema::SlotValuePool pool = pool_for_intent(*intent, catalog, pools);
            std::vector<std::string> chosen;
            for (const auto& slot : intent->slots) {
                if (slot.mandatory) {
                    chosen.push_back(slot.name);
                } else if (chance(slot_rng, config.optional_slot_p)) {
                    chosen.push_back(slot.name);
                    optional_included.push_back(slot.name);
                }
            }
            for (const auto& slot : chosen) {
                auto it = pool.values_per_slot.find(slot);
                if (it == pool.values_per_slot.end() || it->second.empty())
                    throw PreconditionError("no slot value candidates for " +
                                            intent->intent_name + "." + slot);
                values[slot] = it->second[bounded(slot_rng, it->second.size())];
            }
            if (i == 0) {
                values = refine_slot_values(*intent, values, provider, temperature,
                                            derive_seed(seed, 40 + i));
            } else {
                std::string justification = justify_followup(
                    summary, intent->intent_name, provider, temperature,
                    derive_seed(seed, 50 + i));
                plan.justifications[i] = justification;
                values = followup_slot_values(*intent, justification, chosen,
                                              pool_for_intent(*intent, catalog, pools),
                                              provider, temperature,
                                              derive_seed(seed, 60 + i));
                values = refine_slot_values(*intent, values, provider, temperature,
                                            derive_seed(seed, 40 + i));
            }
        }
        plan.slot_assignments.push_back(values);
        plan.optional_slot_choices.push_back(optional_included);

        summary += (summary.empty() ? "" : " ") + std::string("The user performs ") +
                   intent->intent_name;
        if (!values.empty()) {
            summary += " with";
            bool first = true;
            for (const auto& [slot, value] : values) {
                summary += (first ? " " : ", ") + slot + "=" + dsl::serialize_value(value);
                first = false;
            }
        }
        summary += ".";
    }

    plan = harmonize_slot_values(plan, catalog, provider, temperature, derive_seed(seed, 7));
    plan.query_entities = generate_query_entities(plan, catalog, pools, provider, config,
                                                  temperature, derive_seed(seed, 8));

    auto ph_rng = make_rng(derive_seed(shape.slot_choice_seed, 9));
    std::set<std::pair<std::size_t, std::string>> used_slots;
    std::set<std::size_t> used_confirmations;
    for (PhenomenonKind kind : shape.phenomenon_kinds) {
        auto placement = place_phenomenon(kind, plan, catalog, pools, used_slots,
                                          used_confirmations, ph_rng);
        if (!placement) continue;  // infeasible for this plan; drop it
        Phenomenon ph;
        ph.kind = kind;
        ph.target_intent = placement->intent;
        ph.target_slot = placement->slot;
        ph.trigger = placement->trigger;
        ph.decoy_value = placement->decoy;
        if (ph.target_slot) used_slots.insert({ph.target_intent, *ph.target_slot});
        if (ph.trigger == TriggerHint::on_confirmation_request)
            used_confirmations.insert(ph.target_intent);
        plan.phenomena.push_back(std::move(ph));
    }

    plan.validate(catalog);
    return plan;
}

backend::EntityStore make_entity_store(const ConversationPlan& plan) {
    backend::EntityStore store;
    for (const auto& [entity_name, records] : plan.query_entities)
        for (const auto& values : records) store.add(entity_name, values);
    return store;
}

void save_plans(const std::vector<ConversationPlan>& plans, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open plan file for writing: " + path);
    for (const auto& plan : plans) {
        ordered_json j;
        j["intent_sequence"] = plan.intent_sequence;
        ordered_json assignments = ordered_json::array();
        for (std::size_t i = 0; i < plan.slot_assignments.size(); ++i) {
            ordered_json entry;
            entry["intent"] = plan.intent_sequence[i];
            ordered_json values = ordered_json::object();
            for (const auto& [slot, value] : plan.slot_assignments[i])
                values[slot] = dsl::serialize_value(value);
            entry["values"] = std::move(values);
            assignments.push_back(std::move(entry));
        }
        j["slot_assignments"] = std::move(assignments);
        ordered_json phenomena = ordered_json::array();
        for (const auto& ph : plan.phenomena) {
            ordered_json p;
            p["kind"] = to_string(ph.kind);
            p["target_intent"] = ph.target_intent;
            if (ph.target_slot) p["target_slot"] = *ph.target_slot;
            p["trigger"] = to_string(ph.trigger);
            if (ph.decoy_value) p["decoy"] = dsl::serialize_value(*ph.decoy_value);
            phenomena.push_back(std::move(p));
        }
        j["phenomena"] = std::move(phenomena);
        ordered_json rules = ordered_json::array();
        for (const auto& rule : compile_conversation_rules(plan).rules) {
            ordered_json r;
            r["scope"] = rule.scope;
            r["instruction"] = rule.instruction;
            if (rule.marker) r["marker"] = to_string(*rule.marker);
            if (rule.token) r["token"] = *rule.token;
            rules.push_back(std::move(r));
        }
        j["rules"] = std::move(rules);
        ordered_json entities = ordered_json::object();
        for (const auto& [entity_name, records] : plan.query_entities) {
            ordered_json arr = ordered_json::array();
            for (const auto& record : records) {
                ordered_json e = ordered_json::object();
                for (const auto& [slot, value] : record)
                    e[slot] = dsl::serialize_value(value);
                arr.push_back(std::move(e));
            }
            entities[entity_name] = std::move(arr);
        }
        j["entities"] = std::move(entities);
        j["seed"] = plan.seed;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing plan file: " + path);
}

std::vector<ConversationPlan> load_plans(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open plan file: " + path);
    std::vector<ConversationPlan> plans;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            ordered_json j = ordered_json::parse(line);
            ConversationPlan plan;
            plan.intent_sequence = j.at("intent_sequence").get<std::vector<std::string>>();
            for (const auto& entry : j.at("slot_assignments")) {
                std::map<std::string, dsl::Value> values;
                for (const auto& [slot, text] : entry.at("values").items())
                    values[slot] = dsl::parse_value(text.get<std::string>());
                plan.slot_assignments.push_back(std::move(values));
            }
            for (const auto& p : j.at("phenomena")) {
                Phenomenon ph;
                auto kind = phenomenon_from_string(p.at("kind").get<std::string>());
                if (!kind) throw ParseError("unknown phenomenon kind in plan file");
                ph.kind = *kind;
                ph.target_intent = p.at("target_intent").get<std::size_t>();
                if (p.contains("target_slot"))
                    ph.target_slot = p.at("target_slot").get<std::string>();
                ph.trigger = trigger_from_string(p.at("trigger").get<std::string>());
                if (p.contains("decoy"))
                    ph.decoy_value = dsl::parse_value(p.at("decoy").get<std::string>());
                plan.phenomena.push_back(std::move(ph));
            }
            for (const auto& [entity_name, arr] : j.at("entities").items()) {
                for (const auto& e : arr) {
                    std::map<std::string, dsl::Value> record;
                    for (const auto& [slot, text] : e.items())
                        record[slot] = dsl::parse_value(text.get<std::string>());
                    plan.query_entities[entity_name].push_back(std::move(record));
                }
            }
            plan.seed = j.at("seed").get<std::uint64_t>();
            plans.push_back(std::move(plan));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("malformed plan record: ") + e.what(), lineno);
        }
    }
    return plans;
}

}  // namespace convgen::planner
