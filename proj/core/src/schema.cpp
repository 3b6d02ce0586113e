#include "convgen/schema.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "convgen/prompts.hpp"

namespace convgen::schema {

namespace {

using ordered_json = nlohmann::ordered_json;

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

bool is_var_pattern(const std::string& s) {
    if (s.size() < 2 || s[0] != 'x') return false;
    return std::all_of(s.begin() + 1, s.end(),
                       [](unsigned char c) { return std::isdigit(c); });
}

// lowercase snake-case, and lexable apart from the DSL's x<N> variables.
bool valid_identifier(const std::string& s) {
    if (s.empty()) return false;
    if (!(std::islower(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s) {
        if (!(std::islower(static_cast<unsigned char>(c)) ||
              std::isdigit(static_cast<unsigned char>(c)) || c == '_'))
            return false;
    }
    return !is_var_pattern(s);
}

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

ordered_json slot_to_json(const SlotSpec& slot) {
    ordered_json j;
    j["name"] = slot.name;
    j["value_type"] = to_string(slot.value_type);
    j["mandatory"] = slot.mandatory;
    if (!slot.allowed_values.empty()) j["allowed_values"] = slot.allowed_values;
    return j;
}

SlotSpec slot_from_json(const ordered_json& j) {
    SlotSpec slot;
    slot.name = j.at("name").get<std::string>();
    auto type = slot_type_from_string(j.at("value_type").get<std::string>());
    if (!type) throw ParseError("unknown slot value_type: " + j.at("value_type").dump());
    slot.value_type = *type;
    slot.mandatory = j.at("mandatory").get<bool>();
    if (j.contains("allowed_values"))
        slot.allowed_values = j.at("allowed_values").get<std::vector<std::string>>();
    return slot;
}

}  // namespace

std::string render_prompt_block(const IntentSchema& schema) {
    std::string out = "TOOL: " + schema.intent_name + " | " +
                      (schema.kind == IntentKind::query ? "query" : "transactional") +
                      " | domain=" + schema.domain + " | entity=" + schema.entity_name +
                      " | confirm=" + (schema.requires_confirmation ? "true" : "false") + "\n";
    for (const auto& slot : schema.slots) {
        out += "SLOT: " + slot.name + "|" + to_string(slot.value_type) + "|" +
               (slot.mandatory ? "mandatory" : "optional");
        if (!slot.allowed_values.empty()) {
            out += "|";
            for (std::size_t i = 0; i < slot.allowed_values.size(); ++i) {
                if (i) out += ",";
                out += slot.allowed_values[i];
            }
        }
        out += "\n";
    }
    return out;
}

std::string to_string(SlotType t) {
    switch (t) {
        case SlotType::text: return "text";
        case SlotType::integer: return "integer";
        case SlotType::number: return "number";
        case SlotType::boolean: return "boolean";
        case SlotType::date_text: return "date_text";
        case SlotType::time_text: return "time_text";
        case SlotType::enum_text: return "enum_text";
    }
    return "text";
}

std::optional<SlotType> slot_type_from_string(const std::string& s) {
    if (s == "text") return SlotType::text;
    if (s == "integer") return SlotType::integer;
    if (s == "number") return SlotType::number;
    if (s == "boolean") return SlotType::boolean;
    if (s == "date_text") return SlotType::date_text;
    if (s == "time_text") return SlotType::time_text;
    if (s == "enum_text") return SlotType::enum_text;
    return std::nullopt;
}

bool is_string_slot(SlotType t) {
    return t == SlotType::text || t == SlotType::date_text || t == SlotType::time_text ||
           t == SlotType::enum_text;
}

const SlotSpec* IntentSchema::find_slot(const std::string& name) const {
    for (const auto& slot : slots)
        if (slot.name == name) return &slot;
    return nullptr;
}

std::vector<std::string> IntentSchema::mandatory_slots() const {
    std::vector<std::string> out;
    for (const auto& slot : slots)
        if (slot.mandatory) out.push_back(slot.name);
    return out;
}

void IntentSchema::validate() const {
    if (!valid_identifier(intent_name))
        throw PreconditionError("invalid intent name: '" + intent_name + "'");
    if (!valid_identifier(domain))
        throw PreconditionError("invalid domain: '" + domain + "' (intent " + intent_name + ")");
    if (!valid_identifier(entity_name))
        throw PreconditionError("invalid entity name: '" + entity_name + "' (intent " +
                                intent_name + ")");
    std::set<std::string> seen;
    for (const auto& slot : slots) {
        if (!valid_identifier(slot.name))
            throw PreconditionError("invalid slot name: '" + slot.name + "' (intent " +
                                    intent_name + ")");
        if (!seen.insert(slot.name).second)
            throw PreconditionError("duplicate slot name: '" + slot.name + "' (intent " +
                                    intent_name + ")");
        if (slot.value_type == SlotType::enum_text && slot.allowed_values.empty())
            throw PreconditionError("enum_text slot '" + slot.name +
                                    "' has no allowed values (intent " + intent_name + ")");
    }
}

const IntentSchema* SchemaCatalog::find(const std::string& intent_name) const {
    for (const auto& intent : intents)
        if (intent.intent_name == intent_name) return &intent;
    return nullptr;
}

std::vector<std::string> SchemaCatalog::domains() const {
    std::vector<std::string> out;
    for (const auto& intent : intents)
        if (std::find(out.begin(), out.end(), intent.domain) == out.end())
            out.push_back(intent.domain);
    return out;
}

std::size_t SchemaCatalog::total_slot_count() const {
    std::size_t n = 0;
    for (const auto& intent : intents) n += intent.slots.size();
    return n;
}

void SchemaCatalog::validate() const {
    std::set<std::string> names;
    std::set<std::string> transactional_entities;
    for (const auto& intent : intents) {
        intent.validate();
        if (!names.insert(intent.intent_name).second)
            throw PreconditionError("duplicate intent name: " + intent.intent_name);
        if (intent.kind == IntentKind::transactional)
            transactional_entities.insert(intent.entity_name);
    }
    for (const auto& intent : intents) {
        if (intent.kind == IntentKind::query &&
            !transactional_entities.count(intent.entity_name))
            throw PreconditionError("query intent " + intent.intent_name +
                                    " returns entity '" + intent.entity_name +
                                    "' that no transactional intent produces");
    }
}

bool value_conforms(const SlotSpec& spec, const dsl::Value& value) {
    switch (spec.value_type) {
        case SlotType::text:
        case SlotType::date_text:
        case SlotType::time_text:
            return value.is_text();
        case SlotType::enum_text: {
            if (!value.is_text()) return false;
            const std::string needle = trim(value.text_value());
            return std::any_of(spec.allowed_values.begin(), spec.allowed_values.end(),
                               [&](const std::string& v) { return v == needle; });
        }
        case SlotType::integer:
            return value.is_integer();
        case SlotType::number:
            return value.is_number() || value.is_integer();
        case SlotType::boolean:
            return value.is_boolean();
    }
    return false;
}

IntentSchema parse_stage1_reply(const std::string& reply, const std::string& description) {
    IntentSchema schema;
    schema.kind = IntentKind::transactional;
    schema.description = description;
    bool saw_intent = false, saw_domain = false, saw_entity = false, saw_confirm = false;

    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        auto colon = line.find(':');
        if (colon == std::string::npos)
            throw ParseError("stage-1 reply line has no key: '" + line + "'");
        std::string key = trim(line.substr(0, colon));
        std::string rest = trim(line.substr(colon + 1));
        if (key == "INTENT") {
            schema.intent_name = rest;
            saw_intent = true;
        } else if (key == "DOMAIN") {
            schema.domain = rest;
            saw_domain = true;
        } else if (key == "ENTITY") {
            schema.entity_name = rest;
            saw_entity = true;
        } else if (key == "CONFIRM") {
            std::string v = lower(rest);
            if (v != "true" && v != "false")
                throw ParseError("stage-1 CONFIRM must be true or false, got '" + rest + "'");
            schema.requires_confirmation = v == "true";
            saw_confirm = true;
        } else if (key == "SLOT") {
            auto fields = split(rest, '|');
            if (fields.size() != 3 && fields.size() != 4)
                throw ParseError("stage-1 SLOT line needs name|type|mandatory: '" + line + "'");
            SlotSpec slot;
            slot.name = trim(fields[0]);
            auto type = slot_type_from_string(trim(fields[1]));
            if (!type) throw ParseError("unknown slot type '" + fields[1] + "'");
            slot.value_type = *type;
            std::string mand = trim(fields[2]);
            if (mand == "mandatory") slot.mandatory = true;
            else if (mand == "optional") slot.mandatory = false;
            else throw ParseError("slot must be mandatory or optional, got '" + mand + "'");
            if (fields.size() == 4)
                for (const auto& v : split(fields[3], ','))
                    if (!trim(v).empty()) slot.allowed_values.push_back(trim(v));
            schema.slots.push_back(std::move(slot));
        } else {
            throw ParseError("unexpected stage-1 line key '" + key + "'");
        }
    }
    if (!saw_intent || !saw_domain || !saw_entity || !saw_confirm)
        throw ParseError("stage-1 reply missing INTENT/DOMAIN/ENTITY/CONFIRM line");
    try {
        schema.validate();
    } catch (const PreconditionError& e) {
        throw ParseError(std::string("stage-1 reply produced invalid schema: ") + e.what());
    }
    return schema;
}

IntentSchema generate_intent_schema(const std::string& description, LLMProvider& provider,
                                    double temperature, std::optional<std::uint64_t> seed) {
    if (trim(description).empty())
        throw PreconditionError("intent description must be non-empty");
    std::string prompt = prompts::PromptLibrary::builtin().render(
        "stage01", {{"description", description}});
    std::string reply = provider.complete(prompt, temperature, seed);
    return parse_stage1_reply(reply, description);
}

std::optional<dsl::Value> coerce_candidate(const SlotSpec& spec, const std::string& raw) {
    const std::string text = trim(raw);
    if (text.empty()) return std::nullopt;
    switch (spec.value_type) {
        case SlotType::text:
        case SlotType::date_text:
        case SlotType::time_text:
            return dsl::Value::text(text);
        case SlotType::enum_text: {
            for (const auto& allowed : spec.allowed_values)
                if (allowed == text) return dsl::Value::text(text);
            return std::nullopt;
        }
        case SlotType::integer: {
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || p != text.data() + text.size()) return std::nullopt;
            return dsl::Value::integer(v);
        }
        case SlotType::number: {
            double v = 0;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || p != text.data() + text.size()) return std::nullopt;
            return dsl::Value::number(v);
        }
        case SlotType::boolean: {
            std::string v = lower(text);
            if (v == "true") return dsl::Value::boolean(true);
            if (v == "false") return dsl::Value::boolean(false);
            return std::nullopt;
        }
    }
    return std::nullopt;
}

SlotValuePool generate_slot_value_pool(const IntentSchema& schema, LLMProvider& provider,
                                       double temperature, std::optional<std::uint64_t> seed) {
    schema.validate();
    std::string prompt = prompts::PromptLibrary::builtin().render(
        "stage02", {{"schema", render_prompt_block(schema)}});
    std::string reply = provider.complete(prompt, temperature, seed);

    SlotValuePool pool;
    pool.intent_name = schema.intent_name;
    std::set<std::string> dropped;  // slots that had only non-conforming candidates
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (line.rfind("VALUE:", 0) != 0)
            throw ParseError("stage-2 reply line must start with VALUE: '" + line + "'");
        auto fields = split(trim(line.substr(6)), '|');
        if (fields.size() != 2)
            throw ParseError("stage-2 VALUE line needs slot|value: '" + line + "'");
        std::string slot_name = trim(fields[0]);
        const SlotSpec* spec = schema.find_slot(slot_name);
        if (!spec)
            throw ParseError("stage-2 reply names unknown slot '" + slot_name + "'");
        if (auto value = coerce_candidate(*spec, fields[1])) {
            auto& vec = pool.values_per_slot[slot_name];
            if (std::find(vec.begin(), vec.end(), *value) == vec.end())
                vec.push_back(std::move(*value));
        } else {
            dropped.insert(slot_name);
        }
    }
    for (const auto& slot : schema.slots) {
        auto it = pool.values_per_slot.find(slot.name);
        if (it != pool.values_per_slot.end() && !it->second.empty()) continue;
        if (dropped.count(slot.name))
            throw TypeMismatch("all stage-2 candidates for slot '" + slot.name +
                               "' failed the " + to_string(slot.value_type) + " type check");
        throw ParseError("stage-2 reply has no candidates for slot '" + slot.name + "'");
    }
    return pool;
}

IntentSchema derive_query_intent(const IntentSchema& transactional) {
    if (transactional.kind != IntentKind::transactional)
        throw PreconditionError("derive_query_intent requires a transactional intent");
    IntentSchema query;
    query.intent_name = "find_" + transactional.entity_name;
    query.domain = transactional.domain;
    query.kind = IntentKind::query;
    query.entity_name = transactional.entity_name;
    query.requires_confirmation = false;
    query.description = "Find " + transactional.entity_name;
    query.slots = transactional.slots;
    for (auto& slot : query.slots) slot.mandatory = false;
    return query;
}

SchemaCatalog merge_query_intents(const SchemaCatalog& catalog) {
    SchemaCatalog out;
    std::map<std::string, std::size_t> query_index_by_entity;
    for (const auto& intent : catalog.intents) {
        if (intent.kind != IntentKind::query) {
            out.intents.push_back(intent);
            continue;
        }
        auto it = query_index_by_entity.find(intent.entity_name);
        if (it == query_index_by_entity.end()) {
            query_index_by_entity[intent.entity_name] = out.intents.size();
            out.intents.push_back(intent);
            continue;
        }
        IntentSchema& kept = out.intents[it->second];
        for (const auto& slot : intent.slots)
            if (!kept.find_slot(slot.name)) kept.slots.push_back(slot);
    }
    return out;
}

void save_catalog(const SchemaCatalog& catalog, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open catalog file for writing: " + path);
    for (const auto& intent : catalog.intents) {
        ordered_json j;
        j["intent_name"] = intent.intent_name;
        j["domain"] = intent.domain;
        j["kind"] = intent.kind == IntentKind::query ? "query" : "transactional";
        j["slots"] = ordered_json::array();
        for (const auto& slot : intent.slots) j["slots"].push_back(slot_to_json(slot));
        j["entity_name"] = intent.entity_name;
        j["requires_confirmation"] = intent.requires_confirmation;
        j["description"] = intent.description;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing catalog file: " + path);
}

SchemaCatalog load_catalog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open catalog file: " + path);
    SchemaCatalog catalog;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
            IntentSchema intent;
            intent.intent_name = j.at("intent_name").get<std::string>();
            intent.domain = j.at("domain").get<std::string>();
            std::string kind = j.at("kind").get<std::string>();
            if (kind == "query") intent.kind = IntentKind::query;
            else if (kind == "transactional") intent.kind = IntentKind::transactional;
            else throw ParseError("unknown intent kind '" + kind + "'");
            for (const auto& js : j.at("slots")) intent.slots.push_back(slot_from_json(js));
            intent.entity_name = j.at("entity_name").get<std::string>();
            intent.requires_confirmation = j.at("requires_confirmation").get<bool>();
            intent.description = j.at("description").get<std::string>();
            catalog.intents.push_back(std::move(intent));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("malformed catalog record: ") + e.what(), lineno);
        } catch (const ParseError& e) {
            throw SchemaError(std::string("malformed catalog record: ") + e.what(), lineno);
        }
    }
    catalog.validate();
    return catalog;
}

void save_pools(const std::vector<SlotValuePool>& pools, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open pool file for writing: " + path);
    for (const auto& pool : pools) {
        ordered_json j;
        j["intent_name"] = pool.intent_name;
        ordered_json values = ordered_json::object();
        for (const auto& [slot, candidates] : pool.values_per_slot) {
            ordered_json arr = ordered_json::array();
            for (const auto& v : candidates) arr.push_back(dsl::serialize_value(v));
            values[slot] = std::move(arr);
        }
        j["values_per_slot"] = std::move(values);
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing pool file: " + path);
}

std::vector<SlotValuePool> load_pools(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pool file: " + path);
    std::vector<SlotValuePool> pools;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            ordered_json j = ordered_json::parse(line);
            SlotValuePool pool;
            pool.intent_name = j.at("intent_name").get<std::string>();
            for (const auto& [slot, arr] : j.at("values_per_slot").items())
                for (const auto& v : arr)
                    pool.values_per_slot[slot].push_back(
                        dsl::parse_value(v.get<std::string>()));
            pools.push_back(std::move(pool));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("malformed pool record: ") + e.what(), lineno);
        }
    }
    return pools;
}

}  // namespace convgen::schema
