#pragma once
// Intent schemas: the typed description of what each intent needs.
// Stage 1 generates transactional schemas from one-line descriptions,
// stage 2 generates plausible values for every slot, and query intents
// are derived mechanically from the transactional ones.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convgen/command_dsl.hpp"
#include "convgen/provider.hpp"

namespace convgen::schema {

enum class SlotType { text, integer, number, boolean, date_text, time_text, enum_text };

std::string to_string(SlotType t);
std::optional<SlotType> slot_type_from_string(const std::string& s);

// Slots whose values are extracted from spans of the user utterance.
bool is_string_slot(SlotType t);

struct SlotSpec {
    std::string name;
    SlotType value_type = SlotType::text;
    bool mandatory = false;
    std::vector<std::string> allowed_values;  // enum_text only

    friend bool operator==(const SlotSpec&, const SlotSpec&) = default;
};

enum class IntentKind { transactional, query };

struct IntentSchema {
    std::string intent_name;
    std::string domain;
    IntentKind kind = IntentKind::transactional;
    std::vector<SlotSpec> slots;
    std::string entity_name;  // entity type this intent creates or returns
    bool requires_confirmation = true;
    std::string description;

    const SlotSpec* find_slot(const std::string& name) const;
    std::vector<std::string> mandatory_slots() const;

    // Throws PreconditionError when an invariant is broken.
    void validate() const;

    friend bool operator==(const IntentSchema&, const IntentSchema&) = default;
};

struct SchemaCatalog {
    std::vector<IntentSchema> intents;

    const IntentSchema* find(const std::string& intent_name) const;
    // Distinct domains in first-appearance order.
    std::vector<std::string> domains() const;
    std::size_t total_slot_count() const;
    void validate() const;

    friend bool operator==(const SchemaCatalog&, const SchemaCatalog&) = default;
};

struct SlotValuePool {
    std::string intent_name;
    std::map<std::string, std::vector<dsl::Value>> values_per_slot;

    friend bool operator==(const SlotValuePool&, const SlotValuePool&) = default;
};

// True when the value is usable for a slot of this spec. Integers are
// accepted for number slots; placeholders never type-check.
bool value_conforms(const SlotSpec& spec, const dsl::Value& value);

// ---- stage 1: schema from description ----
//
// Provider replies use the fixed line format
//   INTENT: <name>
//   DOMAIN: <name>
//   SLOT: <name>|<type>|<mandatory|optional>[|allowed,values]
//   ENTITY: <name>
//   CONFIRM: <true|false>
IntentSchema generate_intent_schema(const std::string& description, LLMProvider& provider,
                                    double temperature = 0.7,
                                    std::optional<std::uint64_t> seed = std::nullopt);

// Parses a stage-1 reply without touching a provider (used by loaders too).
IntentSchema parse_stage1_reply(const std::string& reply, const std::string& description);

// ---- stage 2: plausible values per slot ----
//
// Reply format: one `VALUE: <slot>|<text>` line per candidate. Candidates
// that fail the slot's type check are dropped; a slot left with zero
// candidates is an error.
SlotValuePool generate_slot_value_pool(const IntentSchema& schema, LLMProvider& provider,
                                       double temperature = 0.7,
                                       std::optional<std::uint64_t> seed = std::nullopt);

// Builds a typed value from candidate text for the given slot, or nullopt
// when the text does not conform.
std::optional<dsl::Value> coerce_candidate(const SlotSpec& spec, const std::string& text);

// TOOL:/SLOT: block used wherever a schema is shown to a provider.
std::string render_prompt_block(const IntentSchema& schema);

// ---- query intent derivation and merging ----

// find_<entity_name>, all slots optional, no confirmation.
IntentSchema derive_query_intent(const IntentSchema& transactional);

// Merges query intents sharing an entity_name (slot union, first name kept).
SchemaCatalog merge_query_intents(const SchemaCatalog& catalog);

// ---- catalog persistence (line-delimited, one intent per line) ----
void save_catalog(const SchemaCatalog& catalog, const std::string& path);
SchemaCatalog load_catalog(const std::string& path);

void save_pools(const std::vector<SlotValuePool>& pools, const std::string& path);
std::vector<SlotValuePool> load_pools(const std::string& path);

}  // namespace convgen::schema
