#pragma once
// The mock back-end. One BackendSession drives one conversation: system
// commands come in, signals go out. Intent sessions move
// collecting -> awaiting_confirmation -> performed, or get cancelled.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convgen/command_dsl.hpp"
#include "convgen/schema.hpp"

namespace convgen::backend {

enum class SessionState { collecting, awaiting_confirmation, performed, cancelled };

std::string to_string(SessionState s);

struct IntentSession {
    int var = 0;
    std::string schema_ref;  // intent name
    std::map<std::string, dsl::Value> provided;
    SessionState state = SessionState::collecting;
};

class EntityStore {
public:
    // Inserts a record with the next `<entity_name>-<n>` id; returns the id.
    std::string add(const std::string& entity_name, std::map<std::string, dsl::Value> values);

    const std::vector<dsl::EntityRecord>& of(const std::string& entity_name) const;
    bool empty() const { return entities_.empty(); }
    const std::map<std::string, std::vector<dsl::EntityRecord>>& all() const { return entities_; }

private:
    std::map<std::string, std::vector<dsl::EntityRecord>> entities_;
    std::map<std::string, int> next_id_;
};

// Exact-match entity lookup for a query intent. Text fields compare
// case-insensitively after trimming; a miss is an empty list, not an error.
std::vector<dsl::EntityRecord> query_filter(const EntityStore& store,
                                            const schema::IntentSchema& intent,
                                            const dsl::ArgList& args);

struct GoalSlotState {
    std::string intent_name;
    bool cancelled = false;
    std::map<std::string, dsl::Value> slots;

    friend bool operator==(const GoalSlotState&, const GoalSlotState&) = default;
};

// var -> provided slots, cancelled sessions included and flagged.
using GoalState = std::map<int, GoalSlotState>;

class BackendSession {
public:
    BackendSession(const schema::SchemaCatalog& catalog, EntityStore store);

    // Routes one system command. Returns the resulting signal, or nullopt
    // for say() (which goes to the response agent, not the back-end).
    // Throws UnknownIntent / UnknownVariable / TypeMismatch /
    // InvalidTransition.
    std::optional<dsl::SignalPayload> apply_command(const dsl::Command& cmd);

    GoalState goal_state() const;

    void mark_cancelled(int var);

    const std::map<int, IntentSession>& sessions() const { return sessions_; }
    const EntityStore& store() const { return store_; }

private:
    dsl::SignalPayload evaluate_session(IntentSession& session);
    void check_value(const schema::IntentSchema& schema, const std::string& slot,
                     const dsl::Value& value) const;

    const schema::SchemaCatalog& catalog_;
    EntityStore store_;
    std::map<int, IntentSession> sessions_;
};

}  // namespace convgen::backend
