#include "convgen/backend.hpp"

#include <algorithm>
#include <cctype>

namespace convgen::backend {

namespace {

std::string normalize_text(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out = s.substr(b, e - b);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool values_match(const dsl::Value& stored, const dsl::Value& wanted) {
    if (stored.is_text() && wanted.is_text())
        return normalize_text(stored.text_value()) == normalize_text(wanted.text_value());
    // number slots may hold either numeric alternative
    if (stored.is_integer() && wanted.is_number())
        return static_cast<double>(stored.integer_value()) == wanted.number_value();
    if (stored.is_number() && wanted.is_integer())
        return stored.number_value() == static_cast<double>(wanted.integer_value());
    return stored == wanted;
}

}  // namespace

std::string to_string(SessionState s) {
    switch (s) {
        case SessionState::collecting: return "collecting";
        case SessionState::awaiting_confirmation: return "awaiting_confirmation";
        case SessionState::performed: return "performed";
        case SessionState::cancelled: return "cancelled";
    }
    return "collecting";
}

std::string EntityStore::add(const std::string& entity_name,
                             std::map<std::string, dsl::Value> values) {
    int n = ++next_id_[entity_name];
    dsl::EntityRecord rec;
    rec.id = entity_name + "-" + std::to_string(n);
    rec.values = std::move(values);
    entities_[entity_name].push_back(rec);
    return entities_[entity_name].back().id;
}

const std::vector<dsl::EntityRecord>& EntityStore::of(const std::string& entity_name) const {
    static const std::vector<dsl::EntityRecord> kEmpty;
    auto it = entities_.find(entity_name);
    return it == entities_.end() ? kEmpty : it->second;
}

std::vector<dsl::EntityRecord> query_filter(const EntityStore& store,
                                            const schema::IntentSchema& intent,
                                            const dsl::ArgList& args) {
    if (intent.kind != schema::IntentKind::query)
        throw PreconditionError("query_filter requires a query intent");
    for (const auto& [slot, value] : args) {
        const auto* spec = intent.find_slot(slot);
        if (!spec)
            throw TypeMismatch("unknown filter slot '" + slot + "' for " + intent.intent_name);
        if (!schema::value_conforms(*spec, value))
            throw TypeMismatch("filter value for '" + slot + "' does not match type " +
                               schema::to_string(spec->value_type));
    }
    std::vector<dsl::EntityRecord> out;
    for (const auto& rec : store.of(intent.entity_name)) {
        bool ok = true;
        for (const auto& [slot, wanted] : args) {
            auto it = rec.values.find(slot);
            if (it == rec.values.end() || !values_match(it->second, wanted)) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(rec);
    }
    return out;
}

BackendSession::BackendSession(const schema::SchemaCatalog& catalog, EntityStore store)
    : catalog_(catalog), store_(std::move(store)) {}

void BackendSession::check_value(const schema::IntentSchema& schema, const std::string& slot,
                                 const dsl::Value& value) const {
    const auto* spec = schema.find_slot(slot);
    if (!spec)
        throw TypeMismatch("intent " + schema.intent_name + " has no slot '" + slot + "'");
    if (!schema::value_conforms(*spec, value))
        throw TypeMismatch("value for " + schema.intent_name + "." + slot +
                           " does not match type " + schema::to_string(spec->value_type));
}

dsl::SignalPayload BackendSession::evaluate_session(IntentSession& session) {
    const auto* schema = catalog_.find(session.schema_ref);
    std::vector<std::string> missing;
    for (const auto& name : schema->mandatory_slots())
        if (!session.provided.count(name)) missing.push_back(name);
    if (!missing.empty()) {
        session.state = SessionState::collecting;
        return dsl::MissingSlots{session.var, std::move(missing)};
    }
    if (schema->requires_confirmation) {
        session.state = SessionState::awaiting_confirmation;
        return dsl::ConfirmationRequired{session.var};
    }
    session.state = SessionState::performed;
    std::string id = store_.add(schema->entity_name, session.provided);
    return dsl::Performed{session.var, std::move(id)};
}

std::optional<dsl::SignalPayload> BackendSession::apply_command(const dsl::Command& cmd) {
    if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd)) {
        const auto* schema = catalog_.find(ic->intent);
        if (!schema) throw UnknownIntent("unknown intent: " + ic->intent);
        if (sessions_.count(ic->var))
            throw InvalidTransition("variable x" + std::to_string(ic->var) +
                                    " is already bound to an intent");
        for (const auto& [slot, value] : ic->args) check_value(*schema, slot, value);

        if (schema->kind == schema::IntentKind::query) {
            IntentSession session;
            session.var = ic->var;
            session.schema_ref = ic->intent;
            for (const auto& [slot, value] : ic->args) session.provided[slot] = value;
            session.state = SessionState::performed;
            sessions_[ic->var] = std::move(session);
            return dsl::QueryResult{ic->var, query_filter(store_, *schema, ic->args)};
        }

        IntentSession session;
        session.var = ic->var;
        session.schema_ref = ic->intent;
        for (const auto& [slot, value] : ic->args) session.provided[slot] = value;
        auto [it, inserted] = sessions_.emplace(ic->var, std::move(session));
        return evaluate_session(it->second);
    }

    if (const auto* aa = std::get_if<dsl::AttrAssign>(&cmd)) {
        auto it = sessions_.find(aa->var);
        if (it == sessions_.end())
            throw UnknownVariable("assignment to unknown variable x" + std::to_string(aa->var));
        IntentSession& session = it->second;
        if (session.state == SessionState::performed ||
            session.state == SessionState::cancelled)
            throw InvalidTransition("assignment to " + to_string(session.state) +
                                    " intent x" + std::to_string(aa->var));
        const auto* schema = catalog_.find(session.schema_ref);
        check_value(*schema, aa->slot, aa->value);
        session.provided[aa->slot] = aa->value;
        return evaluate_session(session);
    }

    if (const auto* cf = std::get_if<dsl::Confirm>(&cmd)) {
        auto it = sessions_.find(cf->var);
        if (it == sessions_.end())
            throw UnknownVariable("confirm of unknown variable x" + std::to_string(cf->var));
        IntentSession& session = it->second;
        if (session.state != SessionState::awaiting_confirmation)
            throw InvalidTransition("confirm of x" + std::to_string(cf->var) + " in state " +
                                    to_string(session.state));
        const auto* schema = catalog_.find(session.schema_ref);
        session.state = SessionState::performed;
        std::string id = store_.add(schema->entity_name, session.provided);
        return dsl::Performed{cf->var, std::move(id)};
    }

    if (std::holds_alternative<dsl::Say>(cmd)) return std::nullopt;

    // hint() never belongs in a system turn; the post-filters reject the
    // conversation, the back-end just refuses to act on it.
    throw InvalidTransition("hint() is not a back-end command");
}

GoalState BackendSession::goal_state() const {
    GoalState out;
    for (const auto& [var, session] : sessions_) {
        GoalSlotState gs;
        gs.intent_name = session.schema_ref;
        gs.cancelled = session.state == SessionState::cancelled;
        gs.slots = session.provided;
        out[var] = std::move(gs);
    }
    return out;
}

void BackendSession::mark_cancelled(int var) {
    auto it = sessions_.find(var);
    if (it == sessions_.end())
        throw UnknownVariable("cancel of unknown variable x" + std::to_string(var));
    if (it->second.state == SessionState::performed)
        throw InvalidTransition("cannot cancel performed intent x" + std::to_string(var));
    it->second.state = SessionState::cancelled;
}

}  // namespace convgen::backend
