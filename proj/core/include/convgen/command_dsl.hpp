#pragma once
// The function-call annotation language used in system and signal turns.
//
// One command per line. Grammar:
//   command := VAR "=" ident "(" kwargs? ")"
//            | VAR "." ident "=" value
//            | "say" "(" kwargs? ")"
//            | "confirm" "(" VAR ")"
//            | "hint" "(" STRING ")"
//   kwargs  := ident "=" value ("," ident "=" value)*
//   value   := STRING | INT | FLOAT | "True" | "False" | VAR | VAR "." ident
//            | "[" value ("," value)* "]" | "<STR>"
//   VAR     := "x" [0-9]+
//
// Strings are double-quoted with backslash escapes. "<STR>" is the
// placeholder used before string slot values are filled in. hint() should
// only ever appear in signal turns; it is accepted by the parser so that a
// mislabelled system turn can be represented and caught by the post-filters
// instead of failing at load time.
//
// Signal lines use a distinct prefix:
//   signal: missing_slots(x0, ["check_in_date"])
//   signal: confirmation_required(x0)
//   signal: performed(x0, id="...")
//   signal: query_result(x0, entities=[{id="...", slot=value, ...}])
//   signal: hint("...")

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "convgen/errors.hpp"

namespace convgen::dsl {

struct Value;

struct VarRef {
    int id = 0;
    friend bool operator==(const VarRef&, const VarRef&) = default;
};

struct AttrRef {
    int id = 0;
    std::string slot;
    friend bool operator==(const AttrRef&, const AttrRef&) = default;
};

// Stands in for a string slot value that has not been extracted yet.
struct Placeholder {
    friend bool operator==(const Placeholder&, const Placeholder&) = default;
};

struct Value {
    using Node = std::variant<std::string,          // Text
                              std::int64_t,         // Integer
                              double,               // Number
                              bool,                 // Boolean
                              VarRef, AttrRef,
                              std::vector<Value>,   // ListOf
                              Placeholder>;
    Node node;

    static Value text(std::string s) { return Value{std::move(s)}; }
    static Value integer(std::int64_t v) { return Value{v}; }
    static Value number(double v) { return Value{v}; }
    static Value boolean(bool v) { return Value{v}; }
    static Value var(int id) { return Value{VarRef{id}}; }
    static Value attr(int id, std::string slot) { return Value{AttrRef{id, std::move(slot)}}; }
    static Value list(std::vector<Value> vs) { return Value{std::move(vs)}; }
    static Value placeholder() { return Value{Placeholder{}}; }

    bool is_text() const { return std::holds_alternative<std::string>(node); }
    bool is_integer() const { return std::holds_alternative<std::int64_t>(node); }
    bool is_number() const { return std::holds_alternative<double>(node); }
    bool is_boolean() const { return std::holds_alternative<bool>(node); }
    bool is_placeholder() const { return std::holds_alternative<Placeholder>(node); }
    bool is_list() const { return std::holds_alternative<std::vector<Value>>(node); }

    const std::string& text_value() const { return std::get<std::string>(node); }
    std::int64_t integer_value() const { return std::get<std::int64_t>(node); }
    double number_value() const { return std::get<double>(node); }
    bool boolean_value() const { return std::get<bool>(node); }
    const std::vector<Value>& list_value() const { return std::get<std::vector<Value>>(node); }

    friend bool operator==(const Value&, const Value&) = default;
};

using ArgList = std::vector<std::pair<std::string, Value>>;

struct IntentCall {
    int var = 0;
    std::string intent;
    ArgList args;
    friend bool operator==(const IntentCall&, const IntentCall&) = default;
};

struct AttrAssign {
    int var = 0;
    std::string slot;
    Value value;
    friend bool operator==(const AttrAssign&, const AttrAssign&) = default;
};

struct Say {
    ArgList args;
    friend bool operator==(const Say&, const Say&) = default;
};

struct Confirm {
    int var = 0;
    friend bool operator==(const Confirm&, const Confirm&) = default;
};

// A hint mislabelled as a system command; always invalid in a dataset.
struct HintCall {
    std::string text;
    friend bool operator==(const HintCall&, const HintCall&) = default;
};

using Command = std::variant<IntentCall, AttrAssign, Say, Confirm, HintCall>;

// ---- signal payloads (mock back-end output) ----

struct EntityRecord {
    std::string id;
    std::map<std::string, Value> values;
    friend bool operator==(const EntityRecord&, const EntityRecord&) = default;
};

struct MissingSlots {
    int var = 0;
    std::vector<std::string> slots;  // non-empty
    friend bool operator==(const MissingSlots&, const MissingSlots&) = default;
};

struct ConfirmationRequired {
    int var = 0;
    friend bool operator==(const ConfirmationRequired&, const ConfirmationRequired&) = default;
};

struct Performed {
    int var = 0;
    std::string entity_id;
    friend bool operator==(const Performed&, const Performed&) = default;
};

struct QueryResult {
    int var = 0;
    std::vector<EntityRecord> entities;
    friend bool operator==(const QueryResult&, const QueryResult&) = default;
};

struct Hint {
    std::string text;
    friend bool operator==(const Hint&, const Hint&) = default;
};

using SignalPayload =
    std::variant<MissingSlots, ConfirmationRequired, Performed, QueryResult, Hint>;

// ---- operations ----

// Parses one command line. Whitespace between tokens is ignored.
// Throws SyntaxError (offset + expected token set) on malformed input,
// including duplicate keyword argument names.
Command parse_command(const std::string& line);

// Canonical single-line form; parse_command(serialize_command(c)) == c.
std::string serialize_command(const Command& cmd);

std::string serialize_value(const Value& v);
Value parse_value(const std::string& text);

// Renumbers variables in first-use order starting at x0, sorts keyword
// arguments by name, and rewrites references consistently. Variables are
// defined only by intent calls; a reference to a variable with no prior
// definition throws DanglingVarRef.
std::vector<Command> canonicalize(const std::vector<Command>& cmds);

// Equality under canonicalize (stage-13 "identical").
bool commands_equal(const std::vector<Command>& a, const std::vector<Command>& b);

// Raw textual equality, kept as a config toggle for stage 13.
bool commands_equal_raw(const std::vector<Command>& a, const std::vector<Command>& b);

// Signal line round-trip, `signal: ` prefix included.
std::string serialize_signal(const SignalPayload& sig);
SignalPayload parse_signal(const std::string& line);

bool contains_placeholder(const Command& cmd);
bool contains_placeholder(const std::vector<Command>& cmds);

}  // namespace convgen::dsl
