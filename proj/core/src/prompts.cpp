#include "convgen/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "convgen/errors.hpp"

namespace convgen::prompts {

namespace {

const char* kStage01 = R"(STAGE: 1
You design intent schemas for a virtual assistant. Given the intent
description below, reply with exactly these lines and nothing else:
INTENT: <snake_case_name>
DOMAIN: <snake_case_domain>
SLOT: <name>|<text|integer|number|boolean|date_text|time_text|enum_text>|<mandatory|optional>
ENTITY: <snake_case_entity_name>
CONFIRM: <true|false>
Write one SLOT line per slot. For enum_text slots append |choice,choice.

== DESCRIPTION ==
{{description}}
)";

const char* kStage02 = R"(STAGE: 2
Suggest plausible values for every slot of this intent, to seed varied
conversations. Reply with lines of the form VALUE: <slot>|<value>,
at least three per slot, and nothing else.

== SCHEMA ==
{{schema}}
)";

const char* kStage03 = R"(STAGE: 3
Decide which intents one user would plausibly perform in a single
conversation. The sequence must start with the primary intent, contain
exactly the requested number of intents, and use only intents from the
candidate list. Reply with one line:
SEQUENCE: <intent>, <intent>, ...

PRIMARY: {{primary}}
COUNT: {{count}}
== CANDIDATES ==
{{candidates}}
)";

const char* kStage04 = R"(STAGE: 4
Review the slot values below and make them realistic and coherent with
each other (dates in order, plausible amounts, consistent names).
Reply with one VALUE: <slot>|<value> line per slot, keeping exactly the
same set of slots.

== SCHEMA ==
{{schema}}
== VALUES ==
{{values}}
)";

const char* kStage05 = R"(STAGE: 5
Write one short paragraph explaining why this user, partway through the
conversation summarised below, now wants to perform the next intent.

== STORY ==
{{history_summary}}
NEXT: {{next_intent}}
)";

const char* kStage06 = R"(STAGE: 6
Choose likely slot values for the next intent, consistent with the
reason given. Reply with one VALUE: <slot>|<value> line per slot listed
in the schema, and nothing else.

== SCHEMA ==
{{schema}}
REASON: {{justification}}
== CANDIDATES ==
{{candidates}}
)";

const char* kStage07 = R"(STAGE: 7
Consider every intent in this conversation plan together and edit slot
values that are inconsistent between intents. Reply OK if nothing needs
to change, otherwise one VALUE: <intent_index>|<slot>|<value> line per
edit. Do not add or remove intents or slots.

== PLAN ==
{{plan}}
)";

const char* kStage08 = R"(STAGE: 8
Invent realistic entities this query could return, as many as the count
below. Reply with one line per entity of the form
ENTITY: {"slot": value, ...}, covering at least the mandatory slots.

COUNT: {{count}}
== SCHEMA ==
{{schema}}
== CANDIDATES ==
{{candidates}}
)";

const char* kStage09 = R"(STAGE: 9
You are the user talking to a virtual assistant. Follow the conversation
rules in order: introduce each goal, answer the assistant's questions
with the planned values, and confirm when asked. When a rule carries a
token, perform that behaviour at its trigger and end the message with
the token. Write one natural user message.

== RULES ==
{{rules}}
== HISTORY ==
{{history}}
== TASK ==
Write the next user message.
)";

const char* kStage10 = R"(STAGE: 10
Label what the user asked for in the latest turn as system commands.
Use x<N> = intent_name(slot=value, ...) when an intent is first
mentioned, x<N>.slot = value for later slot filling, confirm(x<N>) once
the user agrees to go ahead, and say() when nothing should reach the
back-end. Never write a string value literally: use <STR> in place of
every string slot value. One command per line, nothing else.

== TOOLS ==
{{tools}}
== HISTORY ==
{{history}}
== TASK ==
Write the system command(s) for the latest turn.
)";

const char* kStage11 = R"(STAGE: 11
Fill every <STR> placeholder in the commands below. Each replacement
must be a contiguous span of the user message, copied verbatim. Reply
with the same commands, one per line, changed only where a placeholder
was.

== USER ==
{{user_text}}
== COMMANDS ==
{{commands}}
== TASK ==
Rewrite the commands with the placeholders filled.
)";

const char* kStage12 = R"(STAGE: 12
You speak for the assistant. Given the conversation and the latest
back-end signal, write one short reply to the user: ask for the first
missing slot, ask for confirmation, report completion, read out query
results, or steer the conversation back on track.

== HISTORY ==
{{history}}
SIGNAL: {{signal}}
== TASK ==
Write the assistant's reply.
)";

const char* kStage14 = R"(STAGE: 14
Independently label the latest turn as system commands. You can see the
rules the user was following, but label only what the user actually
said. Use the same command syntax as the system labeller, with <STR> in
place of every string slot value. One command per line, nothing else.

== RULES ==
{{rules}}
== TOOLS ==
{{tools}}
== HISTORY ==
{{history}}
== TASK ==
Write the system command(s) for the latest turn.
)";

const char* kSalvage = R"(STAGE: salvage
The conversation below is being cut short. Write one short assistant
reply that politely interrupts and wraps up the conversation.

== HISTORY ==
{{history}}
== TASK ==
Write the closing assistant reply.
)";

std::map<std::string, std::string> builtin_templates() {
    return {
        {"stage01", kStage01}, {"stage02", kStage02}, {"stage03", kStage03},
        {"stage04", kStage04}, {"stage05", kStage05}, {"stage06", kStage06},
        {"stage07", kStage07}, {"stage08", kStage08}, {"stage09", kStage09},
        {"stage10", kStage10}, {"stage11", kStage11}, {"stage12", kStage12},
        {"stage14", kStage14}, {"salvage", kSalvage},
    };
}

}  // namespace

const PromptLibrary& PromptLibrary::builtin() {
    static PromptLibrary lib = [] {
        PromptLibrary l;
        l.templates_ = builtin_templates();
        return l;
    }();
    return lib;
}

PromptLibrary PromptLibrary::from_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("prompt directory not found: " + dir);
    PromptLibrary lib = builtin();
    for (auto& [key, text] : lib.templates_) {
        fs::path p = fs::path(dir) / (key + ".txt");
        if (fs::exists(p)) {
            std::ifstream in(p);
            if (!in) throw IoError("cannot read prompt template " + p.string());
            std::ostringstream ss;
            ss << in.rdbuf();
            text = ss.str();
        }
    }
    return lib;
}

const std::string& PromptLibrary::raw(const std::string& key) const {
    auto it = templates_.find(key);
    if (it == templates_.end()) throw ConfigError("unknown prompt template: " + key);
    return it->second;
}

std::string PromptLibrary::render(
    const std::string& key,
    const std::vector<std::pair<std::string, std::string>>& vars) const {
    std::string out = raw(key);
    for (const auto& [name, value] : vars) {
        const std::string needle = "{{" + name + "}}";
        std::size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return out;
}

std::vector<std::string> PromptLibrary::keys() const {
    std::vector<std::string> out;
    out.reserve(templates_.size());
    for (const auto& [k, v] : templates_) out.push_back(k);
    return out;
}

}  // namespace convgen::prompts
