#include <doctest.h>

#include "convgen/agents.hpp"
#include "convgen/provider.hpp"
#include "convgen/simulated_provider.hpp"

using namespace convgen;
using namespace convgen::agents;

namespace {

schema::SchemaCatalog alarm_catalog() {
    schema::SchemaCatalog catalog;
    schema::IntentSchema alarm;
    alarm.intent_name = "set_alarm";
    alarm.domain = "device";
    alarm.kind = schema::IntentKind::transactional;
    alarm.entity_name = "alarms";
    alarm.requires_confirmation = false;
    alarm.slots = {{"alarm_time", schema::SlotType::time_text, true, {}},
                   {"label", schema::SlotType::text, false, {}}};
    catalog.intents = {alarm, schema::derive_query_intent(alarm)};
    return catalog;
}

planner::ConversationPlan alarm_plan() {
    planner::ConversationPlan plan;
    plan.seed = 41;
    plan.intent_sequence = {"set_alarm"};
    plan.slot_assignments = {{{"alarm_time", dsl::Value::text("7am")}}};
    return plan;
}

planner::ConversationRules rules_with_correction() {
    auto plan = alarm_plan();
    planner::Phenomenon ph;
    ph.kind = planner::PhenomenonKind::correction;
    ph.target_intent = 0;
    ph.target_slot = "alarm_time";
    ph.trigger = planner::TriggerHint::anywhere;
    ph.decoy_value = dsl::Value::text("6am");
    plan.phenomena.push_back(ph);
    return planner::compile_conversation_rules(plan);
}

TurnRecord user(const std::string& text,
                std::optional<planner::PhenomenonKind> kind = std::nullopt) {
    TurnRecord t;
    t.kind = TurnKind::user;
    t.text = text;
    t.phenomenon = kind;
    return t;
}

TurnRecord system_turn(const std::vector<std::string>& lines) {
    TurnRecord t;
    t.kind = TurnKind::system;
    for (const auto& line : lines) t.commands.push_back(dsl::parse_command(line));
    return t;
}

TurnRecord signal_turn(const std::string& line) {
    TurnRecord t;
    t.kind = TurnKind::signal;
    t.signal = dsl::parse_signal(line);
    return t;
}

TurnRecord response(const std::string& text) {
    TurnRecord t;
    t.kind = TurnKind::response;
    t.text = text;
    return t;
}

}  // namespace

TEST_CASE("user_turn: plain reply is stored as-is") {
    auto rules = planner::compile_conversation_rules(alarm_plan());
    ScriptedProvider provider(std::vector<std::string>{"Set an alarm for 7am please"});
    Limits limits;
    TurnRecord turn = user_turn(rules, {}, provider, limits, 1);
    CHECK(turn.kind == TurnKind::user);
    CHECK(turn.text == "Set an alarm for 7am please");
    CHECK_FALSE(turn.phenomenon.has_value());
}

TEST_CASE("user_turn: the token is stripped from the stored text and recorded") {
    auto rules = planner::compile_conversation_rules(alarm_plan());
    ScriptedProvider provider(
        std::vector<std::string>{"nothing, ignore that <OVERHEARD>"});
    Limits limits;
    TurnRecord turn = user_turn(rules, {}, provider, limits, 1);
    CHECK(turn.text == "nothing, ignore that");
    CHECK(turn.phenomenon == planner::PhenomenonKind::overheard_answer);
}

TEST_CASE("user_turn: a due phenomenon without its token aborts after retries") {
    auto rules = rules_with_correction();
    // History: alarm_time already provided, so the correction is due.
    std::vector<TurnRecord> history{
        user("Set an alarm for 6am"),
        system_turn({"x0 = set_alarm(alarm_time=\"6am\")"}),
        signal_turn("signal: performed(x0, id=\"alarms-1\")"),
        system_turn({"say()"}),
        response("Done."),
    };
    ScriptedProvider provider(std::vector<std::string>{
        "Thanks, all good.", "Thanks.", "Great."});
    Limits limits;
    CHECK_THROWS_AS(user_turn(rules, history, provider, limits, 1), MissingToken);

    ScriptedProvider compliant(std::vector<std::string>{
        "Actually, change the alarm time to 7am. <CORRECTION>"});
    TurnRecord turn = user_turn(rules, history, compliant, limits, 1);
    CHECK(turn.phenomenon == planner::PhenomenonKind::correction);
    CHECK(turn.text == "Actually, change the alarm time to 7am.");
}

TEST_CASE("system_label: placeholders required for string slots") {
    auto catalog = alarm_catalog();
    Limits limits;
    std::vector<TurnRecord> history{user("Set an alarm for 7am")};

    ScriptedProvider good(std::vector<std::string>{"x0 = set_alarm(alarm_time=<STR>)"});
    auto cmds = system_label(history, catalog, good, limits, 1);
    REQUIRE(cmds.size() == 1);
    CHECK(dsl::contains_placeholder(cmds));

    // literal strings violate the stage-10 contract, across retries
    ScriptedProvider literal(std::vector<std::string>{
        "x0 = set_alarm(alarm_time=\"7am\")", "x0 = set_alarm(alarm_time=\"7am\")",
        "x0 = set_alarm(alarm_time=\"7am\")"});
    CHECK_THROWS_AS(system_label(history, catalog, literal, limits, 1), ParseError);
}

TEST_CASE("system_label: say(message=<STR>) after an irrelevant reply parses") {
    auto catalog = alarm_catalog();
    Limits limits;
    std::vector<TurnRecord> history{user("did you see the game last night?")};
    ScriptedProvider provider(std::vector<std::string>{"say(message=<STR>)"});
    auto cmds = system_label(history, catalog, provider, limits, 1);
    REQUIRE(cmds.size() == 1);
    CHECK(std::holds_alternative<dsl::Say>(cmds[0]));
}

TEST_CASE("system_label: a retry can rescue one malformed reply") {
    auto catalog = alarm_catalog();
    Limits limits;
    std::vector<TurnRecord> history{user("Set an alarm for 7am")};
    ScriptedProvider flaky(std::vector<std::string>{
        "??? not a command", "x0 = set_alarm(alarm_time=<STR>)"});
    auto cmds = system_label(history, catalog, flaky, limits, 1);
    CHECK(cmds.size() == 1);
}

TEST_CASE("extract_string_slots: spans come from the user utterance") {
    Limits limits;
    std::vector<dsl::Command> cmds{dsl::parse_command("x0 = review_film(review=<STR>)")};
    const std::string user_text = "my review is an absolute classic! Great performances";

    ScriptedProvider good(std::vector<std::string>{
        "x0 = review_film(review=\"an absolute classic! Great performances\")"});
    auto filled = extract_string_slots(cmds, user_text, good, limits, 1);
    CHECK(dsl::serialize_command(filled[0]) ==
          "x0 = review_film(review=\"an absolute classic! Great performances\")");

    ScriptedProvider hallucinating(std::vector<std::string>{
        "x0 = review_film(review=\"a hallucinated masterpiece\")",
        "x0 = review_film(review=\"still not in the text\")"});
    CHECK_THROWS_AS(extract_string_slots(cmds, user_text, hallucinating, limits, 1),
                    SpanViolation);

    std::vector<dsl::Command> no_placeholder{dsl::parse_command("say()")};
    ScriptedProvider untouched(std::vector<std::string>{});
    CHECK_THROWS_AS(extract_string_slots(no_placeholder, user_text, untouched, limits, 1),
                    PreconditionError);
}

TEST_CASE("respond: empty replies retry, then the call fails") {
    Limits limits;
    std::vector<TurnRecord> history{user("Set an alarm for 7am"), system_turn({"say()"})};
    ScriptedProvider provider(std::vector<std::string>{"", "  ", "Could you repeat that?"});
    TurnRecord turn = respond(history, std::nullopt, provider, limits, 1);
    CHECK(turn.text == "Could you repeat that?");

    ScriptedProvider empty(std::vector<std::string>{"", "", ""});
    CHECK_THROWS_AS(respond(history, std::nullopt, empty, limits, 1), ParseError);
}

TEST_CASE("turn grammar: ordering rules") {
    CHECK_THROWS_AS(check_turn_grammar({response("hi")}), PreconditionError);
    CHECK_THROWS_AS(check_turn_grammar({user("hi"), user("hi again")}), PreconditionError);
    CHECK_THROWS_AS(
        check_turn_grammar({user("hi"), signal_turn("signal: confirmation_required(x0)")}),
        PreconditionError);
    // the canonical cycle passes
    check_turn_grammar({user("set an alarm for 7am"),
                        system_turn({"x0 = set_alarm(alarm_time=\"7am\")"}),
                        signal_turn("signal: performed(x0, id=\"alarms-1\")"),
                        system_turn({"say()"}), response("done")});
}

TEST_CASE("run_conversation: scripted single-intent transcript matches the oracle") {
    auto catalog = alarm_catalog();
    auto plan = alarm_plan();
    auto rules = planner::compile_conversation_rules(plan);
    auto provider = std::make_shared<ScriptedProvider>(std::vector<std::string>{
        "Set an alarm for 7am please",         // stage 9
        "x0 = set_alarm(alarm_time=<STR>)",    // stage 10
        "x0 = set_alarm(alarm_time=\"7am\")",  // stage 11
        "say()",                               // stage 10 after the signal
        "All set for 7am.",                    // stage 12
    });
    Limits limits;
    auto generated = run_conversation(plan, rules, catalog,
                                      AgentProviders::shared(provider), limits, 41);

    // hand-written expected transcript for the fixture script
    std::vector<TurnRecord> expected{
        user("Set an alarm for 7am please"),
        system_turn({"x0 = set_alarm(alarm_time=\"7am\")"}),
        signal_turn("signal: performed(x0, id=\"alarms-1\")"),
        system_turn({"say()"}),
        response("All set for 7am."),
    };
    CHECK(generated.turns == expected);
    CHECK(generated.phenomena.empty());
}

TEST_CASE("run_conversation: provider failure past the retry budget aborts") {
    auto catalog = alarm_catalog();
    auto plan = alarm_plan();
    auto rules = planner::compile_conversation_rules(plan);
    auto provider = std::make_shared<ScriptedProvider>(std::vector<std::string>{});
    Limits limits;
    try {
        run_conversation(plan, rules, catalog, AgentProviders::shared(provider), limits, 41);
        FAIL("expected AbortedConversation");
    } catch (const AbortedConversation& e) {
        CHECK(e.reason() == AbortReason::provider_failure);
        CHECK(e.prefix().empty());
    }
}

namespace {

// Replies depend only on the stage marker; drives a conversation that
// never finishes.
class StuckProvider : public LLMProvider {
public:
    std::string complete(const std::string& prompt, double,
                         std::optional<std::uint64_t>) override {
        if (prompt.rfind("STAGE: 9", 0) == 0) return "just chatting along";
        if (prompt.rfind("STAGE: 10", 0) == 0) return "say()";
        return "Could you say that again?";
    }
};

}  // namespace

TEST_CASE("run_conversation: the turn limit aborts unfinished conversations") {
    auto catalog = alarm_catalog();
    auto plan = alarm_plan();
    auto rules = planner::compile_conversation_rules(plan);
    auto provider = std::make_shared<StuckProvider>();
    Limits limits;
    limits.max_turns = 12;
    try {
        run_conversation(plan, rules, catalog, AgentProviders::shared(provider), limits, 41);
        FAIL("expected AbortedConversation");
    } catch (const AbortedConversation& e) {
        CHECK(e.reason() == AbortReason::turn_limit);
        CHECK(e.prefix().size() >= 10);
    }
}

TEST_CASE("run_conversation: a failing validation hook aborts with the prefix") {
    auto catalog = alarm_catalog();
    auto plan = alarm_plan();
    auto rules = planner::compile_conversation_rules(plan);
    auto provider = std::make_shared<ScriptedProvider>(std::vector<std::string>{
        "Set an alarm for 7am please", "x0 = set_alarm(alarm_time=<STR>)"});
    Limits limits;
    ValidationHook hook = [](const std::vector<TurnRecord>& history) {
        CHECK(history.back().kind == TurnKind::system);
        CHECK(dsl::contains_placeholder(history.back().commands));  // pre string filling
        return std::optional<std::string>("stage13_mismatch");
    };
    try {
        run_conversation(plan, rules, catalog, AgentProviders::shared(provider), limits, 41,
                         hook);
        FAIL("expected AbortedConversation");
    } catch (const AbortedConversation& e) {
        CHECK(e.reason() == AbortReason::validation_failed);
        CHECK(e.prefix().size() == 1);  // just the user turn
    }
}

TEST_CASE("run_conversation: byte-deterministic with the simulated provider") {
    auto catalog = alarm_catalog();
    auto plan = alarm_plan();
    auto rules = planner::compile_conversation_rules(plan);
    auto provider = std::make_shared<SimulatedProvider>();
    Limits limits;
    auto a =
        run_conversation(plan, rules, catalog, AgentProviders::shared(provider), limits, 41);
    auto b =
        run_conversation(plan, rules, catalog, AgentProviders::shared(provider), limits, 41);
    CHECK(a.turns == b.turns);
}

TEST_CASE("phenomenon tokens never reach the labelling prompt") {
    std::vector<TurnRecord> history{
        user("nothing, ignore that", planner::PhenomenonKind::overheard_answer)};
    std::string tokenless = render_history(history, false);
    CHECK(tokenless.find("<OVERHEARD>") == std::string::npos);
    std::string tokenful = render_history(history, true);
    CHECK(tokenful.find("<OVERHEARD>") != std::string::npos);

    auto prompt =
        build_label_prompt(history, alarm_catalog(), prompts::PromptLibrary::builtin());
    CHECK(prompt.find("<OVERHEARD>") == std::string::npos);
}
