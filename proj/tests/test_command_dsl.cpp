#include <doctest.h>

#include <random>

#include "convgen/command_dsl.hpp"
#include "convgen/rng.hpp"

using namespace convgen;
using namespace convgen::dsl;

namespace {

// Random command generator for the property tests. Variables are defined
// by intent calls before they are referenced, so every generated list is
// canonicalizable.
struct CommandGen {
    std::mt19937_64 rng;
    std::vector<int> defined;
    int next_var = 0;

    explicit CommandGen(std::uint64_t seed) : rng(make_rng(seed)) {}

    std::string ident() {
        static const char* kNames[] = {"city",     "check_in_date", "nights", "rating",
                                       "notes",    "review",        "label",  "amount",
                                       "recipient", "spoiler_alert"};
        return kNames[rng() % 10];
    }

    std::string word() {
        static const char* kWords[] = {"paris",  "london", "next tuesday", "quiet corner",
                                       "window", "7am",    "an absolute classic"};
        return kWords[rng() % 7];
    }

    Value value(int depth = 0) {
        switch (rng() % (depth > 0 || defined.empty() ? 6 : 8)) {
            case 0: return Value::text(word());
            case 1: return Value::integer(static_cast<std::int64_t>(rng() % 2000) - 1000);
            case 2: {
                double v = static_cast<double>(static_cast<std::int64_t>(rng() % 100000)) / 64.0;
                return Value::number(v);
            }
            case 3: return Value::boolean(rng() % 2 == 0);
            case 4: return Value::placeholder();
            case 5: {
                if (depth > 0) return Value::text(word());
                std::vector<Value> items;
                std::size_t n = 1 + rng() % 3;
                for (std::size_t i = 0; i < n; ++i) items.push_back(value(depth + 1));
                return Value::list(std::move(items));
            }
            case 6: return Value::var(defined[rng() % defined.size()]);
            default: return Value::attr(defined[rng() % defined.size()], ident());
        }
    }

    ArgList args() {
        ArgList out;
        std::size_t n = rng() % 4;
        for (std::size_t i = 0; i < n && out.size() < 4; ++i) {
            std::string key = ident();
            bool dup = false;
            for (const auto& [k, v] : out) dup = dup || k == key;
            if (!dup) out.emplace_back(key, value());
        }
        return out;
    }

    Command command() {
        switch (rng() % 4) {
            case 0: {
                int var = next_var;
                next_var += 1 + static_cast<int>(rng() % 3);  // gaps exercise renumbering
                auto a = args();
                defined.push_back(var);
                static const char* kIntents[] = {"book_hotel_room", "set_alarm",
                                                 "review_film", "find_alarms"};
                return IntentCall{var, kIntents[rng() % 4], std::move(a)};
            }
            case 1: {
                if (defined.empty()) return command();
                return AttrAssign{defined[rng() % defined.size()], ident(), value()};
            }
            case 2: return Say{args()};
            default: {
                if (defined.empty()) return command();
                return Confirm{defined[rng() % defined.size()]};
            }
        }
    }

    std::vector<Command> commands(std::size_t max_len) {
        std::vector<Command> out;
        std::size_t n = 1 + rng() % max_len;
        for (std::size_t i = 0; i < n; ++i) out.push_back(command());
        return out;
    }
};

}  // namespace

TEST_CASE("parse: intent call with string argument") {
    Command cmd = parse_command("x0 = book_hotel_room(city=\"Paris\")");
    const auto& ic = std::get<IntentCall>(cmd);
    CHECK(ic.var == 0);
    CHECK(ic.intent == "book_hotel_room");
    REQUIRE(ic.args.size() == 1);
    CHECK(ic.args[0].first == "city");
    CHECK(ic.args[0].second == Value::text("Paris"));
}

TEST_CASE("parse: attribute assignment") {
    Command cmd = parse_command("x0.check_in_date = \"5th of March\"");
    const auto& aa = std::get<AttrAssign>(cmd);
    CHECK(aa.var == 0);
    CHECK(aa.slot == "check_in_date");
    CHECK(aa.value == Value::text("5th of March"));
}

TEST_CASE("parse: malformed input reports the offset") {
    try {
        parse_command("x0 = = bad(");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.offset() == 5);
        CHECK(!e.expected().empty());
    }
}

TEST_CASE("parse: whitespace between tokens is insignificant") {
    Command a = parse_command("x1 = set_alarm( alarm_time = \"7am\" , label = \"run\" )");
    Command b = parse_command("x1=set_alarm(alarm_time=\"7am\",label=\"run\")");
    CHECK(a == b);
}

TEST_CASE("parse: duplicate keyword argument is rejected") {
    CHECK_THROWS_AS(parse_command("x0 = set_alarm(label=\"a\", label=\"b\")"), SyntaxError);
}

TEST_CASE("parse: placeholder, booleans, lists, references") {
    Command cmd = parse_command(
        "x2 = review_film(review=<STR>, spoiler_alert=False, tags=[\"a\", 2, x1.rating], "
        "src=x1)");
    const auto& ic = std::get<IntentCall>(cmd);
    CHECK(ic.args[0].second.is_placeholder());
    CHECK(ic.args[1].second == Value::boolean(false));
    CHECK(ic.args[2].second ==
          Value::list({Value::text("a"), Value::integer(2), Value::attr(1, "rating")}));
    CHECK(ic.args[3].second == Value::var(1));
}

TEST_CASE("serialize: say and confirm and hint forms") {
    CHECK(serialize_command(Say{{{"message", Value::text("Hi")}}}) == "say(message=\"Hi\")");
    CHECK(serialize_command(Confirm{3}) == "confirm(x3)");
    CHECK(serialize_command(AttrAssign{1, "rating", Value::integer(9)}) == "x1.rating = 9");
    CHECK(serialize_command(HintCall{"try find_alarms"}) == "hint(\"try find_alarms\")");
}

TEST_CASE("canonicalize: first-use renumbering") {
    std::vector<Command> cmds{parse_command("x3 = set_alarm(alarm_time=\"7am\")")};
    auto canon = canonicalize(cmds);
    CHECK(std::get<IntentCall>(canon[0]).var == 0);
}

TEST_CASE("canonicalize: argument order is normalized") {
    std::vector<Command> a{parse_command("x0 = set_alarm(label=\"x\", alarm_time=\"7am\")")};
    std::vector<Command> b{parse_command("x0 = set_alarm(alarm_time=\"7am\", label=\"x\")")};
    CHECK(canonicalize(a) == canonicalize(b));
}

TEST_CASE("canonicalize: dangling variable reference") {
    std::vector<Command> cmds{parse_command("x0 = set_alarm()"),
                              parse_command("x0.time = x9.time")};
    CHECK_THROWS_AS(canonicalize(cmds), DanglingVarRef);
}

TEST_CASE("commands_equal: identical, renumbered, different") {
    std::vector<Command> a{parse_command("x0 = set_alarm(alarm_time=\"7am\")"),
                           parse_command("x0.label = \"run\"")};
    std::vector<Command> b{parse_command("x4 = set_alarm(alarm_time=\"7am\")"),
                           parse_command("x4.label = \"run\"")};
    std::vector<Command> c{parse_command("x0 = set_alarm(alarm_time=\"8am\")"),
                           parse_command("x0.label = \"run\"")};
    CHECK(commands_equal(a, a));
    CHECK(commands_equal(a, b));  // var numbering is presentation, not semantics
    CHECK(!commands_equal(a, c));
}

TEST_CASE("signal lines round-trip") {
    const char* kLines[] = {
        "signal: missing_slots(x0, [\"check_in_date\"])",
        "signal: confirmation_required(x0)",
        "signal: performed(x0, id=\"hotel_rooms-1\")",
        "signal: query_result(x0, entities=[{id=\"alarms-1\", alarm_time=\"7am\"}])",
        "signal: query_result(x1, entities=[])",
        "signal: hint(\"try a query\")",
    };
    for (const char* line : kLines) {
        auto sig = parse_signal(line);
        CHECK(serialize_signal(sig) == line);
    }
}

TEST_CASE("property: serialize/parse round trip") {
    CommandGen gen(2024);
    for (int i = 0; i < 2000; ++i) {
        Command cmd = gen.command();
        std::string line = serialize_command(cmd);
        CAPTURE(line);
        CHECK(parse_command(line) == cmd);
    }
}

TEST_CASE("property: canonicalize is idempotent and preserves count") {
    CommandGen gen(77);
    for (int i = 0; i < 300; ++i) {
        CommandGen fresh(gen.rng());
        auto cmds = fresh.commands(6);
        auto once = canonicalize(cmds);
        CHECK(once.size() == cmds.size());
        CHECK(canonicalize(once) == once);
    }
}

TEST_CASE("property: commands_equal is an equivalence relation") {
    CommandGen gen(13);
    for (int i = 0; i < 100; ++i) {
        CommandGen fresh_a(i * 2 + 1);
        CommandGen fresh_b(i * 3 + 7);
        auto a = fresh_a.commands(5);
        auto b = fresh_b.commands(5);
        CHECK(commands_equal(a, a));  // reflexive
        CHECK(commands_equal(b, b));
        CHECK(commands_equal(a, b) == commands_equal(b, a));  // symmetric
        // transitivity through a renumbered copy
        auto renumbered = canonicalize(a);
        CHECK(commands_equal(a, renumbered));
        if (commands_equal(renumbered, b)) CHECK(commands_equal(a, b));
    }
}

TEST_CASE("property: syntax errors carry an offset within the input") {
    std::mt19937_64 rng(99);
    const std::string alphabet = "x0123=.,()[]\"abc <STR>TrueFalse";
    for (int i = 0; i < 500; ++i) {
        std::string junk;
        std::size_t n = 1 + rng() % 24;
        for (std::size_t k = 0; k < n; ++k) junk.push_back(alphabet[rng() % alphabet.size()]);
        try {
            (void)parse_command(junk);
        } catch (const SyntaxError& e) {
            CHECK(e.offset() <= junk.size());
        }
    }
}
