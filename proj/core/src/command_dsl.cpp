#include "convgen/command_dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace convgen::dsl {

namespace {

enum class Tok {
    Ident, Var, Str, Int, Float, True, False, StrPlaceholder,
    Equals, Dot, Comma, LParen, RParen, LBracket, RBracket,
    LBrace, RBrace, Colon, End,
};

const char* tok_name(Tok t) {
    switch (t) {
        case Tok::Ident: return "identifier";
        case Tok::Var: return "variable";
        case Tok::Str: return "string";
        case Tok::Int: return "integer";
        case Tok::Float: return "float";
        case Tok::True: return "True";
        case Tok::False: return "False";
        case Tok::StrPlaceholder: return "<STR>";
        case Tok::Equals: return "'='";
        case Tok::Dot: return "'.'";
        case Tok::Comma: return "','";
        case Tok::LParen: return "'('";
        case Tok::RParen: return "')'";
        case Tok::RBracket: return "']'";
        case Tok::LBracket: return "'['";
        case Tok::LBrace: return "'{'";
        case Tok::RBrace: return "'}'";
        case Tok::Colon: return "':'";
        case Tok::End: return "end of line";
    }
    return "?";
}

struct Token {
    Tok kind;
    std::size_t offset;
    std::string text;    // ident name, decoded string contents
    std::int64_t ival = 0;
    double fval = 0.0;
    int var_id = 0;
};

bool is_ident_start(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) {
    return std::islower(static_cast<unsigned char>(c)) ||
           std::isdigit(static_cast<unsigned char>(c)) || c == '_';
}

class Lexer {
public:
    explicit Lexer(const std::string& input) : in_(input) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip_ws();
            Token t = next();
            bool end = t.kind == Tok::End;
            out.push_back(std::move(t));
            if (end) break;
        }
        return out;
    }

private:
    void skip_ws() {
        while (pos_ < in_.size() &&
               std::isspace(static_cast<unsigned char>(in_[pos_])))
            ++pos_;
    }

    [[noreturn]] void fail(const std::string& msg, std::size_t at,
                           std::vector<std::string> expected) {
        throw SyntaxError(msg + " at offset " + std::to_string(at), at,
                          std::move(expected));
    }

    Token next() {
        if (pos_ >= in_.size()) return {Tok::End, in_.size(), {}};
        std::size_t start = pos_;
        char c = in_[pos_];
        switch (c) {
            case '=': ++pos_; return {Tok::Equals, start, {}};
            case '.': ++pos_; return {Tok::Dot, start, {}};
            case ',': ++pos_; return {Tok::Comma, start, {}};
            case '(': ++pos_; return {Tok::LParen, start, {}};
            case ')': ++pos_; return {Tok::RParen, start, {}};
            case '[': ++pos_; return {Tok::LBracket, start, {}};
            case ']': ++pos_; return {Tok::RBracket, start, {}};
            case '{': ++pos_; return {Tok::LBrace, start, {}};
            case '}': ++pos_; return {Tok::RBrace, start, {}};
            case ':': ++pos_; return {Tok::Colon, start, {}};
            case '"': return lex_string();
            case '<': return lex_placeholder();
            default: break;
        }
        if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) return lex_number();
        if (is_ident_start(c)) return lex_word();
        if (std::isupper(static_cast<unsigned char>(c))) return lex_keyword();
        fail(std::string("unexpected character '") + c + "'", start, {"token"});
    }

    Token lex_string() {
        std::size_t start = pos_;
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < in_.size()) {
            char c = in_[pos_];
            if (c == '"') {
                ++pos_;
                return {Tok::Str, start, std::move(out)};
            }
            if (c == '\\') {
                if (pos_ + 1 >= in_.size())
                    fail("unterminated escape", pos_, {"escape character"});
                char e = in_[pos_ + 1];
                switch (e) {
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case 'r': out.push_back('\r'); break;
                    default:
                        fail("unknown escape", pos_ + 1, {"\\\" \\\\ \\n \\t \\r"});
                }
                pos_ += 2;
                continue;
            }
            out.push_back(c);
            ++pos_;
        }
        fail("unterminated string", start, {"'\"'"});
    }

    Token lex_placeholder() {
        std::size_t start = pos_;
        if (in_.compare(pos_, 5, "<STR>") == 0) {
            pos_ += 5;
            return {Tok::StrPlaceholder, start, {}};
        }
        fail("unexpected '<'", start, {"<STR>"});
    }

    Token lex_number() {
        std::size_t start = pos_;
        if (in_[pos_] == '-') ++pos_;
        while (pos_ < in_.size() && std::isdigit(static_cast<unsigned char>(in_[pos_]))) ++pos_;
        bool is_float = false;
        if (pos_ < in_.size() && in_[pos_] == '.') {
            is_float = true;
            ++pos_;
            if (pos_ >= in_.size() || !std::isdigit(static_cast<unsigned char>(in_[pos_])))
                fail("malformed number", pos_, {"digit"});
            while (pos_ < in_.size() && std::isdigit(static_cast<unsigned char>(in_[pos_]))) ++pos_;
        }
        if (pos_ < in_.size() && (in_[pos_] == 'e' || in_[pos_] == 'E')) {
            is_float = true;
            ++pos_;
            if (pos_ < in_.size() && (in_[pos_] == '+' || in_[pos_] == '-')) ++pos_;
            if (pos_ >= in_.size() || !std::isdigit(static_cast<unsigned char>(in_[pos_])))
                fail("malformed exponent", pos_, {"digit"});
            while (pos_ < in_.size() && std::isdigit(static_cast<unsigned char>(in_[pos_]))) ++pos_;
        }
        std::string_view sv(in_.data() + start, pos_ - start);
        Token t{is_float ? Tok::Float : Tok::Int, start, {}};
        if (is_float) {
            auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), t.fval);
            if (ec != std::errc() || p != sv.data() + sv.size())
                fail("malformed float literal", start, {"float"});
        } else {
            auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), t.ival);
            if (ec != std::errc() || p != sv.data() + sv.size())
                fail("integer literal out of range", start, {"integer"});
        }
        return t;
    }

    // x<digits> is a variable; anything else lowercase is an identifier.
    Token lex_word() {
        std::size_t start = pos_;
        while (pos_ < in_.size() && is_ident_char(in_[pos_])) ++pos_;
        std::string word = in_.substr(start, pos_ - start);
        if (word.size() >= 2 && word[0] == 'x' &&
            std::all_of(word.begin() + 1, word.end(),
                        [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            Token t{Tok::Var, start, {}};
            auto [p, ec] = std::from_chars(word.data() + 1, word.data() + word.size(), t.var_id);
            if (ec != std::errc())
                fail("variable index out of range", start, {"variable"});
            return t;
        }
        return {Tok::Ident, start, std::move(word)};
    }

    Token lex_keyword() {
        std::size_t start = pos_;
        if (in_.compare(pos_, 4, "True") == 0 && !(pos_ + 4 < in_.size() && is_ident_char(in_[pos_ + 4]))) {
            pos_ += 4;
            return {Tok::True, start, {}};
        }
        if (in_.compare(pos_, 5, "False") == 0 && !(pos_ + 5 < in_.size() && is_ident_char(in_[pos_ + 5]))) {
            pos_ += 5;
            return {Tok::False, start, {}};
        }
        fail("unexpected capitalized word", start, {"True", "False"});
    }

    const std::string& in_;
    std::size_t pos_ = 0;
};

class Parser {
public:
    explicit Parser(const std::string& input)
        : input_(input), toks_(Lexer(input).run()) {}

    Command parse_command_line() {
        Command cmd = command();
        expect(Tok::End);
        return cmd;
    }

    Value parse_value_only() {
        Value v = value();
        expect(Tok::End);
        return v;
    }

    SignalPayload parse_signal_body() {
        SignalPayload sig = signal_body();
        expect(Tok::End);
        return sig;
    }

private:
    const Token& peek() const { return toks_[idx_]; }
    const Token& advance() { return toks_[idx_++]; }

    [[noreturn]] void fail(std::vector<std::string> expected) {
        const Token& t = peek();
        std::string msg = "expected ";
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (i) msg += " or ";
            msg += expected[i];
        }
        msg += ", found ";
        msg += tok_name(t.kind);
        msg += " at offset " + std::to_string(t.offset);
        throw SyntaxError(msg, t.offset, std::move(expected));
    }

    const Token& expect(Tok kind) {
        if (peek().kind != kind) fail({tok_name(kind)});
        return advance();
    }

    Command command() {
        const Token& t = peek();
        if (t.kind == Tok::Var) {
            int var = advance().var_id;
            if (peek().kind == Tok::Equals) {
                advance();
                if (peek().kind != Tok::Ident) fail({"identifier"});
                std::string intent = advance().text;
                expect(Tok::LParen);
                ArgList args = kwargs_until_rparen();
                return IntentCall{var, std::move(intent), std::move(args)};
            }
            if (peek().kind == Tok::Dot) {
                advance();
                std::string slot = expect(Tok::Ident).text;
                expect(Tok::Equals);
                Value v = value();
                return AttrAssign{var, std::move(slot), std::move(v)};
            }
            fail({"'='", "'.'"});
        }
        if (t.kind == Tok::Ident && t.text == "say") {
            advance();
            expect(Tok::LParen);
            ArgList args = kwargs_until_rparen();
            return Say{std::move(args)};
        }
        if (t.kind == Tok::Ident && t.text == "confirm") {
            advance();
            expect(Tok::LParen);
            int var = expect(Tok::Var).var_id;
            expect(Tok::RParen);
            return Confirm{var};
        }
        if (t.kind == Tok::Ident && t.text == "hint") {
            advance();
            expect(Tok::LParen);
            std::string text = expect(Tok::Str).text;
            expect(Tok::RParen);
            return HintCall{std::move(text)};
        }
        fail({"variable", "say", "confirm"});
    }

    ArgList kwargs_until_rparen() {
        ArgList args;
        if (peek().kind == Tok::RParen) {
            advance();
            return args;
        }
        for (;;) {
            const Token& key_tok = peek();
            if (key_tok.kind != Tok::Ident) fail({"identifier"});
            std::string key = advance().text;
            for (const auto& [k, v] : args) {
                if (k == key)
                    throw SyntaxError("duplicate keyword argument '" + key + "' at offset " +
                                          std::to_string(key_tok.offset),
                                      key_tok.offset, {"unique keyword"});
            }
            expect(Tok::Equals);
            Value v = value();
            args.emplace_back(std::move(key), std::move(v));
            if (peek().kind == Tok::Comma) {
                advance();
                continue;
            }
            expect(Tok::RParen);
            break;
        }
        return args;
    }

    Value value() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::Str: return Value::text(advance().text);
            case Tok::Int: return Value::integer(advance().ival);
            case Tok::Float: return Value::number(advance().fval);
            case Tok::True: advance(); return Value::boolean(true);
            case Tok::False: advance(); return Value::boolean(false);
            case Tok::StrPlaceholder: advance(); return Value::placeholder();
            case Tok::Var: {
                int id = advance().var_id;
                if (peek().kind == Tok::Dot) {
                    advance();
                    std::string slot = expect(Tok::Ident).text;
                    return Value::attr(id, std::move(slot));
                }
                return Value::var(id);
            }
            case Tok::LBracket: {
                advance();
                std::vector<Value> items;
                if (peek().kind == Tok::RBracket) {
                    advance();
                    return Value::list(std::move(items));
                }
                for (;;) {
                    items.push_back(value());
                    if (peek().kind == Tok::Comma) {
                        advance();
                        continue;
                    }
                    expect(Tok::RBracket);
                    break;
                }
                return Value::list(std::move(items));
            }
            default:
                fail({"string", "integer", "float", "True", "False", "variable", "'['", "<STR>"});
        }
    }

    // missing_slots(x0, ["a"]) | confirmation_required(x0) | performed(x0, id="..")
    // | query_result(x0, entities=[{id=".."}, ...]) | hint("..")
    SignalPayload signal_body() {
        if (peek().kind != Tok::Ident) fail({"signal name"});
        std::string name = advance().text;
        expect(Tok::LParen);
        if (name == "missing_slots") {
            int var = expect(Tok::Var).var_id;
            expect(Tok::Comma);
            expect(Tok::LBracket);
            std::vector<std::string> slots;
            for (;;) {
                slots.push_back(expect(Tok::Str).text);
                if (peek().kind == Tok::Comma) {
                    advance();
                    continue;
                }
                expect(Tok::RBracket);
                break;
            }
            expect(Tok::RParen);
            return MissingSlots{var, std::move(slots)};
        }
        if (name == "confirmation_required") {
            int var = expect(Tok::Var).var_id;
            expect(Tok::RParen);
            return ConfirmationRequired{var};
        }
        if (name == "performed") {
            int var = expect(Tok::Var).var_id;
            expect(Tok::Comma);
            const Token& key = expect(Tok::Ident);
            if (key.text != "id") fail({"id"});
            expect(Tok::Equals);
            std::string id = expect(Tok::Str).text;
            expect(Tok::RParen);
            return Performed{var, std::move(id)};
        }
        if (name == "query_result") {
            int var = expect(Tok::Var).var_id;
            expect(Tok::Comma);
            const Token& key = expect(Tok::Ident);
            if (key.text != "entities") fail({"entities"});
            expect(Tok::Equals);
            expect(Tok::LBracket);
            std::vector<EntityRecord> entities;
            if (peek().kind == Tok::RBracket) {
                advance();
            } else {
                for (;;) {
                    entities.push_back(entity_record());
                    if (peek().kind == Tok::Comma) {
                        advance();
                        continue;
                    }
                    expect(Tok::RBracket);
                    break;
                }
            }
            expect(Tok::RParen);
            return QueryResult{var, std::move(entities)};
        }
        if (name == "hint") {
            std::string text = expect(Tok::Str).text;
            expect(Tok::RParen);
            return Hint{std::move(text)};
        }
        fail({"missing_slots", "confirmation_required", "performed", "query_result", "hint"});
    }

    EntityRecord entity_record() {
        expect(Tok::LBrace);
        EntityRecord rec;
        bool saw_id = false;
        for (;;) {
            std::string key = expect(Tok::Ident).text;
            expect(Tok::Equals);
            Value v = value();
            if (key == "id") {
                if (!v.is_text()) fail({"string id"});
                rec.id = v.text_value();
                saw_id = true;
            } else {
                rec.values[key] = std::move(v);
            }
            if (peek().kind == Tok::Comma) {
                advance();
                continue;
            }
            expect(Tok::RBrace);
            break;
        }
        if (!saw_id) fail({"id field"});
        return rec;
    }

    const std::string& input_;
    std::vector<Token> toks_;
    std::size_t idx_ = 0;
};

void append_escaped(std::string& out, const std::string& s) {
    out.push_back('"');
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c);
        }
    }
    out.push_back('"');
}

std::string format_number(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, p);
    // Keep the literal recognizably a float so the round trip stays typed.
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
        s += ".0";
    }
    return s;
}

void append_value(std::string& out, const Value& v) {
    if (v.is_text()) {
        append_escaped(out, v.text_value());
    } else if (v.is_integer()) {
        out += std::to_string(v.integer_value());
    } else if (v.is_number()) {
        out += format_number(v.number_value());
    } else if (v.is_boolean()) {
        out += v.boolean_value() ? "True" : "False";
    } else if (std::holds_alternative<VarRef>(v.node)) {
        out += "x" + std::to_string(std::get<VarRef>(v.node).id);
    } else if (std::holds_alternative<AttrRef>(v.node)) {
        const auto& a = std::get<AttrRef>(v.node);
        out += "x" + std::to_string(a.id) + "." + a.slot;
    } else if (v.is_list()) {
        out.push_back('[');
        const auto& items = v.list_value();
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i) out += ", ";
            append_value(out, items[i]);
        }
        out.push_back(']');
    } else {
        out += "<STR>";
    }
}

void append_args(std::string& out, const ArgList& args) {
    out.push_back('(');
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) out += ", ";
        out += args[i].first;
        out.push_back('=');
        append_value(out, args[i].second);
    }
    out.push_back(')');
}

// ---- canonicalization ----

class Renumberer {
public:
    void define(int id) {
        if (!map_.count(id)) map_[id] = next_++;
    }

    int lookup(int id, const char* where) const {
        auto it = map_.find(id);
        if (it == map_.end())
            throw DanglingVarRef("reference to undefined variable x" + std::to_string(id) +
                                 " in " + where);
        return it->second;
    }

private:
    std::unordered_map<int, int> map_;
    int next_ = 0;
};

Value rewrite_value(const Value& v, const Renumberer& ren) {
    if (std::holds_alternative<VarRef>(v.node))
        return Value::var(ren.lookup(std::get<VarRef>(v.node).id, "value"));
    if (std::holds_alternative<AttrRef>(v.node)) {
        const auto& a = std::get<AttrRef>(v.node);
        return Value::attr(ren.lookup(a.id, "attribute reference"), a.slot);
    }
    if (v.is_list()) {
        std::vector<Value> items;
        items.reserve(v.list_value().size());
        for (const auto& item : v.list_value()) items.push_back(rewrite_value(item, ren));
        return Value::list(std::move(items));
    }
    return v;
}

ArgList rewrite_args(const ArgList& args, const Renumberer& ren) {
    ArgList out;
    out.reserve(args.size());
    for (const auto& [k, v] : args) out.emplace_back(k, rewrite_value(v, ren));
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

}  // namespace

Command parse_command(const std::string& line) {
    return Parser(line).parse_command_line();
}

Value parse_value(const std::string& text) {
    return Parser(text).parse_value_only();
}

std::string serialize_value(const Value& v) {
    std::string out;
    append_value(out, v);
    return out;
}

std::string serialize_command(const Command& cmd) {
    std::string out;
    if (const auto* ic = std::get_if<IntentCall>(&cmd)) {
        out += "x" + std::to_string(ic->var) + " = " + ic->intent;
        append_args(out, ic->args);
    } else if (const auto* aa = std::get_if<AttrAssign>(&cmd)) {
        out += "x" + std::to_string(aa->var) + "." + aa->slot + " = ";
        append_value(out, aa->value);
    } else if (const auto* say = std::get_if<Say>(&cmd)) {
        out += "say";
        append_args(out, say->args);
    } else if (const auto* cf = std::get_if<Confirm>(&cmd)) {
        out += "confirm(x" + std::to_string(cf->var) + ")";
    } else if (const auto* h = std::get_if<HintCall>(&cmd)) {
        out += "hint(";
        append_escaped(out, h->text);
        out += ")";
    }
    return out;
}

std::vector<Command> canonicalize(const std::vector<Command>& cmds) {
    Renumberer ren;
    std::vector<Command> out;
    out.reserve(cmds.size());
    for (const auto& cmd : cmds) {
        if (const auto* ic = std::get_if<IntentCall>(&cmd)) {
            // Arguments are evaluated against the environment before the
            // call's own variable is defined.
            ArgList args = rewrite_args(ic->args, ren);
            ren.define(ic->var);
            out.push_back(IntentCall{ren.lookup(ic->var, "intent call"), ic->intent,
                                     std::move(args)});
        } else if (const auto* aa = std::get_if<AttrAssign>(&cmd)) {
            out.push_back(AttrAssign{ren.lookup(aa->var, "attribute assignment"), aa->slot,
                                     rewrite_value(aa->value, ren)});
        } else if (const auto* say = std::get_if<Say>(&cmd)) {
            out.push_back(Say{rewrite_args(say->args, ren)});
        } else if (const auto* cf = std::get_if<Confirm>(&cmd)) {
            out.push_back(Confirm{ren.lookup(cf->var, "confirm")});
        } else {
            out.push_back(cmd);  // hint has no variables
        }
    }
    return out;
}

bool commands_equal(const std::vector<Command>& a, const std::vector<Command>& b) {
    if (a.size() != b.size()) return false;
    return canonicalize(a) == canonicalize(b);
}

bool commands_equal_raw(const std::vector<Command>& a, const std::vector<Command>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (serialize_command(a[i]) != serialize_command(b[i])) return false;
    return true;
}

std::string serialize_signal(const SignalPayload& sig) {
    std::string out = "signal: ";
    if (const auto* ms = std::get_if<MissingSlots>(&sig)) {
        out += "missing_slots(x" + std::to_string(ms->var) + ", [";
        for (std::size_t i = 0; i < ms->slots.size(); ++i) {
            if (i) out += ", ";
            append_escaped(out, ms->slots[i]);
        }
        out += "])";
    } else if (const auto* cr = std::get_if<ConfirmationRequired>(&sig)) {
        out += "confirmation_required(x" + std::to_string(cr->var) + ")";
    } else if (const auto* pf = std::get_if<Performed>(&sig)) {
        out += "performed(x" + std::to_string(pf->var) + ", id=";
        append_escaped(out, pf->entity_id);
        out += ")";
    } else if (const auto* qr = std::get_if<QueryResult>(&sig)) {
        out += "query_result(x" + std::to_string(qr->var) + ", entities=[";
        for (std::size_t i = 0; i < qr->entities.size(); ++i) {
            if (i) out += ", ";
            const auto& e = qr->entities[i];
            out += "{id=";
            append_escaped(out, e.id);
            for (const auto& [k, v] : e.values) {
                out += ", " + k + "=";
                append_value(out, v);
            }
            out += "}";
        }
        out += "])";
    } else if (const auto* h = std::get_if<Hint>(&sig)) {
        out += "hint(";
        append_escaped(out, h->text);
        out += ")";
    }
    return out;
}

SignalPayload parse_signal(const std::string& line) {
    const std::string prefix = "signal:";
    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (line.compare(i, prefix.size(), prefix) != 0)
        throw SyntaxError("signal line must start with 'signal:'", i, {"signal:"});
    std::string body = line.substr(i + prefix.size());
    SignalPayload sig = Parser(body).parse_signal_body();
    if (const auto* ms = std::get_if<MissingSlots>(&sig); ms && ms->slots.empty())
        throw SyntaxError("missing_slots requires at least one slot", 0, {"slot name"});
    return sig;
}

bool contains_placeholder(const Command& cmd) {
    auto value_has = [](const Value& v) {
        if (v.is_placeholder()) return true;
        if (v.is_list()) {
            for (const auto& item : v.list_value())
                if (item.is_placeholder()) return true;
        }
        return false;
    };
    if (const auto* ic = std::get_if<IntentCall>(&cmd)) {
        for (const auto& [k, v] : ic->args)
            if (value_has(v)) return true;
    } else if (const auto* aa = std::get_if<AttrAssign>(&cmd)) {
        return value_has(aa->value);
    } else if (const auto* say = std::get_if<Say>(&cmd)) {
        for (const auto& [k, v] : say->args)
            if (value_has(v)) return true;
    }
    return false;
}

bool contains_placeholder(const std::vector<Command>& cmds) {
    return std::any_of(cmds.begin(), cmds.end(),
                       [](const Command& c) { return contains_placeholder(c); });
}

}  // namespace convgen::dsl
