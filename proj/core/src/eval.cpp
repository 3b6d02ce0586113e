#include "convgen/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "convgen/rng.hpp"

namespace convgen::eval {

namespace {

using ordered_json = nlohmann::ordered_json;

// Renumbers variables by first use (definitions and references alike), so
// malformed predictions still get a deterministic canonical form instead
// of an error.
class LenientRenumber {
public:
    int canon(int id) {
        auto it = map_.find(id);
        if (it != map_.end()) return it->second;
        int next = static_cast<int>(map_.size());
        map_[id] = next;
        return next;
    }

private:
    std::map<int, int> map_;
};

dsl::Value lenient_value(const dsl::Value& v, LenientRenumber& ren) {
    if (const auto* var = std::get_if<dsl::VarRef>(&v.node))
        return dsl::Value::var(ren.canon(var->id));
    if (const auto* attr = std::get_if<dsl::AttrRef>(&v.node))
        return dsl::Value::attr(ren.canon(attr->id), attr->slot);
    if (v.is_list()) {
        std::vector<dsl::Value> items;
        for (const auto& item : v.list_value()) items.push_back(lenient_value(item, ren));
        return dsl::Value::list(std::move(items));
    }
    return v;
}

dsl::ArgList lenient_args(const dsl::ArgList& args, LenientRenumber& ren) {
    dsl::ArgList out;
    for (const auto& [k, v] : args) out.emplace_back(k, lenient_value(v, ren));
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

std::vector<dsl::Command> lenient_canonicalize(const std::vector<dsl::Command>& cmds,
                                               LenientRenumber& ren) {
    std::vector<dsl::Command> out;
    out.reserve(cmds.size());
    for (const auto& cmd : cmds) {
        if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd)) {
            dsl::ArgList args = lenient_args(ic->args, ren);
            out.push_back(dsl::IntentCall{ren.canon(ic->var), ic->intent, std::move(args)});
        } else if (const auto* aa = std::get_if<dsl::AttrAssign>(&cmd)) {
            out.push_back(
                dsl::AttrAssign{ren.canon(aa->var), aa->slot, lenient_value(aa->value, ren)});
        } else if (const auto* say = std::get_if<dsl::Say>(&cmd)) {
            out.push_back(dsl::Say{lenient_args(say->args, ren)});
        } else if (const auto* cf = std::get_if<dsl::Confirm>(&cmd)) {
            out.push_back(dsl::Confirm{ren.canon(cf->var)});
        } else {
            out.push_back(cmd);
        }
    }
    return out;
}

bool slot_values_match(const dsl::Value& a, const dsl::Value& b, double threshold) {
    if (a.is_text() && b.is_text())
        return fuzzy_match(a.text_value(), b.text_value(), threshold);
    if (a.is_integer() && b.is_number())
        return static_cast<double>(a.integer_value()) == b.number_value();
    if (a.is_number() && b.is_integer())
        return a.number_value() == static_cast<double>(b.integer_value());
    return a == b;
}

// Cumulative goal state over (possibly malformed) predicted commands.
struct GoalTracker {
    struct Entry {
        std::string intent;
        std::map<std::string, dsl::Value> slots;
    };
    std::map<int, Entry> sessions;

    void apply(const std::vector<dsl::Command>& canonical_cmds) {
        for (const auto& cmd : canonical_cmds) {
            if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd)) {
                Entry& entry = sessions[ic->var];
                entry.intent = ic->intent;
                for (const auto& [slot, value] : ic->args) entry.slots[slot] = value;
            } else if (const auto* aa = std::get_if<dsl::AttrAssign>(&cmd)) {
                Entry& entry = sessions[aa->var];
                entry.slots[aa->slot] = aa->value;
            }
        }
    }

    bool has_values() const {
        for (const auto& [var, entry] : sessions)
            if (!entry.slots.empty()) return true;
        return false;
    }

    static bool equal(const GoalTracker& a, const GoalTracker& b, double threshold) {
        if (a.sessions.size() != b.sessions.size()) return false;
        auto ia = a.sessions.begin();
        auto ib = b.sessions.begin();
        for (; ia != a.sessions.end(); ++ia, ++ib) {
            if (ia->first != ib->first) return false;
            if (ia->second.intent != ib->second.intent) return false;
            if (ia->second.slots.size() != ib->second.slots.size()) return false;
            auto sa = ia->second.slots.begin();
            auto sb = ib->second.slots.begin();
            for (; sa != ia->second.slots.end(); ++sa, ++sb) {
                if (sa->first != sb->first) return false;
                if (!slot_values_match(sa->second, sb->second, threshold)) return false;
            }
        }
        return true;
    }
};

struct PointAssignment {
    int var = 0;
    std::string slot;
    dsl::Value value;
};

std::vector<PointAssignment> point_assignments(const std::vector<dsl::Command>& canonical) {
    std::vector<PointAssignment> out;
    for (const auto& cmd : canonical) {
        if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd))
            for (const auto& [slot, value] : ic->args) out.push_back({ic->var, slot, value});
        if (const auto* aa = std::get_if<dsl::AttrAssign>(&cmd))
            out.push_back({aa->var, aa->slot, aa->value});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.var, a.slot) < std::tie(b.var, b.slot);
    });
    return out;
}

double percent(std::size_t hits, std::size_t total) {
    if (total == 0) return 100.0;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

std::size_t levenshtein(const std::string& a, const std::string& b) {
    const std::size_t n = a.size(), m = b.size();
    if (n == 0) return m;
    if (m == 0) return n;
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::string normalize_for_match(const std::string& s) {
    std::string out;
    bool in_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    while (!out.empty() && std::strchr(".,!?;:", out.back())) out.pop_back();
    while (!out.empty() && out.back() == ' ') out.pop_back();
    for (const char* article : {"the ", "an ", "a "}) {
        std::size_t len = std::strlen(article);
        if (out.size() > len && out.compare(0, len, article) == 0) {
            out = out.substr(len);
            break;
        }
    }
    return out;
}

bool fuzzy_match(const std::string& a, const std::string& b, double threshold) {
    std::string na = normalize_for_match(a);
    std::string nb = normalize_for_match(b);
    if (na == nb) return true;
    std::size_t max_len = std::max(na.size(), nb.size());
    if (max_len == 0) return true;
    double similarity =
        1.0 - static_cast<double>(levenshtein(na, nb)) / static_cast<double>(max_len);
    return similarity >= threshold;
}

std::vector<float> HashingEmbedder::embed(const std::string& text) const {
    std::vector<float> out(dims_, 0.0f);
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        out[fnv1a64(word) % dims_] += 1.0f;
        word.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else {
            flush();
        }
    }
    flush();
    double norm = 0;
    for (float v : out) norm += static_cast<double>(v) * v;
    if (norm > 0) {
        float inv = static_cast<float>(1.0 / std::sqrt(norm));
        for (float& v : out) v *= inv;
    }
    return out;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size() || a.empty()) return 0.0;
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string to_string(RetrievalMode m) {
    switch (m) {
        case RetrievalMode::none: return "none";
        case RetrievalMode::retrieval: return "retrieval";
        case RetrievalMode::oracle: return "oracle";
    }
    return "none";
}

std::vector<schema::IntentSchema> retrieve_tools(const std::string& user_utterance,
                                                 const schema::SchemaCatalog& catalog,
                                                 const std::vector<std::string>& history_intents,
                                                 const Embedder& embedder, RetrievalMode mode) {
    std::vector<schema::IntentSchema> out;
    if (mode == RetrievalMode::none) return out;

    auto push_unique = [&](const std::string& name) {
        const auto* intent = catalog.find(name);
        if (!intent) return;
        for (const auto& existing : out)
            if (existing.intent_name == name) return;
        out.push_back(*intent);
    };

    if (mode == RetrievalMode::oracle) {
        for (const auto& name : history_intents) push_unique(name);
        return out;
    }

    // Tool name embedded with underscores as spaces so word-level
    // embedders see the same tokens users say.
    auto query = embedder.embed(user_utterance);
    double best = -2.0;
    const schema::IntentSchema* best_intent = nullptr;
    for (const auto& intent : catalog.intents) {
        std::string name_text = intent.intent_name;
        std::replace(name_text.begin(), name_text.end(), '_', ' ');
        double score = cosine(embedder.embed(name_text), query);
        if (score > best) {  // ties keep the earlier catalog entry
            best = score;
            best_intent = &intent;
        }
    }
    if (best_intent) push_unique(best_intent->intent_name);
    for (const auto& name : history_intents) push_unique(name);
    return out;
}

void save_predictions(const PredictionFile& predictions, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open prediction file for writing: " + path);
    for (const auto& point : predictions) {
        ordered_json j;
        j["conversation_id"] = point.conversation_id;
        j["point_index"] = point.point_index;
        ordered_json cmds = ordered_json::array();
        for (const auto& cmd : point.commands) cmds.push_back(dsl::serialize_command(cmd));
        j["commands"] = std::move(cmds);
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing prediction file: " + path);
}

PredictionFile load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open prediction file: " + path);
    PredictionFile predictions;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            ordered_json j = ordered_json::parse(line);
            PredictionPoint point;
            point.conversation_id = j.at("conversation_id").get<std::string>();
            point.point_index = j.at("point_index").get<std::size_t>();
            for (const auto& c : j.at("commands"))
                point.commands.push_back(dsl::parse_command(c.get<std::string>()));
            predictions.push_back(std::move(point));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("malformed prediction record: ") + e.what(), lineno);
        } catch (const SyntaxError& e) {
            throw SchemaError(std::string("malformed prediction command: ") + e.what(),
                              lineno);
        }
    }
    return predictions;
}

PredictionFile predictions_from_gold(const std::vector<dataset::ConversationRecord>& gold) {
    PredictionFile out;
    for (const auto& record : gold) {
        std::size_t point = 0;
        for (const auto& turn : record.turns) {
            if (turn.kind != agents::TurnKind::system) continue;
            out.push_back({record.id, point++, turn.commands});
        }
    }
    return out;
}

MetricsReport evaluate(const std::vector<dataset::ConversationRecord>& gold,
                       const PredictionFile& predictions, double fuzzy_threshold) {
    std::map<std::pair<std::string, std::size_t>, const PredictionPoint*> by_key;
    for (const auto& point : predictions) {
        auto key = std::make_pair(point.conversation_id, point.point_index);
        if (by_key.count(key))
            throw AlignmentError("duplicate prediction for " + point.conversation_id +
                                 " point " + std::to_string(point.point_index));
        by_key[key] = &point;
    }

    std::size_t gold_points_total = 0;
    std::size_t intent_total = 0, intent_hits = 0;
    std::size_t jga_total = 0, jga_hits = 0;
    std::size_t slot_total = 0, slot_hits = 0;
    std::size_t group_total = 0, group_hits = 0;
    std::size_t conv_hits = 0;
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_phenomenon;  // hits/total

    for (const auto& record : gold) {
        LenientRenumber gold_ren, pred_ren;
        GoalTracker gold_state, pred_state;
        bool conversation_match = true;

        // group = the system turns between two user turns
        std::string group_tag = "none";
        bool group_match = true;
        bool group_open = false;
        auto close_group = [&] {
            if (!group_open) return;
            ++group_total;
            auto& bucket = per_phenomenon[group_tag];
            ++bucket.second;
            if (group_match) {
                ++group_hits;
                ++bucket.first;
            } else {
                conversation_match = false;
            }
            group_open = false;
        };

        std::size_t point = 0;
        for (const auto& turn : record.turns) {
            if (turn.kind == agents::TurnKind::user) {
                close_group();
                group_open = true;
                group_match = true;
                group_tag =
                    turn.phenomenon ? planner::to_string(*turn.phenomenon) : "none";
                continue;
            }
            if (turn.kind != agents::TurnKind::system) continue;

            auto it = by_key.find({record.id, point});
            if (it == by_key.end())
                throw AlignmentError("missing prediction for " + record.id + " point " +
                                     std::to_string(point));
            const auto& predicted_raw = it->second->commands;
            by_key.erase(it);

            auto gold_canonical = lenient_canonicalize(turn.commands, gold_ren);
            auto pred_canonical = lenient_canonicalize(predicted_raw, pred_ren);

            // intent accuracy: per gold intent call
            for (const auto& cmd : gold_canonical) {
                const auto* gic = std::get_if<dsl::IntentCall>(&cmd);
                if (!gic) continue;
                ++intent_total;
                for (const auto& pcmd : pred_canonical) {
                    const auto* pic = std::get_if<dsl::IntentCall>(&pcmd);
                    if (pic && pic->intent == gic->intent) {
                        ++intent_hits;
                        break;
                    }
                }
            }

            // exact match: every command in the group must match
            if (!(gold_canonical == pred_canonical)) group_match = false;

            gold_state.apply(gold_canonical);
            pred_state.apply(pred_canonical);

            auto gold_assign = point_assignments(gold_canonical);
            auto pred_assign = point_assignments(pred_canonical);
            bool value_point = !gold_assign.empty() || !pred_assign.empty();
            if (value_point) {
                ++jga_total;
                if (GoalTracker::equal(gold_state, pred_state, fuzzy_threshold)) ++jga_hits;

                ++slot_total;
                bool slots_ok = gold_assign.size() == pred_assign.size();
                for (std::size_t k = 0; slots_ok && k < gold_assign.size(); ++k) {
                    slots_ok = gold_assign[k].var == pred_assign[k].var &&
                               gold_assign[k].slot == pred_assign[k].slot &&
                               slot_values_match(gold_assign[k].value, pred_assign[k].value,
                                                 fuzzy_threshold);
                }
                if (slots_ok) ++slot_hits;
            }

            ++point;
            ++gold_points_total;
        }
        close_group();
        if (conversation_match) ++conv_hits;
    }

    if (!by_key.empty()) {
        const auto& key = by_key.begin()->first;
        throw AlignmentError("prediction for unknown point: " + key.first + " point " +
                             std::to_string(key.second));
    }

    MetricsReport report;
    report.intent_accuracy = percent(intent_hits, intent_total);
    report.joint_goal_accuracy = percent(jga_hits, jga_total);
    report.slot_accuracy = percent(slot_hits, slot_total);
    report.exact_match_turn = percent(group_hits, group_total);
    report.exact_match_conversation = percent(conv_hits, gold.size());
    for (const auto& [tag, bucket] : per_phenomenon)
        report.per_phenomenon_exact_match_turn[tag] = percent(bucket.first, bucket.second);
    (void)gold_points_total;
    return report;
}

std::string format_report(const MetricsReport& report) {
    std::ostringstream out;
    char buf[64];
    auto row = [&](const char* name, double value) {
        std::snprintf(buf, sizeof(buf), "%-28s %6.2f", name, value);
        out << buf << "\n";
    };
    row("intent accuracy", report.intent_accuracy);
    row("joint goal accuracy", report.joint_goal_accuracy);
    row("slot accuracy", report.slot_accuracy);
    row("exact match (turn)", report.exact_match_turn);
    row("exact match (conversation)", report.exact_match_conversation);
    out << "exact match (turn) by phenomenon:\n";
    for (const auto& [tag, value] : report.per_phenomenon_exact_match_turn) {
        std::snprintf(buf, sizeof(buf), "  %-26s %6.2f", tag.c_str(), value);
        out << buf << "\n";
    }
    return out.str();
}

std::string report_to_json(const MetricsReport& report) {
    ordered_json j;
    j["intent_accuracy"] = report.intent_accuracy;
    j["joint_goal_accuracy"] = report.joint_goal_accuracy;
    j["slot_accuracy"] = report.slot_accuracy;
    j["exact_match_turn"] = report.exact_match_turn;
    j["exact_match_conversation"] = report.exact_match_conversation;
    ordered_json per = ordered_json::object();
    for (const auto& [tag, value] : report.per_phenomenon_exact_match_turn) per[tag] = value;
    j["per_phenomenon_exact_match_turn"] = std::move(per);
    return j.dump(2);
}

}  // namespace convgen::eval
