#include "convgen/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "convgen/rng.hpp"

namespace convgen::dataset {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json turn_to_json(const agents::TurnRecord& turn) {
    ordered_json j;
    j["kind"] = agents::to_string(turn.kind);
    switch (turn.kind) {
        case agents::TurnKind::user:
        case agents::TurnKind::response:
            j["text"] = turn.text;
            break;
        case agents::TurnKind::system: {
            ordered_json cmds = ordered_json::array();
            for (const auto& cmd : turn.commands) cmds.push_back(dsl::serialize_command(cmd));
            j["commands"] = std::move(cmds);
            break;
        }
        case agents::TurnKind::signal:
            j["signal"] = dsl::serialize_signal(*turn.signal);
            break;
    }
    if (turn.phenomenon) j["phenomenon"] = planner::to_string(*turn.phenomenon);
    return j;
}

agents::TurnRecord turn_from_json(const ordered_json& j) {
    agents::TurnRecord turn;
    auto kind = agents::turn_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw ParseError("unknown turn kind: " + j.at("kind").dump());
    turn.kind = *kind;
    switch (turn.kind) {
        case agents::TurnKind::user:
        case agents::TurnKind::response:
            turn.text = j.at("text").get<std::string>();
            break;
        case agents::TurnKind::system:
            for (const auto& line : j.at("commands"))
                turn.commands.push_back(dsl::parse_command(line.get<std::string>()));
            break;
        case agents::TurnKind::signal:
            turn.signal = dsl::parse_signal(j.at("signal").get<std::string>());
            break;
    }
    if (j.contains("phenomenon")) {
        auto kind2 = planner::phenomenon_from_string(j.at("phenomenon").get<std::string>());
        if (!kind2) throw ParseError("unknown phenomenon: " + j.at("phenomenon").dump());
        turn.phenomenon = kind2;
    }
    return turn;
}

}  // namespace

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
        case Split::test_ood: return "test_ood";
    }
    return "train";
}

std::optional<Split> split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "dev") return Split::dev;
    if (s == "test") return Split::test;
    if (s == "test_ood") return Split::test_ood;
    return std::nullopt;
}

void check_record_invariants(const ConversationRecord& record) {
    agents::check_turn_grammar(record.turns);
    std::vector<planner::PhenomenonKind> observed;
    for (const auto& turn : record.turns) {
        if (turn.kind == agents::TurnKind::user && turn.phenomenon)
            observed.push_back(*turn.phenomenon);
        for (const auto& cmd : turn.commands) {
            // commands must survive a serialize/parse round trip
            if (!(dsl::parse_command(dsl::serialize_command(cmd)) == cmd))
                throw PreconditionError("record " + record.id +
                                        " has a command that does not reparse");
        }
    }
    if (observed != record.phenomena)
        throw PreconditionError("record " + record.id +
                                " phenomena list does not match observed tokens");
}

void write_dataset(const std::vector<ConversationRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open dataset file for writing: " + path);
    for (const auto& record : records) {
        ordered_json j;
        j["id"] = record.id;
        j["split"] = to_string(record.split);
        ordered_json turns = ordered_json::array();
        for (const auto& turn : record.turns) turns.push_back(turn_to_json(turn));
        j["turns"] = std::move(turns);
        ordered_json phenomena = ordered_json::array();
        for (const auto& kind : record.phenomena) phenomena.push_back(planner::to_string(kind));
        j["phenomena"] = std::move(phenomena);
        j["seed"] = record.seed;
        j["salvaged"] = record.salvaged;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing dataset file: " + path);
}

std::vector<ConversationRecord> read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    std::vector<ConversationRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
        if (blank) continue;
        try {
            ordered_json j = ordered_json::parse(line);
            ConversationRecord record;
            record.id = j.at("id").get<std::string>();
            auto split = split_from_string(j.at("split").get<std::string>());
            if (!split) throw ParseError("unknown split: " + j.at("split").dump());
            record.split = *split;
            for (const auto& jt : j.at("turns")) record.turns.push_back(turn_from_json(jt));
            for (const auto& p : j.at("phenomena")) {
                auto kind = planner::phenomenon_from_string(p.get<std::string>());
                if (!kind) throw ParseError("unknown phenomenon: " + p.dump());
                record.phenomena.push_back(*kind);
            }
            record.seed = j.at("seed").get<std::uint64_t>();
            record.salvaged = j.value("salvaged", false);
            records.push_back(std::move(record));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("malformed dataset record: ") + e.what(), lineno);
        } catch (const Error& e) {
            throw SchemaError(std::string("malformed dataset record: ") + e.what(), lineno);
        }
    }
    return records;
}

void attach_plans(std::vector<ConversationRecord>& records,
                  const std::vector<planner::ConversationPlan>& plans) {
    std::map<std::uint64_t, const planner::ConversationPlan*> by_seed;
    for (const auto& plan : plans) by_seed[plan.seed] = &plan;
    for (auto& record : records) {
        auto it = by_seed.find(record.seed);
        if (it != by_seed.end()) record.plan = *it->second;
    }
}

void assign_splits(std::vector<ConversationRecord>& records,
                   const schema::SchemaCatalog& catalog,
                   const std::vector<std::string>& ood_intents,
                   const std::array<double, 3>& ratios, std::uint64_t seed) {
    for (const auto& name : ood_intents)
        if (!catalog.find(name))
            throw PreconditionError("OOD intent not in catalog: " + name);
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw PreconditionError("split ratios must sum to 1");

    std::set<std::string> ood(ood_intents.begin(), ood_intents.end());
    auto touches_ood = [&](const ConversationRecord& record) {
        for (const auto& turn : record.turns)
            for (const auto& cmd : turn.commands)
                if (const auto* ic = std::get_if<dsl::IntentCall>(&cmd))
                    if (ood.count(ic->intent)) return true;
        if (record.plan)
            for (const auto& name : record.plan->intent_sequence)
                if (ood.count(name)) return true;
        return false;
    };

    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (touches_ood(records[i])) {
            records[i].split = Split::test_ood;
        } else {
            rest.push_back(i);
        }
    }
    auto rng = make_rng(seed);
    std::shuffle(rest.begin(), rest.end(), rng);
    const std::size_t n = rest.size();
    std::size_t n_train = static_cast<std::size_t>(std::llround(ratios[0] * n));
    std::size_t n_dev = static_cast<std::size_t>(std::llround(ratios[1] * n));
    if (n_train + n_dev > n) n_dev = n - n_train;
    for (std::size_t k = 0; k < n; ++k) {
        Split s = k < n_train ? Split::train : (k < n_train + n_dev ? Split::dev : Split::test);
        records[rest[k]].split = s;
    }
}

DatasetStats compute_stats(const std::vector<ConversationRecord>& records,
                           const schema::SchemaCatalog& catalog) {
    DatasetStats stats;
    stats.domains = catalog.domains().size();
    stats.intents = catalog.intents.size();
    stats.slots = catalog.total_slot_count();
    stats.dialogues = records.size();
    for (const auto& record : records) {
        stats.turns += record.turns.size();
        stats.split_counts[record.split] += 1;
        bool unhappy = false;
        for (const auto& turn : record.turns) {
            if (turn.kind == agents::TurnKind::user && turn.phenomenon) {
                stats.phenomenon_counts[*turn.phenomenon] += 1;
                unhappy = true;
            }
        }
        if (unhappy) stats.conversations_unhappy += 1;
    }
    if (stats.dialogues > 0) {
        stats.turns_per_dialogue =
            static_cast<double>(stats.turns) / static_cast<double>(stats.dialogues);
        stats.pct_unhappy = 100.0 * static_cast<double>(stats.conversations_unhappy) /
                            static_cast<double>(stats.dialogues);
    }
    return stats;
}

std::string format_stats(const DatasetStats& stats) {
    std::ostringstream out;
    out << "domains:             " << stats.domains << "\n";
    out << "intents:             " << stats.intents << "\n";
    out << "slots:               " << stats.slots << "\n";
    out << "dialogues:           " << stats.dialogues << "\n";
    out << "turns:               " << stats.turns << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", stats.turns_per_dialogue);
    out << "turns per dialogue:  " << buf << "\n";
    out << "splits:              ";
    const Split order[] = {Split::train, Split::dev, Split::test, Split::test_ood};
    bool first = true;
    for (Split s : order) {
        auto it = stats.split_counts.find(s);
        std::size_t count = it == stats.split_counts.end() ? 0 : it->second;
        out << (first ? "" : " / ") << to_string(s) << "=" << count;
        first = false;
    }
    out << "\n";
    out << "phenomena:\n";
    for (planner::PhenomenonKind kind : planner::all_phenomena()) {
        auto it = stats.phenomenon_counts.find(kind);
        std::size_t count = it == stats.phenomenon_counts.end() ? 0 : it->second;
        out << "  " << planner::to_string(kind) << ": " << count << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%.1f", stats.pct_unhappy);
    out << "conversations with a phenomenon: " << stats.conversations_unhappy << " (" << buf
        << "%)\n";
    return out.str();
}

std::string stats_to_json(const DatasetStats& stats) {
    ordered_json j;
    j["domains"] = stats.domains;
    j["intents"] = stats.intents;
    j["slots"] = stats.slots;
    j["dialogues"] = stats.dialogues;
    j["turns"] = stats.turns;
    j["turns_per_dialogue"] = stats.turns_per_dialogue;
    ordered_json splits = ordered_json::object();
    const Split order[] = {Split::train, Split::dev, Split::test, Split::test_ood};
    for (Split s : order) {
        auto it = stats.split_counts.find(s);
        splits[to_string(s)] = it == stats.split_counts.end() ? 0 : it->second;
    }
    j["split_counts"] = std::move(splits);
    ordered_json phenomena = ordered_json::object();
    for (planner::PhenomenonKind kind : planner::all_phenomena()) {
        auto it = stats.phenomenon_counts.find(kind);
        phenomena[planner::to_string(kind)] =
            it == stats.phenomenon_counts.end() ? 0 : it->second;
    }
    j["phenomenon_counts"] = std::move(phenomena);
    j["conversations_unhappy"] = stats.conversations_unhappy;
    j["pct_unhappy"] = stats.pct_unhappy;
    return j.dump(2);
}

}  // namespace convgen::dataset
