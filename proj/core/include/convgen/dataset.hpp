#pragma once
// Conversation record serialization, split assignment (including the
// unseen-intent OOD split) and dataset statistics.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convgen/agents.hpp"
#include "convgen/planner.hpp"
#include "convgen/schema.hpp"

namespace convgen::dataset {

enum class Split { train, dev, test, test_ood };

std::string to_string(Split s);
std::optional<Split> split_from_string(const std::string& s);

struct ConversationRecord {
    std::string id;
    std::vector<agents::TurnRecord> turns;
    // Joined from the plan file by seed; not part of the dataset format.
    std::optional<planner::ConversationPlan> plan;
    std::vector<planner::PhenomenonKind> phenomena;
    Split split = Split::train;
    std::uint64_t seed = 0;
    bool salvaged = false;
};

// Turn grammar holds, commands reparse, and the phenomena list equals the
// tokens observed in the turns. Throws PreconditionError.
void check_record_invariants(const ConversationRecord& record);

// One record per line; field names `id, split, turns[], phenomena[], seed`
// plus `salvaged`; turn fields `kind, text, commands[], signal, phenomenon`.
void write_dataset(const std::vector<ConversationRecord>& records, const std::string& path);
std::vector<ConversationRecord> read_dataset(const std::string& path);

// Joins plans onto records by seed.
void attach_plans(std::vector<ConversationRecord>& records,
                  const std::vector<planner::ConversationPlan>& plans);

// Conversations touching an OOD intent go to test_ood; the rest are
// partitioned train/dev/test by the given ratios, seeded shuffle.
void assign_splits(std::vector<ConversationRecord>& records,
                   const schema::SchemaCatalog& catalog,
                   const std::vector<std::string>& ood_intents,
                   const std::array<double, 3>& ratios, std::uint64_t seed);

struct DatasetStats {
    std::size_t domains = 0;
    std::size_t intents = 0;
    std::size_t slots = 0;
    std::size_t dialogues = 0;
    std::size_t turns = 0;
    double turns_per_dialogue = 0.0;
    std::map<planner::PhenomenonKind, std::size_t> phenomenon_counts;
    std::size_t conversations_unhappy = 0;
    double pct_unhappy = 0.0;  // percentage of conversations with >= 1 phenomenon
    std::map<Split, std::size_t> split_counts;

    friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

DatasetStats compute_stats(const std::vector<ConversationRecord>& records,
                           const schema::SchemaCatalog& catalog);

std::string format_stats(const DatasetStats& stats);
std::string stats_to_json(const DatasetStats& stats);

}  // namespace convgen::dataset
