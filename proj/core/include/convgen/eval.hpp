#pragma once
// Scoring predictions against gold conversations: intent accuracy, joint
// goal accuracy, fuzzy slot accuracy, exact match per turn and per
// conversation, plus the three tool-retrieval modes.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "convgen/command_dsl.hpp"
#include "convgen/dataset.hpp"
#include "convgen/schema.hpp"

namespace convgen::eval {

// ---- text matching ----

std::size_t levenshtein(const std::string& a, const std::string& b);

// lowercase, trim, collapse whitespace, strip a leading article and
// terminal punctuation.
std::string normalize_for_match(const std::string& s);

// Equal after normalization, or normalized edit similarity >= threshold.
bool fuzzy_match(const std::string& a, const std::string& b, double threshold = 0.85);

// ---- embeddings ----

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<float> embed(const std::string& text) const = 0;
};

// Deterministic bag-of-words hashing embedder; good enough to exercise the
// retrieval path in tests.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dims = 64) : dims_(dims) {}
    std::vector<float> embed(const std::string& text) const override;

private:
    std::size_t dims_;
};

double cosine(const std::vector<float>& a, const std::vector<float>& b);

enum class RetrievalMode { none, retrieval, oracle };
std::string to_string(RetrievalMode m);

// none: empty. retrieval: the tool whose name embeds closest to the last
// user utterance, plus every tool already mentioned in the oracle history.
// oracle: exactly the history (gold) tools.
std::vector<schema::IntentSchema> retrieve_tools(const std::string& user_utterance,
                                                 const schema::SchemaCatalog& catalog,
                                                 const std::vector<std::string>& history_intents,
                                                 const Embedder& embedder, RetrievalMode mode);

// ---- prediction files & metrics ----

struct PredictionPoint {
    std::string conversation_id;
    std::size_t point_index = 0;  // index over the gold conversation's system turns
    std::vector<dsl::Command> commands;
};

using PredictionFile = std::vector<PredictionPoint>;

void save_predictions(const PredictionFile& predictions, const std::string& path);
PredictionFile load_predictions(const std::string& path);

// Gold system turns as a prediction file (identity predictions).
PredictionFile predictions_from_gold(const std::vector<dataset::ConversationRecord>& gold);

struct MetricsReport {
    double intent_accuracy = 0.0;
    double joint_goal_accuracy = 0.0;
    double slot_accuracy = 0.0;
    double exact_match_turn = 0.0;
    double exact_match_conversation = 0.0;
    // keyed by slug, "none" included
    std::map<std::string, double> per_phenomenon_exact_match_turn;
};

// Throws AlignmentError when predictions are missing or extra for any
// (conversation, point) pair.
MetricsReport evaluate(const std::vector<dataset::ConversationRecord>& gold,
                       const PredictionFile& predictions, double fuzzy_threshold = 0.85);

std::string format_report(const MetricsReport& report);
std::string report_to_json(const MetricsReport& report);

}  // namespace convgen::eval
