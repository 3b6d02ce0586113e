#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "convgen/config.hpp"
#include "convgen/dataset.hpp"
#include "convgen/pipeline.hpp"

using namespace convgen;
using namespace convgen::dataset;

namespace {

std::string fixture(const char* name) {
    return std::string(CONVGEN_FIXTURE_DIR) + "/" + name;
}

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<ConversationRecord> generated_records(int n, std::uint64_t seed) {
    RunConfig config;
    config.seed = seed;
    config.n_conversations = n;
    config.catalog_file = fixture("seed_dataset/catalog.jsonl");
    config.pools_file = fixture("seed_dataset/pools.jsonl");
    config.out_dir = temp_file("convgen_ds_gen");
    auto manifest = pipeline::run_pipeline(config);
    return read_dataset(manifest.dataset_file);
}

ConversationRecord tiny_record(std::uint64_t seed, Split split) {
    ConversationRecord record;
    record.id = "conv-" + std::to_string(seed);
    record.seed = seed;
    record.split = split;
    agents::TurnRecord u;
    u.kind = agents::TurnKind::user;
    u.text = "set an alarm for 7am";
    u.phenomenon = seed % 2 ? std::optional(planner::PhenomenonKind::sarcasm) : std::nullopt;
    agents::TurnRecord s;
    s.kind = agents::TurnKind::system;
    s.commands = {dsl::parse_command("x0 = set_alarm(alarm_time=\"7am\")")};
    agents::TurnRecord g;
    g.kind = agents::TurnKind::signal;
    g.signal = dsl::parse_signal("signal: performed(x0, id=\"alarms-1\")");
    agents::TurnRecord s2;
    s2.kind = agents::TurnKind::system;
    s2.commands = {dsl::parse_command("say()")};
    agents::TurnRecord r;
    r.kind = agents::TurnKind::response;
    r.text = "Done.";
    record.turns = {u, s, g, s2, r};
    if (u.phenomenon) record.phenomena = {*u.phenomenon};
    return record;
}

}  // namespace

TEST_CASE("write/read round trip over generated records") {
    auto records = generated_records(6, 31);
    REQUIRE(records.size() == 6);
    std::string path = temp_file("convgen_roundtrip.jsonl");
    write_dataset(records, path);
    auto loaded = read_dataset(path);
    REQUIRE(loaded.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(loaded[i].id == records[i].id);
        CHECK(loaded[i].turns == records[i].turns);
        CHECK(loaded[i].phenomena == records[i].phenomena);
        CHECK(loaded[i].split == records[i].split);
        CHECK(loaded[i].seed == records[i].seed);
        CHECK(loaded[i].salvaged == records[i].salvaged);
    }
    // a second write of the loaded records is byte-identical
    std::string again = temp_file("convgen_roundtrip2.jsonl");
    write_dataset(loaded, again);
    std::ifstream a(path), b(again);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    std::remove(path.c_str());
    std::remove(again.c_str());
}

TEST_CASE("record invariants: phenomena must equal the observed tokens") {
    auto record = tiny_record(1, Split::train);
    check_record_invariants(record);
    record.phenomena.push_back(planner::PhenomenonKind::correction);
    CHECK_THROWS_AS(check_record_invariants(record), PreconditionError);
}

TEST_CASE("reading a truncated file reports the line number") {
    std::string path = temp_file("convgen_truncated.jsonl");
    {
        write_dataset({tiny_record(2, Split::train)}, path);
        std::ofstream out(path, std::ios::app);
        out << "{\"id\": \"conv-cut\", \"turns\": [{\"ki";
    }
    try {
        read_dataset(path);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.line() == 2);
    }
    std::remove(path.c_str());
}

TEST_CASE("an empty file is an empty dataset") {
    std::string path = temp_file("convgen_empty.jsonl");
    { std::ofstream out(path); }
    CHECK(read_dataset(path).empty());
    std::remove(path.c_str());
}

TEST_CASE("assign_splits: OOD conversations always land in test_ood") {
    auto catalog = schema::load_catalog(fixture("seed_dataset/catalog.jsonl"));
    std::vector<ConversationRecord> records;
    for (int i = 0; i < 10; ++i) records.push_back(tiny_record(i, Split::train));
    assign_splits(records, catalog, {"set_alarm"}, {0.8, 0.1, 0.1}, 5);
    for (const auto& record : records) CHECK(record.split == Split::test_ood);

    assign_splits(records, catalog, {}, {0.8, 0.1, 0.1}, 5);
    for (const auto& record : records) CHECK(record.split != Split::test_ood);
}

TEST_CASE("assign_splits: seeded ratios partition within one of the target") {
    auto catalog = schema::load_catalog(fixture("seed_dataset/catalog.jsonl"));
    std::vector<ConversationRecord> records;
    for (int i = 0; i < 1000; ++i) {
        auto record = tiny_record(i, Split::train);
        record.turns[1].commands = {dsl::parse_command("x0 = book_flight()")};
        record.turns[2].signal = dsl::parse_signal("signal: missing_slots(x0, [\"destination\"])");
        records.push_back(record);
    }
    assign_splits(records, catalog, {}, {0.8, 0.1, 0.1}, 99);
    std::map<Split, int> counts;
    for (const auto& record : records) counts[record.split] += 1;
    // oracle: counting after the seeded shuffle puts sizes within +-1
    CHECK(std::abs(counts[Split::train] - 800) <= 1);
    CHECK(std::abs(counts[Split::dev] - 100) <= 1);
    CHECK(std::abs(counts[Split::test] - 100) <= 1);
    CHECK(counts[Split::train] + counts[Split::dev] + counts[Split::test] == 1000);

    // deterministic per seed
    auto copy = records;
    assign_splits(copy, catalog, {}, {0.8, 0.1, 0.1}, 99);
    for (std::size_t i = 0; i < records.size(); ++i)
        CHECK(copy[i].split == records[i].split);
}

TEST_CASE("compute_stats: empty dataset, additivity of phenomenon counts") {
    auto catalog = schema::load_catalog(fixture("seed_dataset/catalog.jsonl"));
    auto empty = compute_stats({}, catalog);
    CHECK(empty.dialogues == 0);
    CHECK(empty.turns == 0);
    CHECK(empty.pct_unhappy == 0.0);
    CHECK(empty.intents == 100);
    CHECK(empty.domains == 13);

    std::vector<ConversationRecord> a, b, both;
    for (int i = 0; i < 7; ++i) {
        auto record = tiny_record(i, Split::train);
        (i % 2 ? a : b).push_back(record);
        both.push_back(record);
    }
    auto stats_a = compute_stats(a, catalog);
    auto stats_b = compute_stats(b, catalog);
    auto stats_both = compute_stats(both, catalog);
    for (planner::PhenomenonKind kind : planner::all_phenomena()) {
        std::size_t in_a =
            stats_a.phenomenon_counts.count(kind) ? stats_a.phenomenon_counts.at(kind) : 0;
        std::size_t in_b =
            stats_b.phenomenon_counts.count(kind) ? stats_b.phenomenon_counts.at(kind) : 0;
        std::size_t in_both = stats_both.phenomenon_counts.count(kind)
                                  ? stats_both.phenomenon_counts.at(kind)
                                  : 0;
        CHECK(in_both == in_a + in_b);
    }
    CHECK(stats_both.turns == stats_a.turns + stats_b.turns);
}

TEST_CASE("attach_plans joins by seed") {
    planner::ConversationPlan plan;
    plan.seed = 4;
    plan.intent_sequence = {"set_alarm"};
    plan.slot_assignments = {{}};
    std::vector<ConversationRecord> records{tiny_record(4, Split::train),
                                            tiny_record(5, Split::train)};
    attach_plans(records, {plan});
    CHECK(records[0].plan.has_value());
    CHECK_FALSE(records[1].plan.has_value());
}
