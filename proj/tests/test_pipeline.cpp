#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "convgen/config.hpp"
#include "convgen/pipeline.hpp"
#include "convgen/prompts.hpp"

using namespace convgen;

namespace {

std::string fixture(const char* name) {
    return std::string(CONVGEN_FIXTURE_DIR) + "/" + name;
}

std::string temp_dir(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

RunConfig scripted_config(const char* out, int n, std::uint64_t seed) {
    RunConfig config;
    config.seed = seed;
    config.n_conversations = n;
    config.catalog_file = fixture("seed_dataset/catalog.jsonl");
    config.pools_file = fixture("seed_dataset/pools.jsonl");
    config.out_dir = temp_dir(out);
    return config;
}

}  // namespace

TEST_CASE("scripted five-conversation run keeps everything") {
    auto manifest = pipeline::run_pipeline(scripted_config("convgen_run5", 5, 11));
    CHECK(manifest.generated == 5);
    CHECK(manifest.validated == 5);
    CHECK(manifest.salvaged == 0);
    CHECK(manifest.discarded == 0);
    CHECK(manifest.generated ==
          manifest.validated + manifest.salvaged + manifest.discarded);
    auto records = dataset::read_dataset(manifest.dataset_file);
    CHECK(records.size() == 5);
    for (const auto& record : records) dataset::check_record_invariants(record);
}

TEST_CASE("two runs with the same seed produce byte-identical outputs") {
    auto a = pipeline::run_pipeline(scripted_config("convgen_det_a", 6, 99));
    auto b = pipeline::run_pipeline(scripted_config("convgen_det_b", 6, 99));
    CHECK(slurp(a.dataset_file) == slurp(b.dataset_file));
    CHECK(slurp(a.plans_file) == slurp(b.plans_file));
    CHECK(slurp(a.verdicts_file) == slurp(b.verdicts_file));
    CHECK(slurp(a.stats_file) == slurp(b.stats_file));

    auto c = pipeline::run_pipeline(scripted_config("convgen_det_c", 6, 100));
    CHECK(slurp(a.dataset_file) != slurp(c.dataset_file));
}

TEST_CASE("a zero phenomenon rate yields a dataset without tokens") {
    auto config = scripted_config("convgen_nophen", 8, 3);
    config.sampling.phenomenon_rate = 0.0;
    auto manifest = pipeline::run_pipeline(config);
    auto records = dataset::read_dataset(manifest.dataset_file);
    for (const auto& record : records) CHECK(record.phenomena.empty());
}

TEST_CASE("config validation fails fast on bad ratios and probabilities") {
    CHECK_THROWS_AS(parse_config(R"({"splits": {"ratios": [0.9, 0.2, 0.1]}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"sampling": {"phenomenon_rate": 1.5}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"provider": {"kind": "psychic"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({not json)"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"paths": {"catalog_file": "/no/such/file"}})"),
                    ConfigError);
    RunConfig ok = parse_config(R"({"seed": 4, "n": 2})");
    CHECK(ok.seed == 4);
    CHECK(ok.n_conversations == 2);
}

TEST_CASE("config hash tracks output-relevant settings") {
    RunConfig a = parse_config(R"({"seed": 4})");
    RunConfig b = parse_config(R"({"seed": 5})");
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a) == config_hash(parse_config(R"({"seed": 4})")));
}

TEST_CASE("the shipped prompt files match the built-in templates") {
    auto from_disk =
        prompts::PromptLibrary::from_dir(std::string(CONVGEN_REPO_DIR) + "/prompts");
    const auto& builtin = prompts::PromptLibrary::builtin();
    for (const auto& key : builtin.keys()) CHECK(from_disk.raw(key) == builtin.raw(key));
}

TEST_CASE("gen-intents over the scripted descriptions reproduces the catalog figures") {
    RunConfig config;
    config.provider.kind = "scripted";
    config.provider.script_file = fixture("catalog_seed/stage_script.json");
    config.descriptions_file = fixture("catalog_seed/descriptions.txt");
    config.intent_denylist = {"start_watching_tv_channel"};
    auto provider = make_provider(config.provider);
    auto descriptions = pipeline::read_description_file(config.descriptions_file);
    CHECK(descriptions.size() == 54);

    std::vector<schema::SlotValuePool> pools;
    auto catalog = pipeline::generate_catalog(descriptions, config.intent_denylist,
                                              *provider, 0.7, 1, pools);
    std::size_t transactional = 0, queries = 0;
    for (const auto& intent : catalog.intents)
        (intent.kind == schema::IntentKind::query ? queries : transactional) += 1;
    CHECK(transactional == 53);
    CHECK(queries == 47);
    CHECK(catalog.intents.size() == 100);
    CHECK(catalog.domains().size() == 13);
    CHECK(pools.size() == 53);
}

TEST_CASE("per-conversation failures are recorded, never fatal") {
    // this script only answers schema-generation prompts, so every
    // planning attempt fails and every conversation is discarded
    auto config = scripted_config("convgen_abort", 3, 17);
    config.provider.kind = "scripted";
    config.provider.script_file = fixture("catalog_seed/stage_script.json");
    config.run_validators = false;
    auto manifest = pipeline::run_pipeline(config);
    CHECK(manifest.generated == 3);
    CHECK(manifest.discarded == 3);
    CHECK(manifest.validated == 0);
    CHECK(dataset::read_dataset(manifest.dataset_file).empty());
    CHECK(manifest.generated ==
          manifest.validated + manifest.salvaged + manifest.discarded);
}

TEST_CASE("the dataset does not depend on the worker count") {
    auto one = scripted_config("convgen_workers1", 6, 41);
    one.concurrency = 1;
    auto two = scripted_config("convgen_workers2", 6, 41);
    two.concurrency = 2;
    auto a = pipeline::run_pipeline(one);
    auto b = pipeline::run_pipeline(two);
    CHECK(slurp(a.dataset_file) == slurp(b.dataset_file));
}

TEST_CASE("pre-built plans drive generation through paths.plans_file") {
    auto planning = scripted_config("convgen_replan", 4, 77);
    auto provider = make_provider(planning.provider);
    auto catalog = schema::load_catalog(planning.catalog_file);
    auto pools = schema::load_pools(planning.pools_file);
    auto plans = pipeline::plan_conversations(catalog, pools, *provider, planning, 4);
    std::filesystem::create_directories(planning.out_dir);
    std::string plans_path = planning.out_dir + "/premade_plans.jsonl";
    planner::save_plans(plans, plans_path);

    auto direct = pipeline::run_pipeline(planning);

    auto reuse = scripted_config("convgen_replan_reuse", 4, 77);
    reuse.plans_file = plans_path;
    auto replayed = pipeline::run_pipeline(reuse);
    CHECK(slurp(direct.dataset_file) == slurp(replayed.dataset_file));
}
