#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "convgen/dataset.hpp"

namespace {

namespace fs = std::filesystem;

std::string fixture(const char* name) {
    return std::string(CONVGEN_FIXTURE_DIR) + "/" + name;
}

std::string out_dir() {
    static std::string dir = (fs::temp_directory_path() / "convgen_cli_test").string();
    return dir;
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(CONVGEN_CLI_PATH) + " " + args + " > " + out_dir() +
                      "/cli_stdout.txt 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string last_stdout() {
    std::ifstream in(out_dir() + "/cli_stdout.txt");
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void write_config(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

}  // namespace

TEST_CASE("cli: gen-intents, generate, stats, validate, eval") {
    fs::create_directories(out_dir());

    // gen-intents over the scripted catalog fixture
    std::string gen_config = out_dir() + "/gen.json";
    write_config(gen_config, std::string("{\n") +
        "  \"provider\": {\"kind\": \"scripted\", \"script_file\": \"" +
        fixture("catalog_seed/stage_script.json") + "\"},\n" +
        "  \"paths\": {\"descriptions_file\": \"" + fixture("catalog_seed/descriptions.txt") +
        "\", \"out_dir\": \"" + out_dir() + "\"},\n" +
        "  \"intent_denylist\": [\"start_watching_tv_channel\"]\n}\n");
    REQUIRE(run_cli("gen-intents --config " + gen_config) == 0);
    CHECK(last_stdout().find("53 transactional + 47 query") != std::string::npos);

    // generate a small dataset with the simulated provider
    std::string run_config = out_dir() + "/run.json";
    write_config(run_config, std::string("{\n") +
        "  \"provider\": {\"kind\": \"scripted\"},\n" +
        "  \"n\": 4, \"seed\": 5,\n" +
        "  \"paths\": {\"catalog_file\": \"" + out_dir() + "/catalog.jsonl\", " +
        "\"pools_file\": \"" + out_dir() + "/pools.jsonl\", " +
        "\"out_dir\": \"" + out_dir() + "\"}\n}\n");
    REQUIRE(run_cli("generate --config " + run_config) == 0);
    CHECK(fs::exists(out_dir() + "/dataset.jsonl"));
    CHECK(fs::exists(out_dir() + "/manifest.json"));

    // stats over the emitted dataset
    REQUIRE(run_cli("stats --dataset " + out_dir() + "/dataset.jsonl --catalog " +
                    out_dir() + "/catalog.jsonl") == 0);
    CHECK(last_stdout().find("dialogues:           4") != std::string::npos);

    // the emitted dataset re-validates cleanly (exit 0)
    CHECK(run_cli("validate --dataset " + out_dir() + "/dataset.jsonl --catalog " +
                  out_dir() + "/catalog.jsonl --plans " + out_dir() +
                  "/plans.jsonl --log " + out_dir() + "/reverdicts.jsonl") == 0);

    // scoring the gold dataset against itself is all 100s, exit 0
    REQUIRE(run_cli("eval " + out_dir() + "/dataset.jsonl " + out_dir() +
                    "/dataset.jsonl --json") == 0);
    CHECK(last_stdout().find("\"exact_match_conversation\": 100.0") != std::string::npos);

    // a tampered dataset fails validation with exit 1
    {
        auto records = convgen::dataset::read_dataset(out_dir() + "/dataset.jsonl");
        REQUIRE(!records.empty());
        records[0].phenomena.push_back(convgen::planner::PhenomenonKind::sarcasm);
        convgen::dataset::write_dataset(records, out_dir() + "/tampered.jsonl");
    }
    CHECK(run_cli("validate --dataset " + out_dir() + "/tampered.jsonl --catalog " +
                  out_dir() + "/catalog.jsonl --log " + out_dir() +
                  "/tampered_verdicts.jsonl") == 1);

    // plan writes a plan file that generate can consume
    std::string plan_config = out_dir() + "/plan.json";
    write_config(plan_config, std::string("{\n") +
        "  \"provider\": {\"kind\": \"scripted\"},\n" +
        "  \"n\": 2, \"seed\": 6,\n" +
        "  \"paths\": {\"catalog_file\": \"" + out_dir() + "/catalog.jsonl\", " +
        "\"pools_file\": \"" + out_dir() + "/pools.jsonl\", " +
        "\"out_dir\": \"" + out_dir() + "/planned\"}\n}\n");
    REQUIRE(run_cli("plan --config " + plan_config) == 0);
    CHECK(fs::exists(out_dir() + "/planned/plans.jsonl"));
    std::string reuse_config = out_dir() + "/reuse.json";
    write_config(reuse_config, std::string("{\n") +
        "  \"provider\": {\"kind\": \"scripted\"},\n" +
        "  \"n\": 2, \"seed\": 6,\n" +
        "  \"paths\": {\"catalog_file\": \"" + out_dir() + "/catalog.jsonl\", " +
        "\"pools_file\": \"" + out_dir() + "/pools.jsonl\", " +
        "\"plans_file\": \"" + out_dir() + "/planned/plans.jsonl\", " +
        "\"out_dir\": \"" + out_dir() + "/planned\"}\n}\n");
    REQUIRE(run_cli("generate --config " + reuse_config) == 0);

    // fatal errors exit 2
    CHECK(run_cli("stats --dataset /no/such/file --catalog " + out_dir() +
                  "/catalog.jsonl") == 2);
}
