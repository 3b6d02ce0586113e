#include <benchmark/benchmark.h>

#include "convgen/command_dsl.hpp"

using namespace convgen;

namespace {

const char* kLines[] = {
    "x0 = book_hotel_room(city=\"Paris\", check_in_date=\"5th of March\", nights=3)",
    "x0.check_in_date = \"12th of June\"",
    "say(message=\"Shall I book it?\")",
    "confirm(x0)",
    "x1 = find_alarms()",
    "x2 = review_film(film_name=<STR>, rating=9, review=<STR>, spoiler_alert=False)",
};

std::vector<dsl::Command> sample_commands() {
    std::vector<dsl::Command> out;
    for (const char* line : kLines) out.push_back(dsl::parse_command(line));
    return out;
}

}  // namespace

static void BM_ParseCommand(benchmark::State& state) {
    std::size_t i = 0;
    for (auto _ : state) {
        auto cmd = dsl::parse_command(kLines[i++ % 6]);
        benchmark::DoNotOptimize(cmd);
    }
}
BENCHMARK(BM_ParseCommand);

static void BM_SerializeCommand(benchmark::State& state) {
    auto cmds = sample_commands();
    std::size_t i = 0;
    for (auto _ : state) {
        auto line = dsl::serialize_command(cmds[i++ % cmds.size()]);
        benchmark::DoNotOptimize(line);
    }
}
BENCHMARK(BM_SerializeCommand);

static void BM_Canonicalize(benchmark::State& state) {
    auto cmds = sample_commands();
    for (auto _ : state) {
        auto canon = dsl::canonicalize(cmds);
        benchmark::DoNotOptimize(canon);
    }
}
BENCHMARK(BM_Canonicalize);

static void BM_CommandsEqual(benchmark::State& state) {
    auto a = sample_commands();
    auto b = sample_commands();
    for (auto _ : state) {
        bool equal = dsl::commands_equal(a, b);
        benchmark::DoNotOptimize(equal);
    }
}
BENCHMARK(BM_CommandsEqual);

static void BM_ParseSignal(benchmark::State& state) {
    const std::string line =
        "signal: query_result(x0, entities=[{id=\"alarms-1\", alarm_time=\"7am\"}, "
        "{id=\"alarms-2\", alarm_time=\"9:30am\", label=\"run\"}])";
    for (auto _ : state) {
        auto sig = dsl::parse_signal(line);
        benchmark::DoNotOptimize(sig);
    }
}
BENCHMARK(BM_ParseSignal);
