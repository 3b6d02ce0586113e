#include <benchmark/benchmark.h>

#include "convgen/eval.hpp"

using namespace convgen;

static void BM_Levenshtein(benchmark::State& state) {
    const std::string a = "an absolute classic with superb pacing";
    const std::string b = "an absolute classic! Great performances";
    for (auto _ : state) {
        auto d = eval::levenshtein(a, b);
        benchmark::DoNotOptimize(d);
    }
}
BENCHMARK(BM_Levenshtein);

static void BM_FuzzyMatch(benchmark::State& state) {
    for (auto _ : state) {
        bool hit = eval::fuzzy_match("the 5th of March", "5th of March");
        benchmark::DoNotOptimize(hit);
    }
}
BENCHMARK(BM_FuzzyMatch);

static void BM_HashingEmbedder(benchmark::State& state) {
    eval::HashingEmbedder embedder;
    const std::string utterance =
        "I want to book a hotel room in Paris from the 5th of March for three nights";
    for (auto _ : state) {
        auto v = embedder.embed(utterance);
        benchmark::DoNotOptimize(v);
    }
}
BENCHMARK(BM_HashingEmbedder);

BENCHMARK_MAIN();
