#include <benchmark/benchmark.h>

#include "convgen/backend.hpp"

using namespace convgen;

namespace {

schema::SchemaCatalog bench_catalog() {
    schema::SchemaCatalog catalog;
    schema::IntentSchema hotel;
    hotel.intent_name = "book_hotel_room";
    hotel.domain = "travel";
    hotel.kind = schema::IntentKind::transactional;
    hotel.entity_name = "hotel_rooms";
    hotel.slots = {{"city", schema::SlotType::text, true, {}},
                   {"check_in_date", schema::SlotType::date_text, true, {}},
                   {"nights", schema::SlotType::integer, false, {}}};
    catalog.intents = {hotel, schema::derive_query_intent(hotel)};
    return catalog;
}

}  // namespace

static void BM_ApplyCommandCycle(benchmark::State& state) {
    auto catalog = bench_catalog();
    auto call = dsl::parse_command("x0 = book_hotel_room(city=\"Paris\")");
    auto fill = dsl::parse_command("x0.check_in_date = \"5th of March\"");
    auto confirm = dsl::parse_command("confirm(x0)");
    for (auto _ : state) {
        backend::BackendSession session(catalog, {});
        benchmark::DoNotOptimize(session.apply_command(call));
        benchmark::DoNotOptimize(session.apply_command(fill));
        benchmark::DoNotOptimize(session.apply_command(confirm));
    }
}
BENCHMARK(BM_ApplyCommandCycle);

static void BM_QueryFilter(benchmark::State& state) {
    auto catalog = bench_catalog();
    backend::EntityStore store;
    for (int i = 0; i < state.range(0); ++i)
        store.add("hotel_rooms", {{"city", dsl::Value::text(i % 2 ? "Paris" : "London")},
                                  {"nights", dsl::Value::integer(i % 5)}});
    const auto* query = catalog.find("find_hotel_rooms");
    dsl::ArgList args{{"city", dsl::Value::text("paris")}};
    for (auto _ : state) {
        auto hits = backend::query_filter(store, *query, args);
        benchmark::DoNotOptimize(hits);
    }
}
BENCHMARK(BM_QueryFilter)->Arg(16)->Arg(256);
