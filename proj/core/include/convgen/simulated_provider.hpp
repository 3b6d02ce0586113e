#pragma once
// A deterministic, rule-based stand-in for a language model. It plays all
// fourteen pipeline stages by parsing the structured sections of the
// default prompt templates (STAGE:, == RULES ==, == HISTORY ==, ...),
// which makes fully offline, reproducible end-to-end runs possible.
//
// It is a well-behaved model by construction: labels are consistent across
// repeats, phenomenon tokens appear when due, and string values are spans
// of the user text. Failure-path behaviour is exercised with scripted
// providers instead.

#include <memory>

#include "convgen/provider.hpp"

namespace convgen {

class SimulatedProvider : public LLMProvider {
public:
    SimulatedProvider() = default;

    std::string complete(const std::string& prompt, double temperature,
                         std::optional<std::uint64_t> seed) override;
};

}  // namespace convgen
