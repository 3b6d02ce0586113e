#pragma once
// Pluggable language-model providers. Everything the pipeline asks of a
// model goes through complete(); the scripted implementations make runs
// reproducible, the remote one talks to an HTTP endpoint.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace convgen {

class LLMProvider {
public:
    virtual ~LLMProvider() = default;

    // Returns the model reply for a prompt. Scripted implementations are
    // deterministic given (prompt, seed). Throws ProviderError on
    // transport failure or script exhaustion.
    virtual std::string complete(const std::string& prompt, double temperature,
                                 std::optional<std::uint64_t> seed) = 0;
};

// Replays canned replies from a script. Two modes:
//   ordinal     — replies consumed in order, regardless of prompt
//   prompt_hash — replies keyed by fnv1a64(prompt), hex-encoded
struct ProviderScript {
    enum class Mode { ordinal, prompt_hash };
    Mode mode = Mode::ordinal;
    std::vector<std::string> replies;               // ordinal
    std::map<std::string, std::string> by_hash;     // prompt_hash

    static ProviderScript load(const std::string& path);
};

class ScriptedProvider : public LLMProvider {
public:
    explicit ScriptedProvider(ProviderScript script);
    explicit ScriptedProvider(std::vector<std::string> ordinal_replies);

    std::string complete(const std::string& prompt, double temperature,
                         std::optional<std::uint64_t> seed) override;

    std::size_t calls() const { return calls_; }

private:
    ProviderScript script_;
    std::size_t next_ = 0;
    std::size_t calls_ = 0;
    std::mutex mu_;
};

struct RemoteProviderConfig {
    std::string endpoint;       // e.g. http://127.0.0.1:8080/v1/chat/completions
    std::string model;
    std::string api_key_env;    // name of the env var holding the key
    int max_concurrent = 4;
    int timeout_ms = 30000;
    int max_retries = 2;
    int backoff_ms = 250;
};

// OpenAI-style chat completion client with a concurrency cap and
// retry-with-backoff. Implementation lives in provider.cpp.
std::unique_ptr<LLMProvider> make_remote_provider(const RemoteProviderConfig& config);

// Deterministic rule-based provider that plays every pipeline stage by
// parsing the structured sections of the default prompt templates.
// Declared in simulated_provider.hpp.
std::unique_ptr<LLMProvider> make_simulated_provider();

}  // namespace convgen
