#include "convgen/provider.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "convgen/errors.hpp"
#include "convgen/rng.hpp"

namespace convgen {

namespace {

std::string hash_hex(const std::string& prompt) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(prompt)));
    return buf;
}

}  // namespace

ProviderScript ProviderScript::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open provider script: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed provider script: ") + e.what());
    }
    ProviderScript script;
    std::string mode = j.value("mode", "ordinal");
    if (mode == "ordinal") {
        script.mode = Mode::ordinal;
        for (const auto& r : j.at("replies")) script.replies.push_back(r.get<std::string>());
    } else if (mode == "prompt_hash") {
        script.mode = Mode::prompt_hash;
        for (const auto& [k, v] : j.at("replies").items())
            script.by_hash[k] = v.get<std::string>();
    } else {
        throw ParseError("provider script mode must be ordinal or prompt_hash, got " + mode);
    }
    return script;
}

ScriptedProvider::ScriptedProvider(ProviderScript script) : script_(std::move(script)) {}

ScriptedProvider::ScriptedProvider(std::vector<std::string> ordinal_replies) {
    script_.mode = ProviderScript::Mode::ordinal;
    script_.replies = std::move(ordinal_replies);
}

std::string ScriptedProvider::complete(const std::string& prompt, double /*temperature*/,
                                       std::optional<std::uint64_t> /*seed*/) {
    std::lock_guard<std::mutex> lock(mu_);
    ++calls_;
    if (script_.mode == ProviderScript::Mode::ordinal) {
        if (next_ >= script_.replies.size())
            throw ProviderError("scripted provider exhausted after " +
                                std::to_string(script_.replies.size()) + " replies");
        return script_.replies[next_++];
    }
    auto it = script_.by_hash.find(hash_hex(prompt));
    if (it == script_.by_hash.end())
        throw ProviderError("scripted provider has no reply for prompt hash " +
                            hash_hex(prompt));
    return it->second;
}

namespace {

// Counting semaphore bounding in-flight requests.
class RequestGate {
public:
    explicit RequestGate(int limit) : limit_(limit > 0 ? limit : 1) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < limit_; });
        ++in_flight_;
    }

    void release() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            --in_flight_;
        }
        cv_.notify_one();
    }

private:
    int limit_;
    int in_flight_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
};

class RemoteProvider : public LLMProvider {
public:
    explicit RemoteProvider(RemoteProviderConfig config)
        : config_(std::move(config)), gate_(config_.max_concurrent) {
        split_endpoint();
        if (!config_.api_key_env.empty()) {
            const char* key = std::getenv(config_.api_key_env.c_str());
            if (key) api_key_ = key;
        }
    }

    std::string complete(const std::string& prompt, double temperature,
                         std::optional<std::uint64_t> seed) override {
        nlohmann::json body;
        body["model"] = config_.model;
        body["messages"] = nlohmann::json::array(
            {nlohmann::json{{"role", "user"}, {"content", prompt}}});
        body["temperature"] = temperature;
        if (seed) body["seed"] = *seed;
        const std::string payload = body.dump();

        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
            gate_.acquire();
            auto result = post(payload);
            gate_.release();
            if (result.first) return std::move(result.second);
            last_error = std::move(result.second);
        }
        throw ProviderError("remote provider failed after " +
                            std::to_string(config_.max_retries + 1) + " attempts: " +
                            last_error);
    }

private:
    void split_endpoint() {
        // http://host:port/path -> (scheme://host:port, /path)
        auto scheme_end = config_.endpoint.find("://");
        if (scheme_end == std::string::npos)
            throw ConfigError("remote endpoint must include a scheme: " + config_.endpoint);
        auto path_start = config_.endpoint.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            host_ = config_.endpoint;
            path_ = "/";
        } else {
            host_ = config_.endpoint.substr(0, path_start);
            path_ = config_.endpoint.substr(path_start);
        }
    }

    std::pair<bool, std::string> post(const std::string& payload) {
        httplib::Client client(host_);
        client.set_connection_timeout(0, config_.timeout_ms * 1000LL);
        client.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) return {false, "transport error: " + httplib::to_string(res.error())};
        if (res->status != 200)
            return {false, "HTTP " + std::to_string(res->status) + ": " + res->body};
        try {
            auto j = nlohmann::json::parse(res->body);
            if (j.contains("choices") && !j["choices"].empty()) {
                const auto& choice = j["choices"][0];
                if (choice.contains("message"))
                    return {true, choice["message"].value("content", "")};
                if (choice.contains("text")) return {true, choice["text"].get<std::string>()};
            }
            if (j.contains("text")) return {true, j["text"].get<std::string>()};
            return {false, "reply has no choices[0].message.content"};
        } catch (const nlohmann::json::exception& e) {
            return {false, std::string("malformed reply: ") + e.what()};
        }
    }

    RemoteProviderConfig config_;
    RequestGate gate_;
    std::string host_;
    std::string path_;
    std::string api_key_;
};

}  // namespace

std::unique_ptr<LLMProvider> make_remote_provider(const RemoteProviderConfig& config) {
    return std::make_unique<RemoteProvider>(config);
}

}  // namespace convgen
