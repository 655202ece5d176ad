#pragma once

#include "streamforge/common.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

namespace streamforge::gateway {

using json = nlohmann::json;
using Variables = std::map<std::string, std::string>;

enum class Purpose { persona, blueprint, opening, user_turn, agent_turn, judge, strategy, correction };
enum class Mode { live, record, replay, mock };

std::string_view to_string(Purpose p);
Purpose parse_purpose(std::string_view text);
std::string_view to_string(Mode m);
Mode parse_mode(std::string_view text);

class TransportError : public Error {
public:
    using Error::Error;
};

class CacheMissError : public Error {
public:
    explicit CacheMissError(std::string fingerprint);
    [[nodiscard]] const std::string& fingerprint() const noexcept { return fingerprint_; }

private:
    std::string fingerprint_;
};

class BudgetExceededError : public Error {
public:
    using Error::Error;
};

struct Decoding {
    double temperature = 0.7;
    int max_tokens = 512;
    std::uint64_t seed = 0;
};

struct GenerationRequest {
    std::string template_id;
    Variables variables;
    Decoding decoding;
    Purpose purpose = Purpose::persona;
};

// ---------------------------------------------------------------------------
// Prompt templates

/// A versioned prompt. `prompt` and `system` are sent to live backends; `mock`
/// is the deterministic fill used in mock mode. Placeholders are `{{name}}`
/// (inserted verbatim) or `{{name|json}}` (inserted as a JSON string literal).
struct PromptTemplate {
    std::string id;
    std::string version;
    Purpose purpose = Purpose::persona;
    std::string system;
    std::string prompt;
    std::string mock;

    /// Variable names referenced by system, prompt, or mock text.
    [[nodiscard]] std::vector<std::string> slots() const;
    static PromptTemplate from_json(const json& j);
};

/// Replaces placeholders. Names starting with '_' are reserved for values the
/// gateway injects. Throws Error on a placeholder with no variable.
std::string render(std::string_view text, const Variables& vars);

class TemplateRegistry {
public:
    /// Templates compiled into the library from the templates/ directory.
    static TemplateRegistry builtin();
    /// Builtins overlaid with every *.json template found in `dir`.
    static TemplateRegistry with_overrides(const std::filesystem::path& dir);

    void add(PromptTemplate t);
    [[nodiscard]] bool has(std::string_view id) const;
    [[nodiscard]] const PromptTemplate& get(std::string_view id) const;
    [[nodiscard]] std::vector<std::string> ids() const;

private:
    std::map<std::string, PromptTemplate, std::less<>> templates_;
};

// ---------------------------------------------------------------------------
// Retries

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{200};
};

/// Runs `call` until it succeeds, retrying TransportError with exponential
/// backoff. Rethrows the final TransportError once retries are exhausted.
template <typename F>
auto with_retries(const RetryPolicy& policy, F&& call) -> decltype(call()) {
    for (int attempt = 0;; ++attempt) {
        try {
            return call();
        } catch (const TransportError&) {
            if (attempt >= policy.max_retries) {
                throw;
            }
            std::this_thread::sleep_for(policy.base_delay * (1LL << attempt));
        }
    }
}

/// POSTs a JSON body to `url` and returns the parsed JSON response. Network
/// failures and non-2xx statuses raise TransportError.
json post_json(const std::string& url, const json& body, const std::string& bearer_token,
               std::chrono::seconds timeout);

/// Parses a JSON object out of model output, tolerating code fences and
/// surrounding prose. Throws Error when no object parses.
json parse_model_json(std::string_view text);

// ---------------------------------------------------------------------------
// Backends

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const std::string& system, const std::string& prompt,
                                 const Decoding& decoding) = 0;
    [[nodiscard]] virtual std::string identity() const = 0;
};

/// Chat-completions client. Reads STREAMFORGE_API_BASE, STREAMFORGE_API_KEY
/// and STREAMFORGE_MODEL from the environment.
class ChatCompletionsBackend final : public Backend {
public:
    ChatCompletionsBackend(std::string api_base, std::string api_key, std::string model,
                           std::chrono::seconds timeout = std::chrono::seconds(60));
    static std::unique_ptr<ChatCompletionsBackend> from_environment();

    std::string complete(const std::string& system, const std::string& prompt, const Decoding& decoding) override;
    [[nodiscard]] std::string identity() const override { return "chat-completions:" + model_; }

private:
    std::string api_base_;
    std::string api_key_;
    std::string model_;
    std::chrono::seconds timeout_;
};

// ---------------------------------------------------------------------------
// Record/replay cache

struct CacheEntry {
    std::string fingerprint;
    std::string template_id;
    std::string purpose;
    std::string response;
};

class ReplayCache {
public:
    ReplayCache() = default;
    static std::shared_ptr<ReplayCache> load(const std::filesystem::path& path);
    /// Entries are written sorted by fingerprint so identical caches are byte-identical.
    void save(const std::filesystem::path& path) const;

    [[nodiscard]] std::optional<std::string> get(const std::string& fingerprint) const;
    void put(CacheEntry entry);
    bool erase(const std::string& fingerprint);
    [[nodiscard]] std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, CacheEntry> entries_;
};

// ---------------------------------------------------------------------------

struct GatewayConfig {
    Mode mode = Mode::mock;
    RetryPolicy retry;
    std::uint64_t token_budget = 0; // 0 = unlimited
    int max_concurrency = 4;
    bool replay_fallback_mock = false;
    std::string backend_id = "mock"; // recorded in fingerprints and manifests
};

struct GatewayStats {
    std::uint64_t requests = 0;
    std::uint64_t backend_calls = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t mock_fills = 0;
    std::uint64_t tokens_used = 0;
};

void to_json(json& j, const GatewayStats& s);

class Gateway {
public:
    Gateway(GatewayConfig config, TemplateRegistry templates, std::shared_ptr<Backend> backend = nullptr,
            std::shared_ptr<ReplayCache> cache = nullptr);

    /// Executes one request under the configured mode.
    std::string generate(const GenerationRequest& request);
    /// SHA-256 over template id and version, resolved variables, decoding
    /// parameters, and backend id.
    [[nodiscard]] std::string fingerprint(const GenerationRequest& request) const;

    [[nodiscard]] const GatewayConfig& config() const noexcept { return config_; }
    [[nodiscard]] const TemplateRegistry& templates() const noexcept { return templates_; }
    [[nodiscard]] std::shared_ptr<ReplayCache> cache() const noexcept { return cache_; }
    [[nodiscard]] GatewayStats stats() const;

private:
    std::string mock_fill(const PromptTemplate& tpl, const GenerationRequest& request,
                          const std::string& fingerprint);
    std::string call_backend(const PromptTemplate& tpl, const GenerationRequest& request);
    std::shared_ptr<std::mutex> fingerprint_lock(const std::string& fingerprint);

    GatewayConfig config_;
    TemplateRegistry templates_;
    std::shared_ptr<Backend> backend_;
    std::shared_ptr<ReplayCache> cache_;
    std::counting_semaphore<1024> in_flight_;

    mutable std::mutex state_mutex_;
    std::map<std::string, std::shared_ptr<std::mutex>> fingerprint_locks_;
    GatewayStats stats_;
};

} // namespace streamforge::gateway
