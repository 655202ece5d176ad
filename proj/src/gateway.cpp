#include "streamforge/gateway.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <set>

namespace streamforge::gateway {

namespace detail {
extern const std::pair<std::string_view, std::string_view> kBuiltinTemplates[];
extern const std::size_t kBuiltinTemplateCount;
} // namespace detail

namespace {

constexpr std::pair<Purpose, std::string_view> kPurposeNames[] = {
    {Purpose::persona, "persona"},     {Purpose::blueprint, "blueprint"},   {Purpose::opening, "opening"},
    {Purpose::user_turn, "user_turn"}, {Purpose::agent_turn, "agent_turn"}, {Purpose::judge, "judge"},
    {Purpose::strategy, "strategy"},   {Purpose::correction, "correction"},
};

constexpr std::pair<Mode, std::string_view> kModeNames[] = {
    {Mode::live, "live"}, {Mode::record, "record"}, {Mode::replay, "replay"}, {Mode::mock, "mock"}};

std::uint64_t estimate_tokens(std::size_t bytes) { return (bytes + 3) / 4; }

// Scans `{{name}}` / `{{name|json}}` placeholders.
template <typename F>
void scan_placeholders(std::string_view text, F&& on_placeholder) {
    std::size_t pos = 0;
    while (true) {
        const auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            return;
        }
        const auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) {
            throw Error("unterminated placeholder in template");
        }
        std::string_view inner = text.substr(open + 2, close - open - 2);
        bool as_json = false;
        if (const auto bar = inner.find('|'); bar != std::string_view::npos) {
            if (inner.substr(bar + 1) != "json") {
                throw Error("unknown placeholder filter in '" + std::string(inner) + "'");
            }
            as_json = true;
            inner = inner.substr(0, bar);
        }
        on_placeholder(open, close + 2, std::string(inner), as_json);
        pos = close + 2;
    }
}

} // namespace

std::string_view to_string(Purpose p) {
    for (const auto& [value, name] : kPurposeNames) {
        if (value == p) {
            return name;
        }
    }
    return "unknown";
}

Purpose parse_purpose(std::string_view text) {
    for (const auto& [value, name] : kPurposeNames) {
        if (name == text) {
            return value;
        }
    }
    throw Error("unknown purpose '" + std::string(text) + "'");
}

std::string_view to_string(Mode m) {
    for (const auto& [value, name] : kModeNames) {
        if (value == m) {
            return name;
        }
    }
    return "unknown";
}

Mode parse_mode(std::string_view text) {
    for (const auto& [value, name] : kModeNames) {
        if (name == text) {
            return value;
        }
    }
    throw Error("unknown gateway mode '" + std::string(text) + "' (expected live|record|replay|mock)");
}

CacheMissError::CacheMissError(std::string fingerprint)
    : Error("replay cache miss for fingerprint " + fingerprint), fingerprint_(std::move(fingerprint)) {}

// ---------------------------------------------------------------------------

std::vector<std::string> PromptTemplate::slots() const {
    std::set<std::string> names;
    for (const std::string* text : {&system, &prompt, &mock}) {
        scan_placeholders(*text, [&](std::size_t, std::size_t, std::string name, bool) {
            if (!name.starts_with('_')) {
                names.insert(std::move(name));
            }
        });
    }
    return {names.begin(), names.end()};
}

PromptTemplate PromptTemplate::from_json(const json& j) {
    PromptTemplate t;
    t.id = j.at("id").get<std::string>();
    t.version = j.at("version").get<std::string>();
    t.purpose = parse_purpose(j.at("purpose").get<std::string>());
    t.system = j.value("system", std::string());
    t.prompt = j.at("prompt").get<std::string>();
    t.mock = j.at("mock").get<std::string>();
    // Surface malformed placeholders at load time rather than at first use.
    (void)t.slots();
    return t;
}

std::string render(std::string_view text, const Variables& vars) {
    std::string out;
    std::size_t last = 0;
    scan_placeholders(text, [&](std::size_t begin, std::size_t end, const std::string& name, bool as_json) {
        out.append(text.substr(last, begin - last));
        const auto it = vars.find(name);
        if (it == vars.end()) {
            throw Error("template variable '" + name + "' is not set");
        }
        out += as_json ? json(it->second).dump() : it->second;
        last = end;
    });
    out.append(text.substr(last));
    return out;
}

TemplateRegistry TemplateRegistry::builtin() {
    TemplateRegistry reg;
    for (std::size_t i = 0; i < detail::kBuiltinTemplateCount; ++i) {
        const auto& [name, content] = detail::kBuiltinTemplates[i];
        try {
            reg.add(PromptTemplate::from_json(json::parse(content)));
        } catch (const std::exception& e) {
            throw ConfigError("builtin template '" + std::string(name) + "' is invalid: " + e.what());
        }
    }
    return reg;
}

TemplateRegistry TemplateRegistry::with_overrides(const std::filesystem::path& dir) {
    TemplateRegistry reg = builtin();
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("template directory " + dir.string() + " does not exist");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            reg.add(PromptTemplate::from_json(json::parse(read_text_file(f))));
        } catch (const json::exception& e) {
            throw ConfigError("template " + f.string() + ": " + e.what());
        }
    }
    return reg;
}

void TemplateRegistry::add(PromptTemplate t) {
    auto id = t.id;
    templates_.insert_or_assign(std::move(id), std::move(t));
}

bool TemplateRegistry::has(std::string_view id) const { return templates_.find(id) != templates_.end(); }

const PromptTemplate& TemplateRegistry::get(std::string_view id) const {
    const auto it = templates_.find(id);
    if (it == templates_.end()) {
        throw ConfigError("unknown prompt template '" + std::string(id) + "'");
    }
    return it->second;
}

std::vector<std::string> TemplateRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : templates_) {
        out.push_back(id);
    }
    return out;
}

// ---------------------------------------------------------------------------

json post_json(const std::string& url, const json& body, const std::string& bearer_token,
               std::chrono::seconds timeout) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw TransportError("malformed endpoint url '" + url + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    httplib::Headers headers;
    if (!bearer_token.empty()) {
        headers.emplace("Authorization", "Bearer " + bearer_token);
    }
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError("request to " + url + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw TransportError("request to " + url + " returned HTTP " + std::to_string(res->status));
    }
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw TransportError("unparseable response from " + url + ": " + e.what());
    }
}

ChatCompletionsBackend::ChatCompletionsBackend(std::string api_base, std::string api_key, std::string model,
                                               std::chrono::seconds timeout)
    : api_base_(std::move(api_base)), api_key_(std::move(api_key)), model_(std::move(model)), timeout_(timeout) {
    while (!api_base_.empty() && api_base_.back() == '/') {
        api_base_.pop_back();
    }
}

std::unique_ptr<ChatCompletionsBackend> ChatCompletionsBackend::from_environment() {
    const auto env = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v ? std::string(v) : std::string();
    };
    const std::string base = env("STREAMFORGE_API_BASE");
    const std::string model = env("STREAMFORGE_MODEL");
    if (base.empty() || model.empty()) {
        throw ConfigError("live/record modes need STREAMFORGE_API_BASE and STREAMFORGE_MODEL");
    }
    return std::make_unique<ChatCompletionsBackend>(base, env("STREAMFORGE_API_KEY"), model);
}

std::string ChatCompletionsBackend::complete(const std::string& system, const std::string& prompt,
                                             const Decoding& decoding) {
    json messages = json::array();
    if (!system.empty()) {
        messages.push_back({{"role", "system"}, {"content", system}});
    }
    messages.push_back({{"role", "user"}, {"content", prompt}});
    const json body{{"model", model_},
                    {"messages", messages},
                    {"temperature", decoding.temperature},
                    {"max_tokens", decoding.max_tokens},
                    {"seed", decoding.seed}};
    const json res = post_json(api_base_ + "/chat/completions", body, api_key_, timeout_);
    try {
        return res.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed chat completion: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

std::shared_ptr<ReplayCache> ReplayCache::load(const std::filesystem::path& path) {
    auto cache = std::make_shared<ReplayCache>();
    if (!std::filesystem::exists(path)) {
        return cache;
    }
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        try {
            const json j = json::parse(line);
            cache->put(CacheEntry{j.at("fingerprint").get<std::string>(), j.value("template_id", ""),
                                  j.value("purpose", ""), j.at("response").get<std::string>()});
        } catch (const json::exception& e) {
            throw ParseError(path.string(), line_no, e.what());
        }
    }
    return cache;
}

void ReplayCache::save(const std::filesystem::path& path) const {
    std::string buffer;
    {
        std::lock_guard lock(mutex_);
        for (const auto& [fp, e] : entries_) {
            const json j{{"fingerprint", e.fingerprint},
                         {"template_id", e.template_id},
                         {"purpose", e.purpose},
                         {"response", e.response}};
            buffer += j.dump();
            buffer.push_back('\n');
        }
    }
    write_text_file(path, buffer);
}

std::optional<std::string> ReplayCache::get(const std::string& fingerprint) const {
    std::lock_guard lock(mutex_);
    const auto it = entries_.find(fingerprint);
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second.response;
}

void ReplayCache::put(CacheEntry entry) {
    std::lock_guard lock(mutex_);
    auto key = entry.fingerprint;
    entries_.insert_or_assign(std::move(key), std::move(entry));
}

bool ReplayCache::erase(const std::string& fingerprint) {
    std::lock_guard lock(mutex_);
    return entries_.erase(fingerprint) > 0;
}

std::size_t ReplayCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

// ---------------------------------------------------------------------------

void to_json(json& j, const GatewayStats& s) {
    j = json{{"requests", s.requests},
             {"backend_calls", s.backend_calls},
             {"cache_hits", s.cache_hits},
             {"mock_fills", s.mock_fills},
             {"tokens_used", s.tokens_used}};
}

Gateway::Gateway(GatewayConfig config, TemplateRegistry templates, std::shared_ptr<Backend> backend,
                 std::shared_ptr<ReplayCache> cache)
    : config_(std::move(config)),
      templates_(std::move(templates)),
      backend_(std::move(backend)),
      cache_(cache ? std::move(cache) : std::make_shared<ReplayCache>()),
      in_flight_(std::clamp(config_.max_concurrency, 1, 1024)) {
    if ((config_.mode == Mode::live || config_.mode == Mode::record) && !backend_) {
        throw ConfigError(std::string("gateway mode ") + std::string(to_string(config_.mode)) +
                          " requires a backend");
    }
    if (backend_ && (config_.mode == Mode::live || config_.mode == Mode::record)) {
        config_.backend_id = backend_->identity();
    }
}

std::string Gateway::fingerprint(const GenerationRequest& request) const {
    const PromptTemplate& tpl = templates_.get(request.template_id);
    const json canonical{{"template_id", tpl.id},
                         {"template_version", tpl.version},
                         {"variables", request.variables},
                         {"temperature", request.decoding.temperature},
                         {"max_tokens", request.decoding.max_tokens},
                         {"seed", request.decoding.seed},
                         {"backend", config_.backend_id}};
    return sha256_hex(canonical.dump());
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(state_mutex_);
    return stats_;
}

std::shared_ptr<std::mutex> Gateway::fingerprint_lock(const std::string& fingerprint) {
    std::lock_guard lock(state_mutex_);
    auto& slot = fingerprint_locks_[fingerprint];
    if (!slot) {
        slot = std::make_shared<std::mutex>();
    }
    return slot;
}

std::string Gateway::mock_fill(const PromptTemplate& tpl, const GenerationRequest& request,
                               const std::string& fingerprint) {
    Variables vars = request.variables;
    vars["_fingerprint"] = fingerprint;
    vars["_fp8"] = fingerprint.substr(0, 8);
    {
        std::lock_guard lock(state_mutex_);
        ++stats_.mock_fills;
    }
    return render(tpl.mock, vars);
}

std::string Gateway::call_backend(const PromptTemplate& tpl, const GenerationRequest& request) {
    const std::string system = render(tpl.system, request.variables);
    const std::string prompt = render(tpl.prompt, request.variables);
    {
        std::lock_guard lock(state_mutex_);
        if (config_.token_budget > 0 && stats_.tokens_used >= config_.token_budget) {
            throw BudgetExceededError("token budget of " + std::to_string(config_.token_budget) + " exhausted");
        }
    }
    in_flight_.acquire();
    std::string text;
    try {
        text = with_retries(config_.retry, [&] { return backend_->complete(system, prompt, request.decoding); });
    } catch (...) {
        in_flight_.release();
        throw;
    }
    in_flight_.release();
    std::lock_guard lock(state_mutex_);
    ++stats_.backend_calls;
    stats_.tokens_used += estimate_tokens(system.size() + prompt.size() + text.size());
    return text;
}

std::string Gateway::generate(const GenerationRequest& request) {
    const PromptTemplate& tpl = templates_.get(request.template_id);
    if (tpl.purpose != request.purpose) {
        throw Error("request purpose " + std::string(to_string(request.purpose)) + " does not match template '" +
                    tpl.id + "' (" + std::string(to_string(tpl.purpose)) + ")");
    }
    for (const auto& slot : tpl.slots()) {
        if (!request.variables.contains(slot)) {
            throw Error("template '" + tpl.id + "' needs variable '" + slot + "'");
        }
    }
    const std::string fp = fingerprint(request);
    {
        std::lock_guard lock(state_mutex_);
        ++stats_.requests;
    }

    switch (config_.mode) {
    case Mode::mock:
        return mock_fill(tpl, request, fp);
    case Mode::replay: {
        if (auto hit = cache_->get(fp)) {
            std::lock_guard lock(state_mutex_);
            ++stats_.cache_hits;
            return *hit;
        }
        if (config_.replay_fallback_mock) {
            return mock_fill(tpl, request, fp);
        }
        throw CacheMissError(fp);
    }
    case Mode::live:
        return call_backend(tpl, request);
    case Mode::record: {
        const auto lock_ptr = fingerprint_lock(fp);
        std::lock_guard fp_lock(*lock_ptr);
        if (auto hit = cache_->get(fp)) {
            std::lock_guard lock(state_mutex_);
            ++stats_.cache_hits;
            return *hit;
        }
        std::string text = call_backend(tpl, request);
        cache_->put(CacheEntry{fp, tpl.id, std::string(to_string(tpl.purpose)), text});
        return text;
    }
    }
    throw Error("unreachable gateway mode");
}

json parse_model_json(std::string_view text) {
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        throw Error("model output contains no JSON object");
    }
    try {
        return json::parse(text.substr(open, close - open + 1));
    } catch (const json::parse_error& e) {
        throw Error(std::string("model output is not valid JSON: ") + e.what());
    }
}

} // namespace streamforge::gateway
