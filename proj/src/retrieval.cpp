#include "streamforge/retrieval.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <map>

namespace streamforge::retrieval {

static_assert(std::endian::native == std::endian::little, "vector snapshots assume a little-endian host");

void l2_normalize(Embedding& v) {
    double sq = 0.0;
    for (double x : v) {
        sq += x * x;
    }
    // Already unit length: leave the bits alone so snapshots round-trip exactly.
    if (sq == 0.0 || std::abs(sq - 1.0) < 1e-12) {
        return;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) {
        x *= inv;
    }
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw PreconditionError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        spdlog::warn("cosine: zero vector, similarity defined as 0");
        return 0.0;
    }
    const double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

// ---------------------------------------------------------------------------

OfflineHashProvider::OfflineHashProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) {
        throw ConfigError("embedding dim must be positive");
    }
}

std::string OfflineHashProvider::identity() const {
    return "offline-hash:dim=" + std::to_string(dim_) + ":seed=" + std::to_string(seed_);
}

std::vector<std::string> OfflineHashProvider::tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string word;
    std::string prev_cp;
    const auto flush_word = [&] {
        if (!word.empty()) {
            tokens.push_back(std::move(word));
            word.clear();
        }
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (c < 0x80) {
            prev_cp.clear();
            if (std::isalnum(c)) {
                word.push_back(static_cast<char>(std::tolower(c)));
            } else {
                flush_word();
            }
            ++i;
            continue;
        }
        flush_word();
        std::size_t len = 1;
        if ((c & 0xE0) == 0xC0) {
            len = 2;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
        }
        len = std::min(len, text.size() - i);
        std::string cp(text.substr(i, len));
        // Full-width punctuation and symbols in U+3000..U+303F / U+FF00..U+FF0F
        // carry no content.
        const bool punct = (len == 3 && c == 0xE3 && static_cast<unsigned char>(text[i + 1]) == 0x80) ||
                           (len == 3 && c == 0xEF && static_cast<unsigned char>(text[i + 1]) == 0xBC &&
                            static_cast<unsigned char>(text[i + 2]) <= 0x8F);
        if (punct) {
            prev_cp.clear();
        } else {
            if (!prev_cp.empty()) {
                tokens.push_back(prev_cp + cp);
            }
            tokens.push_back(cp);
            prev_cp = std::move(cp);
        }
        i += len;
    }
    flush_word();
    return tokens;
}

Embedding OfflineHashProvider::embed(std::string_view text) const {
    std::map<std::string, int> counts;
    for (auto& t : tokenize(text)) {
        ++counts[std::move(t)];
    }
    Embedding v(dim_, 0.0);
    for (const auto& [token, count] : counts) {
        std::uint64_t state = fnv1a64(token) ^ seed_;
        std::uint64_t bits = 0;
        for (std::size_t d = 0; d < dim_; ++d) {
            if (d % 64 == 0) {
                bits = splitmix64(state);
            }
            v[d] += ((bits >> (d % 64)) & 1U) ? count : -count;
        }
    }
    const bool all_zero = std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
    if (all_zero) {
        std::fill(v.begin(), v.end(), 1.0);
    }
    l2_normalize(v);
    return v;
}

// ---------------------------------------------------------------------------

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::string api_base, std::string api_key, std::string model,
                                                 std::size_t dim, gateway::RetryPolicy retry)
    : api_base_(std::move(api_base)), api_key_(std::move(api_key)), model_(std::move(model)), dim_(dim),
      retry_(retry) {
    while (!api_base_.empty() && api_base_.back() == '/') {
        api_base_.pop_back();
    }
}

Embedding RemoteEmbeddingProvider::embed(std::string_view text) const {
    const std::string key(text);
    {
        std::lock_guard lock(mutex_);
        if (auto it = memo_.find(key); it != memo_.end()) {
            return it->second;
        }
    }
    const json body{{"model", model_}, {"input", key}};
    const json res = gateway::with_retries(
        retry_, [&] { return gateway::post_json(api_base_ + "/embeddings", body, api_key_, std::chrono::seconds(30)); });
    Embedding v;
    try {
        v = res.at("data").at(0).at("embedding").get<Embedding>();
    } catch (const json::exception& e) {
        throw gateway::TransportError(std::string("malformed embedding response: ") + e.what());
    }
    if (v.size() != dim_) {
        throw ConfigError("remote embedding has dim " + std::to_string(v.size()) + ", configured " +
                          std::to_string(dim_));
    }
    l2_normalize(v);
    std::lock_guard lock(mutex_);
    memo_.emplace(key, v);
    return v;
}

std::unique_ptr<EmbeddingProvider> make_provider(const json& cfg) {
    const std::string kind = cfg.value("provider", std::string("offline"));
    const auto dim = cfg.value("dim", std::size_t{256});
    if (kind == "offline") {
        return std::make_unique<OfflineHashProvider>(dim, cfg.value("seed", std::uint64_t{0x5eed}));
    }
    if (kind == "remote") {
        const char* base = std::getenv("STREAMFORGE_EMBED_BASE");
        const char* key = std::getenv("STREAMFORGE_API_KEY");
        const std::string model = cfg.value("model", std::string());
        if (base == nullptr || model.empty()) {
            throw ConfigError("remote embeddings need STREAMFORGE_EMBED_BASE and embedding.model");
        }
        return std::make_unique<RemoteEmbeddingProvider>(base, key ? key : "", model, dim, gateway::RetryPolicy{});
    }
    throw ConfigError("unknown embedding provider '" + kind + "'");
}

// ---------------------------------------------------------------------------

void RetrievalPool::add(PoolEntry entry) {
    if (entry.vector.size() != dim_) {
        throw PreconditionError("pool entry '" + entry.entry_id + "' has dim " + std::to_string(entry.vector.size()) +
                                ", pool dim " + std::to_string(dim_));
    }
    if (!std::all_of(entry.vector.begin(), entry.vector.end(), [](double x) { return std::isfinite(x); })) {
        throw PreconditionError("pool entry '" + entry.entry_id + "' has non-finite values");
    }
    if (by_id_.contains(entry.entry_id)) {
        throw PreconditionError("duplicate pool entry id '" + entry.entry_id + "'");
    }
    l2_normalize(entry.vector);
    by_id_.emplace(entry.entry_id, entries_.size());
    entries_.push_back(std::move(entry));
}

void RetrievalPool::add_text(std::string entry_id, std::string text, json payload,
                             const EmbeddingProvider& provider) {
    Embedding v = provider.embed(text);
    add(PoolEntry{std::move(entry_id), std::move(text), std::move(v), std::move(payload)});
}

const PoolEntry* RetrievalPool::find(std::string_view entry_id) const {
    const auto it = by_id_.find(std::string(entry_id));
    return it == by_id_.end() ? nullptr : &entries_[it->second];
}

std::vector<ScoredEntry> RetrievalPool::top_k(std::span<const double> query, std::size_t k) const {
    if (k == 0) {
        throw PreconditionError("top_k requires k >= 1");
    }
    if (query.size() != dim_) {
        throw PreconditionError("query dim " + std::to_string(query.size()) + " != pool dim " + std::to_string(dim_));
    }
    std::vector<ScoredEntry> scored;
    scored.reserve(entries_.size());
    double qn = 0.0;
    for (double x : query) {
        qn += x * x;
    }
    qn = std::sqrt(qn);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        double score = 0.0;
        if (qn > 0.0) {
            const auto& v = entries_[i].vector;
            double dot = 0.0;
            for (std::size_t d = 0; d < dim_; ++d) {
                dot += query[d] * v[d];
            }
            score = std::clamp(dot / qn, -1.0, 1.0);
        }
        scored.push_back({i, entries_[i].entry_id, score});
    }
    const auto better = [](const ScoredEntry& a, const ScoredEntry& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.entry_id < b.entry_id;
    };
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
    scored.resize(n);
    return scored;
}

std::string encode_vector_b64(std::span<const double> v) {
    const std::size_t bytes = v.size() * sizeof(double);
    std::string out(4 * ((bytes + 2) / 3), '\0');
    const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                        reinterpret_cast<const unsigned char*>(v.data()), static_cast<int>(bytes));
    out.resize(static_cast<std::size_t>(written));
    return out;
}

Embedding decode_vector_b64(std::string_view b64) {
    if (b64.size() % 4 != 0) {
        throw Error("malformed base64 vector");
    }
    std::string raw(3 * (b64.size() / 4), '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(raw.data()),
                                  reinterpret_cast<const unsigned char*>(b64.data()), static_cast<int>(b64.size()));
    if (n < 0) {
        throw Error("malformed base64 vector");
    }
    // EVP_DecodeBlock does not account for '=' padding.
    std::size_t len = static_cast<std::size_t>(n);
    for (std::size_t i = b64.size(); i > 0 && b64[i - 1] == '='; --i) {
        --len;
    }
    if (len % sizeof(double) != 0) {
        throw Error("base64 vector length is not a multiple of 8 bytes");
    }
    Embedding v(len / sizeof(double));
    std::memcpy(v.data(), raw.data(), len);
    return v;
}

void RetrievalPool::save(const std::filesystem::path& path) const {
    std::vector<json> rows;
    rows.reserve(entries_.size() + 1);
    rows.push_back({{"dim", dim_}, {"kind", "retrieval_pool"}});
    for (const auto& e : entries_) {
        rows.push_back({{"entry_id", e.entry_id},
                        {"text", e.text},
                        {"payload", e.payload},
                        {"vector_b64", encode_vector_b64(e.vector)}});
    }
    write_jsonl_raw(path, rows);
}

RetrievalPool RetrievalPool::load(const std::filesystem::path& path) {
    std::optional<RetrievalPool> pool;
    for_each_jsonl(path, [&](const json& j, std::size_t line) {
        try {
            if (!pool) {
                if (j.value("kind", "") != "retrieval_pool") {
                    throw Error("missing pool header");
                }
                pool.emplace(j.at("dim").get<std::size_t>());
                return;
            }
            pool->add(PoolEntry{j.at("entry_id").get<std::string>(), j.value("text", ""),
                                decode_vector_b64(j.at("vector_b64").get<std::string>()),
                                j.value("payload", json::object())});
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(path.string(), line, e.what());
        }
    });
    if (!pool) {
        throw ParseError(path.string(), 0, "empty pool snapshot");
    }
    return std::move(*pool);
}

// ---------------------------------------------------------------------------

void to_json(json& j, const KbEntry& e) {
    j = json{{"entity", e.entity}, {"attribute", e.attribute}, {"value", e.value}, {"source_ref", e.source_ref}};
}

void from_json(const json& j, KbEntry& e) {
    e.entity = j.at("entity").get<std::string>();
    e.attribute = j.at("attribute").get<std::string>();
    e.value = j.at("value").get<std::string>();
    e.source_ref = j.value("source_ref", std::string());
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& path, std::optional<std::string> kb_id) {
    KnowledgeBase kb(kb_id.value_or(path.stem().string()));
    for (auto& e : read_jsonl<KbEntry>(path)) {
        kb.add(std::move(e));
    }
    return kb;
}

void KnowledgeBase::add(KbEntry entry) {
    for (const auto& e : entries_) {
        if (e.entity == entry.entity && e.attribute == entry.attribute) {
            throw PreconditionError("duplicate knowledge-base fact (" + entry.entity + ", " + entry.attribute + ")");
        }
    }
    entries_.push_back(std::move(entry));
}

std::vector<KbEntry> KnowledgeBase::lookup(std::string_view entity, std::optional<std::string_view> attribute) const {
    std::vector<KbEntry> out;
    for (const auto& e : entries_) {
        if (e.entity == entity && (!attribute || e.attribute == *attribute)) {
            out.push_back(e);
        }
    }
    return out;
}

std::vector<std::string> KnowledgeBase::entities() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
        if (std::find(out.begin(), out.end(), e.entity) == out.end()) {
            out.push_back(e.entity);
        }
    }
    return out;
}

bool KnowledgeBase::has_entity(std::string_view entity) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const KbEntry& e) { return e.entity == entity; });
}

} // namespace streamforge::retrieval
