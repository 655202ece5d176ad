#pragma once

#include "streamforge/gateway.hpp"
#include "streamforge/schema.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace streamforge::retrieval {

using Embedding = std::vector<double>;

/// Scales to unit L2 norm. A zero vector is returned unchanged.
void l2_normalize(Embedding& v);

/// Cosine similarity. Dimensions must agree (PreconditionError otherwise);
/// a zero vector on either side yields 0 and logs a warning.
double cosine(std::span<const double> a, std::span<const double> b);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    /// Same text gives the same L2-normalized vector for a given provider.
    [[nodiscard]] virtual Embedding embed(std::string_view text) const = 0;
    [[nodiscard]] virtual std::size_t dim() const = 0;
    /// Stable identity recorded in run manifests; thresholds are per-provider.
    [[nodiscard]] virtual std::string identity() const = 0;
};

/// Deterministic random projection of token counts. Tokens are lowercased
/// ASCII alphanumeric runs, single non-ASCII code points, and bigrams of
/// adjacent non-ASCII code points. Each token hashes to a seeded +-1 vector.
/// Text without tokens embeds to the all-equal unit vector.
class OfflineHashProvider final : public EmbeddingProvider {
public:
    explicit OfflineHashProvider(std::size_t dim = 256, std::uint64_t seed = 0x5eedULL);

    [[nodiscard]] Embedding embed(std::string_view text) const override;
    [[nodiscard]] std::size_t dim() const override { return dim_; }
    [[nodiscard]] std::string identity() const override;

    static std::vector<std::string> tokenize(std::string_view text);

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Embeddings endpoint client (POST {base}/embeddings, OpenAI-style body).
/// Results are memoized per text for the provider's lifetime.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    RemoteEmbeddingProvider(std::string api_base, std::string api_key, std::string model, std::size_t dim,
                            gateway::RetryPolicy retry);

    [[nodiscard]] Embedding embed(std::string_view text) const override;
    [[nodiscard]] std::size_t dim() const override { return dim_; }
    [[nodiscard]] std::string identity() const override { return "remote:" + model_; }

private:
    std::string api_base_;
    std::string api_key_;
    std::string model_;
    std::size_t dim_;
    gateway::RetryPolicy retry_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, Embedding> memo_;
};

/// Builds a provider from the `embedding` config section
/// ({"provider": "offline"|"remote", "dim": 256, "seed": ..., ...}).
std::unique_ptr<EmbeddingProvider> make_provider(const json& embedding_config);

// ---------------------------------------------------------------------------

struct PoolEntry {
    std::string entry_id;
    std::string text;
    Embedding vector;
    json payload = json::object();
};

struct ScoredEntry {
    std::size_t index = 0;
    std::string entry_id;
    double score = 0.0;
};

/// Exact-scan nearest-neighbour pool over unit vectors.
class RetrievalPool {
public:
    explicit RetrievalPool(std::size_t dim) : dim_(dim) {}

    /// Normalizes the vector. Throws on duplicate id, wrong dimension, or
    /// non-finite values.
    void add(PoolEntry entry);
    void add_text(std::string entry_id, std::string text, json payload, const EmbeddingProvider& provider);

    [[nodiscard]] const PoolEntry* find(std::string_view entry_id) const;
    [[nodiscard]] const PoolEntry& at(std::size_t index) const { return entries_.at(index); }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::span<const PoolEntry> entries() const noexcept { return entries_; }

    /// Descending cosine, ties by entry_id. k larger than the pool returns
    /// the whole pool; k == 0 is a PreconditionError.
    [[nodiscard]] std::vector<ScoredEntry> top_k(std::span<const double> query, std::size_t k) const;

    /// Snapshot: JSONL of {entry_id, text, payload, vector_b64 (little-endian float64)}.
    void save(const std::filesystem::path& path) const;
    static RetrievalPool load(const std::filesystem::path& path);

private:
    std::size_t dim_;
    std::vector<PoolEntry> entries_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

std::string encode_vector_b64(std::span<const double> v);
Embedding decode_vector_b64(std::string_view b64);

// ---------------------------------------------------------------------------

struct KbEntry {
    std::string entity;
    std::string attribute;
    std::string value;
    std::string source_ref;
    friend bool operator==(const KbEntry&, const KbEntry&) = default;
};

void to_json(json& j, const KbEntry& e);
void from_json(const json& j, KbEntry& e);

/// Snapshot of (entity, attribute, value) facts; (entity, attribute) unique.
class KnowledgeBase {
public:
    explicit KnowledgeBase(std::string kb_id = "kb") : kb_id_(std::move(kb_id)) {}

    /// File is JSONL of KbEntry; the id defaults to the file stem.
    static KnowledgeBase load(const std::filesystem::path& path, std::optional<std::string> kb_id = {});
    void add(KbEntry entry);

    [[nodiscard]] const std::string& id() const noexcept { return kb_id_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] std::span<const KbEntry> entries() const noexcept { return entries_; }

    /// Exact entity match with optional attribute filter, in insertion order.
    [[nodiscard]] std::vector<KbEntry> lookup(std::string_view entity,
                                              std::optional<std::string_view> attribute = {}) const;
    [[nodiscard]] std::vector<std::string> entities() const;
    [[nodiscard]] bool has_entity(std::string_view entity) const;

private:
    std::string kb_id_;
    std::vector<KbEntry> entries_;
};

} // namespace streamforge::retrieval
