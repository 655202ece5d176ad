#pragma once

#include "streamforge/gateway.hpp"
#include "streamforge/retrieval.hpp"
#include "streamforge/schema.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

namespace streamforge::ingest {

// ---------------------------------------------------------------------------
// Sources

enum class SourceKind { web_page, live_stream, short_video };

std::string_view to_string(SourceKind k);
SourceKind parse_source_kind(std::string_view text);

/// One exported source archive: a directory holding meta.json plus
/// transcript.txt / comments.tsv / profile.json payloads.
struct SourceItem {
    std::string source_id;
    SourceKind kind = SourceKind::web_page;
    Domain domain;
    std::string title;
    std::vector<std::string> category_tags;
    std::optional<std::string> certification;
    std::optional<std::int64_t> viewer_count;
    std::set<std::string> flags; // advertising_only, entertainment_only
    std::optional<double> wer;   // source metadata, passed through untouched
    std::string speaker = "host";
    std::filesystem::path payload_path;
    std::set<std::string> payload_files; // names present under payload_path

    [[nodiscard]] bool has_transcript() const;
    [[nodiscard]] bool has_comments() const;
    [[nodiscard]] bool has_profile() const;

    /// Reads `dir/meta.json`; the directory becomes payload_path.
    static SourceItem load(const std::filesystem::path& dir);
};

struct FilterConfig {
    std::vector<std::string> keywords;
    std::vector<std::string> category_tags;
    std::vector<std::string> certifications;
    std::int64_t min_viewers = 1000; // viewer_count must exceed this when present
};

struct SourceRejection {
    std::string source_id;
    std::string reason; // "domain match" | "interaction threshold" | "low-signal" | "missing payload"
};

struct FilterResult {
    std::vector<SourceItem> retained;
    std::vector<SourceRejection> rejected;
};

FilterResult filter_sources(std::span<const SourceItem> items, const FilterConfig& criteria);

// ---------------------------------------------------------------------------
// Comments

struct RawComment {
    std::optional<double> timestamp; // absent for static sources
    std::string author;
    std::string text;
};

struct QuestionSignal {
    std::string text;
    std::optional<double> timestamp;
    std::string author_hash;
    friend bool operator==(const QuestionSignal&, const QuestionSignal&) = default;
};

struct DenoiseConfig {
    std::size_t min_length = 4; // code points
    std::vector<std::string> spam_patterns = {R"(^(.)\1+$)", R"(^[0-9\s[:punct:]]+$)", R"(https?://)"};
    double dedup_threshold = 0.95;
};

/// Character-trigram Jaccard similarity of the normalized texts.
double near_duplicate_similarity(std::string_view a, std::string_view b);

/// Sorts by timestamp, drops short or spam entries, and keeps the first of
/// every exact or near-duplicate group.
std::vector<QuestionSignal> denoise_comments(std::span<const RawComment> raw, const DenoiseConfig& cfg);

/// Parses `secs\tauthor\ttext` lines; an empty secs field means no timestamp.
std::vector<RawComment> read_comments_tsv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Transcripts and lexicons

enum class LexiconScope { automotive_vocabulary, address_entries, custom };

struct DomainLexicon {
    std::map<std::string, std::string> entries; // surface -> canonical
    LexiconScope scope = LexiconScope::custom;

    /// Two-column TSV `surface\tcanonical`.
    static DomainLexicon load_tsv(const std::filesystem::path& path, LexiconScope scope = LexiconScope::custom);
};

struct TranscriptEdit {
    std::size_t offset = 0; // byte offset in the input text
    std::string before;
    std::string after;
    friend bool operator==(const TranscriptEdit&, const TranscriptEdit&) = default;
};

struct NormalizedText {
    std::string text;
    std::vector<TranscriptEdit> edits;
};

/// Merged, validated set of lexicons. Construction throws ConfigError on an
/// empty canonical form, a surface form mapped to two different canonicals,
/// or a cycle of rewrites.
class LexiconSet {
public:
    LexiconSet() = default;
    explicit LexiconSet(std::span<const DomainLexicon> lexicons);

    /// Left-to-right longest-match replacement of surface forms.
    [[nodiscard]] NormalizedText normalize(std::string_view text) const;
    [[nodiscard]] std::size_t size() const noexcept { return rewrites_.size(); }

private:
    std::map<std::string, std::string, std::less<>> rewrites_;
    std::size_t max_surface_len_ = 0;
};

NormalizedText normalize_transcript(std::string_view text, std::span<const DomainLexicon> lexicons);

struct ResponseSignal {
    std::string text;
    double timestamp = 0.0;
    std::string speaker = "host"; // host | staff
    friend bool operator==(const ResponseSignal&, const ResponseSignal&) = default;
};

/// Parses `[secs]\ttext` lines.
std::vector<ResponseSignal> read_transcript(const std::filesystem::path& path, const std::string& speaker);

// ---------------------------------------------------------------------------
// Entities

struct EntityConfig {
    /// Model-name shape, e.g. Q5L or X3; matches absent from the knowledge base
    /// are reported as unknown entities.
    std::string model_pattern = R"(\b[A-Z][A-Za-z]*[0-9][A-Za-z0-9]*\b)";
    /// Knowledge-base attribute names per typed entity kind.
    std::map<std::string, std::vector<std::string>> attribute_types = {
        {"price", {"price", "msrp", "avg_price"}},
        {"date", {"date", "release_date", "production_date"}},
        {"location", {"location", "address", "city", "area"}},
        {"config", {"drivetrain", "configuration", "trim", "power_type"}},
    };
};

struct EntityMention {
    std::string type; // name | unknown_name | price | date | location | config
    std::string value;
    std::size_t offset = 0;
};

std::vector<EntityMention> extract_entities(std::string_view text, const retrieval::KnowledgeBase& kb,
                                            const EntityConfig& cfg = {});

struct ConsistencyResult {
    bool consistent = true;
    std::vector<std::string> mismatches;
};

/// False iff the response names an entity unknown to the knowledge base,
/// states a typed value that contradicts the knowledge base for the entities
/// in play, or quotes a price above a ceiling stated in the question.
ConsistencyResult check_entity_consistency(std::string_view question, std::string_view response,
                                           const retrieval::KnowledgeBase& kb, const EntityConfig& cfg = {});

/// Parses "300k", "30万", "$25,000", "¥188000" into a number.
std::optional<double> parse_price(std::string_view text);

// ---------------------------------------------------------------------------
// QA alignment

struct QaPair {
    QuestionSignal question;
    ResponseSignal response;
    double semantic_score = 0.0;
    double time_gap = 0.0;
    bool entity_consistent = true;
};

struct AlignConfig {
    double window_seconds = 120.0;
    double theta_sem = 0.75;
};

struct UnpairedQuestion {
    std::size_t question_index = 0;
    std::string reason; // "no candidate" | "entity mismatch"
};

struct AlignmentResult {
    std::vector<QaPair> pairs;
    std::vector<UnpairedQuestion> unpaired;
};

using SemanticScorer = std::function<double(const QuestionSignal&, const ResponseSignal&)>;

/// Pairs each question with at most one response: among responses with
/// 0 <= t_resp - t_q <= window and score >= theta, the best score wins, ties
/// go to the earlier response. The pair is kept only if entity-consistent.
/// Questions without a timestamp skip the temporal test.
AlignmentResult align_qa(std::span<const QuestionSignal> questions, std::span<const ResponseSignal> responses,
                         const AlignConfig& cfg, const SemanticScorer& scorer, const retrieval::KnowledgeBase& kb,
                         const EntityConfig& entity_cfg = {});

/// Scorer backed by cosine similarity of provider embeddings.
SemanticScorer embedding_scorer(const retrieval::EmbeddingProvider& provider);

// ---------------------------------------------------------------------------
// Strategy tags

struct StrategyRule {
    std::string label;
    std::vector<std::string> keywords;
};

/// Configurable strategy label set. "other" is always a member.
class Taxonomy {
public:
    explicit Taxonomy(std::vector<StrategyRule> rules);
    static Taxonomy defaults();
    static Taxonomy from_json(const json& j);

    [[nodiscard]] bool contains(std::string_view label) const;
    [[nodiscard]] std::span<const StrategyRule> rules() const noexcept { return rules_; }
    [[nodiscard]] std::vector<std::string> labels() const;

private:
    std::vector<StrategyRule> rules_;
};

struct StrategyTag {
    std::string label;
    double confidence = 0.0;
    std::string span; // reference to the tagged response, "<source>#r<index>"
    friend bool operator==(const StrategyTag&, const StrategyTag&) = default;
};

/// Keyword-rule classifier: the label with the most keyword hits wins, ties by
/// taxonomy order; no hits gives "other" with confidence 0.
StrategyTag classify_strategy_offline(std::string_view text, const Taxonomy& taxonomy);

/// With a gateway, asks the model for a label constrained to the taxonomy,
/// retries once on an unlisted label, then falls back to "other". Without a
/// gateway, uses the keyword rules.
StrategyTag tag_strategy(const ResponseSignal& response, std::string span, const Taxonomy& taxonomy,
                         gateway::Gateway* gw);

// ---------------------------------------------------------------------------
// Account metadata

struct AccountMetadata {
    std::string account_id_hash;
    std::string profile_summary;
    std::vector<std::string> certifications;
    std::vector<std::string> service_scope_hints;
    friend bool operator==(const AccountMetadata&, const AccountMetadata&) = default;
};

/// Masks phone numbers, e-mail addresses, URLs and @handles.
std::string scrub_identifiers(std::string_view text);

AccountMetadata extract_account_metadata(const json& profile);

// ---------------------------------------------------------------------------

/// All signals extracted from one retained source.
struct AtomicSignals {
    std::string source_id;
    Domain domain;
    SourceKind kind = SourceKind::web_page;
    std::vector<QuestionSignal> questions;
    std::vector<ResponseSignal> responses;
    std::vector<QaPair> qa_pairs;
    std::vector<StrategyTag> strategy_tags;
    std::optional<AccountMetadata> account;
    json source_meta = json::object();
};

void to_json(json& j, const QuestionSignal& q);
void from_json(const json& j, QuestionSignal& q);
void to_json(json& j, const ResponseSignal& r);
void from_json(const json& j, ResponseSignal& r);
void to_json(json& j, const QaPair& p);
void from_json(const json& j, QaPair& p);
void to_json(json& j, const StrategyTag& t);
void from_json(const json& j, StrategyTag& t);
void to_json(json& j, const AccountMetadata& m);
void from_json(const json& j, AccountMetadata& m);
void to_json(json& j, const AtomicSignals& s);
void from_json(const json& j, AtomicSignals& s);

struct IngestConfig {
    FilterConfig filter;
    DenoiseConfig denoise;
    AlignConfig align;
    EntityConfig entities;
    std::vector<DomainLexicon> lexicons;
    Taxonomy taxonomy = Taxonomy::defaults();
    bool strategy_via_gateway = false;
    bool llm_correction = false;
    std::size_t workers = 4;
};

struct IngestResult {
    std::vector<AtomicSignals> signals;
    std::vector<SourceRejection> rejected;
    std::size_t sources_seen = 0;
    std::size_t transcript_edits = 0;
};

/// Runs filtering and per-source extraction over every subdirectory of
/// `sources_dir` (sorted by name, so output order is stable).
IngestResult ingest_sources(const std::filesystem::path& sources_dir, const IngestConfig& cfg,
                            const retrieval::EmbeddingProvider& provider, const retrieval::KnowledgeBase& kb,
                            gateway::Gateway* gw);

} // namespace streamforge::ingest
