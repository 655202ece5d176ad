#include "streamforge/ingest.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

namespace streamforge::ingest {

namespace {

constexpr std::pair<SourceKind, std::string_view> kKindNames[] = {
    {SourceKind::web_page, "web_page"}, {SourceKind::live_stream, "live_stream"}, {SourceKind::short_video, "short_video"}};

bool is_ascii(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

bool is_word_byte(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && (std::isalnum(u) || c == '_');
}

/// Occurrences of `needle` in `haystack` (both lowercase). ASCII needles only
/// count at word boundaries so "hi" does not fire inside "which".
std::size_t count_keyword(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) {
        return 0;
    }
    const bool bounded = is_ascii(needle);
    std::size_t count = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) {
        if (bounded) {
            const bool left_ok = pos == 0 || !is_word_byte(haystack[pos - 1]) || !is_word_byte(needle.front());
            const auto end = pos + needle.size();
            const bool right_ok = end >= haystack.size() || !is_word_byte(haystack[end]) || !is_word_byte(needle.back());
            if (!left_ok || !right_ok) {
                continue;
            }
        }
        ++count;
    }
    return count;
}

std::vector<std::string> codepoints(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        if ((c & 0xE0) == 0xC0) {
            len = 2;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
        }
        len = std::min(len, text.size() - i);
        out.emplace_back(text.substr(i, len));
        i += len;
    }
    return out;
}

std::set<std::string> trigrams(std::string_view text) {
    const auto cps = codepoints(normalize_value(text));
    std::set<std::string> grams;
    if (cps.size() < 3) {
        grams.insert(normalize_value(text));
        return grams;
    }
    for (std::size_t i = 0; i + 2 < cps.size(); ++i) {
        grams.insert(cps[i] + cps[i + 1] + cps[i + 2]);
    }
    return grams;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) {
        return 1.0;
    }
    std::size_t inter = 0;
    for (const auto& g : a) {
        inter += b.count(g);
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::string format_number(double v) { return fmt::format("{}", v); }

// Prices need a currency marker or a magnitude suffix so bare numbers such as
// stock counts are not read as prices.
const std::regex& price_regex() {
    static const std::regex re(
        R"((?:¥|\$|RMB ?)\s?([0-9][0-9,]*(?:\.[0-9]+)?)\s?(k|K|万)?(?![A-Za-z])|([0-9][0-9,]*(?:\.[0-9]+)?)\s?(万元|万|元|yuan|RMB|k|K)(?![A-Za-z]))");
    return re;
}

const std::regex& date_regex() {
    static const std::regex re(R"(\b(?:19|20)[0-9]{2}-[0-9]{1,2}(?:-[0-9]{1,2})?\b)");
    return re;
}

const std::regex& ceiling_regex() {
    static const std::regex re(
        R"((?:under|below|less than|within|no more than|at most|不超过|低于)\s?((?:¥|\$|RMB ?)?\s?[0-9][0-9,]*(?:\.[0-9]+)?\s?(?:万元|万|元|yuan|RMB|k|K)?))",
        std::regex::icase);
    return re;
}

bool values_match(const std::string& type, const std::string& mention, const std::string& kb_value) {
    if (type == "price") {
        const auto a = parse_price(mention);
        const auto b = parse_price(kb_value);
        if (a && b) {
            return std::fabs(*a - *b) <= 1e-9 * std::max(std::fabs(*a), std::fabs(*b));
        }
        return false;
    }
    if (type == "date") {
        return kb_value.find(mention) != std::string::npos || mention.find(kb_value) != std::string::npos;
    }
    return normalize_value(mention) == normalize_value(kb_value);
}

std::vector<std::string> string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return out;
    }
    if (it->is_string()) {
        out.push_back(it->get<std::string>());
    } else {
        for (const auto& v : *it) {
            out.push_back(v.get<std::string>());
        }
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(SourceKind k) {
    for (const auto& [value, name] : kKindNames) {
        if (value == k) {
            return name;
        }
    }
    return "unknown";
}

SourceKind parse_source_kind(std::string_view text) {
    for (const auto& [value, name] : kKindNames) {
        if (name == text) {
            return value;
        }
    }
    throw Error("unknown source kind '" + std::string(text) + "'");
}

bool SourceItem::has_transcript() const { return payload_files.contains("transcript.txt"); }
bool SourceItem::has_comments() const { return payload_files.contains("comments.tsv"); }
bool SourceItem::has_profile() const { return payload_files.contains("profile.json"); }

SourceItem SourceItem::load(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.json";
    json meta;
    try {
        meta = json::parse(read_text_file(meta_path));
    } catch (const json::parse_error& e) {
        throw ParseError(meta_path.string(), 0, e.what());
    }
    SourceItem item;
    try {
        item.source_id = meta.value("source_id", dir.filename().string());
        item.kind = parse_source_kind(meta.at("kind").get<std::string>());
        item.domain = Domain::parse(meta.at("domain").get<std::string>());
        item.title = meta.value("title", std::string());
        item.category_tags = string_list(meta, "category_tags");
        if (meta.contains("certification") && !meta["certification"].is_null()) {
            item.certification = meta["certification"].get<std::string>();
        }
        if (meta.contains("viewer_count") && !meta["viewer_count"].is_null()) {
            item.viewer_count = meta["viewer_count"].get<std::int64_t>();
        }
        for (auto& f : string_list(meta, "flags")) {
            item.flags.insert(std::move(f));
        }
        if (meta.contains("wer") && !meta["wer"].is_null()) {
            item.wer = meta["wer"].get<double>();
        }
        item.speaker = meta.value("speaker", std::string("host"));
    } catch (const json::exception& e) {
        throw ParseError(meta_path.string(), 0, e.what());
    }
    item.payload_path = dir;
    for (const char* name : {"transcript.txt", "comments.tsv", "profile.json"}) {
        if (std::filesystem::exists(dir / name)) {
            item.payload_files.insert(name);
        }
    }
    return item;
}

FilterResult filter_sources(std::span<const SourceItem> items, const FilterConfig& criteria) {
    FilterResult result;
    const bool any_domain_criteria =
        !criteria.keywords.empty() || !criteria.category_tags.empty() || !criteria.certifications.empty();
    for (const auto& item : items) {
        const auto reject = [&](std::string reason) {
            result.rejected.push_back({item.source_id, std::move(reason)});
        };
        if (item.flags.contains("advertising_only") || item.flags.contains("entertainment_only")) {
            reject("low-signal");
            continue;
        }
        bool matched = !any_domain_criteria;
        std::string searchable = item.title;
        for (const auto& t : item.category_tags) {
            searchable += " " + t;
        }
        for (const auto& kw : criteria.keywords) {
            matched = matched || contains_ci(searchable, kw);
        }
        for (const auto& want : criteria.category_tags) {
            for (const auto& have : item.category_tags) {
                matched = matched || normalize_value(want) == normalize_value(have);
            }
        }
        if (item.certification) {
            for (const auto& cert : criteria.certifications) {
                matched = matched || contains_ci(*item.certification, cert);
            }
        }
        if (!matched) {
            reject("domain match");
            continue;
        }
        if (item.viewer_count && *item.viewer_count <= criteria.min_viewers) {
            reject("interaction threshold");
            continue;
        }
        const bool payload_ok = item.kind == SourceKind::live_stream ? (item.has_transcript() && item.has_comments())
                                                                     : (item.has_transcript() || item.has_comments());
        if (!payload_ok) {
            reject("missing payload");
            continue;
        }
        result.retained.push_back(item);
    }
    return result;
}

// ---------------------------------------------------------------------------

double near_duplicate_similarity(std::string_view a, std::string_view b) {
    return jaccard(trigrams(a), trigrams(b));
}

std::vector<QuestionSignal> denoise_comments(std::span<const RawComment> raw, const DenoiseConfig& cfg) {
    std::vector<std::regex> spam;
    spam.reserve(cfg.spam_patterns.size());
    for (const auto& p : cfg.spam_patterns) {
        try {
            spam.emplace_back(p, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw ConfigError("invalid spam pattern '" + p + "': " + e.what());
        }
    }

    std::vector<std::size_t> order(raw.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return raw[a].timestamp.value_or(-1.0) < raw[b].timestamp.value_or(-1.0);
    });

    std::vector<QuestionSignal> kept;
    std::set<std::string> exact;
    std::vector<std::set<std::string>> kept_grams;
    for (const auto i : order) {
        const std::string text = trim(raw[i].text);
        if (utf8_length(text) < cfg.min_length) {
            continue;
        }
        if (std::any_of(spam.begin(), spam.end(), [&](const std::regex& re) { return std::regex_search(text, re); })) {
            continue;
        }
        const std::string norm = normalize_value(text);
        if (!exact.insert(norm).second) {
            continue;
        }
        auto grams = trigrams(text);
        const bool near_dup = std::any_of(kept_grams.begin(), kept_grams.end(), [&](const auto& other) {
            return jaccard(grams, other) >= cfg.dedup_threshold;
        });
        if (near_dup) {
            continue;
        }
        kept_grams.push_back(std::move(grams));
        kept.push_back({text, raw[i].timestamp, anonymize(raw[i].author)});
    }
    return kept;
}

std::vector<RawComment> read_comments_tsv(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<RawComment> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split(line, '\t');
        if (fields.size() < 3) {
            throw ParseError(path.string(), line_no, "expected secs<TAB>author<TAB>text");
        }
        RawComment c;
        const std::string secs = trim(fields[0]);
        if (!secs.empty()) {
            try {
                c.timestamp = std::stod(secs);
            } catch (const std::exception&) {
                throw ParseError(path.string(), line_no, "bad timestamp '" + secs + "'");
            }
        }
        c.author = fields[1];
        fields.erase(fields.begin(), fields.begin() + 2);
        c.text = join(fields, "\t");
        out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------

DomainLexicon DomainLexicon::load_tsv(const std::filesystem::path& path, LexiconScope scope) {
    DomainLexicon lex;
    lex.scope = scope;
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto fields = split(line, '\t');
        if (fields.size() != 2) {
            throw ParseError(path.string(), line_no, "expected surface<TAB>canonical");
        }
        const auto [it, inserted] = lex.entries.emplace(fields[0], fields[1]);
        if (!inserted && it->second != fields[1]) {
            throw ConfigError(fmt::format("{}:{}: surface form '{}' maps to both '{}' and '{}'", path.string(),
                                          line_no, fields[0], it->second, fields[1]));
        }
    }
    return lex;
}

LexiconSet::LexiconSet(std::span<const DomainLexicon> lexicons) {
    for (const auto& lex : lexicons) {
        for (const auto& [surface, canonical] : lex.entries) {
            if (surface.empty()) {
                throw ConfigError("lexicon has an empty surface form");
            }
            if (canonical.empty()) {
                throw ConfigError("lexicon entry '" + surface + "' has an empty canonical form");
            }
            const auto [it, inserted] = rewrites_.emplace(surface, canonical);
            if (!inserted && it->second != canonical) {
                throw ConfigError("conflicting canonical forms for '" + surface + "': '" + it->second + "' vs '" +
                                  canonical + "'");
            }
            max_surface_len_ = std::max(max_surface_len_, surface.size());
        }
    }
    // Follow each rewrite chain; revisiting a surface form means a cycle.
    for (const auto& [start, _] : rewrites_) {
        std::set<std::string> seen{start};
        std::string cur = start;
        while (true) {
            const auto it = rewrites_.find(cur);
            if (it == rewrites_.end() || it->second == cur) {
                break;
            }
            cur = it->second;
            if (!seen.insert(cur).second) {
                throw ConfigError("cyclic lexicon rewrite through '" + start + "'");
            }
        }
    }
}

NormalizedText LexiconSet::normalize(std::string_view text) const {
    NormalizedText out;
    out.text.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        bool replaced = false;
        for (std::size_t len = std::min(max_surface_len_, text.size() - i); len > 0; --len) {
            const auto it = rewrites_.find(text.substr(i, len));
            if (it != rewrites_.end()) {
                if (it->second != it->first) {
                    out.edits.push_back({i, it->first, it->second});
                }
                out.text += it->second;
                i += len;
                replaced = true;
                break;
            }
        }
        if (!replaced) {
            out.text.push_back(text[i]);
            ++i;
        }
    }
    return out;
}

NormalizedText normalize_transcript(std::string_view text, std::span<const DomainLexicon> lexicons) {
    return LexiconSet(lexicons).normalize(text);
}

std::vector<ResponseSignal> read_transcript(const std::filesystem::path& path, const std::string& speaker) {
    std::istringstream in(read_text_file(path));
    std::vector<ResponseSignal> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto close = line.find(']');
        if (line.front() != '[' || close == std::string::npos) {
            throw ParseError(path.string(), line_no, "expected [secs]<TAB>text");
        }
        ResponseSignal r;
        try {
            r.timestamp = std::stod(line.substr(1, close - 1));
        } catch (const std::exception&) {
            throw ParseError(path.string(), line_no, "bad timestamp");
        }
        r.text = trim(std::string_view(line).substr(close + 1));
        r.speaker = speaker;
        if (!r.text.empty()) {
            out.push_back(std::move(r));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::optional<double> parse_price(std::string_view text) {
    std::string digits;
    std::size_t i = 0;
    while (i < text.size() && !std::isdigit(static_cast<unsigned char>(text[i]))) {
        ++i;
    }
    if (i == text.size()) {
        return std::nullopt;
    }
    while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == ',' || text[i] == '.')) {
        if (text[i] != ',') {
            digits.push_back(text[i]);
        }
        ++i;
    }
    double value = 0.0;
    try {
        value = std::stod(digits);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    const std::string rest = trim(text.substr(i));
    if (rest.starts_with("k") || rest.starts_with("K")) {
        value *= 1000.0;
    } else if (rest.starts_with("万")) {
        value *= 10000.0;
    }
    return value;
}

std::vector<EntityMention> extract_entities(std::string_view text, const retrieval::KnowledgeBase& kb,
                                            const EntityConfig& cfg) {
    std::vector<EntityMention> out;
    const std::string lower = to_lower_ascii(text);
    const auto entities = kb.entities();

    for (const auto& entity : entities) {
        const std::string needle = to_lower_ascii(entity);
        for (auto pos = lower.find(needle); pos != std::string::npos; pos = lower.find(needle, pos + 1)) {
            out.push_back({"name", entity, pos});
        }
    }

    const std::string s(text);
    const std::regex model_re(cfg.model_pattern);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), model_re); it != std::sregex_iterator(); ++it) {
        const std::string token = it->str();
        const bool known = std::any_of(entities.begin(), entities.end(), [&](const std::string& e) {
            for (const auto& part : split(e, ' ')) {
                if (normalize_value(part) == normalize_value(token)) {
                    return true;
                }
            }
            return false;
        });
        if (!known) {
            out.push_back({"unknown_name", token, static_cast<std::size_t>(it->position())});
        }
    }

    for (auto it = std::sregex_iterator(s.begin(), s.end(), price_regex()); it != std::sregex_iterator(); ++it) {
        if (auto v = parse_price(it->str())) {
            out.push_back({"price", format_number(*v), static_cast<std::size_t>(it->position())});
        }
    }
    for (auto it = std::sregex_iterator(s.begin(), s.end(), date_regex()); it != std::sregex_iterator(); ++it) {
        out.push_back({"date", it->str(), static_cast<std::size_t>(it->position())});
    }

    // Locations and configuration terms come from the knowledge base's own
    // vocabulary for those attribute types.
    for (const char* type : {"location", "config"}) {
        const auto types_it = cfg.attribute_types.find(type);
        if (types_it == cfg.attribute_types.end()) {
            continue;
        }
        std::set<std::string> vocab;
        for (const auto& e : kb.entries()) {
            if (std::find(types_it->second.begin(), types_it->second.end(), e.attribute) != types_it->second.end()) {
                vocab.insert(e.value);
            }
        }
        for (const auto& term : vocab) {
            const std::string needle = to_lower_ascii(term);
            if (needle.empty()) {
                continue;
            }
            for (auto pos = lower.find(needle); pos != std::string::npos; pos = lower.find(needle, pos + 1)) {
                const auto end = pos + needle.size();
                const bool bounded = (pos == 0 || !is_word_byte(lower[pos - 1])) &&
                                     (end >= lower.size() || !is_word_byte(lower[end]));
                if (bounded || !is_ascii(needle)) {
                    out.push_back({type, term, pos});
                }
            }
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const EntityMention& a, const EntityMention& b) { return a.offset < b.offset; });
    return out;
}

ConsistencyResult check_entity_consistency(std::string_view question, std::string_view response,
                                           const retrieval::KnowledgeBase& kb, const EntityConfig& cfg) {
    ConsistencyResult result;
    const auto in_response = extract_entities(response, kb, cfg);
    const auto in_question = extract_entities(question, kb, cfg);

    std::set<std::string> in_play;
    for (const auto& m : in_response) {
        if (m.type == "name") {
            in_play.insert(m.value);
        } else if (m.type == "unknown_name") {
            result.mismatches.push_back("unknown entity: " + m.value);
        }
    }
    if (in_play.empty()) {
        for (const auto& m : in_question) {
            if (m.type == "name") {
                in_play.insert(m.value);
            }
        }
    }

    for (const auto& m : in_response) {
        const auto types_it = cfg.attribute_types.find(m.type);
        if (types_it == cfg.attribute_types.end()) {
            continue;
        }
        std::vector<std::string> kb_values;
        for (const auto& entity : in_play) {
            for (const auto& attr : types_it->second) {
                for (const auto& e : kb.lookup(entity, attr)) {
                    kb_values.push_back(e.value);
                }
            }
        }
        if (kb_values.empty()) {
            continue;
        }
        const bool ok = std::any_of(kb_values.begin(), kb_values.end(),
                                    [&](const std::string& v) { return values_match(m.type, m.value, v); });
        if (!ok) {
            result.mismatches.push_back(
                fmt::format("{} mismatch: {} (knowledge base: {})", m.type, m.value, join(kb_values, " | ")));
        }
    }

    const std::string q(question);
    for (auto it = std::sregex_iterator(q.begin(), q.end(), ceiling_regex()); it != std::sregex_iterator(); ++it) {
        const auto ceiling = parse_price((*it)[1].str());
        if (!ceiling) {
            continue;
        }
        for (const auto& m : in_response) {
            if (m.type != "price") {
                continue;
            }
            if (const auto v = parse_price(m.value); v && *v > *ceiling) {
                result.mismatches.push_back(
                    fmt::format("constraint violated: price {} above stated ceiling {}", m.value, format_number(*ceiling)));
            }
        }
    }
    result.consistent = result.mismatches.empty();
    return result;
}

// ---------------------------------------------------------------------------

AlignmentResult align_qa(std::span<const QuestionSignal> questions, std::span<const ResponseSignal> responses,
                         const AlignConfig& cfg, const SemanticScorer& scorer, const retrieval::KnowledgeBase& kb,
                         const EntityConfig& entity_cfg) {
    std::vector<std::size_t> resp_order(responses.size());
    std::iota(resp_order.begin(), resp_order.end(), 0);
    std::stable_sort(resp_order.begin(), resp_order.end(),
                     [&](std::size_t a, std::size_t b) { return responses[a].timestamp < responses[b].timestamp; });

    AlignmentResult result;
    for (std::size_t qi = 0; qi < questions.size(); ++qi) {
        const auto& q = questions[qi];
        std::optional<std::size_t> best;
        double best_score = 0.0;
        double best_gap = 0.0;
        for (const auto ri : resp_order) {
            const auto& r = responses[ri];
            double gap = 0.0;
            if (q.timestamp) {
                gap = r.timestamp - *q.timestamp;
                if (gap < 0.0 || gap > cfg.window_seconds) {
                    continue;
                }
            }
            const double score = scorer(q, r);
            if (score < cfg.theta_sem) {
                continue;
            }
            // Strictly greater keeps the earliest response on ties.
            if (!best || score > best_score) {
                best = ri;
                best_score = score;
                best_gap = gap;
            }
        }
        if (!best) {
            result.unpaired.push_back({qi, "no candidate"});
            continue;
        }
        const auto& r = responses[*best];
        if (!check_entity_consistency(q.text, r.text, kb, entity_cfg).consistent) {
            result.unpaired.push_back({qi, "entity mismatch"});
            continue;
        }
        result.pairs.push_back({q, r, best_score, best_gap, true});
    }
    return result;
}

SemanticScorer embedding_scorer(const retrieval::EmbeddingProvider& provider) {
    auto memo = std::make_shared<std::map<std::string, retrieval::Embedding>>();
    auto mutex = std::make_shared<std::mutex>();
    auto embed = [&provider, memo, mutex](const std::string& text) {
        {
            std::lock_guard lock(*mutex);
            if (auto it = memo->find(text); it != memo->end()) {
                return it->second;
            }
        }
        auto v = provider.embed(text);
        std::lock_guard lock(*mutex);
        memo->emplace(text, v);
        return v;
    };
    return [embed](const QuestionSignal& q, const ResponseSignal& r) {
        return retrieval::cosine(embed(q.text), embed(r.text));
    };
}

// ---------------------------------------------------------------------------

Taxonomy::Taxonomy(std::vector<StrategyRule> rules) : rules_(std::move(rules)) {
    if (rules_.empty()) {
        throw ConfigError("strategy taxonomy is empty");
    }
    std::set<std::string> seen;
    for (const auto& r : rules_) {
        if (r.label.empty() || !seen.insert(r.label).second) {
            throw ConfigError("strategy taxonomy has an empty or duplicate label '" + r.label + "'");
        }
    }
}

Taxonomy Taxonomy::defaults() {
    return Taxonomy({
        {"greeting", {"hello", "hi", "welcome", "good morning", "good evening", "你好", "欢迎"}},
        {"requirement_mining",
         {"budget", "what are you looking for", "how many people", "do you prefer", "what kind", "which type",
          "typical driving", "预算", "需求"}},
        {"product_introduction",
         {"features", "configuration", "equipped", "comes with", "horsepower", "fuel consumption", "specs",
          "配置", "油耗"}},
        {"price_negotiation", {"discount", "promotion", "clearance", "offer", "deal", "优惠", "价格"}},
        {"objection_handling",
         {"understand your concern", "alternative", "compare", "instead", "however", "不过"}},
        {"conversion/appointment",
         {"reserve", "book", "booking", "test drive", "test-drive", "appointment", "schedule", "what day",
          "visit the store", "预约", "试驾"}},
    });
}

Taxonomy Taxonomy::from_json(const json& j) {
    std::vector<StrategyRule> rules;
    for (const auto& item : j) {
        rules.push_back({item.at("label").get<std::string>(),
                         item.value("keywords", std::vector<std::string>{})});
    }
    return Taxonomy(std::move(rules));
}

bool Taxonomy::contains(std::string_view label) const {
    return label == "other" ||
           std::any_of(rules_.begin(), rules_.end(), [&](const StrategyRule& r) { return r.label == label; });
}

std::vector<std::string> Taxonomy::labels() const {
    std::vector<std::string> out;
    for (const auto& r : rules_) {
        out.push_back(r.label);
    }
    return out;
}

StrategyTag classify_strategy_offline(std::string_view text, const Taxonomy& taxonomy) {
    const std::string lower = to_lower_ascii(text);
    std::size_t best_hits = 0;
    std::size_t total_hits = 0;
    std::string best_label = "other";
    for (const auto& rule : taxonomy.rules()) {
        std::size_t hits = 0;
        for (const auto& kw : rule.keywords) {
            hits += count_keyword(lower, to_lower_ascii(kw));
        }
        total_hits += hits;
        if (hits > best_hits) {
            best_hits = hits;
            best_label = rule.label;
        }
    }
    const double confidence = total_hits == 0 ? 0.0 : static_cast<double>(best_hits) / static_cast<double>(total_hits);
    return {best_label, confidence, ""};
}

StrategyTag tag_strategy(const ResponseSignal& response, std::string span, const Taxonomy& taxonomy,
                         gateway::Gateway* gw) {
    StrategyTag rule_tag = classify_strategy_offline(response.text, taxonomy);
    rule_tag.span = span;
    if (gw == nullptr) {
        return rule_tag;
    }
    gateway::GenerationRequest req;
    req.template_id = "strategy_tag";
    req.purpose = gateway::Purpose::strategy;
    req.decoding = {0.0, 16, 0};
    req.variables = {{"response", response.text},
                     {"taxonomy", join(taxonomy.labels(), ", ")},
                     {"rule_label", rule_tag.label}};
    try {
        for (int attempt = 0; attempt < 2; ++attempt) {
            req.decoding.seed = static_cast<std::uint64_t>(attempt);
            const std::string label = trim(gw->generate(req));
            for (const auto& candidate : taxonomy.labels()) {
                if (normalize_value(candidate) == normalize_value(label)) {
                    return {candidate, 1.0, span};
                }
            }
            if (normalize_value(label) == "other") {
                return {"other", 1.0, span};
            }
        }
        return {"other", 0.0, span};
    } catch (const Error& e) {
        spdlog::warn("strategy tagging for {} failed: {}", span, e.what());
        return {"other", 0.0, span};
    }
}

// ---------------------------------------------------------------------------

std::string scrub_identifiers(std::string_view text) {
    static const std::regex email(R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})");
    static const std::regex url(R"(https?://[^\s]+)");
    static const std::regex handle(R"(@[A-Za-z0-9_]+)");
    static const std::regex phone(R"(\+?[0-9][0-9\- ]{6,}[0-9])");
    std::string s(text);
    s = std::regex_replace(s, email, "[email]");
    s = std::regex_replace(s, url, "[url]");
    s = std::regex_replace(s, handle, "[handle]");
    s = std::regex_replace(s, phone, "[phone]");
    return s;
}

AccountMetadata extract_account_metadata(const json& profile) {
    AccountMetadata meta;
    std::string raw_id;
    if (profile.is_object()) {
        for (const char* key : {"account_id", "uid", "user_id"}) {
            if (profile.contains(key) && !profile[key].is_null()) {
                raw_id = profile[key].is_string() ? profile[key].get<std::string>() : profile[key].dump();
                break;
            }
        }
        std::string bio;
        for (const char* key : {"bio", "profile_summary", "description"}) {
            if (profile.contains(key) && profile[key].is_string()) {
                bio = profile[key].get<std::string>();
                break;
            }
        }
        meta.profile_summary = scrub_identifiers(bio);
        for (auto& c : string_list(profile, "certifications")) {
            meta.certifications.push_back(scrub_identifiers(c));
        }
        for (auto& h : string_list(profile, "service_scope")) {
            meta.service_scope_hints.push_back(scrub_identifiers(h));
        }
        for (const auto& c : meta.certifications) {
            if (std::find(meta.service_scope_hints.begin(), meta.service_scope_hints.end(), c) ==
                meta.service_scope_hints.end()) {
                meta.service_scope_hints.push_back(c);
            }
        }
    }
    meta.account_id_hash = anonymize(raw_id);
    return meta;
}

// ---------------------------------------------------------------------------

void to_json(json& j, const QuestionSignal& q) {
    j = json{{"text", q.text}, {"author_hash", q.author_hash}};
    j["timestamp"] = q.timestamp ? json(*q.timestamp) : json(nullptr);
}

void from_json(const json& j, QuestionSignal& q) {
    q.text = j.at("text").get<std::string>();
    q.author_hash = j.value("author_hash", std::string());
    if (j.contains("timestamp") && !j["timestamp"].is_null()) {
        q.timestamp = j["timestamp"].get<double>();
    } else {
        q.timestamp.reset();
    }
}

void to_json(json& j, const ResponseSignal& r) {
    j = json{{"text", r.text}, {"timestamp", r.timestamp}, {"speaker", r.speaker}};
}

void from_json(const json& j, ResponseSignal& r) {
    r.text = j.at("text").get<std::string>();
    r.timestamp = j.value("timestamp", 0.0);
    r.speaker = j.value("speaker", std::string("host"));
}

void to_json(json& j, const QaPair& p) {
    j = json{{"question", p.question},
             {"response", p.response},
             {"semantic_score", p.semantic_score},
             {"time_gap", p.time_gap},
             {"entity_consistent", p.entity_consistent}};
}

void from_json(const json& j, QaPair& p) {
    p.question = j.at("question").get<QuestionSignal>();
    p.response = j.at("response").get<ResponseSignal>();
    p.semantic_score = j.value("semantic_score", 0.0);
    p.time_gap = j.value("time_gap", 0.0);
    p.entity_consistent = j.value("entity_consistent", true);
}

void to_json(json& j, const StrategyTag& t) {
    j = json{{"label", t.label}, {"confidence", t.confidence}, {"span", t.span}};
}

void from_json(const json& j, StrategyTag& t) {
    t.label = j.at("label").get<std::string>();
    t.confidence = j.value("confidence", 0.0);
    t.span = j.value("span", std::string());
}

void to_json(json& j, const AccountMetadata& m) {
    j = json{{"account_id_hash", m.account_id_hash},
             {"profile_summary", m.profile_summary},
             {"certifications", m.certifications},
             {"service_scope_hints", m.service_scope_hints}};
}

void from_json(const json& j, AccountMetadata& m) {
    m.account_id_hash = j.at("account_id_hash").get<std::string>();
    m.profile_summary = j.value("profile_summary", std::string());
    m.certifications = j.value("certifications", std::vector<std::string>{});
    m.service_scope_hints = j.value("service_scope_hints", std::vector<std::string>{});
}

void to_json(json& j, const AtomicSignals& s) {
    j = json{{"source_id", s.source_id},
             {"domain", s.domain},
             {"kind", to_string(s.kind)},
             {"questions", s.questions},
             {"responses", s.responses},
             {"qa_pairs", s.qa_pairs},
             {"strategy_tags", s.strategy_tags},
             {"source_meta", s.source_meta}};
    j["account"] = s.account ? json(*s.account) : json(nullptr);
}

void from_json(const json& j, AtomicSignals& s) {
    s.source_id = j.at("source_id").get<std::string>();
    s.domain = j.at("domain").get<Domain>();
    s.kind = parse_source_kind(j.at("kind").get<std::string>());
    s.questions = j.value("questions", std::vector<QuestionSignal>{});
    s.responses = j.value("responses", std::vector<ResponseSignal>{});
    s.qa_pairs = j.value("qa_pairs", std::vector<QaPair>{});
    s.strategy_tags = j.value("strategy_tags", std::vector<StrategyTag>{});
    if (j.contains("account") && !j["account"].is_null()) {
        s.account = j["account"].get<AccountMetadata>();
    } else {
        s.account.reset();
    }
    s.source_meta = j.value("source_meta", json::object());
}

// ---------------------------------------------------------------------------

IngestResult ingest_sources(const std::filesystem::path& sources_dir, const IngestConfig& cfg,
                            const retrieval::EmbeddingProvider& provider, const retrieval::KnowledgeBase& kb,
                            gateway::Gateway* gw) {
    if (!std::filesystem::is_directory(sources_dir)) {
        throw PreconditionError("sources directory " + sources_dir.string() + " does not exist");
    }
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(sources_dir)) {
        if (entry.is_directory()) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());

    IngestResult result;
    result.sources_seen = dirs.size();
    std::vector<SourceItem> items;
    for (const auto& d : dirs) {
        if (!std::filesystem::exists(d / "meta.json")) {
            result.rejected.push_back({d.filename().string(), "missing metadata"});
            continue;
        }
        try {
            items.push_back(SourceItem::load(d));
        } catch (const ParseError& e) {
            spdlog::warn("skipping source {}: {}", d.filename().string(), e.what());
            result.rejected.push_back({d.filename().string(), "malformed metadata"});
        }
    }
    auto filtered = filter_sources(items, cfg.filter);
    result.rejected.insert(result.rejected.end(), filtered.rejected.begin(), filtered.rejected.end());

    const LexiconSet lexicons(cfg.lexicons);
    std::vector<AtomicSignals> signals(filtered.retained.size());
    std::vector<std::size_t> edits(filtered.retained.size(), 0);

    parallel_for(filtered.retained.size(), cfg.workers, [&](std::size_t idx) {
        const SourceItem& item = filtered.retained[idx];
        AtomicSignals& out = signals[idx];
        out.source_id = item.source_id;
        out.domain = item.domain;
        out.kind = item.kind;
        out.source_meta = json{{"title", item.title}, {"category_tags", item.category_tags}};
        if (item.viewer_count) {
            out.source_meta["viewer_count"] = *item.viewer_count;
        }
        if (item.wer) {
            out.source_meta["wer"] = *item.wer;
        }

        if (item.has_comments()) {
            const auto raw = read_comments_tsv(item.payload_path / "comments.tsv");
            out.questions = denoise_comments(raw, cfg.denoise);
        }
        if (item.has_transcript()) {
            for (auto& r : read_transcript(item.payload_path / "transcript.txt", item.speaker)) {
                auto norm = lexicons.normalize(r.text);
                edits[idx] += norm.edits.size();
                r.text = std::move(norm.text);
                if (cfg.llm_correction && gw != nullptr) {
                    gateway::GenerationRequest req;
                    req.template_id = "transcript_correction";
                    req.purpose = gateway::Purpose::correction;
                    req.decoding = {0.0, 256, 0};
                    req.variables = {{"text", r.text}};
                    r.text = trim(gw->generate(req));
                }
                if (!r.text.empty()) {
                    out.responses.push_back(std::move(r));
                }
            }
        }
        const auto scorer = embedding_scorer(provider);
        out.qa_pairs = align_qa(out.questions, out.responses, cfg.align, scorer, kb, cfg.entities).pairs;
        for (std::size_t ri = 0; ri < out.responses.size(); ++ri) {
            out.strategy_tags.push_back(tag_strategy(out.responses[ri], fmt::format("{}#r{}", item.source_id, ri),
                                                     cfg.taxonomy, cfg.strategy_via_gateway ? gw : nullptr));
        }
        if (item.has_profile()) {
            json profile;
            try {
                profile = json::parse(read_text_file(item.payload_path / "profile.json"));
            } catch (const json::parse_error& e) {
                throw ParseError((item.payload_path / "profile.json").string(), 0, e.what());
            }
            out.account = extract_account_metadata(profile);
        }
    });

    result.signals = std::move(signals);
    result.transcript_edits = std::accumulate(edits.begin(), edits.end(), std::size_t{0});
    return result;
}

} // namespace streamforge::ingest
