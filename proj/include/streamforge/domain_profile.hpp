#pragma once

#include "streamforge/schema.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Per-domain vocabulary shared by persona synthesis, blueprint construction and
// the generation loop: slot ontologies, question topics, and the slot order in
// which a consultation typically progresses.
namespace streamforge::profile {

/// Slot names allowed in inform blocks, per domain name.
class Ontology {
public:
    static Ontology defaults();
    /// {"automotive": ["price_range", ...], ...}; entries replace the defaults.
    static Ontology from_json(const json& j);

    [[nodiscard]] const std::vector<std::string>& slots(const Domain& d) const;
    [[nodiscard]] bool allows(const Domain& d, std::string_view slot) const;
    [[nodiscard]] bool defined_for(const Domain& d) const;
    [[nodiscard]] std::vector<std::string> domains() const;
    void set(const std::string& domain, std::vector<std::string> slots);
    [[nodiscard]] json to_json() const;

private:
    std::map<std::string, std::vector<std::string>> slots_;
};

struct Topic {
    std::string name;                  // e.g. "fuel economy"
    std::vector<std::string> keywords; // lowercase; non-ASCII matched as substrings
    std::string mindset;
    std::string requirement; // core requirement phrased from the topic
};

std::span<const Topic> topics(Domain::Kind kind);

/// Topic with the most keyword hits across the texts; ties by table order.
std::optional<Topic> dominant_topic(std::span<const std::string> texts, Domain::Kind kind);
/// Hit count of one topic in one text.
std::size_t topic_hits(std::string_view text, const Topic& topic);

/// Slots whose values gate successive stages of a consultation.
std::vector<std::string> progression_slots(const Domain& d, const Ontology& ontology);
/// Slot whose value signals the successful outcome, and the outcome's name.
std::string terminal_slot(const Domain& d);
std::string terminal_outcome(const Domain& d);

/// "price_range" -> "price range".
std::string slot_words(std::string_view slot);

} // namespace streamforge::profile
