#pragma once

#include "streamforge/common.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace streamforge {

using json = nlohmann::json;
using SlotMap = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Domain

class Domain {
public:
    enum class Kind { automotive, restaurant, hotel, other };

    Domain() = default;
    /// Known names map to their kind; any other non-empty label becomes other(label).
    static Domain parse(std::string_view name);

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }

    friend bool operator==(const Domain&, const Domain&) = default;
    friend auto operator<=>(const Domain& a, const Domain& b) { return a.name_ <=> b.name_; }

private:
    Kind kind_ = Kind::other;
    std::string name_ = "other";
};

void to_json(json& j, const Domain& d);
void from_json(const json& j, Domain& d);

// ---------------------------------------------------------------------------
// Dialogue history

enum class Role { user, agent };

std::string_view to_string(Role r);
Role parse_role(std::string_view text);

struct Turn {
    std::size_t index = 0;
    Role role = Role::user;
    std::string text;
    std::optional<SlotMap> inform_block;                  // user turns only
    std::optional<std::vector<std::string>> request_block; // agent turns only
    std::optional<std::vector<std::string>> evidence_ids;
    // Slots in inform_block that overwrite an earlier value (user revision).
    std::vector<std::string> revised_slots;

    friend bool operator==(const Turn&, const Turn&) = default;
};

void to_json(json& j, const Turn& t);
void from_json(const json& j, Turn& t);

struct SessionQuadruplet {
    std::string dialogue_id;
    std::string user_persona_id;
    std::string agent_persona_id;
    std::string blueprint_id;
    Domain domain;
    std::vector<Turn> history;

    friend bool operator==(const SessionQuadruplet&, const SessionQuadruplet&) = default;
};

void to_json(json& j, const SessionQuadruplet& s);
void from_json(const json& j, SessionQuadruplet& s);

/// A human-annotated public dialogue used as scaffolding.
struct SeedDialogue {
    std::string seed_id;
    Domain domain;
    std::vector<Turn> turns;

    friend bool operator==(const SeedDialogue&, const SeedDialogue&) = default;
};

void to_json(json& j, const SeedDialogue& s);
void from_json(const json& j, SeedDialogue& s);

// ---------------------------------------------------------------------------
// Personas

struct UserPersona {
    std::string persona_id;
    std::string mindset;
    SlotMap basic_information;
    std::vector<std::string> core_requirements;
    std::vector<std::string> primary_inquiries;
    std::vector<std::string> potential_utterances;
    Domain domain;

    friend bool operator==(const UserPersona&, const UserPersona&) = default;
};

void to_json(json& j, const UserPersona& p);
void from_json(const json& j, UserPersona& p);

struct AgentPersona {
    std::string persona_id;
    std::string identity_positioning;
    std::string linguistic_style;
    std::vector<std::string> service_boundaries;
    std::string knowledge_base_ref;
    Domain domain;

    friend bool operator==(const AgentPersona&, const AgentPersona&) = default;
};

void to_json(json& j, const AgentPersona& p);
void from_json(const json& j, AgentPersona& p);

// ---------------------------------------------------------------------------
// Conversational blueprint

/// Predicate over the accumulated inform state.
struct SlotCondition {
    enum class Op { informed, equals };
    std::string slot;
    Op op = Op::informed;
    std::string value; // equals only; compared after normalize_value

    [[nodiscard]] bool holds(const SlotMap& state) const;
    friend bool operator==(const SlotCondition&, const SlotCondition&) = default;
};

struct Stage {
    std::string name;
    std::string goal;
    std::vector<SlotCondition> entry_condition; // conjunction; empty = always satisfied
    friend bool operator==(const Stage&, const Stage&) = default;
};

struct KeyNode {
    std::string signal_name;
    std::string business_meaning;
    SlotCondition trigger;
    friend bool operator==(const KeyNode&, const KeyNode&) = default;
};

struct Scenario {
    std::string situation;
    std::string coping_strategy;
    std::string example_phrasing;
    std::string stage;                 // stage this scenario belongs to
    std::vector<std::string> keywords; // matched against the latest user text
    std::vector<std::string> slots;    // matched against the latest inform delta
    int priority = 0;
    friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct FlowNode {
    std::string id; // stage name, or an outcome name for terminal nodes
    bool terminal = false;
    friend bool operator==(const FlowNode&, const FlowNode&) = default;
};

struct FlowEdge {
    std::string from;
    std::string to;
    std::string label; // key-node signal name
    friend bool operator==(const FlowEdge&, const FlowEdge&) = default;
};

struct FlowAtlas {
    std::vector<FlowNode> nodes;
    std::vector<FlowEdge> edges;
    [[nodiscard]] const FlowNode* find(std::string_view id) const;
    friend bool operator==(const FlowAtlas&, const FlowAtlas&) = default;
};

struct Blueprint {
    std::string blueprint_id;
    Domain domain;
    std::vector<Stage> rhythm;
    std::vector<KeyNode> key_nodes;
    std::vector<Scenario> scenarios;
    FlowAtlas flow_atlas;
    json provenance = json::object();

    [[nodiscard]] const KeyNode* key_node(std::string_view signal) const;
    friend bool operator==(const Blueprint&, const Blueprint&) = default;
};

void to_json(json& j, const SlotCondition& c);
void from_json(const json& j, SlotCondition& c);
void to_json(json& j, const Stage& s);
void from_json(const json& j, Stage& s);
void to_json(json& j, const KeyNode& k);
void from_json(const json& j, KeyNode& k);
void to_json(json& j, const Scenario& s);
void from_json(const json& j, Scenario& s);
void to_json(json& j, const FlowNode& n);
void from_json(const json& j, FlowNode& n);
void to_json(json& j, const FlowEdge& e);
void from_json(const json& j, FlowEdge& e);
void to_json(json& j, const FlowAtlas& a);
void from_json(const json& j, FlowAtlas& a);
void to_json(json& j, const Blueprint& b);
void from_json(const json& j, Blueprint& b);

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    std::string code; // short stable tag, e.g. "turn order"
    std::string detail;
    friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
    std::vector<Violation> violations;

    [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
    [[nodiscard]] bool has(std::string_view code) const;
    void add(std::string code, std::string detail);
    void merge(const ValidationReport& other);
    [[nodiscard]] std::string summary() const;
};

void to_json(json& j, const ValidationReport& r);

struct PersonaStore {
    std::map<std::string, UserPersona> users;
    std::map<std::string, AgentPersona> agents;

    static PersonaStore load(const std::filesystem::path& user_file,
                             const std::filesystem::path& agent_file);
};

struct BlueprintStore {
    std::map<std::string, Blueprint> blueprints;

    static BlueprintStore load(const std::filesystem::path& file);
};

ValidationReport validate_quadruplet(const SessionQuadruplet& record, const PersonaStore& personas,
                                     const BlueprintStore& blueprints);
/// Parses first; a record that does not parse yields a "parse" violation.
ValidationReport validate_quadruplet(const json& record, const PersonaStore& personas,
                                     const BlueprintStore& blueprints);

ValidationReport validate_user_persona(const UserPersona& persona);
/// known_kbs empty disables the knowledge-base reference check.
ValidationReport validate_agent_persona(const AgentPersona& persona,
                                        const std::set<std::string>& known_kbs);

// ---------------------------------------------------------------------------
// Dataset statistics

struct DomainCounts {
    std::uint64_t dialogue_count = 0;
    std::uint64_t turn_count = 0;

    /// turns / dialogues; 0 for an empty set.
    [[nodiscard]] double avg_turns_per_dialogue() const;
    /// Average rounded to the two decimals used in reports.
    [[nodiscard]] std::string avg_turns_2dp() const;

    DomainCounts& operator+=(const DomainCounts& o);
    friend bool operator==(const DomainCounts&, const DomainCounts&) = default;
};

struct DatasetStats {
    std::map<std::string, DomainCounts> per_domain;
    DomainCounts total;

    void add(const SessionQuadruplet& session);
    void add_counts(const std::string& domain, DomainCounts counts);
    DatasetStats& merge(const DatasetStats& other);
    [[nodiscard]] std::string table() const;

    friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

void to_json(json& j, const DatasetStats& s);

DatasetStats compute_dataset_stats(std::span<const SessionQuadruplet> records);
/// Streams a dataset file without holding it in memory.
DatasetStats compute_dataset_stats(const std::filesystem::path& dataset_file);

// ---------------------------------------------------------------------------
// JSONL storage: one record per line, keys in sorted order, UTF-8.

/// Visits each parsed line. Throws ParseError naming the line on malformed
/// input, blank lines, or a final record without its terminating newline.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t line)>& visit);

std::vector<json> read_jsonl_raw(const std::filesystem::path& path);
void write_jsonl_raw(const std::filesystem::path& path, std::span<const json> records);

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
    std::vector<T> out;
    for_each_jsonl(path, [&](const json& j, std::size_t line) {
        try {
            out.push_back(j.get<T>());
        } catch (const json::exception& e) {
            throw ParseError(path.string(), line, e.what());
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(path.string(), line, e.what());
        }
    });
    return out;
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, std::span<const T> records) {
    std::vector<json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) {
        rows.emplace_back(r);
    }
    write_jsonl_raw(path, rows);
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records) {
    write_jsonl(path, std::span<const T>(records));
}

} // namespace streamforge
