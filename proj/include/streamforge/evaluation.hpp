#pragma once

#include "streamforge/schema.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace streamforge::evaluation {

// ---------------------------------------------------------------------------
// Dialogue state tracking metrics

/// Cumulative slot state after one user turn.
struct StateRecord {
    std::string dialogue_id;
    std::size_t turn_index = 0;
    SlotMap state;
};

void to_json(json& j, const StateRecord& r);
void from_json(const json& j, StateRecord& r);

class AlignmentError : public Error {
public:
    AlignmentError(const std::string& what, std::vector<std::string> offenders);
    [[nodiscard]] const std::vector<std::string>& offenders() const noexcept { return offenders_; }

private:
    std::vector<std::string> offenders_;
};

struct DstScores {
    double jga = 0.0;       // percent
    double precision = 0.0; // percent
    double recall = 0.0;    // percent
    double f1 = 0.0;        // percent
    std::size_t turns = 0;
    std::size_t exact_turns = 0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
};

void to_json(json& j, const DstScores& s);

/// Percent of turns whose predicted state equals gold after value
/// normalization; turns with both states empty count as matches.
double joint_goal_accuracy(std::span<const StateRecord> gold, std::span<const StateRecord> pred);
/// Micro F1 over (turn, slot, value) triples, in percent; 0 when P = R = 0.
double slot_value_f1(std::span<const StateRecord> gold, std::span<const StateRecord> pred);
/// Both metrics plus counts. Throws AlignmentError when the (dialogue, turn)
/// keys differ or repeat.
DstScores evaluate_dst(std::span<const StateRecord> gold, std::span<const StateRecord> pred);

/// Gold cumulative states at each user turn, rebuilt from inform deltas with
/// later values overwriting earlier ones.
std::vector<StateRecord> gold_states(std::span<const SessionQuadruplet> sessions);

// ---------------------------------------------------------------------------
// Slot distribution

struct SlotColumn {
    std::string slot;
    double coverage_pct = 0.0; // share of dialogues mentioning the slot, x100
    std::size_t distinct_values = 0;
};

struct SlotDistributionTable {
    std::vector<SlotColumn> slots;
    double coverage_variance = 0.0; // population variance of coverage fractions, x100
    double avg_values = 0.0;        // mean distinct values per slot
};

void to_json(json& j, const SlotDistributionTable& t);

/// Fills the two summaries from per-slot columns. Throws PreconditionError on
/// an empty column list or coverage outside [0, 100].
SlotDistributionTable summarize_slots(std::vector<SlotColumn> columns);

/// Coverage and distinct values of each ontology slot over user inform blocks.
SlotDistributionTable slot_distribution(std::span<const SessionQuadruplet> dialogues,
                                        const std::vector<std::string>& slots);

/// Parses precomputed columns: {"slots": [...]?, "coverage_pct": [...],
/// "distinct_values": [...]}. Several named columns may be given as
/// {"columns": {"name": {...}}}; the result is keyed by column name ("" for a
/// single unnamed column).
std::map<std::string, SlotDistributionTable> slot_tables_from_json(const json& j);

// ---------------------------------------------------------------------------
// Training-set mixing

struct MixResult {
    std::vector<json> items; // shuffled
    json manifest;
};

/// round(ratio * budget) synthetic records plus the remainder public, each
/// sampled without replacement, then shuffled together. Throws
/// PreconditionError naming required and available counts when a pool is short.
MixResult mix_training_budget(std::span<const json> public_pool, std::span<const json> synthetic_pool,
                              std::size_t budget, double synth_ratio, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Judge protocol

inline constexpr std::array<const char*, 6> judge_dimensions = {
    "Coherence", "Informativeness", "Naturalness", "Diversity", "Flexibility", "Overall Quality"};
inline constexpr int judge_scale_min = 1;
inline constexpr int judge_scale_max = 10;

struct JudgeSource {
    std::string label;
    std::vector<SessionQuadruplet> sessions;
};

struct JudgeBatch {
    std::vector<json> items; // {"item": n, "dialogue": [{"role", "text"}]}
    json key;                // {"seed", "items": [{"item", "source", "dialogue_id"}]}
};

/// Anonymized, seed-shuffled batch. Needs at least two sources. Throws Error
/// if any source label occurs anywhere in the serialized batch.
JudgeBatch export_judge_batch(std::span<const JudgeSource> sources, std::uint64_t seed);

/// Serialized form written to disk: one JSON line per item.
std::string serialize_batch(const JudgeBatch& batch);

void write_judge_batch(const JudgeBatch& batch, const std::filesystem::path& out_dir,
                       const std::filesystem::path& key_file);

struct JudgeAggregate {
    /// source -> dimension -> judge -> mean rounded to 2 decimals
    std::map<std::string, std::map<std::string, std::map<std::string, double>>> means;
    /// "item N / judge J / dimension D" for every unscored cell
    std::vector<std::string> missing;
};

void to_json(json& j, const JudgeAggregate& a);

/// Score lines: {"item": n, "judge": "...", "scores": {dimension: value}}.
/// Throws Error on unknown items, unknown dimensions, or scores off the scale.
JudgeAggregate aggregate_judge_scores(std::span<const json> score_lines, const json& key);

} // namespace streamforge::evaluation
