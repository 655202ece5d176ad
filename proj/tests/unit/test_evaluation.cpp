#include "streamforge/evaluation.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace streamforge;
using namespace streamforge::evaluation;

namespace {

StateRecord rec(std::string d, std::size_t t, SlotMap s) { return {std::move(d), t, std::move(s)}; }

SessionQuadruplet session(std::string id, std::string text) {
    SessionQuadruplet s;
    s.dialogue_id = std::move(id);
    s.domain = Domain::parse("hotel");
    s.history = {{0, Role::user, text, SlotMap{{"area", "waterfront"}}, {}, {}, {}},
                 {1, Role::agent, "Sure, " + text, {}, std::vector<std::string>{"nights"}, {}, {}},
                 {2, Role::user, "Two nights.", SlotMap{{"nights", "2"}}, {}, {}, {}},
                 {3, Role::agent, "Booked.", {}, {}, {}, {}}};
    return s;
}

double round2(double x) { return std::round(x * 100.0) / 100.0; }

} // namespace

TEST_CASE("joint goal accuracy hand example") {
    const std::vector<StateRecord> gold{rec("d", 0, {{"a", "1"}}), rec("d", 2, {{"a", "1"}, {"b", "2"}}),
                                        rec("e", 0, {})};
    const std::vector<StateRecord> pred{rec("d", 0, {{"a", " 1 "}}), rec("d", 2, {{"a", "1"}}), rec("e", 0, {})};
    // d/0 matches after normalization, d/2 misses b, e/0 is empty on both sides.
    CHECK(round2(joint_goal_accuracy(gold, pred)) == doctest::Approx(66.67));
}

TEST_CASE("slot f1 with precision 100 and recall 50") {
    const std::vector<StateRecord> gold{rec("d", 0, {{"a", "1"}, {"b", "2"}})};
    const std::vector<StateRecord> pred{rec("d", 0, {{"a", "1"}})};
    const auto s = evaluate_dst(gold, pred);
    CHECK(s.precision == doctest::Approx(100.0));
    CHECK(s.recall == doctest::Approx(50.0));
    CHECK(round2(s.f1) == doctest::Approx(66.67));
    CHECK(s.true_positives == 1);
    CHECK(s.false_negatives == 1);
    CHECK(s.false_positives == 0);
}

TEST_CASE("f1 is zero without any triple") {
    const std::vector<StateRecord> gold{rec("d", 0, {})};
    const std::vector<StateRecord> pred{rec("d", 0, {})};
    const auto s = evaluate_dst(gold, pred);
    CHECK(s.f1 == 0.0);
    CHECK(s.jga == doctest::Approx(100.0));
}

TEST_CASE("misaligned predictions are rejected with offenders") {
    const std::vector<StateRecord> gold{rec("d", 0, {}), rec("d", 2, {})};
    const std::vector<StateRecord> pred{rec("d", 0, {}), rec("d", 4, {})};
    try {
        evaluate_dst(gold, pred);
        FAIL("expected AlignmentError");
    } catch (const AlignmentError& e) {
        CHECK_FALSE(e.offenders().empty());
    }
    const std::vector<StateRecord> dup{rec("d", 0, {}), rec("d", 0, {})};
    CHECK_THROWS_AS(evaluate_dst(dup, dup), AlignmentError);
}

TEST_CASE("gold states accumulate user informs") {
    std::vector<SessionQuadruplet> v{session("s1", "Waterfront please.")};
    const auto g = gold_states(v);
    REQUIRE(g.size() == 2);
    CHECK(g[0].turn_index == 0);
    CHECK(g[0].state == SlotMap{{"area", "waterfront"}});
    CHECK(g[1].turn_index == 2);
    CHECK(g[1].state == SlotMap{{"area", "waterfront"}, {"nights", "2"}});
}

TEST_CASE("slot summary against an independent variance formula") {
    const std::vector<double> cov{5.13, 19.71, 28.53, 39.90, 0.16, 19.71, 20.35, 79.17, 94.07, 21.31};
    const std::vector<std::size_t> distinct{2, 3, 3, 4, 1, 4, 2, 4, 27, 2};
    std::vector<SlotColumn> cols;
    double s1 = 0, s2 = 0, dv = 0;
    for (std::size_t i = 0; i < cov.size(); ++i) {
        cols.push_back({"s" + std::to_string(i), cov[i], distinct[i]});
        const double f = cov[i] / 100.0;
        s1 += f;
        s2 += f * f;
        dv += static_cast<double>(distinct[i]);
    }
    const double n = static_cast<double>(cov.size());
    const double oracle_var = (s2 / n - (s1 / n) * (s1 / n)) * 100.0;
    const auto t = summarize_slots(cols);
    CHECK(t.coverage_variance == doctest::Approx(oracle_var).epsilon(1e-9));
    CHECK(t.avg_values == doctest::Approx(dv / n));
    CHECK(std::abs(t.coverage_variance - 8.43) <= 0.01);
    CHECK(std::abs(t.avg_values - 5.2) <= 0.01);
    CHECK_THROWS_AS(summarize_slots({}), PreconditionError);
    CHECK_THROWS_AS(summarize_slots({{"x", 101.0, 1}}), PreconditionError);
}

TEST_CASE("slot distribution over dialogues") {
    std::vector<SessionQuadruplet> v{session("s1", "A"), session("s2", "B")};
    v[1].history[0].inform_block = SlotMap{{"area", "downtown"}};
    v[1].history[2].inform_block.reset();
    const auto t = slot_distribution(v, {"area", "nights", "star_rating"});
    REQUIRE(t.slots.size() == 3);
    CHECK(t.slots[0].coverage_pct == doctest::Approx(100.0));
    CHECK(t.slots[0].distinct_values == 2);
    CHECK(t.slots[1].coverage_pct == doctest::Approx(50.0));
    CHECK(t.slots[2].coverage_pct == doctest::Approx(0.0));
}

TEST_CASE("named table columns parse") {
    const json j{{"slots", {"a", "b"}},
                 {"columns",
                  {{"x", {{"coverage_pct", {50.0, 50.0}}, {"distinct_values", {1, 3}}}},
                   {"y", {{"coverage_pct", {0.0, 100.0}}, {"distinct_values", {0, 2}}}}}}};
    const auto t = slot_tables_from_json(j);
    CHECK(t.at("x").coverage_variance == doctest::Approx(0.0));
    CHECK(t.at("x").avg_values == doctest::Approx(2.0));
    CHECK(t.at("y").coverage_variance == doctest::Approx(25.0));
}

TEST_CASE("mixing honours budget and ratio") {
    std::vector<json> pub, syn;
    for (int i = 0; i < 30; ++i) {
        pub.push_back({{"dialogue_id", "p" + std::to_string(i)}});
        syn.push_back({{"dialogue_id", "s" + std::to_string(i)}});
    }
    const auto m = mix_training_budget(pub, syn, 20, 0.25, 1);
    CHECK(m.items.size() == 20);
    CHECK(m.manifest["synthetic_count"] == 5);
    CHECK(m.manifest["public_count"] == 15);
    std::set<std::string> ids;
    for (const auto& it : m.items) {
        ids.insert(it["dialogue_id"].get<std::string>());
    }
    CHECK(ids.size() == 20);
    CHECK(json(mix_training_budget(pub, syn, 20, 0.25, 1).items) == json(m.items));
    CHECK(mix_training_budget(pub, syn, 20, 0.0, 1).manifest["synthetic_count"] == 0);
    CHECK_THROWS_AS(mix_training_budget(pub, syn, 80, 0.5, 1), PreconditionError);
    CHECK_THROWS_AS(mix_training_budget(pub, syn, 10, 1.5, 1), PreconditionError);
}

TEST_CASE("judge export hides labels and aggregates by source") {
    std::vector<JudgeSource> sources{{"alpha", {session("a1", "Hi"), session("a2", "Hey")}},
                                     {"beta", {session("b1", "Hello")}}};
    const auto batch = export_judge_batch(sources, 5);
    REQUIRE(batch.items.size() == 3);
    const auto text = serialize_batch(batch);
    CHECK(text.find("alpha") == std::string::npos);
    CHECK(text.find("beta") == std::string::npos);
    CHECK(serialize_batch(export_judge_batch(sources, 5)) == text);

    std::vector<json> lines;
    for (const auto& k : batch.key["items"]) {
        const int score = k["source"] == "alpha" ? 8 : 4;
        json scores;
        for (const char* d : judge_dimensions) {
            scores[d] = score;
        }
        lines.push_back({{"item", k["item"]}, {"judge", "j1"}, {"scores", scores}});
    }
    const auto agg = aggregate_judge_scores(lines, batch.key);
    CHECK(agg.means.at("alpha").at("Coherence").at("j1") == doctest::Approx(8.0));
    CHECK(agg.means.at("beta").at("Overall Quality").at("j1") == doctest::Approx(4.0));
    CHECK(agg.missing.empty());

    lines[0]["scores"]["Coherence"] = 11;
    CHECK_THROWS_AS(aggregate_judge_scores(lines, batch.key), Error);

    std::vector<JudgeSource> leaky{{"alpha", {session("a1", "alpha is great")}}, {"beta", {session("b1", "x")}}};
    CHECK_THROWS_AS(export_judge_batch(leaky, 1), Error);
    CHECK_THROWS_AS(export_judge_batch(std::vector<JudgeSource>{sources[0]}, 1), Error);
}

TEST_CASE("judge batch files") {
    sftest::TempDir dir;
    std::vector<JudgeSource> sources{{"alpha", {session("a1", "Hi")}}, {"beta", {session("b1", "Hello")}}};
    const auto batch = export_judge_batch(sources, 5);
    write_judge_batch(batch, dir / "judge", dir / "key.json");
    CHECK(std::filesystem::exists(dir / "judge" / "batch.jsonl"));
    CHECK(std::filesystem::exists(dir / "key.json"));
    CHECK(read_text_file(dir / "judge" / "batch.jsonl").find("alpha") == std::string::npos);
}
