// JSON crosses the boundary as text; the Python package decodes it.

#include "streamforge/config.hpp"
#include "streamforge/evaluation.hpp"
#include "streamforge/filter.hpp"
#include "streamforge/orchestrator.hpp"
#include "streamforge/retrieval.hpp"
#include "streamforge/schema.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <spdlog/spdlog.h>

namespace py = pybind11;
using namespace streamforge;

namespace {

std::vector<SessionQuadruplet> sessions_from(const std::string& text) {
    return json::parse(text).get<std::vector<SessionQuadruplet>>();
}

std::string run_pipeline(const std::string& config_path, const std::vector<std::string>& phases,
                         const std::string& mode) {
    const auto raw = json::parse(read_text_file(config_path));
    auto j = raw;
    if (!mode.empty()) {
        j["gateway"]["mode"] = mode;
    }
    const auto cfg = config::parse_config(j, std::filesystem::path(config_path).parent_path());
    std::vector<orchestrator::Phase> selected;
    for (const auto& p : phases) {
        selected.push_back(orchestrator::parse_phase(p));
    }
    if (selected.empty()) {
        selected = orchestrator::all_phases();
    }
    orchestrator::check_inputs(cfg, selected);
    py::gil_scoped_release release;
    return orchestrator::run_pipeline(cfg, selected, j).manifest.dump();
}

std::string dataset_stats(const std::map<std::string, std::pair<std::uint64_t, std::uint64_t>>& counts) {
    DatasetStats stats;
    for (const auto& [domain, c] : counts) {
        stats.add_counts(domain, {c.first, c.second});
    }
    return json(stats).dump();
}

std::string slot_summary(const std::vector<double>& coverage_pct, const std::vector<std::size_t>& distinct) {
    if (coverage_pct.size() != distinct.size()) {
        throw PreconditionError("coverage and distinct-value lists differ in length");
    }
    std::vector<evaluation::SlotColumn> cols;
    for (std::size_t i = 0; i < coverage_pct.size(); ++i) {
        cols.push_back({"slot" + std::to_string(i), coverage_pct[i], distinct[i]});
    }
    return json(evaluation::summarize_slots(cols)).dump();
}

std::string evaluate_dst(const std::string& gold, const std::string& pred) {
    const auto g = json::parse(gold).get<std::vector<evaluation::StateRecord>>();
    const auto p = json::parse(pred).get<std::vector<evaluation::StateRecord>>();
    return json(evaluation::evaluate_dst(g, p)).dump();
}

std::string gold_states(const std::string& sessions) {
    return json(evaluation::gold_states(sessions_from(sessions))).dump();
}

std::string mix(const std::string& public_pool, const std::string& synthetic_pool, std::size_t budget, double ratio,
                std::uint64_t seed) {
    const auto pub = json::parse(public_pool).get<std::vector<json>>();
    const auto syn = json::parse(synthetic_pool).get<std::vector<json>>();
    const auto r = evaluation::mix_training_budget(pub, syn, budget, ratio, seed);
    return json{{"items", r.items}, {"manifest", r.manifest}}.dump();
}

std::string dedup_vectors(const std::vector<std::vector<double>>& user_vecs,
                          const std::vector<std::vector<double>>& agent_vecs, double tau_user, double tau_agent,
                          double rho, const std::string& method, std::uint64_t seed) {
    if (user_vecs.size() != agent_vecs.size()) {
        throw PreconditionError("user and agent vector lists differ in length");
    }
    std::vector<filter::DialogueRepresentation> reps;
    for (std::size_t i = 0; i < user_vecs.size(); ++i) {
        auto u = user_vecs[i];
        auto a = agent_vecs[i];
        retrieval::l2_normalize(u);
        retrieval::l2_normalize(a);
        reps.push_back({std::to_string(i), std::move(u), std::move(a)});
    }
    const auto g = filter::build_similarity_graph(reps, tau_user, tau_agent);
    const auto parts = filter::detect_communities(g, filter::parse_method(method), seed);
    const auto kept = filter::proportional_sample(parts, rho, seed);
    return json{{"edges", g.edges}, {"communities", parts}, {"retained", kept}}.dump();
}

std::vector<std::pair<std::size_t, double>> top_k(const std::vector<std::vector<double>>& vectors,
                                                  const std::vector<double>& query, std::size_t k) {
    if (vectors.empty()) {
        throw PreconditionError("no vectors");
    }
    retrieval::RetrievalPool pool(vectors.front().size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        pool.add({std::to_string(i), "", vectors[i], json::object()});
    }
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& s : pool.top_k(query, k)) {
        out.emplace_back(s.index, s.score);
    }
    return out;
}

std::string judge_export(const std::map<std::string, std::string>& sources, std::uint64_t seed) {
    std::vector<evaluation::JudgeSource> src;
    for (const auto& [label, sessions] : sources) {
        src.push_back({label, sessions_from(sessions)});
    }
    const auto batch = evaluation::export_judge_batch(src, seed);
    return json{{"items", batch.items}, {"key", batch.key}}.dump();
}

std::string judge_aggregate(const std::string& lines, const std::string& key) {
    const auto l = json::parse(lines).get<std::vector<json>>();
    return json(evaluation::aggregate_judge_scores(l, json::parse(key))).dump();
}

std::string validate_config(const std::string& config_json) {
    return json(config::validate_config(json::parse(config_json))).dump();
}

std::vector<double> embed(const std::string& text, std::size_t dim, std::uint64_t seed) {
    return retrieval::OfflineHashProvider(dim, seed).embed(text);
}

} // namespace

PYBIND11_MODULE(_streamforge, m) {
    spdlog::set_level(spdlog::level::warn);

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("run_pipeline", &run_pipeline, py::arg("config_path"), py::arg("phases") = std::vector<std::string>{},
          py::arg("mode") = "");
    m.def("dataset_stats", &dataset_stats, py::arg("counts"));
    m.def("slot_summary", &slot_summary, py::arg("coverage_pct"), py::arg("distinct_values"));
    m.def("evaluate_dst", &evaluate_dst, py::arg("gold"), py::arg("pred"));
    m.def("gold_states", &gold_states, py::arg("sessions"));
    m.def("mix", &mix, py::arg("public_pool"), py::arg("synthetic_pool"), py::arg("budget"), py::arg("ratio"),
          py::arg("seed"));
    m.def("dedup_vectors", &dedup_vectors, py::arg("user_vecs"), py::arg("agent_vecs"), py::arg("tau_user"),
          py::arg("tau_agent"), py::arg("rho"), py::arg("method"), py::arg("seed"));
    m.def("top_k", &top_k, py::arg("vectors"), py::arg("query"), py::arg("k"));
    m.def("judge_export", &judge_export, py::arg("sources"), py::arg("seed"));
    m.def("judge_aggregate", &judge_aggregate, py::arg("lines"), py::arg("key"));
    m.def("validate_config", &validate_config, py::arg("config"));
    m.def("embed", &embed, py::arg("text"), py::arg("dim") = 256, py::arg("seed") = 0x5eed);
}
