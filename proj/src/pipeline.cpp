#include "logicforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "logicforge/errors.hpp"

namespace logicforge {

std::vector<int> default_hidden_widths(int num_pis, int num_pos) {
    return std::vector<int>(4, std::max(2, 2 * (num_pis + num_pos)));
}

std::vector<int> parse_widths(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        int w = 0;
        try {
            w = std::stoi(item, &used);
        } catch (const std::exception&) {
            throw ConfigError("bad layer width '" + item + "'");
        }
        if (used != item.size() || w < 1) throw ConfigError("bad layer width '" + item + "'");
        out.push_back(w);
    }
    if (out.empty()) throw ConfigError("empty layer list");
    return out;
}

PriorStructure prepare_prior(const ProbabilityMatrix& probs, std::vector<NodeKind> kinds, int num_pis, int num_pos) {
    probs.check();
    if (kinds.empty()) kinds = default_node_kinds(probs.size(), num_pis, num_pos);
    if (static_cast<int>(kinds.size()) != probs.size()) throw ShapeError("prior kinds line does not match N");
    const auto count = [&](NodeKind k) { return static_cast<int>(std::count(kinds.begin(), kinds.end(), k)); };
    if (count(NodeKind::PI) != num_pis || count(NodeKind::PO) != num_pos) {
        throw ShapeError("prior has " + std::to_string(count(NodeKind::PI)) + " PIs / " +
                         std::to_string(count(NodeKind::PO)) + " POs, truth table needs " + std::to_string(num_pis) +
                         " / " + std::to_string(num_pos));
    }
    PriorStructure p;
    p.probs = probs;
    p.kinds = std::move(kinds);
    std::vector<int> pis, pos;
    for (int v = 0; v < probs.size(); ++v) {
        if (p.kinds[v] == NodeKind::PI) pis.push_back(v);
        if (p.kinds[v] == NodeKind::PO) pos.push_back(v);
    }
    p.repair = dag_search(probs, pis, pos);
    p.layering = layerize(p.kinds, fanin_lists(p.repair.adjacency));
    return p;
}

LayeredNet prior_net(const PriorStructure& prior, const DasConfig& config) {
    LayeredNet net = build_net(prior.layering, config);
    init_from_prior(net, prior.repair.masked, config.epsilon, config.split, config.damp_factor);
    return net;
}

LayeredNet uniform_net(const Layering& layering, const DasConfig& config) { return build_net(layering, config); }

LayeredNet uniform_net(int num_pis, const std::vector<int>& hidden, int num_pos, const DasConfig& config) {
    return build_net(make_layering(num_pis, hidden, num_pos), config);
}

ProbabilityMatrix oracle_prior(const Circuit& circuit, double flip_fraction, Rng& rng) {
    if (!(flip_fraction >= 0.0 && flip_fraction <= 1.0)) throw ConfigError("flip fraction must lie in [0, 1]");
    const int n = circuit.size();
    const Layering layering = layerize(circuit);
    ProbabilityMatrix p(n);
    std::vector<std::pair<int, int>> candidates;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (circuit.has_edge(i, j)) p(i, j) = 1.0;
            if (layering.layer_of[i] < layering.layer_of[j] && circuit.kind(i) != NodeKind::PO &&
                circuit.kind(j) != NodeKind::PI)
                candidates.push_back({i, j});
        }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    const auto flips = static_cast<std::size_t>(std::llround(flip_fraction * static_cast<double>(candidates.size())));
    for (std::size_t k = 0; k < flips; ++k) {
        auto [i, j] = candidates[k];
        p(i, j) = 1.0 - p(i, j);
    }
    return p;
}

std::string RunRecord::to_json() const {
    nlohmann::json j{{"benchmark", benchmark},
                     {"method", method},
                     {"seed", seed},
                     {"report", nlohmann::json::parse(report.to_json())},
                     {"wall_seconds", wall_seconds}};
    if (!error.empty()) j["error"] = error;
    return j.dump(2);
}

const char* RunRecord::csv_header() {
    return "benchmark,category,method,seed,steps,converged,accuracy,used_nands,search_space,bitsd_initial,final_loss,"
           "reinit_count,wall_seconds,error";
}

std::string RunRecord::csv_row(const std::string& category) const {
    std::ostringstream o;
    std::string err = error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    o << benchmark << ',' << category << ',' << method << ',' << seed << ',' << report.steps_used << ','
      << (report.converged ? 1 : 0) << ',' << report.accuracy << ',' << report.used_nand_count << ','
      << report.search_space_gate_count << ',' << report.bitsd_initial << ',' << report.final_loss << ','
      << report.reinit_count << ',' << wall_seconds << ',' << err;
    return o.str();
}

SynthOutcome run_das(LayeredNet net, const TruthTable& table, const DasConfig& config,
                     const ProbabilityMatrix* masked_prior, const std::string& benchmark, const std::string& method,
                     const MetricsSink& sink, int metrics_every) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r = train(std::move(net), table, config, masked_prior, sink, metrics_every);
    SynthOutcome out;
    out.circuit = discretize(r.net);
    out.net = std::move(r.net);
    out.record.benchmark = benchmark;
    out.record.method = method;
    out.record.seed = config.seed;
    out.record.report = r.report;
    out.record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

void write_verified_circuit(const std::filesystem::path& path, const Circuit& circuit, const TruthTable& table) {
    require_valid(circuit);
    if (accuracy(circuit, table) != 1.0) throw ValidationError("circuit does not implement the truth table");
    const auto tmp = path.string() + ".tmp";
    write_circuit(std::filesystem::path(tmp), circuit);
    std::filesystem::rename(tmp, path);
}

std::string to_string(BenchCategory c) {
    switch (c) {
    case BenchCategory::Random: return "random";
    case BenchCategory::Basic: return "basic";
    case BenchCategory::Espresso: return "espresso";
    case BenchCategory::Arithmetic: return "arithmetic";
    case BenchCategory::Logicnet: return "logicnet";
    }
    return "random";
}

BenchCategory parse_category(const std::string& text) {
    for (auto c : {BenchCategory::Random, BenchCategory::Basic, BenchCategory::Espresso, BenchCategory::Arithmetic,
                   BenchCategory::Logicnet})
        if (to_string(c) == text) return c;
    throw ParseError("unknown benchmark category '" + text + "'");
}

namespace {
std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

int parse_count(const std::string& s, int line) {
    std::size_t used = 0;
    int v = -1;
    try {
        v = std::stoi(s, &used);
    } catch (const std::exception&) {
    }
    if (used != s.size() || v < 0) throw ParseError("bad count '" + s + "'", line);
    return v;
}
} // namespace

std::vector<BenchmarkEntry> parse_manifest(std::istream& in, const std::filesystem::path& base) {
    std::string line;
    int line_no = 0;
    std::vector<BenchmarkEntry> out;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(trim(item));
        if (!line.empty() && line.back() == ',') f.push_back("");
        if (!header) {
            const std::vector<std::string> expected{"name", "category", "num_pi", "num_po", "truth_path"};
            if (f != expected) throw ParseError("manifest header must be name,category,num_pi,num_po,truth_path", line_no);
            header = true;
            continue;
        }
        if (f.size() < 4 || f.size() > 5) throw ParseError("expected 4 or 5 fields", line_no);
        BenchmarkEntry e;
        e.name = f[0];
        if (e.name.empty()) throw ParseError("empty benchmark name", line_no);
        try {
            e.category = parse_category(f[1]);
        } catch (const ParseError& err) {
            throw ParseError(err.what(), line_no);
        }
        e.num_pis = parse_count(f[2], line_no);
        e.num_pos = parse_count(f[3], line_no);
        if (e.num_pis > kMaxTruthTableInputs) throw ParseError("num_pi exceeds the guard of 20", line_no);
        if (e.num_pos < 1) throw ParseError("num_po must be positive", line_no);
        if (f.size() == 5 && !f[4].empty()) {
            e.truth_path = f[4];
            if (e.truth_path.is_relative() && !base.empty()) e.truth_path = base / e.truth_path;
        }
        out.push_back(std::move(e));
    }
    if (!header) throw ParseError("manifest is empty");
    return out;
}

std::vector<BenchmarkEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest " + path.string());
    return parse_manifest(in, path.parent_path());
}

TruthTable load_benchmark_table(const BenchmarkEntry& entry) {
    if (entry.truth_path.empty()) throw ParseError("benchmark " + entry.name + " has no truth_path");
    TruthTable t = read_truth_table(entry.truth_path);
    if (t.num_inputs() != entry.num_pis || t.num_outputs() != entry.num_pos) {
        throw ShapeError("benchmark " + entry.name + ": truth table is " + std::to_string(t.num_inputs()) + "x" +
                         std::to_string(t.num_outputs()) + ", manifest says " + std::to_string(entry.num_pis) + "x" +
                         std::to_string(entry.num_pos));
    }
    return t;
}

namespace {
MethodSummary summarize_method(const std::vector<const RunRecord*>& runs) {
    MethodSummary m;
    int ok = 0;
    for (const RunRecord* r : runs) {
        ++m.runs;
        if (!r->error.empty()) {
            ++m.failures;
            continue;
        }
        ++ok;
        m.converged += r->report.converged;
        m.mean_steps += r->report.steps_used;
        m.mean_used_nands += r->report.used_nand_count;
        m.mean_search_space += r->report.search_space_gate_count;
    }
    if (ok) {
        m.mean_steps /= ok;
        m.mean_used_nands /= ok;
        m.mean_search_space /= ok;
    }
    return m;
}

std::optional<double> improvement(const std::optional<MethodSummary>& u, const std::optional<MethodSummary>& p,
                                  double MethodSummary::*field) {
    if (!u || !p || u->runs == u->failures || p->runs == p->failures || (*u).*field == 0.0) return std::nullopt;
    return improvement_percent((*u).*field, (*p).*field);
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json method_json(const std::optional<MethodSummary>& m) {
    if (!m) return nullptr;
    return {{"runs", m->runs},
            {"failures", m->failures},
            {"converged", m->converged},
            {"mean_steps", m->mean_steps},
            {"mean_used_nands", m->mean_used_nands},
            {"mean_search_space", m->mean_search_space}};
}
} // namespace

BenchSummary summarize(const std::vector<RunRecord>& records) {
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<const RunRecord*>, std::vector<const RunRecord*>>> groups;
    for (const auto& r : records) {
        if (!groups.count(r.benchmark)) order.push_back(r.benchmark);
        auto& g = groups[r.benchmark];
        if (r.method == "uniform-das")
            g.first.push_back(&r);
        else if (r.method == "prior-das")
            g.second.push_back(&r);
        else
            throw ConfigError("unknown method '" + r.method + "'");
    }
    BenchSummary s;
    double sum_impr = 0.0;
    int n_impr = 0;
    MethodSummary tot_u, tot_p;
    int n_pairs = 0;
    for (const auto& name : order) {
        const auto& [u, p] = groups[name];
        BenchmarkSummary b;
        b.name = name;
        if (!u.empty()) b.uniform = summarize_method(u);
        if (!p.empty()) b.prior = summarize_method(p);
        b.steps_improvement = improvement(b.uniform, b.prior, &MethodSummary::mean_steps);
        b.used_nand_improvement = improvement(b.uniform, b.prior, &MethodSummary::mean_used_nands);
        b.search_space_improvement = improvement(b.uniform, b.prior, &MethodSummary::mean_search_space);
        if (b.steps_improvement) {
            sum_impr += *b.steps_improvement;
            ++n_impr;
            tot_u.mean_steps += b.uniform->mean_steps;
            tot_p.mean_steps += b.prior->mean_steps;
            tot_u.mean_used_nands += b.uniform->mean_used_nands;
            tot_p.mean_used_nands += b.prior->mean_used_nands;
            tot_u.mean_search_space += b.uniform->mean_search_space;
            tot_p.mean_search_space += b.prior->mean_search_space;
            ++n_pairs;
        }
        s.benchmarks.push_back(std::move(b));
    }
    if (n_impr) s.mean_steps_improvement = sum_impr / n_impr;
    if (n_pairs) {
        tot_u.runs = tot_p.runs = 1;
        s.steps_improvement_of_means = improvement(tot_u, tot_p, &MethodSummary::mean_steps);
        s.used_nand_improvement_of_means = improvement(tot_u, tot_p, &MethodSummary::mean_used_nands);
        s.search_space_improvement_of_means = improvement(tot_u, tot_p, &MethodSummary::mean_search_space);
    }
    return s;
}

std::string BenchSummary::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& b : benchmarks)
        rows.push_back({{"benchmark", b.name},
                        {"uniform_das", method_json(b.uniform)},
                        {"prior_das", method_json(b.prior)},
                        {"steps_improvement_percent", opt(b.steps_improvement)},
                        {"used_nand_improvement_percent", opt(b.used_nand_improvement)},
                        {"search_space_improvement_percent", opt(b.search_space_improvement)}});
    return nlohmann::json{{"step_unit", "optimizer_step"},
                          {"benchmarks", rows},
                          {"mean_steps_improvement_percent", opt(mean_steps_improvement)},
                          {"steps_improvement_of_means_percent", opt(steps_improvement_of_means)},
                          {"used_nand_improvement_of_means_percent", opt(used_nand_improvement_of_means)},
                          {"search_space_improvement_of_means_percent", opt(search_space_improvement_of_means)}}
        .dump(2);
}

int thread_budget() {
    if (const char* env = std::getenv("LOGICFORGE_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

} // namespace logicforge
