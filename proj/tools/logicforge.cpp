#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "logicforge/ar.hpp"
#include "logicforge/circuit.hpp"
#include "logicforge/dag_repair.hpp"
#include "logicforge/das.hpp"
#include "logicforge/dataset.hpp"
#include "logicforge/errors.hpp"
#include "logicforge/pipeline.hpp"
#include "logicforge/vq.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace logicforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotConverged = 1;
constexpr int kExitInput = 2;

// Thrown for bad user input that is not already a library parse/config error.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

CandidateScope parse_scope(const std::string& s) {
    if (s == "all") return CandidateScope::AllEarlier;
    if (s == "previous") return CandidateScope::PreviousLayer;
    if (s == "previous+inputs") return CandidateScope::PreviousLayerAndInputs;
    throw InputError("unknown scope '" + s + "' (all, previous, previous+inputs)");
}

// Options shared by synth, bench and bitsd.
struct DasFlags {
    std::uint64_t seed = 0;
    int max_steps = 50000;
    double lr = 0.01;
    double tau = 1.0;
    double tau_final = 0.1;
    double threshold = 1e-3;
    std::string layers;
    std::string scope = "all";
    bool soft = false;

    void add(CLI::App* app) {
        app->add_option("--seed", seed, "Root seed");
        app->add_option("--max-steps", max_steps, "Optimizer step budget");
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--tau", tau, "Initial Gumbel temperature");
        app->add_option("--tau-final", tau_final, "Final Gumbel temperature");
        app->add_option("--threshold", threshold, "Soft-loss convergence threshold");
        app->add_option("--layers", layers, "Hidden NAND layer widths, e.g. 4,4,4");
        app->add_option("--scope", scope, "Driver candidates: all, previous, previous+inputs");
        app->add_flag("--soft", soft, "Train on soft selectors instead of Gumbel samples");
    }

    DasConfig config(std::uint64_t run_seed) const {
        DasConfig c;
        c.seed = run_seed;
        c.max_steps = max_steps;
        c.learning_rate = lr;
        c.tau_initial = tau;
        c.tau_final = std::min(tau_final, tau);
        c.loss_threshold = threshold;
        c.scope = parse_scope(scope);
        c.mode = soft ? SelectorMode::Soft : SelectorMode::Gumbel;
        c.check();
        return c;
    }

    std::vector<int> hidden(int npi, int npo) const {
        return layers.empty() ? default_hidden_widths(npi, npo) : parse_widths(layers);
    }
};

PriorStructure load_prior(const fs::path& path, const TruthTable& table) {
    auto loaded = read_probability_matrix(path);
    return prepare_prior(loaded.probs, loaded.kinds, table.num_inputs(), table.num_outputs());
}

std::string layering_text(const Layering& l) {
    std::ostringstream out;
    for (const auto& layer : l.layers) {
        for (std::size_t i = 0; i < layer.size(); ++i) out << (i ? " " : "") << layer[i];
        out << '\n';
    }
    return out.str();
}

std::string metrics_csv(const std::vector<MetricsPoint>& pts) {
    std::ostringstream out;
    out << "step,loss,temperature\n";
    out.precision(10);
    for (const auto& p : pts) out << p.step << ',' << p.loss << ',' << p.temperature << '\n';
    return out.str();
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    DasFlags das;
    std::string truth;
    std::string prior;
    std::string out_dir = ".";
    std::string format = "json";
    bool allow_partial = false;
    int metrics_every = 100;
};

int cmd_synth(const SynthArgs& a) {
    TruthTable table = read_truth_table(fs::path(a.truth));
    DasConfig cfg = a.das.config(a.das.seed);
    std::optional<PriorStructure> prior;
    LayeredNet net;
    if (!a.prior.empty()) {
        prior = load_prior(a.prior, table);
        net = prior_net(*prior, cfg);
    } else {
        net = uniform_net(table.num_inputs(), a.das.hidden(table.num_inputs(), table.num_outputs()),
                          table.num_outputs(), cfg);
    }
    std::vector<MetricsPoint> pts;
    const std::string name = fs::path(a.truth).stem().string();
    SynthOutcome out = run_das(std::move(net), table, cfg, prior ? &prior->repair.masked : nullptr, name,
                               prior ? "prior-das" : "uniform-das",
                               [&](const MetricsPoint& p) { pts.push_back(p); }, a.metrics_every);

    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    write_atomic(dir / "metrics.csv", metrics_csv(pts));
    if (a.format == "csv")
        write_atomic(dir / "record.csv", std::string(RunRecord::csv_header()) + "\n" + out.record.csv_row() + "\n");
    else
        write_atomic(dir / "record.json", out.record.to_json() + "\n");
    std::cout << out.record.to_json() << '\n';

    // Recheck the emitted circuit independently of the training report.
    require_valid(out.circuit);
    const double acc = accuracy(out.circuit, table);
    if (acc != out.record.report.accuracy) throw std::logic_error("accuracy mismatch between report and circuit");
    if (acc == 1.0) {
        write_verified_circuit(dir / "circuit.txt", out.circuit, table);
        return kExitOk;
    }
    if (a.allow_partial) {
        write_atomic(dir / "circuit.txt", circuit_to_string(out.circuit));
        std::cerr << "warning: partial circuit written, accuracy " << acc << '\n';
        return kExitOk;
    }
    std::cerr << "error: no exact circuit within " << cfg.max_steps << " steps (accuracy " << acc << ")\n";
    return kExitNotConverged;
}

// ---------------------------------------------------------------- bitsd

struct BitsdArgs {
    DasFlags das;
    std::string truth;
    std::string prior;
};

int cmd_bitsd(const BitsdArgs& a) {
    TruthTable table = read_truth_table(fs::path(a.truth));
    DasConfig cfg = a.das.config(a.das.seed);
    json j;
    j["seed"] = a.das.seed;
    if (!a.prior.empty()) {
        PriorStructure prior = load_prior(a.prior, table);
        j["prior"] = bitsd(prior_net(prior, cfg), table);
        j["uniform"] = bitsd(uniform_net(prior.layering, cfg), table);
    } else {
        j["uniform"] = bitsd(uniform_net(table.num_inputs(), a.das.hidden(table.num_inputs(), table.num_outputs()),
                                         table.num_outputs(), cfg),
                             table);
    }
    std::cout << j.dump() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    DasFlags das;
    std::string manifest;
    std::string methods = "uniform-das,prior-das";
    std::string seeds = "0";
    std::string prior_dir;
    std::string out_dir = ".";
    std::string format = "csv";
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        auto dash = tok.find('-');
        try {
            if (dash == std::string::npos) {
                out.push_back(std::stoull(tok));
            } else {
                auto lo = std::stoull(tok.substr(0, dash)), hi = std::stoull(tok.substr(dash + 1));
                if (hi < lo) throw InputError("bad seed range " + tok);
                for (auto s = lo; s <= hi; ++s) out.push_back(s);
            }
        } catch (const std::logic_error&) {
            throw InputError("bad seed list '" + text + "'");
        }
    }
    if (out.empty()) throw InputError("empty seed list");
    return out;
}

int cmd_bench(const BenchArgs& a) {
    auto entries = read_manifest(a.manifest);
    std::vector<std::string> methods;
    {
        std::stringstream ss(a.methods);
        std::string m;
        while (std::getline(ss, m, ','))
            if (m == "uniform-das" || m == "prior-das") methods.push_back(m);
            else throw InputError("unknown method '" + m + "'");
    }
    const auto seeds = parse_seeds(a.seeds);
    if (std::find(methods.begin(), methods.end(), "prior-das") != methods.end() && a.prior_dir.empty())
        throw InputError("prior-das needs --prior-dir with <name>.pmatrix files");
    a.das.config(0);  // validate flags up front

    struct Job {
        std::size_t entry;
        std::string method;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t e = 0; e < entries.size(); ++e)
        for (auto seed : seeds)
            for (const auto& m : methods) jobs.push_back({e, m, seed});

    std::vector<RunRecord> records(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const Job& job = jobs[i];
            const BenchmarkEntry& entry = entries[job.entry];
            RunRecord& rec = records[i];
            rec.benchmark = entry.name;
            rec.method = job.method;
            rec.seed = job.seed;
            try {
                TruthTable table = load_benchmark_table(entry);
                DasConfig cfg = a.das.config(job.seed);
                std::optional<PriorStructure> prior;
                fs::path ppath = fs::path(a.prior_dir) / (entry.name + ".pmatrix");
                if (!a.prior_dir.empty() && fs::exists(ppath)) prior = load_prior(ppath, table);
                if (job.method == "prior-das" && !prior) throw InputError("missing prior " + ppath.string());
                LayeredNet net;
                if (job.method == "prior-das") net = prior_net(*prior, cfg);
                else if (prior) net = uniform_net(prior->layering, cfg);
                else net = uniform_net(table.num_inputs(), a.das.hidden(table.num_inputs(), table.num_outputs()),
                                       table.num_outputs(), cfg);
                rec = run_das(std::move(net), table, cfg, prior && job.method == "prior-das" ? &prior->repair.masked
                                                                                           : nullptr,
                              entry.name, job.method)
                          .record;
            } catch (const std::exception& e) {
                rec.error = e.what();
            }
            std::lock_guard lock(log_mu);
            std::cerr << rec.benchmark << ' ' << rec.method << " seed " << rec.seed << ": "
                      << (rec.error.empty() ? "steps " + std::to_string(rec.report.steps_used) : "error " + rec.error)
                      << '\n';
        }
    };
    const int threads = std::max(1, std::min<int>(thread_budget(), static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    const fs::path dir(a.out_dir);
    std::map<std::string, std::string> category;
    for (const auto& e : entries) category[e.name] = to_string(e.category);
    if (a.format == "csv") {
        std::string csv = std::string(RunRecord::csv_header()) + "\n";
        for (const auto& r : records) csv += r.csv_row(category[r.benchmark]) + "\n";
        write_atomic(dir / "results.csv", csv);
    } else {
        json arr = json::array();
        for (const auto& r : records) arr.push_back(json::parse(r.to_json()));
        write_atomic(dir / "results.json", arr.dump(2) + "\n");
    }
    const std::string summary = summarize(records).to_json();
    write_atomic(dir / "summary.json", summary + "\n");
    std::cout << summary << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- dataset

json extraction_to_json(const ExtractionConfig& c) {
    return {{"max_inputs", c.max_inputs},         {"dedup_cap", c.dedup_cap},
            {"max_pis", c.max_pis},               {"max_pos", c.max_pos},
            {"idle_ratio_min", c.idle_ratio_min}, {"idle_ratio_max", c.idle_ratio_max},
            {"shuffle", c.shuffle},               {"idle", c.idle},
            {"samples_per_shard", c.samples_per_shard}, {"seed", c.seed}};
}

void extraction_from_json(const json& j, ExtractionConfig& c) {
    c.max_inputs = j.value("max_inputs", c.max_inputs);
    c.dedup_cap = j.value("dedup_cap", c.dedup_cap);
    c.max_pis = j.value("max_pis", c.max_pis);
    c.max_pos = j.value("max_pos", c.max_pos);
    c.idle_ratio_min = j.value("idle_ratio_min", c.idle_ratio_min);
    c.idle_ratio_max = j.value("idle_ratio_max", c.idle_ratio_max);
    c.shuffle = j.value("shuffle", c.shuffle);
    c.idle = j.value("idle", c.idle);
    c.samples_per_shard = j.value("samples_per_shard", c.samples_per_shard);
    c.seed = j.value("seed", c.seed);
}

struct DatasetArgs {
    std::vector<std::string> inputs;
    std::string config;
    std::string out_dir = "corpus";
    int random = 0;
    int random_inputs = 6;
    int random_ands = 20;
    int random_outputs = 2;
    std::optional<int> max_inputs, dedup_cap, samples_per_shard;
    std::optional<std::uint64_t> seed;
    bool no_shuffle = false, no_idle = false;
};

std::vector<fs::path> collect_aag(const std::vector<std::string>& inputs) {
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::recursive_directory_iterator(p))
                if (e.is_regular_file() && e.path().extension() == ".aag") found.push_back(e.path());
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            if (!fs::exists(p)) throw InputError("no such input: " + in);
            out.push_back(p);
        }
    }
    return out;
}

int cmd_dataset(const DatasetArgs& a) {
    ExtractionConfig cfg;
    if (!a.config.empty()) extraction_from_json(json::parse(read_text(a.config)), cfg);
    if (a.max_inputs) cfg.max_inputs = *a.max_inputs;
    if (a.dedup_cap) cfg.dedup_cap = *a.dedup_cap;
    if (a.samples_per_shard) cfg.samples_per_shard = *a.samples_per_shard;
    if (a.seed) cfg.seed = *a.seed;
    if (a.no_shuffle) cfg.shuffle = false;
    if (a.no_idle) cfg.idle = false;
    cfg.check();

    const fs::path dir(a.out_dir);
    Corpus corpus;
    if (a.random > 0) {
        Rng rng(split_seed(cfg.seed, "random-aig"));
        std::vector<std::pair<std::string, Circuit>> circuits;
        fs::create_directories(dir / "aig");
        for (int i = 0; i < a.random; ++i) {
            AigCircuit aig = random_aig(a.random_inputs, a.random_ands, a.random_outputs, rng);
            char name[32];
            std::snprintf(name, sizeof name, "random-%04d.aag", i);
            write_aiger(dir / "aig" / name, aig);
            circuits.emplace_back(name, aig_to_nand(aig));
        }
        corpus = build_corpus(circuits, cfg);
    } else {
        auto paths = collect_aag(a.inputs);
        if (paths.empty()) throw InputError("no .aag inputs given");
        corpus = build_corpus(paths, cfg);
    }
    write_atomic(dir / "config.json", extraction_to_json(cfg).dump(2) + "\n");
    auto shards = write_corpus(dir, corpus, cfg.samples_per_shard);
    for (const auto& e : corpus.stats.errors) std::cerr << "warning: " << e << '\n';
    std::cout << corpus.stats.samples << " samples in " << shards.size() << " shard(s) under " << dir.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- train-vq / train-ar

std::vector<Sample> load_corpus(const std::string& dir) {
    std::vector<fs::path> shards;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".jsonl") shards.push_back(e.path());
    std::sort(shards.begin(), shards.end());
    if (shards.empty()) throw InputError("no .jsonl shards in " + dir);
    std::vector<Sample> out;
    for (const auto& s : shards) {
        auto part = read_shard(s);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

void append_csv(const fs::path& path, const std::string& header, const std::vector<std::string>& rows, bool fresh) {
    std::ofstream out(path, fresh ? std::ios::trunc : std::ios::app);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (fresh) out << header << '\n';
    for (const auto& r : rows) out << r << '\n';
}

struct TrainArgs {
    std::string corpus;
    std::string config;
    std::string out_dir = "model";
    std::string vq;  // train-ar only
    std::optional<int> steps;
    std::optional<std::uint64_t> seed;
    int max_nodes = 0;  // train-vq corpus filter, 0 = no limit
    bool resume = false;
    int halt_at = -1;
};

int cmd_train_vq(const TrainArgs& a) {
    const fs::path dir(a.out_dir);
    const fs::path ckpt = dir / "vq.ckpt";
    std::vector<Circuit> circuits;
    for (auto& s : load_corpus(a.corpus))
        if (a.max_nodes <= 0 || s.circuit.size() <= a.max_nodes) circuits.push_back(std::move(s.circuit));
    if (circuits.empty()) throw InputError("corpus is empty after filtering");

    VqTrainState state;
    const bool resuming = a.resume && fs::exists(ckpt);
    std::optional<VqModel> model;
    if (resuming) {
        model.emplace(load_vq_checkpoint(ckpt, &state));
    } else {
        VqConfig cfg;
        if (!a.config.empty()) cfg = VqConfig::from_json(read_text(a.config));
        if (a.steps) cfg.steps = *a.steps;
        if (a.seed) cfg.seed = *a.seed;
        cfg.check();
        model.emplace(cfg);
    }
    state.halt_at = a.halt_at;
    fs::create_directories(dir);
    write_atomic(dir / "vq_config.json", model->config().to_json() + "\n");

    std::vector<std::string> rows;
    auto sink = [&](const VqEpochMetrics& m) {
        std::ostringstream r;
        r.precision(10);
        r << m.epoch << ',' << m.step << ',' << m.loss_rec << ',' << m.loss_vq << ',' << m.used_fraction << ','
          << m.perplexity << ',' << m.revived;
        rows.push_back(r.str());
    };
    train_vq(circuits, *model, &state, sink);
    state.halt_at = -1;
    save_vq_checkpoint(ckpt, *model, state);
    append_csv(dir / "vq_metrics.csv", "epoch,step,loss_rec,loss_vq,used_fraction,perplexity,revived", rows,
               !resuming);

    VqEvaluation ev = evaluate_vq(circuits, *model);
    json j = {{"step", state.step},
              {"mean_loss_rec", ev.mean_loss_rec},
              {"mean_auc", ev.mean_auc},
              {"edge_accuracy", ev.edge_accuracy},
              {"used_fraction", ev.utilization.used_fraction},
              {"perplexity", ev.utilization.perplexity}};
    write_atomic(dir / "vq_eval.json", j.dump(2) + "\n");
    std::cout << j.dump() << '\n';
    return kExitOk;
}

int cmd_train_ar(const TrainArgs& a) {
    if (a.vq.empty()) throw InputError("--vq checkpoint is required");
    const fs::path dir(a.out_dir);
    const fs::path ckpt = dir / "ar.ckpt";
    VqModel vq = load_vq_checkpoint(a.vq);

    ArTrainState state;
    const bool resuming = a.resume && fs::exists(ckpt);
    std::optional<TransformerPredictor> model;
    if (resuming) {
        model.emplace(load_ar_checkpoint(ckpt, &state));
    } else {
        ArConfig cfg;
        if (!a.config.empty()) cfg = ArConfig::from_json(read_text(a.config));
        if (a.steps) cfg.steps = *a.steps;
        if (a.seed) cfg.seed = *a.seed;
        cfg.vocab = vq.config().codebook_size;
        cfg.vq_hash = vq.config().hash();
        cfg.check();
        model.emplace(cfg);
    }
    const ArConfig& cfg = model->config();
    if (cfg.vq_hash != vq.config().hash()) throw InputError("AR checkpoint was trained against a different tokenizer");

    std::vector<ArSample> corpus;
    int skipped = 0;
    for (const auto& s : load_corpus(a.corpus)) {
        if (s.circuit.size() > cfg.max_nodes || s.table.num_inputs() > cfg.max_pis ||
            s.table.num_outputs() > cfg.max_pos) {
            ++skipped;
            continue;
        }
        corpus.push_back({tokenize(s.circuit, vq), Condition::from_truth_table(s.table)});
    }
    if (corpus.empty()) throw InputError("no samples fit the AR size limits");
    if (skipped) std::cerr << "skipped " << skipped << " samples beyond the AR size limits\n";

    state.halt_at = a.halt_at;
    fs::create_directories(dir);
    write_atomic(dir / "ar_config.json", cfg.to_json() + "\n");
    std::vector<std::string> rows;
    auto sink = [&](const ArMetrics& m) {
        std::ostringstream r;
        r.precision(10);
        r << m.step << ',' << m.loss << ',' << m.masked_accuracy;
        rows.push_back(r.str());
    };
    train_ar(corpus, *model, &state, sink);
    state.halt_at = -1;
    save_ar_checkpoint(ckpt, *model, state);
    append_csv(dir / "ar_metrics.csv", "step,loss,masked_accuracy", rows, !resuming);

    json j = {{"step", state.step}, {"masked_accuracy", masked_accuracy(corpus, *model, cfg.seed)}};
    std::cout << j.dump() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
    std::string truth;
    std::string vq;
    std::string ar;
    int nodes = 0;
    int iterations = 8;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

std::string binary_pmatrix(const BinaryMatrix& adj, const std::vector<NodeKind>& kinds) {
    const int n = static_cast<int>(adj.size());
    ProbabilityMatrix p(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) p(i, j) = adj[i][j];
    std::ostringstream out;
    write_probability_matrix(out, p, kinds);
    return out.str();
}

int cmd_gen(const GenArgs& a) {
    for (const auto& p : {a.vq, a.ar})
        if (!fs::exists(p)) throw InputError("checkpoint not found: " + p);
    TruthTable table = read_truth_table(fs::path(a.truth));
    VqModel vq = load_vq_checkpoint(a.vq);
    TransformerPredictor ar = load_ar_checkpoint(a.ar);
    if (ar.config().vq_hash != vq.config().hash())
        throw InputError("AR checkpoint does not match the tokenizer (config hash mismatch)");
    Condition cond = Condition::from_truth_table(table);
    if (cond.num_pis > ar.config().max_pis || cond.num_pos > ar.config().max_pos)
        throw InputError("truth table exceeds the AR model's PI/PO limits");
    const int n = a.nodes > 0 ? a.nodes : default_node_budget(cond);
    if (n < cond.num_pis + cond.num_pos) throw InputError("node budget below #PI + #PO");
    if (n > ar.config().max_nodes) throw InputError("node budget exceeds the AR model's max_nodes");
    if (a.iterations < 1) throw InputError("iterations must be positive");

    Rng rng(split_seed(a.seed, "decode"));
    DecodeResult decoded;
    ProbabilityMatrix probs = generate_structure(ar, vq, cond, n, a.iterations, rng, &decoded);
    std::vector<NodeKind> kinds = generation_kinds(n, cond);
    PriorStructure prior = prepare_prior(probs, kinds, cond.num_pis, cond.num_pos);

    const fs::path dir(a.out_dir);
    std::ostringstream pm, masked;
    write_probability_matrix(pm, probs, kinds);
    write_probability_matrix(masked, prior.repair.masked, kinds);
    write_atomic(dir / "probs.pmatrix", pm.str());
    write_atomic(dir / "repaired.pmatrix", binary_pmatrix(prior.repair.adjacency, kinds));
    write_atomic(dir / "prior.pmatrix", masked.str());
    write_atomic(dir / "layering.txt", layering_text(prior.layering));
    write_atomic(dir / "decode_trace.json", decoded.trace_json() + "\n");
    std::string toks;
    for (std::size_t i = 0; i < decoded.tokens.size(); ++i) toks += (i ? " " : "") + std::to_string(decoded.tokens[i]);
    write_atomic(dir / "tokens.txt", toks + "\n");

    json j = {{"nodes", n},
              {"iterations", a.iterations},
              {"removed_edges", prior.repair.removed_edges.size()},
              {"layer_widths", prior.layering.widths()},
              {"acyclic", is_acyclic(prior.repair.adjacency)}};
    std::cout << j.dump() << '\n';
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"NAND circuit synthesis from truth tables"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Search a NAND circuit for a truth table");
    synth.das.add(s);
    s->add_option("truth", synth.truth, "Truth table file")->required();
    s->add_option("--prior", synth.prior, "Prior probability matrix (.pmatrix)");
    s->add_option("--out-dir", synth.out_dir, "Output directory");
    s->add_option("--format", synth.format, "Record format")->check(CLI::IsMember({"csv", "json"}));
    s->add_flag("--allow-partial", synth.allow_partial, "Write the circuit even when it is not exact");
    s->add_option("--metrics-every", synth.metrics_every, "Loss logging interval in steps");

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a prior structure from trained checkpoints");
    g->add_option("truth", gen.truth, "Truth table file")->required();
    g->add_option("--vq", gen.vq, "Tokenizer checkpoint")->required();
    g->add_option("--ar", gen.ar, "Predictor checkpoint")->required();
    g->add_option("--nodes,-N", gen.nodes, "Node budget (default 4 * (#PI + #PO))");
    g->add_option("--iterations,-T", gen.iterations, "Decoding iterations");
    g->add_option("--seed", gen.seed, "Root seed");
    g->add_option("--out-dir", gen.out_dir, "Output directory");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Run uniform and prior-guided search over a manifest");
    bench.das.add(b);
    b->add_option("--manifest", bench.manifest, "Benchmark manifest CSV")->required();
    b->add_option("--methods", bench.methods, "Comma-separated: uniform-das, prior-das");
    b->add_option("--seeds", bench.seeds, "Seeds, e.g. 0-9 or 1,4,7");
    b->add_option("--prior-dir", bench.prior_dir, "Directory of <name>.pmatrix priors");
    b->add_option("--out-dir", bench.out_dir, "Output directory");
    b->add_option("--format", bench.format, "Results format")->check(CLI::IsMember({"csv", "json"}));

    BitsdArgs bits;
    auto* d = app.add_subcommand("bitsd", "Bits distance of an untrained net");
    bits.das.add(d);
    d->add_option("truth", bits.truth, "Truth table file")->required();
    d->add_option("--prior", bits.prior, "Prior probability matrix (.pmatrix)");

    DatasetArgs ds;
    auto* dsc = app.add_subcommand("dataset", "Extract a training corpus from AIGER files");
    dsc->add_option("inputs", ds.inputs, ".aag files or directories");
    dsc->add_option("--config", ds.config, "Extraction config JSON");
    dsc->add_option("--out-dir", ds.out_dir, "Output directory");
    dsc->add_option("--random", ds.random, "Generate this many random AIGs instead of reading inputs");
    dsc->add_option("--random-inputs", ds.random_inputs, "PIs per random AIG");
    dsc->add_option("--random-ands", ds.random_ands, "ANDs per random AIG");
    dsc->add_option("--random-outputs", ds.random_outputs, "POs per random AIG");
    dsc->add_option("--max-inputs", ds.max_inputs, "Fan-in BFS input budget");
    dsc->add_option("--dedup-cap", ds.dedup_cap, "Samples kept per truth table");
    dsc->add_option("--samples-per-shard", ds.samples_per_shard, "Shard size");
    dsc->add_option("--seed", ds.seed, "Root seed");
    dsc->add_flag("--no-shuffle", ds.no_shuffle, "Disable node shuffling");
    dsc->add_flag("--no-idle", ds.no_idle, "Disable idle-node insertion");

    TrainArgs tvq;
    auto* v = app.add_subcommand("train-vq", "Train the circuit tokenizer");
    v->add_option("--corpus", tvq.corpus, "Directory of corpus shards")->required();
    v->add_option("--config", tvq.config, "Tokenizer config JSON");
    v->add_option("--out-dir", tvq.out_dir, "Output directory");
    v->add_option("--steps", tvq.steps, "Optimizer steps");
    v->add_option("--seed", tvq.seed, "Root seed");
    v->add_option("--max-nodes", tvq.max_nodes, "Skip circuits with more nodes");
    v->add_flag("--resume", tvq.resume, "Continue from the checkpoint in --out-dir");
    v->add_option("--halt-at", tvq.halt_at, "Stop after the epoch reaching this step");

    TrainArgs tar;
    auto* r = app.add_subcommand("train-ar", "Train the masked token predictor");
    r->add_option("--corpus", tar.corpus, "Directory of corpus shards")->required();
    r->add_option("--vq", tar.vq, "Tokenizer checkpoint")->required();
    r->add_option("--config", tar.config, "Predictor config JSON");
    r->add_option("--out-dir", tar.out_dir, "Output directory");
    r->add_option("--steps", tar.steps, "Optimizer steps");
    r->add_option("--seed", tar.seed, "Root seed");
    r->add_flag("--resume", tar.resume, "Continue from the checkpoint in --out-dir");
    r->add_option("--halt-at", tar.halt_at, "Stop once this step is reached");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (*s) return cmd_synth(synth);
        if (*g) return cmd_gen(gen);
        if (*b) return cmd_bench(bench);
        if (*d) return cmd_bitsd(bits);
        if (*dsc) return cmd_dataset(ds);
        if (*v) return cmd_train_vq(tvq);
        if (*r) return cmd_train_ar(tar);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitInput;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::invalid_argument& e) {  // ShapeError, ConfigError
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const ValidationError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return kExitInput;
    } catch (const SizeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNotConverged;
    }
    return kExitInput;
}
