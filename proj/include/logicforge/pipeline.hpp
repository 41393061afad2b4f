#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "logicforge/circuit.hpp"
#include "logicforge/dag_repair.hpp"
#include "logicforge/das.hpp"

namespace logicforge {

// Hidden widths used when neither a prior nor --layers is given:
// four layers of 2 * (#PI + #PO) gates.
std::vector<int> default_hidden_widths(int num_pis, int num_pos);

// Parses "w1,w2,..." (positive integers).
std::vector<int> parse_widths(const std::string& text);

// Repaired prior: dag_search on the probabilities, then a longest-path
// layering of the repaired adjacency.
struct PriorStructure {
    ProbabilityMatrix probs;
    std::vector<NodeKind> kinds;
    RepairResult repair;
    Layering layering;
};

// kinds may be empty when the caller knows the PI/PO counts; then PIs come
// first and POs last. Throws ShapeError when the counts disagree with the table.
PriorStructure prepare_prior(const ProbabilityMatrix& probs, std::vector<NodeKind> kinds, int num_pis, int num_pos);

// Net over the prior's layering with selectors seeded from the masked prior.
LayeredNet prior_net(const PriorStructure& prior, const DasConfig& config);
// Same layering, uniform (all-zero) logits.
LayeredNet uniform_net(const Layering& layering, const DasConfig& config);
LayeredNet uniform_net(int num_pis, const std::vector<int>& hidden, int num_pos, const DasConfig& config);

// Known circuit adjacency with a fraction of the candidate entries flipped
// p -> 1 - p, chosen uniformly at random. Candidates are the connections a
// net over the circuit's own layering could select: i in a strictly earlier
// layer than j, i not a PO, j not a PI.
ProbabilityMatrix oracle_prior(const Circuit& circuit, double flip_fraction, Rng& rng);

struct RunRecord {
    std::string benchmark;
    std::string method;  // uniform-das or prior-das
    std::uint64_t seed = 0;
    DasReport report;
    double wall_seconds = 0.0;
    std::string error;   // non-empty when the run failed before training finished

    std::string to_json() const;
    static const char* csv_header();
    std::string csv_row(const std::string& category = "") const;
};

struct SynthOutcome {
    LayeredNet net;
    Circuit circuit;
    RunRecord record;
};

// train -> discretize -> accuracy, timed. The masked prior (if any) drives
// stuck-gate reinitialization.
SynthOutcome run_das(LayeredNet net, const TruthTable& table, const DasConfig& config,
                     const ProbabilityMatrix* masked_prior, const std::string& benchmark, const std::string& method,
                     const MetricsSink& sink = {}, int metrics_every = 100);

// Writes the circuit only when it is valid and matches the table exactly.
void write_verified_circuit(const std::filesystem::path& path, const Circuit& circuit, const TruthTable& table);

enum class BenchCategory { Random, Basic, Espresso, Arithmetic, Logicnet };
std::string to_string(BenchCategory c);
BenchCategory parse_category(const std::string& text);

struct BenchmarkEntry {
    std::string name;
    BenchCategory category = BenchCategory::Random;
    int num_pis = 0;
    int num_pos = 0;
    std::filesystem::path truth_path;  // relative paths resolve against the manifest directory
};

// Header `name,category,num_pi,num_po,truth_path`; the path column may be
// empty. Surrounding whitespace in fields is ignored.
std::vector<BenchmarkEntry> parse_manifest(std::istream& in, const std::filesystem::path& base = {});
std::vector<BenchmarkEntry> read_manifest(const std::filesystem::path& path);
// Loads the truth table and checks it against the declared counts.
TruthTable load_benchmark_table(const BenchmarkEntry& entry);

struct MethodSummary {
    int runs = 0;
    int failures = 0;
    int converged = 0;
    double mean_steps = 0.0;
    double mean_used_nands = 0.0;
    double mean_search_space = 0.0;
};

struct BenchmarkSummary {
    std::string name;
    std::optional<MethodSummary> uniform;
    std::optional<MethodSummary> prior;
    std::optional<double> steps_improvement;  // (1 - prior / uniform) * 100 on mean steps
    std::optional<double> used_nand_improvement;
    std::optional<double> search_space_improvement;
};

struct BenchSummary {
    std::vector<BenchmarkSummary> benchmarks;
    // Mean of per-benchmark improvements (Table-1 style average).
    std::optional<double> mean_steps_improvement;
    // Improvement of the averaged counts (Table-2 style).
    std::optional<double> steps_improvement_of_means;
    std::optional<double> used_nand_improvement_of_means;
    std::optional<double> search_space_improvement_of_means;

    std::string to_json() const;
};

BenchSummary summarize(const std::vector<RunRecord>& records);

// Worker count from LOGICFORGE_THREADS (default: hardware concurrency, at least 1).
int thread_budget();

} // namespace logicforge
