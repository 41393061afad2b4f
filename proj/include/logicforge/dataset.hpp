#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "logicforge/circuit.hpp"
#include "logicforge/rng.hpp"

namespace logicforge {

// Combinational And-Inverter Graph with AIGER literals (2 * var + negation).
struct AigCircuit {
    struct And {
        unsigned lhs = 0;
        unsigned rhs0 = 0;
        unsigned rhs1 = 0;
    };
    unsigned max_var = 0;
    std::vector<unsigned> inputs;   // positive literals
    std::vector<unsigned> outputs;  // any literal
    std::vector<And> ands;

    // Output values for one input assignment.
    std::vector<bool> simulate(const std::vector<bool>& assignment) const;
};

// ASCII AIGER (aag) without latches. Symbol table and comments are skipped.
AigCircuit parse_aiger(std::istream& in);
AigCircuit parse_aiger(const std::filesystem::path& path);
void write_aiger(std::ostream& out, const AigCircuit& aig);
void write_aiger(const std::filesystem::path& path, const AigCircuit& aig);

// AND = INV(NAND), INV(x) = NAND(x, x); inverters are created only where a
// literal is actually used in that polarity. Constant literals are built from
// PI 0 as NAND(a, NAND(a, a)) = 1. Node order: PIs, NANDs, POs.
Circuit aig_to_nand(const AigCircuit& aig);

// Random AIG with ANDs over earlier literals; outputs favour late ANDs.
AigCircuit random_aig(int num_inputs, int num_ands, int num_outputs, Rng& rng);

// Subcircuit of a parent circuit. Sub node i corresponds to parent node
// origin[i] (for sub PIs, the cut node feeding them; for sub POs, the parent
// node the PO taps).
struct Subcircuit {
    Circuit circuit;
    std::vector<int> origin;
    int pivot = -1;
    std::vector<int> cut;       // parent nodes turned into sub PIs, ascending
    std::vector<int> internal;  // parent nodes copied as NANDs, ascending
    std::vector<int> outputs;   // parent nodes that drive sub POs, ascending
    bool truncated = false;     // expansion stopped at a cap
};

inline constexpr int kMaxSampleInputs = 15;
inline constexpr int kMaxSampleOutputs = 15;

// BFS over predecessors of pivot. A frontier node is expanded only while the
// cut stays within max_inputs; the pivot's own drivers always form the initial
// cut. A PO pivot is replaced by its driver. Parent PIs always stay in the cut.
Subcircuit extract_fanin(const Circuit& circuit, int pivot, int max_inputs);

// Adds nodes of the pivot's transitive fan-out whose drivers are all already
// inside the subcircuit (in topological order). Outputs are the pivot plus
// every added node without fanout inside the subcircuit; stops with
// truncated = true before the outputs would exceed max_outputs.
Subcircuit expand_fanout(const Circuit& circuit, const Subcircuit& sub, int max_outputs = kMaxSampleOutputs);

// Every internal node's parent drivers lie in internal or cut.
bool fanin_closed(const Circuit& parent, const Subcircuit& sub);

struct Sample {
    Circuit circuit;
    TruthTable table;
    std::string source;
    int pivot = -1;
    std::vector<std::string> augmentations;
};

struct DedupResult {
    std::vector<Sample> kept;
    std::map<std::string, int> seen;  // table key -> samples offered
    int dropped = 0;
};

// Keeps the first M samples of every exact truth table.
DedupResult dedup_cap(std::vector<Sample> samples, int cap);

// Permutes the ids of NAND nodes among themselves; PI and PO ids stay put.
// perm (old id -> new id) is returned when requested.
Circuit augment_shuffle(const Circuit& circuit, Rng& rng, std::vector<int>* perm = nullptr);

// Inserts ceil(ratio * N) isolated NAND nodes at random positions; existing
// nodes keep their relative order. ratio must lie in [0, 0.8].
Circuit augment_idle(const Circuit& circuit, double ratio, Rng& rng);

// Functionally equivalent alternatives for a sample circuit. The default hook
// returns none; a synthesis tool can be plugged in here.
using RewriteHook = std::function<std::vector<Circuit>(const Circuit&)>;
std::vector<Circuit> no_rewrite(const Circuit& circuit);

struct ExtractionConfig {
    int max_inputs = 8;
    int dedup_cap = 5;
    int max_pis = kMaxSampleInputs;
    int max_pos = kMaxSampleOutputs;
    double idle_ratio_min = 0.0;
    double idle_ratio_max = 0.8;
    bool shuffle = true;
    bool idle = true;
    int samples_per_shard = 1000;
    std::uint64_t seed = 0;
    RewriteHook rewrite = no_rewrite;

    void check() const;
};

struct CorpusStats {
    int files = 0;
    int failed_files = 0;
    int pivots = 0;
    int extracted = 0;
    int truncated = 0;
    int deduplicated = 0;
    int samples = 0;
    int distinct_tables = 0;
    int max_pis = 0;
    int max_pos = 0;
    std::map<int, int> pi_histogram;
    std::map<int, int> po_histogram;
    std::map<int, int> node_histogram;
    std::map<int, int> samples_per_key_histogram;
    std::vector<std::string> errors;

    std::string to_json() const;
};

struct Corpus {
    std::vector<Sample> samples;
    CorpusStats stats;
};

// Extraction over in-memory circuits: every non-PI node is a pivot.
Corpus build_corpus(const std::vector<std::pair<std::string, Circuit>>& circuits, const ExtractionConfig& config);
// Parses every aag file; unreadable files are recorded in stats.errors.
Corpus build_corpus(const std::vector<std::filesystem::path>& aig_paths, const ExtractionConfig& config);

// One JSON object per line: {"circuit": <text>, "truth": [rows], "meta": {...}}.
std::string sample_to_jsonl(const Sample& sample);
Sample sample_from_jsonl(const std::string& line);
// Writes shard-00000.jsonl, ... and stats.json; returns the shard paths.
std::vector<std::filesystem::path> write_corpus(const std::filesystem::path& dir, const Corpus& corpus,
                                                int samples_per_shard);
std::vector<Sample> read_shard(const std::filesystem::path& path);

} // namespace logicforge
