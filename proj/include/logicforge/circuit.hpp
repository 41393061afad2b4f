#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace logicforge {

enum class NodeKind : std::uint8_t { PI, PO, NAND };

std::string_view to_string(NodeKind kind);
NodeKind parse_node_kind(std::string_view text);

struct Edge {
    int src = 0;
    int dst = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Typed DAG of PI/PO/NAND nodes. Edges are kept as sorted fanin/fanout
// lists; the binary adjacency matrix is available on demand.
//
// Construction does not enforce circuit rules (so that broken circuits can be
// represented and reported); use validate() or require_valid() for that.
class Circuit {
public:
    Circuit() = default;
    explicit Circuit(std::vector<NodeKind> kinds);
    Circuit(std::vector<NodeKind> kinds, std::span<const Edge> edges);

    int add_node(NodeKind kind);
    // Throws std::out_of_range for bad ids; duplicate edges are ignored.
    void add_edge(int src, int dst);
    bool has_edge(int src, int dst) const;

    int size() const { return static_cast<int>(kinds_.size()); }
    NodeKind kind(int node) const { return kinds_.at(node); }
    const std::vector<NodeKind>& kinds() const { return kinds_; }
    const std::vector<int>& fanins(int node) const { return fanins_.at(node); }
    const std::vector<int>& fanouts(int node) const { return fanouts_.at(node); }

    // PI and PO ids in ascending node-id order; position k is PI/PO number k.
    const std::vector<int>& pi_ids() const { return pis_; }
    const std::vector<int>& po_ids() const { return pos_; }
    int num_pis() const { return static_cast<int>(pis_.size()); }
    int num_pos() const { return static_cast<int>(pos_.size()); }
    int num_nands() const { return size() - num_pis() - num_pos(); }

    std::vector<Edge> edges() const;
    std::size_t num_edges() const;
    std::vector<std::vector<std::uint8_t>> adjacency_matrix() const;

    // Same kinds, same edge set.
    friend bool operator==(const Circuit& a, const Circuit& b) {
        return a.kinds_ == b.kinds_ && a.fanins_ == b.fanins_;
    }

private:
    std::vector<NodeKind> kinds_;
    std::vector<std::vector<int>> fanins_;
    std::vector<std::vector<int>> fanouts_;
    std::vector<int> pis_;
    std::vector<int> pos_;
};

// Node v of the input becomes node new_id[v]; new_id must be a permutation.
Circuit relabel(const Circuit& circuit, std::span<const int> new_id);

// Permutation placing PIs first (in PI order), NANDs next in topological
// order, POs last (in PO order). Requires an acyclic circuit.
std::vector<int> canonical_order(const Circuit& circuit);
Circuit canonicalize(const Circuit& circuit);

struct Violation {
    std::string rule;
    std::vector<int> nodes;
};

std::vector<Violation> validate(const Circuit& circuit);
// Throws ValidationError listing every violation.
void require_valid(const Circuit& circuit);

// Topological order (Kahn, smallest ready id first). Empty optional-like
// result is signalled by a shorter vector when the graph has a cycle.
std::vector<int> topological_order(const Circuit& circuit);

// Evaluates the circuit on one assignment; assignment[k] drives PI k.
std::vector<bool> simulate(const Circuit& circuit, const std::vector<bool>& assignment);

inline constexpr int kMaxTruthTableInputs = 20;

// Per-output bitvectors over all 2^num_inputs rows. Row r assigns bit k of r
// to PI k (PI 0 is the least-significant bit).
class TruthTable {
public:
    TruthTable() = default;
    TruthTable(int num_inputs, int num_outputs);

    int num_inputs() const { return num_inputs_; }
    int num_outputs() const { return static_cast<int>(columns_.size()); }
    std::size_t num_rows() const { return std::size_t{1} << num_inputs_; }

    bool bit(int output, std::size_t row) const {
        return (columns_[output][row >> 6] >> (row & 63)) & 1U;
    }
    void set_bit(int output, std::size_t row, bool value);

    std::span<const std::uint64_t> words(int output) const { return columns_.at(output); }
    std::span<std::uint64_t> mutable_words(int output) { return columns_.at(output); }

    // Character r is the output at row r.
    std::string row_string(int output) const;
    static TruthTable from_strings(const std::vector<std::string>& lines);

    // Exact byte key: dimensions followed by the packed words.
    std::string key() const;

    friend bool operator==(const TruthTable&, const TruthTable&) = default;

private:
    int num_inputs_ = 0;
    std::vector<std::vector<std::uint64_t>> columns_;
};

// Throws SizeError when the circuit has more than kMaxTruthTableInputs PIs.
TruthTable truth_table(const Circuit& circuit);

struct Layering {
    std::vector<std::vector<int>> layers;
    std::vector<int> layer_of;  // indexed by node id

    int num_layers() const { return static_cast<int>(layers.size()); }
    std::vector<int> widths() const;
};

// Longest-path layering over an arbitrary acyclic adjacency with node kinds.
// PIs sit in layer 0, POs in a dedicated final layer, and a non-PI node with
// no fanin (idle) in layer 1.
Layering layerize(std::span<const NodeKind> kinds, const std::vector<std::vector<int>>& fanins);
Layering layerize(const Circuit& circuit);

// Text formats.
void write_circuit(std::ostream& out, const Circuit& circuit);
std::string circuit_to_string(const Circuit& circuit);
Circuit read_circuit(std::istream& in);
Circuit circuit_from_string(std::string_view text);
void write_circuit(const std::filesystem::path& path, const Circuit& circuit);
Circuit read_circuit(const std::filesystem::path& path);

void write_truth_table(std::ostream& out, const TruthTable& table);
TruthTable read_truth_table(std::istream& in);
void write_truth_table(const std::filesystem::path& path, const TruthTable& table);
TruthTable read_truth_table(const std::filesystem::path& path);

} // namespace logicforge
