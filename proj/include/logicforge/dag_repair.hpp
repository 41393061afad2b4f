#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "logicforge/circuit.hpp"

namespace logicforge {

// Dense N x N matrix of edge probabilities in [0, 1]; entry (i, j) is the
// probability of a directed edge i -> j.
class ProbabilityMatrix {
public:
    ProbabilityMatrix() = default;
    explicit ProbabilityMatrix(int n, double fill = 0.0);
    ProbabilityMatrix(int n, std::vector<double> row_major);

    int size() const { return n_; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * n_ + j]; }
    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * n_ + j]; }
    std::span<const double> data() const { return data_; }

    // Throws ShapeError / std::invalid_argument on non-finite or out-of-range entries.
    void check() const;

    friend bool operator==(const ProbabilityMatrix&, const ProbabilityMatrix&) = default;

private:
    int n_ = 0;
    std::vector<double> data_;
};

using BinaryMatrix = std::vector<std::vector<std::uint8_t>>;

struct RemovedEdge {
    int src = 0;
    int dst = 0;
    double probability = 0.0;
};

struct RepairResult {
    BinaryMatrix adjacency;        // acyclic
    ProbabilityMatrix masked;      // adjacency (elementwise) probabilities
    std::vector<RemovedEdge> removed_edges;
    std::vector<std::string> diagnostics;
};

// Thresholds at > 0.5 and drops PO out-edges, PI in-edges and self-loops.
BinaryMatrix apply_structural_rules(const ProbabilityMatrix& probs, std::span<const int> pi_ids,
                                    std::span<const int> po_ids);

// DFS from nodes in ascending id order, children in ascending id order.
// Returns the nodes of the first cycle found, ordered along its edges, or an
// empty vector for an acyclic graph.
std::vector<int> detect_cycle(const BinaryMatrix& adjacency);

// Greedy repair: remove the lowest-probability edge of each detected cycle
// until none remain. On equal probabilities the first edge along the cycle goes.
RepairResult dag_search(const ProbabilityMatrix& probs, std::span<const int> pi_ids, std::span<const int> po_ids);

ProbabilityMatrix masked_probabilities(const BinaryMatrix& adjacency, const ProbabilityMatrix& probs);

bool is_acyclic(const BinaryMatrix& adjacency);

// Node kinds and fanin lists for a repaired adjacency, for layering.
std::vector<std::vector<int>> fanin_lists(const BinaryMatrix& adjacency);

// `pmatrix <N>` header, optional `kinds K0 K1 ...` line, then N rows of N
// comma-separated values.
void write_probability_matrix(std::ostream& out, const ProbabilityMatrix& probs,
                              std::span<const NodeKind> kinds = {});
struct LoadedProbabilityMatrix {
    ProbabilityMatrix probs;
    std::vector<NodeKind> kinds;  // empty when the file has no kinds line
};
LoadedProbabilityMatrix read_probability_matrix(std::istream& in);
void write_probability_matrix(const std::filesystem::path& path, const ProbabilityMatrix& probs,
                              std::span<const NodeKind> kinds = {});
LoadedProbabilityMatrix read_probability_matrix(const std::filesystem::path& path);

// Kinds for a generated node budget: PIs first, POs last, NAND gates between.
std::vector<NodeKind> default_node_kinds(int num_nodes, int num_pis, int num_pos);

} // namespace logicforge
