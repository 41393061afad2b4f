#include "logicforge/dag_repair.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "logicforge/errors.hpp"

namespace logicforge {

ProbabilityMatrix::ProbabilityMatrix(int n, double fill)
    : n_(n), data_(static_cast<std::size_t>(n) * n, fill) {}

ProbabilityMatrix::ProbabilityMatrix(int n, std::vector<double> row_major) : n_(n), data_(std::move(row_major)) {
    if (data_.size() != static_cast<std::size_t>(n) * n) throw ShapeError("probability matrix data is not N x N");
}

void ProbabilityMatrix::check() const {
    for (std::size_t k = 0; k < data_.size(); ++k) {
        const double p = data_[k];
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw std::invalid_argument("probability at (" + std::to_string(k / n_) + ", " +
                                        std::to_string(k % n_) + ") is outside [0, 1]");
        }
    }
}

BinaryMatrix apply_structural_rules(const ProbabilityMatrix& probs, std::span<const int> pi_ids,
                                    std::span<const int> po_ids) {
    const int n = probs.size();
    std::vector<bool> is_pi(n, false), is_po(n, false);
    for (int v : pi_ids) is_pi.at(v) = true;
    for (int v : po_ids) is_po.at(v) = true;
    BinaryMatrix out(n, std::vector<std::uint8_t>(n, 0));
    for (int i = 0; i < n; ++i) {
        if (is_po[i]) continue;
        for (int j = 0; j < n; ++j) {
            if (i == j || is_pi[j]) continue;
            out[i][j] = probs(i, j) > 0.5 ? 1 : 0;
        }
    }
    return out;
}

std::vector<int> detect_cycle(const BinaryMatrix& adjacency) {
    const int n = static_cast<int>(adjacency.size());
    enum : std::uint8_t { kWhite, kGray, kBlack };
    std::vector<std::uint8_t> color(n, kWhite);
    // Explicit stack of (node, next child to try); path == stack nodes.
    std::vector<std::pair<int, int>> stack;
    for (int root = 0; root < n; ++root) {
        if (color[root] != kWhite) continue;
        stack.push_back({root, 0});
        color[root] = kGray;
        while (!stack.empty()) {
            auto& [v, next] = stack.back();
            const auto& row = adjacency[v];
            while (next < n && !row[next]) ++next;
            if (next == n) {
                color[v] = kBlack;
                stack.pop_back();
                continue;
            }
            const int w = next++;
            if (color[w] == kGray) {
                std::vector<int> cycle;
                std::size_t k = stack.size();
                while (stack[k - 1].first != w) --k;
                for (std::size_t i = k - 1; i < stack.size(); ++i) cycle.push_back(stack[i].first);
                return cycle;
            }
            if (color[w] == kWhite) {
                color[w] = kGray;
                stack.push_back({w, 0});
            }
        }
    }
    return {};
}

bool is_acyclic(const BinaryMatrix& adjacency) { return detect_cycle(adjacency).empty(); }

ProbabilityMatrix masked_probabilities(const BinaryMatrix& adjacency, const ProbabilityMatrix& probs) {
    const int n = probs.size();
    if (static_cast<int>(adjacency.size()) != n) throw ShapeError("mask and probability matrix sizes differ");
    ProbabilityMatrix out(n);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(adjacency[i].size()) != n) throw ShapeError("mask is not square");
        for (int j = 0; j < n; ++j) out(i, j) = adjacency[i][j] ? probs(i, j) : 0.0;
    }
    return out;
}

std::vector<std::vector<int>> fanin_lists(const BinaryMatrix& adjacency) {
    const int n = static_cast<int>(adjacency.size());
    std::vector<std::vector<int>> fanins(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (adjacency[i][j]) fanins[j].push_back(i);
    return fanins;
}

RepairResult dag_search(const ProbabilityMatrix& probs, std::span<const int> pi_ids, std::span<const int> po_ids) {
    probs.check();
    RepairResult result;
    result.adjacency = apply_structural_rules(probs, pi_ids, po_ids);
    auto& adj = result.adjacency;
    for (auto cycle = detect_cycle(adj); !cycle.empty(); cycle = detect_cycle(adj)) {
        double lowest = std::numeric_limits<double>::infinity();
        int src = -1, dst = -1;
        for (std::size_t i = 0; i < cycle.size(); ++i) {
            const int j = cycle[i];
            const int k = cycle[(i + 1) % cycle.size()];
            if (probs(j, k) < lowest) {
                lowest = probs(j, k);
                src = j;
                dst = k;
            }
        }
        adj[src][dst] = 0;
        result.removed_edges.push_back({src, dst, lowest});
    }
    result.masked = masked_probabilities(adj, probs);

    // Report POs that lost every path from a PI; the DAS initializer decides
    // what to do with them.
    const int n = probs.size();
    std::vector<bool> reach(n, false);
    std::vector<int> work(pi_ids.begin(), pi_ids.end());
    for (int v : work) reach[v] = true;
    while (!work.empty()) {
        int v = work.back();
        work.pop_back();
        for (int w = 0; w < n; ++w)
            if (adj[v][w] && !reach[w]) {
                reach[w] = true;
                work.push_back(w);
            }
    }
    for (int po : po_ids) {
        int indeg = 0;
        for (int i = 0; i < n; ++i) indeg += adj[i][po];
        if (indeg == 0) result.diagnostics.push_back("PO " + std::to_string(po) + " has no driver");
        else if (!reach[po]) result.diagnostics.push_back("PO " + std::to_string(po) + " is unreachable from every PI");
    }
    return result;
}

void write_probability_matrix(std::ostream& out, const ProbabilityMatrix& probs, std::span<const NodeKind> kinds) {
    const int n = probs.size();
    out << "pmatrix " << n << '\n';
    if (!kinds.empty()) {
        out << "kinds";
        for (NodeKind k : kinds) out << ' ' << to_string(k);
        out << '\n';
    }
    out << std::setprecision(17);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) out << (j ? "," : "") << probs(i, j);
        out << '\n';
    }
}

LoadedProbabilityMatrix read_probability_matrix(std::istream& in) {
    std::string line;
    int line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
        }
        return false;
    };
    if (!next_line()) throw ParseError("missing pmatrix header");
    std::istringstream header(line);
    std::string tag;
    int n = -1;
    if (!(header >> tag >> n) || tag != "pmatrix" || n < 0) throw ParseError("expected 'pmatrix <N>'", line_no);

    LoadedProbabilityMatrix out;
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(n) * n);
    int rows = 0;
    while (next_line()) {
        if (rows == 0 && out.kinds.empty() && line.rfind("kinds", 0) == 0) {
            std::istringstream fields(line.substr(5));
            std::string k;
            while (fields >> k) {
                try {
                    out.kinds.push_back(parse_node_kind(k));
                } catch (const ParseError& e) {
                    throw ParseError(e.what(), line_no);
                }
            }
            if (static_cast<int>(out.kinds.size()) != n) throw ParseError("kinds line must list N kinds", line_no);
            continue;
        }
        for (char& c : line)
            if (c == ',') c = ' ';
        std::istringstream fields(line);
        int cols = 0;
        double v;
        while (fields >> v) {
            if (!(v >= 0.0 && v <= 1.0)) throw ParseError("probability outside [0, 1]", line_no);
            data.push_back(v);
            ++cols;
        }
        if (!fields.eof()) throw ParseError("non-numeric entry", line_no);
        if (cols != n) throw ParseError("row has " + std::to_string(cols) + " entries, expected " + std::to_string(n), line_no);
        ++rows;
    }
    if (rows != n) throw ParseError("expected " + std::to_string(n) + " rows, found " + std::to_string(rows));
    out.probs = ProbabilityMatrix(n, std::move(data));
    return out;
}

void write_probability_matrix(const std::filesystem::path& path, const ProbabilityMatrix& probs,
                              std::span<const NodeKind> kinds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_probability_matrix(out, probs, kinds);
}

LoadedProbabilityMatrix read_probability_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return read_probability_matrix(in);
}

std::vector<NodeKind> default_node_kinds(int num_nodes, int num_pis, int num_pos) {
    if (num_nodes < num_pis + num_pos) {
        throw std::invalid_argument("node budget " + std::to_string(num_nodes) + " is below #PI + #PO = " +
                                    std::to_string(num_pis + num_pos));
    }
    std::vector<NodeKind> kinds(num_nodes, NodeKind::NAND);
    for (int i = 0; i < num_pis; ++i) kinds[i] = NodeKind::PI;
    for (int i = 0; i < num_pos; ++i) kinds[num_nodes - 1 - i] = NodeKind::PO;
    return kinds;
}

} // namespace logicforge
