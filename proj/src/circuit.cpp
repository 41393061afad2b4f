#include "logicforge/circuit.hpp"

#include <algorithm>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "logicforge/errors.hpp"

namespace logicforge {

std::string_view to_string(NodeKind kind) {
    switch (kind) {
    case NodeKind::PI: return "PI";
    case NodeKind::PO: return "PO";
    case NodeKind::NAND: return "NAND";
    }
    return "?";
}

NodeKind parse_node_kind(std::string_view text) {
    if (text == "PI") return NodeKind::PI;
    if (text == "PO") return NodeKind::PO;
    if (text == "NAND") return NodeKind::NAND;
    throw ParseError("unknown node kind '" + std::string(text) + "'");
}

Circuit::Circuit(std::vector<NodeKind> kinds) {
    for (NodeKind k : kinds) add_node(k);
}

Circuit::Circuit(std::vector<NodeKind> kinds, std::span<const Edge> edges) : Circuit(std::move(kinds)) {
    for (const Edge& e : edges) add_edge(e.src, e.dst);
}

int Circuit::add_node(NodeKind kind) {
    const int id = size();
    kinds_.push_back(kind);
    fanins_.emplace_back();
    fanouts_.emplace_back();
    if (kind == NodeKind::PI) pis_.push_back(id);
    if (kind == NodeKind::PO) pos_.push_back(id);
    return id;
}

void Circuit::add_edge(int src, int dst) {
    if (src < 0 || src >= size() || dst < 0 || dst >= size()) {
        throw std::out_of_range("edge " + std::to_string(src) + "->" + std::to_string(dst) +
                                " outside node range");
    }
    auto& in = fanins_[dst];
    auto it = std::lower_bound(in.begin(), in.end(), src);
    if (it != in.end() && *it == src) return;
    in.insert(it, src);
    auto& out = fanouts_[src];
    out.insert(std::lower_bound(out.begin(), out.end(), dst), dst);
}

bool Circuit::has_edge(int src, int dst) const {
    const auto& in = fanins_.at(dst);
    return std::binary_search(in.begin(), in.end(), src);
}

std::vector<Edge> Circuit::edges() const {
    std::vector<Edge> out;
    for (int s = 0; s < size(); ++s)
        for (int d : fanouts_[s]) out.push_back({s, d});
    return out;
}

std::size_t Circuit::num_edges() const {
    std::size_t n = 0;
    for (const auto& f : fanins_) n += f.size();
    return n;
}

std::vector<std::vector<std::uint8_t>> Circuit::adjacency_matrix() const {
    std::vector<std::vector<std::uint8_t>> a(size(), std::vector<std::uint8_t>(size(), 0));
    for (int s = 0; s < size(); ++s)
        for (int d : fanouts_[s]) a[s][d] = 1;
    return a;
}

std::vector<int> topological_order(const Circuit& circuit) {
    const int n = circuit.size();
    std::vector<int> indeg(n);
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (int v = 0; v < n; ++v) {
        indeg[v] = static_cast<int>(circuit.fanins(v).size());
        if (indeg[v] == 0) ready.push(v);
    }
    std::vector<int> order;
    order.reserve(n);
    while (!ready.empty()) {
        int v = ready.top();
        ready.pop();
        order.push_back(v);
        for (int w : circuit.fanouts(v))
            if (--indeg[w] == 0) ready.push(w);
    }
    return order;
}

std::vector<Violation> validate(const Circuit& circuit) {
    std::vector<Violation> out;
    std::vector<int> self_loops, pi_in, po_out, po_in, nand_in;
    for (int v = 0; v < circuit.size(); ++v) {
        const auto indeg = circuit.fanins(v).size();
        const auto outdeg = circuit.fanouts(v).size();
        if (circuit.has_edge(v, v)) self_loops.push_back(v);
        switch (circuit.kind(v)) {
        case NodeKind::PI:
            if (indeg > 0) pi_in.push_back(v);
            break;
        case NodeKind::PO:
            if (outdeg > 0) po_out.push_back(v);
            if (indeg != 1) po_in.push_back(v);
            break;
        case NodeKind::NAND:
            // indegree 0 marks an idle gate, which is allowed
            if (indeg > 2) nand_in.push_back(v);
            break;
        }
    }
    if (!self_loops.empty()) out.push_back({"self-loop", self_loops});
    if (!pi_in.empty()) out.push_back({"PI indegree > 0", pi_in});
    if (!po_out.empty()) out.push_back({"PO outdegree > 0", po_out});
    if (!po_in.empty()) out.push_back({"PO indegree != 1", po_in});
    if (!nand_in.empty()) out.push_back({"NAND indegree > 2", nand_in});

    const auto order = topological_order(circuit);
    if (static_cast<int>(order.size()) != circuit.size()) {
        std::vector<bool> seen(circuit.size(), false);
        for (int v : order) seen[v] = true;
        std::vector<int> stuck;
        for (int v = 0; v < circuit.size(); ++v)
            if (!seen[v]) stuck.push_back(v);
        out.push_back({"cycle detected", stuck});
    }
    return out;
}

void require_valid(const Circuit& circuit) {
    const auto violations = validate(circuit);
    if (violations.empty()) return;
    std::ostringstream msg;
    msg << "invalid circuit:";
    for (const auto& v : violations) {
        msg << " [" << v.rule << ":";
        for (int n : v.nodes) msg << ' ' << n;
        msg << ']';
    }
    throw ValidationError(msg.str());
}

namespace {

// Word-parallel evaluation: values[v] holds one bit per row.
std::vector<std::vector<std::uint64_t>> evaluate_words(const Circuit& circuit,
                                                       const std::vector<std::vector<std::uint64_t>>& pi_words,
                                                       std::size_t num_words) {
    const auto order = topological_order(circuit);
    std::vector<std::vector<std::uint64_t>> values(circuit.size());
    for (int k = 0; k < circuit.num_pis(); ++k) values[circuit.pi_ids()[k]] = pi_words[k];
    for (int v : order) {
        const auto& in = circuit.fanins(v);
        switch (circuit.kind(v)) {
        case NodeKind::PI: break;
        case NodeKind::PO: values[v] = values[in.front()]; break;
        case NodeKind::NAND: {
            auto& out = values[v];
            out.assign(num_words, ~std::uint64_t{0});
            if (in.empty()) break;  // idle gate; never observed by a valid PO path
            const auto& a = values[in[0]];
            const auto& b = values[in.size() > 1 ? in[1] : in[0]];
            for (std::size_t w = 0; w < num_words; ++w) out[w] = ~(a[w] & b[w]);
            break;
        }
        }
    }
    return values;
}

} // namespace

std::vector<bool> simulate(const Circuit& circuit, const std::vector<bool>& assignment) {
    require_valid(circuit);
    if (static_cast<int>(assignment.size()) != circuit.num_pis()) {
        throw ShapeError("assignment has " + std::to_string(assignment.size()) + " bits, circuit has " +
                         std::to_string(circuit.num_pis()) + " PIs");
    }
    std::vector<std::vector<std::uint64_t>> pi_words(circuit.num_pis());
    for (int k = 0; k < circuit.num_pis(); ++k) pi_words[k] = {assignment[k] ? ~std::uint64_t{0} : 0};
    const auto values = evaluate_words(circuit, pi_words, 1);
    std::vector<bool> out;
    for (int po : circuit.po_ids()) out.push_back(values[po][0] & 1U);
    return out;
}

TruthTable::TruthTable(int num_inputs, int num_outputs) : num_inputs_(num_inputs) {
    if (num_inputs < 0 || num_inputs > kMaxTruthTableInputs) {
        throw SizeError("truth table with " + std::to_string(num_inputs) + " inputs exceeds the guard of " +
                        std::to_string(kMaxTruthTableInputs));
    }
    const std::size_t words = (num_rows() + 63) / 64;
    columns_.assign(num_outputs, std::vector<std::uint64_t>(words, 0));
}

void TruthTable::set_bit(int output, std::size_t row, bool value) {
    auto& w = columns_.at(output).at(row >> 6);
    const std::uint64_t mask = std::uint64_t{1} << (row & 63);
    w = value ? (w | mask) : (w & ~mask);
}

std::string TruthTable::row_string(int output) const {
    std::string s(num_rows(), '0');
    for (std::size_t r = 0; r < num_rows(); ++r)
        if (bit(output, r)) s[r] = '1';
    return s;
}

TruthTable TruthTable::from_strings(const std::vector<std::string>& lines) {
    if (lines.empty()) throw ParseError("truth table has no output lines");
    const std::size_t len = lines.front().size();
    int inputs = 0;
    while ((std::size_t{1} << inputs) < len) ++inputs;
    if (len == 0 || (std::size_t{1} << inputs) != len) {
        throw ParseError("truth table row length " + std::to_string(len) + " is not a power of two", 1);
    }
    TruthTable t(inputs, static_cast<int>(lines.size()));
    for (std::size_t o = 0; o < lines.size(); ++o) {
        if (lines[o].size() != len) {
            throw ParseError("truth table lines have different lengths", static_cast<int>(o) + 1);
        }
        for (std::size_t r = 0; r < len; ++r) {
            const char c = lines[o][r];
            if (c != '0' && c != '1') throw ParseError("truth table character must be 0 or 1", static_cast<int>(o) + 1);
            t.set_bit(static_cast<int>(o), r, c == '1');
        }
    }
    return t;
}

std::string TruthTable::key() const {
    std::string k;
    k.append(reinterpret_cast<const char*>(&num_inputs_), sizeof(num_inputs_));
    const int outs = num_outputs();
    k.append(reinterpret_cast<const char*>(&outs), sizeof(outs));
    for (const auto& col : columns_)
        k.append(reinterpret_cast<const char*>(col.data()), col.size() * sizeof(std::uint64_t));
    return k;
}

TruthTable truth_table(const Circuit& circuit) {
    require_valid(circuit);
    if (circuit.num_pis() > kMaxTruthTableInputs) {
        throw SizeError("circuit has " + std::to_string(circuit.num_pis()) + " PIs; truth tables are limited to " +
                        std::to_string(kMaxTruthTableInputs));
    }
    TruthTable table(circuit.num_pis(), circuit.num_pos());
    const std::size_t rows = table.num_rows();
    const std::size_t words = (rows + 63) / 64;
    std::vector<std::vector<std::uint64_t>> pi_words(circuit.num_pis(), std::vector<std::uint64_t>(words, 0));
    for (int k = 0; k < circuit.num_pis(); ++k)
        for (std::size_t r = 0; r < rows; ++r)
            if ((r >> k) & 1U) pi_words[k][r >> 6] |= std::uint64_t{1} << (r & 63);
    const auto values = evaluate_words(circuit, pi_words, words);
    const std::uint64_t tail = rows % 64 == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << (rows % 64)) - 1;
    for (int o = 0; o < circuit.num_pos(); ++o) {
        auto dst = table.mutable_words(o);
        const auto& src = values[circuit.po_ids()[o]];
        std::copy(src.begin(), src.end(), dst.begin());
        dst.back() &= tail;
    }
    return table;
}

std::vector<int> Layering::widths() const {
    std::vector<int> w;
    for (const auto& l : layers) w.push_back(static_cast<int>(l.size()));
    return w;
}

Layering layerize(std::span<const NodeKind> kinds, const std::vector<std::vector<int>>& fanins) {
    const int n = static_cast<int>(kinds.size());
    std::vector<int> indeg(n, 0);
    std::vector<std::vector<int>> fanouts(n);
    for (int v = 0; v < n; ++v) {
        indeg[v] = static_cast<int>(fanins[v].size());
        for (int u : fanins[v]) fanouts[u].push_back(v);
    }
    std::vector<int> depth(n, 0);
    std::vector<int> stack;
    for (int v = n - 1; v >= 0; --v)
        if (indeg[v] == 0) stack.push_back(v);
    int visited = 0;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        ++visited;
        if (kinds[v] != NodeKind::PI) {
            int d = 0;
            for (int u : fanins[v]) d = std::max(d, depth[u]);
            depth[v] = d + 1;
        }
        for (int w : fanouts[v])
            if (--indeg[w] == 0) stack.push_back(w);
    }
    if (visited != n) throw ValidationError("cannot layer a graph with a cycle");

    int inner = 0;
    for (int v = 0; v < n; ++v)
        if (kinds[v] != NodeKind::PO) inner = std::max(inner, depth[v]);
    Layering out;
    out.layers.resize(inner + 2);
    out.layer_of.assign(n, 0);
    for (int v = 0; v < n; ++v) {
        const int l = kinds[v] == NodeKind::PO ? inner + 1 : depth[v];
        out.layer_of[v] = l;
        out.layers[l].push_back(v);
    }
    // A circuit without NAND gates has an empty middle layer when a PO taps a PI.
    std::erase_if(out.layers, [](const auto& l) { return l.empty(); });
    for (int l = 0; l < out.num_layers(); ++l)
        for (int v : out.layers[l]) out.layer_of[v] = l;
    return out;
}

Layering layerize(const Circuit& circuit) {
    require_valid(circuit);
    std::vector<std::vector<int>> fanins(circuit.size());
    for (int v = 0; v < circuit.size(); ++v) fanins[v] = circuit.fanins(v);
    return layerize(circuit.kinds(), fanins);
}

Circuit relabel(const Circuit& circuit, std::span<const int> new_id) {
    const int n = circuit.size();
    if (static_cast<int>(new_id.size()) != n) throw std::invalid_argument("relabel: permutation size mismatch");
    std::vector<NodeKind> kinds(n);
    std::vector<char> seen(n, 0);
    for (int v = 0; v < n; ++v) {
        const int w = new_id[v];
        if (w < 0 || w >= n || seen[w]) throw std::invalid_argument("relabel: not a permutation");
        seen[w] = 1;
        kinds[w] = circuit.kind(v);
    }
    std::vector<Edge> edges;
    for (const Edge& e : circuit.edges()) edges.push_back({new_id[e.src], new_id[e.dst]});
    return Circuit(std::move(kinds), edges);
}

std::vector<int> canonical_order(const Circuit& circuit) {
    const auto topo = topological_order(circuit);
    if (static_cast<int>(topo.size()) != circuit.size()) throw ValidationError("canonical_order: circuit has a cycle");
    std::vector<int> new_id(circuit.size());
    int next = 0;
    for (int v : circuit.pi_ids()) new_id[v] = next++;
    for (int v : topo)
        if (circuit.kind(v) == NodeKind::NAND) new_id[v] = next++;
    for (int v : circuit.po_ids()) new_id[v] = next++;
    return new_id;
}

Circuit canonicalize(const Circuit& circuit) { return relabel(circuit, canonical_order(circuit)); }

} // namespace logicforge
