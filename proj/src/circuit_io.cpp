#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "logicforge/circuit.hpp"
#include "logicforge/errors.hpp"

namespace logicforge {

namespace {

bool is_skippable(const std::string& line) {
    const auto p = line.find_first_not_of(" \t\r");
    return p == std::string::npos || line[p] == '#';
}

template <typename T>
T expect_field(std::istringstream& in, int line_no, const char* what) {
    T value{};
    if (!(in >> value)) throw ParseError(std::string("expected ") + what, line_no);
    return value;
}

void expect_end(std::istringstream& in, int line_no) {
    std::string extra;
    if (in >> extra) throw ParseError("unexpected trailing token '" + extra + "'", line_no);
}

} // namespace

void write_circuit(std::ostream& out, const Circuit& circuit) {
    out << "circuit " << circuit.size() << ' ' << circuit.num_pis() << ' ' << circuit.num_pos() << '\n';
    for (int v = 0; v < circuit.size(); ++v) out << "node " << v << ' ' << to_string(circuit.kind(v)) << '\n';
    for (const Edge& e : circuit.edges()) out << "edge " << e.src << ' ' << e.dst << '\n';
}

std::string circuit_to_string(const Circuit& circuit) {
    std::ostringstream out;
    write_circuit(out, circuit);
    return out.str();
}

Circuit read_circuit(std::istream& in) {
    std::string line;
    int line_no = 0;
    int n = -1, num_pi = 0, num_po = 0;
    std::vector<NodeKind> kinds;
    std::vector<bool> declared;
    std::vector<std::pair<Edge, int>> edges;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_skippable(line)) continue;
        std::istringstream fields(line);
        std::string tag;
        fields >> tag;
        if (n < 0) {
            if (tag != "circuit") throw ParseError("expected header 'circuit <N> <num_pi> <num_po>'", line_no);
            n = expect_field<int>(fields, line_no, "node count");
            num_pi = expect_field<int>(fields, line_no, "PI count");
            num_po = expect_field<int>(fields, line_no, "PO count");
            expect_end(fields, line_no);
            if (n < 0 || num_pi < 0 || num_po < 0 || num_pi + num_po > n)
                throw ParseError("inconsistent header counts", line_no);
            kinds.assign(n, NodeKind::NAND);
            declared.assign(n, false);
        } else if (tag == "node") {
            const int id = expect_field<int>(fields, line_no, "node id");
            const auto kind_text = expect_field<std::string>(fields, line_no, "node kind");
            expect_end(fields, line_no);
            if (id < 0 || id >= n) throw ParseError("node id " + std::to_string(id) + " out of range", line_no);
            if (declared[id]) throw ParseError("node " + std::to_string(id) + " declared twice", line_no);
            try {
                kinds[id] = parse_node_kind(kind_text);
            } catch (const ParseError& e) {
                throw ParseError(e.what(), line_no);
            }
            declared[id] = true;
        } else if (tag == "edge") {
            const int src = expect_field<int>(fields, line_no, "edge source");
            const int dst = expect_field<int>(fields, line_no, "edge target");
            expect_end(fields, line_no);
            if (src < 0 || src >= n || dst < 0 || dst >= n)
                throw ParseError("dangling edge " + std::to_string(src) + " -> " + std::to_string(dst), line_no);
            edges.push_back({{src, dst}, line_no});
        } else {
            throw ParseError("unknown record '" + tag + "'", line_no);
        }
    }
    if (n < 0) throw ParseError("missing circuit header");
    for (int v = 0; v < n; ++v)
        if (!declared[v]) throw ParseError("node " + std::to_string(v) + " never declared");
    Circuit c(kinds);
    if (c.num_pis() != num_pi || c.num_pos() != num_po) throw ParseError("PI/PO counts disagree with header");
    for (const auto& [e, ln] : edges) {
        if (c.has_edge(e.src, e.dst)) throw ParseError("duplicate edge", ln);
        c.add_edge(e.src, e.dst);
    }
    return c;
}

Circuit circuit_from_string(std::string_view text) {
    std::istringstream in{std::string(text)};
    return read_circuit(in);
}

void write_circuit(const std::filesystem::path& path, const Circuit& circuit) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_circuit(out, circuit);
}

Circuit read_circuit(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return read_circuit(in);
}

void write_truth_table(std::ostream& out, const TruthTable& table) {
    for (int o = 0; o < table.num_outputs(); ++o) out << table.row_string(o) << '\n';
}

TruthTable read_truth_table(std::istream& in) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
        if (line.empty()) continue;
        lines.push_back(line);
    }
    return TruthTable::from_strings(lines);
}

void write_truth_table(const std::filesystem::path& path, const TruthTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_truth_table(out, table);
}

TruthTable read_truth_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return read_truth_table(in);
}

} // namespace logicforge
