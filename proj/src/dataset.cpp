#include "logicforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "logicforge/errors.hpp"

namespace logicforge {

namespace {

// ANDs in dependency order; throws ParseError on a combinational loop.
std::vector<int> and_order(const AigCircuit& aig) {
    std::unordered_map<unsigned, int> by_var;
    for (int i = 0; i < static_cast<int>(aig.ands.size()); ++i) by_var[aig.ands[i].lhs >> 1] = i;
    std::vector<int> order, state(aig.ands.size(), 0);
    for (int root = 0; root < static_cast<int>(aig.ands.size()); ++root) {
        if (state[root]) continue;
        std::vector<std::pair<int, int>> stack{{root, 0}};
        state[root] = 1;
        while (!stack.empty()) {
            auto& [a, k] = stack.back();
            if (k < 2) {
                const unsigned lit = k == 0 ? aig.ands[a].rhs0 : aig.ands[a].rhs1;
                ++k;
                auto it = by_var.find(lit >> 1);
                if (it == by_var.end()) continue;
                if (state[it->second] == 1) throw ParseError("AIG contains a combinational cycle");
                if (state[it->second] == 0) {
                    state[it->second] = 1;
                    stack.push_back({it->second, 0});
                }
                continue;
            }
            state[a] = 2;
            order.push_back(a);
            stack.pop_back();
        }
    }
    return order;
}

std::string next_content_line(std::istream& in, int& line_no) {
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") != std::string::npos) return line;
    }
    throw ParseError("unexpected end of file", line_no + 1);
}

std::vector<unsigned> parse_literals(const std::string& line, std::size_t count, int line_no) {
    std::istringstream ss(line);
    std::vector<unsigned> out;
    long long v;
    while (ss >> v) {
        if (v < 0) throw ParseError("negative literal", line_no);
        out.push_back(static_cast<unsigned>(v));
    }
    if (!ss.eof()) throw ParseError("non-numeric token", line_no);
    if (out.size() != count)
        throw ParseError("expected " + std::to_string(count) + " literal(s), got " + std::to_string(out.size()), line_no);
    return out;
}

} // namespace

std::vector<bool> AigCircuit::simulate(const std::vector<bool>& assignment) const {
    if (assignment.size() != inputs.size()) throw std::invalid_argument("AIG assignment size mismatch");
    std::vector<char> value(max_var + 1, 0);
    for (std::size_t i = 0; i < inputs.size(); ++i) value[inputs[i] >> 1] = assignment[i];
    auto lit = [&](unsigned l) { return static_cast<bool>(value[l >> 1]) != static_cast<bool>(l & 1U); };
    for (int a : and_order(*this)) value[ands[a].lhs >> 1] = lit(ands[a].rhs0) && lit(ands[a].rhs1);
    std::vector<bool> out;
    for (unsigned o : outputs) out.push_back(lit(o));
    return out;
}

AigCircuit parse_aiger(std::istream& in) {
    int line_no = 0;
    std::istringstream header(next_content_line(in, line_no));
    std::string magic;
    header >> magic;
    if (magic != "aag") throw ParseError(magic == "aig" ? "binary AIGER is not supported" : "missing 'aag' header", line_no);
    std::vector<long long> counts;
    long long v;
    while (header >> v) counts.push_back(v);
    if (!header.eof() || counts.size() < 5) throw ParseError("header must be 'aag M I L O A'", line_no);
    for (std::size_t k = 5; k < counts.size(); ++k)
        if (counts[k] != 0) throw ParseError("AIGER 1.9 sections (bad/constraint/justice/fairness) are not supported", line_no);
    for (long long c : counts)
        if (c < 0) throw ParseError("negative header count", line_no);
    const long long M = counts[0], I = counts[1], L = counts[2], O = counts[3], A = counts[4];
    if (L > 0) throw ParseError("latches are not supported (combinational circuits only)", line_no);
    if (I + A > M) throw ParseError("header: M is smaller than I + A", line_no);

    AigCircuit aig;
    aig.max_var = static_cast<unsigned>(M);
    std::vector<char> defined(M + 1, 0);
    defined[0] = 1;
    auto check_var = [&](unsigned lit, int ln) {
        if ((lit >> 1) > aig.max_var) throw ParseError("literal " + std::to_string(lit) + " exceeds 2M+1", ln);
    };
    for (long long i = 0; i < I; ++i) {
        const unsigned lit = parse_literals(next_content_line(in, line_no), 1, line_no)[0];
        check_var(lit, line_no);
        if (lit < 2 || (lit & 1U)) throw ParseError("input literal must be positive and non-constant", line_no);
        if (defined[lit >> 1]) throw ParseError("variable " + std::to_string(lit >> 1) + " defined twice", line_no);
        defined[lit >> 1] = 1;
        aig.inputs.push_back(lit);
    }
    std::vector<int> output_lines;
    for (long long i = 0; i < O; ++i) {
        const unsigned lit = parse_literals(next_content_line(in, line_no), 1, line_no)[0];
        check_var(lit, line_no);
        aig.outputs.push_back(lit);
        output_lines.push_back(line_no);
    }
    std::vector<int> and_lines;
    for (long long i = 0; i < A; ++i) {
        const auto lits = parse_literals(next_content_line(in, line_no), 3, line_no);
        for (unsigned l : lits) check_var(l, line_no);
        if (lits[0] < 2 || (lits[0] & 1U)) throw ParseError("AND output literal must be positive and non-constant", line_no);
        if (defined[lits[0] >> 1]) throw ParseError("variable " + std::to_string(lits[0] >> 1) + " defined twice", line_no);
        defined[lits[0] >> 1] = 1;
        aig.ands.push_back({lits[0], lits[1], lits[2]});
        and_lines.push_back(line_no);
    }
    for (std::size_t i = 0; i < aig.ands.size(); ++i)
        for (unsigned l : {aig.ands[i].rhs0, aig.ands[i].rhs1})
            if (!defined[l >> 1]) throw ParseError("dangling literal " + std::to_string(l), and_lines[i]);
    for (std::size_t i = 0; i < aig.outputs.size(); ++i)
        if (!defined[aig.outputs[i] >> 1])
            throw ParseError("dangling literal " + std::to_string(aig.outputs[i]), output_lines[i]);
    and_order(aig);
    return aig;
}

AigCircuit parse_aiger(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    try {
        return parse_aiger(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_aiger(std::ostream& out, const AigCircuit& aig) {
    out << "aag " << aig.max_var << ' ' << aig.inputs.size() << " 0 " << aig.outputs.size() << ' ' << aig.ands.size()
        << '\n';
    for (unsigned l : aig.inputs) out << l << '\n';
    for (unsigned l : aig.outputs) out << l << '\n';
    for (const auto& a : aig.ands) out << a.lhs << ' ' << a.rhs0 << ' ' << a.rhs1 << '\n';
}

void write_aiger(const std::filesystem::path& path, const AigCircuit& aig) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_aiger(out, aig);
}

Circuit aig_to_nand(const AigCircuit& aig) {
    const int num_pis = static_cast<int>(aig.inputs.size());
    struct Gate {
        int a, b;
    };
    std::vector<Gate> gates;
    // neg_node[var] computes the negated variable, pos_node[var] the variable.
    std::vector<int> pos_node(aig.max_var + 1, -1), neg_node(aig.max_var + 1, -1);
    auto new_gate = [&](int a, int b) {
        gates.push_back({a, b});
        return num_pis + static_cast<int>(gates.size()) - 1;
    };
    for (int i = 0; i < num_pis; ++i) pos_node[aig.inputs[i] >> 1] = i;

    auto literal = [&](unsigned lit) -> int {
        const unsigned var = lit >> 1;
        const bool neg = lit & 1U;
        if (var == 0) {
            // Constant 1 = NAND(a, NOT a); constant 0 is its inverse.
            if (num_pis == 0) throw ValidationError("constant literal in an AIG without inputs");
            if (neg_node[0] < 0) {
                if (neg_node[aig.inputs[0] >> 1] < 0) neg_node[aig.inputs[0] >> 1] = new_gate(0, 0);
                neg_node[0] = new_gate(0, neg_node[aig.inputs[0] >> 1]);
            }
            if (neg) return neg_node[0];
            if (pos_node[0] < 0) pos_node[0] = new_gate(neg_node[0], neg_node[0]);
            return pos_node[0];
        }
        if (neg) {
            if (neg_node[var] < 0) neg_node[var] = new_gate(pos_node[var], pos_node[var]);
            return neg_node[var];
        }
        if (pos_node[var] < 0) pos_node[var] = new_gate(neg_node[var], neg_node[var]);
        return pos_node[var];
    };
    for (int a : and_order(aig)) {
        const auto& g = aig.ands[a];
        const int x = literal(g.rhs0), y = literal(g.rhs1);
        neg_node[g.lhs >> 1] = new_gate(x, y);
    }
    std::vector<int> drivers;
    for (unsigned o : aig.outputs) drivers.push_back(literal(o));

    // ANDs that reach no output are dropped.
    const int total_gates = static_cast<int>(gates.size());
    std::vector<char> live(num_pis + total_gates, 0);
    std::vector<int> stack(drivers.begin(), drivers.end());
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        if (live[v]) continue;
        live[v] = 1;
        if (v >= num_pis) {
            stack.push_back(gates[v - num_pis].a);
            stack.push_back(gates[v - num_pis].b);
        }
    }
    std::vector<int> id(num_pis + total_gates, -1);
    std::vector<NodeKind> kinds(num_pis, NodeKind::PI);
    for (int i = 0; i < num_pis; ++i) id[i] = i;
    for (int g = 0; g < total_gates; ++g)
        if (live[num_pis + g]) {
            id[num_pis + g] = static_cast<int>(kinds.size());
            kinds.push_back(NodeKind::NAND);
        }
    std::vector<Edge> edges;
    for (int g = 0; g < total_gates; ++g) {
        if (!live[num_pis + g]) continue;
        edges.push_back({id[gates[g].a], id[num_pis + g]});
        edges.push_back({id[gates[g].b], id[num_pis + g]});
    }
    for (int d : drivers) {
        edges.push_back({id[d], static_cast<int>(kinds.size())});
        kinds.push_back(NodeKind::PO);
    }
    return Circuit(std::move(kinds), edges);
}

AigCircuit random_aig(int num_inputs, int num_ands, int num_outputs, Rng& rng) {
    if (num_inputs < 1 || num_ands < 0 || num_outputs < 1) throw std::invalid_argument("random_aig: bad sizes");
    AigCircuit aig;
    aig.max_var = static_cast<unsigned>(num_inputs + num_ands);
    for (int i = 1; i <= num_inputs; ++i) aig.inputs.push_back(2U * i);
    for (int k = 0; k < num_ands; ++k) {
        const int var = num_inputs + 1 + k;
        std::uniform_int_distribution<int> pick(1, var - 1);
        int a = pick(rng), b = pick(rng);
        if (var - 1 > 1)
            while (b == a) b = pick(rng);
        const auto neg = [&] { return static_cast<unsigned>(rng() & 1U); };
        aig.ands.push_back({2U * var, 2U * a + neg(), 2U * b + neg()});
    }
    const int lo = num_ands > 0 ? num_inputs + 1 + num_ands / 2 : 1;
    std::uniform_int_distribution<int> out_var(lo, num_inputs + num_ands);
    for (int o = 0; o < num_outputs; ++o) aig.outputs.push_back(2U * out_var(rng) + static_cast<unsigned>(rng() & 1U));
    return aig;
}

namespace {

Subcircuit assemble(const Circuit& parent, int pivot, std::vector<int> cut, std::vector<int> internal,
                    std::vector<int> outputs) {
    std::sort(cut.begin(), cut.end());
    std::sort(internal.begin(), internal.end());
    std::sort(outputs.begin(), outputs.end());
    Subcircuit s;
    s.pivot = pivot;
    std::unordered_map<int, int> map;
    std::vector<NodeKind> kinds;
    for (int v : cut) {
        map[v] = static_cast<int>(kinds.size());
        kinds.push_back(NodeKind::PI);
        s.origin.push_back(v);
    }
    for (int v : internal) {
        map[v] = static_cast<int>(kinds.size());
        kinds.push_back(NodeKind::NAND);
        s.origin.push_back(v);
    }
    std::vector<Edge> edges;
    for (int v : internal)
        for (int p : parent.fanins(v)) edges.push_back({map.at(p), map.at(v)});
    for (int v : outputs) {
        edges.push_back({map.at(v), static_cast<int>(kinds.size())});
        kinds.push_back(NodeKind::PO);
        s.origin.push_back(v);
    }
    s.circuit = Circuit(std::move(kinds), edges);
    s.cut = std::move(cut);
    s.internal = std::move(internal);
    s.outputs = std::move(outputs);
    return s;
}

} // namespace

Subcircuit extract_fanin(const Circuit& circuit, int pivot, int max_inputs) {
    if (pivot < 0 || pivot >= circuit.size()) throw std::out_of_range("extract_fanin: pivot out of range");
    if (max_inputs < 1) throw ConfigError("max_inputs must be at least 1");
    if (circuit.kind(pivot) == NodeKind::PI) throw std::invalid_argument("extract_fanin: pivot must not be a PI");
    int root = pivot;
    if (circuit.kind(pivot) == NodeKind::PO) {
        if (circuit.fanins(pivot).size() != 1) throw ValidationError("PO pivot must have exactly one driver");
        root = circuit.fanins(pivot)[0];
        if (circuit.kind(root) == NodeKind::PI) return assemble(circuit, pivot, {root}, {}, {root});
        if (circuit.kind(root) != NodeKind::NAND) throw ValidationError("PO driven by a PO");
    }
    std::set<int> internal{root};
    std::set<int> leaves(circuit.fanins(root).begin(), circuit.fanins(root).end());
    std::vector<int> queue(leaves.begin(), leaves.end());
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int l = queue[head];
        if (circuit.kind(l) != NodeKind::NAND || !leaves.count(l)) continue;
        std::vector<int> fresh;
        for (int p : circuit.fanins(l))
            if (!internal.count(p) && !leaves.count(p)) fresh.push_back(p);
        if (static_cast<int>(leaves.size()) - 1 + static_cast<int>(fresh.size()) > max_inputs) continue;
        leaves.erase(l);
        internal.insert(l);
        for (int p : fresh) {
            leaves.insert(p);
            queue.push_back(p);
        }
    }
    return assemble(circuit, pivot, {leaves.begin(), leaves.end()}, {internal.begin(), internal.end()}, {root});
}

Subcircuit expand_fanout(const Circuit& circuit, const Subcircuit& sub, int max_outputs) {
    if (sub.outputs.size() != 1) throw std::invalid_argument("expand_fanout expects a single-output subcircuit");
    const int root = sub.outputs[0];
    if (circuit.kind(root) != NodeKind::NAND) return sub;
    std::set<int> inside(sub.internal.begin(), sub.internal.end());
    const std::set<int> cut(sub.cut.begin(), sub.cut.end());
    std::vector<char> in_tfo(circuit.size(), 0);
    std::vector<int> stack{root};
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : circuit.fanouts(v))
            if (!in_tfo[w]) {
                in_tfo[w] = 1;
                stack.push_back(w);
            }
    }
    std::vector<int> added;
    bool truncated = false;
    auto outputs_with = [&](const std::vector<int>& extra) {
        std::vector<int> outs{root};
        for (int v : extra) {
            bool maximal = true;
            for (int w : circuit.fanouts(v))
                if (inside.count(w)) maximal = false;
            if (maximal) outs.push_back(v);
        }
        return outs;
    };
    for (int v : topological_order(circuit)) {
        if (!in_tfo[v] || circuit.kind(v) != NodeKind::NAND || inside.count(v)) continue;
        bool closed = true;
        for (int p : circuit.fanins(v))
            if (!inside.count(p) && !cut.count(p)) closed = false;
        if (!closed) continue;
        inside.insert(v);
        added.push_back(v);
        if (static_cast<int>(outputs_with(added).size()) > max_outputs) {
            inside.erase(v);
            added.pop_back();
            truncated = true;
            break;
        }
    }
    Subcircuit s = assemble(circuit, sub.pivot, sub.cut, {inside.begin(), inside.end()}, outputs_with(added));
    s.truncated = truncated;
    return s;
}

bool fanin_closed(const Circuit& parent, const Subcircuit& sub) {
    std::set<int> allowed(sub.internal.begin(), sub.internal.end());
    allowed.insert(sub.cut.begin(), sub.cut.end());
    for (int v : sub.internal)
        for (int p : parent.fanins(v))
            if (!allowed.count(p)) return false;
    for (int v : sub.outputs)
        if (!allowed.count(v)) return false;
    return true;
}

DedupResult dedup_cap(std::vector<Sample> samples, int cap) {
    if (cap < 1) throw ConfigError("dedup cap must be at least 1");
    DedupResult r;
    for (auto& s : samples) {
        int& count = r.seen[s.table.key()];
        if (++count <= cap)
            r.kept.push_back(std::move(s));
        else
            ++r.dropped;
    }
    return r;
}

Circuit augment_shuffle(const Circuit& circuit, Rng& rng, std::vector<int>* perm) {
    std::vector<int> nands;
    for (int v = 0; v < circuit.size(); ++v)
        if (circuit.kind(v) == NodeKind::NAND) nands.push_back(v);
    std::vector<int> shuffled = nands;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<int> new_id(circuit.size());
    std::iota(new_id.begin(), new_id.end(), 0);
    for (std::size_t i = 0; i < nands.size(); ++i) new_id[nands[i]] = shuffled[i];
    if (perm) *perm = new_id;
    return relabel(circuit, new_id);
}

Circuit augment_idle(const Circuit& circuit, double ratio, Rng& rng) {
    if (!(ratio >= 0.0 && ratio <= 0.8)) throw ConfigError("idle ratio must lie in [0, 0.8]");
    const int n = circuit.size();
    const int extra = static_cast<int>(std::ceil(ratio * n - 1e-9));
    const int total = n + extra;
    std::vector<int> slots(total);
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng);
    std::vector<char> idle(total, 0);
    for (int k = 0; k < extra; ++k) idle[slots[k]] = 1;
    std::vector<int> new_id;
    std::vector<NodeKind> kinds(total, NodeKind::NAND);
    for (int s = 0; s < total; ++s)
        if (!idle[s]) {
            kinds[s] = circuit.kind(static_cast<int>(new_id.size()));
            new_id.push_back(s);
        }
    std::vector<Edge> edges;
    for (const Edge& e : circuit.edges()) edges.push_back({new_id[e.src], new_id[e.dst]});
    return Circuit(std::move(kinds), edges);
}

std::vector<Circuit> no_rewrite(const Circuit&) { return {}; }

void ExtractionConfig::check() const {
    if (max_inputs < 1 || max_inputs > kMaxSampleInputs) throw ConfigError("max_inputs must lie in [1, 15]");
    if (dedup_cap < 1) throw ConfigError("dedup cap must be at least 1");
    if (max_pis < 1 || max_pis > kMaxSampleInputs || max_pos < 1 || max_pos > kMaxSampleOutputs)
        throw ConfigError("PI/PO caps must lie in [1, 15]");
    if (!(idle_ratio_min >= 0.0 && idle_ratio_min <= idle_ratio_max && idle_ratio_max <= 0.8))
        throw ConfigError("idle ratio range must satisfy 0 <= min <= max <= 0.8");
    if (samples_per_shard < 1) throw ConfigError("samples_per_shard must be positive");
}

std::string CorpusStats::to_json() const {
    auto hist = [](const std::map<int, int>& h) {
        nlohmann::json j = nlohmann::json::object();
        for (auto [k, v] : h) j[std::to_string(k)] = v;
        return j;
    };
    return nlohmann::json{{"files", files},
                          {"failed_files", failed_files},
                          {"pivots", pivots},
                          {"extracted", extracted},
                          {"truncated", truncated},
                          {"deduplicated", deduplicated},
                          {"samples", samples},
                          {"distinct_tables", distinct_tables},
                          {"max_pis", max_pis},
                          {"max_pos", max_pos},
                          {"pi_histogram", hist(pi_histogram)},
                          {"po_histogram", hist(po_histogram)},
                          {"node_histogram", hist(node_histogram)},
                          {"samples_per_key_histogram", hist(samples_per_key_histogram)},
                          {"errors", errors}}
        .dump(2);
}

Corpus build_corpus(const std::vector<std::pair<std::string, Circuit>>& circuits, const ExtractionConfig& config) {
    config.check();
    Corpus corpus;
    std::vector<Sample> raw;
    for (const auto& [name, c] : circuits) {
        ++corpus.stats.files;
        for (int v = 0; v < c.size(); ++v) {
            if (c.kind(v) == NodeKind::PI) continue;
            ++corpus.stats.pivots;
            Subcircuit sub = expand_fanout(c, extract_fanin(c, v, config.max_inputs), config.max_pos);
            corpus.stats.truncated += sub.truncated;
            if (sub.circuit.num_pis() > config.max_pis) continue;
            Sample s;
            s.circuit = canonicalize(sub.circuit);
            s.table = truth_table(s.circuit);
            s.source = name;
            s.pivot = v;
            auto alternatives = config.rewrite(s.circuit);
            const TruthTable table = s.table;
            raw.push_back(std::move(s));
            ++corpus.stats.extracted;
            for (Circuit& alt : alternatives) {
                Sample r{canonicalize(alt), {}, name, v, {"rewrite"}};
                r.table = truth_table(r.circuit);
                if (r.table != table) throw ValidationError("rewrite hook changed the function of a sample");
                raw.push_back(std::move(r));
            }
        }
    }
    DedupResult d = dedup_cap(std::move(raw), config.dedup_cap);
    corpus.stats.deduplicated = d.dropped;
    corpus.stats.distinct_tables = static_cast<int>(d.seen.size());
    for (auto& [key, count] : d.seen) ++corpus.stats.samples_per_key_histogram[std::min(count, config.dedup_cap)];

    Rng rng(split_seed(config.seed, "augment"));
    std::uniform_real_distribution<double> ratio(config.idle_ratio_min, config.idle_ratio_max);
    for (Sample& s : d.kept) {
        if (config.shuffle) {
            s.circuit = augment_shuffle(s.circuit, rng);
            s.augmentations.push_back("shuffle");
        }
        if (config.idle) {
            const double r = ratio(rng);
            s.circuit = augment_idle(s.circuit, r, rng);
            std::ostringstream tag;
            tag << "idle:" << r;
            s.augmentations.push_back(tag.str());
        }
        if (truth_table(s.circuit) != s.table) throw ValidationError("augmentation changed the function of a sample");
        corpus.stats.max_pis = std::max(corpus.stats.max_pis, s.circuit.num_pis());
        corpus.stats.max_pos = std::max(corpus.stats.max_pos, s.circuit.num_pos());
        ++corpus.stats.pi_histogram[s.circuit.num_pis()];
        ++corpus.stats.po_histogram[s.circuit.num_pos()];
        ++corpus.stats.node_histogram[s.circuit.size()];
    }
    corpus.samples = std::move(d.kept);
    corpus.stats.samples = static_cast<int>(corpus.samples.size());
    return corpus;
}

Corpus build_corpus(const std::vector<std::filesystem::path>& aig_paths, const ExtractionConfig& config) {
    std::vector<std::pair<std::string, Circuit>> circuits;
    std::vector<std::string> errors;
    for (const auto& p : aig_paths) {
        try {
            circuits.emplace_back(p.filename().string(), aig_to_nand(parse_aiger(p)));
        } catch (const std::exception& e) {
            errors.push_back(e.what());
        }
    }
    Corpus c = build_corpus(circuits, config);
    c.stats.files += static_cast<int>(errors.size());
    c.stats.failed_files = static_cast<int>(errors.size());
    c.stats.errors = std::move(errors);
    return c;
}

std::string sample_to_jsonl(const Sample& s) {
    std::vector<std::string> rows;
    for (int o = 0; o < s.table.num_outputs(); ++o) rows.push_back(s.table.row_string(o));
    return nlohmann::json{{"circuit", circuit_to_string(s.circuit)},
                          {"truth", rows},
                          {"meta", {{"source", s.source}, {"pivot", s.pivot}, {"augmentations", s.augmentations}}}}
        .dump();
}

Sample sample_from_jsonl(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad sample record: ") + e.what());
    }
    Sample s;
    s.circuit = circuit_from_string(j.at("circuit").get<std::string>());
    s.table = TruthTable::from_strings(j.at("truth").get<std::vector<std::string>>());
    const auto& m = j.at("meta");
    s.source = m.value("source", "");
    s.pivot = m.value("pivot", -1);
    s.augmentations = m.value("augmentations", std::vector<std::string>{});
    return s;
}

namespace {
void write_atomic(const std::filesystem::path& path, const std::string& body) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        out << body;
    }
    std::filesystem::rename(tmp, path);
}
} // namespace

std::vector<std::filesystem::path> write_corpus(const std::filesystem::path& dir, const Corpus& corpus,
                                                int samples_per_shard) {
    if (samples_per_shard < 1) throw ConfigError("samples_per_shard must be positive");
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> shards;
    for (std::size_t begin = 0; begin < corpus.samples.size(); begin += samples_per_shard) {
        std::string body;
        const std::size_t end = std::min(corpus.samples.size(), begin + samples_per_shard);
        for (std::size_t i = begin; i < end; ++i) body += sample_to_jsonl(corpus.samples[i]) + "\n";
        char name[32];
        std::snprintf(name, sizeof name, "shard-%05zu.jsonl", shards.size());
        shards.push_back(dir / name);
        write_atomic(shards.back(), body);
    }
    write_atomic(dir / "stats.json", corpus.stats.to_json() + "\n");
    return shards;
}

std::vector<Sample> read_shard(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<Sample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(sample_from_jsonl(line));
        } catch (const std::exception& e) {
            throw ParseError(path.string() + ": " + e.what(), line_no);
        }
    }
    return out;
}

} // namespace logicforge
