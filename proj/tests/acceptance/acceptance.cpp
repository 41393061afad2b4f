// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--cli PATH] [N ...]
// Without numbers every criterion runs. Exit status is non-zero when any
// selected criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <unistd.h>

#include "logicforge/ar.hpp"
#include "logicforge/circuit.hpp"
#include "logicforge/dag_repair.hpp"
#include "logicforge/das.hpp"
#include "logicforge/dataset.hpp"
#include "logicforge/pipeline.hpp"
#include "logicforge/vq.hpp"
#include "../support/oracles.hpp"

namespace fs = std::filesystem;
using namespace logicforge;

namespace {

std::string g_cli;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Circuit build(int npi, const std::vector<std::pair<int, int>>& gates, const std::vector<int>& pos) {
    std::vector<NodeKind> k(npi, NodeKind::PI);
    std::vector<Edge> e;
    for (auto [a, b] : gates) {
        int id = static_cast<int>(k.size());
        k.push_back(NodeKind::NAND);
        e.push_back({a, id});
        e.push_back({b, id});
    }
    for (int d : pos) {
        int id = static_cast<int>(k.size());
        k.push_back(NodeKind::PO);
        e.push_back({d, id});
    }
    return Circuit(k, e);
}

Circuit known_maj3() { return build(3, {{0, 1}, {0, 2}, {1, 2}, {3, 4}, {6, 6}, {7, 5}}, {8}); }
Circuit known_adder() {
    return build(3, {{0, 1}, {0, 3}, {1, 3}, {4, 5}, {6, 2}, {6, 7}, {2, 7}, {8, 9}, {3, 7}}, {10, 11});
}

// ------------------------------------------------------------------ 1

struct SynthCase {
    std::string name;
    TruthTable table;
    std::string layers;
    std::string scope;
    std::uint64_t seed;
};

std::vector<SynthCase> synth_cases() {
    return {{"xor2", oracle::xor2(), "4,4,4", "all", 0},
            {"maj3", oracle::maj3(), "6,6,6,6", "previous+inputs", 0},
            {"full_adder", oracle::full_adder(), "8,8,8,8,8,8", "previous+inputs", 2},
            {"parity4", oracle::parity4(), "2,4,2,1,2,1", "all", 1}};
}

CandidateScope scope_of(const std::string& s) {
    if (s == "previous") return CandidateScope::PreviousLayer;
    if (s == "previous+inputs") return CandidateScope::PreviousLayerAndInputs;
    return CandidateScope::AllEarlier;
}

Outcome criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path work = fs::temp_directory_path() / fmt("logicforge-acc1-%d", static_cast<int>(::getpid()));
    fs::create_directories(work);
    bool ok = true;
    std::string detail;
    for (const auto& c : synth_cases()) {
        Circuit circuit;
        int steps = -1;
        if (!g_cli.empty()) {
            const fs::path truth = work / (c.name + ".truth");
            const fs::path out = work / c.name;
            write_truth_table(truth, c.table);
            const std::string cmd = g_cli + " synth " + truth.string() + " --layers " + c.layers + " --scope " +
                                    c.scope + " --seed " + std::to_string(c.seed) +
                                    " --max-steps 50000 --out-dir " + out.string() + " > " +
                                    (out.string() + ".log") + " 2>&1";
            const int rc = std::system(cmd.c_str());
            if (rc != 0 || !fs::exists(out / "circuit.txt")) {
                ok = false;
                detail += c.name + ": synth exit " + std::to_string(rc) + "; ";
                continue;
            }
            circuit = read_circuit(out / "circuit.txt");
            std::ifstream rin(out / "record.json");
            steps = nlohmann::json::parse(rin).at("report").at("steps_used").get<int>();
        } else {
            DasConfig cfg;
            cfg.seed = c.seed;
            cfg.scope = scope_of(c.scope);
            auto o = run_das(uniform_net(c.table.num_inputs(), parse_widths(c.layers), c.table.num_outputs(), cfg),
                             c.table, cfg, nullptr, c.name, "uniform-das");
            circuit = o.circuit;
            steps = o.record.report.steps_used;
        }
        const bool exact = validate(circuit).empty() && oracle::matches(circuit, c.table);
        ok = ok && exact && steps <= 50000;
        detail += fmt("%s %s in %d steps; ", c.name.c_str(), exact ? "exact" : "WRONG", steps);
    }
    fs::remove_all(work);
    const double sec = seconds_since(t0);
    ok = ok && sec < 600.0;
    return {ok, detail + fmt("total %.1fs", sec)};
}

// ------------------------------------------------------------------ 2 and 6

PriorStructure oracle_structure(const Circuit& c, std::uint64_t seed) {
    Rng rng(split_seed(seed, "oracle"));
    auto probs = oracle_prior(c, 0.1, rng);
    return prepare_prior(probs, c.kinds(), c.num_pis(), c.num_pos());
}

Outcome criterion2() {
    bool ok = true;
    std::string detail;
    for (const auto& [name, circuit] : {std::pair{"maj3", known_maj3()}, std::pair{"full_adder", known_adder()}}) {
        const TruthTable table = name == std::string("maj3") ? oracle::maj3() : oracle::full_adder();
        if (!oracle::matches(circuit, table)) return {false, std::string(name) + " reference circuit is wrong"};
        std::vector<double> prior, uniform;
        int pc = 0, uc = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            PriorStructure ps = oracle_structure(circuit, seed);
            DasConfig cfg;
            cfg.seed = seed;
            auto a = run_das(prior_net(ps, cfg), table, cfg, &ps.repair.masked, name, "prior-das");
            auto b = run_das(uniform_net(ps.layering, cfg), table, cfg, nullptr, name, "uniform-das");
            prior.push_back(a.record.report.steps_used);
            uniform.push_back(b.record.report.steps_used);
            pc += a.record.report.converged;
            uc += b.record.report.converged;
        }
        const double mp = oracle::median(prior), mu = oracle::median(uniform);
        const bool pass = mp <= 0.8 * mu;
        ok = ok && pass;
        detail += fmt("%s median prior %.0f (%d/10 conv) vs uniform %.0f (%d/10 conv) -> %s; ", name, mp, pc, mu, uc,
                      pass ? "ok" : "not faster");
    }
    return {ok, detail};
}

Outcome criterion6() {
    bool ok = true;
    std::string detail;
    Rng rng(606);
    // PO mixes PI 0 and NOT(PI 0) half and half: exactly 0.5 on every row.
    {
        bool half = true;
        for (int t = 0; t < 20; ++t) {
            const int npi = 1 + static_cast<int>(rng() % 5), npo = 1 + static_cast<int>(rng() % 3);
            TruthTable table(npi, npo);
            for (int o = 0; o < npo; ++o)
                for (std::size_t r = 0; r < table.num_rows(); ++r) table.set_bit(o, r, rng() & 1U);
            std::vector<int> hidden{1};
            LayeredNet net = build_net(make_layering(npi, hidden, npo), DasConfig{});
            for (auto& s : net.selectors) {
                for (std::size_t i = 0; i < s.candidates.size(); ++i) s.logits[i] = -1e4;
            }
            const int gate_node = net.gate_nodes[0];
            for (int k = 0; k < 2; ++k) {
                auto& s = net.selectors[net.first_selector_of_gate(0) + k];
                s.logits[std::find(s.candidates.begin(), s.candidates.end(), net.pi_nodes[0]) - s.candidates.begin()] = 0;
            }
            for (int p = 0; p < npo; ++p) {
                auto& s = net.selectors[net.selector_of_po(p)];
                for (int src : {net.pi_nodes[0], gate_node})
                    s.logits[std::find(s.candidates.begin(), s.candidates.end(), src) - s.candidates.begin()] = 0;
            }
            half = half && bitsd(net, table) == 0.5;
        }
        ok = ok && half;
        detail += half ? "0.5-net exact; " : "0.5-net WRONG; ";
    }
    // One-hot net encoding a 4-NAND XOR: exactly 0.
    {
        const TruthTable table = oracle::xor2();
        std::vector<int> hidden{1, 2, 1};
        LayeredNet net = build_net(make_layering(2, hidden, 1), DasConfig{});
        // nodes: PI 0,1; g2 = NAND(0,1); g3 = NAND(0,2); g4 = NAND(1,2); g5 = NAND(3,4); PO 6
        const std::vector<std::pair<int, int>> drivers{{0, 1}, {0, 2}, {1, 2}, {3, 4}};
        auto one_hot = [](Selector& s, int node) {
            for (std::size_t i = 0; i < s.candidates.size(); ++i) s.logits[i] = s.candidates[i] == node ? 0.0 : -1e4;
        };
        for (int g = 0; g < net.num_gates(); ++g) {
            one_hot(net.selectors[net.first_selector_of_gate(g)], drivers[g].first);
            one_hot(net.selectors[net.first_selector_of_gate(g) + 1], drivers[g].second);
        }
        one_hot(net.selectors[net.selector_of_po(0)], 5);
        const double b = bitsd(net, table);
        ok = ok && b == 0.0;
        detail += fmt("matching net %.3g; ", b);
    }
    for (const auto& [name, circuit] : {std::pair{"maj3", known_maj3()}, std::pair{"full_adder", known_adder()}}) {
        const TruthTable table = name == std::string("maj3") ? oracle::maj3() : oracle::full_adder();
        int wins = 0;
        std::string vals;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            PriorStructure ps = oracle_structure(circuit, seed);
            DasConfig cfg;
            cfg.seed = seed;
            const double p = bitsd(prior_net(ps, cfg), table), u = bitsd(uniform_net(ps.layering, cfg), table);
            wins += p <= u;
            vals += fmt(" %.3f/%.3f", p, u);
        }
        ok = ok && wins >= 8;
        detail += fmt("%s prior<=uniform on %d/10 (prior/uniform:%s); ", name, wins, vals.c_str());
    }
    return {ok, detail};
}

// ------------------------------------------------------------------ 3

Outcome criterion3() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    auto fixture = [&](const char* name, int n, std::vector<int> pis, std::vector<int> pos,
                       std::vector<std::tuple<int, int, double>> entries, std::vector<std::pair<int, int>> expected) {
        ProbabilityMatrix p(n);
        for (auto [i, j, v] : entries) p(i, j) = v;
        auto r = dag_search(p, pis, pos);
        std::vector<std::pair<int, int>> got;
        for (const auto& e : r.removed_edges) got.push_back({e.src, e.dst});
        const bool same = got == expected && oracle::acyclic(r.adjacency);
        ok = ok && same;
        detail += std::string(name) + (same ? " ok; " : " MISMATCH; ");
    };
    // 0 PI, 1-2 NAND, 3 PO; cycle 1->2->1, weakest 2->1.
    fixture("2-cycle", 4, {0}, {3}, {{0, 1, 0.9}, {1, 2, 0.8}, {2, 1, 0.6}, {2, 3, 0.9}}, {{2, 1}});
    // cycle 1->2->3->1, weakest 3->1.
    fixture("triangle", 5, {0}, {4}, {{0, 1, 0.9}, {1, 2, 0.7}, {2, 3, 0.8}, {3, 1, 0.6}, {3, 4, 0.95}}, {{3, 1}});
    // all cycle edges equal: DFS reaches 1,2,3 and closes at 1; first edge 1->2 goes.
    fixture("tied triangle", 5, {0}, {4}, {{0, 1, 0.9}, {1, 2, 0.7}, {2, 3, 0.7}, {3, 1, 0.7}, {3, 4, 0.95}},
            {{1, 2}});
    // two cycles sharing 1->2: 1->2->1 (2->1 at 0.55) first, then 2->3->2 (3->2 at 0.65).
    fixture("two cycles", 5, {0}, {4},
            {{0, 1, 0.9}, {1, 2, 0.8}, {2, 1, 0.55}, {2, 3, 0.9}, {3, 2, 0.65}, {3, 4, 0.9}}, {{2, 1}, {3, 2}});

    Rng rng(303);
    int acyclic = 0, compliant = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        const int n = 5 + static_cast<int>(rng() % 56);
        ProbabilityMatrix p(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) p(i, j) = uniform01(rng);
        std::vector<int> ids(n);
        for (int i = 0; i < n; ++i) ids[i] = i;
        std::shuffle(ids.begin(), ids.end(), rng);
        const int npi = 1 + static_cast<int>(rng() % (n / 3)), npo = 1 + static_cast<int>(rng() % (n / 3));
        std::vector<int> pis(ids.begin(), ids.begin() + npi), pos(ids.begin() + npi, ids.begin() + npi + npo);
        std::sort(pis.begin(), pis.end());
        std::sort(pos.begin(), pos.end());
        auto r = dag_search(p, pis, pos);
        acyclic += oracle::acyclic(r.adjacency);
        std::set<int> spi(pis.begin(), pis.end()), spo(pos.begin(), pos.end());
        std::set<std::pair<int, int>> removed;
        for (const auto& e : r.removed_edges) removed.insert({e.src, e.dst});
        bool good = true;
        for (int i = 0; i < n && good; ++i)
            for (int j = 0; j < n; ++j) {
                const bool kept = r.adjacency[i][j];
                const bool allowed = p(i, j) > 0.5 && i != j && !spi.count(j) && !spo.count(i);
                // kept = allowed minus removed, removed subset of allowed
                if (kept != (allowed && !removed.count({i, j})) || (removed.count({i, j}) && !allowed) ||
                    r.masked(i, j) != (kept ? p(i, j) : 0.0)) {
                    good = false;
                    break;
                }
            }
        compliant += good;
    }
    const double sec = seconds_since(t0);
    ok = ok && acyclic == trials && compliant == trials && sec < 10.0;
    return {ok, detail + fmt("acyclic %d/%d, rule-compliant %d/%d, %.2fs", acyclic, trials, compliant, trials, sec)};
}

// ------------------------------------------------------------------ 4

Outcome criterion4() {
    Rng rng(404);
    const double eps = DasConfig{}.epsilon;
    double worst = 0.0;
    int argmax_checked = 0, argmax_kept = 0;
    for (int t = 0; t < 1000; ++t) {
        const int k = 2 + static_cast<int>(rng() % 19);
        std::vector<int> hidden{1};
        LayeredNet net = build_net(make_layering(k, hidden, 1), DasConfig{});
        const int gate = net.gate_nodes[0];
        ProbabilityMatrix prior(net.num_nodes());
        std::vector<double> w(k);
        const int sparsity = static_cast<int>(rng() % 3);
        for (int i = 0; i < k; ++i) {
            w[i] = uniform01(rng);
            if (sparsity == 1 && uniform01(rng) < 0.3) w[i] = 0.0;
            if (sparsity == 2) w[i] = w[i] * w[i] * w[i] * w[i];
        }
        if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) w[0] = 0.5;
        for (int i = 0; i < k; ++i) prior(net.pi_nodes[i], gate) = w[i];
        init_from_prior(net, prior, eps);

        const Selector& s = net.selectors[net.first_selector_of_gate(0)];
        double total = 0.0;
        for (double x : w) total += x;
        std::vector<double> expect(k);
        double z = 0.0;
        for (int i = 0; i < k; ++i) z += w[i] / total + eps;
        for (int i = 0; i < k; ++i) expect[i] = (w[i] / total + eps) / z;
        // softmax evaluated here, not with the library helper
        double mx = *std::max_element(s.logits.begin(), s.logits.end()), se = 0.0;
        for (double l : s.logits) se += std::exp(l - mx);
        for (int i = 0; i < k; ++i) {
            const int pos = static_cast<int>(std::find(s.candidates.begin(), s.candidates.end(), net.pi_nodes[i]) -
                                             s.candidates.begin());
            worst = std::max(worst, std::abs(std::exp(s.logits[pos] - mx) / se - expect[i]));
        }
        std::vector<double> sorted = w;
        std::sort(sorted.rbegin(), sorted.rend());
        if ((sorted[0] - sorted[1]) / total > 10 * eps) {
            ++argmax_checked;
            const int wi = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
            const int li = static_cast<int>(std::max_element(s.logits.begin(), s.logits.end()) - s.logits.begin());
            argmax_kept += s.candidates[li] == net.pi_nodes[wi];
        }
    }
    const bool ok = worst < 1e-9 && argmax_kept == argmax_checked && argmax_checked > 0;
    return {ok, fmt("max |softmax - normalized| = %.3g, argmax kept %d/%d", worst, argmax_kept, argmax_checked)};
}

// ------------------------------------------------------------------ 5

Outcome criterion5() {
    Rng rng(505);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    long checked = 0;
    int redraws = 0;
    std::string worst_at;
    const double h = 1e-5, floor = 1e-6;
    for (int t = 0; t < 100; ++t) {
        const int npi = 2 + static_cast<int>(rng() % 3), npo = 1 + static_cast<int>(rng() % 3);
        std::vector<int> hidden;
        int gates = 0;
        const int depth = 1 + static_cast<int>(rng() % 4);
        for (int d = 0; d < depth; ++d) {
            int w = 1 + static_cast<int>(rng() % 7);
            if (gates + w > 30) break;
            hidden.push_back(w);
            gates += w;
        }
        DasConfig cfg;
        cfg.scope = static_cast<CandidateScope>(rng() % 3);
        LayeredNet net = build_net(make_layering(npi, hidden, npo), cfg);
        for (auto& s : net.selectors)
            for (auto& l : s.logits) l = normal(rng);
        TruthTable table(npi, npo);
        for (int o = 0; o < npo; ++o)
            for (std::size_t r = 0; r < table.num_rows(); ++r) table.set_bit(o, r, rng() & 1U);
        const bool gumbel = t % 2 == 1;
        net.tau = 0.5 + uniform01(rng);
        SelectorNoise noise;
        // The clamped BCE has kinks at 1e-7 and 1 - 1e-7; redraw noise until no
        // output sits near one, so the central difference sees a smooth loss.
        auto near_kink = [&] {
            for (const auto& col : forward_table(net, npi, SelectorMode::Gumbel, &noise))
                for (double y : col)
                    for (double d : {y, 1 - y})
                        if (d > kBceClamp / 100 && d < kBceClamp * 100) return true;
            return false;
        };
        if (gumbel) {
            noise = sample_selector_noise(net, rng);
            while (near_kink()) {
                noise = sample_selector_noise(net, rng);
                ++redraws;
            }
        }
        const SelectorMode mode = gumbel ? SelectorMode::Gumbel : SelectorMode::Soft;
        auto g = gradients(net, table, mode, gumbel ? &noise : nullptr);
        // Smallest gradient a central difference can resolve to 1e-4: each of
        // the M BCE terms is at most -log(clamp), so rounding in the loss is
        // about eps * M * -log(clamp).
        const double terms = static_cast<double>(table.num_rows()) * npo;
        const double resolution =
            std::numeric_limits<double>::epsilon() * -std::log(kBceClamp) * terms / h / 1e-4;
        for (std::size_t s = 0; s < net.selectors.size(); ++s)
            for (std::size_t i = 0; i < net.selectors[s].logits.size(); ++i) {
                LayeredNet a = net, b = net;
                a.selectors[s].logits[i] += h;
                b.selectors[s].logits[i] -= h;
                const double la = gradients(a, table, mode, gumbel ? &noise : nullptr).loss;
                const double lb = gradients(b, table, mode, gumbel ? &noise : nullptr).loss;
                const double fd = (la - lb) / (2 * h), an = g.grad[s][i];
                const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor, resolution});
                if (rel > worst) {
                    worst = rel;
                    worst_at = fmt("net %d %s, fd %.6g vs %.6g", t, gumbel ? "gumbel" : "soft", fd, an);
                }
                ++checked;
            }
    }
    return {worst < 1e-4, fmt("%ld logits, max relative error %.3g at %s (%d Gumbel redraws off clamp kinks)", checked, worst,
                            worst_at.c_str(), redraws)};
}

// ------------------------------------------------------------------ 7

Circuit random_small_circuit(Rng& rng) {
    std::uniform_int_distribution<int> npi(2, 4), nn(3, 15), npo(1, 3);
    const int a = npi(rng), b = nn(rng), c = npo(rng);
    std::vector<NodeKind> k;
    for (int i = 0; i < a; ++i) k.push_back(NodeKind::PI);
    for (int i = 0; i < b; ++i) k.push_back(NodeKind::NAND);
    for (int i = 0; i < c; ++i) k.push_back(NodeKind::PO);
    Circuit ci(k);
    for (int g = a; g < a + b; ++g) {
        std::uniform_int_distribution<int> s(0, g - 1);
        ci.add_edge(s(rng), g);
        ci.add_edge(s(rng), g);
    }
    for (int p = a + b; p < a + b + c; ++p) {
        std::uniform_int_distribution<int> s(a, a + b - 1);
        ci.add_edge(s(rng), p);
    }
    return ci;
}

Outcome criterion7() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    // Quantizer duality on unit rows.
    {
        Rng rng(707);
        std::normal_distribution<double> normal(0.0, 1.0);
        int agree = 0;
        for (int t = 0; t < 1000; ++t) {
            const int k = 2 + static_cast<int>(rng() % 64), d = 2 + static_cast<int>(rng() % 6);
            ad::Mat z(1, d), cb(k, d);
            for (int j = 0; j < d; ++j) z(0, j) = normal(rng);
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < d; ++j) cb(i, j) = normal(rng);
            const ad::Mat zn = z / z.norm();
            int best_cos = 0, best_l2 = 0;
            double bc = -2, bl = 1e300;
            for (int i = 0; i < k; ++i) {
                const ad::Mat e = cb.row(i) / cb.row(i).norm();
                const double cosv = (zn.array() * e.array()).sum();
                const double l2 = (zn - e).squaredNorm();
                if (cosv > bc) bc = cosv, best_cos = i;
                if (l2 < bl) bl = l2, best_l2 = i;
            }
            agree += best_cos == best_l2 && quantize(z, cb).tokens[0] == best_cos;
        }
        ok = ok && agree == 1000;
        detail += fmt("duality %d/1000; ", agree);
    }
    // Straight-through: d loss / d z equals d loss / d q at q = e.
    {
        Rng rng(708);
        VqConfig cfg;
        cfg.codebook_size = 16;
        cfg.model_dim = 16;
        VqModel model(cfg);
        const Circuit c = random_small_circuit(rng);
        const auto adj = c.adjacency_matrix();
        ad::Mat labels(c.size(), c.size());
        for (int i = 0; i < c.size(); ++i)
            for (int j = 0; j < c.size(); ++j) labels(i, j) = adj[i][j];
        const ad::Mat z = encode(c, model);
        const Quantized q = quantize(z, model.codebook());
        ad::Param pz("z", z);
        ad::Tape tape;
        ad::Var zq = tape.straight_through(tape.param(pz), tape.constant(q.codes));
        ad::Var loss = tape.bce_mean(decode_edges(tape, zq, c.kinds(), model), labels, kRecClamp);
        tape.backward(loss);
        double worst = 0.0;
        const double h = 1e-6;
        for (int i = 0; i < q.codes.rows(); ++i)
            for (int j = 0; j < q.codes.cols(); ++j) {
                ad::Mat a = q.codes, b = q.codes;
                a(i, j) += h;
                b(i, j) -= h;
                const double fd =
                    (loss_rec(decode_edges(a, c.kinds(), model), adj) - loss_rec(decode_edges(b, c.kinds(), model), adj)) /
                    (2 * h);
                worst = std::max(worst, std::abs(fd - pz.grad(i, j)) / std::max({std::abs(fd), 1e-6}));
            }
        ok = ok && worst < 1e-4;
        detail += fmt("straight-through rel err %.3g; ", worst);
    }
    // Overfit 32 circuits of at most 24 nodes.
    {
        Rng rng(1);
        std::vector<Circuit> corpus;
        for (int i = 0; i < 32; ++i) corpus.push_back(random_small_circuit(rng));
        int max_nodes = 0;
        for (const auto& c : corpus) max_nodes = std::max(max_nodes, c.size());
        VqConfig cfg;
        cfg.steps = 2000;
        VqModel model(cfg);
        train_vq(corpus, model);
        double rec = 0.0, auc = 0.0;
        for (const auto& c : corpus) {
            const auto adj = c.adjacency_matrix();
            const auto probs = decode_edges(code_rows(model, tokenize(c, model)), c.kinds(), model);
            // BCE and AUC recomputed here from the decoded matrix
            double bce = 0.0;
            std::vector<double> pos, neg;
            for (int i = 0; i < c.size(); ++i)
                for (int j = 0; j < c.size(); ++j) {
                    const double p = std::clamp(probs(i, j), 1e-7, 1 - 1e-7);
                    bce -= adj[i][j] ? std::log(p) : std::log(1 - p);
                    if (i != j) (adj[i][j] ? pos : neg).push_back(probs(i, j));
                }
            rec += bce / (c.size() * c.size());
            double wins = 0.0;
            for (double a : pos)
                for (double b : neg) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
            auc += wins / (static_cast<double>(pos.size()) * neg.size());
        }
        rec /= corpus.size();
        auc /= corpus.size();
        ok = ok && max_nodes <= 24 && rec < 0.05 && auc > 0.99;
        detail += fmt("overfit (max %d nodes, %d steps): L_rec %.4f, AUC %.4f; ", max_nodes, cfg.steps, rec, auc);
    }
    return {ok, detail + fmt("%.1fs", seconds_since(t0))};
}

// ------------------------------------------------------------------ 8

// Records every masked input it is shown, and answers with fixed random
// distributions per position.
class RecordingPredictor : public TokenPredictor {
public:
    RecordingPredictor(TokenPredictor* inner, int vocab, std::uint64_t seed) : inner_(inner), vocab_(vocab), rng_(seed) {}
    int vocab_size() const override { return vocab_; }
    std::vector<std::vector<double>> predict(const TokenSeq& masked, const Condition& cond) override {
        seen.push_back(masked);
        if (inner_) return inner_->predict(masked, cond);
        std::vector<std::vector<double>> out(masked.size(), std::vector<double>(vocab_));
        for (auto& row : out) {
            double z = 0.0;
            for (auto& p : row) z += p = std::exp(3.0 * uniform01(rng_));
            for (auto& p : row) p /= z;
        }
        return out;
    }
    std::vector<TokenSeq> seen;

private:
    TokenPredictor* inner_;
    int vocab_;
    Rng rng_;
};

int expected_masked(int t, int T, int n) {
    if (t + 1 >= T) return 0;
    const long double x = std::cos(std::numbers::pi_v<long double> / 2 * (t + 1) / T) * n;
    return static_cast<int>(std::ceil(x - 1e-9L));
}

Outcome criterion8() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    int grid_ok = 0, grid = 0;
    Rng rng(808);
    Condition cond = Condition::from_truth_table(oracle::xor2());
    for (int n : {4, 8, 16, 32})
        for (int T : {1, 2, 4, 8})
            for (bool use_oracle : {true, false}) {
                ++grid;
                const int vocab = 12;
                TokenSeq target(n);
                for (auto& x : target) x = static_cast<int>(rng() % vocab);
                OraclePredictor oracle_pred(target, vocab);
                RecordingPredictor rec(use_oracle ? &oracle_pred : nullptr, vocab, rng());
                Rng drng(rng());
                DecodeResult r = decode(rec, n, T, cond, drng);
                bool good = r.predictor_calls == T && static_cast<int>(rec.seen.size()) == T &&
                            static_cast<int>(r.trace.size()) == T;
                for (int x : r.tokens) good = good && x >= 0 && x < vocab;
                if (use_oracle) good = good && r.tokens == target;
                // schedule and commitment
                for (int t = 0; t < T && good; ++t) {
                    const TokenSeq& in = rec.seen[t];
                    const int masked_in = static_cast<int>(std::count(in.begin(), in.end(), kMask));
                    const int expect_in = t == 0 ? n : expected_masked(t - 1, T, n);
                    good = good && masked_in == expect_in && r.trace[t].remaining_masked == expected_masked(t, T, n);
                    const TokenSeq& next = t + 1 < T ? rec.seen[t + 1] : r.tokens;
                    for (int i = 0; i < n; ++i)
                        if (in[i] != kMask) good = good && next[i] == in[i];  // committed stays committed
                    // newly committed positions outscore those left masked
                    double lowest_committed = 1e300, highest_left = -1e300;
                    for (int i = 0; i < n; ++i) {
                        if (in[i] != kMask) continue;
                        const double s = r.trace[t].scores[i];
                        if (next[i] != kMask) lowest_committed = std::min(lowest_committed, s);
                        else highest_left = std::max(highest_left, s);
                    }
                    good = good && lowest_committed >= highest_left;
                }
                good = good && std::count(r.tokens.begin(), r.tokens.end(), kMask) == 0;
                grid_ok += good;
            }
    ok = grid_ok == grid;
    std::string detail = fmt("decode grid %d/%d; ", grid_ok, grid);

    // Toy predictor overfit.
    Rng srng(7);
    std::vector<ArSample> corpus;
    for (int i = 0; i < 16; ++i) {
        ArSample s;
        const int npi = 2 + i % 3, npo = 1 + i % 2, n = 10 + i % 7;
        s.condition.num_pis = npi;
        s.condition.num_pos = npo;
        for (int o = 0; o < npo; ++o) {
            std::vector<std::uint8_t> row(std::size_t{1} << npi);
            for (auto& b : row) b = srng() & 1U;
            s.condition.rows.push_back(row);
        }
        for (int k = 0; k < n; ++k) s.tokens.push_back(static_cast<int>(srng() % 256));
        corpus.push_back(s);
    }
    ArConfig cfg;
    cfg.max_pis = 4;
    cfg.steps = 600;
    TransformerPredictor model(cfg);
    train_ar(corpus, model);
    Rng mrng(99);
    long hits = 0, total = 0;
    for (int round = 0; round < 4; ++round)
        for (const auto& s : corpus) {
            MaskSample m = sample_mask(s.tokens, mrng);
            auto pred = model.predict(m.masked, s.condition);
            for (int pos : m.positions) {
                const int am = static_cast<int>(std::max_element(pred[pos].begin(), pred[pos].end()) - pred[pos].begin());
                hits += am == s.tokens[pos];
                ++total;
            }
        }
    const double acc = total ? static_cast<double>(hits) / total : 0.0;
    ok = ok && acc > 0.9;
    return {ok, detail + fmt("toy predictor masked accuracy %.3f over %ld positions (%d steps); %.1fs", acc, total,
                             cfg.steps, seconds_since(t0))};
}

// ------------------------------------------------------------------ 9

std::vector<int> node_values(const Circuit& c, std::uint64_t row) {
    std::vector<int> val(c.size(), -1);
    std::function<int(int)> go = [&](int v) -> int {
        if (val[v] >= 0) return val[v];
        const auto& in = c.fanins(v);
        int out = 0;
        if (c.kind(v) == NodeKind::PI) {
            const auto& pis = c.pi_ids();
            out = static_cast<int>((row >> (std::find(pis.begin(), pis.end(), v) - pis.begin())) & 1U);
        } else if (c.kind(v) == NodeKind::PO) {
            out = go(in.at(0));
        } else {
            out = !(go(in.at(0)) && go(in.size() == 2 ? in[1] : in[0]));
        }
        return val[v] = out;
    };
    for (int v = 0; v < c.size(); ++v) go(v);
    return val;
}

Outcome criterion9() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(909);
    std::vector<std::pair<std::string, Circuit>> circuits;
    int conv_ok = 0;
    for (int i = 0; i < 50; ++i) {
        const int npi = 2 + i % 14, nand = 8 + static_cast<int>(rng() % 30), npo = 1 + static_cast<int>(rng() % 4);
        AigCircuit aig = random_aig(npi, nand, npo, rng);
        Circuit c = aig_to_nand(aig);
        bool same = validate(c).empty() && c.num_pis() == npi && c.num_pos() == npo;
        for (std::uint64_t r = 0; same && r < (std::uint64_t{1} << npi); ++r)
            same = oracle::eval_circuit(c, r) == oracle::eval_aig(aig, r);
        conv_ok += same;
        circuits.emplace_back(fmt("aig%02d", i), std::move(c));
    }

    // Extraction: closure and cut-simulation consistency on every pivot.
    int subs = 0, closed = 0, consistent = 0;
    ExtractionConfig cfg;
    for (const auto& [name, c] : circuits)
        for (int v = 0; v < c.size(); ++v) {
            if (c.kind(v) == NodeKind::PI) continue;
            Subcircuit s = expand_fanout(c, extract_fanin(c, v, cfg.max_inputs));
            ++subs;
            std::set<int> inside(s.internal.begin(), s.internal.end());
            inside.insert(s.cut.begin(), s.cut.end());
            bool cl = s.circuit.num_pis() <= 15 && s.circuit.num_pos() <= 15;
            for (int u : s.internal)
                for (int d : c.fanins(u)) cl = cl && inside.count(d);
            closed += cl;
            bool cons = true;
            for (int k = 0; k < 32 && cons; ++k) {
                const std::uint64_t row = rng() & ((std::uint64_t{1} << c.num_pis()) - 1);
                const auto pv = node_values(c, row);
                std::uint64_t sub_row = 0;
                const auto& spi = s.circuit.pi_ids();
                for (std::size_t q = 0; q < spi.size(); ++q)
                    sub_row |= static_cast<std::uint64_t>(pv[s.origin[spi[q]]]) << q;
                const auto outs = oracle::eval_circuit(s.circuit, sub_row);
                const auto& spo = s.circuit.po_ids();
                for (std::size_t q = 0; q < spo.size(); ++q) cons = cons && outs[q] == pv[s.origin[spo[q]]];
            }
            consistent += cons;
        }

    // Whole corpus: labels, caps, dedup, augmentations, shard round trip.
    cfg.seed = 9;
    Corpus corpus = build_corpus(circuits, cfg);
    int labels = 0, caps = 0, aug_ok = 0;
    std::map<std::string, int> per_key;
    for (const auto& s : corpus.samples) {
        labels += oracle::matches(s.circuit, s.table) && validate(s.circuit).empty();
        caps += s.circuit.num_pis() <= 15 && s.circuit.num_pos() <= 15;
        ++per_key[s.table.key()];
        Circuit sh = augment_shuffle(s.circuit, rng);
        Circuit id = augment_idle(s.circuit, 0.8 * uniform01(rng), rng);
        aug_ok += validate(sh).empty() && validate(id).empty() && oracle::matches(sh, s.table) &&
                  oracle::matches(id, s.table);
    }
    int max_per_key = 0;
    for (const auto& [k, n] : per_key) max_per_key = std::max(max_per_key, n);
    const fs::path dir = fs::temp_directory_path() / fmt("logicforge-acc9-%d", static_cast<int>(::getpid()));
    int shard_max = 0;
    std::size_t round_trip = 0;
    for (const auto& shard : write_corpus(dir, corpus, 200)) {
        std::map<std::string, int> k;
        for (const auto& s : read_shard(shard)) {
            shard_max = std::max(shard_max, ++k[s.table.key()]);
            round_trip += oracle::matches(s.circuit, s.table);
        }
    }
    fs::remove_all(dir);
    const int n = static_cast<int>(corpus.samples.size());
    const bool ok = conv_ok == 50 && closed == subs && consistent == subs && n > 0 && labels == n && caps == n &&
                    aug_ok == n && max_per_key <= 5 && shard_max <= 5 && round_trip == corpus.samples.size();
    return {ok, fmt("aig->nand %d/50; subcircuits %d closed %d consistent %d; samples %d labels %d caps %d "
                    "augment %d; max per table %d (shards %d); round trip %zu; %.1fs",
                    conv_ok, subs, closed, consistent, n, labels, caps, aug_ok, max_per_key, shard_max, round_trip,
                    seconds_since(t0))};
}

// ------------------------------------------------------------------ 10

Outcome criterion10() {
    const double a = improvement_percent(88715, 52023);
    const double b = improvement_percent(81.40, 73.40);
    const bool ok_a = std::abs(a - 41.36) <= 0.01, ok_b = std::abs(b - 9.54) <= 0.01;
    return {ok_a && ok_b, fmt("88715->52023: %.4f%% (expect 41.36, %s); 81.40->73.40: %.4f%% (expect 9.54, %s)", a,
                              ok_a ? "ok" : "off", b, ok_b ? "ok" : "off")};
}

} // namespace

int main(int argc, char** argv) {
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--cli" && i + 1 < argc) g_cli = argv[++i];
        else selected.push_back(std::stoi(a));
    }
    if (selected.empty())
        for (int i = 1; i <= 10; ++i) selected.push_back(i);
    const std::map<int, std::function<Outcome()>> all{
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},  {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
    bool all_ok = true;
    for (int id : selected) {
        auto it = all.find(id);
        if (it == all.end()) {
            std::cerr << "unknown criterion " << id << '\n';
            return 2;
        }
        Outcome o;
        try {
            o = it->second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
        all_ok = all_ok && o.pass;
    }
    return all_ok ? 0 : 1;
}
