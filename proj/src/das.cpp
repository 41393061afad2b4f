#include "logicforge/das.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "logicforge/errors.hpp"

namespace logicforge {

double nand_relaxed(double x, double y) {
    assert(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0);
    return 1.0 - x * y;
}

void DasConfig::check() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
    if (!(loss_threshold > 0)) throw ConfigError("loss_threshold must be positive");
    if (!(tau_initial > 0) || !(tau_final > 0)) throw ConfigError("temperatures must be positive");
    if (reinit_patience < 1) throw ConfigError("reinit_patience must be at least 1");
    if (!(reinit_fraction > 0) || reinit_fraction > 1) throw ConfigError("reinit_fraction must be in (0, 1]");
    if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must be in [0, 1)");
    if (!(damp_factor >= 0 && damp_factor <= 1)) throw ConfigError("damp_factor must be in [0, 1]");
}

double DasConfig::temperature(int step) const {
    if (max_steps <= 1) return tau_initial;
    const double frac = std::clamp(static_cast<double>(step) / (max_steps - 1), 0.0, 1.0);
    return tau_initial * std::pow(tau_final / tau_initial, frac);
}

std::size_t LayeredNet::num_logits() const {
    std::size_t n = 0;
    for (const auto& s : selectors) n += s.logits.size();
    return n;
}

Layering make_layering(int num_pis, std::span<const int> hidden_widths, int num_pos) {
    if (num_pis < 1 || num_pos < 1) throw ConfigError("a layering needs at least one PI and one PO");
    Layering l;
    int next = 0;
    auto add_layer = [&](int width) {
        if (width < 1) throw ConfigError("layer widths must be positive");
        std::vector<int> ids(width);
        std::iota(ids.begin(), ids.end(), next);
        next += width;
        l.layers.push_back(std::move(ids));
    };
    add_layer(num_pis);
    for (int w : hidden_widths) add_layer(w);
    add_layer(num_pos);
    l.layer_of.assign(next, 0);
    for (int k = 0; k < l.num_layers(); ++k)
        for (int v : l.layers[k]) l.layer_of[v] = k;
    return l;
}

LayeredNet build_net(const Layering& layering, const DasConfig& config) {
    if (layering.num_layers() < 2 || layering.layers.front().empty() || layering.layers.back().empty()) {
        throw ConfigError("layering needs a PI layer and a PO layer");
    }
    LayeredNet net;
    net.layering = layering;
    net.tau = config.tau_initial;
    net.seed = config.seed;
    const int n = static_cast<int>(layering.layer_of.size());
    net.kinds.assign(n, NodeKind::NAND);
    const int last = layering.num_layers() - 1;
    for (int v : layering.layers.front()) net.kinds.at(v) = NodeKind::PI;
    for (int v : layering.layers.back()) net.kinds.at(v) = NodeKind::PO;
    net.pi_nodes = layering.layers.front();
    net.po_nodes = layering.layers.back();
    std::sort(net.pi_nodes.begin(), net.pi_nodes.end());
    std::sort(net.po_nodes.begin(), net.po_nodes.end());

    std::vector<int> earlier;  // sorted candidate ids for a node in layer k
    auto candidates_before = [&](int k) {
        earlier.clear();
        const int from = config.scope == CandidateScope::AllEarlier ? 0 : k - 1;
        for (int j = from; j < k; ++j) earlier.insert(earlier.end(), layering.layers[j].begin(), layering.layers[j].end());
        if (config.scope == CandidateScope::PreviousLayerAndInputs && from > 0)
            earlier.insert(earlier.end(), layering.layers[0].begin(), layering.layers[0].end());
        std::sort(earlier.begin(), earlier.end());
        return earlier;
    };
    for (int k = 1; k < last; ++k) {
        const auto cands = candidates_before(k);
        auto gates = layering.layers[k];
        std::sort(gates.begin(), gates.end());
        for (int v : gates) {
            net.gate_nodes.push_back(v);
            for (int s = 0; s < 2; ++s) net.selectors.push_back({cands, std::vector<double>(cands.size(), 0.0)});
        }
    }
    const auto po_cands = candidates_before(last);
    for (std::size_t k = 0; k < net.po_nodes.size(); ++k)
        net.selectors.push_back({po_cands, std::vector<double>(po_cands.size(), 0.0)});
    net.prior_mass.assign(net.gate_nodes.size(), 0.0);
    return net;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& x : p) sum += (x = std::exp(x - mx));
    for (double& x : p) x /= sum;
    return p;
}

namespace {

std::vector<double> logits_from_weights(const std::vector<double>& w, double epsilon) {
    std::vector<double> out(w.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) mean += (out[i] = std::log(w[i] + epsilon));
    mean /= static_cast<double>(w.size());
    for (double& x : out) x -= mean;
    return out;
}

// Normalized prior column for a selector; empty when it carries no mass.
std::vector<double> prior_weights(const Selector& sel, const ProbabilityMatrix& prior, int node, double& mass) {
    std::vector<double> w(sel.candidates.size());
    mass = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double p = prior(sel.candidates[i], node);
        if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("prior probabilities must be finite and non-negative");
        mass += (w[i] = p);
    }
    if (!(mass > 0.0)) return {};
    for (double& x : w) x /= mass;
    return w;
}

void seed_gate(LayeredNet& net, int gate, const ProbabilityMatrix& prior, double epsilon, SelectorSplit split,
               double damp_factor) {
    auto& first = net.selectors[net.first_selector_of_gate(gate)];
    auto& second = net.selectors[net.first_selector_of_gate(gate) + 1];
    double mass = 0.0;
    auto w = prior_weights(first, prior, net.gate_nodes[gate], mass);
    net.prior_mass[gate] = mass;
    if (w.empty()) {
        std::fill(first.logits.begin(), first.logits.end(), 0.0);
        std::fill(second.logits.begin(), second.logits.end(), 0.0);
        return;
    }
    first.logits = logits_from_weights(w, epsilon);
    if (split == SelectorSplit::DampFirstArgmax && w.size() > 1) {
        const auto top = std::max_element(w.begin(), w.end()) - w.begin();
        w[top] *= damp_factor;
        const double s = std::accumulate(w.begin(), w.end(), 0.0);
        if (s > 0.0)
            for (double& x : w) x /= s;
    }
    second.logits = logits_from_weights(w, epsilon);
}

struct Evaluation {
    std::size_t rows = 0;
    std::vector<std::vector<double>> probs;  // per selector
    std::vector<double> values;              // node-major, rows per node
    std::vector<double> mixed;               // selector-major, rows per selector
    const double* value(int node) const { return values.data() + static_cast<std::size_t>(node) * rows; }
};

std::vector<double> selector_probs(const Selector& sel, SelectorMode mode, const std::vector<double>* noise, double tau) {
    if (mode == SelectorMode::Soft) return softmax(sel.logits);
    std::vector<double> z(sel.logits.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (sel.logits[i] + (*noise)[i]) / tau;
    return softmax(z);
}

void mix(const LayeredNet& net, Evaluation& ev, std::size_t s) {
    const auto& sel = net.selectors[s];
    const auto& p = ev.probs[s];
    double* out = ev.mixed.data() + s * ev.rows;
    std::fill(out, out + ev.rows, 0.0);
    for (std::size_t i = 0; i < sel.candidates.size(); ++i) {
        const double* v = ev.value(sel.candidates[i]);
        const double pi = p[i];
        for (std::size_t r = 0; r < ev.rows; ++r) out[r] += pi * v[r];
    }
}

// Rows are given by a callback pi_value(pi_index, row).
template <typename PiValue>
Evaluation evaluate(const LayeredNet& net, std::size_t rows, PiValue pi_value, SelectorMode mode,
                    const SelectorNoise* noise) {
    if (mode == SelectorMode::Gumbel) {
        if (noise == nullptr) throw std::invalid_argument("Gumbel mode needs sampled selector noise");
        if (noise->size() != net.selectors.size()) throw ShapeError("selector noise does not match the net");
    }
    Evaluation ev;
    ev.rows = rows;
    ev.values.assign(static_cast<std::size_t>(net.num_nodes()) * rows, 0.0);
    ev.mixed.assign(net.selectors.size() * rows, 0.0);
    ev.probs.resize(net.selectors.size());
    for (std::size_t s = 0; s < net.selectors.size(); ++s)
        ev.probs[s] = selector_probs(net.selectors[s], mode, noise ? &(*noise)[s] : nullptr, net.tau);
    for (int k = 0; k < net.num_pis(); ++k) {
        double* v = ev.values.data() + static_cast<std::size_t>(net.pi_nodes[k]) * rows;
        for (std::size_t r = 0; r < rows; ++r) v[r] = pi_value(k, r);
    }
    for (int g = 0; g < net.num_gates(); ++g) {
        const std::size_t s = net.first_selector_of_gate(g);
        mix(net, ev, s);
        mix(net, ev, s + 1);
        const double* a = ev.mixed.data() + s * rows;
        const double* b = ev.mixed.data() + (s + 1) * rows;
        double* out = ev.values.data() + static_cast<std::size_t>(net.gate_nodes[g]) * rows;
        for (std::size_t r = 0; r < rows; ++r) out[r] = 1.0 - a[r] * b[r];
    }
    for (int k = 0; k < net.num_pos(); ++k) {
        const std::size_t s = net.selector_of_po(k);
        mix(net, ev, s);
        const double* m = ev.mixed.data() + s * rows;
        std::copy(m, m + rows, ev.values.data() + static_cast<std::size_t>(net.po_nodes[k]) * rows);
    }
    return ev;
}

Evaluation evaluate_table(const LayeredNet& net, int num_inputs, SelectorMode mode, const SelectorNoise* noise) {
    if (num_inputs != net.num_pis()) {
        throw ShapeError("table has " + std::to_string(num_inputs) + " inputs, net has " + std::to_string(net.num_pis()));
    }
    const std::size_t rows = std::size_t{1} << num_inputs;
    return evaluate(net, rows, [](int k, std::size_t r) { return static_cast<double>((r >> k) & 1U); }, mode, noise);
}

void check_table_shape(const LayeredNet& net, const TruthTable& table) {
    if (table.num_inputs() != net.num_pis() || table.num_outputs() != net.num_pos()) {
        throw ShapeError("truth table is " + std::to_string(table.num_inputs()) + "x" +
                         std::to_string(table.num_outputs()) + ", net has " + std::to_string(net.num_pis()) +
                         " PIs and " + std::to_string(net.num_pos()) + " POs");
    }
}

double bce_term(double y, bool label) {
    const double c = std::clamp(y, kBceClamp, 1.0 - kBceClamp);
    return label ? -std::log(c) : -std::log(1.0 - c);
}

} // namespace

void init_from_prior(LayeredNet& net, const ProbabilityMatrix& prior, double epsilon, SelectorSplit split,
                     double damp_factor) {
    if (prior.size() != net.num_nodes()) {
        throw ShapeError("prior is " + std::to_string(prior.size()) + "x" + std::to_string(prior.size()) +
                         ", net has " + std::to_string(net.num_nodes()) + " nodes");
    }
    if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
    for (int g = 0; g < net.num_gates(); ++g) seed_gate(net, g, prior, epsilon, split, damp_factor);
    for (int k = 0; k < net.num_pos(); ++k) {
        auto& sel = net.selectors[net.selector_of_po(k)];
        double mass = 0.0;
        const auto w = prior_weights(sel, prior, net.po_nodes[k], mass);
        if (w.empty()) std::fill(sel.logits.begin(), sel.logits.end(), 0.0);
        else sel.logits = logits_from_weights(w, epsilon);
    }
}

SelectorNoise sample_selector_noise(const LayeredNet& net, Rng& rng) {
    SelectorNoise noise(net.selectors.size());
    for (std::size_t s = 0; s < net.selectors.size(); ++s) {
        noise[s].resize(net.selectors[s].logits.size());
        for (double& g : noise[s]) g = sample_gumbel(rng);
    }
    return noise;
}

std::vector<double> forward(const LayeredNet& net, const std::vector<bool>& assignment, SelectorMode mode,
                            const SelectorNoise* noise) {
    if (static_cast<int>(assignment.size()) != net.num_pis()) throw ShapeError("assignment length differs from PI count");
    const auto ev = evaluate(net, 1, [&](int k, std::size_t) { return assignment[k] ? 1.0 : 0.0; }, mode, noise);
    std::vector<double> out;
    for (int po : net.po_nodes) out.push_back(*ev.value(po));
    return out;
}

std::vector<std::vector<double>> forward_table(const LayeredNet& net, int num_inputs, SelectorMode mode,
                                               const SelectorNoise* noise) {
    const auto ev = evaluate_table(net, num_inputs, mode, noise);
    std::vector<std::vector<double>> out;
    for (int po : net.po_nodes) out.emplace_back(ev.value(po), ev.value(po) + ev.rows);
    return out;
}

double loss(const LayeredNet& net, const TruthTable& table) {
    check_table_shape(net, table);
    const auto ev = evaluate_table(net, table.num_inputs(), SelectorMode::Soft, nullptr);
    double total = 0.0;
    for (int k = 0; k < net.num_pos(); ++k) {
        const double* y = ev.value(net.po_nodes[k]);
        for (std::size_t r = 0; r < ev.rows; ++r) total += bce_term(y[r], table.bit(k, r));
    }
    return total / static_cast<double>(ev.rows * net.num_pos());
}

LossAndGradient gradients(const LayeredNet& net, const TruthTable& table, SelectorMode mode, const SelectorNoise* noise) {
    check_table_shape(net, table);
    const auto ev = evaluate_table(net, table.num_inputs(), mode, noise);
    const std::size_t rows = ev.rows;
    const double scale = 1.0 / static_cast<double>(rows * net.num_pos());

    LossAndGradient out;
    out.grad.resize(net.selectors.size());
    std::vector<double> dvalues(ev.values.size(), 0.0);
    std::vector<double> dmix(rows);

    // Pushes d(loss)/d(mixed input) of selector s into its logits and drivers.
    auto backprop_selector = [&](std::size_t s) {
        const auto& sel = net.selectors[s];
        const auto& p = ev.probs[s];
        std::vector<double> dp(p.size(), 0.0);
        for (std::size_t i = 0; i < sel.candidates.size(); ++i) {
            const double* v = ev.value(sel.candidates[i]);
            double* dv = dvalues.data() + static_cast<std::size_t>(sel.candidates[i]) * rows;
            double acc = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                acc += dmix[r] * v[r];
                dv[r] += p[i] * dmix[r];
            }
            dp[i] = acc;
        }
        double dot = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * dp[i];
        const double temp_scale = mode == SelectorMode::Gumbel ? 1.0 / net.tau : 1.0;
        auto& g = out.grad[s];
        g.resize(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) g[i] = temp_scale * p[i] * (dp[i] - dot);
    };

    for (int k = net.num_pos() - 1; k >= 0; --k) {
        const double* y = ev.value(net.po_nodes[k]);
        for (std::size_t r = 0; r < rows; ++r) {
            const bool label = table.bit(k, r);
            out.loss += bce_term(y[r], label);
            const double yr = y[r];
            if (yr <= kBceClamp || yr >= 1.0 - kBceClamp) {
                dmix[r] = 0.0;
            } else {
                dmix[r] = label ? -scale / yr : scale / (1.0 - yr);
            }
        }
        backprop_selector(net.selector_of_po(k));
    }
    for (int g = net.num_gates() - 1; g >= 0; --g) {
        const std::size_t s = net.first_selector_of_gate(g);
        const double* dout = dvalues.data() + static_cast<std::size_t>(net.gate_nodes[g]) * rows;
        const double* a = ev.mixed.data() + s * rows;
        const double* b = ev.mixed.data() + (s + 1) * rows;
        std::vector<double> dout_copy(dout, dout + rows);
        for (std::size_t r = 0; r < rows; ++r) dmix[r] = -b[r] * dout_copy[r];
        backprop_selector(s);
        for (std::size_t r = 0; r < rows; ++r) dmix[r] = -a[r] * dout_copy[r];
        backprop_selector(s + 1);
    }
    out.loss *= scale;
    for (std::size_t s = 0; s < out.grad.size(); ++s)
        for (std::size_t i = 0; i < out.grad[s].size(); ++i)
            if (!std::isfinite(out.grad[s][i])) {
                const int owner = s < 2 * net.gate_nodes.size() ? net.gate_nodes[s / 2]
                                                                : net.po_nodes[s - 2 * net.gate_nodes.size()];
                throw DivergenceError("non-finite gradient at node " + std::to_string(owner));
            }
    return out;
}

namespace {
int argmax_candidate(const Selector& sel) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < sel.logits.size(); ++i)
        if (sel.logits[i] > sel.logits[best]) best = i;
    return sel.candidates[best];
}
} // namespace

Circuit discretize(const LayeredNet& net) {
    Circuit c(net.kinds);
    for (int g = 0; g < net.num_gates(); ++g) {
        const std::size_t s = net.first_selector_of_gate(g);
        c.add_edge(argmax_candidate(net.selectors[s]), net.gate_nodes[g]);
        c.add_edge(argmax_candidate(net.selectors[s + 1]), net.gate_nodes[g]);
    }
    for (int k = 0; k < net.num_pos(); ++k) c.add_edge(argmax_candidate(net.selectors[net.selector_of_po(k)]), net.po_nodes[k]);
    return c;
}

double accuracy(const Circuit& circuit, const TruthTable& table) {
    if (circuit.num_pis() != table.num_inputs() || circuit.num_pos() != table.num_outputs()) {
        throw ShapeError("circuit and truth table PI/PO counts differ");
    }
    const auto got = truth_table(circuit);
    const std::size_t rows = table.num_rows();
    const std::size_t words = (rows + 63) / 64;
    std::size_t wrong = 0;
    for (std::size_t w = 0; w < words; ++w) {
        std::uint64_t diff = 0;
        for (int o = 0; o < table.num_outputs(); ++o) diff |= got.words(o)[w] ^ table.words(o)[w];
        if (rows < 64) diff &= (std::uint64_t{1} << rows) - 1;
        wrong += static_cast<std::size_t>(std::popcount(diff));
    }
    return static_cast<double>(rows - wrong) / static_cast<double>(rows);
}

double bitsd(const LayeredNet& net, const TruthTable& table) {
    check_table_shape(net, table);
    const auto ev = evaluate_table(net, table.num_inputs(), SelectorMode::Soft, nullptr);
    double total = 0.0;
    for (int k = 0; k < net.num_pos(); ++k) {
        const double* y = ev.value(net.po_nodes[k]);
        for (std::size_t r = 0; r < ev.rows; ++r) total += std::abs(y[r] - (table.bit(k, r) ? 1.0 : 0.0));
    }
    return total / static_cast<double>(ev.rows * net.num_pos());
}

int used_nands(const Circuit& circuit) {
    std::vector<bool> seen(circuit.size(), false);
    std::vector<int> work(circuit.po_ids().begin(), circuit.po_ids().end());
    for (int v : work) seen[v] = true;
    int count = 0;
    while (!work.empty()) {
        const int v = work.back();
        work.pop_back();
        if (circuit.kind(v) == NodeKind::NAND) ++count;
        for (int u : circuit.fanins(v))
            if (!seen[u]) {
                seen[u] = true;
                work.push_back(u);
            }
    }
    return count;
}

std::vector<int> reinit_stuck(LayeredNet& net, const ProbabilityMatrix* prior, const DasConfig& config,
                              int stagnant_steps, Rng& rng) {
    if (stagnant_steps < config.reinit_patience || net.num_gates() == 0) return {};
    std::vector<int> order(net.num_gates());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return net.prior_mass[a] < net.prior_mass[b]; });
    const int count = std::max(1, static_cast<int>(std::ceil(config.reinit_fraction * net.num_gates())));
    order.resize(std::min(count, net.num_gates()));
    std::normal_distribution<double> logit_noise(0.0, config.reinit_noise);
    std::uniform_real_distribution<double> weight_noise(0.0, config.reinit_noise);
    for (int g : order) {
        for (int k = 0; k < 2; ++k) {
            auto& sel = net.selectors[net.first_selector_of_gate(g) + k];
            if (prior == nullptr) {
                for (double& x : sel.logits) x = logit_noise(rng);
                continue;
            }
            // Noise goes into the normalized prior weights, so candidates the
            // prior ruled out become reachable again.
            double mass = 0.0;
            auto w = prior_weights(sel, *prior, net.gate_nodes[g], mass);
            if (w.empty()) w.assign(sel.candidates.size(), 1.0 / static_cast<double>(sel.candidates.size()));
            double total = 0.0;
            for (double& x : w) total += (x += weight_noise(rng));
            for (double& x : w) x /= total;
            sel.logits = logits_from_weights(w, config.epsilon);
        }
    }
    std::sort(order.begin(), order.end());
    return order;
}

std::string DasReport::to_json() const {
    nlohmann::json j{{"steps_used", steps_used},
                     {"final_loss", final_loss},
                     {"accuracy", accuracy},
                     {"used_nand_count", used_nand_count},
                     {"search_space_gate_count", search_space_gate_count},
                     {"bitsd_initial", bitsd_initial},
                     {"converged", converged},
                     {"reinit_count", reinit_count},
                     {"step_unit", "optimizer_step"}};
    return j.dump(2);
}

DasReport DasReport::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    DasReport r;
    r.steps_used = j.at("steps_used");
    r.final_loss = j.at("final_loss");
    r.accuracy = j.at("accuracy");
    r.used_nand_count = j.at("used_nand_count");
    r.search_space_gate_count = j.at("search_space_gate_count");
    r.bitsd_initial = j.at("bitsd_initial");
    r.converged = j.at("converged");
    r.reinit_count = j.value("reinit_count", 0);
    return r;
}

TrainResult train(LayeredNet net, const TruthTable& table, const DasConfig& config, const ProbabilityMatrix* prior,
                  const MetricsSink& sink, int metrics_every) {
    config.check();
    check_table_shape(net, table);
    Rng rng(split_seed(config.seed, "das-train"));
    DasReport report;
    report.search_space_gate_count = net.num_gates();
    report.bitsd_initial = bitsd(net, table);

    std::vector<std::vector<double>> m(net.selectors.size()), v(net.selectors.size());
    for (std::size_t s = 0; s < net.selectors.size(); ++s) {
        m[s].assign(net.selectors[s].logits.size(), 0.0);
        v[s].assign(net.selectors[s].logits.size(), 0.0);
    }
    double current = loss(net, table);
    double best = current;
    int stagnant = 0;
    int step = 0;
    double b1_pow = 1.0, b2_pow = 1.0;
    while (true) {
        if (!std::isfinite(current)) throw DasDivergence("DAS loss became non-finite", net);
        if (current < config.loss_threshold) {
            report.converged = true;
            break;
        }
        if (step >= config.max_steps) break;
        net.tau = config.temperature(step);
        SelectorNoise noise;
        if (config.mode == SelectorMode::Gumbel) noise = sample_selector_noise(net, rng);
        LossAndGradient lg;
        try {
            lg = gradients(net, table, config.mode, config.mode == SelectorMode::Gumbel ? &noise : nullptr);
        } catch (const DivergenceError& e) {
            throw DasDivergence(e.what(), net);
        }
        const auto before = net.selectors;
        b1_pow *= config.beta1;
        b2_pow *= config.beta2;
        for (std::size_t s = 0; s < net.selectors.size(); ++s) {
            auto& logits = net.selectors[s].logits;
            for (std::size_t i = 0; i < logits.size(); ++i) {
                const double g = lg.grad[s][i];
                m[s][i] = config.beta1 * m[s][i] + (1 - config.beta1) * g;
                v[s][i] = config.beta2 * v[s][i] + (1 - config.beta2) * g * g;
                const double mhat = m[s][i] / (1 - b1_pow);
                const double vhat = v[s][i] / (1 - b2_pow);
                logits[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
            }
        }
        ++step;
        current = loss(net, table);
        if (!std::isfinite(current)) {
            LayeredNet last_good = net;
            last_good.selectors = before;
            throw DasDivergence("DAS loss became non-finite at step " + std::to_string(step), std::move(last_good));
        }
        if (current < best * (1.0 - 1e-5)) {
            best = current;
            stagnant = 0;
        } else {
            ++stagnant;
        }
        const auto touched = reinit_stuck(net, prior, config, stagnant, rng);
        if (!touched.empty()) {
            ++report.reinit_count;
            for (int g : touched)
                for (int k = 0; k < 2; ++k) {
                    const std::size_t s = net.first_selector_of_gate(g) + k;
                    std::fill(m[s].begin(), m[s].end(), 0.0);
                    std::fill(v[s].begin(), v[s].end(), 0.0);
                }
            current = loss(net, table);
            best = current;
            stagnant = 0;
        }
        if (sink && metrics_every > 0 && step % metrics_every == 0) sink({step, current, net.tau});
    }
    report.steps_used = step;
    report.final_loss = current;
    const Circuit circuit = discretize(net);
    report.accuracy = accuracy(circuit, table);
    report.used_nand_count = used_nands(circuit);
    return {std::move(net), report};
}

double improvement_percent(double baseline, double candidate) {
    if (baseline == 0.0) throw std::invalid_argument("improvement against a zero baseline is undefined");
    return (1.0 - candidate / baseline) * 100.0;
}

} // namespace logicforge
