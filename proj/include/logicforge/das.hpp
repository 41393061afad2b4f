#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "logicforge/circuit.hpp"
#include "logicforge/dag_repair.hpp"
#include "logicforge/rng.hpp"

namespace logicforge {

// Relaxed NAND on [0, 1]^2; exact on boolean corners.
double nand_relaxed(double x, double y);

enum class SelectorMode { Soft, Gumbel };

// How the two selectors of a gate are seeded from one prior column.
enum class SelectorSplit {
    Identical,        // both selectors get the same logits
    DampFirstArgmax,  // second selector scales the first selector's argmax weight by damp_factor
};

// Which earlier nodes a gate or PO may select as drivers.
enum class CandidateScope {
    AllEarlier,              // every node in a strictly earlier layer
    PreviousLayer,           // only the layer directly below
    PreviousLayerAndInputs,  // the layer directly below plus the PIs
};

struct DasConfig {
    double learning_rate = 0.01;
    int max_steps = 50000;
    double loss_threshold = 1e-3;
    double tau_initial = 1.0;
    double tau_final = 0.1;
    SelectorMode mode = SelectorMode::Gumbel;
    int reinit_patience = 2000;
    double reinit_fraction = 0.1;
    double reinit_noise = 0.5;
    double epsilon = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    SelectorSplit split = SelectorSplit::Identical;
    CandidateScope scope = CandidateScope::AllEarlier;
    double damp_factor = 0.5;
    std::uint64_t seed = 0;

    // Throws ConfigError for non-positive fields.
    void check() const;
    // Temperature at an optimizer step: exponential decay from tau_initial to
    // tau_final over max_steps.
    double temperature(int step) const;
};

// A categorical choice among candidate driver nodes (ascending node ids).
struct Selector {
    std::vector<int> candidates;
    std::vector<double> logits;
};

// Relaxed NAND network over a fixed layering. Selectors are stored flat:
// gate g owns selectors 2g and 2g+1, PO k owns selector 2G + k.
class LayeredNet {
public:
    Layering layering;
    std::vector<NodeKind> kinds;
    std::vector<int> gate_nodes;      // NAND node ids, layer by layer
    std::vector<int> po_nodes;        // PO node ids in PO order
    std::vector<int> pi_nodes;        // PI node ids in PI order
    std::vector<Selector> selectors;
    std::vector<double> prior_mass;   // per gate, raw prior mass seen at initialization
    double tau = 1.0;
    std::uint64_t seed = 0;

    int num_nodes() const { return static_cast<int>(kinds.size()); }
    int num_gates() const { return static_cast<int>(gate_nodes.size()); }
    int num_pis() const { return static_cast<int>(pi_nodes.size()); }
    int num_pos() const { return static_cast<int>(po_nodes.size()); }
    std::size_t first_selector_of_gate(int gate) const { return 2 * static_cast<std::size_t>(gate); }
    std::size_t selector_of_po(int po) const { return 2 * gate_nodes.size() + po; }
    std::size_t num_logits() const;
};

// Fresh net with all-zero (uniform) selector logits. Layer 0 must hold the
// PIs, the last layer the POs, every other layer NAND gates.
LayeredNet build_net(const Layering& layering, const DasConfig& config);

// Layering with the given PI/PO counts and hidden NAND layer widths; node ids
// are PIs, then gates layer by layer, then POs.
Layering make_layering(int num_pis, std::span<const int> hidden_widths, int num_pos);

// Seeds every selector from the prior's column for its node:
// logits = log(w + eps) - mean(log(w + eps)), w normalized over candidates
// (uniform logits when the candidates carry no prior mass).
void init_from_prior(LayeredNet& net, const ProbabilityMatrix& prior, double epsilon,
                     SelectorSplit split = SelectorSplit::Identical, double damp_factor = 0.5);

std::vector<double> softmax(std::span<const double> logits);

// Per-selector Gumbel noise, shaped like the selector logits.
using SelectorNoise = std::vector<std::vector<double>>;
SelectorNoise sample_selector_noise(const LayeredNet& net, Rng& rng);

// PO values for one assignment. Gumbel mode requires noise.
std::vector<double> forward(const LayeredNet& net, const std::vector<bool>& assignment, SelectorMode mode,
                            const SelectorNoise* noise = nullptr);

// PO values for every truth-table row, outputs-major: result[o][r].
std::vector<std::vector<double>> forward_table(const LayeredNet& net, int num_inputs, SelectorMode mode,
                                               const SelectorNoise* noise = nullptr);

inline constexpr double kBceClamp = 1e-7;

// Mean binary cross-entropy of soft-mode outputs against the table.
double loss(const LayeredNet& net, const TruthTable& table);

struct LossAndGradient {
    double loss = 0.0;
    std::vector<std::vector<double>> grad;  // parallel to net.selectors[*].logits
};

// Reverse-mode gradient of the mean BCE w.r.t. every selector logit.
LossAndGradient gradients(const LayeredNet& net, const TruthTable& table, SelectorMode mode = SelectorMode::Soft,
                          const SelectorNoise* noise = nullptr);

// Argmax driver per selector (lowest id on ties); tied selectors of a gate
// collapse into a single edge (NAND(x, x)).
Circuit discretize(const LayeredNet& net);

// Fraction of rows on which every output matches.
double accuracy(const Circuit& circuit, const TruthTable& table);

// Mean |soft output - label| over all rows and outputs.
double bitsd(const LayeredNet& net, const TruthTable& table);

// NAND gates in the transitive fan-in of any PO.
int used_nands(const Circuit& circuit);

// Reinitializes the lowest-prior-mass fraction of gates (ties by gate order)
// once stagnant_steps reaches the patience. With a prior, each selector is
// re-seeded from its prior weights plus U(0, reinit_noise) per candidate;
// without one, logits are redrawn from N(0, reinit_noise^2). Returns the
// touched gate indices; empty when patience is not yet exceeded.
std::vector<int> reinit_stuck(LayeredNet& net, const ProbabilityMatrix* prior, const DasConfig& config,
                              int stagnant_steps, Rng& rng);

struct DasReport {
    int steps_used = 0;
    double final_loss = 0.0;
    double accuracy = 0.0;
    int used_nand_count = 0;
    int search_space_gate_count = 0;
    double bitsd_initial = 0.0;
    bool converged = false;
    int reinit_count = 0;

    std::string to_json() const;
    static DasReport from_json(const std::string& text);
    friend bool operator==(const DasReport&, const DasReport&) = default;
};

struct MetricsPoint {
    int step = 0;
    double loss = 0.0;
    double temperature = 0.0;
};
using MetricsSink = std::function<void(const MetricsPoint&)>;

struct TrainResult {
    LayeredNet net;
    DasReport report;
};

class DasDivergence : public std::runtime_error {
public:
    DasDivergence(const std::string& what, LayeredNet last_good)
        : std::runtime_error(what), last_good_(std::move(last_good)) {}
    const LayeredNet& last_good() const { return last_good_; }

private:
    LayeredNet last_good_;
};

// Adam on Gumbel-sampled (or soft) forward passes until the soft-mode loss
// drops below config.loss_threshold or max_steps optimizer steps ran. The
// prior, when given, is used for reinitialization of stuck gates.
TrainResult train(LayeredNet net, const TruthTable& table, const DasConfig& config,
                  const ProbabilityMatrix* prior = nullptr, const MetricsSink& sink = {}, int metrics_every = 100);

// Percentage decrease from baseline to candidate: (1 - candidate / baseline) * 100.
double improvement_percent(double baseline, double candidate);

} // namespace logicforge
