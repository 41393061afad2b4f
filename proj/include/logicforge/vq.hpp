#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "logicforge/circuit.hpp"
#include "logicforge/dag_repair.hpp"
#include "logicforge/tape.hpp"

namespace logicforge {

struct VqConfig {
    int codebook_size = 256;   // K
    int code_dim = 4;          // d_c
    int model_dim = 64;        // d
    int message_rounds = 3;
    int decoder_blocks = 2;
    double beta = 0.25;
    double learning_rate = 3e-3;
    int steps = 2000;
    int batch_size = 8;
    bool gumbel = true;        // Gumbel token sampling during training
    double tau_initial = 1.0;
    double tau_final = 0.5;
    double gumbel_scale = 1000.0;  // sampling logits are gumbel_scale * cosine / tau
    double grad_clip = 5.0;
    std::uint64_t seed = 0;

    void check() const;
    std::string to_json() const;
    static VqConfig from_json(const std::string& text);
    // Stable 16-hex-digit digest of the architecture fields (not the
    // training schedule); checkpoints of dependent models record it.
    std::string hash() const;
};

// Encoder, codebook and decoder parameters.
class VqModel {
public:
    explicit VqModel(const VqConfig& config);

    const VqConfig& config() const { return config_; }
    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }
    const ad::Mat& codebook() const { return params_.get("codebook").value; }
    ad::Mat& codebook() { return params_.get("codebook").value; }

private:
    VqConfig config_;
    ad::ParamStore params_;
};

// Per-node input features: kind one-hot, in/out degree, depth encoding.
ad::Mat node_features(const Circuit& circuit);
inline constexpr int kNodeFeatureDim = 3 + 2 + 8;

// Records the encoder on a tape; rows are nodes, columns the code dimension.
ad::Var encode(ad::Tape& tape, const Circuit& circuit, VqModel& model);
// Z = g_E(V, A) without recording gradients.
ad::Mat encode(const Circuit& circuit, const VqModel& model);

struct Quantized {
    std::vector<int> tokens;  // 0-based code ids
    ad::Mat codes;            // l2-normalized code row per node
    int zero_rows = 0;        // rows that fell back to code 0
};

// Nearest code by cosine similarity on l2-normalized rows. The l2-distance
// argmin is computed independently and must agree; a zero row maps to code 0.
Quantized quantize(const ad::Mat& z, const ad::Mat& codebook);

// Decoder on a tape: code rows (N x d_c, normalized) and node kinds to edge
// probabilities sigma(f1(X) f2(X)^T).
ad::Var decode_edges(ad::Tape& tape, ad::Var codes, const std::vector<NodeKind>& kinds, VqModel& model);
ProbabilityMatrix decode_edges(const ad::Mat& codes, const std::vector<NodeKind>& kinds, const VqModel& model);
// Rows of the codebook for the given tokens, normalized.
ad::Mat code_rows(const VqModel& model, const std::vector<int>& tokens);

inline constexpr double kRecClamp = 1e-7;

// Mean BCE over all N^2 entries against the binary adjacency.
double loss_rec(const ProbabilityMatrix& probs, const BinaryMatrix& adjacency);
// rec + mean_i ||z_i - e_i||^2 + beta * mean_i ||z_i - e_i||^2 (values only;
// the two distance terms differ only in where gradients flow).
double loss_vq(const ad::Mat& z, const ad::Mat& selected, double beta, double rec);

struct Utilization {
    double used_fraction = 0.0;
    double perplexity = 0.0;
};
Utilization codebook_utilization(const std::vector<int>& tokens, int codebook_size);

// Area under the ROC curve of probs as a score for adjacency, over all
// ordered pairs i != j. Ties count half.
double edge_auc(const ProbabilityMatrix& probs, const BinaryMatrix& adjacency);

struct VqEpochMetrics {
    int epoch = 0;
    int step = 0;
    double loss_rec = 0.0;
    double loss_vq = 0.0;
    double used_fraction = 0.0;
    double perplexity = 0.0;
    int revived = 0;
};
using VqMetricsSink = std::function<void(const VqEpochMetrics&)>;

struct VqTrainState {
    int step = 0;
    int adam_steps = 0;
    int halt_at = -1;  // stop at the end of the epoch reaching this step; -1 runs to config.steps
};

// Minibatch Adam on L_vq. One epoch is one pass over the corpus in a seeded
// shuffled order; codes unused for a whole epoch are reset to a random encoder
// output from that epoch. Resumes from state.step when given.
std::vector<VqEpochMetrics> train_vq(const std::vector<Circuit>& corpus, VqModel& model,
                                     VqTrainState* state = nullptr, const VqMetricsSink& sink = {});

struct VqEvaluation {
    double mean_loss_rec = 0.0;
    double mean_auc = 0.0;
    double edge_accuracy = 0.0;  // thresholded at 0.5, over all N^2 entries
    Utilization utilization;
};
VqEvaluation evaluate_vq(const std::vector<Circuit>& corpus, const VqModel& model);

std::vector<int> tokenize(const Circuit& circuit, const VqModel& model);

void save_vq_checkpoint(const std::filesystem::path& path, const VqModel& model, const VqTrainState& state);
VqModel load_vq_checkpoint(const std::filesystem::path& path, VqTrainState* state = nullptr);

// One line per circuit, space-separated token ids.
void write_token_dump(std::ostream& out, const std::vector<std::vector<int>>& tokens);
std::vector<std::vector<int>> read_token_dump(std::istream& in);

} // namespace logicforge
