#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "logicforge/circuit.hpp"
#include "logicforge/dag_repair.hpp"
#include "logicforge/rng.hpp"
#include "logicforge/tape.hpp"
#include "logicforge/vq.hpp"

namespace logicforge {

// Token sequences hold 0-based code ids; kMask marks a masked position.
inline constexpr int kMask = -1;
using TokenSeq = std::vector<int>;

// cos(pi r / 2) for r in [0, 1].
double gamma_schedule(double r);

// ceil(gamma(r) * n) with the exact endpoints gamma(0) = 1 and gamma(1) = 0.
int schedule_count(double r, int n);

// Truth table serialized as one condition token per PO.
struct Condition {
    int num_pis = 0;
    int num_pos = 0;
    std::vector<std::vector<std::uint8_t>> rows;  // per PO, 2^num_pis bits

    static Condition from_truth_table(const TruthTable& table);
    // num_pos x (2^max_pis + 2): bits as +-1 zero-padded, then PI and PO count fractions.
    ad::Mat features(int max_pis) const;
    void check() const;
};

struct MaskSample {
    TokenSeq masked;
    std::vector<int> positions;  // ascending
    double r = 0.0;
};

// Masks ceil(gamma(r) N) positions chosen uniformly without replacement.
MaskSample sample_mask(const TokenSeq& tokens, double r, Rng& rng);
// Same with r drawn uniformly from [0, 1].
MaskSample sample_mask(const TokenSeq& tokens, Rng& rng);

inline constexpr double kArProbClamp = 1e-9;

// Negative log-likelihood of the original tokens summed over the masked
// positions. Probabilities below kArProbClamp are clamped; clamped counts them.
double ar_loss(const std::vector<std::vector<double>>& predictions, const TokenSeq& original,
               const std::vector<int>& positions, int* clamped = nullptr);

// Per-position distributions over the K codes for a partially masked sequence.
class TokenPredictor {
public:
    virtual ~TokenPredictor() = default;
    virtual int vocab_size() const = 0;
    virtual std::vector<std::vector<double>> predict(const TokenSeq& masked, const Condition& condition) = 0;
};

// Puts all mass on a fixed target sequence.
class OraclePredictor : public TokenPredictor {
public:
    OraclePredictor(TokenSeq target, int vocab);
    int vocab_size() const override { return vocab_; }
    std::vector<std::vector<double>> predict(const TokenSeq& masked, const Condition& condition) override;

private:
    TokenSeq target_;
    int vocab_;
};

struct DecodeIteration {
    int iteration = 0;
    int remaining_masked = 0;           // after this iteration
    std::vector<int> committed;         // positions committed in this iteration
    std::vector<double> scores;         // per position; committed-before entries are +inf
};

struct DecodeResult {
    TokenSeq tokens;
    std::vector<DecodeIteration> trace;
    int predictor_calls = 0;

    std::string trace_json() const;
};

// Iterative parallel decoding: T predictor calls, after call t exactly
// ceil(gamma((t+1)/T) N) positions remain masked. Newly committed positions are
// the top ones by sampled-token probability (ties to the lower index).
DecodeResult decode(TokenPredictor& predictor, int n, int iterations, const Condition& condition, Rng& rng);

struct ArConfig {
    int vocab = 256;  // K, must match the tokenizer
    int model_dim = 64;
    int blocks = 2;
    int ffn_mult = 2;
    int max_nodes = 64;
    int max_pis = 8;
    int max_pos = 16;
    double learning_rate = 3e-3;
    int steps = 1500;
    int batch_size = 8;
    double grad_clip = 5.0;
    std::uint64_t seed = 0;
    std::string vq_hash;  // tokenizer the token ids come from

    void check() const;
    std::string to_json() const;
    static ArConfig from_json(const std::string& text);
    std::string hash() const;
};

// Bidirectional attention stack: per block self-attention over the sequence,
// cross-attention to the condition tokens, and a feed-forward layer.
class TransformerPredictor : public TokenPredictor {
public:
    explicit TransformerPredictor(const ArConfig& config);

    int vocab_size() const override { return config_.vocab; }
    std::vector<std::vector<double>> predict(const TokenSeq& masked, const Condition& condition) override;

    // Log-probabilities (N x K) recorded on a tape.
    ad::Var log_probs(ad::Tape& tape, const TokenSeq& masked, const Condition& condition, bool trainable);

    const ArConfig& config() const { return config_; }
    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }

private:
    ArConfig config_;
    ad::ParamStore params_;
};

struct ArSample {
    TokenSeq tokens;
    Condition condition;
};

struct ArMetrics {
    int step = 0;
    double loss = 0.0;              // mean per masked token over the batch
    double masked_accuracy = 0.0;   // argmax hits over masked positions in the batch
};
using ArMetricsSink = std::function<void(const ArMetrics&)>;

struct ArTrainState {
    int step = 0;
    int adam_steps = 0;
    int halt_at = -1;  // stop once this step is reached; -1 runs to config.steps
};

std::vector<ArMetrics> train_ar(const std::vector<ArSample>& corpus, TransformerPredictor& predictor,
                                ArTrainState* state = nullptr, const ArMetricsSink& sink = {}, int metrics_every = 50);

// Argmax accuracy over masked positions, with masks drawn from a seeded
// sampler (rounds masks per sequence).
double masked_accuracy(const std::vector<ArSample>& corpus, TokenPredictor& predictor, std::uint64_t seed,
                       int rounds = 4);

void save_ar_checkpoint(const std::filesystem::path& path, const TransformerPredictor& predictor,
                        const ArTrainState& state);
TransformerPredictor load_ar_checkpoint(const std::filesystem::path& path, ArTrainState* state = nullptr);

// Node kinds used for generation: PIs first, POs last, NANDs between.
std::vector<NodeKind> generation_kinds(int n, const Condition& condition);

// Tokens -> codebook rows -> decoder edge probabilities.
ProbabilityMatrix generate_structure(TokenPredictor& predictor, const VqModel& tokenizer, const Condition& condition,
                                     int n, int iterations, Rng& rng, DecodeResult* decoded = nullptr);

// Default node budget 4 * (#PI + #PO).
int default_node_budget(const Condition& condition);

} // namespace logicforge
