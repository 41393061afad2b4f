#include "logicforge/ar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "logicforge/errors.hpp"

namespace logicforge {

using ad::Mat;
using ad::Tape;
using ad::Var;

double gamma_schedule(double r) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::domain_error("gamma_schedule: r must lie in [0, 1]");
    if (r == 1.0) return 0.0;
    return std::cos(0.5 * std::numbers::pi * r);
}

int schedule_count(double r, int n) {
    if (n < 0) throw std::invalid_argument("schedule_count: negative length");
    if (r == 0.0) return n;
    if (r == 1.0) return 0;
    // Guard against products like 2.0000000000000004 rounding up.
    const double x = gamma_schedule(r) * n;
    const double nearest = std::round(x);
    const int count = std::abs(x - nearest) < 1e-9 ? static_cast<int>(nearest) : static_cast<int>(std::ceil(x));
    return std::clamp(count, 0, n);
}

Condition Condition::from_truth_table(const TruthTable& table) {
    Condition c;
    c.num_pis = table.num_inputs();
    c.num_pos = table.num_outputs();
    for (int o = 0; o < table.num_outputs(); ++o) {
        std::vector<std::uint8_t> row(table.num_rows());
        for (std::size_t r = 0; r < table.num_rows(); ++r) row[r] = table.bit(o, r) ? 1 : 0;
        c.rows.push_back(std::move(row));
    }
    return c;
}

void Condition::check() const {
    if (num_pis < 0 || num_pos < 1) throw ShapeError("condition needs at least one PO");
    if (static_cast<int>(rows.size()) != num_pos) throw ShapeError("condition row count differs from PO count");
    for (const auto& r : rows)
        if (r.size() != (std::size_t{1} << num_pis)) throw ShapeError("condition row length is not 2^#PI");
}

Mat Condition::features(int max_pis) const {
    check();
    if (num_pis > max_pis) {
        throw ShapeError("truth table has " + std::to_string(num_pis) + " PIs, predictor supports " +
                         std::to_string(max_pis));
    }
    const int width = (1 << max_pis);
    Mat f = Mat::Zero(num_pos, width + 2);
    for (int o = 0; o < num_pos; ++o) {
        for (std::size_t r = 0; r < rows[o].size(); ++r) f(o, static_cast<int>(r)) = rows[o][r] ? 1.0 : -1.0;
        f(o, width) = static_cast<double>(num_pis) / max_pis;
        f(o, width + 1) = static_cast<double>(num_pos) / 16.0;
    }
    return f;
}

MaskSample sample_mask(const TokenSeq& tokens, double r, Rng& rng) {
    for (int t : tokens)
        if (t == kMask) throw std::invalid_argument("sample_mask: input already contains MASK");
    const int n = static_cast<int>(tokens.size());
    const int count = schedule_count(r, n);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first count entries are a uniform subset.
    for (int i = 0; i < count; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    MaskSample s;
    s.r = r;
    s.positions.assign(idx.begin(), idx.begin() + count);
    std::sort(s.positions.begin(), s.positions.end());
    s.masked = tokens;
    for (int p : s.positions) s.masked[p] = kMask;
    return s;
}

MaskSample sample_mask(const TokenSeq& tokens, Rng& rng) {
    const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return sample_mask(tokens, r, rng);
}

double ar_loss(const std::vector<std::vector<double>>& predictions, const TokenSeq& original,
               const std::vector<int>& positions, int* clamped) {
    if (predictions.size() != original.size()) throw ShapeError("ar_loss: predictions must cover every position");
    double total = 0.0;
    int low = 0;
    for (int p : positions) {
        const auto& dist = predictions.at(p);
        const int target = original.at(p);
        if (target < 0 || target >= static_cast<int>(dist.size())) throw std::out_of_range("ar_loss: target outside vocabulary");
        double prob = dist[target];
        if (prob < kArProbClamp) {
            prob = kArProbClamp;
            ++low;
        }
        total -= std::log(prob);
    }
    if (clamped) *clamped = low;
    return total;
}

OraclePredictor::OraclePredictor(TokenSeq target, int vocab) : target_(std::move(target)), vocab_(vocab) {
    for (int t : target_)
        if (t < 0 || t >= vocab_) throw std::out_of_range("oracle target outside vocabulary");
}

std::vector<std::vector<double>> OraclePredictor::predict(const TokenSeq& masked, const Condition&) {
    if (masked.size() != target_.size()) throw ShapeError("oracle predictor: sequence length differs from target");
    std::vector<std::vector<double>> out(masked.size(), std::vector<double>(vocab_, 0.0));
    for (std::size_t i = 0; i < masked.size(); ++i) out[i][target_[i]] = 1.0;
    return out;
}

namespace {
void check_distributions(const std::vector<std::vector<double>>& probs, int n, int vocab) {
    if (static_cast<int>(probs.size()) != n) throw std::runtime_error("predictor returned the wrong number of positions");
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(probs[i].size()) != vocab)
            throw std::runtime_error("predictor distribution at position " + std::to_string(i) + " has the wrong size");
        double s = 0.0;
        for (double p : probs[i]) {
            if (!(p >= 0.0) || !std::isfinite(p))
                throw std::runtime_error("predictor returned a negative or non-finite probability at position " + std::to_string(i));
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-6)
            throw std::runtime_error("predictor distribution at position " + std::to_string(i) + " does not sum to 1");
    }
}
} // namespace

DecodeResult decode(TokenPredictor& predictor, int n, int iterations, const Condition& condition, Rng& rng) {
    if (iterations < 1) throw std::invalid_argument("decode: T must be at least 1");
    if (n < 0) throw std::invalid_argument("decode: negative length");
    const int vocab = predictor.vocab_size();
    DecodeResult res;
    res.tokens.assign(n, kMask);
    for (int t = 0; t < iterations; ++t) {
        auto probs = predictor.predict(res.tokens, condition);
        ++res.predictor_calls;
        check_distributions(probs, n, vocab);
        DecodeIteration it;
        it.iteration = t;
        it.scores.assign(n, std::numeric_limits<double>::infinity());
        std::vector<int> sampled(n, kMask);
        for (int i = 0; i < n; ++i) {
            if (res.tokens[i] != kMask) continue;
            std::discrete_distribution<int> dist(probs[i].begin(), probs[i].end());
            sampled[i] = dist(rng);
            it.scores[i] = probs[i][sampled[i]];
        }
        const int remaining = t + 1 == iterations ? 0 : schedule_count(static_cast<double>(t + 1) / iterations, n);
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return it.scores[a] > it.scores[b]; });
        for (int k = 0; k < n - remaining; ++k) {
            const int pos = order[k];
            if (res.tokens[pos] != kMask) continue;
            res.tokens[pos] = sampled[pos];
            it.committed.push_back(pos);
        }
        std::sort(it.committed.begin(), it.committed.end());
        it.remaining_masked = static_cast<int>(std::count(res.tokens.begin(), res.tokens.end(), kMask));
        res.trace.push_back(std::move(it));
    }
    return res;
}

std::string DecodeResult::trace_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& it : trace) {
        nlohmann::json scores = nlohmann::json::array();
        for (double s : it.scores) scores.push_back(std::isinf(s) ? nlohmann::json(nullptr) : nlohmann::json(s));
        j.push_back({{"iteration", it.iteration},
                     {"remaining_masked", it.remaining_masked},
                     {"committed", it.committed},
                     {"scores", scores}});
    }
    return nlohmann::json{{"tokens", tokens}, {"predictor_calls", predictor_calls}, {"iterations", j}}.dump(2);
}

void ArConfig::check() const {
    if (vocab < 2) throw ConfigError("vocab must be at least 2");
    if (model_dim < 1 || blocks < 0 || ffn_mult < 1) throw ConfigError("invalid predictor shape");
    if (max_nodes < 1 || max_pis < 0 || max_pis > 12 || max_pos < 1) throw ConfigError("invalid predictor limits");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (steps < 0 || batch_size < 1) throw ConfigError("invalid training schedule");
}

std::string ArConfig::to_json() const {
    return nlohmann::json{{"vocab", vocab},           {"model_dim", model_dim},
                          {"blocks", blocks},         {"ffn_mult", ffn_mult},
                          {"max_nodes", max_nodes},   {"max_pis", max_pis},
                          {"max_pos", max_pos},       {"learning_rate", learning_rate},
                          {"steps", steps},           {"batch_size", batch_size},
                          {"grad_clip", grad_clip},   {"seed", seed},
                          {"vq_hash", vq_hash}}
        .dump(2);
}

ArConfig ArConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ArConfig c;
    c.vocab = j.value("vocab", c.vocab);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.blocks = j.value("blocks", c.blocks);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.max_nodes = j.value("max_nodes", c.max_nodes);
    c.max_pis = j.value("max_pis", c.max_pis);
    c.max_pos = j.value("max_pos", c.max_pos);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.seed = j.value("seed", c.seed);
    c.vq_hash = j.value("vq_hash", c.vq_hash);
    c.check();
    return c;
}

std::string ArConfig::hash() const {
    const nlohmann::json arch{{"vocab", vocab},   {"d", model_dim},       {"blocks", blocks},
                              {"ffn", ffn_mult},  {"max_nodes", max_nodes}, {"max_pis", max_pis},
                              {"max_pos", max_pos}, {"vq", vq_hash}};
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : arch.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

TransformerPredictor::TransformerPredictor(const ArConfig& config) : config_(config) {
    config_.check();
    Rng rng(split_seed(config_.seed, "ar-init"));
    const int d = config_.model_dim, h = config_.ffn_mult * d;
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    params_.add("tok", config_.vocab + 1, d, 1.0, rng);
    params_.add("pos", config_.max_nodes, d, 1.0, rng);
    params_.add("kind", 3, d, 1.0, rng);
    const int cond_width = (1 << config_.max_pis) + 2;
    params_.add("cond.w", cond_width, d, 1.0 / std::sqrt(static_cast<double>(cond_width)), rng);
    params_.add("cond.b", Mat::Zero(1, d));
    params_.add("cond.po", config_.max_pos, d, 1.0, rng);
    for (int b = 0; b < config_.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        for (const char* name : {"self.q", "self.k", "self.v", "self.o", "cross.q", "cross.k", "cross.v", "cross.o"})
            params_.add(p + name, d, d, s, rng);
        params_.add(p + "ff1.w", d, h, s, rng);
        params_.add(p + "ff1.b", Mat::Zero(1, h));
        params_.add(p + "ff2.w", h, d, 1.0 / std::sqrt(static_cast<double>(h)), rng);
        params_.add(p + "ff2.b", Mat::Zero(1, d));
    }
    params_.add("out.w", d, config_.vocab, s, rng);
    params_.add("out.b", Mat::Zero(1, config_.vocab));
}

std::vector<NodeKind> generation_kinds(int n, const Condition& condition) {
    return default_node_kinds(n, condition.num_pis, condition.num_pos);
}

Var TransformerPredictor::log_probs(Tape& t, const TokenSeq& masked, const Condition& condition, bool trainable) {
    const int n = static_cast<int>(masked.size());
    if (n < 1 || n > config_.max_nodes) {
        throw ShapeError("sequence length " + std::to_string(n) + " outside 1.." + std::to_string(config_.max_nodes));
    }
    if (condition.num_pos > config_.max_pos) throw ShapeError("condition has more POs than the predictor supports");
    auto P = [&](const std::string& name) {
        return trainable ? t.param(params_.get(name)) : t.constant(params_.get(name).value);
    };
    std::vector<int> ids(n), pos(n), kinds(n);
    const auto kind_of = generation_kinds(n, condition);
    for (int i = 0; i < n; ++i) {
        if (masked[i] != kMask && (masked[i] < 0 || masked[i] >= config_.vocab))
            throw std::out_of_range("token id outside vocabulary");
        ids[i] = masked[i] == kMask ? config_.vocab : masked[i];
        pos[i] = i;
        kinds[i] = kind_of[i] == NodeKind::PI ? 0 : kind_of[i] == NodeKind::PO ? 1 : 2;
    }
    Var x = t.add(t.gather_rows(P("tok"), ids), t.gather_rows(P("pos"), pos));
    x = t.add(x, t.gather_rows(P("kind"), kinds));
    std::vector<int> po_idx(condition.num_pos);
    std::iota(po_idx.begin(), po_idx.end(), 0);
    Var c = t.add_row(t.matmul(t.constant(condition.features(config_.max_pis)), P("cond.w")), P("cond.b"));
    c = t.add(c, t.gather_rows(P("cond.po"), po_idx));

    const double scale = 1.0 / std::sqrt(static_cast<double>(config_.model_dim));
    auto attend = [&](Var q_in, Var kv_in, const std::string& p) {
        Var q = t.matmul(q_in, P(p + "q")), k = t.matmul(kv_in, P(p + "k")), v = t.matmul(kv_in, P(p + "v"));
        Var a = t.softmax_rows(t.scale(t.matmul(q, t.transpose(k)), scale));
        return t.matmul(t.matmul(a, v), P(p + "o"));
    };
    Var cn = t.layer_norm_rows(c);
    for (int b = 0; b < config_.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        Var h = t.layer_norm_rows(x);
        x = t.add(x, attend(h, h, p + "self."));
        x = t.add(x, attend(t.layer_norm_rows(x), cn, p + "cross."));
        h = t.layer_norm_rows(x);
        Var ff = t.relu(t.add_row(t.matmul(h, P(p + "ff1.w")), P(p + "ff1.b")));
        x = t.add(x, t.add_row(t.matmul(ff, P(p + "ff2.w")), P(p + "ff2.b")));
    }
    Var logits = t.add_row(t.matmul(t.layer_norm_rows(x), P("out.w")), P("out.b"));
    return t.log_softmax_rows(logits);
}

std::vector<std::vector<double>> TransformerPredictor::predict(const TokenSeq& masked, const Condition& condition) {
    Tape t;
    const Mat lp = log_probs(t, masked, condition, false).value();
    std::vector<std::vector<double>> out(lp.rows(), std::vector<double>(lp.cols()));
    for (int i = 0; i < lp.rows(); ++i) {
        double s = 0.0;
        for (int k = 0; k < lp.cols(); ++k) s += (out[i][k] = std::exp(lp(i, k)));
        for (double& p : out[i]) p /= s;
    }
    return out;
}

std::vector<ArMetrics> train_ar(const std::vector<ArSample>& corpus, TransformerPredictor& predictor,
                                ArTrainState* state, const ArMetricsSink& sink, int metrics_every) {
    const ArConfig& cfg = predictor.config();
    std::vector<ArMetrics> history;
    ArTrainState local;
    ArTrainState& st = state ? *state : local;
    if (corpus.empty() || st.step >= cfg.steps) return history;
    for (const auto& s : corpus) {
        s.condition.check();
        for (int tok : s.tokens)
            if (tok < 0 || tok >= cfg.vocab) throw std::out_of_range("training tokens must be valid code ids");
    }
    ad::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.grad_clip});
    adam.set_steps(st.adam_steps);
    const int per_epoch = static_cast<int>((corpus.size() + cfg.batch_size - 1) / cfg.batch_size);

    while (st.step < cfg.steps && (st.halt_at < 0 || st.step < st.halt_at)) {
        const int epoch = st.step / per_epoch, slot = st.step % per_epoch;
        std::vector<int> order(corpus.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(split_seed(cfg.seed ^ static_cast<std::uint64_t>(epoch), "ar-order"));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        Rng mask_rng(split_seed(cfg.seed ^ (static_cast<std::uint64_t>(st.step) << 20), "ar-mask"));

        predictor.params().zero_grad();
        const std::size_t begin = static_cast<std::size_t>(slot) * cfg.batch_size;
        const std::size_t end = std::min(begin + cfg.batch_size, corpus.size());
        double loss_sum = 0.0, hits = 0.0, masked_total = 0.0;
        for (std::size_t b = begin; b < end; ++b) {
            const ArSample& s = corpus[order[b]];
            MaskSample m = sample_mask(s.tokens, mask_rng);
            if (m.positions.empty()) continue;
            Tape t;
            Var lp = predictor.log_probs(t, m.masked, s.condition, true);
            std::vector<double> w(s.tokens.size(), 0.0);
            for (int p : m.positions) w[p] = 1.0 / static_cast<double>(m.positions.size());
            Var loss = t.pick_nll(lp, s.tokens, w);
            if (!std::isfinite(loss.value()(0, 0))) throw DivergenceError("AR loss became non-finite at step " + std::to_string(st.step));
            t.backward(t.scale(loss, 1.0 / static_cast<double>(end - begin)));
            loss_sum += loss.value()(0, 0);
            for (int p : m.positions) {
                Eigen::Index best;
                lp.value().row(p).maxCoeff(&best);
                hits += static_cast<int>(best) == s.tokens[p];
            }
            masked_total += static_cast<double>(m.positions.size());
        }
        adam.step(predictor.params().all());
        ++st.step;
        st.adam_steps = adam.steps();
        ArMetrics am{st.step, loss_sum / static_cast<double>(end - begin), masked_total ? hits / masked_total : 0.0};
        if (metrics_every > 0 && (st.step % metrics_every == 0 || st.step == cfg.steps)) {
            history.push_back(am);
            if (sink) sink(am);
        }
    }
    return history;
}

double masked_accuracy(const std::vector<ArSample>& corpus, TokenPredictor& predictor, std::uint64_t seed, int rounds) {
    Rng rng(split_seed(seed, "ar-eval"));
    double hits = 0, total = 0;
    for (const auto& s : corpus)
        for (int k = 0; k < rounds; ++k) {
            const auto m = sample_mask(s.tokens, rng);
            if (m.positions.empty()) continue;
            const auto probs = predictor.predict(m.masked, s.condition);
            for (int p : m.positions) {
                const auto& d = probs[p];
                const int best = static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
                hits += best == s.tokens[p];
                total += 1;
            }
        }
    return total ? hits / total : 0.0;
}

void save_ar_checkpoint(const std::filesystem::path& path, const TransformerPredictor& predictor,
                        const ArTrainState& state) {
    nlohmann::json j{{"format", "logicforge-ar"},
                     {"version", 1},
                     {"config", nlohmann::json::parse(predictor.config().to_json())},
                     {"config_hash", predictor.config().hash()},
                     {"vq_config_hash", predictor.config().vq_hash},
                     {"state", {{"step", state.step}, {"adam_steps", state.adam_steps}}},
                     {"params", nlohmann::json::parse(predictor.params().to_json(true))}};
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        out << j.dump();
    }
    std::filesystem::rename(tmp, path);
}

TransformerPredictor load_ar_checkpoint(const std::filesystem::path& path, ArTrainState* state) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != "logicforge-ar") throw ParseError(path.string() + " is not a predictor checkpoint");
    if (j.value("version", 0) != 1) throw ParseError("unsupported predictor checkpoint version");
    const ArConfig cfg = ArConfig::from_json(j.at("config").dump());
    if (cfg.hash() != j.value("config_hash", "")) throw ConfigError("predictor checkpoint config hash mismatch");
    TransformerPredictor p(cfg);
    p.params().load_json(j.at("params").dump());
    if (state) {
        state->step = j.at("state").value("step", 0);
        state->adam_steps = j.at("state").value("adam_steps", 0);
    }
    return p;
}

int default_node_budget(const Condition& condition) { return 4 * (condition.num_pis + condition.num_pos); }

ProbabilityMatrix generate_structure(TokenPredictor& predictor, const VqModel& tokenizer, const Condition& condition,
                                     int n, int iterations, Rng& rng, DecodeResult* decoded) {
    if (predictor.vocab_size() != tokenizer.config().codebook_size)
        throw ConfigError("predictor vocabulary differs from the tokenizer codebook size");
    const auto kinds = generation_kinds(n, condition);
    DecodeResult res = decode(predictor, n, iterations, condition, rng);
    auto probs = decode_edges(code_rows(tokenizer, res.tokens), kinds, tokenizer);
    if (decoded) *decoded = std::move(res);
    return probs;
}

} // namespace logicforge
