#include "logicforge/vq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "logicforge/errors.hpp"

namespace logicforge {

using ad::Mat;
using ad::Tape;
using ad::Var;

void VqConfig::check() const {
    if (codebook_size < 2) throw ConfigError("codebook_size must be at least 2");
    if (code_dim < 1 || model_dim < 1) throw ConfigError("dimensions must be positive");
    if (message_rounds < 0 || decoder_blocks < 0) throw ConfigError("layer counts must be non-negative");
    if (!(beta >= 0)) throw ConfigError("beta must be non-negative");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (steps < 0) throw ConfigError("steps must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (!(tau_initial > 0) || !(tau_final > 0)) throw ConfigError("temperatures must be positive");
    if (!(gumbel_scale > 0)) throw ConfigError("gumbel_scale must be positive");
}

std::string VqConfig::to_json() const {
    nlohmann::json j{{"codebook_size", codebook_size}, {"code_dim", code_dim},
                     {"model_dim", model_dim},         {"message_rounds", message_rounds},
                     {"decoder_blocks", decoder_blocks}, {"beta", beta},
                     {"learning_rate", learning_rate}, {"steps", steps},
                     {"batch_size", batch_size},       {"gumbel", gumbel},
                     {"tau_initial", tau_initial},     {"tau_final", tau_final},
                     {"gumbel_scale", gumbel_scale},   {"grad_clip", grad_clip},
                     {"seed", seed}};
    return j.dump(2);
}

VqConfig VqConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    VqConfig c;
    c.codebook_size = j.value("codebook_size", c.codebook_size);
    c.code_dim = j.value("code_dim", c.code_dim);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.message_rounds = j.value("message_rounds", c.message_rounds);
    c.decoder_blocks = j.value("decoder_blocks", c.decoder_blocks);
    c.beta = j.value("beta", c.beta);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.gumbel = j.value("gumbel", c.gumbel);
    c.tau_initial = j.value("tau_initial", c.tau_initial);
    c.tau_final = j.value("tau_final", c.tau_final);
    c.gumbel_scale = j.value("gumbel_scale", c.gumbel_scale);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.seed = j.value("seed", c.seed);
    c.check();
    return c;
}

std::string VqConfig::hash() const {
    const nlohmann::json arch{{"K", codebook_size},          {"dc", code_dim},
                              {"d", model_dim},              {"rounds", message_rounds},
                              {"blocks", decoder_blocks},    {"features", kNodeFeatureDim}};
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : arch.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

VqModel::VqModel(const VqConfig& config) : config_(config) {
    config_.check();
    Rng rng(split_seed(config_.seed, "vq-init"));
    const int d = config_.model_dim, dc = config_.code_dim;
    const double s_in = 1.0 / std::sqrt(static_cast<double>(kNodeFeatureDim));
    const double s_d = 1.0 / std::sqrt(static_cast<double>(d));

    Mat cb = ad::make_param("", config_.codebook_size, dc, 1.0, rng).value;
    for (int i = 0; i < cb.rows(); ++i) cb.row(i).normalize();
    params_.add("codebook", cb);

    params_.add("enc.in.w", kNodeFeatureDim, d, s_in, rng);
    params_.add("enc.in.b", Mat::Zero(1, d));
    for (int r = 0; r < config_.message_rounds; ++r) {
        const std::string p = "enc.round" + std::to_string(r) + ".";
        params_.add(p + "self", d, d, s_d, rng);
        params_.add(p + "pred", d, d, s_d, rng);
        params_.add(p + "succ", d, d, s_d, rng);
        params_.add(p + "b", Mat::Zero(1, d));
    }
    params_.add("enc.out.w", d, dc, s_d, rng);
    params_.add("enc.out.b", Mat::Zero(1, dc));

    params_.add("dec.up.w", dc, d, 1.0 / std::sqrt(static_cast<double>(dc)), rng);
    params_.add("dec.up.b", Mat::Zero(1, d));
    params_.add("dec.kind", 3, d, 1.0, rng);
    for (int b = 0; b < config_.decoder_blocks; ++b) {
        const std::string p = "dec.block" + std::to_string(b) + ".";
        params_.add(p + "q", d, d, s_d, rng);
        params_.add(p + "k", d, d, s_d, rng);
        params_.add(p + "v", d, d, s_d, rng);
        params_.add(p + "o", d, d, s_d, rng);
        params_.add(p + "ff1.w", d, 2 * d, s_d, rng);
        params_.add(p + "ff1.b", Mat::Zero(1, 2 * d));
        params_.add(p + "ff2.w", 2 * d, d, 1.0 / std::sqrt(2.0 * d), rng);
        params_.add(p + "ff2.b", Mat::Zero(1, d));
    }
    params_.add("dec.f1.w", d, d, s_d, rng);
    params_.add("dec.f1.b", Mat::Zero(1, d));
    params_.add("dec.f2.w", d, d, s_d, rng);
    params_.add("dec.f2.b", Mat::Zero(1, d));
}

namespace {

// Binds parameters to a tape, either as trainable leaves or as constants.
struct Binder {
    Tape& tape;
    ad::ParamStore* mut;
    const ad::ParamStore& store;
    Var operator()(const std::string& name) const {
        return mut ? tape.param(mut->get(name)) : tape.constant(store.get(name).value);
    }
};

int kind_index(NodeKind k) {
    switch (k) {
    case NodeKind::PI: return 0;
    case NodeKind::PO: return 1;
    case NodeKind::NAND: return 2;
    }
    return 2;
}

// Row-normalized predecessor and successor averaging operators.
std::pair<Mat, Mat> neighbour_means(const Circuit& c) {
    const int n = c.size();
    Mat pred = Mat::Zero(n, n), succ = Mat::Zero(n, n);
    for (int v = 0; v < n; ++v) {
        for (int u : c.fanins(v)) pred(v, u) = 1.0 / static_cast<double>(c.fanins(v).size());
        for (int w : c.fanouts(v)) succ(v, w) = 1.0 / static_cast<double>(c.fanouts(v).size());
    }
    return {pred, succ};
}

Var encode_impl(Tape& t, const Circuit& circuit, const VqModel& model, const Binder& P) {
    const auto [pred, succ] = neighbour_means(circuit);
    Var pm = t.constant(pred), sm = t.constant(succ);
    Var h = t.relu(t.add_row(t.matmul(t.constant(node_features(circuit)), P("enc.in.w")), P("enc.in.b")));
    for (int r = 0; r < model.config().message_rounds; ++r) {
        const std::string p = "enc.round" + std::to_string(r) + ".";
        Var msg = t.add(t.matmul(h, P(p + "self")), t.matmul(t.matmul(pm, h), P(p + "pred")));
        msg = t.add(msg, t.matmul(t.matmul(sm, h), P(p + "succ")));
        h = t.layer_norm_rows(t.add(h, t.relu(t.add_row(msg, P(p + "b")))));
    }
    return t.add_row(t.matmul(h, P("enc.out.w")), P("enc.out.b"));
}

// Edge logits f1(X) f2(X)^T; probabilities are their sigmoid.
Var decode_impl(Tape& t, Var codes, const std::vector<NodeKind>& kinds, const VqModel& model, const Binder& P) {
    if (codes.rows() != static_cast<int>(kinds.size())) throw ShapeError("decode_edges: one code row per node kind");
    const int d = model.config().model_dim;
    std::vector<int> kidx;
    for (NodeKind k : kinds) kidx.push_back(kind_index(k));
    Var x = t.add_row(t.matmul(codes, P("dec.up.w")), P("dec.up.b"));
    x = t.add(x, t.gather_rows(P("dec.kind"), kidx));
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (int b = 0; b < model.config().decoder_blocks; ++b) {
        const std::string p = "dec.block" + std::to_string(b) + ".";
        Var h = t.layer_norm_rows(x);
        Var q = t.matmul(h, P(p + "q")), k = t.matmul(h, P(p + "k")), v = t.matmul(h, P(p + "v"));
        Var att = t.softmax_rows(t.scale(t.matmul(q, t.transpose(k)), inv_sqrt_d));
        x = t.add(x, t.matmul(t.matmul(att, v), P(p + "o")));
        h = t.layer_norm_rows(x);
        Var ff = t.relu(t.add_row(t.matmul(h, P(p + "ff1.w")), P(p + "ff1.b")));
        x = t.add(x, t.add_row(t.matmul(ff, P(p + "ff2.w")), P(p + "ff2.b")));
    }
    Var h = t.layer_norm_rows(x);
    Var f1 = t.add_row(t.matmul(h, P("dec.f1.w")), P("dec.f1.b"));
    Var f2 = t.add_row(t.matmul(h, P("dec.f2.w")), P("dec.f2.b"));
    return t.matmul(f1, t.transpose(f2));
}

Mat adjacency_mat(const Circuit& c) {
    const int n = c.size();
    Mat a = Mat::Zero(n, n);
    for (int v = 0; v < n; ++v)
        for (int u : c.fanins(v)) a(u, v) = 1.0;
    return a;
}

ProbabilityMatrix to_probability_matrix(const Mat& m) {
    const int n = static_cast<int>(m.rows());
    ProbabilityMatrix out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out(i, j) = m(i, j);
    return out;
}

} // namespace

Mat node_features(const Circuit& circuit) {
    const int n = circuit.size();
    const Layering layering = layerize(circuit);
    Mat f = Mat::Zero(n, kNodeFeatureDim);
    for (int v = 0; v < n; ++v) {
        f(v, kind_index(circuit.kind(v))) = 1.0;
        f(v, 3) = static_cast<double>(circuit.fanins(v).size()) / 2.0;
        f(v, 4) = std::log1p(static_cast<double>(circuit.fanouts(v).size()));
        const double depth = layering.layer_of[v];
        for (int k = 0; k < 4; ++k) {
            const double freq = 1.0 / std::pow(4.0, k);
            f(v, 5 + 2 * k) = std::sin(depth * freq);
            f(v, 6 + 2 * k) = std::cos(depth * freq);
        }
    }
    return f;
}

Var encode(Tape& tape, const Circuit& circuit, VqModel& model) {
    return encode_impl(tape, circuit, model, Binder{tape, &model.params(), model.params()});
}

Mat encode(const Circuit& circuit, const VqModel& model) {
    Tape tape;
    return encode_impl(tape, circuit, model, Binder{tape, nullptr, model.params()}).value();
}

Quantized quantize(const Mat& z, const Mat& codebook) {
    if (z.cols() != codebook.cols()) throw ShapeError("quantize: code dimension differs from the codebook");
    if (codebook.rows() < 1) throw ShapeError("quantize: empty codebook");
    Mat en = codebook;
    for (int k = 0; k < en.rows(); ++k) {
        const double nrm = en.row(k).norm();
        if (nrm > 0) en.row(k) /= nrm;
    }
    Quantized q;
    q.tokens.resize(static_cast<std::size_t>(z.rows()));
    q.codes.resize(z.rows(), z.cols());
    for (int i = 0; i < z.rows(); ++i) {
        const double nrm = z.row(i).norm();
        if (!(nrm > 0)) {
            ++q.zero_rows;
            q.tokens[i] = 0;
            q.codes.row(i) = en.row(0);
            continue;
        }
        const Eigen::RowVectorXd zn = z.row(i) / nrm;
        int best_cos = 0, best_l2 = 0;
        double top_cos = -2.0, low_l2 = 1e300;
        for (int k = 0; k < en.rows(); ++k) {
            const double c = zn.dot(en.row(k));
            const double dist = (zn - en.row(k)).squaredNorm();
            if (c > top_cos) top_cos = c, best_cos = k;
            if (dist < low_l2) low_l2 = dist, best_l2 = k;
        }
        if (best_cos != best_l2) {
            // Only a numerical near-tie may split the two formulas.
            const double gap = std::abs((zn - en.row(best_cos)).squaredNorm() - low_l2);
            if (gap > 1e-12) throw std::logic_error("quantize: cosine and l2 lookups disagree");
        }
        q.tokens[i] = best_cos;
        q.codes.row(i) = en.row(best_cos);
    }
    return q;
}

Mat code_rows(const VqModel& model, const std::vector<int>& tokens) {
    const Mat& cb = model.codebook();
    Mat out(static_cast<int>(tokens.size()), cb.cols());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || tokens[i] >= cb.rows()) throw std::out_of_range("token id outside the codebook");
        out.row(static_cast<int>(i)) = cb.row(tokens[i]).normalized();
    }
    return out;
}

Var decode_edges(Tape& tape, Var codes, const std::vector<NodeKind>& kinds, VqModel& model) {
    return tape.sigmoid(decode_impl(tape, codes, kinds, model, Binder{tape, &model.params(), model.params()}));
}

ProbabilityMatrix decode_edges(const Mat& codes, const std::vector<NodeKind>& kinds, const VqModel& model) {
    Tape tape;
    Binder b{tape, nullptr, model.params()};
    return to_probability_matrix(tape.sigmoid(decode_impl(tape, tape.constant(codes), kinds, model, b)).value());
}

double loss_rec(const ProbabilityMatrix& probs, const BinaryMatrix& adjacency) {
    const int n = probs.size();
    if (static_cast<int>(adjacency.size()) != n) throw ShapeError("loss_rec: size mismatch");
    if (n == 0) return 0.0;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(adjacency[i].size()) != n) throw ShapeError("loss_rec: adjacency is not square");
        for (int j = 0; j < n; ++j) {
            const double p = std::clamp(probs(i, j), kRecClamp, 1.0 - kRecClamp);
            total -= adjacency[i][j] ? std::log(p) : std::log(1.0 - p);
        }
    }
    return total / (static_cast<double>(n) * n);
}

double loss_vq(const Mat& z, const Mat& selected, double beta, double rec) {
    if (z.rows() != selected.rows() || z.cols() != selected.cols()) throw ShapeError("loss_vq: shape mismatch");
    if (z.rows() == 0) return rec;
    const double dist = (z - selected).squaredNorm() / static_cast<double>(z.rows());
    return rec + dist + beta * dist;
}

Utilization codebook_utilization(const std::vector<int>& tokens, int codebook_size) {
    if (codebook_size < 1) throw ConfigError("codebook_size must be positive");
    Utilization u;
    if (tokens.empty()) return u;
    std::vector<double> counts(static_cast<std::size_t>(codebook_size), 0.0);
    for (int t : tokens) {
        if (t < 0 || t >= codebook_size) throw std::out_of_range("token id outside the codebook");
        counts[t] += 1.0;
    }
    int used = 0;
    double entropy = 0.0;
    for (double c : counts) {
        if (c == 0) continue;
        ++used;
        const double p = c / static_cast<double>(tokens.size());
        entropy -= p * std::log(p);
    }
    u.used_fraction = static_cast<double>(used) / codebook_size;
    u.perplexity = std::exp(entropy);
    return u;
}

double edge_auc(const ProbabilityMatrix& probs, const BinaryMatrix& adjacency) {
    const int n = probs.size();
    std::vector<std::pair<double, bool>> scored;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) scored.push_back({probs(i, j), adjacency.at(i).at(j) != 0});
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double pos = 0, neg = 0, rank_sum = 0;
    for (std::size_t i = 0; i < scored.size();) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        const double mid_rank = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;  // 1-based average
        for (std::size_t k = i; k < j; ++k) {
            if (scored[k].second) {
                rank_sum += mid_rank;
                ++pos;
            } else {
                ++neg;
            }
        }
        i = j;
    }
    if (pos == 0 || neg == 0) return std::nan("");
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

std::vector<VqEpochMetrics> train_vq(const std::vector<Circuit>& corpus, VqModel& model, VqTrainState* state,
                                     const VqMetricsSink& sink) {
    const VqConfig& cfg = model.config();
    std::vector<VqEpochMetrics> history;
    VqTrainState local;
    VqTrainState& st = state ? *state : local;
    if (corpus.empty() || st.step >= cfg.steps) return history;
    for (const auto& c : corpus) require_valid(c);

    ad::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.grad_clip});
    adam.set_steps(st.adam_steps);
    // The data order and noise only depend on the seed and the step, so a
    // resumed run replays the same stream.
    const int per_epoch = static_cast<int>((corpus.size() + cfg.batch_size - 1) / cfg.batch_size);
    std::vector<Mat> adjacency;
    for (const auto& c : corpus) adjacency.push_back(adjacency_mat(c));

    auto epoch_order = [&](int epoch) {
        std::vector<int> order(corpus.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(split_seed(cfg.seed ^ static_cast<std::uint64_t>(epoch), "vq-order"));
        std::shuffle(order.begin(), order.end(), rng);
        return order;
    };

    const int K = cfg.codebook_size;
    std::vector<int> usage(K, 0);
    std::vector<Eigen::RowVectorXd> recent;
    VqEpochMetrics acc;
    std::vector<int> epoch_tokens;
    int batches_in_epoch = 0;

    while (st.step < cfg.steps) {
        const int epoch = st.step / per_epoch;
        const int slot = st.step % per_epoch;
        if (slot == 0) {
            std::fill(usage.begin(), usage.end(), 0);
            recent.clear();
            epoch_tokens.clear();
            acc = VqEpochMetrics{};
            batches_in_epoch = 0;
        }
        const auto order = epoch_order(epoch);
        const double frac = cfg.steps > 1 ? static_cast<double>(st.step) / (cfg.steps - 1) : 0.0;
        const double tau = cfg.tau_initial * std::pow(cfg.tau_final / cfg.tau_initial, frac);
        Rng noise(split_seed(cfg.seed ^ (static_cast<std::uint64_t>(st.step) << 20), "vq-gumbel"));

        model.params().zero_grad();
        const std::size_t begin = static_cast<std::size_t>(slot) * cfg.batch_size;
        const std::size_t end = std::min(begin + cfg.batch_size, corpus.size());
        double batch_rec = 0.0, batch_vq = 0.0;
        for (std::size_t b = begin; b < end; ++b) {
            const Circuit& c = corpus[order[b]];
            Tape t;
            Var z = t.l2_normalize_rows(encode(t, c, model));
            const Mat cb = model.codebook();
            Mat cbn = cb;
            for (int k = 0; k < K; ++k) cbn.row(k).normalize();
            const Mat cos = z.value() * cbn.transpose();
            std::vector<int> tokens(c.size());
            for (int i = 0; i < c.size(); ++i) {
                int best = 0;
                double top = -1e300;
                for (int k = 0; k < K; ++k) {
                    double s = cos(i, k);
                    if (cfg.gumbel) s = cfg.gumbel_scale * s / tau + sample_gumbel(noise);
                    if (s > top) top = s, best = k;
                }
                tokens[i] = best;
                ++usage[best];
                recent.push_back(z.value().row(i));
            }
            epoch_tokens.insert(epoch_tokens.end(), tokens.begin(), tokens.end());
            Var e = t.l2_normalize_rows(t.gather_rows(t.param(model.params().get("codebook")), tokens));
            Var zq = t.straight_through(z, t.stop_gradient(e));
            Var logits = decode_impl(t, zq, c.kinds(), model, Binder{t, &model.params(), model.params()});
            Var rec = t.bce_logits_mean(logits, adjacency[order[b]]);
            const double inv_n = 1.0 / c.size();
            Var commit = t.scale(t.sum_squares(t.sub(z, t.stop_gradient(e))), inv_n);
            Var book = t.scale(t.sum_squares(t.sub(t.stop_gradient(z), e)), cfg.beta * inv_n);
            Var total = t.add(t.add(rec, commit), book);
            if (!std::isfinite(total.value()(0, 0))) throw DivergenceError("VQ loss became non-finite at step " + std::to_string(st.step));
            t.backward(t.scale(total, 1.0 / static_cast<double>(end - begin)));
            batch_rec += rec.value()(0, 0);
            batch_vq += total.value()(0, 0);
        }
        adam.step(model.params().all());
        ++st.step;
        st.adam_steps = adam.steps();
        acc.loss_rec += batch_rec;
        acc.loss_vq += batch_vq;
        ++batches_in_epoch;

        if (slot == per_epoch - 1 || st.step == cfg.steps) {
            const double n = static_cast<double>(std::min<std::size_t>(corpus.size(), static_cast<std::size_t>(batches_in_epoch) * cfg.batch_size));
            acc.epoch = epoch;
            acc.step = st.step;
            acc.loss_rec /= n;
            acc.loss_vq /= n;
            const auto u = codebook_utilization(epoch_tokens, K);
            acc.used_fraction = u.used_fraction;
            acc.perplexity = u.perplexity;
            if (slot == per_epoch - 1 && !recent.empty()) {
                Rng pick(split_seed(cfg.seed ^ static_cast<std::uint64_t>(epoch), "vq-revive"));
                auto& book = model.params().get("codebook");
                for (int k = 0; k < K; ++k) {
                    if (usage[k] > 0) continue;
                    const auto idx = std::uniform_int_distribution<std::size_t>(0, recent.size() - 1)(pick);
                    book.value.row(k) = recent[idx];
                    book.m.row(k).setZero();
                    book.v.row(k).setZero();
                    ++acc.revived;
                }
            }
            history.push_back(acc);
            if (sink) sink(acc);
            if (st.halt_at >= 0 && st.step >= st.halt_at) break;
        }
    }
    return history;
}

VqEvaluation evaluate_vq(const std::vector<Circuit>& corpus, const VqModel& model) {
    VqEvaluation ev;
    if (corpus.empty()) return ev;
    std::vector<int> all_tokens;
    double auc_sum = 0;
    int auc_count = 0;
    double correct = 0, entries = 0;
    for (const auto& c : corpus) {
        const auto q = quantize(encode(c, model), model.codebook());
        all_tokens.insert(all_tokens.end(), q.tokens.begin(), q.tokens.end());
        const auto probs = decode_edges(q.codes, c.kinds(), model);
        const auto adj = c.adjacency_matrix();
        ev.mean_loss_rec += loss_rec(probs, adj);
        const double auc = edge_auc(probs, adj);
        if (!std::isnan(auc)) auc_sum += auc, ++auc_count;
        for (int i = 0; i < c.size(); ++i)
            for (int j = 0; j < c.size(); ++j) {
                correct += (probs(i, j) > 0.5) == (adj[i][j] != 0);
                entries += 1;
            }
    }
    ev.mean_loss_rec /= static_cast<double>(corpus.size());
    ev.mean_auc = auc_count ? auc_sum / auc_count : std::nan("");
    ev.edge_accuracy = entries ? correct / entries : 0.0;
    ev.utilization = codebook_utilization(all_tokens, model.config().codebook_size);
    return ev;
}

std::vector<int> tokenize(const Circuit& circuit, const VqModel& model) {
    return quantize(encode(circuit, model), model.codebook()).tokens;
}

void save_vq_checkpoint(const std::filesystem::path& path, const VqModel& model, const VqTrainState& state) {
    nlohmann::json j{{"format", "logicforge-vq"},
                     {"version", 1},
                     {"config", nlohmann::json::parse(model.config().to_json())},
                     {"config_hash", model.config().hash()},
                     {"state", {{"step", state.step}, {"adam_steps", state.adam_steps}}},
                     {"params", nlohmann::json::parse(model.params().to_json(true))}};
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        out << j.dump();
    }
    std::filesystem::rename(tmp, path);
}

VqModel load_vq_checkpoint(const std::filesystem::path& path, VqTrainState* state) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != "logicforge-vq") throw ParseError(path.string() + " is not a tokenizer checkpoint");
    if (j.value("version", 0) != 1) throw ParseError("unsupported tokenizer checkpoint version");
    const VqConfig cfg = VqConfig::from_json(j.at("config").dump());
    if (cfg.hash() != j.value("config_hash", "")) throw ConfigError("tokenizer checkpoint config hash mismatch");
    VqModel model(cfg);
    model.params().load_json(j.at("params").dump());
    if (state) {
        state->step = j.at("state").value("step", 0);
        state->adam_steps = j.at("state").value("adam_steps", 0);
    }
    return model;
}

void write_token_dump(std::ostream& out, const std::vector<std::vector<int>>& tokens) {
    for (const auto& seq : tokens) {
        for (std::size_t i = 0; i < seq.size(); ++i) out << (i ? " " : "") << seq[i];
        out << '\n';
    }
}

std::vector<std::vector<int>> read_token_dump(std::istream& in) {
    std::vector<std::vector<int>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::vector<int> seq;
        int t;
        while (fields >> t) seq.push_back(t);
        if (!fields.eof()) throw ParseError("non-integer token", line_no);
        out.push_back(std::move(seq));
    }
    return out;
}

} // namespace logicforge
