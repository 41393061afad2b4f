#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "logicforge/rng.hpp"

// Minimal reverse-mode autodiff over dense matrices, sized for the toy
// tokenizer and predictor models.
namespace logicforge::ad {

using Mat = Eigen::MatrixXd;

// Trainable tensor with its gradient accumulator and Adam moments.
struct Param {
    std::string name;
    Mat value;
    Mat grad;
    Mat m;
    Mat v;

    Param() = default;
    Param(std::string n, Mat init);
    void zero_grad();
};

// Fills a param with N(0, scale^2) entries.
Param make_param(std::string name, int rows, int cols, double scale, Rng& rng);

// Named parameters with stable addresses (std::deque never relocates on
// push_back) and a flat JSON form for checkpoints.
class ParamStore {
public:
    Param& add(std::string name, int rows, int cols, double scale, Rng& rng);
    Param& add(std::string name, Mat init);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::vector<Param*> all();
    std::size_t size() const { return params_.size(); }
    void zero_grad();

    // {"name": {"rows": r, "cols": c, "data": [...]}, ...}; Adam moments are
    // included when with_moments is set.
    std::string to_json(bool with_moments = false) const;
    // Overwrites values of existing params; shapes must agree.
    void load_json(const std::string& text);

private:
    std::deque<Param> params_;
};

class Tape;

class Var {
public:
    Var() = default;
    const Mat& value() const;
    const Mat& grad() const;
    int rows() const { return static_cast<int>(value().rows()); }
    int cols() const { return static_cast<int>(value().cols()); }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, int id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    Var constant(Mat v);
    Var param(Param& p);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var scale(Var a, double s);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var add_row(Var a, Var row);  // broadcast a 1 x c row over a
    Var mul_row(Var a, Var row);
    Var relu(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var softmax_rows(Var a);
    Var log_softmax_rows(Var a);
    Var layer_norm_rows(Var a, double eps = 1e-5);
    Var l2_normalize_rows(Var a, double eps = 1e-12);
    Var gather_rows(Var table, const std::vector<int>& index);
    Var concat_cols(Var a, Var b);
    Var slice_cols(Var a, int start, int count);
    Var concat_rows(Var a, Var b);

    // Forward value of q, gradient passed to z unchanged.
    Var straight_through(Var z, Var q);
    Var stop_gradient(Var a);

    Var sum(Var a);
    Var mean(Var a);
    Var sum_squares(Var a);
    // Mean BCE of probabilities against 0/1 labels, probabilities clamped to [clamp, 1 - clamp].
    Var bce_mean(Var probs, const Mat& labels, double clamp);
    // Mean BCE computed from logits (softplus form, no clamping).
    Var bce_logits_mean(Var logits, const Mat& labels);
    // -sum of logp(r, target[r]) over rows with weight[r] != 0, scaled by weight.
    Var pick_nll(Var logp, const std::vector<int>& target, const std::vector<double>& weight);

    // Seeds d(loss)/d(loss) = 1 and runs every recorded backward step; param
    // gradients accumulate into Param::grad.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    friend class Var;
    struct Node {
        Mat value;
        Mat grad;
        bool needs_grad = false;
        std::function<void()> back;
    };
    Var push(Mat value, bool needs_grad);
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id_)]; }
    bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].needs_grad; }
    Mat& grad_of(int id);

    std::vector<Node> nodes_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip = 0.0;  // global-norm clip, 0 disables
};

class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}
    void step(const std::vector<Param*>& params);
    int steps() const { return t_; }
    void set_steps(int t) { t_ = t; }
    AdamConfig& config() { return config_; }

private:
    AdamConfig config_;
    int t_ = 0;
};

} // namespace logicforge::ad
