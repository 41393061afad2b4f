#include "logicforge/tape.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "logicforge/errors.hpp"

namespace logicforge::ad {

Param::Param(std::string n, Mat init) : name(std::move(n)), value(std::move(init)) {
    grad = Mat::Zero(value.rows(), value.cols());
    m = grad;
    v = grad;
}

void Param::zero_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) grad.resize(value.rows(), value.cols());
    grad.setZero();
}

Param make_param(std::string name, int rows, int cols, double scale, Rng& rng) {
    std::normal_distribution<double> nd(0.0, scale);
    Mat init(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) init(i, j) = nd(rng);
    return Param(std::move(name), std::move(init));
}

Param& ParamStore::add(std::string name, int rows, int cols, double scale, Rng& rng) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    params_.push_back(make_param(std::move(name), rows, cols, scale, rng));
    return params_.back();
}

Param& ParamStore::add(std::string name, Mat init) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    params_.emplace_back(std::move(name), std::move(init));
    return params_.back();
}

Param& ParamStore::get(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    throw std::out_of_range("no parameter named " + name);
}

const Param& ParamStore::get(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    throw std::out_of_range("no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return true;
    return false;
}

std::vector<Param*> ParamStore::all() {
    std::vector<Param*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

namespace {
nlohmann::json mat_to_json(const Mat& m) {
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Mat mat_from_json(const nlohmann::json& j) {
    const int rows = j.at("rows"), cols = j.at("cols");
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != static_cast<std::size_t>(rows) * cols) throw ParseError("matrix data length mismatch");
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
    return m;
}
} // namespace

std::string ParamStore::to_json(bool with_moments) const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& p : params_) {
        auto entry = mat_to_json(p.value);
        if (with_moments) {
            entry["m"] = mat_to_json(p.m.size() ? p.m : Mat::Zero(p.value.rows(), p.value.cols()));
            entry["v"] = mat_to_json(p.v.size() ? p.v : Mat::Zero(p.value.rows(), p.value.cols()));
        }
        j[p.name] = std::move(entry);
    }
    return j.dump();
}

void ParamStore::load_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    for (auto& p : params_) {
        if (!j.contains(p.name)) throw ParseError("checkpoint lacks parameter " + p.name);
        const auto& e = j.at(p.name);
        Mat v = mat_from_json(e);
        if (v.rows() != p.value.rows() || v.cols() != p.value.cols())
            throw ShapeError("checkpoint parameter " + p.name + " has the wrong shape");
        p.value = std::move(v);
        if (e.contains("m")) {
            p.m = mat_from_json(e.at("m"));
            p.v = mat_from_json(e.at("v"));
        }
        p.zero_grad();
    }
}

const Mat& Var::value() const { return tape_->nodes_[static_cast<std::size_t>(id_)].value; }

const Mat& Var::grad() const { return tape_->grad_of(id_); }

Mat& Tape::grad_of(int id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::push(Mat value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

namespace {
void same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}
} // namespace

Var Tape::constant(Mat v) { return push(std::move(v), false); }

Var Tape::param(Param& p) {
    Var out = push(p.value, true);
    const int id = out.id_;
    Param* pp = &p;
    nodes_.back().back = [this, id, pp] {
        if (pp->grad.rows() != pp->value.rows() || pp->grad.cols() != pp->value.cols()) pp->zero_grad();
        pp->grad += grad_of(id);
    };
    return out;
}

Var Tape::add(Var a, Var b) {
    same_shape(a.value(), b.value(), "add");
    Var out = push(a.value() + b.value(), needs(a) || needs(b));
    const int o = out.id_, ia = a.id_, ib = b.id_;
    nodes_.back().back = [this, o, ia, ib] {
        if (nodes_[ia].needs_grad) grad_of(ia) += grad_of(o);
        if (nodes_[ib].needs_grad) grad_of(ib) += grad_of(o);
    };
    return out;
}

Var Tape::sub(Var a, Var b) {
    same_shape(a.value(), b.value(), "sub");
    Var out = push(a.value() - b.value(), needs(a) || needs(b));
    const int o = out.id_, ia = a.id_, ib = b.id_;
    nodes_.back().back = [this, o, ia, ib] {
        if (nodes_[ia].needs_grad) grad_of(ia) += grad_of(o);
        if (nodes_[ib].needs_grad) grad_of(ib) -= grad_of(o);
    };
    return out;
}

Var Tape::mul(Var a, Var b) {
    same_shape(a.value(), b.value(), "mul");
    Var out = push(a.value().cwiseProduct(b.value()), needs(a) || needs(b));
    const int o = out.id_, ia = a.id_, ib = b.id_;
    nodes_.back().back = [this, o, ia, ib] {
        const Mat& g = grad_of(o);
        if (nodes_[ia].needs_grad) grad_of(ia) += g.cwiseProduct(nodes_[ib].value);
        if (nodes_[ib].needs_grad) grad_of(ib) += g.cwiseProduct(nodes_[ia].value);
    };
    return out;
}

Var Tape::scale(Var a, double s) {
    Var out = push(a.value() * s, needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia, s] { grad_of(ia) += s * grad_of(o); };
    return out;
}

Var Tape::matmul(Var a, Var b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Var out = push(a.value() * b.value(), needs(a) || needs(b));
    const int o = out.id_, ia = a.id_, ib = b.id_;
    nodes_.back().back = [this, o, ia, ib] {
        const Mat& g = grad_of(o);
        if (nodes_[ia].needs_grad) grad_of(ia).noalias() += g * nodes_[ib].value.transpose();
        if (nodes_[ib].needs_grad) grad_of(ib).noalias() += nodes_[ia].value.transpose() * g;
    };
    return out;
}

Var Tape::transpose(Var a) {
    Var out = push(a.value().transpose(), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia] { grad_of(ia) += grad_of(o).transpose(); };
    return out;
}

Var Tape::add_row(Var a, Var row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row must be 1 x cols");
    Mat v = a.value();
    v.rowwise() += row.value().row(0);
    Var out = push(std::move(v), needs(a) || needs(row));
    const int o = out.id_, ia = a.id_, ir = row.id_;
    nodes_.back().back = [this, o, ia, ir] {
        const Mat& g = grad_of(o);
        if (nodes_[ia].needs_grad) grad_of(ia) += g;
        if (nodes_[ir].needs_grad) grad_of(ir) += g.colwise().sum();
    };
    return out;
}

Var Tape::mul_row(Var a, Var row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_row: row must be 1 x cols");
    Mat v = a.value();
    for (int i = 0; i < v.rows(); ++i) v.row(i) = v.row(i).cwiseProduct(row.value().row(0));
    Var out = push(std::move(v), needs(a) || needs(row));
    const int o = out.id_, ia = a.id_, ir = row.id_;
    nodes_.back().back = [this, o, ia, ir] {
        const Mat& g = grad_of(o);
        const Mat& r = nodes_[ir].value;
        if (nodes_[ia].needs_grad) {
            Mat& ga = grad_of(ia);
            for (int i = 0; i < g.rows(); ++i) ga.row(i) += g.row(i).cwiseProduct(r.row(0));
        }
        if (nodes_[ir].needs_grad) grad_of(ir) += g.cwiseProduct(nodes_[ia].value).colwise().sum();
    };
    return out;
}

Var Tape::relu(Var a) {
    Var out = push(a.value().cwiseMax(0.0), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia] {
        grad_of(ia) += (nodes_[ia].value.array() > 0.0).cast<double>().matrix().cwiseProduct(grad_of(o));
    };
    return out;
}

Var Tape::tanh(Var a) {
    Var out = push(a.value().array().tanh().matrix(), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia] {
        const Mat& y = nodes_[o].value;
        grad_of(ia) += (1.0 - y.array().square()).matrix().cwiseProduct(grad_of(o));
    };
    return out;
}

Var Tape::sigmoid(Var a) {
    Mat y = a.value().unaryExpr([](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    Var out = push(std::move(y), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia] {
        const Mat& y = nodes_[o].value;
        grad_of(ia) += (y.array() * (1.0 - y.array())).matrix().cwiseProduct(grad_of(o));
    };
    return out;
}

Var Tape::softmax_rows(Var a) {
    Mat y = a.value();
    for (int i = 0; i < y.rows(); ++i) {
        y.row(i).array() -= y.row(i).maxCoeff();
        y.row(i) = y.row(i).array().exp().matrix();
        y.row(i) /= y.row(i).sum();
    }
    Var out = push(std::move(y), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia] {
        const Mat& y = nodes_[o].value;
        const Mat& g = grad_of(o);
        Mat& ga = grad_of(ia);
        for (int i = 0; i < y.rows(); ++i) {
            const double dot = y.row(i).dot(g.row(i));
            ga.row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
        }
    };
    return out;
}

Var Tape::log_softmax_rows(Var a) {
    Mat y = a.value();
    for (int i = 0; i < y.rows(); ++i) {
        const double mx = y.row(i).maxCoeff();
        const double lse = mx + std::log((y.row(i).array() - mx).exp().sum());
        y.row(i).array() -= lse;
    }
    Var out = push(std::move(y), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia] {
        const Mat& y = nodes_[o].value;
        const Mat& g = grad_of(o);
        Mat& ga = grad_of(ia);
        for (int i = 0; i < y.rows(); ++i) {
            const double gs = g.row(i).sum();
            ga.row(i).array() += g.row(i).array() - y.row(i).array().exp() * gs;
        }
    };
    return out;
}

Var Tape::layer_norm_rows(Var a, double eps) {
    const Mat& x = a.value();
    const int n = static_cast<int>(x.cols());
    Mat y(x.rows(), x.cols());
    Eigen::VectorXd inv_std(x.rows());
    for (int i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        y.row(i) = ((x.row(i).array() - mu) * inv_std(i)).matrix();
    }
    Var out = push(std::move(y), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia, inv_std, n] {
        const Mat& y = nodes_[o].value;
        const Mat& g = grad_of(o);
        Mat& ga = grad_of(ia);
        for (int i = 0; i < y.rows(); ++i) {
            const double gm = g.row(i).mean();
            const double gy = g.row(i).dot(y.row(i)) / n;
            ga.row(i).array() += inv_std(i) * (g.row(i).array() - gm - y.row(i).array() * gy);
        }
    };
    return out;
}

Var Tape::l2_normalize_rows(Var a, double eps) {
    const Mat& x = a.value();
    Mat y(x.rows(), x.cols());
    Eigen::VectorXd norms(x.rows());
    for (int i = 0; i < x.rows(); ++i) {
        norms(i) = std::max(x.row(i).norm(), eps);
        y.row(i) = x.row(i) / norms(i);
    }
    Var out = push(std::move(y), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia, norms] {
        const Mat& y = nodes_[o].value;
        const Mat& g = grad_of(o);
        Mat& ga = grad_of(ia);
        for (int i = 0; i < y.rows(); ++i) {
            const double dot = y.row(i).dot(g.row(i));
            ga.row(i) += (g.row(i) - dot * y.row(i)) / norms(i);
        }
    };
    return out;
}

Var Tape::gather_rows(Var table, const std::vector<int>& index) {
    const Mat& t = table.value();
    Mat y(static_cast<int>(index.size()), t.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= t.rows()) throw std::out_of_range("gather_rows: index out of range");
        y.row(static_cast<int>(i)) = t.row(index[i]);
    }
    Var out = push(std::move(y), needs(table));
    const int o = out.id_, it = table.id_;
    nodes_.back().back = [this, o, it, index] {
        const Mat& g = grad_of(o);
        Mat& gt = grad_of(it);
        for (std::size_t i = 0; i < index.size(); ++i) gt.row(index[i]) += g.row(static_cast<int>(i));
    };
    return out;
}

Var Tape::concat_cols(Var a, Var b) {
    if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
    Mat y(a.rows(), a.cols() + b.cols());
    y << a.value(), b.value();
    Var out = push(std::move(y), needs(a) || needs(b));
    const int o = out.id_, ia = a.id_, ib = b.id_;
    const int ca = a.cols(), cb = b.cols();
    nodes_.back().back = [this, o, ia, ib, ca, cb] {
        const Mat& g = grad_of(o);
        if (nodes_[ia].needs_grad) grad_of(ia) += g.leftCols(ca);
        if (nodes_[ib].needs_grad) grad_of(ib) += g.rightCols(cb);
    };
    return out;
}

Var Tape::slice_cols(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: range out of bounds");
    Var out = push(a.value().middleCols(start, count), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia, start, count] { grad_of(ia).middleCols(start, count) += grad_of(o); };
    return out;
}

Var Tape::concat_rows(Var a, Var b) {
    if (a.cols() != b.cols()) throw ShapeError("concat_rows: column counts differ");
    Mat y(a.rows() + b.rows(), a.cols());
    y << a.value(), b.value();
    Var out = push(std::move(y), needs(a) || needs(b));
    const int o = out.id_, ia = a.id_, ib = b.id_;
    const int ra = a.rows(), rb = b.rows();
    nodes_.back().back = [this, o, ia, ib, ra, rb] {
        const Mat& g = grad_of(o);
        if (nodes_[ia].needs_grad) grad_of(ia) += g.topRows(ra);
        if (nodes_[ib].needs_grad) grad_of(ib) += g.bottomRows(rb);
    };
    return out;
}

Var Tape::straight_through(Var z, Var q) {
    same_shape(z.value(), q.value(), "straight_through");
    Var out = push(q.value(), needs(z));
    const int o = out.id_, iz = z.id_;
    nodes_.back().back = [this, o, iz] { grad_of(iz) += grad_of(o); };
    return out;
}

Var Tape::stop_gradient(Var a) { return push(a.value(), false); }

Var Tape::sum(Var a) {
    Mat y(1, 1);
    y(0, 0) = a.value().sum();
    Var out = push(std::move(y), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia] { grad_of(ia).array() += grad_of(o)(0, 0); };
    return out;
}

Var Tape::mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    return scale(sum(a), n > 0 ? 1.0 / n : 0.0);
}

Var Tape::sum_squares(Var a) {
    Mat y(1, 1);
    y(0, 0) = a.value().squaredNorm();
    Var out = push(std::move(y), needs(a));
    const int o = out.id_, ia = a.id_;
    nodes_.back().back = [this, o, ia] { grad_of(ia) += 2.0 * grad_of(o)(0, 0) * nodes_[ia].value; };
    return out;
}

Var Tape::bce_mean(Var probs, const Mat& labels, double clamp) {
    same_shape(probs.value(), labels, "bce_mean");
    const Mat& p = probs.value();
    const double n = static_cast<double>(p.size());
    double total = 0.0;
    for (int i = 0; i < p.rows(); ++i)
        for (int j = 0; j < p.cols(); ++j) {
            const double c = std::clamp(p(i, j), clamp, 1.0 - clamp);
            total -= labels(i, j) * std::log(c) + (1.0 - labels(i, j)) * std::log(1.0 - c);
        }
    Mat y(1, 1);
    y(0, 0) = total / n;
    Var out = push(std::move(y), needs(probs));
    const int o = out.id_, ip = probs.id_;
    nodes_.back().back = [this, o, ip, labels, clamp, n] {
        const double g = grad_of(o)(0, 0);
        const Mat& p = nodes_[ip].value;
        Mat& gp = grad_of(ip);
        for (int i = 0; i < p.rows(); ++i)
            for (int j = 0; j < p.cols(); ++j) {
                const double x = p(i, j);
                if (x < clamp || x > 1.0 - clamp) continue;
                gp(i, j) += g * (-labels(i, j) / x + (1.0 - labels(i, j)) / (1.0 - x)) / n;
            }
    };
    return out;
}

Var Tape::bce_logits_mean(Var logits, const Mat& labels) {
    same_shape(logits.value(), labels, "bce_logits_mean");
    const Mat& x = logits.value();
    const double n = static_cast<double>(x.size());
    double total = 0.0;
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) {
            const double v = x(i, j);
            total += std::max(v, 0.0) - v * labels(i, j) + std::log1p(std::exp(-std::abs(v)));
        }
    Mat y(1, 1);
    y(0, 0) = total / n;
    Var out = push(std::move(y), needs(logits));
    const int o = out.id_, il = logits.id_;
    nodes_.back().back = [this, o, il, labels, n] {
        const double g = grad_of(o)(0, 0);
        const Mat& x = nodes_[il].value;
        Mat& gx = grad_of(il);
        for (int i = 0; i < x.rows(); ++i)
            for (int j = 0; j < x.cols(); ++j) {
                const double v = x(i, j);
                const double sig = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                gx(i, j) += g * (sig - labels(i, j)) / n;
            }
    };
    return out;
}

Var Tape::pick_nll(Var logp, const std::vector<int>& target, const std::vector<double>& weight) {
    const Mat& lp = logp.value();
    if (static_cast<int>(target.size()) != lp.rows() || weight.size() != target.size())
        throw ShapeError("pick_nll: target/weight length must equal row count");
    double total = 0.0;
    for (int i = 0; i < lp.rows(); ++i) {
        if (weight[i] == 0.0) continue;
        if (target[i] < 0 || target[i] >= lp.cols()) throw std::out_of_range("pick_nll: target out of range");
        total -= weight[i] * lp(i, target[i]);
    }
    Mat y(1, 1);
    y(0, 0) = total;
    Var out = push(std::move(y), needs(logp));
    const int o = out.id_, il = logp.id_;
    nodes_.back().back = [this, o, il, target, weight] {
        const double g = grad_of(o)(0, 0);
        Mat& gl = grad_of(il);
        for (std::size_t i = 0; i < target.size(); ++i)
            if (weight[i] != 0.0) gl(static_cast<int>(i), target[i]) -= g * weight[i];
    };
    return out;
}

void Tape::backward(Var loss) {
    if (loss.tape_ != this) throw std::invalid_argument("backward: variable belongs to another tape");
    if (loss.value().size() != 1) throw ShapeError("backward: loss must be a scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    grad_of(loss.id_).setOnes();
    for (int id = loss.id_; id >= 0; --id) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || !n.back || n.grad.size() == 0) continue;
        n.back();
    }
}

void Adam::step(const std::vector<Param*>& params) {
    ++t_;
    double factor = 1.0;
    if (config_.clip > 0) {
        double sq = 0.0;
        for (const Param* p : params) sq += p->grad.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > config_.clip) factor = config_.clip / norm;
    }
    const double c1 = 1.0 - std::pow(config_.beta1, t_);
    const double c2 = 1.0 - std::pow(config_.beta2, t_);
    for (Param* p : params) {
        if (p->m.rows() != p->value.rows() || p->m.cols() != p->value.cols()) {
            p->m = Mat::Zero(p->value.rows(), p->value.cols());
            p->v = p->m;
        }
        const Mat g = p->grad * factor;
        p->m = config_.beta1 * p->m + (1 - config_.beta1) * g;
        p->v = config_.beta2 * p->v + (1 - config_.beta2) * g.cwiseProduct(g);
        p->value.array() -= config_.lr * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + config_.eps);
    }
}

} // namespace logicforge::ad
