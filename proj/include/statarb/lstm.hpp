#pragma once

// Two stacked LSTM layers with a tanh head emitting one replication weight per
// explanatory stock and day. Trained by backpropagation through time with Adam.
//
// Loss over a window of W days, m explanatory stocks and penalty p:
//   L = (1/W) sum_t [ (R_t - X_t^T beta_t)^2 + (p/m) sum_i |beta_{t,i}| ]

#include "statarb/core.hpp"
#include "statarb/csv.hpp"
#include "statarb/marketdata.hpp"

#include <cmath>
#include <cstdint>
#include <iostream>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace statarb::lstm {

struct LayerParams {
    Matrix W_hf, W_hc, W_hi, W_ho;  ///< h x h
    Matrix W_xf, W_xc, W_xi, W_xo;  ///< h x in
    Matrix b_f, b_c, b_i, b_o;      ///< h x 1

    static LayerParams zeros(Eigen::Index in, Eigen::Index h) {
        LayerParams p;
        for (Matrix* w : {&p.W_hf, &p.W_hc, &p.W_hi, &p.W_ho}) *w = Matrix::Zero(h, h);
        for (Matrix* w : {&p.W_xf, &p.W_xc, &p.W_xi, &p.W_xo}) *w = Matrix::Zero(h, in);
        for (Matrix* b : {&p.b_f, &p.b_c, &p.b_i, &p.b_o}) *b = Matrix::Zero(h, 1);
        return p;
    }

    Eigen::Index input_size() const { return W_xf.cols(); }
    Eigen::Index hidden_size() const { return W_hf.rows(); }
};

template <class Layer, class F>
void for_each_tensor(Layer& p, std::string_view prefix, F&& f) {
    const std::string pre(prefix);
    f(pre + "W_hf", p.W_hf);
    f(pre + "W_hc", p.W_hc);
    f(pre + "W_hi", p.W_hi);
    f(pre + "W_ho", p.W_ho);
    f(pre + "W_xf", p.W_xf);
    f(pre + "W_xc", p.W_xc);
    f(pre + "W_xi", p.W_xi);
    f(pre + "W_xo", p.W_xo);
    f(pre + "b_f", p.b_f);
    f(pre + "b_c", p.b_c);
    f(pre + "b_i", p.b_i);
    f(pre + "b_o", p.b_o);
}

struct StackedLstm {
    LayerParams layer1;
    LayerParams layer2;
    Matrix W_hb;  ///< out x h
    Matrix b_b;   ///< out x 1

    static StackedLstm zeros(Eigen::Index in, Eigen::Index hidden, Eigen::Index out) {
        return {LayerParams::zeros(in, hidden), LayerParams::zeros(hidden, hidden),
                Matrix::Zero(out, hidden), Matrix::Zero(out, 1)};
    }

    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero except forget-gate biases = 1.
    static StackedLstm initialized(Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
                                   std::uint64_t seed) {
        StackedLstm m = zeros(in, hidden, out);
        std::mt19937_64 rng(seed);
        auto fill = [&rng](Matrix& w) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
        };
        for (LayerParams* l : {&m.layer1, &m.layer2}) {
            for (Matrix* w : {&l->W_hf, &l->W_hc, &l->W_hi, &l->W_ho, &l->W_xf, &l->W_xc, &l->W_xi, &l->W_xo})
                fill(*w);
            l->b_f.setOnes();
        }
        fill(m.W_hb);
        return m;
    }

    Eigen::Index inputs() const { return layer1.input_size(); }
    Eigen::Index hidden() const { return layer1.hidden_size(); }
    Eigen::Index outputs() const { return W_hb.rows(); }
};

template <class Model, class F>
void for_each_tensor(Model& m, F&& f) {
    for_each_tensor(m.layer1, "layer1.", f);
    for_each_tensor(m.layer2, "layer2.", f);
    f(std::string("head.W_hb"), m.W_hb);
    f(std::string("head.b_b"), m.b_b);
}

using Gradients = StackedLstm;

inline Gradients zeros_like(const StackedLstm& m) {
    return StackedLstm::zeros(m.inputs(), m.hidden(), m.outputs());
}

namespace detail {

inline Vector sigmoid(const Vector& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

struct StepCache {
    Vector x, h_prev, c_prev;
    Vector f, g, i, o;  ///< forget, cell input, input, output
    Vector c, tanh_c, h;
};

inline StepCache step(const LayerParams& p, const Vector& x, const Vector& h_prev, const Vector& c_prev) {
    StepCache s;
    s.x = x;
    s.h_prev = h_prev;
    s.c_prev = c_prev;
    s.f = sigmoid(p.W_hf * h_prev + p.W_xf * x + p.b_f);
    s.g = (p.W_hc * h_prev + p.W_xc * x + p.b_c).array().tanh().matrix();
    s.i = sigmoid(p.W_hi * h_prev + p.W_xi * x + p.b_i);
    s.c = c_prev.cwiseProduct(s.f) + s.i.cwiseProduct(s.g);
    s.o = sigmoid(p.W_ho * h_prev + p.W_xo * x + p.b_o);
    s.tanh_c = s.c.array().tanh().matrix();
    s.h = s.o.cwiseProduct(s.tanh_c);
    return s;
}

/// Accumulates parameter gradients for one step; returns (dx, dh_prev, dc_prev).
inline void step_backward(const LayerParams& p, const StepCache& s, const Vector& dh, const Vector& dc_next,
                          LayerParams& grad, Vector& dx, Vector& dh_prev, Vector& dc_prev) {
    const Vector d_o = dh.cwiseProduct(s.tanh_c);
    const Vector dc = dc_next + dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
    const Vector dzf = dc.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
    const Vector dzi = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
    const Vector dzg = dc.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
    const Vector dzo = d_o.cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));
    dc_prev = dc.cwiseProduct(s.f);

    grad.W_hf.noalias() += dzf * s.h_prev.transpose();
    grad.W_hc.noalias() += dzg * s.h_prev.transpose();
    grad.W_hi.noalias() += dzi * s.h_prev.transpose();
    grad.W_ho.noalias() += dzo * s.h_prev.transpose();
    grad.W_xf.noalias() += dzf * s.x.transpose();
    grad.W_xc.noalias() += dzg * s.x.transpose();
    grad.W_xi.noalias() += dzi * s.x.transpose();
    grad.W_xo.noalias() += dzo * s.x.transpose();
    grad.b_f += dzf;
    grad.b_c += dzg;
    grad.b_i += dzi;
    grad.b_o += dzo;

    dh_prev.noalias() = p.W_hf.transpose() * dzf + p.W_hc.transpose() * dzg + p.W_hi.transpose() * dzi +
                        p.W_ho.transpose() * dzo;
    dx.noalias() = p.W_xf.transpose() * dzf + p.W_xc.transpose() * dzg + p.W_xi.transpose() * dzi +
                   p.W_xo.transpose() * dzo;
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline void check_finite(double v, const char* where) {
    if (!std::isfinite(v)) throw DivergenceError(std::string("lstm: non-finite value in ") + where);
}

}  // namespace detail

/// One LSTM cell update; returns (h, c).
inline std::pair<Vector, Vector> lstm_step(const LayerParams& p, const Vector& x, const Vector& h_prev,
                                           const Vector& c_prev) {
    auto s = detail::step(p, x, h_prev, c_prev);
    if (!s.h.allFinite() || !s.c.allFinite()) throw DivergenceError("lstm_step: non-finite state");
    return {std::move(s.h), std::move(s.c)};
}

/// Recurrent state of both layers, carried across calls during inference.
struct Carry {
    Vector h1, c1, h2, c2;

    static Carry zeros(Eigen::Index hidden) {
        return {Vector::Zero(hidden), Vector::Zero(hidden), Vector::Zero(hidden), Vector::Zero(hidden)};
    }
};

/// beta_t for every column of X (in x T), starting from `carry` and updating it.
inline Matrix forward_betas(const StackedLstm& model, const Matrix& x, Carry& carry) {
    if (x.rows() != model.inputs())
        throw ContractError("forward_betas: input has " + std::to_string(x.rows()) + " rows, model expects " +
                            std::to_string(model.inputs()));
    Matrix betas(model.outputs(), x.cols());
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
        std::tie(carry.h1, carry.c1) = lstm_step(model.layer1, x.col(t), carry.h1, carry.c1);
        std::tie(carry.h2, carry.c2) = lstm_step(model.layer2, carry.h1, carry.h2, carry.c2);
        betas.col(t) = (model.W_hb * carry.h2 + model.b_b).array().tanh().matrix();
    }
    return betas;
}

inline Matrix forward_betas(const StackedLstm& model, const Matrix& x) {
    Carry carry = Carry::zeros(model.hidden());
    return forward_betas(model, x, carry);
}

inline double loss(const StackedLstm& model, const Matrix& x, const Vector& r, double l1_penalty) {
    if (r.size() != x.cols()) throw ContractError("loss: X and R disagree on window length");
    const Matrix betas = forward_betas(model, x);
    const double m = static_cast<double>(model.outputs());
    double total = 0.0;
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
        const double e = r(t) - x.col(t).dot(betas.col(t));
        total += e * e + l1_penalty / m * betas.col(t).cwiseAbs().sum();
    }
    return total / static_cast<double>(x.cols());
}

/// Loss and its gradient with respect to every tensor, by backpropagation through time.
/// `scale` multiplies the gradient contribution (used for batch averaging).
inline double backward(const StackedLstm& model, const Matrix& x, const Vector& r, double l1_penalty,
                       Gradients& grad, double scale = 1.0) {
    const Eigen::Index w = x.cols();
    const Eigen::Index h = model.hidden();
    if (r.size() != w) throw ContractError("backward: X and R disagree on window length");
    if (x.rows() != model.inputs()) throw ContractError("backward: input dimension mismatch");

    std::vector<detail::StepCache> c1(static_cast<std::size_t>(w)), c2(static_cast<std::size_t>(w));
    Matrix betas(model.outputs(), w);
    Vector h1 = Vector::Zero(h), s1 = Vector::Zero(h), h2 = Vector::Zero(h), s2 = Vector::Zero(h);
    for (Eigen::Index t = 0; t < w; ++t) {
        auto& a = c1[static_cast<std::size_t>(t)];
        auto& b = c2[static_cast<std::size_t>(t)];
        a = detail::step(model.layer1, x.col(t), h1, s1);
        b = detail::step(model.layer2, a.h, h2, s2);
        h1 = a.h;
        s1 = a.c;
        h2 = b.h;
        s2 = b.c;
        betas.col(t) = (model.W_hb * h2 + model.b_b).array().tanh().matrix();
    }

    const double inv_w = 1.0 / static_cast<double>(w);
    const double m = static_cast<double>(model.outputs());
    double total = 0.0;
    Vector dh1_next = Vector::Zero(h), dc1_next = Vector::Zero(h);
    Vector dh2_next = Vector::Zero(h), dc2_next = Vector::Zero(h);
    Vector dx2(h), dx1(model.inputs()), dh_prev(h), dc_prev(h);
    for (Eigen::Index t = w - 1; t >= 0; --t) {
        const auto& a = c1[static_cast<std::size_t>(t)];
        const auto& b = c2[static_cast<std::size_t>(t)];
        const Vector beta = betas.col(t);
        const double e = r(t) - x.col(t).dot(beta);
        total += e * e + l1_penalty / m * beta.cwiseAbs().sum();

        Vector dbeta = -2.0 * e * x.col(t);
        for (Eigen::Index k = 0; k < beta.size(); ++k) dbeta(k) += l1_penalty / m * detail::sign(beta(k));
        dbeta *= inv_w * scale;
        const Vector dz = dbeta.cwiseProduct((1.0 - beta.array().square()).matrix());
        grad.W_hb.noalias() += dz * b.h.transpose();
        grad.b_b += dz;

        const Vector dh2 = model.W_hb.transpose() * dz + dh2_next;
        detail::step_backward(model.layer2, b, dh2, dc2_next, grad.layer2, dx2, dh_prev, dc_prev);
        dh2_next = dh_prev;
        dc2_next = dc_prev;

        const Vector dh1 = dx2 + dh1_next;
        detail::step_backward(model.layer1, a, dh1, dc1_next, grad.layer1, dx1, dh_prev, dc_prev);
        dh1_next = dh_prev;
        dc1_next = dc_prev;
    }
    total *= inv_w;
    detail::check_finite(total, "loss");
    return total;
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Gradients first;
    Gradients second;
    long step = 0;

    static AdamState for_model(const StackedLstm& m) { return {zeros_like(m), zeros_like(m), 0}; }
};

/// Bias-corrected Adam update of every tensor.
inline void adam_step(StackedLstm& model, Gradients& grad, AdamState& state, const AdamConfig& cfg) {
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    std::vector<Matrix*> params, grads, firsts, seconds;
    for_each_tensor(model, [&](const std::string&, Matrix& t) { params.push_back(&t); });
    for_each_tensor(grad, [&](const std::string&, Matrix& t) { grads.push_back(&t); });
    for_each_tensor(state.first, [&](const std::string&, Matrix& t) { firsts.push_back(&t); });
    for_each_tensor(state.second, [&](const std::string&, Matrix& t) { seconds.push_back(&t); });

    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        const Matrix& g = *grads[k];
        Matrix& m1 = *firsts[k];
        Matrix& m2 = *seconds[k];
        if (g.rows() != p.rows() || g.cols() != p.cols()) throw ContractError("adam_step: shape mismatch");
        m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
        m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        p.array() -= cfg.lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.eps);
    }
}

inline double gradient_norm(Gradients& grad) {
    double ss = 0.0;
    for_each_tensor(grad, [&](const std::string&, Matrix& t) { ss += t.squaredNorm(); });
    return std::sqrt(ss);
}

struct TrainConfig {
    std::size_t window = 120;
    std::size_t batch = 16;
    double l1_penalty = 1e-5;
    AdamConfig adam;
    std::size_t epochs = 200;
    std::size_t hidden = 64;
    double clip_norm = 0.0;  ///< 0 disables clipping
    std::uint64_t seed = 1;

    void validate() const {
        if (window < 2) throw ConfigError("lstm.window must be >= 2");
        if (batch < 1) throw ConfigError("lstm.batch must be >= 1");
        if (l1_penalty < 0.0) throw ConfigError("lstm.l1_penalty must be >= 0");
        if (hidden < 1) throw ConfigError("lstm.hidden must be >= 1");
    }
};

struct TrainResult {
    StackedLstm model;
    std::vector<double> loss_trace;  ///< mean batch loss per epoch, before that epoch's update
    bool loss_never_decreased = false;
};

/// Each epoch draws `batch` W-day windows (possibly overlapping) uniformly from
/// the history and takes one Adam step on their mean loss.
inline TrainResult train(const Matrix& x, const Vector& r, const TrainConfig& cfg) {
    cfg.validate();
    const auto t_total = static_cast<std::size_t>(x.cols());
    if (static_cast<std::size_t>(r.size()) != t_total) throw ContractError("train: X and R disagree on length");
    if (t_total < cfg.window + cfg.batch)
        throw ConfigError("train: history of " + std::to_string(t_total) + " days < window + batch");

    const auto hidden = static_cast<Eigen::Index>(cfg.hidden);
    TrainResult out{StackedLstm::initialized(x.rows(), hidden, x.rows(), derive_seed(cfg.seed, 0)), {}, false};
    AdamState adam = AdamState::for_model(out.model);
    std::mt19937_64 rng(derive_seed(cfg.seed, 1));
    std::uniform_int_distribution<std::size_t> start(0, t_total - cfg.window);
    const auto w = static_cast<Eigen::Index>(cfg.window);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Gradients grad = zeros_like(out.model);
        double batch_loss = 0.0;
        const double scale = 1.0 / static_cast<double>(cfg.batch);
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            const auto s = static_cast<Eigen::Index>(start(rng));
            batch_loss += backward(out.model, x.middleCols(s, w), r.segment(s, w), cfg.l1_penalty, grad, scale);
        }
        batch_loss *= scale;
        const double norm = gradient_norm(grad);
        detail::check_finite(norm, "gradient");
        if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm)
            for_each_tensor(grad, [&](const std::string&, Matrix& t) { t *= cfg.clip_norm / norm; });
        out.loss_trace.push_back(batch_loss);
        adam_step(out.model, grad, adam, cfg.adam);
    }

    if (out.loss_trace.size() > 1) {
        bool decreased = false;
        for (std::size_t k = 1; k < out.loss_trace.size(); ++k) decreased |= out.loss_trace[k] < out.loss_trace[0];
        out.loss_never_decreased = !decreased;
        if (!decreased) std::clog << "warning: lstm training loss never decreased\n";
    }
    return out;
}

/// Returns of every stock except `target` (rows in panel order), columns [begin, end).
inline Matrix explanatory_inputs(const ReturnsPanel& panel, std::size_t target, std::size_t begin, std::size_t end) {
    const auto d = static_cast<Eigen::Index>(panel.d());
    Matrix x(d - 1, static_cast<Eigen::Index>(end - begin));
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
        if (i == static_cast<Eigen::Index>(target)) continue;
        x.row(row++) = panel.returns.row(i).segment(static_cast<Eigen::Index>(begin),
                                                    static_cast<Eigen::Index>(end - begin));
    }
    return x;
}

inline TrainResult train(const ReturnsPanel& panel, const std::string& target, std::size_t begin,
                         std::size_t end, const TrainConfig& cfg) {
    const std::size_t i = panel.index_of(target);
    return train(explanatory_inputs(panel, i, begin, end),
                 panel.returns.row(static_cast<Eigen::Index>(i))
                     .segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin))
                     .transpose(),
                 cfg);
}

/// Runs the model over X from a zero state and returns beta_t for columns
/// >= warmup; the first `warmup` columns only prime the recurrent state.
inline Matrix infer_betas(const StackedLstm& model, const Matrix& x, std::size_t warmup) {
    if (static_cast<std::size_t>(x.cols()) <= warmup)
        throw ConfigError("infer_betas: " + std::to_string(x.cols()) + " columns do not cover a " +
                          std::to_string(warmup) + "-day warm-up");
    Carry carry = Carry::zeros(model.hidden());
    const Matrix all = forward_betas(model, x, carry);
    return all.rightCols(x.cols() - static_cast<Eigen::Index>(warmup));
}

/// Share of beta entries with |beta| >= level; the tanh head cannot express |beta| > 1,
/// so a large share hints that the target needs more exposure than the head allows.
inline double saturation_fraction(const Matrix& betas, double level = 0.99) {
    if (betas.size() == 0) return 0.0;
    return static_cast<double>((betas.array().abs() >= level).count()) / static_cast<double>(betas.size());
}

// ---------------------------------------------------------------------------
// Checkpoints: a numeric text dump with shape headers.

inline constexpr std::string_view kCheckpointMagic = "statarb-lstm";
inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream& out, const StackedLstm& model) {
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "dims " << model.inputs() << ' ' << model.hidden() << ' ' << model.outputs() << '\n';
    auto copy = model;
    for_each_tensor(copy, [&](const std::string& name, Matrix& t) {
        out << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
        for (Eigen::Index k = 0; k < t.size(); ++k) out << (k ? " " : "") << csv::exact(t.data()[k]);
        out << '\n';
    });
}

inline StackedLstm load_checkpoint(std::istream& in) {
    std::string magic, tag;
    int version = 0;
    Eigen::Index ni = 0, nh = 0, no = 0;
    in >> magic >> version >> tag >> ni >> nh >> no;
    if (!in || magic != kCheckpointMagic || version != kCheckpointVersion || tag != "dims")
        throw DataError("not an lstm checkpoint (or unsupported version)");
    StackedLstm model = StackedLstm::zeros(ni, nh, no);
    for_each_tensor(model, [&](const std::string& name, Matrix& t) {
        std::string got;
        Eigen::Index rows = 0, cols = 0;
        in >> got >> rows >> cols;
        if (!in || got != name || rows != t.rows() || cols != t.cols())
            throw DataError("checkpoint: expected tensor " + name);
        for (Eigen::Index k = 0; k < t.size(); ++k) in >> t.data()[k];
        if (!in) throw DataError("checkpoint: truncated tensor " + name);
    });
    return model;
}

}  // namespace statarb::lstm
