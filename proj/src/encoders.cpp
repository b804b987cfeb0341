#include "ibgap/encoders.hpp"

#include <limits>

namespace ibgap {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

MatrixXd affine(const DenseLayer& layer, const Eigen::Ref<const MatrixXd>& x) {
    MatrixXd out = layer.weights * x;
    out.colwise() += layer.biases;
    return out;
}

void check_rows(Index got, Index want, const char* what) {
    if (got != want)
        throw ConfigError(std::string(what) + ": input dimension " + std::to_string(got) + " != " +
                          std::to_string(want));
}

void note_clamp(Diagnostics* diag, std::size_t count, const char* what) {
    if (!diag || count == 0) return;
    diag->clamped += count;
    diag->warn(std::string(what) + ": clamped " + std::to_string(count) + " entries at " + std::to_string(kProbFloor));
}

} // namespace

// --- Gaussian ---------------------------------------------------------------

void GaussianEncoder::validate() const {
    for (const auto& l : trunk) l.validate();
    mu_head.validate();
    logvar_head.validate();
    if (mu_head.out_size() != logvar_head.out_size()) throw ConfigError("gaussian encoder: head sizes differ");
    const Index hidden = trunk.empty() ? mu_head.in_size() : trunk.back().out_size();
    if (mu_head.in_size() != hidden || logvar_head.in_size() != hidden)
        throw ConfigError("gaussian encoder: head input does not match trunk output");
}

GaussianEncoder make_gaussian_encoder(Index input, Index hidden, Index code, Rng& rng) {
    GaussianEncoder enc;
    enc.trunk.push_back(make_layer(input, hidden, Activation::relu, rng));
    enc.mu_head = make_layer(hidden, code, Activation::identity, rng);
    enc.logvar_head = make_layer(hidden, code, Activation::identity, rng);
    return enc;
}

GaussianForward forward(const GaussianEncoder& enc, const Eigen::Ref<const MatrixXd>& x) {
    check_rows(x.rows(), enc.input_size(), "gaussian encoder");
    GaussianForward fwd;
    fwd.hidden = enc.trunk.empty() ? MatrixXd(x) : forward_batch(enc.trunk, x, &fwd.trunk);
    fwd.mu = affine(enc.mu_head, fwd.hidden);
    fwd.logvar = affine(enc.logvar_head, fwd.hidden);
    return fwd;
}

GaussianGrad backward(const GaussianEncoder& enc, const GaussianForward& fwd, const Eigen::Ref<const MatrixXd>& d_mu,
                      const Eigen::Ref<const MatrixXd>& d_logvar) {
    GaussianGrad grad;
    grad.mu_head = {d_mu * fwd.hidden.transpose(), d_mu.rowwise().sum()};
    grad.logvar_head = {d_logvar * fwd.hidden.transpose(), d_logvar.rowwise().sum()};
    if (!enc.trunk.empty()) {
        const MatrixXd d_hidden = enc.mu_head.weights.transpose() * d_mu + enc.logvar_head.weights.transpose() * d_logvar;
        grad.trunk = backward(enc.trunk, fwd.trunk, d_hidden);
    }
    return grad;
}

VectorXd gaussian_sample(const Eigen::Ref<const VectorXd>& mu, const Eigen::Ref<const VectorXd>& sigma,
                         const Eigen::Ref<const VectorXd>& noise) {
    if (mu.size() != sigma.size() || mu.size() != noise.size()) throw ConfigError("gaussian_sample: size mismatch");
    return mu + sigma.cwiseProduct(noise);
}

VectorXd encode_gaussian(const GaussianEncoder& enc, const Eigen::Ref<const VectorXd>& x,
                         const Eigen::Ref<const VectorXd>& noise) {
    const auto fwd = forward(enc, x);
    const VectorXd sigma = (0.5 * fwd.logvar.col(0).array()).exp();
    return gaussian_sample(fwd.mu.col(0), sigma, noise);
}

VectorXd kl_gaussian_terms(const Eigen::Ref<const MatrixXd>& mu, const Eigen::Ref<const MatrixXd>& logvar,
                           Diagnostics* diag) {
    if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) throw ConfigError("kl_gaussian: shape mismatch");
    if (mu.cols() == 0) throw ConfigError("kl_gaussian: empty dataset");
    VectorXd kl = VectorXd::Zero(mu.rows());
    std::size_t clamped = 0;
    for (Index i = 0; i < mu.cols(); ++i)
        for (Index j = 0; j < mu.rows(); ++j) {
            double var = std::exp(logvar(j, i));
            double log_var = logvar(j, i);
            if (var < kProbFloor) {
                var = kProbFloor;
                log_var = std::log(kProbFloor);
                ++clamped;
            }
            kl[j] += -log_var + var + mu(j, i) * mu(j, i) - 1.0;
        }
    note_clamp(diag, clamped, "kl_gaussian: variance underflow");
    kl /= 2.0 * static_cast<double>(mu.cols());
    return kl.cwiseMax(0.0);
}

VectorXd kl_gaussian(const GaussianEncoder& enc, const Eigen::Ref<const MatrixXd>& x, Diagnostics* diag) {
    const auto fwd = forward(enc, x);
    return kl_gaussian_terms(fwd.mu, fwd.logvar, diag);
}

// --- Log-normal -------------------------------------------------------------

void LogNormalEncoder::validate() const {
    if (f_net.empty() || alpha_net.empty()) throw ConfigError("lognormal encoder: empty network");
    for (const auto& l : f_net) l.validate();
    for (const auto& l : alpha_net) l.validate();
    if (alpha_net.back().activation != Activation::sigmoid)
        throw ConfigError("lognormal encoder: alpha network must end in a sigmoid");
    if (f_net.back().activation != Activation::softplus)
        throw ConfigError("lognormal encoder: f network must end in a softplus");
    if (alpha_net.front().in_size() != f_net.front().in_size() || alpha_net.back().out_size() != code_size())
        throw ConfigError("lognormal encoder: f and alpha networks disagree on shapes");
    if (prior_mu.size() != code_size() || prior_logsigma.size() != code_size())
        throw ConfigError("lognormal encoder: prior size does not match code size");
    if (!(alpha_scale > 0)) throw ConfigError("lognormal encoder: alpha_scale must be positive");
    if (!prior_mu.allFinite() || !prior_logsigma.allFinite()) throw NumericError("lognormal encoder: non-finite prior");
}

LogNormalEncoder make_lognormal_encoder(Index input, Index hidden, Index code, Rng& rng) {
    LogNormalEncoder enc;
    enc.f_net = make_stack({input, hidden, code}, Activation::softplus, Activation::softplus, rng);
    enc.alpha_net.push_back(make_layer(input, code, Activation::sigmoid, rng));
    enc.prior_mu = VectorXd::Zero(code);
    enc.prior_logsigma = VectorXd::Zero(code);
    return enc;
}

LogNormalForward forward(const LogNormalEncoder& enc, const Eigen::Ref<const MatrixXd>& x) {
    check_rows(x.rows(), enc.input_size(), "lognormal encoder");
    LogNormalForward fwd;
    fwd.f = forward_batch(enc.f_net, x, &fwd.f_cache);
    fwd.alpha = enc.alpha_scale * forward_batch(enc.alpha_net, x, &fwd.alpha_cache);
    return fwd;
}

LogNormalGrad backward(const LogNormalEncoder& enc, const LogNormalForward& fwd, const Eigen::Ref<const MatrixXd>& d_f,
                       const Eigen::Ref<const MatrixXd>& d_alpha) {
    LogNormalGrad grad;
    grad.f_net = backward(enc.f_net, fwd.f_cache, d_f);
    grad.alpha_net = backward(enc.alpha_net, fwd.alpha_cache, enc.alpha_scale * d_alpha);
    return grad;
}

VectorXd lognormal_sample(const Eigen::Ref<const VectorXd>& f, const Eigen::Ref<const VectorXd>& alpha,
                          const Eigen::Ref<const VectorXd>& noise) {
    if (f.size() != alpha.size() || f.size() != noise.size()) throw ConfigError("lognormal_sample: size mismatch");
    VectorXd u = f.array() * (alpha.array() * noise.array()).exp();
    if (!u.allFinite()) throw NumericError("lognormal_sample: overflow");
    return u;
}

VectorXd encode_lognormal(const LogNormalEncoder& enc, const Eigen::Ref<const VectorXd>& x,
                          const Eigen::Ref<const VectorXd>& noise) {
    const auto fwd = forward(enc, x);
    return lognormal_sample(fwd.f.col(0), fwd.alpha.col(0), noise);
}

VectorXd kl_lognormal_terms(const Eigen::Ref<const MatrixXd>& log_f, const Eigen::Ref<const MatrixXd>& alpha,
                            const Eigen::Ref<const VectorXd>& prior_mu,
                            const Eigen::Ref<const VectorXd>& prior_logsigma, Diagnostics* diag) {
    if (log_f.rows() != alpha.rows() || log_f.cols() != alpha.cols() || prior_mu.size() != log_f.rows() ||
        prior_logsigma.size() != log_f.rows())
        throw ConfigError("kl_lognormal: shape mismatch");
    if (log_f.cols() == 0) throw ConfigError("kl_lognormal: empty dataset");
    VectorXd kl = VectorXd::Zero(log_f.rows());
    std::size_t clamped = 0;
    for (Index i = 0; i < log_f.cols(); ++i)
        for (Index j = 0; j < log_f.rows(); ++j) {
            double a = alpha(j, i);
            if (a < kProbFloor) {
                a = kProbFloor;
                ++clamped;
            }
            const double var = std::exp(2.0 * prior_logsigma[j]);
            const double diff = log_f(j, i) - prior_mu[j];
            kl[j] += (a * a + diff * diff) / (2.0 * var) - (std::log(a) - prior_logsigma[j]) - 0.5;
        }
    note_clamp(diag, clamped, "kl_lognormal: alpha underflow");
    kl /= static_cast<double>(log_f.cols());
    return kl.cwiseMax(0.0);
}

VectorXd kl_lognormal(const LogNormalEncoder& enc, const Eigen::Ref<const MatrixXd>& x, Diagnostics* diag) {
    const auto fwd = forward(enc, x);
    std::size_t clamped = 0;
    const MatrixXd log_f = fwd.f.unaryExpr([&clamped](double v) {
        if (v < kProbFloor) {
            ++clamped;
            v = kProbFloor;
        }
        return std::log(v);
    });
    note_clamp(diag, clamped, "kl_lognormal: f underflow");
    return kl_lognormal_terms(log_f, fwd.alpha, enc.prior_mu, enc.prior_logsigma, diag);
}

// --- RBM --------------------------------------------------------------------

void RBMEncoder::validate() const {
    if (hidden_bias.size() != weights.rows() || visible_bias.size() != weights.cols())
        throw ConfigError("rbm encoder: bias sizes do not match weights");
    if (!weights.allFinite() || !hidden_bias.allFinite() || !visible_bias.allFinite())
        throw NumericError("rbm encoder: non-finite parameters");
}

RBMEncoder make_rbm_encoder(Index input, Index code, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 0.01);
    RBMEncoder enc;
    enc.weights.resize(code, input);
    for (Index r = 0; r < code; ++r)
        for (Index c = 0; c < input; ++c) enc.weights(r, c) = normal(rng);
    enc.hidden_bias = VectorXd::Zero(code);
    enc.visible_bias = VectorXd::Zero(input);
    return enc;
}

MatrixXd rbm_activation(const RBMEncoder& enc, const Eigen::Ref<const MatrixXd>& x) {
    check_rows(x.rows(), enc.input_size(), "rbm encoder");
    MatrixXd pre = enc.weights * x;
    pre.colwise() += enc.hidden_bias;
    return pre.unaryExpr([](double v) { return sigmoid(v); });
}

VectorXd kl_rbm_terms(const Eigen::Ref<const MatrixXd>& activations, Diagnostics* diag) {
    if (activations.cols() == 0) throw ConfigError("kl_rbm: empty dataset");
    std::size_t clamped = 0;
    const MatrixXd p = activations.unaryExpr([&clamped](double v) {
        if (v < kProbFloor || v > 1.0 - kProbFloor) ++clamped;
        return std::clamp(v, kProbFloor, 1.0 - kProbFloor);
    });
    note_clamp(diag, clamped, "kl_rbm: saturated activation");
    const VectorXd prior = p.rowwise().mean();
    VectorXd kl = VectorXd::Zero(p.rows());
    for (Index i = 0; i < p.cols(); ++i)
        for (Index j = 0; j < p.rows(); ++j) {
            const double a = p(j, i);
            kl[j] += a * std::log(a / prior[j]) + (1.0 - a) * std::log((1.0 - a) / (1.0 - prior[j]));
        }
    kl /= static_cast<double>(p.cols());
    // Jensen gap; only roundoff can push it below zero.
    return kl.cwiseMax(0.0);
}

VectorXd kl_rbm(const RBMEncoder& enc, const Eigen::Ref<const MatrixXd>& x, Diagnostics* diag) {
    return kl_rbm_terms(rbm_activation(enc, x), diag);
}

std::vector<std::span<double>> parameter_views(RBMEncoder& enc) {
    return {param_view(enc.weights), param_view(enc.hidden_bias), param_view(enc.visible_bias)};
}

void cd1_update(RBMEncoder& enc, const Eigen::Ref<const MatrixXd>& batch, const TrainConfig& config, Rng& rng,
                SgdOptimizer& optimizer) {
    check_rows(batch.rows(), enc.input_size(), "cd1_update");
    if (batch.cols() == 0) throw ConfigError("cd1_update: empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.cols());

    const MatrixXd h0_prob = rbm_activation(enc, batch);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    MatrixXd h0_state(h0_prob.rows(), h0_prob.cols());
    for (Index i = 0; i < h0_prob.size(); ++i) h0_state.data()[i] = uni(rng) < h0_prob.data()[i] ? 1.0 : 0.0;

    MatrixXd v1_pre = enc.weights.transpose() * h0_state;
    v1_pre.colwise() += enc.visible_bias;
    const MatrixXd v1_prob = v1_pre.unaryExpr([](double v) { return sigmoid(v); });
    const MatrixXd h1_prob = rbm_activation(enc, v1_prob);

    // Descent direction of (CD + lambda/2 ||W||_F^2).
    const MatrixXd g_w = -(h0_state * batch.transpose() - h1_prob * v1_prob.transpose()) * inv_b + config.lambda * enc.weights;
    const VectorXd g_b = -(h0_state - h1_prob).rowwise().sum() * inv_b;
    const VectorXd g_c = -(batch - v1_prob).rowwise().sum() * inv_b;

    optimizer.step(parameter_views(enc), {param_view(g_w), param_view(g_b), param_view(g_c)}, config);
}

// --- Family-erased helpers ----------------------------------------------------

std::string to_string(EncoderFamily f) {
    switch (f) {
    case EncoderFamily::gaussian: return "gaussian";
    case EncoderFamily::lognormal: return "lognormal";
    case EncoderFamily::rbm: return "rbm";
    }
    return "gaussian";
}

EncoderFamily family_from_string(const std::string& name) {
    if (name == "gaussian") return EncoderFamily::gaussian;
    if (name == "lognormal") return EncoderFamily::lognormal;
    if (name == "rbm") return EncoderFamily::rbm;
    throw ConfigError("unsupported encoder family '" + name + "'");
}

EncoderFamily family_of(const StochasticEncoder& enc) {
    return std::visit(overloaded{[](const GaussianEncoder&) { return EncoderFamily::gaussian; },
                                 [](const LogNormalEncoder&) { return EncoderFamily::lognormal; },
                                 [](const RBMEncoder&) { return EncoderFamily::rbm; }},
                      enc);
}

Index input_size(const StochasticEncoder& enc) {
    return std::visit([](const auto& e) { return e.input_size(); }, enc);
}

Index code_size(const StochasticEncoder& enc) {
    return std::visit([](const auto& e) { return e.code_size(); }, enc);
}

std::vector<CodeDistribution> conditionals(const StochasticEncoder& enc, const Eigen::Ref<const MatrixXd>& x) {
    std::vector<CodeDistribution> out(static_cast<std::size_t>(x.cols()));
    std::visit(overloaded{
                   [&](const GaussianEncoder& e) {
                       const auto fwd = forward(e, x);
                       for (Index i = 0; i < x.cols(); ++i)
                           out[i] = {EncoderFamily::gaussian, fwd.mu.col(i), (0.5 * fwd.logvar.col(i).array()).exp()};
                   },
                   [&](const LogNormalEncoder& e) {
                       const auto fwd = forward(e, x);
                       for (Index i = 0; i < x.cols(); ++i)
                           out[i] = {EncoderFamily::lognormal, fwd.f.col(i).cwiseMax(kProbFloor).array().log(),
                                     fwd.alpha.col(i).cwiseMax(kProbFloor)};
                   },
                   [&](const RBMEncoder& e) {
                       const MatrixXd p = rbm_activation(e, x);
                       for (Index i = 0; i < x.cols(); ++i) out[i] = {EncoderFamily::rbm, p.col(i), VectorXd()};
                   }},
               enc);
    return out;
}

MatrixXd sample_codes(const CodeDistribution& dist, Index samples, Rng& rng) {
    const Index m = dist.loc.size();
    MatrixXd u(m, samples);
    switch (dist.family) {
    case EncoderFamily::gaussian:
        fill_normal(u, rng);
        u = (u.array().colwise() * dist.scale.array()).colwise() + dist.loc.array();
        break;
    case EncoderFamily::lognormal:
        fill_normal(u, rng);
        u = ((u.array().colwise() * dist.scale.array()).colwise() + dist.loc.array()).exp();
        if (!u.allFinite()) throw NumericError("lognormal code sample overflow");
        break;
    case EncoderFamily::rbm: {
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        for (Index s = 0; s < samples; ++s)
            for (Index j = 0; j < m; ++j) u(j, s) = uni(rng) < dist.loc[j] ? 1.0 : 0.0;
        break;
    }
    }
    return u;
}

double log_prob(const CodeDistribution& dist, const Eigen::Ref<const VectorXd>& u) {
    if (u.size() != dist.loc.size()) throw ConfigError("log_prob: code size mismatch");
    constexpr double half_log_2pi = 0.91893853320467274178;
    double lp = 0.0;
    switch (dist.family) {
    case EncoderFamily::gaussian:
        for (Index j = 0; j < u.size(); ++j) {
            const double z = (u[j] - dist.loc[j]) / dist.scale[j];
            lp += -half_log_2pi - std::log(dist.scale[j]) - 0.5 * z * z;
        }
        break;
    case EncoderFamily::lognormal:
        for (Index j = 0; j < u.size(); ++j) {
            if (!(u[j] > 0)) return -std::numeric_limits<double>::infinity();
            const double lu = std::log(u[j]);
            const double z = (lu - dist.loc[j]) / dist.scale[j];
            lp += -lu - half_log_2pi - std::log(dist.scale[j]) - 0.5 * z * z;
        }
        break;
    case EncoderFamily::rbm:
        for (Index j = 0; j < u.size(); ++j) {
            const double p = std::clamp(dist.loc[j], kProbFloor, 1.0 - kProbFloor);
            lp += u[j] > 0.5 ? std::log(p) : std::log1p(-p);
        }
        break;
    }
    return lp;
}

VectorXd kl_per_unit(const StochasticEncoder& enc, const Eigen::Ref<const MatrixXd>& x, Diagnostics* diag) {
    return std::visit(overloaded{[&](const GaussianEncoder& e) { return kl_gaussian(e, x, diag); },
                                 [&](const LogNormalEncoder& e) { return kl_lognormal(e, x, diag); },
                                 [&](const RBMEncoder& e) { return kl_rbm(e, x, diag); }},
                      enc);
}

} // namespace ibgap
