#include "ibgap/training.hpp"

#include <numeric>

namespace ibgap {

namespace {

Index draws_per_example(const Eigen::Ref<const MatrixXd>& x, const Eigen::Ref<const MatrixXd>& noise, Index m,
                        std::size_t labels) {
    if (static_cast<Index>(labels) != x.cols()) throw ConfigError("objective: label count does not match batch");
    if (x.cols() == 0) throw ConfigError("objective: empty batch");
    if (noise.rows() != m || noise.cols() % x.cols() != 0 || noise.cols() == 0)
        throw ConfigError("objective: noise must be m x (B * S)");
    return noise.cols() / x.cols();
}

std::vector<int> repeat_labels(std::span<const int> labels, Index draws) {
    std::vector<int> out;
    out.reserve(labels.size() * static_cast<std::size_t>(draws));
    for (int y : labels)
        for (Index s = 0; s < draws; ++s) out.push_back(y);
    return out;
}

double mean_cross_entropy(const MatrixXd& probs, const std::vector<int>& labels) {
    double total = 0.0;
    for (Index c = 0; c < probs.cols(); ++c)
        total -= std::log(std::max(probs(labels[static_cast<std::size_t>(c)], c), kProbFloor));
    return total / static_cast<double>(probs.cols());
}

// Sums the S draw columns of each example: (m x B*S) -> (m x B).
MatrixXd sum_draws(const MatrixXd& per_draw, Index batch, Index draws) {
    MatrixXd out(per_draw.rows(), batch);
    for (Index i = 0; i < batch; ++i) out.col(i) = per_draw.middleCols(i * draws, draws).rowwise().sum();
    return out;
}

MatrixXd broadcast_draws(const MatrixXd& per_example, Index draws) {
    MatrixXd out(per_example.rows(), per_example.cols() * draws);
    for (Index i = 0; i < per_example.cols(); ++i) out.middleCols(i * draws, draws).colwise() = per_example.col(i);
    return out;
}

} // namespace

ObjectiveValue gaussian_objective(const GaussianEncoder& enc, const SoftmaxDecoder& dec,
                                  const Eigen::Ref<const MatrixXd>& x, std::span<const int> labels,
                                  const Eigen::Ref<const MatrixXd>& noise, double lambda, GaussianModelGrad* grad) {
    const Index m = enc.code_size();
    const Index b = x.cols();
    const Index s = draws_per_example(x, noise, m, labels.size());
    const auto fwd = forward(enc, x);
    const MatrixXd sigma = (0.5 * fwd.logvar.array()).exp();
    const MatrixXd sigma_rep = broadcast_draws(sigma, s);
    const MatrixXd u = broadcast_draws(fwd.mu, s) + sigma_rep.cwiseProduct(noise);
    const auto rep = repeat_labels(labels, s);

    ObjectiveValue out;
    out.cross_entropy = mean_cross_entropy(decoder_prob_batch(dec, u), rep);
    const MatrixXd var = fwd.logvar.array().exp();
    out.kl = 0.5 * (-fwd.logvar.array() + var.array() + fwd.mu.array().square() - 1.0).sum() / static_cast<double>(b);
    out.total = out.cross_entropy + lambda * out.kl;

    if (grad) {
        const double inv_b = 1.0 / static_cast<double>(b);
        grad->decoder = cross_entropy_backward(dec, u, rep, 1.0 / static_cast<double>(b * s));
        const MatrixXd& du = grad->decoder.codes;
        const MatrixXd d_mu = sum_draws(du, b, s) + lambda * inv_b * fwd.mu;
        const MatrixXd d_logvar = sum_draws(du.cwiseProduct(noise).cwiseProduct(0.5 * sigma_rep), b, s) +
                                  (lambda * 0.5 * inv_b) * (var.array() - 1.0).matrix();
        grad->encoder = backward(enc, fwd, d_mu, d_logvar);
    }
    return out;
}

ObjectiveValue lognormal_objective(const LogNormalEncoder& enc, const SoftmaxDecoder& dec,
                                   const Eigen::Ref<const MatrixXd>& x, std::span<const int> labels,
                                   const Eigen::Ref<const MatrixXd>& noise, double lambda, LogNormalModelGrad* grad) {
    const Index m = enc.code_size();
    const Index b = x.cols();
    const Index s = draws_per_example(x, noise, m, labels.size());
    const auto fwd = forward(enc, x);
    const MatrixXd f = fwd.f.cwiseMax(kProbFloor);
    const MatrixXd log_f = f.array().log();
    const MatrixXd alpha = fwd.alpha.cwiseMax(kProbFloor);
    const MatrixXd alpha_rep = broadcast_draws(alpha, s);
    const MatrixXd u = (broadcast_draws(log_f, s) + alpha_rep.cwiseProduct(noise)).array().exp();
    if (!u.allFinite()) throw NumericError("lognormal objective: code overflow");
    const auto rep = repeat_labels(labels, s);

    const VectorXd var_p = (2.0 * enc.prior_logsigma.array()).exp();
    const MatrixXd diff = log_f.colwise() - enc.prior_mu;
    const MatrixXd scaled = ((alpha.array().square() + diff.array().square()).colwise() / var_p.array()).matrix();

    ObjectiveValue out;
    out.cross_entropy = mean_cross_entropy(decoder_prob_batch(dec, u), rep);
    out.kl = ((0.5 * scaled.array() - alpha.array().log()).colwise() + enc.prior_logsigma.array() - 0.5).sum() /
             static_cast<double>(b);
    out.total = out.cross_entropy + lambda * out.kl;

    if (grad) {
        const double w = lambda / static_cast<double>(b);
        grad->decoder = cross_entropy_backward(dec, u, rep, 1.0 / static_cast<double>(b * s));
        const MatrixXd du_u = grad->decoder.codes.cwiseProduct(u);
        const MatrixXd diff_over_var = (diff.array().colwise() / var_p.array()).matrix();
        const MatrixXd d_f = (sum_draws(du_u, b, s) + w * diff_over_var).cwiseQuotient(f);
        const MatrixXd d_alpha = sum_draws(du_u.cwiseProduct(noise), b, s) +
                                 w * ((alpha.array().colwise() / var_p.array()) - alpha.array().inverse()).matrix();
        grad->encoder = backward(enc, fwd, d_f, d_alpha);
        grad->encoder.prior_mu = -w * diff_over_var.rowwise().sum();
        grad->encoder.prior_logsigma = w * (1.0 - scaled.array()).matrix().rowwise().sum();
    }
    return out;
}

double decoder_objective(const SoftmaxDecoder& dec, const Eigen::Ref<const MatrixXd>& codes,
                         std::span<const int> labels, DecoderGrad* grad) {
    if (static_cast<Index>(labels.size()) != codes.cols() || codes.cols() == 0)
        throw ConfigError("decoder_objective: label count does not match codes");
    const std::vector<int> y(labels.begin(), labels.end());
    const double ce = mean_cross_entropy(decoder_prob_batch(dec, codes), y);
    if (grad) *grad = cross_entropy_backward(dec, codes, labels, 1.0 / static_cast<double>(codes.cols()));
    return ce;
}

std::vector<std::span<double>> parameter_views(GaussianEncoder& enc) {
    std::vector<std::span<double>> out;
    append_views(enc.trunk, out);
    for (auto* l : {&enc.mu_head, &enc.logvar_head}) {
        out.push_back(param_view(l->weights));
        out.push_back(param_view(l->biases));
    }
    return out;
}

std::vector<std::span<double>> parameter_views(LogNormalEncoder& enc) {
    std::vector<std::span<double>> out;
    append_views(enc.f_net, out);
    append_views(enc.alpha_net, out);
    out.push_back(param_view(enc.prior_mu));
    out.push_back(param_view(enc.prior_logsigma));
    return out;
}

std::vector<std::span<double>> parameter_views(SoftmaxDecoder& dec) {
    return {param_view(dec.weights), param_view(dec.biases)};
}

std::vector<std::span<const double>> gradient_views(const GaussianGrad& grad) {
    std::vector<std::span<const double>> out;
    append_views(grad.trunk, out);
    for (const auto* l : {&grad.mu_head, &grad.logvar_head}) {
        out.push_back(param_view(l->weights));
        out.push_back(param_view(l->biases));
    }
    return out;
}

std::vector<std::span<const double>> gradient_views(const LogNormalGrad& grad) {
    std::vector<std::span<const double>> out;
    append_views(grad.f_net, out);
    append_views(grad.alpha_net, out);
    out.push_back(param_view(grad.prior_mu));
    out.push_back(param_view(grad.prior_logsigma));
    return out;
}

std::vector<std::span<const double>> gradient_views(const DecoderGrad& grad) {
    return {param_view(grad.weights), param_view(grad.biases)};
}

void ModelSettings::validate() const {
    if (hidden < 1 || code < 1) throw ConfigError("model: hidden and code sizes must be >= 1");
    if (epochs < 1 || decoder_epochs < 0) throw ConfigError("model: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("model: batch_size must be >= 1");
    if (!(learning_rate > 0) || !(rbm_learning_rate > 0) || !(decoder_learning_rate > 0))
        throw ConfigError("model: learning rates must be positive");
    for (double mom : {momentum, rbm_initial_momentum, rbm_final_momentum})
        if (!(mom >= 0 && mom < 1)) throw ConfigError("model: momentum must lie in [0, 1)");
    if (train_samples < 1 || curve_samples < 1) throw ConfigError("model: sample counts must be >= 1");
}

namespace {

struct Batch {
    MatrixXd x;
    std::vector<int> y;
};

Batch gather(const LabeledDataset& data, const std::vector<Index>& order, Index start, Index len) {
    Batch b{MatrixXd(data.dim(), len), std::vector<int>(static_cast<std::size_t>(len))};
    for (Index k = 0; k < len; ++k) {
        const Index i = order[static_cast<std::size_t>(start + k)];
        b.x.col(k) = data.images.col(i);
        b.y[static_cast<std::size_t>(k)] = data.labels[static_cast<std::size_t>(i)];
    }
    return b;
}

std::vector<Index> identity_order(Index n) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    return order;
}

void check_finite(double v, int epoch) {
    if (!std::isfinite(v)) throw NumericError("training objective became non-finite in epoch " + std::to_string(epoch));
}

constexpr Index kCurveChunk = 500;

template <class Encoder, class Grad, class Objective>
TrainedModel train_reparameterised(Encoder enc, const ModelSettings& st, double lambda, std::uint64_t seed,
                                   const LabeledDataset& train, Rng& init, Objective objective) {
    SoftmaxDecoder dec = make_decoder(st.code, train.label_count, init);
    TrainConfig cfg{st.learning_rate, st.batch_size, st.epochs, st.momentum, lambda, seed};
    cfg.validate();

    const Index n = train.size();
    const Index m = st.code;
    Rng shuffle_rng = make_rng(seed, 2);
    Rng noise_rng = make_rng(seed, 3);
    Rng curve_rng = make_rng(seed, 4);
    MatrixXd curve_noise(m, n * st.curve_samples);
    fill_normal(curve_noise, curve_rng);

    SgdOptimizer opt;
    TrainedModel out;
    std::vector<Index> order = identity_order(n);
    const std::vector<Index> plain = identity_order(n);
    for (int epoch = 0; epoch < st.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (Index start = 0; start < n; start += st.batch_size) {
            const Index len = std::min<Index>(st.batch_size, n - start);
            const Batch b = gather(train, order, start, len);
            MatrixXd noise(m, len * st.train_samples);
            fill_normal(noise, noise_rng);
            Grad g;
            const auto val = objective(enc, dec, b.x, b.y, noise, lambda, &g);
            check_finite(val.total, epoch);
            auto params = parameter_views(enc);
            auto grads = gradient_views(g.encoder);
            for (auto v : parameter_views(dec)) params.push_back(v);
            for (auto v : gradient_views(g.decoder)) grads.push_back(v);
            opt.step(params, grads, cfg);
        }
        double total = 0.0;
        for (Index start = 0; start < n; start += kCurveChunk) {
            const Index len = std::min(kCurveChunk, n - start);
            const Batch b = gather(train, plain, start, len);
            const auto val = objective(enc, dec, b.x, b.y,
                                       curve_noise.middleCols(start * st.curve_samples, len * st.curve_samples),
                                       lambda, nullptr);
            total += val.total * static_cast<double>(len);
        }
        check_finite(total, epoch);
        out.loss_curve.push_back(total / static_cast<double>(n));
    }
    out.encoder = std::move(enc);
    out.decoder = std::move(dec);
    return out;
}

MatrixXd bernoulli_codes(const MatrixXd& p, Rng& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    MatrixXd u(p.rows(), p.cols());
    for (Index i = 0; i < p.size(); ++i) u.data()[i] = uni(rng) < p.data()[i] ? 1.0 : 0.0;
    return u;
}

TrainedModel train_rbm(const ModelSettings& st, double lambda, std::uint64_t seed, const LabeledDataset& train,
                       Rng& init) {
    RBMEncoder enc = make_rbm_encoder(train.dim(), st.code, init);
    SoftmaxDecoder dec = make_decoder(st.code, train.label_count, init);
    const Index n = train.size();
    auto momentum_at = [&](int epoch) { return epoch < st.rbm_momentum_switch ? st.rbm_initial_momentum : st.rbm_final_momentum; };

    TrainedModel out;
    Rng shuffle_rng = make_rng(seed, 2);
    Rng cd_rng = make_rng(seed, 3);
    std::vector<Index> order = identity_order(n);
    SgdOptimizer cd_opt;
    for (int epoch = 0; epoch < st.epochs; ++epoch) {
        TrainConfig cfg{st.rbm_learning_rate, st.batch_size, st.epochs, momentum_at(epoch), lambda, seed};
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (Index start = 0; start < n; start += st.batch_size) {
            const Index len = std::min<Index>(st.batch_size, n - start);
            cd1_update(enc, gather(train, order, start, len).x, cfg, cd_rng, cd_opt);
        }
        enc.validate();
        MatrixXd recon = enc.weights.transpose() * rbm_activation(enc, train.images);
        recon.colwise() += enc.visible_bias;
        recon = recon.unaryExpr([](double v) { return sigmoid(v); });
        out.reconstruction_curve.push_back((recon - train.images).squaredNorm() / static_cast<double>(train.images.size()));
    }

    const MatrixXd act = rbm_activation(enc, train.images);
    Rng code_rng = make_rng(seed, 4);
    Rng curve_rng = make_rng(seed, 5);
    const MatrixXd curve_codes = bernoulli_codes(act, curve_rng);
    SgdOptimizer dec_opt;
    for (int epoch = 0; epoch < st.decoder_epochs; ++epoch) {
        TrainConfig cfg{st.decoder_learning_rate, st.batch_size, st.decoder_epochs, momentum_at(epoch), 0.0, seed};
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (Index start = 0; start < n; start += st.batch_size) {
            const Index len = std::min<Index>(st.batch_size, n - start);
            MatrixXd p(st.code, len);
            std::vector<int> y(static_cast<std::size_t>(len));
            for (Index k = 0; k < len; ++k) {
                const Index i = order[static_cast<std::size_t>(start + k)];
                p.col(k) = act.col(i);
                y[static_cast<std::size_t>(k)] = train.labels[static_cast<std::size_t>(i)];
            }
            DecoderGrad g;
            check_finite(decoder_objective(dec, bernoulli_codes(p, code_rng), y, &g), epoch);
            dec_opt.step(parameter_views(dec), gradient_views(g), cfg);
        }
        const double ce = decoder_objective(dec, curve_codes, train.labels);
        check_finite(ce, epoch);
        out.loss_curve.push_back(ce);
    }
    out.encoder = std::move(enc);
    out.decoder = std::move(dec);
    return out;
}

} // namespace

TrainedModel train_model(const ModelSettings& settings, double lambda, std::uint64_t seed, const LabeledDataset& train) {
    settings.validate();
    if (train.empty()) throw ConfigError("train_model: empty training set");
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw ConfigError("train_model: lambda must be finite and >= 0");
    Rng init = make_rng(seed, 1);
    switch (settings.family) {
    case EncoderFamily::gaussian:
        return train_reparameterised<GaussianEncoder, GaussianModelGrad>(
            make_gaussian_encoder(train.dim(), settings.hidden, settings.code, init), settings, lambda, seed, train, init,
            [](const auto&... a) { return gaussian_objective(a...); });
    case EncoderFamily::lognormal:
        return train_reparameterised<LogNormalEncoder, LogNormalModelGrad>(
            make_lognormal_encoder(train.dim(), settings.hidden, settings.code, init), settings, lambda, seed, train,
            init, [](const auto&... a) { return lognormal_objective(a...); });
    case EncoderFamily::rbm: return train_rbm(settings, lambda, seed, train, init);
    }
    throw ConfigError("unknown encoder family");
}

} // namespace ibgap
