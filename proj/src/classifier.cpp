#include "ibgap/classifier.hpp"

#include <numeric>

namespace ibgap {

void SoftmaxDecoder::validate() const {
    if (biases.size() != weights.rows()) throw ConfigError("decoder: bias size does not match label count");
    if (weights.rows() < 1) throw ConfigError("decoder: needs at least one label");
    if (!weights.allFinite() || !biases.allFinite()) throw NumericError("decoder: non-finite parameters");
}

SoftmaxDecoder make_decoder(Index code, Index labels, Rng& rng) {
    const DenseLayer layer = make_layer(code, labels, Activation::identity, rng);
    return {layer.weights, layer.biases};
}

MatrixXd decoder_prob_batch(const SoftmaxDecoder& dec, const Eigen::Ref<const MatrixXd>& u) {
    if (u.rows() != dec.code_size())
        throw ConfigError("decoder: code size " + std::to_string(u.rows()) + " != " + std::to_string(dec.code_size()));
    MatrixXd logits = dec.weights * u;
    logits.colwise() += dec.biases;
    const Eigen::RowVectorXd peak = logits.colwise().maxCoeff();
    logits.rowwise() -= peak;
    MatrixXd p = logits.array().exp();
    const Eigen::RowVectorXd norm = p.colwise().sum();
    p.array().rowwise() /= norm.array();
    return p;
}

VectorXd decoder_prob(const SoftmaxDecoder& dec, const Eigen::Ref<const VectorXd>& u) {
    return decoder_prob_batch(dec, u);
}

DecoderGrad cross_entropy_backward(const SoftmaxDecoder& dec, const Eigen::Ref<const MatrixXd>& u,
                                   std::span<const int> labels, double weight) {
    if (static_cast<Index>(labels.size()) != u.cols()) throw ConfigError("cross_entropy_backward: label count mismatch");
    MatrixXd g = decoder_prob_batch(dec, u);
    for (Index s = 0; s < u.cols(); ++s) g(labels[static_cast<std::size_t>(s)], s) -= 1.0;
    g *= weight;
    return {g * u.transpose(), g.rowwise().sum(), dec.weights.transpose() * g};
}

namespace {

void check_label(const SoftmaxDecoder& dec, int y) {
    if (y < 0 || y >= dec.label_count()) throw ConfigError("label " + std::to_string(y) + " outside decoder range");
}

double neg_log(double p, std::size_t& clamped) {
    if (p < kProbFloor) {
        ++clamped;
        p = kProbFloor;
    }
    return -std::log(p);
}

} // namespace

LossEstimate sample_loss(const StochasticEncoder& enc, const SoftmaxDecoder& dec, const Eigen::Ref<const VectorXd>& x,
                         int y, Index mc_samples, Rng& rng) {
    if (mc_samples < 1) throw ConfigError("sample_loss: need at least one Monte Carlo sample");
    check_label(dec, y);
    const auto dist = conditionals(enc, x).front();
    const MatrixXd u = sample_codes(dist, mc_samples, rng);
    const MatrixXd p = decoder_prob_batch(dec, u);
    std::size_t clamped = 0;
    VectorXd draws(mc_samples);
    for (Index s = 0; s < mc_samples; ++s) draws[s] = neg_log(p(y, s), clamped);
    LossEstimate out;
    out.samples = mc_samples;
    out.mean = draws.mean();
    out.stddev = mc_samples > 1 ? std::sqrt((draws.array() - out.mean).square().sum() / double(mc_samples - 1)) : 0.0;
    out.clamped = clamped > 0;
    return out;
}

double exact_loss_binary(const RBMEncoder& enc, const SoftmaxDecoder& dec, const Eigen::Ref<const VectorXd>& x, int y) {
    const Index m = enc.code_size();
    if (m > kMaxEnumerationBits)
        throw ConfigError("exact_loss_binary: " + std::to_string(m) + " units exceeds the enumeration budget of " +
                          std::to_string(kMaxEnumerationBits));
    check_label(dec, y);
    const VectorXd p = rbm_activation(enc, x).col(0).cwiseMax(kProbFloor).cwiseMin(1.0 - kProbFloor);
    const VectorXd log_on = p.array().log();
    const VectorXd log_off = (-p.array()).log1p();

    const Index total = Index{1} << m;
    const Index chunk = std::min<Index>(total, 4096);
    std::size_t clamped = 0;
    double loss = 0.0;
    MatrixXd codes(m, chunk);
    VectorXd log_q(chunk);
    for (Index start = 0; start < total; start += chunk) {
        const Index len = std::min(chunk, total - start);
        for (Index k = 0; k < len; ++k) {
            const Index c = start + k;
            double lq = 0.0;
            for (Index j = 0; j < m; ++j) {
                const bool on = (c >> j) & 1;
                codes(j, k) = on ? 1.0 : 0.0;
                lq += on ? log_on[j] : log_off[j];
            }
            log_q[k] = lq;
        }
        const MatrixXd q = decoder_prob_batch(dec, codes.leftCols(len));
        for (Index k = 0; k < len; ++k) loss += std::exp(log_q[k]) * neg_log(q(y, k), clamped);
    }
    return loss;
}

LossEvaluation evaluate_losses(const StochasticEncoder& enc, const SoftmaxDecoder& dec, const LabeledDataset& data,
                               Index mc_samples, std::uint64_t seed) {
    if (mc_samples < 1) throw ConfigError("evaluate_losses: need at least one Monte Carlo sample");
    if (data.empty()) throw ConfigError("evaluate_losses: empty dataset");
    const Index n = data.size();
    const Index labels = dec.label_count();
    const Index m = code_size(enc);

    LossEvaluation out;
    out.losses.resize(n);
    out.loss_std.resize(n);
    out.loss_table.resize(n, labels);
    out.code_min = VectorXd::Constant(m, std::numeric_limits<double>::infinity());
    out.code_max = VectorXd::Constant(m, -std::numeric_limits<double>::infinity());

    constexpr Index batch = 256;
    for (Index start = 0; start < n; start += batch) {
        const Index len = std::min(batch, n - start);
        const auto dists = conditionals(enc, data.images.middleCols(start, len));
        for (Index k = 0; k < len; ++k) {
            const Index i = start + k;
            const int y = data.labels[static_cast<std::size_t>(i)];
            check_label(dec, y);
            Rng rng(derive_seed(seed, sample_key(data.images.col(i), y)));
            const MatrixXd u = sample_codes(dists[static_cast<std::size_t>(k)], mc_samples, rng);
            const MatrixXd p = decoder_prob_batch(dec, u);
            out.min_decoder_prob = std::min(out.min_decoder_prob, p.minCoeff());
            out.code_min = out.code_min.cwiseMin(u.rowwise().minCoeff());
            out.code_max = out.code_max.cwiseMax(u.rowwise().maxCoeff());
            const MatrixXd nl = p.unaryExpr([&out](double v) { return neg_log(v, out.clamped); });
            out.loss_table.row(i) = nl.rowwise().mean().transpose();
            out.losses[i] = out.loss_table(i, y);
            const double var = mc_samples > 1
                                   ? (nl.row(y).array() - out.losses[i]).square().sum() / double(mc_samples - 1)
                                   : 0.0;
            out.loss_std[i] = std::sqrt(var);
        }
    }
    return out;
}

double empirical_risk(const StochasticEncoder& enc, const SoftmaxDecoder& dec, const LabeledDataset& data,
                      Index mc_samples, std::uint64_t seed) {
    return evaluate_losses(enc, dec, data, mc_samples, seed).losses.mean();
}

double higher_quantile(std::span<const double> values, double level) {
    if (values.empty()) throw ConfigError("quantile of an empty list");
    if (!(level > 0 && level <= 1)) throw ConfigError("quantile level must be in (0, 1]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto count = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(level * count - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

std::vector<std::vector<Index>> mini_test_blocks(Index pool_size, Index mini_size, std::uint64_t seed) {
    if (mini_size < 1) throw ConfigError("mini-test size must be >= 1");
    if (pool_size < mini_size)
        throw ConfigError("pool of " + std::to_string(pool_size) + " samples is smaller than one mini-test of " +
                          std::to_string(mini_size));
    std::vector<Index> order(static_cast<std::size_t>(pool_size));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng = make_rng(seed, 0xb10c);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<Index>> blocks;
    for (Index b = 0; b + mini_size <= pool_size; b += mini_size)
        blocks.emplace_back(order.begin() + b, order.begin() + b + mini_size);
    return blocks;
}

GapEstimate gap_from_losses(double reference_risk, std::span<const double> pool_losses,
                            const std::vector<std::vector<Index>>& blocks, double level) {
    if (blocks.empty()) throw ConfigError("no mini-tests to evaluate");
    GapEstimate out;
    out.quantile_level = level;
    out.reference_risk = reference_risk;
    out.mini_test_size = static_cast<Index>(blocks.front().size());
    for (const auto& block : blocks) {
        double risk = 0.0;
        for (Index i : block) risk += pool_losses[static_cast<std::size_t>(i)];
        risk /= static_cast<double>(block.size());
        out.mini_test_gaps.push_back(std::abs(risk - reference_risk));
    }
    out.quantile_value = higher_quantile(out.mini_test_gaps, level);
    return out;
}

GapEstimate gap_quantile(const StochasticEncoder& enc, const SoftmaxDecoder& dec, const LabeledDataset& reference,
                         const LabeledDataset& pool, Index mini_size, double level, Index mc_samples,
                         std::uint64_t seed) {
    const auto blocks = mini_test_blocks(pool.size(), mini_size, seed);
    const double reference_risk = empirical_risk(enc, dec, reference, mc_samples, seed);
    const auto pool_eval = evaluate_losses(enc, dec, pool, mc_samples, seed);
    return gap_from_losses(reference_risk, {pool_eval.losses.data(), static_cast<std::size_t>(pool_eval.losses.size())},
                           blocks, level);
}

} // namespace ibgap
