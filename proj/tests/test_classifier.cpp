#include "ibgap/classifier.hpp"
#include "support.hpp"

#include <doctest.h>

#include <numeric>

using namespace ibgap;
using doctest::Approx;

namespace {

SoftmaxDecoder zero_decoder(Index m, Index labels) { return {MatrixXd::Zero(labels, m), VectorXd::Zero(labels)}; }

RBMEncoder random_rbm(Index d, Index m, Rng& rng, double scale = 1.5) {
    RBMEncoder enc = make_rbm_encoder(d, m, rng);
    enc.weights = testing::random_matrix(m, d, rng, scale);
    enc.hidden_bias = testing::random_matrix(m, 1, rng, 0.5);
    return enc;
}

SoftmaxDecoder random_decoder(Index m, Index labels, Rng& rng) {
    return {testing::random_matrix(labels, m, rng, 1.5), testing::random_matrix(labels, 1, rng)};
}

} // namespace

TEST_CASE("decoder probabilities") {
    const VectorXd uniform = decoder_prob(zero_decoder(3, 10), Eigen::Vector3d(1, -2, 5));
    CHECK((uniform.array() - 0.1).abs().maxCoeff() < 1e-15);

    SoftmaxDecoder dec = zero_decoder(2, 2);
    dec.biases << std::log(1.0), std::log(3.0);
    const VectorXd p = decoder_prob(dec, Eigen::Vector2d(0.3, 0.7));
    CHECK(p[0] == Approx(0.25).epsilon(1e-15));
    CHECK(p[1] == Approx(0.75).epsilon(1e-15));

    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        const SoftmaxDecoder r = random_decoder(4, 10, rng);
        const MatrixXd u = testing::random_matrix(4, 3, rng, 20.0);
        const MatrixXd q = decoder_prob_batch(r, u);
        CHECK((q.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
        CHECK((q.array() > 0).all());
    }
}

TEST_CASE("decoder positivity on a probe grid") {
    Rng rng(2);
    const SoftmaxDecoder dec = random_decoder(2, 5, rng);
    double eta = 1.0;
    for (double a = -5; a <= 5; a += 0.5)
        for (double b = -5; b <= 5; b += 0.5) eta = std::min(eta, decoder_prob(dec, Eigen::Vector2d(a, b)).minCoeff());
    CHECK(eta > 0);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        SoftmaxDecoder dec = random_decoder(3, 4, rng);
        MatrixXd u = testing::random_matrix(3, 5, rng);
        const std::vector<int> labels{0, 3, 1, 1, 2};
        auto loss = [&] {
            const MatrixXd p = decoder_prob_batch(dec, u);
            double acc = 0.0;
            for (Index s = 0; s < u.cols(); ++s) acc -= 0.7 * std::log(p(labels[std::size_t(s)], s));
            return acc;
        };
        const auto g = cross_entropy_backward(dec, u, labels, 0.7);
        double worst = testing::gradient_error(param_view(dec.weights), param_view(g.weights), loss);
        worst = std::max(worst, testing::gradient_error(param_view(dec.biases), param_view(g.biases), loss));
        worst = std::max(worst, testing::gradient_error(param_view(u), param_view(g.codes), loss));
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("deterministic gaussian encoder gives the plug-in loss") {
    Rng rng(3);
    GaussianEncoder g = make_gaussian_encoder(4, 6, 2, rng);
    g.logvar_head.weights.setZero();
    g.logvar_head.biases.setConstant(-1000.0); // sigma = exp(-500)
    const StochasticEncoder enc = g;
    const SoftmaxDecoder dec = random_decoder(2, 3, rng);
    const VectorXd x = testing::random_unit(4, 1, rng);
    const double plug_in = -std::log(decoder_prob(dec, forward(g, x).mu)[1]);
    for (Index s : {1, 7, 100}) {
        Rng r(s);
        CHECK(sample_loss(enc, dec, x, 1, s, r).mean == Approx(plug_in).epsilon(1e-12));
    }
}

TEST_CASE("uniform decoder loss is log of the label count") {
    Rng rng(4);
    const StochasticEncoder enc = make_gaussian_encoder(4, 5, 3, rng);
    const SoftmaxDecoder dec = zero_decoder(3, 10);
    for (int y : {0, 4, 9}) {
        const auto est = sample_loss(enc, dec, testing::random_unit(4, 1, rng), y, 17, rng);
        CHECK(est.mean == Approx(std::log(10.0)).epsilon(1e-14));
    }
    const auto data = make_dataset(testing::random_unit(4, 6, rng), {0, 1, 2, 3, 4, 5}, 10);
    CHECK(empirical_risk(enc, dec, data, 8, 1) == Approx(std::log(10.0)).epsilon(1e-14));
}

TEST_CASE("sample loss errors") {
    Rng rng(5);
    const StochasticEncoder enc = make_rbm_encoder(3, 2, rng);
    const SoftmaxDecoder dec = zero_decoder(2, 3);
    CHECK_THROWS_AS(sample_loss(enc, dec, VectorXd::Zero(3), 0, 0, rng), ConfigError);
    CHECK_THROWS_AS(sample_loss(enc, dec, VectorXd::Zero(3), 3, 4, rng), ConfigError);
    CHECK_THROWS_AS(exact_loss_binary(make_rbm_encoder(3, 21, rng), zero_decoder(21, 2), VectorXd::Zero(3), 0),
                    ConfigError);
}

TEST_CASE("exact binary loss") {
    Rng rng(6);
    RBMEncoder enc = make_rbm_encoder(2, 1, rng);
    enc.weights.setZero();
    SoftmaxDecoder dec = zero_decoder(1, 2);
    dec.biases << 0.0, std::log(3.0); // Q(1|u) = 0.75 for both codes
    CHECK(exact_loss_binary(enc, dec, Eigen::Vector2d(0.2, 0.9), 1) == Approx(-std::log(0.75)).epsilon(1e-14));

    enc.hidden_bias[0] = 60.0; // activation rounds to 1
    dec.weights << 2.0, -1.0;
    const double at_one = -std::log(decoder_prob(dec, VectorXd::Ones(1))[0]);
    CHECK(exact_loss_binary(enc, dec, Eigen::Vector2d(0.2, 0.9), 0) == Approx(at_one).epsilon(1e-10));

    // Four-term enumeration for m = 2.
    RBMEncoder two = random_rbm(3, 2, rng);
    const SoftmaxDecoder dec2 = random_decoder(2, 3, rng);
    const VectorXd x = testing::random_unit(3, 1, rng);
    const double p0 = sigmoid(two.hidden_bias[0] + two.weights.row(0).dot(x));
    const double p1 = sigmoid(two.hidden_bias[1] + two.weights.row(1).dot(x));
    double sum = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const double q = (a ? p0 : 1 - p0) * (b ? p1 : 1 - p1);
            sum += q * -std::log(decoder_prob(dec2, Eigen::Vector2d(a, b))[2]);
        }
    CHECK(exact_loss_binary(two, dec2, x, 2) == Approx(sum).epsilon(1e-13));
}

TEST_CASE("monte carlo loss converges to the exact binary loss") {
    {
        Rng rng(7);
        const RBMEncoder rbm = random_rbm(5, 4, rng);
        const SoftmaxDecoder dec = random_decoder(4, 3, rng);
        const VectorXd x = testing::random_unit(5, 1, rng);
        const auto est = sample_loss(StochasticEncoder{rbm}, dec, x, 2, 100000, rng);
        CHECK(std::abs(est.mean - exact_loss_binary(rbm, dec, x, 2)) <= 3 * est.stddev / std::sqrt(1e5));
    }
    int within = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(1000 + seed);
        const RBMEncoder rbm = random_rbm(5, 3, rng);
        const SoftmaxDecoder dec = random_decoder(3, 4, rng);
        const VectorXd x = testing::random_unit(5, 1, rng);
        const int y = static_cast<int>(seed % 4);
        const auto est = sample_loss(StochasticEncoder{rbm}, dec, x, y, 10000, rng);
        CHECK(est.mean >= 0);
        CHECK(exact_loss_binary(rbm, dec, x, y) >= 0);
        within += std::abs(est.mean - exact_loss_binary(rbm, dec, x, y)) <= 3 * est.stddev / 100.0;
    }
    INFO("instances within 3 standard errors: " << within);
    CHECK(within == 50);
}

TEST_CASE("empirical risk is a per-sample mean") {
    Rng rng(8);
    const StochasticEncoder enc = random_rbm(4, 3, rng);
    const SoftmaxDecoder dec = random_decoder(3, 3, rng);
    const auto data = make_dataset(testing::random_unit(4, 5, rng), {0, 1, 2, 0, 1}, 3);
    const auto single = data.select({2});
    CHECK(empirical_risk(enc, dec, single, 16, 9) == evaluate_losses(enc, dec, data, 16, 9).losses[2]);
    const auto doubled = data.select({0, 1, 2, 3, 4, 0, 1, 2, 3, 4});
    CHECK(empirical_risk(enc, dec, doubled, 16, 9) == Approx(empirical_risk(enc, dec, data, 16, 9)).epsilon(1e-14));
    const auto eval = evaluate_losses(enc, dec, data, 16, 9);
    CHECK((eval.losses.array() >= 0).all());
    for (Index i = 0; i < 5; ++i) CHECK(eval.loss_table(i, data.labels[std::size_t(i)]) == eval.losses[i]);
}

TEST_CASE("gap quantile") {
    std::vector<double> gaps;
    for (int i = 1; i <= 10; ++i) gaps.push_back(0.1 * i);
    CHECK(higher_quantile(gaps, 0.95) == 1.0);
    CHECK(higher_quantile(std::vector<double>(7, 0.3), 0.2) == 0.3);
    CHECK(higher_quantile(std::vector<double>(7, 0.3), 0.95) == 0.3);
    CHECK_THROWS_AS(higher_quantile(std::vector<double>{}, 0.5), ConfigError);

    const std::vector<double> pool(300, 0.5);
    const auto blocks = mini_test_blocks(300, 100, 1);
    CHECK(blocks.size() == 3);
    CHECK(gap_from_losses(0.5, pool, blocks, 0.95).quantile_value == 0.0);
    CHECK_THROWS_AS(mini_test_blocks(99, 100, 1), ConfigError);
}

TEST_CASE("mini-test blocks are disjoint and the quantile is order free and monotone") {
    const auto blocks = mini_test_blocks(1050, 100, 5);
    CHECK(blocks.size() == 10);
    std::vector<int> seen(1050, 0);
    for (const auto& b : blocks)
        for (Index i : b) ++seen[std::size_t(i)];
    CHECK(*std::max_element(seen.begin(), seen.end()) == 1);

    Rng rng(10);
    std::vector<double> values(37);
    for (auto& v : values) v = std::uniform_real_distribution<double>(0, 2)(rng);
    double prev = 0.0;
    for (double level = 0.05; level <= 1.0; level += 0.05) {
        const double q = higher_quantile(values, level);
        CHECK(q >= prev);
        prev = q;
        auto shuffled = values;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(higher_quantile(shuffled, level) == q);
    }
}

TEST_CASE("gap estimate is invariant to pool order") {
    Rng rng(11);
    const StochasticEncoder enc = random_rbm(4, 3, rng);
    const SoftmaxDecoder dec = random_decoder(3, 2, rng);
    std::vector<int> labels(400);
    for (auto& y : labels) y = int(rng() % 2);
    const auto pool = make_dataset(testing::random_unit(4, 400, rng), labels, 2);
    const auto reference = make_dataset(testing::random_unit(4, 50, rng), std::vector<int>(50, 1), 2);
    const auto a = gap_quantile(enc, dec, reference, pool, 100, 0.95, 8, 3);
    for (const auto& g : a.mini_test_gaps) CHECK(g >= 0);
    // Per-sample noise is keyed on content, so permuting the pool and its blocks together changes nothing.
    std::vector<Index> perm(400);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto permuted = pool.select(perm);
    const auto losses = evaluate_losses(enc, dec, permuted, 8, 3).losses;
    std::vector<Index> inverse(400);
    for (Index k = 0; k < 400; ++k) inverse[std::size_t(perm[std::size_t(k)])] = k;
    auto blocks = mini_test_blocks(400, 100, 3);
    for (auto& b : blocks)
        for (auto& i : b) i = inverse[std::size_t(i)];
    const auto b = gap_from_losses(a.reference_risk, {losses.data(), 400}, blocks, 0.95);
    CHECK(b.quantile_value == Approx(a.quantile_value).epsilon(1e-14));
}
