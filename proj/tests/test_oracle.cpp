#include "ibgap/oracle.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace ibgap;
using doctest::Approx;

namespace {

// Second enumeration: I = sum_x p(x) sum_u q(u|x) log(q(u|x) / q(u)), with q(u|x) rebuilt from activations.
double mi_by_divergence(const DiscreteWorld& w) {
    const Index m = w.encoder.code_size();
    const Index codes = Index{1} << m;
    const VectorXd px = w.p_x();
    const MatrixXd act = rbm_activation(w.encoder, w.x_support);
    MatrixXd q(w.x_card(), codes);
    for (Index x = 0; x < w.x_card(); ++x)
        for (Index c = 0; c < codes; ++c) {
            double p = 1.0;
            for (Index j = 0; j < m; ++j) p *= (c >> j) & 1 ? act(j, x) : 1.0 - act(j, x);
            q(x, c) = p;
        }
    const Eigen::RowVectorXd qu = px.transpose() * q;
    double mi = 0.0;
    for (Index x = 0; x < w.x_card(); ++x)
        for (Index c = 0; c < codes; ++c)
            if (q(x, c) > 0) mi += px[x] * q(x, c) * std::log(q(x, c) / qu[c]);
    return mi;
}

DiscreteWorld copy_channel() {
    DiscreteWorld w;
    w.x_support.resize(2, 4);
    w.x_support << 0, 1, 0, 1, 0, 0, 1, 1;
    w.counts = Eigen::MatrixXi::Ones(4, 2);
    w.encoder.weights = MatrixXd::Identity(2, 2) * 80.0;
    w.encoder.hidden_bias = VectorXd::Constant(2, -40.0);
    w.encoder.visible_bias = VectorXd::Zero(2);
    return w;
}

} // namespace

TEST_CASE("random worlds are valid and reproducible") {
    for (auto s : oracle_seeds(20)) {
        const auto w = random_world(s);
        CHECK_NOTHROW(w.validate());
        CHECK(w.joint().sum() == Approx(1.0).epsilon(1e-15));
        CHECK(w.x_card() <= kMaxWorldSupport);
        CHECK(w.encoder.code_size() <= kMaxWorldBits);
        CHECK(random_world(s).counts == w.counts);
    }
    const auto five = oracle_seeds(5);
    CHECK(oracle_seeds(3) == std::vector<std::uint64_t>(five.begin(), five.begin() + 3));
}

TEST_CASE("world dataset reproduces the joint") {
    const auto w = random_world(oracle_seeds(1)[0]);
    const auto d = world_dataset(w);
    CHECK(d.size() == w.counts.sum());
    const auto freq = d.label_frequencies();
    for (Index y = 0; y < w.y_card(); ++y) CHECK(freq[std::size_t(y)] == Approx(w.p_y()[y]).epsilon(1e-14));
}

TEST_CASE("mutual information by enumeration") {
    auto blind = random_world(11);
    blind.encoder.weights.setZero();
    CHECK(std::abs(brute_force_mi(blind)) <= 1e-12);

    CHECK(brute_force_mi(copy_channel()) == Approx(std::log(4.0)).epsilon(1e-12));

    for (auto s : oracle_seeds(100)) {
        const auto w = random_world(s);
        const double mi = brute_force_mi(w);
        CHECK(mi >= 0);
        CHECK(std::abs(mi - mi_by_divergence(w)) <= 1e-10);
        // Variational bound dominance on the same empirical law.
        const auto bound = mi_bound(StochasticEncoder{w.encoder}, world_dataset(w).images);
        CHECK(bound.total_kl - mi >= -1e-9);
    }

    auto big = random_world(3);
    Rng rng(1);
    big.encoder = make_rbm_encoder(big.x_support.rows(), 4, rng);
    CHECK_THROWS_AS(brute_force_mi(big), ConfigError);
}

TEST_CASE("exact loss table agrees with an independent enumeration") {
    for (auto s : oracle_seeds(30)) {
        const auto w = random_world(s);
        Rng rng(s);
        const SoftmaxDecoder dec{testing::random_matrix(w.y_card(), w.encoder.code_size(), rng, 2.0),
                                 testing::random_matrix(w.y_card(), 1, rng)};
        const MatrixXd table = exact_loss_table(w, dec);
        const MatrixXd q = code_table(w);
        const Index m = w.encoder.code_size();
        for (Index x = 0; x < w.x_card(); ++x)
            for (Index y = 0; y < w.y_card(); ++y) {
                double direct = 0.0;
                for (Index c = 0; c < q.cols(); ++c) {
                    VectorXd u(m);
                    for (Index j = 0; j < m; ++j) u[j] = double((c >> j) & 1);
                    direct -= q(x, c) * std::log(decoder_prob(dec, u)[y]);
                }
                CHECK(std::abs(table(x, y) - direct) <= 1e-10);
                CHECK(std::abs(table(x, y) - exact_loss_binary(w.encoder, dec, w.x_support.col(x), int(y))) <= 1e-10);
            }
    }
}

TEST_CASE("coverage with fixed bounds") {
    const auto w = random_world(oracle_seeds(1)[0]);
    Rng rng(5);
    const SoftmaxDecoder dec{testing::random_matrix(w.y_card(), w.encoder.code_size(), rng, 2.0),
                             testing::random_matrix(w.y_card(), 1, rng)};
    CoverageOptions inf;
    inf.fixed_bound = std::numeric_limits<double>::infinity();
    CHECK(exact_gap_distribution(w, dec, 100, 1000, 0.05, 1, inf).coverage == 1.0);
    CoverageOptions zero;
    zero.fixed_bound = 0.0;
    const auto none = exact_gap_distribution(w, dec, 100, 1000, 0.05, 1, zero);
    CHECK(none.coverage <= 0.01);
    CHECK(none.trials == 1000);
    for (double g : none.gaps) CHECK(g >= 0);
}

TEST_CASE("assembled bound covers the exact gap") {
    const auto w = random_world(20240611);
    Rng rng = make_rng(20240611, 0xdec);
    const SoftmaxDecoder dec = make_decoder(w.encoder.code_size(), w.y_card(), rng);
    const auto cov = exact_gap_distribution(w, dec, 1000, 200, 0.05, 3);
    CHECK(cov.coverage >= 0.95);
    for (std::size_t t = 0; t < cov.bounds.size(); ++t) CHECK(cov.bounds[t] > 0);
}

TEST_CASE("verification suite passes on a reduced budget") {
    for (const auto& r : run_oracle_suite(1, 20, 100)) {
        INFO(r.name << ": " << r.detail);
        CHECK(r.pass);
    }
}
