#include "ibgap/oracle.hpp"

#include <numeric>
#include <sstream>

namespace ibgap {

MatrixXd DiscreteWorld::joint() const {
    const MatrixXd c = counts.cast<double>();
    return c / c.sum();
}

VectorXd DiscreteWorld::p_x() const { return joint().rowwise().sum(); }
VectorXd DiscreteWorld::p_y() const { return joint().colwise().sum().transpose(); }

void DiscreteWorld::validate() const {
    if (x_card() < 1 || x_card() > kMaxWorldSupport) throw ConfigError("world: |X| must be in [1, 16]");
    if (y_card() < 1 || y_card() > kMaxWorldLabels) throw ConfigError("world: |Y| must be in [1, 4]");
    if (counts.rows() != x_card()) throw ConfigError("world: count table does not match support");
    if (counts.minCoeff() < 0 || counts.sum() <= 0) throw ConfigError("world: counts must be nonnegative, not all zero");
    if (encoder.code_size() > kMaxWorldBits) throw ConfigError("world: encoder exceeds the enumeration budget");
    if (encoder.input_size() != x_support.rows()) throw ConfigError("world: encoder input size mismatch");
}

DiscreteWorld random_world(std::uint64_t seed, const WorldShape& shape) {
    Rng rng = make_rng(seed, 0x3041d);
    DiscreteWorld w;
    w.x_support.resize(shape.dim, shape.x_card);
    std::bernoulli_distribution bit(0.5);
    for (Index i = 0; i < w.x_support.size(); ++i) w.x_support.data()[i] = bit(rng) ? 1.0 : 0.0;
    std::uniform_int_distribution<int> count(1, shape.max_count);
    w.counts.resize(shape.x_card, shape.y_card);
    for (Index i = 0; i < w.counts.size(); ++i) w.counts.data()[i] = count(rng);
    w.encoder.weights.resize(shape.code, shape.dim);
    fill_normal(w.encoder.weights, rng);
    w.encoder.weights *= shape.weight_scale;
    MatrixXd bias(shape.code, 1);
    fill_normal(bias, rng);
    w.encoder.hidden_bias = bias.col(0);
    w.encoder.visible_bias = VectorXd::Zero(shape.dim);
    w.validate();
    return w;
}

std::vector<std::uint64_t> oracle_seeds(std::size_t count) {
    std::vector<std::uint64_t> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = derive_seed(20240611, i);
    return out;
}

LabeledDataset world_dataset(const DiscreteWorld& world) {
    world.validate();
    const Index total = world.counts.sum();
    MatrixXd images(world.x_support.rows(), total);
    std::vector<int> labels;
    labels.reserve(static_cast<std::size_t>(total));
    Index col = 0;
    for (Index x = 0; x < world.x_card(); ++x)
        for (Index y = 0; y < world.y_card(); ++y)
            for (int r = 0; r < world.counts(x, y); ++r) {
                images.col(col++) = world.x_support.col(x);
                labels.push_back(static_cast<int>(y));
            }
    return make_dataset(std::move(images), std::move(labels), static_cast<int>(world.y_card()));
}

MatrixXd code_table(const DiscreteWorld& world) {
    const MatrixXd p = rbm_activation(world.encoder, world.x_support); // m x |X|
    const Index m = p.rows();
    const Index codes = Index{1} << m;
    MatrixXd q(world.x_card(), codes);
    for (Index x = 0; x < world.x_card(); ++x)
        for (Index c = 0; c < codes; ++c) {
            double prob = 1.0;
            for (Index j = 0; j < m; ++j) prob *= ((c >> j) & 1) ? p(j, x) : 1.0 - p(j, x);
            q(x, c) = prob;
        }
    return q;
}

double brute_force_mi(const DiscreteWorld& world) {
    world.validate();
    const MatrixXd q = code_table(world);
    const VectorXd px = world.p_x();
    const Eigen::RowVectorXd qu = px.transpose() * q;
    double mi = 0.0;
    for (Index x = 0; x < q.rows(); ++x)
        for (Index c = 0; c < q.cols(); ++c)
            if (px[x] > 0 && q(x, c) > 0) mi += px[x] * q(x, c) * std::log(q(x, c) / qu[c]);
    return std::max(mi, 0.0);
}

MatrixXd exact_loss_table(const DiscreteWorld& world, const SoftmaxDecoder& dec) {
    MatrixXd out(world.x_card(), world.y_card());
    for (Index x = 0; x < world.x_card(); ++x)
        for (Index y = 0; y < world.y_card(); ++y)
            out(x, y) = exact_loss_binary(world.encoder, dec, world.x_support.col(x), static_cast<int>(y));
    return out;
}

namespace {

double min_decoder_prob(const SoftmaxDecoder& dec, Index m) {
    const Index codes = Index{1} << m;
    MatrixXd u(m, codes);
    for (Index c = 0; c < codes; ++c)
        for (Index j = 0; j < m; ++j) u(j, c) = ((c >> j) & 1) ? 1.0 : 0.0;
    return std::max(decoder_prob_batch(dec, u).minCoeff(), kProbFloor);
}

} // namespace

CoverageResult exact_gap_distribution(const DiscreteWorld& world, const SoftmaxDecoder& dec, Index n, Index trials,
                                      double delta, std::uint64_t seed, const CoverageOptions& options) {
    world.validate();
    if (n < 1) throw ConfigError("coverage: n must be >= 1");
    if (trials < 1) throw ConfigError("coverage: trials must be >= 1");
    if (dec.label_count() != world.y_card() || dec.code_size() != world.encoder.code_size())
        throw ConfigError("coverage: decoder shape does not match the world");

    const MatrixXd losses = exact_loss_table(world, dec);
    const MatrixXd joint = world.joint();
    const Index y_card = world.y_card();
    const Index m = world.encoder.code_size();

    CoverageResult out;
    out.trials = trials;
    out.expected_risk = (joint.array() * losses.array()).sum();

    std::optional<DeltaConstants> constants;
    std::vector<Index> grid;
    if (!options.fixed_bound) {
        constants = DeltaConstants::compute(delta, y_card, static_cast<double>(m) * std::log(2.0),
                                            world.p_y().minCoeff(), min_decoder_prob(dec, m));
        for (Index k : options.k_grid)
            if (k >= 1 && k <= n) grid.push_back(k);
        if (grid.empty()) throw ConfigError("coverage: no usable K in the grid");
    }

    std::discrete_distribution<Index> cell(joint.data(), joint.data() + joint.size()); // column-major cells
    const StochasticEncoder enc = world.encoder;
    Index covered = 0;
    for (Index t = 0; t < trials; ++t) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(t));
        MatrixXd images(world.x_support.rows(), n);
        std::vector<int> labels(static_cast<std::size_t>(n));
        MatrixXd table(n, y_card);
        double risk = 0.0;
        for (Index i = 0; i < n; ++i) {
            const Index c = cell(rng);
            const Index x = c % world.x_card();
            const Index y = c / world.x_card();
            images.col(i) = world.x_support.col(x);
            labels[static_cast<std::size_t>(i)] = static_cast<int>(y);
            table.row(i) = losses.row(x);
            risk += losses(x, y);
        }
        risk /= static_cast<double>(n);
        const double gap = std::abs(risk - out.expected_risk);

        double bound = 0.0;
        if (options.fixed_bound) {
            bound = *options.fixed_bound;
        } else {
            const LabeledDataset sample = make_dataset(std::move(images), std::move(labels), static_cast<int>(y_card));
            const MiEstimate mi = mi_bound(enc, sample.images);
            const double coeff = mi_coefficient(mi, *constants, n);
            const SweepResult sweep = sweep_k(table, grid, coeff, derive_seed(seed, 0xc0de + static_cast<std::uint64_t>(t)));
            const Partition& part = sweep.partitions[sweep.best];
            Rng unused(0);
            const QuantizedModel qm = quantized_model(part, table, enc, sample, CodeMode::exact, 0, unused);
            const MatrixXd model = decoder_prob_batch(dec, qm.codes).transpose();
            const double hl = hellinger(model, qm.decoder_table, qm.code_weights);
            bound = assemble_bound(mi, sweep.reports, hl, *constants, n).total;
        }
        out.gaps.push_back(gap);
        out.bounds.push_back(bound);
        if (gap <= bound) ++covered;
    }
    out.coverage = static_cast<double>(covered) / static_cast<double>(trials);
    return out;
}

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed, Index worlds, Index coverage_trials) {
    std::vector<CheckResult> out;
    const auto seeds = oracle_seeds(static_cast<std::size_t>(worlds));

    {
        CheckResult r{"mi_dominance", true, ""};
        double worst = std::numeric_limits<double>::infinity();
        for (auto s : seeds) {
            const auto w = random_world(s ^ seed);
            const double exact = brute_force_mi(w);
            const double bound = mi_bound(StochasticEncoder{w.encoder}, world_dataset(w).images).total_kl;
            worst = std::min(worst, bound - exact);
            if (bound < exact - 1e-9) r.pass = false;
        }
        std::ostringstream d;
        d << worlds << " worlds, min(bound - exact) = " << worst;
        r.detail = d.str();
        out.push_back(r);
    }
    {
        CheckResult r{"mi_zero_for_constant_encoder", true, ""};
        auto w = random_world(seed);
        w.encoder.weights.setZero();
        const double mi = brute_force_mi(w);
        r.pass = std::abs(mi) <= 1e-10;
        r.detail = "I = " + std::to_string(mi);
        out.push_back(r);
    }
    {
        CheckResult r{"exact_loss_enumeration", true, ""};
        double worst = 0.0;
        for (std::size_t i = 0; i < std::min<std::size_t>(seeds.size(), 20); ++i) {
            const auto w = random_world(seeds[i] ^ seed);
            Rng rng = make_rng(seeds[i], 0xdec);
            const SoftmaxDecoder dec = make_decoder(w.encoder.code_size(), w.y_card(), rng);
            const MatrixXd q = code_table(w);
            const Index m = w.encoder.code_size();
            for (Index x = 0; x < w.x_card(); ++x)
                for (Index y = 0; y < w.y_card(); ++y) {
                    double direct = 0.0;
                    for (Index c = 0; c < q.cols(); ++c) {
                        VectorXd u(m);
                        for (Index j = 0; j < m; ++j) u[j] = ((c >> j) & 1) ? 1.0 : 0.0;
                        direct -= q(x, c) * std::log(decoder_prob(dec, u)[y]);
                    }
                    const double fast = exact_loss_binary(w.encoder, dec, w.x_support.col(x), static_cast<int>(y));
                    worst = std::max(worst, std::abs(direct - fast));
                }
        }
        r.pass = worst <= 1e-10;
        r.detail = "max |difference| = " + std::to_string(worst);
        out.push_back(r);
    }
    {
        CheckResult r{"bound_coverage", true, ""};
        const auto w = random_world(seed);
        Rng rng = make_rng(seed, 0xdec);
        const SoftmaxDecoder dec = make_decoder(w.encoder.code_size(), w.y_card(), rng);
        const auto cov = exact_gap_distribution(w, dec, 1000, coverage_trials, 0.05, seed);
        r.pass = cov.coverage >= 0.95;
        std::ostringstream d;
        d << "coverage " << cov.coverage << " over " << cov.trials << " trials (n = 1000, delta = 0.05)";
        r.detail = d.str();
        out.push_back(r);
    }
    return out;
}

} // namespace ibgap
