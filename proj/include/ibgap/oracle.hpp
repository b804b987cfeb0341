#ifndef IBGAP_ORACLE_HPP
#define IBGAP_ORACLE_HPP

#include "ibgap/bound.hpp"
#include "ibgap/classifier.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ibgap {

/// Small discrete world with binary codes, small enough to enumerate.
///
/// The joint is stored as integer multiplicities so that a dataset with exactly
/// that empirical law exists (see world_dataset).
struct DiscreteWorld {
    MatrixXd x_support;  // d x |X|
    Eigen::MatrixXi counts; // |X| x |Y|, multiplicities >= 0
    RBMEncoder encoder;     // m <= 3 by default budget

    Index x_card() const { return x_support.cols(); }
    Index y_card() const { return counts.cols(); }
    MatrixXd joint() const;  // counts / total
    VectorXd p_x() const;
    VectorXd p_y() const;
    void validate() const;
};

inline constexpr Index kMaxWorldSupport = 16;
inline constexpr Index kMaxWorldLabels = 4;
inline constexpr Index kMaxWorldBits = 3;

struct WorldShape {
    Index x_card = 8;
    Index y_card = 3;
    Index code = 3;
    Index dim = 6;
    int max_count = 5;
    double weight_scale = 2.0;
};

/// Random world from a seed: binary inputs, N(0, weight_scale^2) RBM weights, counts in [1, max_count].
DiscreteWorld random_world(std::uint64_t seed, const WorldShape& shape = {});

/// Fixed list of world seeds used by the verification suite and the tests.
std::vector<std::uint64_t> oracle_seeds(std::size_t count);

/// Dataset whose empirical joint equals the world's joint (rows repeated by multiplicity).
LabeledDataset world_dataset(const DiscreteWorld& world);

/// q(u | x) for every support point and every code u = bits of its index (|X| x 2^m).
MatrixXd code_table(const DiscreteWorld& world);

/// I(P_X; q_{U|X}) in nats by direct enumeration.
double brute_force_mi(const DiscreteWorld& world);

/// Exact loss l(x, y) for every support point and label (|X| x |Y|).
MatrixXd exact_loss_table(const DiscreteWorld& world, const SoftmaxDecoder& dec);

struct CoverageOptions {
    std::optional<double> fixed_bound; // skip assembly and compare every gap with this value
    std::vector<Index> k_grid = {1, 2, 4, 8};
};

struct CoverageResult {
    double coverage = 0.0;
    Index trials = 0;
    double expected_risk = 0.0;
    std::vector<double> gaps;
    std::vector<double> bounds;
};

/// Draws `trials` samples of size n from the world's joint, compares the exact gap
/// |L_emp - L| with the bound assembled from that sample (exact losses, exact
/// Hellinger over all codes, Vol = 2^m) and reports the covered fraction.
CoverageResult exact_gap_distribution(const DiscreteWorld& world, const SoftmaxDecoder& dec, Index n, Index trials,
                                      double delta, std::uint64_t seed, const CoverageOptions& options = {});

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Full verification suite behind `oracle-verify`.
std::vector<CheckResult> run_oracle_suite(std::uint64_t seed, Index worlds = 100, Index coverage_trials = 1000);

} // namespace ibgap

#endif // IBGAP_ORACLE_HPP
