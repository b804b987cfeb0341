#ifndef IBGAP_CLASSIFIER_HPP
#define IBGAP_CLASSIFIER_HPP

#include "ibgap/data.hpp"
#include "ibgap/encoders.hpp"

#include <span>
#include <vector>

namespace ibgap {

/// Soft decoder Q(y|u) = softmax(W u + b).
struct SoftmaxDecoder {
    MatrixXd weights; // |Y| x m
    VectorXd biases;  // |Y|

    Index label_count() const { return weights.rows(); }
    Index code_size() const { return weights.cols(); }
    void validate() const;
};

SoftmaxDecoder make_decoder(Index code, Index labels, Rng& rng);

VectorXd decoder_prob(const SoftmaxDecoder& dec, const Eigen::Ref<const VectorXd>& u);
/// Column-wise softmax for a batch of codes (|Y| x S).
MatrixXd decoder_prob_batch(const SoftmaxDecoder& dec, const Eigen::Ref<const MatrixXd>& u);

struct DecoderGrad {
    MatrixXd weights;
    VectorXd biases;
    MatrixXd codes; // d loss / d u, m x S
};

/// Gradient of sum_s weight * -log Q(y_s | u_s) w.r.t. decoder parameters and codes.
DecoderGrad cross_entropy_backward(const SoftmaxDecoder& dec, const Eigen::Ref<const MatrixXd>& u,
                                   std::span<const int> labels, double weight);

struct LossEstimate {
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation of the per-draw losses
    Index samples = 0;
    bool clamped = false; // a decoder probability hit the log floor
};

/// Monte Carlo cross-entropy (1/S) sum_s -log Q(y | u_s), u_s ~ q(.|x).
LossEstimate sample_loss(const StochasticEncoder& enc, const SoftmaxDecoder& dec, const Eigen::Ref<const VectorXd>& x,
                         int y, Index mc_samples, Rng& rng);

/// Exact expectation over all 2^m binary codes; m <= 20.
double exact_loss_binary(const RBMEncoder& enc, const SoftmaxDecoder& dec, const Eigen::Ref<const VectorXd>& x, int y);

inline constexpr Index kMaxEnumerationBits = 20;

/// Per-sample Monte Carlo evaluation of a dataset.
///
/// Every sample draws its codes from the stream derive_seed(seed, sample_key(x, y)),
/// so the estimate for a sample does not depend on its position in the dataset.
/// All labels are scored against the same draws, which fills loss_table.
struct LossEvaluation {
    VectorXd losses;     // n, loss at the true label
    VectorXd loss_std;   // n
    MatrixXd loss_table; // n x |Y|, loss for every label
    double min_decoder_prob = 1.0; // min over all sampled (u, y) pairs
    VectorXd code_min;   // per-unit bounding box of sampled codes
    VectorXd code_max;
    std::size_t clamped = 0;
};

LossEvaluation evaluate_losses(const StochasticEncoder& enc, const SoftmaxDecoder& dec, const LabeledDataset& data,
                               Index mc_samples, std::uint64_t seed);

double empirical_risk(const StochasticEncoder& enc, const SoftmaxDecoder& dec, const LabeledDataset& data,
                      Index mc_samples, std::uint64_t seed);

struct GapEstimate {
    std::vector<double> mini_test_gaps;
    double quantile_level = 0.95;
    double quantile_value = 0.0;
    double reference_risk = 0.0;
    Index mini_test_size = 100;
};

/// Smallest order statistic with rank >= ceil(level * count).
double higher_quantile(std::span<const double> values, double level);

/// Disjoint consecutive blocks of `mini_size` after one seeded shuffle of [0, pool_size).
std::vector<std::vector<Index>> mini_test_blocks(Index pool_size, Index mini_size, std::uint64_t seed);

GapEstimate gap_from_losses(double reference_risk, std::span<const double> pool_losses,
                            const std::vector<std::vector<Index>>& blocks, double level);

GapEstimate gap_quantile(const StochasticEncoder& enc, const SoftmaxDecoder& dec, const LabeledDataset& reference,
                         const LabeledDataset& pool, Index mini_size, double level, Index mc_samples,
                         std::uint64_t seed);

} // namespace ibgap

#endif // IBGAP_CLASSIFIER_HPP
