#ifndef IBGAP_QUANTIZER_HPP
#define IBGAP_QUANTIZER_HPP

#include "ibgap/classifier.hpp"

#include <limits>
#include <vector>

namespace ibgap {

/// Loss-space partition: cells shared across labels, one loss centroid per (cell, label).
struct Partition {
    Index k = 0;                      // number of non-empty cells
    std::vector<Index> assignment;    // sample -> cell in [0, k)
    MatrixXd loss_centroids;          // k x |Y|, cell-mean losses
    std::vector<Index> cell_counts;   // k
    int iterations = 0;
    bool converged = false;
};

/// Objective before/after every coloring step, for checking that coloring never increases it.
struct ColoringTrace {
    std::vector<double> before;
    std::vector<double> after;
};

/// max_i max_y |loss(i, y) - centroid(cell_i, y)|.
double max_deviation(const Eigen::Ref<const MatrixXd>& loss_table, const std::vector<Index>& assignment,
                     const Eigen::Ref<const MatrixXd>& centroids);

/// Alternates coloring (argmin_k max_y |l(x_i,y) - c_k(y)|) and centroid (cell means) steps.
///
/// Seeding is k-means++ under the max-abs metric. An empty cell takes the worst-fit
/// sample from a cell with more than one member. A sample only changes cell when
/// another cell is strictly closer. Returns the fixed point on convergence,
/// otherwise the partition with the lowest max deviation seen within max_iters.
Partition loss_kmeans(const Eigen::Ref<const MatrixXd>& loss_table, Index k, int max_iters, Rng& rng,
                      ColoringTrace* trace = nullptr);

struct QuantizationReport {
    Index k = 0;           // non-empty cells
    Index requested_k = 0; // grid value
    double epsilon_hat = 0.0;
    double r_hat = 1.0;
    double objective = std::numeric_limits<double>::quiet_NaN(); // 2 eps + mi_term * r, set by the sweep
};

QuantizationReport epsilon_r_hat(const Partition& partition, const Eigen::Ref<const MatrixXd>& loss_table);

struct SweepResult {
    std::vector<QuantizationReport> reports;
    std::vector<Partition> partitions;
    std::size_t best = 0; // index into reports
    Index best_k() const { return reports.at(best).requested_k; }
};

/// Index of the smallest objective; exact ties go to the larger requested K.
std::size_t argmin_objective(const std::vector<QuantizationReport>& reports);

/// Runs loss_kmeans for every K (stream derive_seed(seed, K)) and scores 2 eps + mi_term * r.
SweepResult sweep_k(const Eigen::Ref<const MatrixXd>& loss_table, const std::vector<Index>& k_grid, double mi_term,
                    std::uint64_t seed, int max_iters = 100);

enum class CodeMode { exact, monte_carlo };

/// Quantized testing law and the induced decoder.
///
/// Rows of `codes` index a finite code set: all 2^m binary codes in exact mode,
/// or a bank of draws from q_U^D in Monte Carlo mode. `code_weights` is q_U^D on
/// that set (uniform 1/N for a bank) and `decoder_table` holds Q^D(y | u).
struct QuantizedModel {
    MatrixXd joint;                     // k x |Y|
    std::vector<Index> representatives; // dataset index of each cell's representative
    MatrixXd codes;                     // m x N
    VectorXd code_weights;              // N
    MatrixXd decoder_table;             // N x |Y|
    CodeMode mode = CodeMode::exact;
    Index bank_size = 0;
};

/// Representative of each cell: the member whose loss row is closest (max-abs) to the centroid.
std::vector<Index> cell_representatives(const Partition& partition, const Eigen::Ref<const MatrixXd>& loss_table);

QuantizedModel quantized_model(const Partition& partition, const Eigen::Ref<const MatrixXd>& loss_table,
                               const StochasticEncoder& enc, const LabeledDataset& data, CodeMode mode,
                               Index bank_size, Rng& rng);

} // namespace ibgap

#endif // IBGAP_QUANTIZER_HPP
