#ifndef IBGAP_HARNESS_HPP
#define IBGAP_HARNESS_HPP

#include "ibgap/serialize.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ibgap {

struct ExperimentConfig {
    ModelSettings model;
    std::vector<double> lambda_grid;   // empty -> family default
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    Index train_size = 2000;
    Index reference_size = 5000;
    Index mini_test_size = 100;
    double quantile_level = 0.95;
    double delta = 0.05;
    std::vector<std::string> test_variants = {"clean", "perturbed"};
    std::vector<Index> k_grid = {1, 2, 4, 8, 16, 32};
    Index mc_samples = 256;      // code draws per sample for risk estimates
    Index hellinger_draws = 10000; // Monte Carlo bank when codes cannot be enumerated
    std::uint64_t data_seed = 0;
    PerturbSpec perturb;
    std::optional<double> vol_u; // overrides the bounding-box default for continuous codes
    std::string images_path = "data/mnist10k-images-idx3-ubyte.gz";
    std::string labels_path = "data/mnist10k-labels-idx1-ubyte.gz";
    std::string out_dir = "runs";
    bool paper_scale = false;

    /// Fills the family default grid and checks every field. Throws ConfigError.
    void finalize();
};

/// Log-spaced default grid: [1e-4, 10] for gaussian/lognormal, [1e-5, 1e-1] for rbm.
std::vector<double> default_lambda_grid(EncoderFamily family, std::size_t points = 6);

/// Restores the paper's sizes: 5000 training samples, 200 epochs, wider networks.
void apply_paper_scale(ExperimentConfig& config);

ExperimentConfig config_from_json(const Json& j);
Json to_json(const ExperimentConfig& config);

/// Index bookkeeping for one seeded permutation: train | reference | pool.
struct DataSplit {
    std::vector<Index> train;
    std::vector<Index> reference;
    std::vector<Index> pool;
};

/// Throws ConfigError when the sizes do not fit, or if the parts overlap.
DataSplit make_split(Index n, Index train_size, Index reference_size, std::uint64_t seed);

struct RunRecord {
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::string variant;
    bool ok = true;
    std::string error;
    MiEstimate mi;
    GapEstimate gap;
    BoundReport bound;
    HellingerEstimate hellinger;
    double eta = 0.0;
    double final_objective = 0.0;
    std::vector<double> loss_curve;
};

struct AggregateRecord {
    std::string variant;
    double lambda = 0.0;
    Index runs = 0;
    double mi_sqrt_bound = 0.0;
    double gap_quantile = 0.0;
    double bound_total = 0.0;
    double mi_norm = 0.0;  // min-max over the variant's lambda grid
    double gap_norm = 0.0;
};

struct TimingRecord {
    double lambda = 0.0;
    std::uint64_t seed = 0;
    double wall_time_s = 0.0;
};

struct RunArtifact {
    ExperimentConfig config;
    std::vector<RunRecord> records;
    std::vector<AggregateRecord> aggregates;
    std::vector<TimingRecord> timings;
};

struct Evaluation {
    MiEstimate mi;
    GapEstimate gap;
    BoundReport bound;
    HellingerEstimate hellinger;
    double eta = 0.0;
};

/// MI, gap quantile and assembled bound of a trained model on one test distribution.
Evaluation evaluate_model(const StochasticEncoder& enc, const SoftmaxDecoder& dec, const LabeledDataset& reference,
                          const LabeledDataset& pool, const ExperimentConfig& config, std::uint64_t seed);

/// Reference and pool sets of one test variant ("clean" or "perturbed").
std::pair<LabeledDataset, LabeledDataset> test_sets(const LabeledDataset& data, const DataSplit& split,
                                                    const std::string& variant, const PerturbSpec& perturb);

/// Runs every (lambda, seed): train once, evaluate each variant. Failed runs are recorded and skipped.
RunArtifact lambda_sweep(const ExperimentConfig& config, const LabeledDataset& data);
RunArtifact lambda_sweep(const ExperimentConfig& config);

/// Seed means per (variant, lambda) with min-max normalised columns.
std::vector<AggregateRecord> aggregate(const std::vector<RunRecord>& records);

std::string runs_csv(const std::vector<RunRecord>& records);
std::string aggregates_csv(const std::vector<AggregateRecord>& aggregates);
std::string timings_csv(const std::vector<TimingRecord>& timings);
std::string quantization_csv(const std::vector<QuantizationReport>& reports);

/// Writes runs.csv, aggregates.csv, timings.csv, runs.json and config.json.
void emit_report(const RunArtifact& artifact, const std::filesystem::path& out_dir);

/// Number of adjacent pairs where the sequence increases.
std::size_t count_increases(const std::vector<double>& values);

/// Minimal CSV reader (no quoted fields) for round-trip checks.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

} // namespace ibgap

#endif // IBGAP_HARNESS_HPP
