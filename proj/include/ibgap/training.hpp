#ifndef IBGAP_TRAINING_HPP
#define IBGAP_TRAINING_HPP

#include "ibgap/classifier.hpp"

#include <span>
#include <vector>

namespace ibgap {

/// Value of CE + lambda * sum_j mean_i KL_j on one batch.
struct ObjectiveValue {
    double cross_entropy = 0.0; // mean over all (example, draw) pairs
    double kl = 0.0;            // sum over units of the batch-mean KL
    double total = 0.0;
};

struct GaussianModelGrad {
    GaussianGrad encoder;
    DecoderGrad decoder;
};

struct LogNormalModelGrad {
    LogNormalGrad encoder;
    DecoderGrad decoder;
};

/// Reparameterised objective. `noise` is m x (B * S); column i * S + s is draw s of example i.
ObjectiveValue gaussian_objective(const GaussianEncoder& enc, const SoftmaxDecoder& dec,
                                  const Eigen::Ref<const MatrixXd>& x, std::span<const int> labels,
                                  const Eigen::Ref<const MatrixXd>& noise, double lambda,
                                  GaussianModelGrad* grad = nullptr);

ObjectiveValue lognormal_objective(const LogNormalEncoder& enc, const SoftmaxDecoder& dec,
                                   const Eigen::Ref<const MatrixXd>& x, std::span<const int> labels,
                                   const Eigen::Ref<const MatrixXd>& noise, double lambda,
                                   LogNormalModelGrad* grad = nullptr);

/// Mean cross-entropy of the decoder on fixed codes (one code per column).
double decoder_objective(const SoftmaxDecoder& dec, const Eigen::Ref<const MatrixXd>& codes,
                         std::span<const int> labels, DecoderGrad* grad = nullptr);

std::vector<std::span<double>> parameter_views(GaussianEncoder& enc);
std::vector<std::span<double>> parameter_views(LogNormalEncoder& enc);
std::vector<std::span<double>> parameter_views(SoftmaxDecoder& dec);
std::vector<std::span<const double>> gradient_views(const GaussianGrad& grad);
std::vector<std::span<const double>> gradient_views(const LogNormalGrad& grad);
std::vector<std::span<const double>> gradient_views(const DecoderGrad& grad);

struct ModelSettings {
    EncoderFamily family = EncoderFamily::gaussian;
    Index hidden = 128;
    Index code = 64;
    int epochs = 50;
    int batch_size = 100;
    double learning_rate = 0.1;
    double momentum = 0.0;
    Index train_samples = 4; // reparameterised draws per example and step
    Index curve_samples = 4; // fixed draws per example for the per-epoch objective
    // RBM: CD-1 phase, then a softmax decoder on sampled codes with the encoder frozen.
    double rbm_learning_rate = 0.1;
    double rbm_initial_momentum = 0.5;
    double rbm_final_momentum = 0.9;
    int rbm_momentum_switch = 5;
    int decoder_epochs = 100;
    double decoder_learning_rate = 0.1;

    void validate() const;
};

struct TrainedModel {
    StochasticEncoder encoder;
    SoftmaxDecoder decoder;
    std::vector<double> loss_curve; // training objective after every epoch (decoder CE for the RBM decoder phase)
    std::vector<double> reconstruction_curve; // RBM only: mean squared reconstruction error per CD epoch
};

/// Trains one model. Deterministic in (settings, lambda, seed, data); throws
/// NumericError if the objective becomes non-finite.
TrainedModel train_model(const ModelSettings& settings, double lambda, std::uint64_t seed, const LabeledDataset& train);

} // namespace ibgap

#endif // IBGAP_TRAINING_HPP
