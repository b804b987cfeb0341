#ifndef IBGAP_ENCODERS_HPP
#define IBGAP_ENCODERS_HPP

#include "ibgap/nn.hpp"

#include <string>
#include <variant>

namespace ibgap {

// ---------------------------------------------------------------------------
// Gaussian encoder: U_j | x ~ N(mu_j(x), sigma_j^2(x)), prior N(0, 1).
// ---------------------------------------------------------------------------

struct GaussianEncoder {
    LayerStack trunk;     // shared ReLU layers
    DenseLayer mu_head;     // linear, m outputs
    DenseLayer logvar_head; // linear, m outputs

    Index input_size() const { return trunk.empty() ? mu_head.in_size() : trunk.front().in_size(); }
    Index code_size() const { return mu_head.out_size(); }
    void validate() const;
};

GaussianEncoder make_gaussian_encoder(Index input, Index hidden, Index code, Rng& rng);

struct GaussianForward {
    StackCache trunk;
    MatrixXd hidden;
    MatrixXd mu;     // m x B
    MatrixXd logvar; // m x B
};

GaussianForward forward(const GaussianEncoder& enc, const Eigen::Ref<const MatrixXd>& x);

struct GaussianGrad {
    StackGrad trunk;
    LayerGrad mu_head;
    LayerGrad logvar_head;
};

GaussianGrad backward(const GaussianEncoder& enc, const GaussianForward& fwd, const Eigen::Ref<const MatrixXd>& d_mu,
                      const Eigen::Ref<const MatrixXd>& d_logvar);

/// u = mu + sigma * z.
VectorXd gaussian_sample(const Eigen::Ref<const VectorXd>& mu, const Eigen::Ref<const VectorXd>& sigma,
                         const Eigen::Ref<const VectorXd>& noise);
VectorXd encode_gaussian(const GaussianEncoder& enc, const Eigen::Ref<const VectorXd>& x,
                         const Eigen::Ref<const VectorXd>& noise);

/// Per-unit KL(N(mu, exp(logvar)) || N(0,1)) averaged over the columns.
VectorXd kl_gaussian_terms(const Eigen::Ref<const MatrixXd>& mu, const Eigen::Ref<const MatrixXd>& logvar,
                           Diagnostics* diag = nullptr);
VectorXd kl_gaussian(const GaussianEncoder& enc, const Eigen::Ref<const MatrixXd>& x, Diagnostics* diag = nullptr);

// ---------------------------------------------------------------------------
// Log-normal encoder: U_j = f_j(x) exp(alpha_j(x) Z), prior logN(mu_j, sigma_j^2).
// alpha_j(x) = alpha_scale * sigmoid(.) so the noise variance stays bounded.
// ---------------------------------------------------------------------------

struct LogNormalEncoder {
    LayerStack f_net;     // softplus layers, output f(x) > 0
    LayerStack alpha_net; // final layer sigmoid, scaled by alpha_scale
    double alpha_scale = 0.7;
    VectorXd prior_mu;
    VectorXd prior_logsigma;

    Index input_size() const { return f_net.front().in_size(); }
    Index code_size() const { return f_net.back().out_size(); }
    void validate() const;
};

LogNormalEncoder make_lognormal_encoder(Index input, Index hidden, Index code, Rng& rng);

struct LogNormalForward {
    StackCache f_cache;
    StackCache alpha_cache;
    MatrixXd f;     // m x B, > 0
    MatrixXd alpha; // m x B, in (0, alpha_scale)
};

LogNormalForward forward(const LogNormalEncoder& enc, const Eigen::Ref<const MatrixXd>& x);

struct LogNormalGrad {
    StackGrad f_net;
    StackGrad alpha_net;
    VectorXd prior_mu;
    VectorXd prior_logsigma;
};

/// Gradients w.r.t. network parameters given d loss / d f and d loss / d alpha.
/// The prior gradients are left zero-sized; callers fill them from the KL term.
LogNormalGrad backward(const LogNormalEncoder& enc, const LogNormalForward& fwd, const Eigen::Ref<const MatrixXd>& d_f,
                       const Eigen::Ref<const MatrixXd>& d_alpha);

/// u = f * exp(alpha * z); throws NumericError on overflow.
VectorXd lognormal_sample(const Eigen::Ref<const VectorXd>& f, const Eigen::Ref<const VectorXd>& alpha,
                          const Eigen::Ref<const VectorXd>& noise);
VectorXd encode_lognormal(const LogNormalEncoder& enc, const Eigen::Ref<const VectorXd>& x,
                          const Eigen::Ref<const VectorXd>& noise);

/// Per-unit KL(N(log f, alpha^2) || N(mu, sigma^2)) averaged over the columns.
VectorXd kl_lognormal_terms(const Eigen::Ref<const MatrixXd>& log_f, const Eigen::Ref<const MatrixXd>& alpha,
                            const Eigen::Ref<const VectorXd>& prior_mu,
                            const Eigen::Ref<const VectorXd>& prior_logsigma, Diagnostics* diag = nullptr);
VectorXd kl_lognormal(const LogNormalEncoder& enc, const Eigen::Ref<const MatrixXd>& x, Diagnostics* diag = nullptr);

// ---------------------------------------------------------------------------
// RBM encoder: U_j | x ~ Bernoulli(sigmoid(b_j + <w_j, x>)).
// ---------------------------------------------------------------------------

struct RBMEncoder {
    MatrixXd weights;      // m x d, row j is w_j
    VectorXd hidden_bias;  // m
    VectorXd visible_bias; // d

    Index input_size() const { return weights.cols(); }
    Index code_size() const { return weights.rows(); }
    void validate() const;
};

/// Weights N(0, 0.01^2), biases zero.
RBMEncoder make_rbm_encoder(Index input, Index code, Rng& rng);

/// sigmoid(b + W x) per column (m x B).
MatrixXd rbm_activation(const RBMEncoder& enc, const Eigen::Ref<const MatrixXd>& x);

/// Per-unit Bernoulli KL against the column-averaged activation prior.
VectorXd kl_rbm_terms(const Eigen::Ref<const MatrixXd>& activations, Diagnostics* diag = nullptr);
VectorXd kl_rbm(const RBMEncoder& enc, const Eigen::Ref<const MatrixXd>& x, Diagnostics* diag = nullptr);

/// One CD-1 step with weight decay `config.lambda` on W.
///
/// Hidden states are sampled from the data-driven conditionals (one uniform
/// draw per unit, column-major over the m x B matrix) to drive the
/// reconstruction and the positive statistics; negative statistics use
/// reconstruction probabilities for both layers.
void cd1_update(RBMEncoder& enc, const Eigen::Ref<const MatrixXd>& batch, const TrainConfig& config, Rng& rng,
                SgdOptimizer& optimizer);

std::vector<std::span<double>> parameter_views(RBMEncoder& enc);

// ---------------------------------------------------------------------------
// Family-erased encoder.
// ---------------------------------------------------------------------------

using StochasticEncoder = std::variant<GaussianEncoder, LogNormalEncoder, RBMEncoder>;

enum class EncoderFamily { gaussian, lognormal, rbm };

std::string to_string(EncoderFamily f);
EncoderFamily family_from_string(const std::string& name);
EncoderFamily family_of(const StochasticEncoder& enc);

Index input_size(const StochasticEncoder& enc);
Index code_size(const StochasticEncoder& enc);

/// The conditional law of U given one input, in the family's natural parameters.
struct CodeDistribution {
    EncoderFamily family = EncoderFamily::gaussian;
    VectorXd loc;   // mu | log f | activation probability
    VectorXd scale; // sigma | alpha | (unused)
};

std::vector<CodeDistribution> conditionals(const StochasticEncoder& enc, const Eigen::Ref<const MatrixXd>& x);

/// Draws S codes (m x S). Gaussian/log-normal consume m*S normals, Bernoulli m*S uniforms.
MatrixXd sample_codes(const CodeDistribution& dist, Index samples, Rng& rng);

/// log q(u | x); for continuous families this is a log density.
double log_prob(const CodeDistribution& dist, const Eigen::Ref<const VectorXd>& u);

/// Per-unit KL against the family prior, averaged over the columns of x.
VectorXd kl_per_unit(const StochasticEncoder& enc, const Eigen::Ref<const MatrixXd>& x, Diagnostics* diag = nullptr);

} // namespace ibgap

#endif // IBGAP_ENCODERS_HPP
