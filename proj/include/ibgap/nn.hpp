#ifndef IBGAP_NN_HPP
#define IBGAP_NN_HPP

#include "ibgap/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace ibgap {

enum class Activation { identity, relu, sigmoid, softplus };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

double activate(Activation a, double pre);
/// d activate(pre) / d pre.
double activation_derivative(Activation a, double pre);

// Fully connected layer y = act(W x + b). Batches are column-major: one sample per column.
struct DenseLayer {
    MatrixXd weights; // out x in
    VectorXd biases;  // out
    Activation activation = Activation::identity;

    Index in_size() const { return weights.cols(); }
    Index out_size() const { return weights.rows(); }

    /// Throws ConfigError on inconsistent shapes, NumericError on non-finite entries.
    void validate() const;
};

using LayerStack = std::vector<DenseLayer>;

/// Weights uniform in [-1/sqrt(in), 1/sqrt(in)], biases zero.
DenseLayer make_layer(Index in, Index out, Activation act, Rng& rng);

/// Chains layers with the given widths; `widths` includes the input size.
LayerStack make_stack(const std::vector<Index>& widths, Activation hidden, Activation output, Rng& rng);

struct StackCache {
    std::vector<MatrixXd> inputs; // input to layer l
    std::vector<MatrixXd> pre;    // pre-activation of layer l
    MatrixXd output;
};

VectorXd forward(const LayerStack& stack, const Eigen::Ref<const VectorXd>& x);
MatrixXd forward_batch(const LayerStack& stack, const Eigen::Ref<const MatrixXd>& x, StackCache* cache = nullptr);

struct LayerGrad {
    MatrixXd weights;
    VectorXd biases;
};

struct StackGrad {
    std::vector<LayerGrad> layers;
    MatrixXd input; // gradient w.r.t. the batch input
};

/// Backpropagates `upstream` (d loss / d output, same shape as the cached
/// output) through the stack. Throws NumericError on non-finite gradients.
StackGrad backward(const LayerStack& stack, const StackCache& cache, const Eigen::Ref<const MatrixXd>& upstream);

StackGrad zero_grad(const LayerStack& stack);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 100;
    int epochs = 200;
    double momentum = 0.0;
    double lambda = 0.0;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// v <- momentum * v - lr * g;  p <- p + v.
void sgd_step(std::span<double> params, std::span<const double> grads, const TrainConfig& config,
              std::span<double> velocity);

template <typename Derived>
std::span<double> param_view(Eigen::PlainObjectBase<Derived>& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename Derived>
std::span<const double> param_view(const Eigen::PlainObjectBase<Derived>& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

void append_views(LayerStack& stack, std::vector<std::span<double>>& out);
void append_views(const StackGrad& grad, std::vector<std::span<const double>>& out);

/// Momentum SGD over a fixed list of parameter blocks; velocity starts at zero.
class SgdOptimizer {
public:
    void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads,
              const TrainConfig& config);

    void reset() { velocity_.clear(); }

private:
    std::vector<VectorXd> velocity_;
};

} // namespace ibgap

#endif // IBGAP_NN_HPP
