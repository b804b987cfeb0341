#include "ibgap/nn.hpp"

namespace ibgap {

std::string to_string(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softplus: return "softplus";
    }
    return "identity";
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "softplus") return Activation::softplus;
    throw FormatError("unknown activation '" + name + "'");
}

double activate(Activation a, double pre) {
    switch (a) {
    case Activation::identity: return pre;
    case Activation::relu: return pre > 0 ? pre : 0.0;
    case Activation::sigmoid: return sigmoid(pre);
    case Activation::softplus: return softplus(pre);
    }
    return pre;
}

double activation_derivative(Activation a, double pre) {
    switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return pre > 0 ? 1.0 : 0.0;
    case Activation::sigmoid: {
        const double s = sigmoid(pre);
        return s * (1.0 - s);
    }
    case Activation::softplus: return sigmoid(pre);
    }
    return 1.0;
}

void DenseLayer::validate() const {
    if (biases.size() != weights.rows())
        throw ConfigError("dense layer: bias size " + std::to_string(biases.size()) + " != output size " +
                          std::to_string(weights.rows()));
    if (!weights.allFinite() || !biases.allFinite()) throw NumericError("dense layer: non-finite parameters");
}

DenseLayer make_layer(Index in, Index out, Activation act, Rng& rng) {
    if (in <= 0 || out <= 0) throw ConfigError("dense layer sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    DenseLayer layer;
    layer.weights.resize(out, in);
    // Row-major fill so the draw order does not depend on storage order.
    for (Index r = 0; r < out; ++r)
        for (Index c = 0; c < in; ++c) layer.weights(r, c) = uni(rng);
    layer.biases = VectorXd::Zero(out);
    layer.activation = act;
    return layer;
}

LayerStack make_stack(const std::vector<Index>& widths, Activation hidden, Activation output, Rng& rng) {
    if (widths.size() < 2) throw ConfigError("layer stack needs at least an input and an output width");
    LayerStack stack;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const bool last = l + 2 == widths.size();
        stack.push_back(make_layer(widths[l], widths[l + 1], last ? output : hidden, rng));
    }
    return stack;
}

namespace {

void check_input(const LayerStack& stack, Index rows) {
    if (stack.empty()) throw ConfigError("empty layer stack");
    if (rows != stack.front().in_size())
        throw ConfigError("input dimension " + std::to_string(rows) + " does not match layer input " +
                          std::to_string(stack.front().in_size()));
    for (std::size_t l = 1; l < stack.size(); ++l)
        if (stack[l].in_size() != stack[l - 1].out_size())
            throw ConfigError("layer " + std::to_string(l) + " input size does not match previous output");
}

} // namespace

VectorXd forward(const LayerStack& stack, const Eigen::Ref<const VectorXd>& x) {
    return forward_batch(stack, x);
}

MatrixXd forward_batch(const LayerStack& stack, const Eigen::Ref<const MatrixXd>& x, StackCache* cache) {
    check_input(stack, x.rows());
    MatrixXd h = x;
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    for (const auto& layer : stack) {
        MatrixXd pre = layer.weights * h;
        pre.colwise() += layer.biases;
        if (cache) cache->inputs.push_back(std::move(h));
        h = pre.unaryExpr([a = layer.activation](double v) { return activate(a, v); });
        if (cache) cache->pre.push_back(std::move(pre));
    }
    if (cache) cache->output = h;
    return h;
}

StackGrad backward(const LayerStack& stack, const StackCache& cache, const Eigen::Ref<const MatrixXd>& upstream) {
    if (cache.pre.size() != stack.size()) throw ConfigError("backward called without a matching forward cache");
    if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols())
        throw ConfigError("upstream gradient shape does not match forward output");

    StackGrad grad;
    grad.layers.resize(stack.size());
    MatrixXd delta = upstream;
    for (std::size_t l = stack.size(); l-- > 0;) {
        const auto& layer = stack[l];
        const MatrixXd dpre =
            delta.cwiseProduct(cache.pre[l].unaryExpr([a = layer.activation](double v) {
                return activation_derivative(a, v);
            }));
        grad.layers[l].weights = dpre * cache.inputs[l].transpose();
        grad.layers[l].biases = dpre.rowwise().sum();
        delta = layer.weights.transpose() * dpre;
    }
    grad.input = std::move(delta);

    for (const auto& g : grad.layers)
        if (!g.weights.allFinite() || !g.biases.allFinite()) throw NumericError("non-finite gradient in backward pass");
    return grad;
}

StackGrad zero_grad(const LayerStack& stack) {
    StackGrad grad;
    for (const auto& layer : stack)
        grad.layers.push_back({MatrixXd::Zero(layer.out_size(), layer.in_size()), VectorXd::Zero(layer.out_size())});
    return grad;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0, 1)");
    if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
}

void sgd_step(std::span<double> params, std::span<const double> grads, const TrainConfig& config,
              std::span<double> velocity) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw ConfigError("sgd_step: parameter, gradient and velocity sizes differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = config.momentum * velocity[i] - config.learning_rate * grads[i];
        params[i] += velocity[i];
    }
}

void append_views(LayerStack& stack, std::vector<std::span<double>>& out) {
    for (auto& layer : stack) {
        out.push_back(param_view(layer.weights));
        out.push_back(param_view(layer.biases));
    }
}

void append_views(const StackGrad& grad, std::vector<std::span<const double>>& out) {
    for (const auto& g : grad.layers) {
        out.push_back(param_view(g.weights));
        out.push_back(param_view(g.biases));
    }
}

void SgdOptimizer::step(const std::vector<std::span<double>>& params,
                        const std::vector<std::span<const double>>& grads, const TrainConfig& config) {
    if (params.size() != grads.size()) throw ConfigError("optimizer: parameter and gradient block counts differ");
    if (velocity_.empty())
        for (const auto& p : params) velocity_.push_back(VectorXd::Zero(static_cast<Index>(p.size())));
    if (velocity_.size() != params.size()) throw ConfigError("optimizer: parameter layout changed between steps");
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (static_cast<Index>(params[b].size()) != velocity_[b].size())
            throw ConfigError("optimizer: parameter block size changed between steps");
        sgd_step(params[b], grads[b], config, param_view(velocity_[b]));
    }
}

} // namespace ibgap
