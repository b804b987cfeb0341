#ifndef IBGAP_MI_HPP
#define IBGAP_MI_HPP

#include "ibgap/encoders.hpp"

namespace ibgap {

/// Variational upper bound on I(X; U) with a factorised prior, in nats.
struct MiEstimate {
    VectorXd per_unit_kl;
    double total_kl = 0.0;
    double sqrt_bound = 0.0;
};

/// Sums the family's per-unit KL terms over the empirical input law of `x`
/// (one sample per column) and takes the square root.
MiEstimate mi_bound(const StochasticEncoder& enc, const Eigen::Ref<const MatrixXd>& x, Diagnostics* diag = nullptr);

/// Aggregates precomputed per-unit KL values.
MiEstimate mi_from_per_unit(VectorXd per_unit_kl);

} // namespace ibgap

#endif // IBGAP_MI_HPP
