#include "ibgap/mi.hpp"

namespace ibgap {

MiEstimate mi_from_per_unit(VectorXd per_unit_kl) {
    if ((per_unit_kl.array() < 0).any()) throw NumericError("mi_bound: negative per-unit KL");
    MiEstimate out;
    out.total_kl = per_unit_kl.sum();
    out.sqrt_bound = std::sqrt(out.total_kl);
    out.per_unit_kl = std::move(per_unit_kl);
    return out;
}

MiEstimate mi_bound(const StochasticEncoder& enc, const Eigen::Ref<const MatrixXd>& x, Diagnostics* diag) {
    if (x.cols() == 0) throw ConfigError("mi_bound: empty dataset");
    return mi_from_per_unit(kl_per_unit(enc, x, diag));
}

} // namespace ibgap
