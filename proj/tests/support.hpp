#ifndef IBGAP_TESTS_SUPPORT_HPP
#define IBGAP_TESTS_SUPPORT_HPP

#include "ibgap/common.hpp"

#include <functional>
#include <span>

namespace testing {

using ibgap::Index;
using ibgap::MatrixXd;
using ibgap::VectorXd;

inline MatrixXd random_matrix(Index rows, Index cols, ibgap::Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    MatrixXd m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

inline MatrixXd random_unit(Index rows, Index cols, ibgap::Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatrixXd m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

inline double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
}

/// Largest relative error between `analytic` and central differences of `f` over `params` (perturbed in place).
inline double gradient_error(std::span<double> params, std::span<const double> analytic,
                             const std::function<double()>& f, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double up = f();
        params[i] = saved - h;
        const double down = f();
        params[i] = saved;
        worst = std::max(worst, rel_err(analytic[i], (up - down) / (2.0 * h)));
    }
    return worst;
}

} // namespace testing

#endif
