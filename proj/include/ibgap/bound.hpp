#ifndef IBGAP_BOUND_HPP
#define IBGAP_BOUND_HPP

#include "ibgap/mi.hpp"
#include "ibgap/quantizer.hpp"

#include <string>
#include <vector>

namespace ibgap {

/// 0 for x <= 0, -x log x on (0, 1/e), 1/e beyond.
double phi(double x);

/// (a/2) log(n)/sqrt(n) + e^-1/sqrt(n), an upper bound on phi(a/sqrt(n)) once n >= a^2 e^2.
double phi_growth_bound(double a, Index n);

/// sqrt(0.5 * sum_u w_u sum_y (sqrt p(y|u) - sqrt q(y|u))^2). Tables are N x |Y|, weights N.
double hellinger(const Eigen::Ref<const MatrixXd>& p_table, const Eigen::Ref<const MatrixXd>& q_table,
                 const Eigen::Ref<const VectorXd>& u_weights);

struct HellingerEstimate {
    double value = 0.0;
    double std_error = 0.0; // 0 for exact summation
};

/// Same distance from a Monte Carlo bank of equally weighted draws, with a delta-method standard error.
HellingerEstimate hellinger_bank(const Eigen::Ref<const MatrixXd>& p_table, const Eigen::Ref<const MatrixXd>& q_table);

/// (8 / sqrt(eta)) * D_HL^2.
double var_bound_t(double hellinger_value, double eta);

/// |X||Y| log(n+1)/n + log((|Y|+4)/delta)/n.
double kl_concentration(Index x_card, Index y_card, Index n, double delta);

/// (1 + sqrt(log(1/delta))) / sqrt(n).
double l2_concentration(Index n, double delta);

/// sqrt((|Y|+4)/(n delta)) * sqrt(var_bound).
double chebyshev_d(double var_bound, Index n, double delta, Index y_card);

struct DeltaConstants {
    double delta = 0.05;
    Index y_card = 10;
    double log_vol_u = 0.0; // kept in log form; Vol can overflow for wide codes
    double vol_u = 1.0;     // may be +inf
    double p_y_min = 0.1;
    double eta = 0.1;
    double b_delta = 0.0;
    double a_delta = 0.0;
    double c_delta = 0.0;
    double d_delta = 0.0;

    /// Throws ConfigError on out-of-range inputs or a non-positive C_delta.
    static DeltaConstants compute(double delta, Index y_card, double log_vol_u, double p_y_min, double eta);
};

/// log of the product of per-unit widths of a bounding box (zero widths are floored at kProbFloor).
double log_box_volume(const Eigen::Ref<const VectorXd>& lo, const Eigen::Ref<const VectorXd>& hi);

struct BoundReport {
    double quantization_term = 0.0; // 2 eps at the chosen K
    double mi_term = 0.0;           // A sqrt(MI) log(n)/sqrt(n) r at the chosen K
    double hellinger_term = 0.0;    // D * D_HL / sqrt(n)
    double constant_term = 0.0;     // C / sqrt(n)
    double total = 0.0;
    Index chosen_k = 0;
    Index n = 0;
    double delta = 0.05;
    double hellinger_value = 0.0;
    double mi_value = 0.0;
    std::string remainder_note = "O(log n / n) remainder not evaluated";
    bool grid_min = true; // minimum over the supplied K grid, not the infimum over all K
    DeltaConstants constants;
    std::vector<QuantizationReport> sweep; // objectives rescored with the bound's MI coefficient
};

/// A sqrt(MI) log(n)/sqrt(n), the factor multiplying r(K).
double mi_coefficient(const MiEstimate& mi, const DeltaConstants& constants, Index n);

BoundReport assemble_bound(const MiEstimate& mi, std::vector<QuantizationReport> quant_reports,
                           double hellinger_value, const DeltaConstants& constants, Index n);

} // namespace ibgap

#endif // IBGAP_BOUND_HPP
