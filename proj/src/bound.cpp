#include "ibgap/bound.hpp"

#include <limits>

namespace ibgap {

namespace {

constexpr double kInvE = 0.36787944117144233; // e^-1
constexpr double kRowTolerance = 1e-9;

void check_delta(double delta, bool allow_one) {
    if (!(delta > 0.0) || delta > 1.0 || (!allow_one && delta == 1.0))
        throw DomainError("delta must lie in (0, 1" + std::string(allow_one ? "]" : ")"));
}

void check_n(Index n) {
    if (n < 1) throw DomainError("sample size must be >= 1");
}

void check_tables(const Eigen::Ref<const MatrixXd>& p, const Eigen::Ref<const MatrixXd>& q) {
    if (p.rows() != q.rows() || p.cols() != q.cols()) throw ConfigError("hellinger: table shapes differ");
    if (p.rows() == 0) throw ConfigError("hellinger: empty tables");
    if (p.minCoeff() < 0.0 || q.minCoeff() < 0.0) throw ConfigError("hellinger: negative probability");
    for (Index s = 0; s < p.rows(); ++s)
        if (std::abs(p.row(s).sum() - 1.0) > kRowTolerance || std::abs(q.row(s).sum() - 1.0) > kRowTolerance)
            throw ConfigError("hellinger: conditional row " + std::to_string(s) + " does not sum to 1");
}

VectorXd squared_distances(const Eigen::Ref<const MatrixXd>& p, const Eigen::Ref<const MatrixXd>& q) {
    return 0.5 * (p.array().sqrt() - q.array().sqrt()).square().rowwise().sum().matrix();
}

} // namespace

double phi(double x) {
    if (x <= 0.0) return 0.0;
    if (x < kInvE) return -x * std::log(x);
    return kInvE;
}

double phi_growth_bound(double a, Index n) {
    check_n(n);
    if (!(a >= 0.0)) throw DomainError("phi_growth_bound: a must be >= 0");
    if (static_cast<double>(n) < a * a * std::exp(2.0))
        throw DomainError("phi_growth_bound: n = " + std::to_string(n) + " is below a^2 e^2");
    const double root = std::sqrt(static_cast<double>(n));
    return 0.5 * a * std::log(static_cast<double>(n)) / root + kInvE / root;
}

double hellinger(const Eigen::Ref<const MatrixXd>& p_table, const Eigen::Ref<const MatrixXd>& q_table,
                 const Eigen::Ref<const VectorXd>& u_weights) {
    check_tables(p_table, q_table);
    if (u_weights.size() != p_table.rows()) throw ConfigError("hellinger: weight count differs from table rows");
    if (u_weights.minCoeff() < 0.0 || std::abs(u_weights.sum() - 1.0) > kRowTolerance)
        throw ConfigError("hellinger: weights are not a distribution");
    const double h2 = u_weights.dot(squared_distances(p_table, q_table));
    return std::sqrt(std::clamp(h2, 0.0, 1.0));
}

HellingerEstimate hellinger_bank(const Eigen::Ref<const MatrixXd>& p_table, const Eigen::Ref<const MatrixXd>& q_table) {
    check_tables(p_table, q_table);
    const VectorXd h = squared_distances(p_table, q_table);
    const auto n = static_cast<double>(h.size());
    const double mean = h.mean();
    HellingerEstimate out;
    out.value = std::sqrt(std::clamp(mean, 0.0, 1.0));
    if (h.size() > 1) {
        const double se_sq = std::sqrt((h.array() - mean).square().sum() / (n - 1.0) / n);
        out.std_error = out.value > 0 ? se_sq / (2.0 * out.value) : std::sqrt(se_sq);
    }
    return out;
}

double var_bound_t(double hellinger_value, double eta) {
    if (!(eta > 0.0) || eta > 1.0) throw DomainError("var_bound_t: eta must lie in (0, 1]");
    if (!(hellinger_value >= 0.0) || hellinger_value > 1.0)
        throw DomainError("var_bound_t: Hellinger distance must lie in [0, 1]");
    return 8.0 / std::sqrt(eta) * hellinger_value * hellinger_value;
}

double kl_concentration(Index x_card, Index y_card, Index n, double delta) {
    check_n(n);
    check_delta(delta, false);
    if (x_card < 0 || y_card < 0) throw DomainError("kl_concentration: negative alphabet size");
    const auto nd = static_cast<double>(n);
    return static_cast<double>(x_card) * static_cast<double>(y_card) * std::log(nd + 1.0) / nd +
           std::log((static_cast<double>(y_card) + 4.0) / delta) / nd;
}

double l2_concentration(Index n, double delta) {
    check_n(n);
    check_delta(delta, true);
    return (1.0 + std::sqrt(std::log(1.0 / delta))) / std::sqrt(static_cast<double>(n));
}

double chebyshev_d(double var_bound, Index n, double delta, Index y_card) {
    check_n(n);
    check_delta(delta, false);
    if (!(var_bound >= 0.0)) throw DomainError("chebyshev_d: variance bound must be >= 0");
    return std::sqrt((static_cast<double>(y_card) + 4.0) / (static_cast<double>(n) * delta)) * std::sqrt(var_bound);
}

DeltaConstants DeltaConstants::compute(double delta, Index y_card, double log_vol_u, double p_y_min, double eta) {
    check_delta(delta, false);
    if (y_card < 1) throw ConfigError("label set must be nonempty");
    if (!(p_y_min > 0.0) || p_y_min > 1.0) throw ConfigError("p_y_min must lie in (0, 1]");
    if (!(eta > 0.0) || eta > 1.0) throw ConfigError("eta must lie in (0, 1]");
    if (std::isnan(log_vol_u)) throw ConfigError("Vol(U) is undefined");

    DeltaConstants c;
    c.delta = delta;
    c.y_card = y_card;
    c.log_vol_u = log_vol_u;
    c.vol_u = std::exp(log_vol_u);
    c.p_y_min = p_y_min;
    c.eta = eta;
    const auto yc = static_cast<double>(y_card);
    c.b_delta = 1.0 + std::sqrt(std::log((yc + 4.0) / delta));
    c.a_delta = std::sqrt(2.0) * c.b_delta;
    c.c_delta = 2.0 * c.vol_u * kInvE + c.b_delta * std::sqrt(yc) * (log_vol_u - std::log(p_y_min));
    c.d_delta = std::pow(eta, -0.25) * std::sqrt(8.0 * (yc + 4.0) / delta);
    if (!(c.c_delta > 0.0))
        throw ConfigError("C_delta = " + std::to_string(c.c_delta) + " is not positive (Vol(U) too small for p_y_min)");
    return c;
}

double log_box_volume(const Eigen::Ref<const VectorXd>& lo, const Eigen::Ref<const VectorXd>& hi) {
    if (lo.size() != hi.size()) throw ConfigError("bounding box corners differ in size");
    return (hi - lo).cwiseMax(kProbFloor).array().log().sum();
}

double mi_coefficient(const MiEstimate& mi, const DeltaConstants& constants, Index n) {
    check_n(n);
    const auto nd = static_cast<double>(n);
    return constants.a_delta * mi.sqrt_bound * std::log(nd) / std::sqrt(nd);
}

BoundReport assemble_bound(const MiEstimate& mi, std::vector<QuantizationReport> quant_reports,
                           double hellinger_value, const DeltaConstants& constants, Index n) {
    if (quant_reports.empty()) throw ConfigError("assemble_bound: no quantization reports");
    if (!std::isfinite(mi.sqrt_bound) || !std::isfinite(hellinger_value))
        throw NumericError("assemble_bound: non-finite inputs");
    const double coeff = mi_coefficient(mi, constants, n);
    for (auto& r : quant_reports) {
        if (!std::isfinite(r.epsilon_hat) || !std::isfinite(r.r_hat))
            throw NumericError("assemble_bound: non-finite quantization report");
        r.objective = 2.0 * r.epsilon_hat + coeff * r.r_hat;
    }
    const auto& best = quant_reports[argmin_objective(quant_reports)];
    const double root = std::sqrt(static_cast<double>(n));

    BoundReport out;
    out.quantization_term = 2.0 * best.epsilon_hat;
    out.mi_term = coeff * best.r_hat;
    out.hellinger_term = constants.d_delta * hellinger_value / root;
    out.constant_term = constants.c_delta / root;
    out.total = out.quantization_term + out.mi_term + out.hellinger_term + out.constant_term;
    out.chosen_k = best.requested_k;
    out.n = n;
    out.delta = constants.delta;
    out.hellinger_value = hellinger_value;
    out.mi_value = mi.total_kl;
    out.constants = constants;
    out.sweep = std::move(quant_reports);
    return out;
}

} // namespace ibgap
