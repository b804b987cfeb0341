#ifndef IBGAP_COMMON_HPP
#define IBGAP_COMMON_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ibgap {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

using Rng = std::mt19937_64;

// Floor applied to probabilities and variances before taking logs.
inline constexpr double kProbFloor = 1e-12;

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a formula (CLI exit code 2).
class DomainError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Malformed input file (CLI exit code 2).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or overflow during computation (CLI exit code 3).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Collects non-fatal warnings (clamped logs, etc.) from numerical routines.
struct Diagnostics {
    std::vector<std::string> warnings;
    std::size_t clamped = 0;

    void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for an independent stream identified by (seed, stream).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 1));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(derive_seed(seed, stream)); }

/// FNV-1a over the bytes of a labelled sample; keys per-sample noise streams
/// so identical samples see identical Monte Carlo noise wherever they appear.
std::uint64_t sample_key(const Eigen::Ref<const VectorXd>& x, int y);

/// Fills a matrix with iid standard normal draws (column-major order).
void fill_normal(MatrixXd& out, Rng& rng);

inline double sigmoid(double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

inline double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

bool all_finite(std::span<const double> values);

} // namespace ibgap

#endif // IBGAP_COMMON_HPP
