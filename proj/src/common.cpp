#include "ibgap/common.hpp"

#include <cstring>

namespace ibgap {

std::uint64_t sample_key(const Eigen::Ref<const VectorXd>& x, int y) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (Index i = 0; i < x.size(); ++i) {
        double v = x[i];
        feed(&v, sizeof v);
    }
    feed(&y, sizeof y);
    return h;
}

void fill_normal(MatrixXd& out, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    double* p = out.data();
    for (Index i = 0; i < out.size(); ++i) p[i] = normal(rng);
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

} // namespace ibgap
