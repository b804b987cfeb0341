#include "ibgap/quantizer.hpp"

#include <limits>
#include <numeric>

namespace ibgap {

namespace {

double row_distance(const Eigen::Ref<const MatrixXd>& table, Index i, const MatrixXd& centroids, Index k) {
    return (table.row(i) - centroids.row(k)).cwiseAbs().maxCoeff();
}

MatrixXd cell_means(const Eigen::Ref<const MatrixXd>& table, const std::vector<Index>& assignment, Index k,
                    std::vector<Index>& counts) {
    MatrixXd sums = MatrixXd::Zero(k, table.cols());
    counts.assign(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < table.rows(); ++i) {
        const Index c = assignment[static_cast<std::size_t>(i)];
        sums.row(c) += table.row(i);
        ++counts[static_cast<std::size_t>(c)];
    }
    for (Index c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0) sums.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    return sums;
}

MatrixXd seed_centroids(const Eigen::Ref<const MatrixXd>& table, Index k, Rng& rng) {
    const Index n = table.rows();
    MatrixXd centroids(k, table.cols());
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    const auto first = std::uniform_int_distribution<Index>(0, n - 1)(rng);
    centroids.row(0) = table.row(first);
    chosen[static_cast<std::size_t>(first)] = true;
    VectorXd dist(n);
    for (Index i = 0; i < n; ++i) dist[i] = row_distance(table, i, centroids, 0);
    for (Index c = 1; c < k; ++c) {
        std::vector<double> weights(static_cast<std::size_t>(n));
        double total = 0.0;
        for (Index i = 0; i < n; ++i) {
            weights[static_cast<std::size_t>(i)] = chosen[static_cast<std::size_t>(i)] ? 0.0 : dist[i] * dist[i];
            total += weights[static_cast<std::size_t>(i)];
        }
        Index pick = -1;
        if (total > 0) {
            pick = static_cast<Index>(std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng));
        } else {
            // every remaining sample sits on a centroid already; take the first unused one
            for (Index i = 0; i < n && pick < 0; ++i)
                if (!chosen[static_cast<std::size_t>(i)]) pick = i;
        }
        centroids.row(c) = table.row(pick);
        chosen[static_cast<std::size_t>(pick)] = true;
        for (Index i = 0; i < n; ++i) dist[i] = std::min(dist[i], row_distance(table, i, centroids, c));
    }
    return centroids;
}

// Moves the worst-fit sample of a multi-member cell into each empty cell.
void fill_empty_cells(const Eigen::Ref<const MatrixXd>& table, std::vector<Index>& assignment, const MatrixXd& centroids,
                      Index k) {
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index c : assignment) ++counts[static_cast<std::size_t>(c)];
    for (Index c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) continue;
        Index worst = -1;
        double worst_d = -1.0;
        for (Index i = 0; i < table.rows(); ++i) {
            const Index from = assignment[static_cast<std::size_t>(i)];
            if (counts[static_cast<std::size_t>(from)] < 2) continue;
            const double d = row_distance(table, i, centroids, from);
            if (d > worst_d) {
                worst_d = d;
                worst = i;
            }
        }
        if (worst < 0) return; // fewer samples than cells
        --counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(worst)])];
        assignment[static_cast<std::size_t>(worst)] = c;
        ++counts[static_cast<std::size_t>(c)];
    }
}

Partition compact(const Eigen::Ref<const MatrixXd>& table, std::vector<Index> assignment, Index k) {
    std::vector<Index> counts;
    const MatrixXd means = cell_means(table, assignment, k, counts);
    std::vector<Index> relabel(static_cast<std::size_t>(k), -1);
    Index used = 0;
    for (Index c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0) relabel[static_cast<std::size_t>(c)] = used++;
    Partition out;
    out.k = used;
    out.loss_centroids.resize(used, table.cols());
    out.cell_counts.resize(static_cast<std::size_t>(used));
    for (Index c = 0; c < k; ++c) {
        const Index r = relabel[static_cast<std::size_t>(c)];
        if (r < 0) continue;
        out.loss_centroids.row(r) = means.row(c);
        out.cell_counts[static_cast<std::size_t>(r)] = counts[static_cast<std::size_t>(c)];
    }
    for (auto& a : assignment) a = relabel[static_cast<std::size_t>(a)];
    out.assignment = std::move(assignment);
    return out;
}

} // namespace

double max_deviation(const Eigen::Ref<const MatrixXd>& loss_table, const std::vector<Index>& assignment,
                     const Eigen::Ref<const MatrixXd>& centroids) {
    double worst = 0.0;
    for (Index i = 0; i < loss_table.rows(); ++i)
        worst = std::max(worst,
                         (loss_table.row(i) - centroids.row(assignment[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff());
    return worst;
}

Partition loss_kmeans(const Eigen::Ref<const MatrixXd>& loss_table, Index k, int max_iters, Rng& rng,
                      ColoringTrace* trace) {
    const Index n = loss_table.rows();
    if (n == 0) throw ConfigError("loss_kmeans: empty loss table");
    if (k < 1) throw ConfigError("loss_kmeans: K must be >= 1");
    if (k > n) throw ConfigError("loss_kmeans: K = " + std::to_string(k) + " exceeds sample count " + std::to_string(n));
    if (max_iters < 1) throw ConfigError("loss_kmeans: max_iters must be >= 1");
    if (!loss_table.allFinite()) throw NumericError("loss_kmeans: non-finite losses");

    MatrixXd centroids = seed_centroids(loss_table, k, rng);
    std::vector<Index> assignment(static_cast<std::size_t>(n), -1);
    std::vector<Index> counts;

    std::vector<Index> best_assignment;
    double best_eps = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iter = 0;
    for (; iter < max_iters; ++iter) {
        if (trace && assignment.front() >= 0) trace->before.push_back(max_deviation(loss_table, assignment, centroids));
        bool changed = false;
        for (Index i = 0; i < n; ++i) {
            Index& a = assignment[static_cast<std::size_t>(i)];
            Index pick = a;
            double pick_d = a >= 0 ? row_distance(loss_table, i, centroids, a) : std::numeric_limits<double>::infinity();
            for (Index c = 0; c < k; ++c) {
                const double d = row_distance(loss_table, i, centroids, c);
                if (d < pick_d) {
                    pick_d = d;
                    pick = c;
                }
            }
            if (pick != a) {
                a = pick;
                changed = true;
            }
        }
        if (trace && !trace->before.empty() && trace->after.size() < trace->before.size())
            trace->after.push_back(max_deviation(loss_table, assignment, centroids));
        if (!changed) {
            converged = true;
            break;
        }
        fill_empty_cells(loss_table, assignment, centroids, k);
        centroids = cell_means(loss_table, assignment, k, counts);
        const double eps = max_deviation(loss_table, assignment, centroids);
        if (eps < best_eps) {
            best_eps = eps;
            best_assignment = assignment;
        }
    }

    Partition out = compact(loss_table, converged ? assignment : best_assignment, k);
    out.iterations = iter + (converged ? 1 : 0);
    out.converged = converged;
    return out;
}

QuantizationReport epsilon_r_hat(const Partition& partition, const Eigen::Ref<const MatrixXd>& loss_table) {
    if (static_cast<Index>(partition.assignment.size()) != loss_table.rows())
        throw ConfigError("epsilon_r_hat: partition does not match loss table");
    std::vector<Index> counts;
    const MatrixXd means = cell_means(loss_table, partition.assignment, partition.k, counts);
    QuantizationReport out;
    Index min_count = loss_table.rows();
    Index used = 0;
    for (Index c : counts)
        if (c > 0) {
            min_count = std::min(min_count, c);
            ++used;
        }
    out.k = used;
    out.requested_k = partition.k;
    out.epsilon_hat = max_deviation(loss_table, partition.assignment, means);
    out.r_hat = static_cast<double>(loss_table.rows()) / static_cast<double>(min_count);
    return out;
}

std::size_t argmin_objective(const std::vector<QuantizationReport>& reports) {
    if (reports.empty()) throw ConfigError("empty K grid");
    std::size_t best = 0;
    for (std::size_t i = 1; i < reports.size(); ++i) {
        const auto& a = reports[i];
        const auto& b = reports[best];
        if (a.objective < b.objective || (a.objective == b.objective && a.requested_k > b.requested_k)) best = i;
    }
    return best;
}

SweepResult sweep_k(const Eigen::Ref<const MatrixXd>& loss_table, const std::vector<Index>& k_grid, double mi_term,
                    std::uint64_t seed, int max_iters) {
    if (k_grid.empty()) throw ConfigError("sweep_k: empty K grid");
    if (!(mi_term >= 0) || !std::isfinite(mi_term)) throw ConfigError("sweep_k: mi_term must be finite and >= 0");
    SweepResult out;
    for (Index k : k_grid) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(k));
        Partition p = loss_kmeans(loss_table, k, max_iters, rng);
        QuantizationReport r = epsilon_r_hat(p, loss_table);
        r.requested_k = k;
        r.objective = 2.0 * r.epsilon_hat + mi_term * r.r_hat;
        out.reports.push_back(r);
        out.partitions.push_back(std::move(p));
    }
    out.best = argmin_objective(out.reports);
    return out;
}

std::vector<Index> cell_representatives(const Partition& partition, const Eigen::Ref<const MatrixXd>& loss_table) {
    std::vector<Index> reps(static_cast<std::size_t>(partition.k), -1);
    std::vector<double> best(static_cast<std::size_t>(partition.k), std::numeric_limits<double>::infinity());
    for (Index i = 0; i < loss_table.rows(); ++i) {
        const Index c = partition.assignment[static_cast<std::size_t>(i)];
        const double d = row_distance(loss_table, i, partition.loss_centroids, c);
        if (d < best[static_cast<std::size_t>(c)]) {
            best[static_cast<std::size_t>(c)] = d;
            reps[static_cast<std::size_t>(c)] = i;
        }
    }
    for (Index r : reps)
        if (r < 0) throw ConfigError("cell_representatives: partition has an empty cell");
    return reps;
}

namespace {

// log q(u_s | x_k) for every representative k and code s (K x N).
MatrixXd log_conditionals(const std::vector<CodeDistribution>& dists, const MatrixXd& codes) {
    const auto k = static_cast<Index>(dists.size());
    MatrixXd out(k, codes.cols());
    for (Index c = 0; c < k; ++c) {
        const auto& d = dists[static_cast<std::size_t>(c)];
        if (d.family == EncoderFamily::rbm) {
            const VectorXd p = d.loc.cwiseMax(kProbFloor).cwiseMin(1.0 - kProbFloor);
            const VectorXd log_on = p.array().log();
            const VectorXd log_off = (-p.array()).log1p();
            out.row(c) = (log_on - log_off).transpose() * codes;
            out.row(c).array() += log_off.sum();
        } else {
            for (Index s = 0; s < codes.cols(); ++s) out(c, s) = log_prob(d, codes.col(s));
        }
    }
    return out;
}

} // namespace

QuantizedModel quantized_model(const Partition& partition, const Eigen::Ref<const MatrixXd>& loss_table,
                               const StochasticEncoder& enc, const LabeledDataset& data, CodeMode mode,
                               Index bank_size, Rng& rng) {
    if (static_cast<Index>(partition.assignment.size()) != data.size() || loss_table.rows() != data.size())
        throw ConfigError("quantized_model: partition, loss table and dataset sizes differ");
    const Index k = partition.k;
    const Index labels = data.label_count;

    QuantizedModel out;
    out.mode = mode;
    out.joint = MatrixXd::Zero(k, labels);
    for (Index i = 0; i < data.size(); ++i)
        out.joint(partition.assignment[static_cast<std::size_t>(i)], data.labels[static_cast<std::size_t>(i)]) += 1.0;
    out.joint /= static_cast<double>(data.size());
    const VectorXd cell_mass = out.joint.rowwise().sum();

    out.representatives = cell_representatives(partition, loss_table);
    MatrixXd rep_x(data.dim(), k);
    for (Index c = 0; c < k; ++c) rep_x.col(c) = data.images.col(out.representatives[static_cast<std::size_t>(c)]);
    const auto dists = conditionals(enc, rep_x);
    const Index m = code_size(enc);

    if (mode == CodeMode::exact) {
        if (family_of(enc) != EncoderFamily::rbm) throw ConfigError("exact quantized model needs binary codes");
        if (m > kMaxEnumerationBits)
            throw ConfigError("exact quantized model: " + std::to_string(m) + " units exceeds the enumeration budget");
        const Index total = Index{1} << m;
        out.codes.resize(m, total);
        for (Index c = 0; c < total; ++c)
            for (Index j = 0; j < m; ++j) out.codes(j, c) = ((c >> j) & 1) ? 1.0 : 0.0;
    } else {
        if (bank_size < 1) throw ConfigError("Monte Carlo bank size must be >= 1");
        std::discrete_distribution<Index> cell(cell_mass.data(), cell_mass.data() + k);
        out.codes.resize(m, bank_size);
        for (Index s = 0; s < bank_size; ++s)
            out.codes.col(s) = sample_codes(dists[static_cast<std::size_t>(cell(rng))], 1, rng);
    }
    const Index n_codes = out.codes.cols();
    out.bank_size = n_codes;

    const MatrixXd log_q = log_conditionals(dists, out.codes);
    out.decoder_table.resize(n_codes, labels);
    out.code_weights.resize(n_codes);
    const VectorXd log_mass = cell_mass.array().log();
    for (Index s = 0; s < n_codes; ++s) {
        // posterior weight of each cell given u, via log-sum-exp
        VectorXd w = log_q.col(s) + log_mass;
        const double peak = w.maxCoeff();
        w = (w.array() - peak).exp();
        const double norm = w.sum();
        out.code_weights[s] = std::exp(peak) * norm;
        const VectorXd cond = (out.joint.array().colwise() / cell_mass.array()).matrix().transpose() * w / norm;
        out.decoder_table.row(s) = cond.transpose();
    }
    if (mode == CodeMode::monte_carlo) out.code_weights.setConstant(1.0 / static_cast<double>(n_codes));
    if (!out.decoder_table.allFinite()) throw NumericError("quantized_model: non-finite decoder table");
    return out;
}

} // namespace ibgap
