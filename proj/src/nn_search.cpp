#include "srim/nn_search.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "srim/errors.hpp"

namespace srim {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Relative slack under which expanded-form results are not trusted.
constexpr double kCancellationSlack = 1e-9;

RowMatrix stack_rows(std::span<const std::vector<double>> rows, std::size_t dim) {
    RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != dim) {
            throw ArgumentError("vector length " + std::to_string(rows[i].size()) + " differs from " +
                                std::to_string(dim));
        }
        m.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(), static_cast<Eigen::Index>(dim));
    }
    return m;
}

double direct_sq_dist(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

}  // namespace

std::vector<double> pairwise_sq_dists(std::span<const std::vector<double>> a, std::span<const std::vector<double>> b) {
    if (a.empty() || b.empty()) return {};
    const std::size_t dim = a.front().size();
    const RowMatrix ma = stack_rows(a, dim);
    const RowMatrix mb = stack_rows(b, dim);
    const Eigen::VectorXd na = ma.rowwise().squaredNorm();
    const Eigen::VectorXd nb = mb.rowwise().squaredNorm();
    RowMatrix d = -2.0 * (ma * mb.transpose());
    d.colwise() += na;
    d.rowwise() += nb.transpose();

    std::vector<double> out(a.size() * b.size());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        for (Eigen::Index j = 0; j < d.cols(); ++j) {
            double v = d(i, j);
            if (v <= kCancellationSlack * (na(i) + nb(j))) {
                v = direct_sq_dist(a[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(j)]);
            }
            out[static_cast<std::size_t>(i) * b.size() + static_cast<std::size_t>(j)] = std::max(v, 0.0);
        }
    }
    return out;
}

Nearest select_nearest(std::span<const double> target, const CandidatePool& pool) {
    if (pool.vectors.empty()) throw ArgumentError("candidate pool is empty");
    if (pool.dimension() != target.size()) {
        throw ArgumentError("target length " + std::to_string(target.size()) + " differs from pool dimension " +
                            std::to_string(pool.dimension()));
    }
    if (pool.size() == 1) return {0, direct_sq_dist(target, pool.vectors.front())};

    const std::size_t dim = target.size();
    const RowMatrix cands = stack_rows(pool.vectors, dim);
    const Eigen::Map<const Eigen::VectorXd> t(target.data(), static_cast<Eigen::Index>(dim));
    const Eigen::VectorXd norms = cands.rowwise().squaredNorm();
    const Eigen::VectorXd dots = cands * t;
    const double tnorm = t.squaredNorm();
    const Eigen::VectorXd expanded = (norms.array() + tnorm - 2.0 * dots.array()).cwiseMax(0.0);

    const double best_expanded = expanded.minCoeff();
    const double slack = kCancellationSlack * (tnorm + norms.maxCoeff()) + std::numeric_limits<double>::min();
    Nearest best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t j = 0; j < pool.size(); ++j) {
        if (expanded(static_cast<Eigen::Index>(j)) > best_expanded + slack) continue;
        const double exact = direct_sq_dist(target, pool.vectors[j]);
        if (exact < best.distance) best = {j, exact};
    }
    return best;
}

}  // namespace srim
