#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace srim {

/// m candidate vectors of equal length.
struct CandidatePool {
    std::vector<std::vector<double>> vectors;

    std::size_t size() const { return vectors.size(); }
    std::size_t dimension() const { return vectors.empty() ? 0 : vectors.front().size(); }
};

struct Nearest {
    std::size_t index = 0;  // 0-based position in the pool
    double distance = 0.0;  // squared Euclidean
};

/// Brute-force arg-min of squared Euclidean distance. Ties go to the lowest
/// index. Distances come from the expanded form ‖a‖²+‖b‖²−2a·b; candidates
/// within rounding slack of the minimum are re-scored exactly, so an exact
/// copy of the target scores 0 and tie-breaking is exact.
Nearest select_nearest(std::span<const double> target, const CandidatePool& pool);

/// |A|×|B| matrix (row-major) of squared distances, clamped at zero. Entries
/// small enough for cancellation to matter are recomputed directly.
std::vector<double> pairwise_sq_dists(std::span<const std::vector<double>> a, std::span<const std::vector<double>> b);

}  // namespace srim
