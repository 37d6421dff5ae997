#pragma once

#include <string>
#include <vector>

namespace lprune::partition {

// Within-segment spread for z[i..j] inclusive.
//   SquaredError   sum of squared deviations from the segment mean (default)
//   AbsoluteError  sum of absolute deviations from the segment median
enum class Criterion { SquaredError, AbsoluteError };

Criterion criterion_from_name(const std::string& name);
std::string criterion_name(Criterion c);

double segment_cost(const std::vector<double>& z, int i, int j,
                    Criterion criterion = Criterion::SquaredError);

struct Segmentation {
    std::vector<int> starts;  // k segment start indices, starts[0] == 0
    double cost = 0.0;

    // [lo, hi] inclusive ranges
    std::vector<std::pair<int, int>> blocks(int l) const;
};

// Optimal split of z into k contiguous blocks minimizing total within-segment
// cost, by dynamic programming over (prefix end, segment count). Cost ties
// pick the smallest start index for the latest segment, then recursively for
// the prefix. O(k l^2) cost lookups.
Segmentation fisher_segment(const std::vector<double>& z, int k,
                            Criterion criterion = Criterion::SquaredError);

// Same optimum by enumerating all C(l-1, k-1) boundary placements with the
// identical tie rule. Guarded to l <= 16.
Segmentation brute_force_segment(const std::vector<double>& z, int k,
                                 Criterion criterion = Criterion::SquaredError);

}  // namespace lprune::partition
