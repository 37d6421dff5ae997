#include "lprune/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lprune::partition {

Criterion criterion_from_name(const std::string& name) {
    if (name == "sse") return Criterion::SquaredError;
    if (name == "sad") return Criterion::AbsoluteError;
    throw std::runtime_error("unknown segment criterion: " + name);
}

std::string criterion_name(Criterion c) {
    return c == Criterion::SquaredError ? "sse" : "sad";
}

double segment_cost(const std::vector<double>& z, int i, int j, Criterion criterion) {
    if (i < 0 || j >= static_cast<int>(z.size()) || i > j)
        throw std::runtime_error("segment_cost: bad range [" + std::to_string(i) + ", " + std::to_string(j) + "]");
    const int n = j - i + 1;
    if (criterion == Criterion::SquaredError) {
        double sum = 0.0;
        for (int t = i; t <= j; ++t) sum += z[static_cast<size_t>(t)];
        const double mean = sum / n;
        double cost = 0.0;
        for (int t = i; t <= j; ++t) {
            const double d = z[static_cast<size_t>(t)] - mean;
            cost += d * d;
        }
        return cost;
    }
    std::vector<double> seg(z.begin() + i, z.begin() + j + 1);
    std::sort(seg.begin(), seg.end());
    const double med = n % 2 ? seg[static_cast<size_t>(n / 2)]
                             : 0.5 * (seg[static_cast<size_t>(n / 2 - 1)] + seg[static_cast<size_t>(n / 2)]);
    double cost = 0.0;
    for (double v : seg) cost += std::abs(v - med);
    return cost;
}

std::vector<std::pair<int, int>> Segmentation::blocks(int l) const {
    std::vector<std::pair<int, int>> out;
    for (size_t m = 0; m < starts.size(); ++m) {
        const int lo = starts[m];
        const int hi = m + 1 < starts.size() ? starts[m + 1] - 1 : l - 1;
        out.emplace_back(lo, hi);
    }
    return out;
}

namespace {

void check_args(const std::vector<double>& z, int k) {
    const int l = static_cast<int>(z.size());
    if (l < 1) throw std::runtime_error("segmentation: empty profile");
    if (k < 1 || k > l)
        throw std::runtime_error("segmentation: k=" + std::to_string(k) + " outside [1, " + std::to_string(l) + "]");
}

}  // namespace

Segmentation fisher_segment(const std::vector<double>& z, int k, Criterion criterion) {
    check_args(z, k);
    const int l = static_cast<int>(z.size());
    const double inf = std::numeric_limits<double>::infinity();

    // best[m][p]: minimal cost splitting z[0..p] into m+1 segments
    std::vector<std::vector<double>> best(static_cast<size_t>(k), std::vector<double>(static_cast<size_t>(l), inf));
    std::vector<std::vector<int>> arg(static_cast<size_t>(k), std::vector<int>(static_cast<size_t>(l), 0));

    for (int p = 0; p < l; ++p) best[0][static_cast<size_t>(p)] = segment_cost(z, 0, p, criterion);
    for (int m = 1; m < k; ++m) {
        for (int p = m; p < l; ++p) {
            double lo = inf;
            int lo_j = m;
            // j: start of the last segment; ascending scan with a strict
            // improvement test keeps the leftmost boundary on ties
            for (int j = m; j <= p; ++j) {
                const double c = best[static_cast<size_t>(m - 1)][static_cast<size_t>(j - 1)] +
                                 segment_cost(z, j, p, criterion);
                if (c < lo) {
                    lo = c;
                    lo_j = j;
                }
            }
            best[static_cast<size_t>(m)][static_cast<size_t>(p)] = lo;
            arg[static_cast<size_t>(m)][static_cast<size_t>(p)] = lo_j;
        }
    }

    Segmentation seg;
    seg.cost = best[static_cast<size_t>(k - 1)][static_cast<size_t>(l - 1)];
    seg.starts.assign(static_cast<size_t>(k), 0);
    int p = l - 1;
    for (int m = k - 1; m >= 1; --m) {
        const int j = arg[static_cast<size_t>(m)][static_cast<size_t>(p)];
        seg.starts[static_cast<size_t>(m)] = j;
        p = j - 1;
    }
    return seg;
}

Segmentation brute_force_segment(const std::vector<double>& z, int k, Criterion criterion) {
    check_args(z, k);
    const int l = static_cast<int>(z.size());
    if (l > 16) throw std::runtime_error("brute_force_segment: profile longer than 16");

    Segmentation best;
    best.cost = std::numeric_limits<double>::infinity();
    bool have = false;

    // later-segment starts compare first, so ties resolve exactly like the
    // dynamic program's backtrack
    auto better = [](double cost, const std::vector<int>& starts, const Segmentation& cur) {
        if (cost != cur.cost) return cost < cur.cost;
        for (size_t m = starts.size(); m-- > 1;) {
            if (starts[m] != cur.starts[m]) return starts[m] < cur.starts[m];
        }
        return false;
    };

    std::vector<int> starts(static_cast<size_t>(k), 0);
    // choose starts[1] < starts[2] < ... < starts[k-1], each in [m, l-1]
    auto rec = [&](auto&& self, int m, int prev) -> void {
        if (m == k) {
            double cost = 0.0;
            for (int s = 0; s < k; ++s) {
                const int lo = starts[static_cast<size_t>(s)];
                const int hi = s + 1 < k ? starts[static_cast<size_t>(s + 1)] - 1 : l - 1;
                cost += segment_cost(z, lo, hi, criterion);
            }
            if (!have || better(cost, starts, best)) {
                best.cost = cost;
                best.starts = starts;
                have = true;
            }
            return;
        }
        for (int j = prev + 1; j <= l - (k - m); ++j) {
            starts[static_cast<size_t>(m)] = j;
            self(self, m + 1, j);
        }
    };
    rec(rec, 1, 0);
    return best;
}

}  // namespace lprune::partition
