#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "lprune/partition.hpp"
#include "lprune/rng.hpp"

using namespace lprune;
using namespace lprune::partition;

namespace {

std::vector<double> random_profile(int l, Rng& rng, bool tie_prone) {
    std::vector<double> z(static_cast<size_t>(l));
    for (auto& v : z)
        v = tie_prone ? static_cast<double>(rng.uniform_int(3)) : rng.normal();
    return z;
}

}  // namespace

TEST_CASE("criterion names round-trip") {
    CHECK(criterion_from_name("sse") == Criterion::SquaredError);
    CHECK(criterion_from_name("sad") == Criterion::AbsoluteError);
    CHECK(criterion_name(Criterion::SquaredError) == "sse");
    CHECK(criterion_name(Criterion::AbsoluteError) == "sad");
    CHECK_THROWS_AS(criterion_from_name("mse"), std::runtime_error);
}

TEST_CASE("segment_cost matches hand-worked values") {
    const std::vector<double> z = {1.0, 2.0, 3.0, 10.0};

    // {1,2,3}: mean 2, squared deviations 1+0+1; median 2, absolute 1+0+1
    CHECK(segment_cost(z, 0, 2, Criterion::SquaredError) == doctest::Approx(2.0));
    CHECK(segment_cost(z, 0, 2, Criterion::AbsoluteError) == doctest::Approx(2.0));

    // {1,2,3,10}: mean 4 -> 9+4+1+36 = 50; median 2.5 -> 1.5+0.5+0.5+7.5 = 10
    CHECK(segment_cost(z, 0, 3, Criterion::SquaredError) == doctest::Approx(50.0));
    CHECK(segment_cost(z, 0, 3, Criterion::AbsoluteError) == doctest::Approx(10.0));

    CHECK(segment_cost(z, 1, 1) == 0.0);
    CHECK_THROWS_AS(segment_cost(z, -1, 2), std::runtime_error);
    CHECK_THROWS_AS(segment_cost(z, 0, 4), std::runtime_error);
    CHECK_THROWS_AS(segment_cost(z, 2, 1), std::runtime_error);
}

TEST_CASE("dynamic program matches brute force on randomized profiles") {
    Rng rng(606);
    int instances = 0;
    while (instances < 200) {
        const int l = 1 + static_cast<int>(rng.uniform_int(12));
        const int k = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(std::min(l, 5))));
        const bool tie_prone = rng.uniform() < 0.5;
        const Criterion crit = rng.uniform() < 0.5 ? Criterion::SquaredError : Criterion::AbsoluteError;
        const std::vector<double> z = random_profile(l, rng, tie_prone);

        const Segmentation dp = fisher_segment(z, k, crit);
        const Segmentation bf = brute_force_segment(z, k, crit);
        CAPTURE(instances);
        CAPTURE(l);
        CAPTURE(k);
        CAPTURE(tie_prone);
        REQUIRE(dp.starts == bf.starts);
        CHECK(dp.cost == doctest::Approx(bf.cost).epsilon(1e-12));
        ++instances;
    }
}

TEST_CASE("ties resolve to the leftmost boundaries") {
    // every split of a flat profile costs zero; both solvers must pick the
    // earliest possible starts
    const std::vector<double> z = {5.0, 5.0, 5.0, 5.0};
    const Segmentation dp = fisher_segment(z, 2);
    const Segmentation bf = brute_force_segment(z, 2);
    CHECK(dp.starts == std::vector<int>{0, 1});
    CHECK(bf.starts == std::vector<int>{0, 1});

    const Segmentation dp3 = fisher_segment(z, 3);
    CHECK(dp3.starts == std::vector<int>{0, 1, 2});
    CHECK(dp3.cost == 0.0);
}

TEST_CASE("two well separated clusters split at the gap") {
    const std::vector<double> z = {0.1, 0.0, 0.05, 10.0, 9.9, 10.1};
    const Segmentation seg = fisher_segment(z, 2);
    CHECK(seg.starts == std::vector<int>{0, 3});
    const auto blocks = seg.blocks(6);
    REQUIRE(blocks.size() == 2);
    CHECK(blocks[0] == std::pair<int, int>{0, 2});
    CHECK(blocks[1] == std::pair<int, int>{3, 5});
}

TEST_CASE("cost never increases with more segments") {
    Rng rng(99);
    const std::vector<double> z = random_profile(10, rng, false);
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 10; ++k) {
        const double cost = fisher_segment(z, k).cost;
        CHECK(cost <= prev + 1e-12);
        prev = cost;
    }
    CHECK(fisher_segment(z, 10).cost == 0.0);
    CHECK(fisher_segment(z, 1).cost == doctest::Approx(segment_cost(z, 0, 9)));
}

TEST_CASE("segmentation covaries with shifts and scales of the profile") {
    Rng rng(31);
    const std::vector<double> z = random_profile(9, rng, false);
    const Segmentation base = fisher_segment(z, 3);

    std::vector<double> shifted = z;
    for (auto& v : shifted) v += 100.0;
    const Segmentation sh = fisher_segment(shifted, 3);
    CHECK(sh.starts == base.starts);
    CHECK(sh.cost == doctest::Approx(base.cost).epsilon(1e-6));

    std::vector<double> scaled = z;
    for (auto& v : scaled) v *= 2.5;
    const Segmentation sc = fisher_segment(scaled, 3);
    CHECK(sc.starts == base.starts);
    CHECK(sc.cost == doctest::Approx(base.cost * 2.5 * 2.5).epsilon(1e-9));

    const Segmentation base_sad = fisher_segment(z, 3, Criterion::AbsoluteError);
    const Segmentation sc_sad = fisher_segment(scaled, 3, Criterion::AbsoluteError);
    CHECK(sc_sad.starts == base_sad.starts);
    CHECK(sc_sad.cost == doctest::Approx(base_sad.cost * 2.5).epsilon(1e-9));
}

TEST_CASE("edge arguments are rejected") {
    const std::vector<double> z = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(fisher_segment(z, 0), std::runtime_error);
    CHECK_THROWS_AS(fisher_segment(z, 4), std::runtime_error);
    CHECK_THROWS_AS(fisher_segment({}, 1), std::runtime_error);
    CHECK_THROWS_AS(brute_force_segment(std::vector<double>(17, 0.0), 2), std::runtime_error);

    const Segmentation whole = fisher_segment(z, 1);
    CHECK(whole.starts == std::vector<int>{0});
    const auto blocks = whole.blocks(3);
    REQUIRE(blocks.size() == 1);
    CHECK(blocks[0] == std::pair<int, int>{0, 2});
}
