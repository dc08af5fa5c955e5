#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "entype/metrics.hpp"
#include "support.hpp"

using entype::loose_macro;
using entype::loose_micro;
using entype::strict;
using entype::TypeIdSet;

namespace {
std::vector<TypeIdSet> random_sets(std::size_t n, int n_types, std::mt19937& gen,
                                   double keep = 0.3) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<TypeIdSet> out(n);
    for (auto& s : out)
        for (int t = 0; t < n_types; ++t)
            if (coin(gen) < keep) s.insert(t);
    return out;
}
}  // namespace

TEST_CASE("hand-computed two-instance fixture") {
    // pred {a}, gold {a,b}; pred {c,d}, gold {c}
    std::vector<TypeIdSet> pred = {{0}, {2, 3}};
    std::vector<TypeIdSet> gold = {{0, 1}, {2}};

    auto s = strict(pred, gold);
    CHECK(s.precision == 0.0);
    CHECK(s.recall == 0.0);
    CHECK(s.f1 == 0.0);

    auto ma = loose_macro(pred, gold);
    CHECK(ma.precision == 0.75);
    CHECK(ma.recall == 0.75);
    CHECK(ma.f1 == 0.75);

    auto mi = loose_micro(pred, gold);
    CHECK(mi.precision == 2.0 / 3.0);
    CHECK(mi.recall == 2.0 / 3.0);
    CHECK(mi.f1 == Catch::Approx(2.0 / 3.0).margin(1e-15));
}

TEST_CASE("perfect predictions score 1 everywhere") {
    std::vector<TypeIdSet> sets = {{0, 2}, {1}, {3, 4, 5}};
    for (auto score : {strict(sets, sets), loose_macro(sets, sets), loose_micro(sets, sets)}) {
        CHECK(score.precision == 1.0);
        CHECK(score.recall == 1.0);
        CHECK(score.f1 == 1.0);
    }
}

TEST_CASE("empty sets") {
    SECTION("strict: two empty sets are an exact match") {
        std::vector<TypeIdSet> pred = {{}, {1}};
        std::vector<TypeIdSet> gold = {{}, {1}};
        CHECK(strict(pred, gold).f1 == 1.0);
    }
    SECTION("macro: empty prediction against nonempty gold contributes 0 to both terms") {
        std::vector<TypeIdSet> pred = {{}};
        std::vector<TypeIdSet> gold = {{0}};
        auto s = loose_macro(pred, gold);
        CHECK(s.precision == 0.0);
        CHECK(s.recall == 0.0);
    }
    SECTION("micro: nothing predicted, golds nonempty -> P=1 by 0/0, R=0, F1=0") {
        std::vector<TypeIdSet> pred = {{}, {}};
        std::vector<TypeIdSet> gold = {{0}, {1, 2}};
        auto s = loose_micro(pred, gold);
        CHECK(s.precision == 1.0);
        CHECK(s.recall == 0.0);
        CHECK(s.f1 == 0.0);
    }
}

TEST_CASE("length mismatch and empty input are errors") {
    std::vector<TypeIdSet> two = {{0}, {1}};
    std::vector<TypeIdSet> one = {{0}};
    std::vector<TypeIdSet> none;
    CHECK_THROWS_AS(strict(two, one), std::invalid_argument);
    CHECK_THROWS_AS(loose_macro(one, two), std::invalid_argument);
    CHECK_THROWS_AS(loose_micro(none, none), std::invalid_argument);
}

TEST_CASE("loose macro dominates strict; all-ones iff exact") {
    std::mt19937 gen(99);
    for (int trial = 0; trial < 50; ++trial) {
        auto pred = random_sets(20, 6, gen);
        auto gold = random_sets(20, 6, gen);
        const double sv = strict(pred, gold).precision;
        auto ma = loose_macro(pred, gold);
        CHECK(ma.precision >= sv);
        CHECK(ma.recall >= sv);
        bool all_exact = true;
        bool golds_nonempty = true;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            all_exact = all_exact && pred[i] == gold[i];
            golds_nonempty = golds_nonempty && !gold[i].empty();
        }
        if (golds_nonempty) {
            const bool all_one = strict(pred, gold).f1 == 1.0 && ma.f1 == 1.0 &&
                                 loose_micro(pred, gold).f1 == 1.0;
            CHECK(all_one == all_exact);
        }
    }
}

TEST_CASE("permutation invariance over instance order") {
    std::mt19937 gen(5);
    auto pred = random_sets(40, 8, gen);
    auto gold = random_sets(40, 8, gen);
    std::vector<std::size_t> order(pred.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), gen);
    std::vector<TypeIdSet> pred2, gold2;
    for (auto i : order) {
        pred2.push_back(pred[i]);
        gold2.push_back(gold[i]);
    }
    CHECK(strict(pred2, gold2).f1 == strict(pred, gold).f1);
    CHECK(loose_macro(pred2, gold2).f1 == Catch::Approx(loose_macro(pred, gold).f1).margin(1e-12));
    CHECK(loose_micro(pred2, gold2).f1 == loose_micro(pred, gold).f1);
}

TEST_CASE("agrees with the independent set-arithmetic oracle") {
    std::mt19937 gen(2024);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + gen() % 60;
        auto pred = random_sets(n, 8, gen);
        auto gold = random_sets(n, 8, gen);
        std::vector<std::set<int>> op(pred.begin(), pred.end());
        std::vector<std::set<int>> og(gold.begin(), gold.end());
        const auto oracle = testsupport::metric_oracle(op, og);
        const auto s = strict(pred, gold);
        const auto ma = loose_macro(pred, gold);
        const auto mi = loose_micro(pred, gold);
        CHECK(s.precision == oracle.strict_p);  // integer-derived: bit-equal
        CHECK(s.f1 == oracle.strict_f1);
        CHECK(mi.precision == oracle.micro_p);
        CHECK(mi.recall == oracle.micro_r);
        CHECK(ma.precision == Catch::Approx(oracle.macro_p).margin(1e-12));
        CHECK(ma.recall == Catch::Approx(oracle.macro_r).margin(1e-12));
        CHECK(ma.f1 == Catch::Approx(oracle.macro_f1).margin(1e-12));
    }
}

TEST_CASE("evaluation report JSON shape") {
    std::vector<TypeIdSet> pred = {{0}};
    std::vector<TypeIdSet> gold = {{0}};
    auto j = entype::evaluation_report(pred, gold);
    CHECK(j["n"] == 1);
    CHECK(j["strict"]["f1"] == 1.0);
    CHECK(j["loose_macro"]["p"] == 1.0);
    CHECK(j["loose_micro"]["r"] == 1.0);
}
