// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <random>

#include "doctest.h"
#include "metric_oracles.hpp"
#include "xtcdr/error.hpp"
#include "xtcdr/eval/metrics.hpp"
#include "xtcdr/eval/report.hpp"

using namespace xtcdr;
using namespace xtcdr::eval;
using V = std::vector<double>;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error raised");
    return ErrorKind::Usage;
}

data::ExpressionDataset rows_of(const std::vector<std::tuple<std::string, std::string, V>>& rows) {
    data::ExpressionDataset ds({"g0", "g1", "g2", "g3"});
    std::size_t i = 0;
    for (const auto& [line, pert, v] : rows) {
        std::vector<float> f(v.begin(), v.end());
        ds.add_row({"c" + std::to_string(i++), line, pert, 0.0}, f);
    }
    return ds;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("r squared examples") {
    CHECK(r_squared(V{1, 2, 3}, V{1, 2, 3}) == 1.0);
    CHECK(r_squared(V{2, 2, 2}, V{1, 2, 3}) == 0.0);
    CHECK(r_squared(V{2, 3, 4}, V{1, 2, 3}) == -0.5);
    CHECK(kind_of([] { r_squared(V{1, 2}, V{3, 3}); }) == ErrorKind::UndefinedMetric);
    CHECK(kind_of([] { r_squared(V{1, 2}, V{1, 2, 3}); }) == ErrorKind::Shape);
}

TEST_CASE("explained variance examples") {
    CHECK(explained_variance(V{1, 2, 3}, V{1, 2, 3}) == 1.0);
    CHECK(explained_variance(V{2, 3, 4}, V{1, 2, 3}) == 1.0);
    CHECK(explained_variance(V{2, 2, 2}, V{1, 2, 3}) == 0.0);
}

TEST_CASE("correlation examples") {
    CHECK(pearson(V{1, 2, 3}, V{1, 2, 3}) == doctest::Approx(1.0));
    CHECK(pearson(V{3, 2, 1}, V{1, 2, 3}) == doctest::Approx(-1.0));
    CHECK(std::abs(pearson(V{1, 2, 4}, V{1, 2, 3}) - test::oracle::pearson(V{1, 2, 4}, V{1, 2, 3})) <= 1e-12);
    CHECK(spearman(V{1, 4, 9}, V{1, 2, 3}) == doctest::Approx(1.0));
    CHECK(spearman(V{9, 4, 1}, V{1, 2, 3}) == doctest::Approx(-1.0));
    CHECK(spearman(V{1, 1, 2}, V{1, 2, 3}) ==
          doctest::Approx(test::oracle::spearman(V{1, 1, 2}, V{1, 2, 3})).epsilon(1e-12));
    CHECK(average_ranks(V{10, 5, 5, 1}) == V{4, 2.5, 2.5, 1});
    CHECK(kind_of([] { pearson(V{1, 1, 1}, V{1, 2, 3}); }) == ErrorKind::UndefinedMetric);
}

TEST_CASE("metrics agree with brute-force oracles and respect their bounds") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n(0, 1);
    std::uniform_int_distribution<int> pick(0, 4);
    for (int trial = 0; trial < 50; ++trial) {
        V a(50), p(50);
        for (auto& x : a) x = n(rng);
        for (std::size_t i = 0; i < 50; ++i) p[i] = trial % 5 == 0 ? double(pick(rng)) : a[i] + n(rng);
        CHECK(std::abs(r_squared(p, a) - test::oracle::r_squared(p, a)) <= 1e-9);
        CHECK(std::abs(explained_variance(p, a) - test::oracle::explained_variance(p, a)) <= 1e-9);
        CHECK(std::abs(pearson(p, a) - test::oracle::pearson(p, a)) <= 1e-9);
        CHECK(std::abs(spearman(p, a) - test::oracle::spearman(p, a)) <= 1e-9);
        CHECK(explained_variance(p, a) >= r_squared(p, a) - 1e-12);
        CHECK(r_squared(p, a) <= 1.0);
        CHECK(std::abs(pearson(p, a)) <= 1.0);

        std::vector<std::size_t> perm(50);
        for (std::size_t i = 0; i < 50; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        V ap(50), pp(50);
        for (std::size_t i = 0; i < 50; ++i) {
            ap[i] = a[perm[i]];
            pp[i] = p[perm[i]];
        }
        CHECK(r_squared(pp, ap) == doctest::Approx(r_squared(p, a)).epsilon(1e-12));
        CHECK(spearman(pp, ap) == doctest::Approx(spearman(p, a)).epsilon(1e-12));
    }
}

TEST_CASE("DEG selection") {
    DegOptions exact;
    exact.epsilon = 0.0;
    const auto d = select_degs(V{1, 1, 1, 1}, V{4, 1, 2, 0.4}, exact);
    CHECK(d.genes == std::vector<std::size_t>{0, 3, 2});
    CHECK(d.lfc[0] == doctest::Approx(2.0));
    CHECK(d.lfc[1] == doctest::Approx(std::log2(0.4)));
    CHECK(std::abs(d.lfc[1]) == doctest::Approx(1.32).epsilon(1e-2));
    CHECK(d.lfc[2] == doctest::Approx(1.0));

    // Under the default pseudocount a two-fold change sits just below 1.
    const auto def = select_degs(V{1, 1, 1, 1}, V{4, 1, 2, 0.4});
    CHECK(def.genes == std::vector<std::size_t>{0, 3});

    CHECK(select_degs(V{1, 2, 3}, V{1, 2, 3}).genes.empty());
    DegOptions top2;
    top2.k = 2;
    CHECK(select_degs(V{1, 1, 1, 1}, V{8, 16, 4, 0.1}, top2).genes == std::vector<std::size_t>{1, 3});
    // ties broken by index
    CHECK(select_degs(V{1, 1, 1}, V{4, 0.25, 4}, exact).genes == std::vector<std::size_t>{0, 1, 2});
    CHECK(kind_of([] { select_degs(V{-1, 1}, V{1, 1}); }) == ErrorKind::Domain);
}

TEST_CASE("condition metrics and report") {
    const auto controls = rows_of({{"A", "control", {1, 2, 1, 2}}, {"A", "control", {1, 2, 1, 2}},
                                   {"B", "control", {2, 1, 2, 1}}});
    const auto actual = rows_of({{"A", "p", {4, 2, 0.1, 4}},
                                 {"A", "p", {4, 2, 0.3, 4}},
                                 {"B", "p", {8, 2, 2, 0.5}},
                                 {"B", "q", {1, 2, 3, 4}}});
    const auto rep = evaluate(actual, actual, controls);
    REQUIRE(rep.conditions.size() == 3);
    CHECK(rep.conditions[0].cell_line == "A");
    CHECK(rep.conditions[2].perturbation == "q");
    for (const auto& c : rep.conditions) {
        CHECK(c.r2_all == 1.0);
        CHECK(c.ev_all == 1.0);
        CHECK(c.pcc_all == doctest::Approx(1.0));
        CHECK(c.spearman_all == doctest::Approx(1.0));
    }
    CHECK(rep.conditions[0].n_cells == 2);
    CHECK(rep.conditions[0].deg_count == 2);
    CHECK(rep.conditions[0].r2_deg.has_value());
    CHECK(rep.aggregates.at("r2_all").mean == 1.0);
    CHECK(rep.aggregates.at("r2_all").count == 3);

    // Control mean as prediction: model columns equal the baseline columns.
    const auto as_control = rows_of({{"A", "p", {1, 2, 1, 2}}, {"B", "p", {2, 1, 2, 1}}, {"B", "q", {2, 1, 2, 1}}});
    const auto base = evaluate(as_control, actual, controls);
    for (const auto& c : base.conditions) {
        CHECK(c.r2_all == c.baseline_r2_all);
        CHECK(c.r2_deg == c.baseline_r2_deg);
    }

    const auto csv = to_csv(rep);
    CHECK(csv.rfind("perturbation,cell_line,n_cells,r2_all,r2_deg,ev_all,ev_deg,pcc_all,pcc_deg,spearman_all,"
                    "spearman_deg,baseline_r2_all,baseline_r2_deg,deg_count\n",
                    0) == 0);
    const auto j = to_json(rep);
    CHECK(j["aggregates"]["r2_deg"].contains("median"));
    CHECK(j["conditions"].size() == 3);
}

TEST_CASE("evaluate guards") {
    const auto controls = rows_of({{"A", "control", {1, 1, 1, 1}}});
    const auto actual = rows_of({{"A", "p", {2, 1, 1, 1}}});
    const auto orphan = rows_of({{"A", "zz", {2, 1, 1, 1}}});
    CHECK(kind_of([&] { evaluate(orphan, actual, controls); }) == ErrorKind::Data);
    data::ExpressionDataset other({"x", "y", "z", "w"});
    other.add_row({"c", "A", "p", 0}, std::vector<float>{1, 2, 3, 4});
    CHECK(kind_of([&] { evaluate(other, actual, controls); }) == ErrorKind::Data);
    const auto no_ctrl = rows_of({{"B", "control", {1, 1, 1, 1}}});
    CHECK(kind_of([&] { evaluate(actual, actual, no_ctrl); }) == ErrorKind::Data);
}

TEST_CASE("aggregates use present values only") {
    ConditionMetrics a, b, c;
    a.r2_all = 0.1;
    b.r2_all = 0.5;
    c.r2_all = 0.9;
    a.r2_deg = 0.2;
    c.r2_deg = 0.4;
    const auto r = summarize({a, b, c});
    CHECK(r.aggregates.at("r2_all").median == 0.5);
    CHECK(r.aggregates.at("r2_all").mean == doctest::Approx(0.5));
    CHECK(r.aggregates.at("r2_deg").count == 2);
    CHECK(r.aggregates.at("r2_deg").median == doctest::Approx(0.3));
    CHECK(r.aggregates.at("ev_deg").count == 0);
}

}  // TEST_SUITE
