// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "xtcdr/data/dataset.hpp"
#include "xtcdr/data/split.hpp"

using namespace xtcdr;
using namespace xtcdr::data;

namespace {

// `drugs` perturbations named d0.., `cells` rows each, plus `controls`
// control rows, for every cell line.
ExpressionDataset toy(std::size_t drugs, std::size_t cells, std::vector<std::string> lines = {"L1"},
                      std::size_t controls = 2) {
    ExpressionDataset ds({"g1", "g2"});
    float v = 0;
    for (const auto& line : lines) {
        for (std::size_t c = 0; c < controls; ++c, v += 1)
            ds.add_row({line + ":ctrl:" + std::to_string(c), line, kControlLabel, 0.0}, std::vector<float>{v, -v});
        for (std::size_t d = 0; d < drugs; ++d)
            for (std::size_t c = 0; c < cells; ++c, v += 1)
                ds.add_row({line + ":d" + std::to_string(d) + ":" + std::to_string(c), line, "d" + std::to_string(d),
                            1.0},
                           std::vector<float>{v, 0.5f * v});
    }
    return ds;
}

std::vector<std::size_t> all_rows(const ExpressionDataset& ds) {
    std::vector<std::size_t> r(ds.row_count());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
    return r;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error raised");
    return ErrorKind::Usage;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("parse a small table") {
    std::istringstream in(
        "cell_id\tcell_line\tperturbation\tdose\tg1\tg2\n"
        "c1\tA\tcontrol\t0\t1\t2\n"
        "c2\tA\tdrugX\t10\t3\t4.5\n"
        "c3\tB\tcontrol\t0\t0\t1e-3\n");
    const auto ds = parse_dataset(in, "mem");
    CHECK(ds.gene_count() == 2);
    CHECK(ds.row_count() == 3);
    CHECK(ds.meta(1).perturbation == "drugX");
    CHECK(ds.meta(1).dose == 10.0);
    CHECK(ds.meta(0).is_control());
    CHECK(ds.values(1)[1] == 4.5f);
    CHECK(ds.cell_lines() == std::vector<std::string>{"A", "B"});
    CHECK(ds.perturbations() == std::vector<std::string>{"drugX"});
}

TEST_CASE("parse errors name the line") {
    std::istringstream short_row(
        "cell_id\tcell_line\tperturbation\tdose\tg1\tg2\n"
        "c1\tA\tcontrol\t0\t1\t2\n"
        "c2\tA\tdrugX\t1\t3\n");
    try {
        parse_dataset(short_row, "short.tsv");
        FAIL("short row accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        CHECK(std::string(e.what()).find("short.tsv:3") != std::string::npos);
    }
    std::istringstream bad_value("cell_id\tcell_line\tperturbation\tdose\tg1\nc1\tA\tcontrol\t0\tabc\n");
    CHECK(kind_of([&] { parse_dataset(bad_value, "x"); }) == ErrorKind::Parse);
    std::istringstream bad_header("id\tcell_line\tperturbation\tdose\tg1\n");
    CHECK(kind_of([&] { parse_dataset(bad_header, "x"); }) == ErrorKind::Parse);
    std::istringstream dup("cell_id\tcell_line\tperturbation\tdose\tg1\tg1\n");
    CHECK(kind_of([&] { parse_dataset(dup, "x"); }) == ErrorKind::Schema);
    CHECK(kind_of([] { load_dataset("/nonexistent/file.tsv"); }) == ErrorKind::Io);
}

TEST_CASE("log1p at load") {
    std::istringstream in("cell_id\tcell_line\tperturbation\tdose\tg1\nc1\tA\tcontrol\t0\t3\n");
    const auto ds = parse_dataset(in, "mem", {true});
    CHECK(ds.values(0)[0] == doctest::Approx(std::log1p(3.0)));
}

TEST_CASE("save and load round trip") {
    test::TempDir dir("tsv");
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0, 10);
    ExpressionDataset ds({"a", "b", "c"});
    for (int r = 0; r < 20; ++r)
        ds.add_row({"c" + std::to_string(r), r % 2 ? "X" : "Y", r % 3 ? "p" : "control", r * 0.1},
                   std::vector<float>{n(rng), n(rng) * 1e-6f, n(rng) * 1e6f});
    save_dataset(ds, dir / "d.tsv");
    const auto back = load_dataset(dir / "d.tsv");
    CHECK(back == ds);
    CHECK(dataset_digest(back) == dataset_digest(ds));
    CHECK_FALSE(std::filesystem::exists(dir / "d.tsv.tmp"));
}

TEST_CASE("profiles and filters") {
    ExpressionDataset ds({"g1", "g2"});
    ds.add_row({"a", "L", kControlLabel, 0}, std::vector<float>{1, 2});
    ds.add_row({"b", "L", kControlLabel, 0}, std::vector<float>{3, 4});
    ds.add_row({"c", "M", kControlLabel, 0}, std::vector<float>{5, 6});
    ds.add_row({"d", "L", "p", 10.0}, std::vector<float>{0, 2});
    ds.add_row({"e", "L", "p", 1.0}, std::vector<float>{2, 0});
    CHECK(control_profile(ds, "L") == std::vector<float>{2, 3});
    CHECK(control_profile(ds, "M") == std::vector<float>{5, 6});
    CHECK(kind_of([&] { control_profile(ds, "Z"); }) == ErrorKind::Data);
    CHECK(mean_profile(ds, {3, 4}) == std::vector<float>{1, 1});
    CHECK(mean_profile(ds, {4, 3}) == mean_profile(ds, {3, 4}));
    CHECK(mean_profile(ds, {3}) == std::vector<float>{0, 2});
    const auto f = filter_dose(ds, 10.0);
    CHECK(f.row_count() == 4);
    CHECK(f.rows_where("p").size() == 1);
    CHECK(combo_label("b", "a") == "a+b");
    CHECK(kind_of([&] { ds.add_row({"x", "L", "p", 0}, std::vector<float>{1}); }) == ErrorKind::Shape);
}

TEST_CASE("drug-level split by ratio") {
    const auto ds = toy(10, 3);
    const auto s = drug_level_split(ds, {0.8, 0.1, 0.1}, 4);
    std::map<Split, int> counts;
    for (const auto& [d, sp] : s.drug_assignment) ++counts[sp];
    CHECK(counts[Split::Train] == 8);
    CHECK(counts[Split::Val] == 1);
    CHECK(counts[Split::Test] == 1);
    for (auto sp : {Split::Train, Split::Val, Split::Test}) {
        std::size_t controls = 0;
        for (auto r : s.rows(sp)) {
            if (ds.meta(r).is_control())
                ++controls;
            else
                CHECK(s.drug_assignment.at(ds.meta(r).perturbation) == sp);
        }
        CHECK(controls == 2);
    }
    const auto again = drug_level_split(ds, {0.8, 0.1, 0.1}, 4);
    CHECK(again.drug_assignment == s.drug_assignment);
    CHECK(again.train == s.train);
    CHECK(kind_of([&] { drug_level_split(ds, {0.5, 0.1, 0.1}, 0); }) == ErrorKind::Config);
}

TEST_CASE("holdout split") {
    const auto ds = toy(24, 1);
    const std::vector<std::string> held = {"d3", "d7", "d11", "d0"};
    const auto s = holdout_split(ds, held, 0.2, 1);
    std::set<std::string> test, val;
    for (const auto& [d, sp] : s.drug_assignment) {
        if (sp == Split::Test) test.insert(d);
        if (sp == Split::Val) val.insert(d);
    }
    CHECK(test == std::set<std::string>(held.begin(), held.end()));
    CHECK(val.size() == 4);
    CHECK(kind_of([&] { holdout_split(ds, {}, 0.2, 1); }) == ErrorKind::Config);
    CHECK(kind_of([&] { holdout_split(ds, {"nope"}, 0.2, 1); }) == ErrorKind::Config);

    const auto big = toy(188, 1);
    std::vector<std::string> nine;
    for (int i = 0; i < 9; ++i) nine.push_back("d" + std::to_string(i * 20));
    const auto s9 = holdout_split(big, nine, 0.1, 2);
    std::size_t n_test = 0;
    for (const auto& [d, sp] : s9.drug_assignment) n_test += sp == Split::Test;
    CHECK(n_test == 9);
}

TEST_CASE("pairing drops the longer side's excess") {
    // d0 has 2 rows, d1 has 3: one drug per group.
    ExpressionDataset ds({"g"});
    ds.add_row({"c", "L", kControlLabel, 0}, std::vector<float>{0});
    for (int i = 0; i < 2; ++i) ds.add_row({"a" + std::to_string(i), "L", "d0", 1}, std::vector<float>{1});
    for (int i = 0; i < 3; ++i) ds.add_row({"b" + std::to_string(i), "L", "d1", 1}, std::vector<float>{2});
    const auto p = build_pairs(ds, all_rows(ds), 5);
    CHECK(p.pairs.size() == 2);
    for (const auto& s : p.pairs) {
        CHECK(s.pert_a != s.pert_b);
        CHECK(s.x_control == std::vector<float>{0});
    }
    const auto [a, b] = p.group_sizes.at("L");
    CHECK(p.pairs.size() == std::min(a, b));
}

TEST_CASE("pairs join the two drug groups and are reproducible") {
    const auto ds = toy(4, 5, {"L1", "L2"});
    const auto p = build_pairs(ds, all_rows(ds), 9);
    REQUIRE(p.pairs.size() == 20);
    std::map<std::string, std::set<std::string>> side_a, side_b;
    for (const auto& s : p.pairs) {
        side_a[s.cell_line].insert(s.pert_a);
        side_b[s.cell_line].insert(s.pert_b);
        CHECK(s.x_control == control_profile(ds, s.cell_line));
    }
    for (const auto& line : {"L1", "L2"}) {
        CHECK(side_a[line].size() == 2);
        CHECK(side_b[line].size() == 2);
        for (const auto& d : side_a[line]) CHECK_FALSE(side_b[line].contains(d));
    }
    const auto q = build_pairs(ds, all_rows(ds), 9);
    for (std::size_t i = 0; i < p.pairs.size(); ++i) {
        CHECK(p.pairs[i].x_a == q.pairs[i].x_a);
        CHECK(p.pairs[i].x_b == q.pairs[i].x_b);
    }
}

TEST_CASE("cell lines with a single drug are skipped") {
    const auto ds = toy(1, 3);
    const auto p = build_pairs(ds, all_rows(ds), 0);
    CHECK(p.pairs.empty());
    CHECK(p.skipped_cell_lines == std::vector<std::string>{"L1"});
}

TEST_CASE("batching") {
    const auto b = batch_pairs(10, 4, 1, 1);
    REQUIRE(b.size() == 3);
    CHECK(b[0].size() == 4);
    CHECK(b[1].size() == 4);
    CHECK(b[2].size() == 2);
    const auto m = batch_pairs(9, 8, 1, 1);
    REQUIRE(m.size() == 1);
    CHECK(m[0].size() == 9);

    const auto e2 = batch_pairs(10, 4, 1, 2);
    std::vector<std::size_t> flat1, flat2;
    for (const auto& x : b) flat1.insert(flat1.end(), x.begin(), x.end());
    for (const auto& x : e2) flat2.insert(flat2.end(), x.begin(), x.end());
    CHECK(flat1 != flat2);
    std::sort(flat1.begin(), flat1.end());
    std::sort(flat2.begin(), flat2.end());
    CHECK(flat1 == flat2);
    CHECK(batch_pairs(10, 4, 1, 1) == b);
}

}  // TEST_SUITE
