#include <doctest.h>

#include <sstream>

#include "logicforge/errors.hpp"
#include "logicforge/pipeline.hpp"
#include "../support/oracles.hpp"

using namespace logicforge;

namespace {

RunRecord rec(const std::string& bench, const std::string& method, int steps, int nands, int space,
              const std::string& err = "") {
    RunRecord r;
    r.benchmark = bench;
    r.method = method;
    r.report.steps_used = steps;
    r.report.used_nand_count = nands;
    r.report.search_space_gate_count = space;
    r.error = err;
    return r;
}

} // namespace

TEST_CASE("manifest parsing") {
    std::stringstream in("name,category,num_pi,num_po,truth_path\n"
                         "ex00, random, 6, 1\n"
                         "adder,arithmetic,3,2,tables/adder.txt\n");
    auto m = parse_manifest(in, "/data");
    REQUIRE(m.size() == 2);
    CHECK(m[0].name == "ex00");
    CHECK(m[0].category == BenchCategory::Random);
    CHECK(m[0].num_pis == 6);
    CHECK(m[0].truth_path.empty());
    CHECK(m[1].truth_path == std::filesystem::path("/data/tables/adder.txt"));

    std::stringstream bad_cat("name,category,num_pi,num_po,truth_path\nx,weird,1,1,\n");
    CHECK_THROWS_AS(parse_manifest(bad_cat), ParseError);
    std::stringstream bad_count("name,category,num_pi,num_po,truth_path\nx,basic,one,1,\n");
    CHECK_THROWS_AS(parse_manifest(bad_count), ParseError);
    std::stringstream bad_header("a,b\n");
    CHECK_THROWS_AS(parse_manifest(bad_header), ParseError);
}

TEST_CASE("widths") {
    CHECK(default_hidden_widths(3, 2) == std::vector<int>{10, 10, 10, 10});
    CHECK(parse_widths("4,2,1") == std::vector<int>{4, 2, 1});
    CHECK_THROWS(parse_widths("4,0"));
    CHECK_THROWS(parse_widths("a"));
}

TEST_CASE("summaries average per method and skip failed runs") {
    std::vector<RunRecord> rs{rec("a", "uniform-das", 100, 10, 20), rec("a", "uniform-das", 300, 10, 20),
                              rec("a", "prior-das", 50, 5, 10), rec("a", "prior-das", 0, 0, 0, "boom"),
                              rec("b", "uniform-das", 1000, 8, 8), rec("b", "prior-das", 1000, 8, 8)};
    auto s = summarize(rs);
    REQUIRE(s.benchmarks.size() == 2);
    const auto& a = s.benchmarks[0];
    CHECK(a.uniform->mean_steps == 200.0);
    CHECK(a.prior->failures == 1);
    CHECK(a.prior->mean_steps == 50.0);
    CHECK(*a.steps_improvement == doctest::Approx(75.0));
    CHECK(*s.benchmarks[1].steps_improvement == 0.0);
    CHECK(*s.mean_steps_improvement == doctest::Approx(37.5));
    CHECK(*s.steps_improvement_of_means == doctest::Approx((1 - 1050.0 / 1200.0) * 100));
    CHECK_THROWS(summarize({rec("a", "other", 1, 1, 1)}));
    auto only = summarize({rec("c", "uniform-das", 1, 1, 1)});
    CHECK(!only.benchmarks[0].steps_improvement);
}

TEST_CASE("prepare_prior repairs and layers") {
    ProbabilityMatrix p(5);
    // 0,1 PIs; 2,3 NANDs with a cycle; 4 PO
    p(0, 2) = 0.9;
    p(1, 2) = 0.9;
    p(2, 3) = 0.8;
    p(3, 2) = 0.6;
    p(0, 3) = 0.7;
    p(3, 4) = 0.9;
    auto ps = prepare_prior(p, {}, 2, 1);
    CHECK(oracle::acyclic(ps.repair.adjacency));
    CHECK(ps.layering.widths() == std::vector<int>{2, 1, 1, 1});
    CHECK_THROWS_AS(prepare_prior(p, {NodeKind::PI, NodeKind::NAND, NodeKind::NAND, NodeKind::NAND, NodeKind::PO}, 2, 1),
                    ShapeError);
}

TEST_CASE("oracle prior keeps entries in the layering envelope") {
    Circuit c({NodeKind::PI, NodeKind::PI, NodeKind::NAND, NodeKind::NAND, NodeKind::NAND, NodeKind::NAND,
               NodeKind::PO},
              std::vector<Edge>{{0, 2}, {1, 2}, {0, 3}, {2, 3}, {1, 4}, {2, 4}, {3, 5}, {4, 5}, {5, 6}});
    Rng rng(1);
    auto zero = oracle_prior(c, 0.0, rng);
    const auto adj = c.adjacency_matrix();
    for (int i = 0; i < c.size(); ++i)
        for (int j = 0; j < c.size(); ++j) CHECK(zero(i, j) == (adj[i][j] ? 1.0 : 0.0));
    auto flipped = oracle_prior(c, 1.0, rng);
    const Layering l = layerize(c);
    for (int i = 0; i < c.size(); ++i)
        for (int j = 0; j < c.size(); ++j) {
            const bool cand = l.layer_of[i] < l.layer_of[j] && c.kind(i) != NodeKind::PO && c.kind(j) != NodeKind::PI;
            CHECK(flipped(i, j) == (cand ? (adj[i][j] ? 0.0 : 1.0) : 0.0));
        }
}

TEST_CASE("run_das on XOR writes a verified circuit") {
    DasConfig cfg;
    auto out = run_das(uniform_net(2, {4, 4, 4}, 1, cfg), oracle::xor2(), cfg, nullptr, "xor", "uniform-das");
    CHECK(out.record.report.converged);
    CHECK(oracle::matches(out.circuit, oracle::xor2()));
    const auto path = std::filesystem::temp_directory_path() / "logicforge-unit-xor.txt";
    write_verified_circuit(path, out.circuit, oracle::xor2());
    CHECK(std::filesystem::exists(path));
    std::filesystem::remove(path);
    CHECK_THROWS(write_verified_circuit(path, out.circuit, oracle::maj3()));
    CHECK(!std::filesystem::exists(path));
    CHECK(std::string(RunRecord::csv_header()).find("steps") != std::string::npos);
}
