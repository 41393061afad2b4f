#include <doctest.h>

#include <functional>
#include <sstream>

#include "logicforge/dag_repair.hpp"
#include "logicforge/errors.hpp"
#include "logicforge/rng.hpp"
#include "../support/oracles.hpp"

using namespace logicforge;

TEST_CASE("structural rules") {
    const std::vector<int> pis{0}, pos{3};
    ProbabilityMatrix all(4, 0.4);
    for (const auto& row : apply_structural_rules(all, pis, pos))
        for (auto x : row) CHECK(x == 0);

    ProbabilityMatrix p(4, 0.9);
    auto a = apply_structural_rules(p, pis, pos);
    for (int i = 0; i < 4; ++i) {
        CHECK(a[i][i] == 0);
        CHECK(a[3][i] == 0);
        CHECK(a[i][0] == 0);
    }
    CHECK(a[1][2] == 1);
    ProbabilityMatrix edge(4, 0.5);
    CHECK(apply_structural_rules(edge, pis, pos)[1][2] == 0);
}

TEST_CASE("detect_cycle returns a real cycle or nothing") {
    BinaryMatrix tri{{0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
    auto c = detect_cycle(tri);
    REQUIRE(c.size() == 3);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(tri[c[i]][c[(i + 1) % c.size()]] == 1);

    BinaryMatrix chain{{0, 1, 0}, {0, 0, 1}, {0, 0, 0}};
    CHECK(detect_cycle(chain).empty());

    BinaryMatrix two(6, std::vector<std::uint8_t>(6, 0));
    two[0][1] = two[1][0] = 1;
    two[3][4] = two[4][5] = two[5][3] = 1;
    auto d = detect_cycle(two);
    REQUIRE(!d.empty());
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(two[d[i]][d[(i + 1) % d.size()]] == 1);
}

TEST_CASE("dag_search hand traces") {
    const std::vector<int> none;
    ProbabilityMatrix p(2);
    p(0, 1) = 0.9;
    p(1, 0) = 0.7;
    auto r = dag_search(p, none, none);
    REQUIRE(r.removed_edges.size() == 1);
    CHECK(r.removed_edges[0].src == 1);
    CHECK(r.removed_edges[0].dst == 0);
    CHECK(r.adjacency[0][1] == 1);

    ProbabilityMatrix t(3);
    t(0, 1) = 0.9;
    t(1, 2) = 0.8;
    t(2, 0) = 0.6;
    auto rt = dag_search(t, none, none);
    REQUIRE(rt.removed_edges.size() == 1);
    CHECK(rt.removed_edges[0].src == 2);
    CHECK(rt.removed_edges[0].dst == 0);
    CHECK(rt.removed_edges[0].probability == 0.6);

    ProbabilityMatrix dag(3);
    dag(0, 1) = 0.9;
    dag(1, 2) = 0.9;
    auto rd = dag_search(dag, none, none);
    CHECK(rd.removed_edges.empty());
    CHECK(rd.adjacency == apply_structural_rules(dag, none, none));
}

TEST_CASE("masked probabilities are elementwise") {
    Rng rng(3);
    ProbabilityMatrix p(5);
    BinaryMatrix m(5, std::vector<std::uint8_t>(5));
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            p(i, j) = uniform01(rng);
            m[i][j] = rng() & 1U;
        }
    auto q = masked_probabilities(m, p);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(q(i, j) == (m[i][j] ? p(i, j) : 0.0));
    CHECK_THROWS_AS(masked_probabilities(BinaryMatrix(4, std::vector<std::uint8_t>(4)), p), ShapeError);
}

namespace {

// path dst -> src using only edges with probability >= floor
bool returns_above(const BinaryMatrix& g, const ProbabilityMatrix& p, int src, int dst, double floor) {
    const int n = static_cast<int>(g.size());
    std::vector<int> stack{dst};
    std::vector<bool> seen(n, false);
    seen[dst] = true;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        if (u == src) return true;
        for (int v = 0; v < n; ++v)
            if (g[u][v] && !seen[v] && p(u, v) >= floor) {
                seen[v] = true;
                stack.push_back(v);
            }
    }
    return false;
}

struct Envelope {
    double kept = 0.0, best = 0.0, largest_removed = 0.0;
};

Envelope envelope(const ProbabilityMatrix& p, const RepairResult& r) {
    const int n = p.size();
    const std::vector<int> none;
    const auto base = apply_structural_rules(p, none, none);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (base[i][j]) edges.push_back({i, j});
    Envelope e;
    for (std::uint32_t mask = 0; mask < (1U << edges.size()); ++mask) {
        BinaryMatrix sub(n, std::vector<std::uint8_t>(n, 0));
        double sum = 0.0;
        for (std::size_t k = 0; k < edges.size(); ++k)
            if (mask >> k & 1U) {
                sub[edges[k].first][edges[k].second] = 1;
                sum += p(edges[k].first, edges[k].second);
            }
        if (sum > e.best && oracle::acyclic(sub)) e.best = sum;
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (r.adjacency[i][j]) e.kept += p(i, j);
    for (const auto& x : r.removed_edges) e.largest_removed = std::max(e.largest_removed, x.probability);
    return e;
}

std::vector<ProbabilityMatrix> small_matrices() {
    Rng rng(21);
    const double levels[] = {0.6, 0.7, 0.8, 0.9};
    std::vector<ProbabilityMatrix> out;
    for (int t = 0; t < 150; ++t) {
        const int n = 3 + t % 3;
        ProbabilityMatrix p(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j && (rng() % 3)) p(i, j) = levels[rng() % 4];
        out.push_back(p);
    }
    return out;
}

} // namespace

TEST_CASE("greedy repair removes only cycle-minimum edges and never beats the optimum") {
    const std::vector<int> none;
    for (const auto& p : small_matrices()) {
        auto r = dag_search(p, none, none);
        REQUIRE(oracle::acyclic(r.adjacency));
        BinaryMatrix g = apply_structural_rules(p, none, none);
        for (const auto& e : r.removed_edges) {
            REQUIRE(g[e.src][e.dst] == 1);
            CHECK(returns_above(g, p, e.src, e.dst, e.probability));
            g[e.src][e.dst] = 0;
        }
        CHECK(g == r.adjacency);
        const Envelope env = envelope(p, r);
        CHECK(env.kept <= env.best + 1e-12);
    }
}

TEST_CASE("greedy loss can exceed one removed edge") {
    // a->b shared by three cycles whose other edges are cheaper
    ProbabilityMatrix p(5);
    p(0, 1) = 0.7;
    for (int x = 2; x < 5; ++x) {
        p(1, x) = 0.6;
        p(x, 0) = 0.9;
    }
    auto r = dag_search(p, std::vector<int>{}, std::vector<int>{});
    CHECK(r.removed_edges.size() == 3);
    for (const auto& e : r.removed_edges) CHECK(e.probability == 0.6);
    const Envelope env = envelope(p, r);
    CHECK(env.best == doctest::Approx(0.6 * 3 + 0.9 * 3));
    CHECK(env.kept == doctest::Approx(0.7 + 0.9 * 3));
    CHECK(env.best - env.kept > env.largest_removed);
}

TEST_CASE("retained mass envelope") {
    const std::vector<int> none;
    int outside = 0, total = 0;
    for (const auto& p : small_matrices()) {
        const Envelope env = envelope(p, dag_search(p, none, none));
        ++total;
        if (env.kept < env.best - env.largest_removed - 1e-12) ++outside;
    }
    INFO("matrices below optimum minus largest removed edge: " << outside << "/" << total);
    CHECK(outside == 0);
}

TEST_CASE("pmatrix text round trip with kinds") {
    ProbabilityMatrix p(3);
    p(0, 1) = 0.25;
    p(1, 2) = 0.75;
    const std::vector<NodeKind> kinds{NodeKind::PI, NodeKind::NAND, NodeKind::PO};
    std::stringstream ss;
    write_probability_matrix(ss, p, kinds);
    auto back = read_probability_matrix(ss);
    CHECK(back.probs == p);
    CHECK(back.kinds == kinds);
    std::stringstream bad("pmatrix 2\n0,1.5\n0,0\n");
    CHECK_THROWS(read_probability_matrix(bad));
}
