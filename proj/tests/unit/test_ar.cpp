#include <doctest.h>

#include <cmath>
#include <numeric>

#include "logicforge/ar.hpp"
#include "logicforge/dag_repair.hpp"
#include "../support/oracles.hpp"

using namespace logicforge;

TEST_CASE("cosine schedule") {
    CHECK(gamma_schedule(0.0) == 1.0);
    CHECK(gamma_schedule(1.0) == doctest::Approx(0.0));
    CHECK(gamma_schedule(0.5) == doctest::Approx(std::sqrt(2.0) / 2));
    CHECK_THROWS(gamma_schedule(1.5));
    CHECK(schedule_count(0.0, 10) == 10);
    CHECK(schedule_count(1.0, 10) == 0);
    CHECK(schedule_count(0.5, 10) == 8);
}

TEST_CASE("sample_mask masks the scheduled count") {
    Rng rng(1);
    TokenSeq t(10);
    std::iota(t.begin(), t.end(), 0);
    CHECK(sample_mask(t, 0.0, rng).positions.size() == 10);
    CHECK(sample_mask(t, 1.0, rng).positions.empty());
    auto m = sample_mask(t, 0.5, rng);
    CHECK(m.positions.size() == 8);
    for (int p : m.positions) CHECK(m.masked[p] == kMask);
    CHECK(std::count(m.masked.begin(), m.masked.end(), kMask) == 8);
    TokenSeq bad{1, kMask};
    CHECK_THROWS(sample_mask(bad, 0.5, rng));
}

TEST_CASE("ar_loss") {
    TokenSeq orig{0, 1, 2};
    std::vector<std::vector<double>> perfect{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    CHECK(ar_loss(perfect, orig, {0, 1, 2}) == 0.0);
    std::vector<std::vector<double>> uni(3, std::vector<double>(3, 1.0 / 3));
    CHECK(ar_loss(uni, orig, {0, 2}) == doctest::Approx(2 * std::log(3.0)));
    std::vector<std::vector<double>> hand{{0.5, 0.3, 0.2}, {0.1, 0.6, 0.3}, {0.25, 0.25, 0.5}};
    CHECK(ar_loss(hand, orig, {0, 1, 2}) == doctest::Approx(-std::log(0.5) - std::log(0.6) - std::log(0.5)));
    CHECK(ar_loss(hand, orig, {0}) + ar_loss(hand, orig, {1, 2}) == doctest::Approx(ar_loss(hand, orig, {0, 1, 2})));
    int clamped = 0;
    std::vector<std::vector<double>> zero{{0, 1, 0}};
    CHECK(ar_loss(zero, TokenSeq{0}, {0}, &clamped) == doctest::Approx(-std::log(kArProbClamp)));
    CHECK(clamped == 1);
}

TEST_CASE("decode schedule trace for N=8, T=4") {
    Rng rng(2);
    TokenSeq target{3, 1, 4, 1, 5, 9, 2, 6};
    OraclePredictor oracle_pred(target, 10);
    Condition cond = Condition::from_truth_table(oracle::xor2());
    auto r = decode(oracle_pred, 8, 4, cond, rng);
    CHECK(r.tokens == target);
    CHECK(r.predictor_calls == 4);
    std::vector<int> remaining;
    for (const auto& it : r.trace) remaining.push_back(it.remaining_masked);
    // ceil(cos(pi/8) 8) = 8, ceil(cos(pi/4) 8) = 6, ceil(cos(3pi/8) 8) = 4, then 0
    CHECK(remaining == std::vector<int>{8, 6, 4, 0});
    auto one = decode(oracle_pred, 8, 1, cond, rng);
    CHECK(one.trace.size() == 1);
    CHECK(one.tokens == target);
}

TEST_CASE("decode rejects malformed distributions") {
    struct Bad : TokenPredictor {
        int vocab_size() const override { return 3; }
        std::vector<std::vector<double>> predict(const TokenSeq& m, const Condition&) override {
            return std::vector<std::vector<double>>(m.size(), std::vector<double>{0.5, 0.5, 0.5});
        }
    } bad;
    Rng rng(3);
    CHECK_THROWS(decode(bad, 4, 2, Condition::from_truth_table(oracle::xor2()), rng));
}

TEST_CASE("transformer predictor returns distributions and is seeded") {
    ArConfig cfg;
    cfg.vocab = 12;
    cfg.model_dim = 16;
    cfg.blocks = 1;
    cfg.max_pis = 3;
    cfg.steps = 0;
    TransformerPredictor a(cfg), b(cfg);
    Condition cond = Condition::from_truth_table(oracle::maj3());
    TokenSeq masked{1, kMask, 3, kMask};
    auto pa = a.predict(masked, cond), pb = b.predict(masked, cond);
    CHECK(pa == pb);
    for (const auto& row : pa) {
        CHECK(row.size() == 12);
        CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    }
    std::vector<ArSample> corpus{{TokenSeq{1, 2, 3, 4}, cond}};
    const std::string before = a.params().to_json();
    train_ar(corpus, a);
    CHECK(a.params().to_json() == before);
}

TEST_CASE("training is deterministic") {
    ArConfig cfg;
    cfg.vocab = 8;
    cfg.model_dim = 16;
    cfg.blocks = 1;
    cfg.max_pis = 2;
    cfg.steps = 30;
    cfg.batch_size = 2;
    Condition cond = Condition::from_truth_table(oracle::xor2());
    std::vector<ArSample> corpus{{TokenSeq{1, 2, 3, 4, 5}, cond}, {TokenSeq{7, 6, 5}, cond}};
    TransformerPredictor a(cfg), b(cfg);
    std::vector<double> la, lb;
    train_ar(corpus, a, nullptr, [&](const ArMetrics& m) { la.push_back(m.loss); }, 5);
    train_ar(corpus, b, nullptr, [&](const ArMetrics& m) { lb.push_back(m.loss); }, 5);
    CHECK(la == lb);
    CHECK(!la.empty());
}

TEST_CASE("generate_structure feeds a valid repair") {
    VqConfig vc;
    vc.codebook_size = 8;
    vc.model_dim = 16;
    VqModel vq(vc);
    ArConfig cfg;
    cfg.vocab = 8;
    cfg.model_dim = 16;
    cfg.blocks = 1;
    cfg.max_pis = 3;
    cfg.vq_hash = vc.hash();
    TransformerPredictor pred(cfg);
    Condition cond = Condition::from_truth_table(oracle::full_adder());
    const int n = default_node_budget(cond);
    CHECK(n == 20);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng r1(seed), r2(seed);
        auto p = generate_structure(pred, vq, cond, n, 4, r1);
        if (seed < 3) CHECK(p == generate_structure(pred, vq, cond, n, 4, r2));
        auto kinds = generation_kinds(n, cond);
        std::vector<int> pis, pos;
        for (int i = 0; i < n; ++i) {
            if (kinds[i] == NodeKind::PI) pis.push_back(i);
            if (kinds[i] == NodeKind::PO) pos.push_back(i);
        }
        auto rep = dag_search(p, pis, pos);
        CHECK(oracle::acyclic(rep.adjacency));
    }
}

TEST_CASE("checkpoint round trip and config hash") {
    ArConfig cfg;
    cfg.vocab = 8;
    cfg.model_dim = 16;
    cfg.blocks = 1;
    TransformerPredictor p(cfg);
    const auto path = std::filesystem::temp_directory_path() / "logicforge-unit-ar.ckpt";
    save_ar_checkpoint(path, p, ArTrainState{3, 3});
    ArTrainState st;
    auto back = load_ar_checkpoint(path, &st);
    CHECK(st.step == 3);
    CHECK(back.params().to_json() == p.params().to_json());
    CHECK(ArConfig::from_json(cfg.to_json()).hash() == cfg.hash());
    std::filesystem::remove(path);
}
