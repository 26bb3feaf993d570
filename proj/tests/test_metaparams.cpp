#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "himnet/embeddings.hpp"
#include "himnet/metaparams.hpp"
#include "oracles.hpp"

using namespace himnet;

namespace {

Tensor random_param(Rng& rng, Shape shape) {
    std::vector<double> v(shape_numel(shape));
    rng.fill_uniform(v, -1.0, 1.0);
    return Tensor::param(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("generate: one-hot recovery, zero query, hand example") {
    MetaParamPool pool;
    pool.k = 3;
    pool.s = 2;
    pool.p = Tensor::param({3, 2}, {1, 0, 0, 1, 1, 1});

    Tensor onehot = Tensor::from_data({1, 3}, {0, 1, 0});
    Tensor row = generate(pool, onehot);
    CHECK(row.at({0, 0}) == 0.0);  // exact
    CHECK(row.at({0, 1}) == 1.0);

    Tensor zero = generate(pool, Tensor::zeros({2, 3}));
    for (double v : zero.data()) CHECK(v == 0.0);

    Tensor q = Tensor::from_data({1, 3}, {0.5, 0.25, 0.25});
    Tensor out = generate(pool, q);
    CHECK(out.at({0, 0}) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(out.at({0, 1}) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(generate(pool, Tensor::zeros({1, 4})), ShapeError);
}

TEST_CASE("generate matches the dot-product oracle on random instances") {
    Rng rng(21);
    for (int it = 0; it < 120; ++it) {
        long k = 1 + rng.index(5), s = 1 + rng.index(6), rows = 1 + rng.index(4);
        MetaParamPool pool{random_param(rng, {k, s}), k, s};
        Tensor q = random_param(rng, {rows, k});
        Tensor out = generate(pool, q);
        oracle::Vec expect = oracle::generate(pool.p.data(), k, s, q.data(), rows);
        for (long i = 0; i < rows * s; ++i)
            CHECK(out.data()[i] == doctest::Approx(expect[i]).epsilon(1e-9));
    }
}

TEST_CASE("generate is linear in the query") {
    Rng rng(23);
    for (int it = 0; it < 50; ++it) {
        long k = 2 + rng.index(4), s = 1 + rng.index(5);
        MetaParamPool pool{random_param(rng, {k, s}), k, s};
        Tensor q1 = random_param(rng, {2, k});
        Tensor q2 = random_param(rng, {2, k});
        double a = rng.uniform_in(-2, 2), b = rng.uniform_in(-2, 2);
        std::vector<double> mix(2 * k);
        for (long i = 0; i < 2 * k; ++i) mix[i] = a * q1.data()[i] + b * q2.data()[i];
        Tensor lhs = generate(pool, Tensor::from_data({2, k}, mix));
        Tensor g1 = generate(pool, q1);
        Tensor g2 = generate(pool, q2);
        for (long i = 0; i < 2 * s; ++i) {
            double rhs = a * g1.data()[i] + b * g2.data()[i];
            double denom = std::max(1.0, std::abs(rhs));
            CHECK(std::abs(lhs.data()[i] - rhs) / denom < 1e-6);
        }
    }
}

TEST_CASE("temporal, spatial, and st-mixed instantiations") {
    Rng rng(29);
    const long dt = 4, ds = 3, dst = 3, s = 5;
    MetaParamPool pool_t{random_param(rng, {dt, s}), dt, s};
    MetaParamPool pool_s{random_param(rng, {ds, s}), ds, s};
    MetaParamPool pool_st{random_param(rng, {dst, s}), dst, s};

    // one-hot row recovery through the temporal path
    std::vector<double> onehot(dt, 0.0);
    onehot[2] = 1.0;
    Tensor theta = generate_temporal(pool_t, Tensor::from_data({1, dt}, onehot));
    for (long j = 0; j < s; ++j) CHECK(theta.at({0, j}) == pool_t.p.at({2, j}));

    // identical batch rows produce identical parameter sets
    std::vector<double> row(dt);
    rng.fill_uniform(row, -1, 1);
    std::vector<double> both = row;
    both.insert(both.end(), row.begin(), row.end());
    Tensor two = generate_temporal(pool_t, Tensor::from_data({2, dt}, both));
    for (long j = 0; j < s; ++j) CHECK(two.at({0, j}) == two.at({1, j}));

    // random instances against the loop oracle
    for (int it = 0; it < 100; ++it) {
        Tensor e_t = random_param(rng, {2, dt});
        Tensor got = generate_temporal(pool_t, e_t);
        oracle::Vec want = oracle::generate(pool_t.p.data(), dt, s, e_t.data(), 2);
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(got.data()[i] == doctest::Approx(want[i]).epsilon(1e-9));

        Tensor e_s = random_param(rng, {4, ds});
        Tensor got_s = generate_spatial(pool_s, e_s);
        oracle::Vec want_s = oracle::generate(pool_s.p.data(), ds, s, e_s.data(), 4);
        for (size_t i = 0; i < want_s.size(); ++i)
            CHECK(got_s.data()[i] == doctest::Approx(want_s[i]).epsilon(1e-9));

        Tensor e_st = random_param(rng, {2, 3, dst});
        Tensor got_st = generate_st_mixed(pool_st, e_st);
        oracle::Vec want_st = oracle::generate(pool_st.p.data(), dst, s, e_st.data(), 6);
        for (size_t i = 0; i < want_st.size(); ++i)
            CHECK(got_st.data()[i] == doctest::Approx(want_st[i]).epsilon(1e-9));
    }

    CHECK_THROWS_AS(generate_temporal(pool_t, Tensor::zeros({2, 2, dt})), ShapeError);
    CHECK_THROWS_AS(generate_spatial(pool_s, Tensor::zeros({4, ds, 1})), ShapeError);
}

TEST_CASE("encode_st") {
    Rng rng(31);
    const long h = 3, d = 2;

    // constant map
    Tensor zero_w = Tensor::zeros({h, d});
    Tensor c = Tensor::from_data({d}, {1.5, -2.0});
    Tensor out = encode_st(random_param(rng, {2, 2, h}), zero_w, c);
    for (long i = 0; i < 2; ++i)
        for (long j = 0; j < 2; ++j) {
            CHECK(out.at({i, j, 0}) == 1.5);
            CHECK(out.at({i, j, 1}) == -2.0);
        }

    // identity map
    Tensor eye = Tensor::from_data({h, h}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor x = random_param(rng, {1, 2, h});
    Tensor id_out = encode_st(x, eye, Tensor::zeros({h}));
    CHECK(id_out.data() == x.data());

    // random instances vs oracle
    for (int it = 0; it < 100; ++it) {
        Tensor hin = random_param(rng, {1, 2, 3});
        Tensor w = random_param(rng, {3, 2});
        Tensor b = random_param(rng, {2});
        Tensor got = encode_st(hin, w, b);
        oracle::Vec want = oracle::encode_st(hin.data(), 2, 3, w.data(), 2, b.data());
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(got.data()[i] == doctest::Approx(want[i]).epsilon(1e-9));
    }

    CHECK_THROWS_AS(encode_st(x, eye, Tensor::zeros({h + 1})), ShapeError);
}

TEST_CASE("adaptive graphs") {
    // 2x2 identity embedding: softmax of [1, 0] per row
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor adj = adaptive_graph_static(eye);
    double e = std::exp(1.0);
    CHECK(adj.at({0, 0}) == doctest::Approx(e / (e + 1)).epsilon(1e-4));
    CHECK(adj.at({0, 1}) == doctest::Approx(1 / (e + 1)).epsilon(1e-4));

    // zero embedding degenerates to the uniform matrix
    Tensor uniform = adaptive_graph_static(Tensor::zeros({4, 3}));
    for (double v : uniform.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    Rng rng(37);
    for (int it = 0; it < 100; ++it) {
        long n = 2 + rng.index(4), d = 1 + rng.index(4);
        Tensor emb = random_param(rng, {n, d});
        Tensor a = adaptive_graph_static(emb);
        // row-stochastic
        for (long i = 0; i < n; ++i) {
            double sum = 0.0;
            for (long j = 0; j < n; ++j) {
                double v = a.at({i, j});
                CHECK(v > 0.0);
                CHECK(v <= 1.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-6);
        }
        // against the oracle
        oracle::Vec want = oracle::adaptive_graph(emb.data(), n, d);
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(a.data()[i] == doctest::Approx(want[i]).epsilon(1e-9));
    }

    SUBCASE("dynamic graph: batch-1 equivalence and per-sample rows") {
        Tensor e1 = random_param(rng, {3, 2});
        Tensor batched = adaptive_graph_dynamic(reshape(e1, {1, 3, 2}));
        Tensor flat = adaptive_graph_static(e1);
        CHECK(batched.data() == flat.data());

        Tensor e2 = random_param(rng, {2, 3, 2});
        Tensor a2 = adaptive_graph_dynamic(e2);
        for (long b = 0; b < 2; ++b)
            for (long i = 0; i < 3; ++i) {
                double sum = 0.0;
                for (long j = 0; j < 3; ++j) sum += a2.at({b, i, j});
                CHECK(std::abs(sum - 1.0) <= 1e-6);
            }
        // distinct samples with distinct embeddings give distinct graphs
        oracle::Vec s0 = oracle::adaptive_graph(
            oracle::Vec(e2.data().begin(), e2.data().begin() + 6), 3, 2);
        oracle::Vec s1 = oracle::adaptive_graph(
            oracle::Vec(e2.data().begin() + 6, e2.data().end()), 3, 2);
        CHECK(s0 != s1);
        for (long i = 0; i < 9; ++i) {
            CHECK(a2.data()[i] == doctest::Approx(s0[i]).epsilon(1e-9));
            CHECK(a2.data()[9 + i] == doctest::Approx(s1[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("pool parameter count depends on (k, S) only") {
    Rng rng(41);
    MetaParamPool pool = init_pool(16, 100, rng);
    CHECK(pool.p.numel() == 1600);
    // doubling a notional dataset length changes nothing about the pool
    MetaParamPool pool2 = init_pool(16, 100, rng);
    CHECK(pool2.p.numel() == pool.p.numel());
    double bound = 1.0 / std::sqrt(16.0);
    for (double v : pool.p.data()) CHECK(std::abs(v) <= bound);
    CHECK_THROWS_AS(init_pool(0, 10, rng), ConfigError);
}
