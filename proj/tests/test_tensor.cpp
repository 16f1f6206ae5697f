#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "perfgraph/gradcheck.hpp"
#include "perfgraph/optim.hpp"
#include "perfgraph/tensor.hpp"

using namespace perfgraph;
using namespace perfgraph::ad;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
    Matrix eye = Matrix::Identity(2, 2);
    Matrix a(2, 2);
    a << 1, 2, 3, 4;
    Tensor out = matmul(Tensor::constant(eye), Tensor::constant(a));
    REQUIRE((out.value() - a).cwiseAbs().maxCoeff() == 0.0);

    Matrix row(1, 2), col(2, 1);
    row << 1, 2;
    col << 3, 4;
    Tensor dot = matmul(Tensor::constant(row), Tensor::constant(col));
    REQUIRE(dot.value()(0, 0) == 11.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both shapes") {
    Tensor a = Tensor::zeros(2, 3);
    Tensor b = Tensor::zeros(2, 3);
    REQUIRE_THROWS_WITH(matmul(a, b),
                        Catch::Matchers::ContainsSubstring("2x3"));
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(31);
    Matrix b = random_matrix(3, 2, rng);
    auto f = [&](const Tensor& a) { return sum(matmul(a, Tensor::constant(b))); };
    REQUIRE(grad_check(f, random_matrix(4, 3, rng), 1e-5) < 1e-6);

    Matrix a = random_matrix(4, 3, rng);
    auto g = [&](const Tensor& t) { return sum(matmul(Tensor::constant(a), t)); };
    REQUIRE(grad_check(g, random_matrix(3, 2, rng), 1e-5) < 1e-6);
}

TEST_CASE("segment_mean examples") {
    Matrix x(2, 2);
    x << 1, 2, 3, 4;
    SegmentMap seg{{0, 1}, {0, 0}, 1};
    Tensor out = segment_mean(Tensor::constant(x), seg);
    REQUIRE(out.value()(0, 0) == 2.0);
    REQUIRE(out.value()(0, 1) == 3.0);

    // Singleton identity map.
    Matrix one(1, 3);
    one << 5, 6, 7;
    SegmentMap ident{{0}, {0}, 1};
    REQUIRE((segment_mean(Tensor::constant(one), ident).value() - one)
                .cwiseAbs()
                .maxCoeff() == 0.0);

    // Empty segment yields a zero row.
    SegmentMap gap{{0, 1}, {0, 0}, 2};
    Tensor with_gap = segment_mean(Tensor::constant(x), gap);
    REQUIRE(with_gap.value().row(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("segment_mean rejects out-of-range indices") {
    Tensor x = Tensor::zeros(2, 2);
    REQUIRE_THROWS_AS(segment_mean(x, SegmentMap{{0, 5}, {0, 0}, 1}), ShapeError);
    REQUIRE_THROWS_AS(segment_mean(x, SegmentMap{{0, 1}, {0, 3}, 1}), ShapeError);
}

TEST_CASE("segment_mean is invariant to member permutation within a segment") {
    Rng rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix x = random_matrix(8, 4, rng);
        SegmentMap seg;
        seg.num_segments = 3;
        for (int k = 0; k < 8; ++k) {
            seg.source_indices.push_back(k);
            seg.segment_ids.push_back(static_cast<int>(rng.below(3)));
        }
        Matrix base = segment_mean(Tensor::constant(x), seg).value();

        // Shuffle the (source, segment) pairs.
        SegmentMap shuffled = seg;
        for (size_t k = shuffled.source_indices.size(); k > 1; --k) {
            size_t j = static_cast<size_t>(rng.below(k));
            std::swap(shuffled.source_indices[k - 1], shuffled.source_indices[j]);
            std::swap(shuffled.segment_ids[k - 1], shuffled.segment_ids[j]);
        }
        Matrix perm = segment_mean(Tensor::constant(x), shuffled).value();
        REQUIRE((base - perm).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("segment_mean gradient matches finite differences") {
    Rng rng(77);
    SegmentMap seg{{0, 2, 1, 2, 3}, {0, 0, 1, 1, 1}, 3};
    Matrix w = random_matrix(3, 2, rng);
    auto f = [&](const Tensor& x) {
        return sum(mul(segment_mean(x, seg), Tensor::constant(w.replicate(1, 1))));
    };
    REQUIRE(grad_check(f, random_matrix(4, 2, rng), 1e-5) < 1e-6);
}

TEST_CASE("gelu values against the erf oracle") {
    auto phi = [](double v) { return 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))); };
    Matrix x(1, 3);
    x << 0.0, 1.0, -10.0;
    Matrix y = gelu(Tensor::constant(x)).value();
    REQUIRE(y(0, 0) == 0.0);
    REQUIRE(y(0, 1) == Catch::Approx(1.0 * phi(1.0)).epsilon(1e-14));
    REQUIRE(y(0, 1) == Catch::Approx(0.8413447460685429).epsilon(1e-14));
    // Deep negative tail: essentially zero but negative.
    REQUIRE(y(0, 2) == Catch::Approx(-7.619853016486503e-23).margin(1e-30));
    REQUIRE(y(0, 2) < 0.0);
}

TEST_CASE("gelu gradient matches finite differences") {
    Rng rng(13);
    auto f = [](const Tensor& x) { return sum(gelu(x)); };
    for (int trial = 0; trial < 5; ++trial)
        REQUIRE(grad_check(f, random_matrix(3, 3, rng, -3.0, 3.0), 1e-5) < 1e-6);
}

TEST_CASE("dropout identity cases") {
    Rng rng(1);
    Matrix x = random_matrix(4, 4, rng);
    Tensor t = Tensor::constant(x);
    REQUIRE((dropout(t, 0.0, true, rng).value() - x).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((dropout(t, 0.7, false, rng).value() - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dropout rejects rates outside [0,1)") {
    Rng rng(1);
    Tensor t = Tensor::zeros(1, 1);
    REQUIRE_THROWS_AS(dropout(t, 1.0, true, rng), ConfigError);
    REQUIRE_THROWS_AS(dropout(t, -0.1, true, rng), ConfigError);
}

TEST_CASE("dropout preserves expectation at rate 0.5") {
    Rng rng(2024);
    Matrix ones = Matrix::Ones(1000, 100);
    Matrix out = dropout(Tensor::constant(ones), 0.5, true, rng).value();
    double mean = out.sum() / static_cast<double>(out.size());
    REQUIRE(mean > 0.98);
    REQUIRE(mean < 1.02);
}

TEST_CASE("dropout masks are reproducible from the seed") {
    Matrix x = Matrix::Ones(16, 16);
    Rng r1(42), r2(42);
    Matrix a = dropout(Tensor::constant(x), 0.3, true, r1).value();
    Matrix b = dropout(Tensor::constant(x), 0.3, true, r2).value();
    REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("l1 loss hand cases") {
    Matrix p(2, 1), t(2, 1);
    p << 1, 3;
    t << 0, 0;
    Mask full{1, 1};
    REQUIRE(l1_loss(Tensor::constant(p), Tensor::constant(t), full).value()(0, 0) == 2.0);
    Mask half{1, 0};
    REQUIRE(l1_loss(Tensor::constant(p), Tensor::constant(t), half).value()(0, 0) == 1.0);
    REQUIRE(l1_loss(Tensor::constant(p), Tensor::constant(p), full).value()(0, 0) == 0.0);
    Mask none{0, 0};
    REQUIRE_THROWS_AS(l1_loss(Tensor::constant(p), Tensor::constant(t), none), ConfigError);
}

TEST_CASE("l1 gradient matches finite differences away from kinks") {
    Rng rng(909);
    Matrix target = random_matrix(6, 1, rng);
    Mask mask{1, 0, 1, 1, 0, 1};
    auto f = [&](const Tensor& p) { return l1_loss(p, Tensor::constant(target), mask); };
    // Shift the point away from the target so no |pred-target| is near zero.
    Matrix point = target.array() + 0.5;
    REQUIRE(grad_check(f, point, 1e-5) < 1e-5);
}

TEST_CASE("backward accumulates across tensor reuse") {
    // y = sum(x*x) + sum(x) uses x twice; dy/dx = 2x + 1.
    Matrix x0(1, 3);
    x0 << 1, 2, 3;
    Tensor x = Tensor::param(x0);
    Tensor y = add(sum(mul(x, x)), sum(x));
    y.backward();
    Matrix expect = 2.0 * x0.array() + 1.0;
    REQUIRE((x.grad() - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("every op gradient agrees with finite differences at random points") {
    Rng rng(5150);
    SegmentMap seg{{0, 1, 2, 3, 0}, {0, 0, 2, 1, 2}, 3};
    Matrix b = random_matrix(4, 3, rng);
    Matrix bias = random_matrix(1, 4, rng);
    Matrix target = random_matrix(4, 1, rng);
    Mask mask{1, 1, 0, 1};
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        auto fm = [&](const Tensor& a) { return sum(matmul(a, Tensor::constant(b))); };
        REQUIRE(grad_check(fm, random_matrix(3, 4, rng), 1e-5) < 1e-4);
        auto fs = [&](const Tensor& x) { return sum(segment_mean(x, seg)); };
        REQUIRE(grad_check(fs, random_matrix(4, 2, rng), 1e-5) < 1e-4);
        auto fg = [&](const Tensor& x) { return sum(gelu(x)); };
        REQUIRE(grad_check(fg, random_matrix(2, 3, rng), 1e-5) < 1e-4);
        auto fb = [&](const Tensor& x) {
            return sum(gelu(add_bias(x, Tensor::constant(bias))));
        };
        REQUIRE(grad_check(fb, random_matrix(3, 4, rng), 1e-5) < 1e-4);
        auto fr = [&](const Tensor& x) { return sum(mul(repeat_rows(x, 5), repeat_rows(x, 5))); };
        REQUIRE(grad_check(fr, random_matrix(1, 4, rng), 1e-5) < 1e-4);
        auto fd = [&](const Tensor& x) {
            Rng fixed(trial);  // frozen mask per trial keeps f deterministic
            return sum(dropout(x, 0.4, true, fixed));
        };
        REQUIRE(grad_check(fd, random_matrix(3, 3, rng), 1e-5) < 1e-4);
        auto fl = [&](const Tensor& p) { return l1_loss(p, Tensor::constant(target), mask); };
        REQUIRE(grad_check(fl, target.array() + 0.7, 1e-5) < 1e-4);
        checked += 7;
    }
    REQUIRE(checked >= 100);
}

TEST_CASE("grad_check worked examples") {
    Rng rng(8);
    auto sq = [](const Tensor& x) { return sum(mul(x, x)); };
    Matrix p(1, 2);
    p << 1, 2;
    {
        Tensor x = Tensor::param(p);
        Tensor y = sq(x);
        y.backward();
        Matrix expect(1, 2);
        expect << 2, 4;
        REQUIRE((x.grad() - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
    REQUIRE(grad_check(sq, p, 1e-5) < 1e-7);

    auto gsum = [](const Tensor& x) { return sum(gelu(x)); };
    REQUIRE(grad_check(gsum, random_matrix(2, 4, rng), 1e-5) < 1e-6);
}

TEST_CASE("adam first step moves by approximately lr") {
    Matrix w0(1, 1);
    w0 << 0.5;
    Tensor w = Tensor::param(w0);
    Adam opt({{"w", w}});

    {  // g = +1
        Tensor loss = sum(w);
        loss.backward();
        opt.step(0.1);
        REQUIRE(w.value()(0, 0) == Catch::Approx(0.5 - 0.09999999900000002).epsilon(1e-12));
        REQUIRE_FALSE(w.has_grad());  // cleared
    }
}

TEST_CASE("adam with negative gradient moves in the opposite direction") {
    Tensor w = Tensor::param(Matrix::Zero(1, 1));
    Adam opt({{"w", w}});
    Tensor loss = sum(mul(Tensor::constant(-Matrix::Ones(1, 1)), w));
    loss.backward();
    opt.step(0.1);
    REQUIRE(w.value()(0, 0) == Catch::Approx(0.09999999900000002).epsilon(1e-12));
}

TEST_CASE("adam leaves parameters with zero gradient unchanged") {
    Tensor w = Tensor::param(Matrix::Constant(2, 2, 3.0));
    Adam opt({{"w", w}});
    Tensor z = mul(w, Tensor::constant(Matrix::Zero(2, 2)));
    Tensor loss = sum(z);
    loss.backward();
    opt.step(0.1);
    REQUIRE((w.value().array() - 3.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("adam names the parameter missing a gradient") {
    Tensor a = Tensor::param(Matrix::Zero(1, 1));
    Tensor b = Tensor::param(Matrix::Zero(1, 1));
    Adam opt({{"alpha", a}, {"beta", b}});
    Tensor loss = sum(a);
    loss.backward();
    REQUIRE_THROWS_WITH(opt.step(0.1), Catch::Matchers::ContainsSubstring("beta"));
}

TEST_CASE("kaiming uniform bound, determinism and variance") {
    Rng r1(3), r2(3);
    Tensor a = kaiming_uniform(10, 10, 6, r1);
    REQUIRE(a.value().cwiseAbs().maxCoeff() <= 1.0);  // b = sqrt(6/6) = 1

    Tensor b = kaiming_uniform(10, 10, 6, r2);
    REQUIRE((a.value() - b.value()).cwiseAbs().maxCoeff() == 0.0);

    Rng r3(17);
    Tensor big = kaiming_uniform(1000, 100, 24, r3);
    double mean = big.value().mean();
    double var = (big.value().array() - mean).square().sum() /
                 static_cast<double>(big.value().size());
    REQUIRE(var == Catch::Approx(1.0 / 12.0).epsilon(0.05));

    Rng r4(0);
    REQUIRE_THROWS_AS(kaiming_uniform(2, 2, 0, r4), ConfigError);
}

TEST_CASE("gradients stay finite through a deep chain") {
    Rng rng(21);
    Tensor x = Tensor::param(random_matrix(4, 4, rng));
    Tensor h = x;
    for (int i = 0; i < 10; ++i) h = gelu(matmul(h, Tensor::constant(random_matrix(4, 4, rng, -0.5, 0.5))));
    Tensor loss = sum(h);
    loss.backward();
    REQUIRE(x.grad().array().isFinite().all());
}
