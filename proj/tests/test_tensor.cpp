#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "trsoc/rng.hpp"
#include "trsoc/tensor.hpp"

using namespace trsoc;

namespace {

// Central finite differences over every entry of every parameter; the
// independent oracle for all backward rules.
std::vector<double> fd_gradient(const std::function<double(const std::vector<Param*>&)>& f,
                                std::vector<Param*> params, double h = 1e-5) {
    std::vector<double> grad;
    for (Param* p : params) {
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + h;
            const double up = f(params);
            p->value[i] = keep - h;
            const double dn = f(params);
            p->value[i] = keep;
            grad.push_back((up - dn) / (2.0 * h));
        }
    }
    return grad;
}

std::vector<double> tape_gradient(const std::function<double(const std::vector<Param*>&)>&,
                                  std::vector<Param*> params) {
    std::vector<double> grad;
    for (Param* p : params)
        for (std::size_t i = 0; i < p->size(); ++i) grad.push_back(p->grad[i]);
    return grad;
}

void check_grads(const std::function<double(const std::vector<Param*>&)>& f, std::vector<Param*> params,
                 double tol = 1e-5) {
    for (Param* p : params) p->zero_grad();
    f(params);  // runs backward inside
    const std::vector<double> got = tape_gradient(f, params);
    // the FD oracle re-evaluates the forward value only
    const std::vector<double> want = fd_gradient(
        [&](const std::vector<Param*>& ps) {
            for (Param* p : ps) p->zero_grad();
            return f(ps);
        },
        params);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double scale = std::max({1.0, std::abs(got[i]), std::abs(want[i])});
        CHECK(std::abs(got[i] - want[i]) / scale <= tol);
    }
}

Param random_param(const char* name, int r, int c, RandomStream& rs, double s = 1.0) {
    Param p(name, r, c);
    for (auto& v : p.value) v = s * rs.normal();
    return p;
}

}  // namespace

TEST_CASE("gelu fixed points and shapes") {
    Tape t;
    std::vector<double> x = {0.0, 1.0, -1.0};
    int id = t.gelu(t.constant(3, 1, x));
    CHECK(t.value(id)[0] == 0.0);  // gelu(0) = 0
    CHECK(t.value(id)[1] == doctest::Approx(0.8413447460685429).epsilon(1e-12));
    CHECK(t.value(id)[2] == doctest::Approx(-0.15865525393145705).epsilon(1e-12));
}

TEST_CASE("variance over batch: constant input and hand value") {
    Tape t;
    std::vector<double> c(5, 3.25);
    CHECK(t.scalar_value(t.variance_rows(t.constant(5, 1, c))) == 0.0);

    std::vector<double> v = {1.0, 2.0, 3.0};
    // population convention: divide by K
    CHECK(t.scalar_value(t.variance_rows(t.constant(3, 1, v))) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("sum gradient is all-ones") {
    Param x("x", 4, 3);
    for (std::size_t i = 0; i < x.size(); ++i) x.value[i] = 0.3 * i;
    Tape t;
    int loss = t.sum(t.param(x));
    t.backward(loss);
    for (double g : x.grad) CHECK(g == 1.0);
}

TEST_CASE("variance gradient matches closed form 2(x - mean)/K") {
    RandomStream rs(7, 1);
    Param x = random_param("x", 9, 1, rs);
    Tape t;
    int loss = t.variance_rows(t.param(x));
    t.backward(loss);
    const double m = [&] {
        double s = 0;
        for (double v : x.value) s += v;
        return s / 9.0;
    }();
    for (int i = 0; i < 9; ++i)
        CHECK(x.grad[i] == doctest::Approx(2.0 * (x.value[i] - m) / 9.0).epsilon(1e-10));
}

TEST_CASE("two-layer net gradient vs central finite differences") {
    RandomStream rs(11, 2);
    Param w1 = random_param("w1", 2, 3, rs, 0.7);
    Param b1 = random_param("b1", 1, 2, rs, 0.3);
    Param w2 = random_param("w2", 1, 2, rs, 0.7);
    Param b2 = random_param("b2", 1, 1, rs, 0.3);
    std::vector<double> xdata = {0.1, -0.4, 0.9, 1.2, 0.3, -0.8};

    auto f = [&](const std::vector<Param*>& ps) {
        Tape t;
        int x = t.constant(2, 3, xdata);
        int h = t.gelu(t.affine(x, t.param(*ps[0]), t.param(*ps[1])));
        int y = t.affine(h, t.param(*ps[2]), t.param(*ps[3]));
        int loss = t.mean_all(t.row_sqnorm(y));
        t.backward(loss);
        return t.scalar_value(loss);
    };
    check_grads(f, {&w1, &b1, &w2, &b2});
}

TEST_CASE("finite-difference agreement for each op over random shapes") {
    RandomStream shapes(23, 5);
    for (int trial = 0; trial < 6; ++trial) {
        RandomStream rs(101 + trial, 3);
        const int R = 2 + static_cast<int>(shapes.below(4));
        const int C = 1 + static_cast<int>(shapes.below(4));
        Param a = random_param("a", R, C, rs);
        Param b = random_param("b", R, C, rs);
        Param s = random_param("s", R, 1, rs);
        std::vector<double> w(R);
        double wsum = 0;
        for (auto& v : w) {
            v = 0.1 + shapes.uniform();
            wsum += v;
        }
        for (auto& v : w) v /= wsum;

        auto run = [&](const char*, std::function<int(Tape&, const std::vector<Param*>&)> g,
                       std::vector<Param*> ps) {
            auto f = [&g](const std::vector<Param*>& inner) {
                Tape t;
                int loss = g(t, inner);
                t.backward(loss);
                return t.scalar_value(loss);
            };
            check_grads(f, ps);
        };

        run("add+mul", [&](Tape& t, const std::vector<Param*>& ps) {
            return t.sum(t.mul(t.add(t.param(*ps[0]), t.param(*ps[1])), t.param(*ps[0])));
        }, {&a, &b});
        run("sub/scale/add_scalar", [&](Tape& t, const std::vector<Param*>& ps) {
            return t.mean_all(t.scale(t.add_scalar(t.sub(t.param(*ps[0]), t.param(*ps[1])), 0.7), -1.3));
        }, {&a, &b});
        run("mul_rows+row_sqnorm", [&](Tape& t, const std::vector<Param*>& ps) {
            return t.sum(t.row_sqnorm(t.mul_rows(t.param(*ps[0]), t.param(*ps[1]))));
        }, {&a, &s});
        run("row_dot", [&](Tape& t, const std::vector<Param*>& ps) {
            return t.mean_all(t.row_dot(t.param(*ps[0]), t.param(*ps[1])));
        }, {&a, &b});
        run("concat+gelu", [&](Tape& t, const std::vector<Param*>& ps) {
            return t.sum(t.gelu(t.concat_cols(t.param(*ps[0]), t.param(*ps[1]))));
        }, {&a, &b});
        run("variance", [&](Tape& t, const std::vector<Param*>& ps) {
            return t.variance_rows(t.row_sqnorm(t.param(*ps[0])));
        }, {&a});
        run("weighted variance+mean", [&](Tape& t, const std::vector<Param*>& ps) {
            int x = t.row_sqnorm(t.param(*ps[0]));
            return t.add(t.weighted_variance_rows(x, w), t.weighted_mean_rows(x, w));
        }, {&a});
        run("tile/block_sum", [&](Tape& t, const std::vector<Param*>& ps) {
            int tiled = t.tile_rows(t.param(*ps[0]), 3);
            int summed = t.block_sum_rows(tiled, R);
            return t.sum(t.mul(summed, summed));
        }, {&a});
    }
}

TEST_CASE("tile and block_sum are adjoint reshapes") {
    Tape t;
    std::vector<double> x = {1.0, 2.0, 3.0};  // J=3 rows
    int tiled = t.tile_rows(t.constant(3, 1, x), 2);  // rows: [1,1,2,2,3,3]
    CHECK(t.rows(tiled) == 6);
    CHECK(t.value(tiled)[1] == 1.0);
    CHECK(t.value(tiled)[4] == 3.0);
    int back = t.block_sum_rows(tiled, 3);  // B=2: sums over j blocks
    CHECK(t.rows(back) == 2);
    CHECK(t.value(back)[0] == 6.0);
    CHECK(t.value(back)[1] == 6.0);
}

TEST_CASE("shape mismatch reports both shapes") {
    Tape t;
    std::vector<double> a(6, 1.0), b(4, 1.0);
    int ia = t.constant(2, 3, a);
    int ib = t.constant(2, 2, b);
    CHECK_THROWS_WITH_AS(t.add(ia, ib), doctest::Contains("2x3"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(t.add(ia, ib), doctest::Contains("2x2"), std::invalid_argument);
}

TEST_CASE("backward on non-scalar is a contract violation") {
    Tape t;
    std::vector<double> a(6, 1.0);
    int ia = t.constant(2, 3, a);
    CHECK_THROWS_AS(t.backward(ia), std::invalid_argument);
}

TEST_CASE("determinism: same seed, same trajectories of values") {
    auto run = [](std::uint64_t seed) {
        RandomStream rs(seed, 9);
        Param w = random_param("w", 3, 3, rs);
        Tape t;
        int loss = t.sum(t.gelu(t.affine(t.param(w), t.param(w), t.constant(1, 3, std::vector<double>(3, 0.1)))));
        t.backward(loss);
        return std::make_pair(t.scalar_value(loss), w.grad);
    };
    auto [l1, g1] = run(42);
    auto [l2, g2] = run(42);
    CHECK(l1 == l2);
    CHECK(g1 == g2);
}
