#include "vln/kernels.hpp"
#include "vln/rng.hpp"

#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <cstring>
#include <vector>

using namespace vln;
namespace ks = vln::kernels::serial;
namespace ko = vln::kernels::omp;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// shapes large enough that the OpenMP versions really split the work
struct Shape {
    std::size_t rows, cols;
};
constexpr Shape kShapes[] = {{1, 1}, {3, 7}, {64, 33}, {257, 129}, {2048, 96}};

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("serial gemv matches a naive loop") {
    Rng rng(1);
    const auto a = random_vec(rng, 12), x = random_vec(rng, 4), b = random_vec(rng, 3);
    std::vector<double> y(3), yb(3);
    ks::gemv(a, 3, 4, x, y);
    ks::gemv_bias(a, 3, 4, x, b, yb);
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) s += a[r * 4 + c] * x[c];
        CHECK(y[r] == doctest::Approx(s).epsilon(1e-14));
        CHECK(yb[r] == doctest::Approx(s + b[r]).epsilon(1e-14));
    }
    std::vector<double> t(4, 1.0);
    ks::gemv_t_acc(a, 3, 4, std::span<const double>(x).first(3), t);
    for (std::size_t c = 0; c < 4; ++c) {
        double s = 1.0;
        for (std::size_t r = 0; r < 3; ++r) s += a[r * 4 + c] * x[r];
        CHECK(t[c] == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("adam step against the textbook update") {
    std::vector<double> p{1.0, -2.0}, g{0.5, -0.25}, m(2, 0.0), v(2, 0.0);
    kernels::AdamHyper hp{0.1, 0.9, 0.999, 1e-8, 0.01};
    ks::adam_step(p, g, m, v, 1, hp);
    // first step: m_hat = g', v_hat = g'^2, update = lr * sign(g')
    const double g0 = 0.5 + 0.01 * 1.0, g1 = -0.25 + 0.01 * -2.0;
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * g0 / (std::abs(g0) + 1e-8)));
    CHECK(p[1] == doctest::Approx(-2.0 - 0.1 * g1 / (std::abs(g1) + 1e-8)));
    CHECK(m[0] == doctest::Approx(0.1 * g0));
    CHECK(v[1] == doctest::Approx(0.001 * g1 * g1));
}

TEST_CASE("OpenMP kernels agree bitwise with the serial reference") {
    const int saved = omp_get_max_threads();
    for (int threads : {1, 2, 4, 7}) {
        omp_set_num_threads(threads);
        CAPTURE(threads);
        Rng rng(static_cast<std::uint64_t>(threads));
        for (Shape s : kShapes) {
            CAPTURE(s.rows);
            const auto a = random_vec(rng, s.rows * s.cols);
            const auto x = random_vec(rng, s.cols), xr = random_vec(rng, s.rows), b = random_vec(rng, s.rows);

            std::vector<double> y1(s.rows), y2(s.rows);
            ks::gemv(a, s.rows, s.cols, x, y1);
            ko::gemv(a, s.rows, s.cols, x, y2);
            CHECK(bitwise_equal(y1, y2));
            ks::gemv_bias(a, s.rows, s.cols, x, b, y1);
            ko::gemv_bias(a, s.rows, s.cols, x, b, y2);
            CHECK(bitwise_equal(y1, y2));

            auto t1 = random_vec(rng, s.cols), t2 = t1;
            ks::gemv_t_acc(a, s.rows, s.cols, xr, t1);
            ko::gemv_t_acc(a, s.rows, s.cols, xr, t2);
            CHECK(bitwise_equal(t1, t2));

            auto g1 = a, g2 = a;
            ks::ger(g1, s.rows, s.cols, xr, x);
            ko::ger(g2, s.rows, s.cols, xr, x);
            CHECK(bitwise_equal(g1, g2));

            auto p1 = a, p2 = a;
            ks::axpy(0.3, a, p1);
            ko::axpy(0.3, a, p2);
            CHECK(bitwise_equal(p1, p2));
            ks::scale(-1.7, p1);
            ko::scale(-1.7, p2);
            CHECK(bitwise_equal(p1, p2));

            const auto c = random_vec(rng, a.size()), d = random_vec(rng, a.size());
            const std::vector<std::span<const double>> parts{a, c, d};
            std::vector<double> s1(a.size()), s2(a.size());
            ks::sum_buffers(parts, s1);
            ko::sum_buffers(parts, s2);
            CHECK(bitwise_equal(s1, s2));

            auto q1 = a, q2 = a;
            std::vector<double> m1(a.size(), 0.0), m2 = m1, v1 = m1, v2 = m1;
            const kernels::AdamHyper hp{1e-3, 0.9, 0.999, 1e-8, 5e-4};
            for (long t = 1; t <= 3; ++t) {
                ks::adam_step(q1, c, m1, v1, t, hp);
                ko::adam_step(q2, c, m2, v2, t, hp);
            }
            CHECK(bitwise_equal(q1, q2));
            CHECK(bitwise_equal(m1, m2));
            CHECK(bitwise_equal(v1, v2));
        }
    }
    omp_set_num_threads(saved);
}

}  // TEST_SUITE
