#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "actionqm/symplectic.hpp"

using namespace symp;

namespace {
const double PI = 3.14159265358979323846;

Mat rot2(double theta) {
    Mat m(2, 2);
    m << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return m;
}
} // namespace

TEST_CASE("standard J0 block convention") {
    Mat j0 = standard_j(2);
    CHECK(j0(0, 2) == -1.0);
    CHECK(j0(2, 0) == 1.0);
    CHECK((j0 * j0 + Mat::Identity(4, 4)).norm() == 0.0);
    CHECK(is_symplectic(j0));
    CHECK(is_compatible_j(j0));
}

TEST_CASE("mat_exp basics") {
    CHECK((mat_exp(Mat::Zero(3, 3)) - Mat::Identity(3, 3)).norm() < 1e-14);

    // exp(pi J0) = -I for n=1 (closed-form rotation)
    Mat j0 = standard_j(1);
    CHECK((mat_exp(PI * j0) + Mat::Identity(2, 2)).norm() < 1e-12);

    Mat d = Mat::Zero(2, 2);
    d(0, 0) = 1.0;
    d(1, 1) = -1.0;
    Mat e = mat_exp(d);
    CHECK(e(0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-13));
    CHECK(e(1, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-13));
    CHECK(std::fabs(e(0, 1)) < 1e-15);

    // scaling-and-squaring accuracy against the rotation closed form
    for (double theta : {0.3, 2.0, 9.0}) {
        CHECK((mat_exp(theta * j0) - rot2(theta)).norm() < 1e-12 * std::max(1.0, theta));
    }
    CHECK_THROWS_AS(mat_exp(1e4 * Mat::Identity(2, 2)), aqm::validation_error);
}

TEST_CASE("polar_unitary factors") {
    Mat id = Mat::Identity(2, 2);
    auto f = polar_unitary(id);
    CHECK((f.unitary - id).norm() < 1e-13);
    CHECK((f.positive - id).norm() < 1e-13);

    // already unitary
    Mat u = rot2(0.7);
    f = polar_unitary(u);
    CHECK((f.unitary - u).norm() < 1e-12);
    CHECK((f.positive - id).norm() < 1e-12);

    // already positive symmetric: diag(2, 1/2)
    Mat p = Mat::Zero(2, 2);
    p(0, 0) = 2.0;
    p(1, 1) = 0.5;
    f = polar_unitary(p);
    CHECK((f.unitary - id).norm() < 1e-12);
    CHECK((f.positive - p).norm() < 1e-12);

    CHECK_THROWS_AS(polar_unitary(2.0 * id), aqm::validation_error);

    // random symplectic: reconstruction and factor properties
    RandomSp rs(2, 42);
    for (int i = 0; i < 20; ++i) {
        Mat m = rs.group_element(0.8, i);
        auto pf = polar_unitary(m);
        CHECK((pf.positive * pf.unitary - m).norm() < 1e-10);
        CHECK(symplectic_residual(pf.unitary) < 1e-9);
        CHECK(symplectic_residual(pf.positive) < 1e-9);
        Mat j0 = standard_j(2);
        CHECK((pf.unitary * j0 - j0 * pf.unitary).norm() < 1e-9);
    }
}

TEST_CASE("det_complex on U(n)") {
    Mat id2 = Mat::Identity(2, 2);
    CHECK(std::abs(det_complex(id2) - std::complex<double>(1, 0)) < 1e-13);

    // n=1: det_C(exp(theta J0)) = e^{i theta}
    Mat j0 = standard_j(1);
    for (double theta : {0.2, 1.5, -2.4}) {
        auto d = det_complex(mat_exp(theta * j0));
        CHECK(std::abs(d - std::polar(1.0, theta)) < 1e-12);
    }

    // block-diagonal U(1) x U(1): angles add (det multiplicativity)
    double t1 = 0.6, t2 = -1.1;
    Mat u = Mat::Zero(4, 4);
    // u(2) embedding [[A,-B],[B,A]] with A = diag(cos t1, cos t2), B = diag(sin t1, sin t2)
    u(0, 0) = std::cos(t1);
    u(1, 1) = std::cos(t2);
    u(2, 2) = std::cos(t1);
    u(3, 3) = std::cos(t2);
    u(0, 2) = -std::sin(t1);
    u(1, 3) = -std::sin(t2);
    u(2, 0) = std::sin(t1);
    u(3, 1) = std::sin(t2);
    CHECK(std::abs(det_complex(u) - std::polar(1.0, t1 + t2)) < 1e-12);

    // homomorphism on U(n) from random unitary pairs (via polar of products)
    RandomSp rs(1, 7);
    for (int i = 0; i < 10; ++i) {
        Mat u1 = polar_unitary(rs.group_element(0.9, 2 * i)).unitary;
        Mat u2 = polar_unitary(rs.group_element(0.9, 2 * i + 1)).unitary;
        auto lhs = det_complex(Mat(u1 * u2), 1e-6);
        auto rhs = det_complex(u1, 1e-6) * det_complex(u2, 1e-6);
        CHECK(std::abs(lhs - rhs) < 1e-10);
    }

    CHECK_THROWS_AS(det_complex(2.0 * id2), aqm::validation_error);
}

TEST_CASE("varangle in turns") {
    AngleTrack constant;
    for (int i = 0; i < 5; ++i) constant.samples.push_back({1.0, 0.0});
    CHECK(varangle(constant) == 0.0);

    // one positive turn, 64 samples
    AngleTrack turn;
    for (int i = 0; i <= 64; ++i) turn.samples.push_back(std::polar(1.0, 2 * PI * i / 64));
    CHECK(varangle(turn) == doctest::Approx(1.0).epsilon(1e-12));

    // two negative turns
    AngleTrack neg;
    for (int i = 0; i <= 256; ++i) neg.samples.push_back(std::polar(1.0, -4 * PI * i / 256));
    CHECK(varangle(neg) == doctest::Approx(-2.0).epsilon(1e-12));

    // undersampled: half-turn jumps must throw
    AngleTrack bad;
    bad.samples = {{1, 0}, {-1, 0}};
    CHECK_THROWS_AS(varangle(bad), aqm::numerics_error);

    // additivity under concatenation is exact
    AngleTrack a, b;
    for (int i = 0; i <= 32; ++i) a.samples.push_back(std::polar(1.0, 1.7 * i / 32));
    for (int i = 0; i <= 32; ++i) b.samples.push_back(std::polar(1.0, 1.7 - 0.9 * i / 32));
    CHECK(varangle(concat(a, b)) == doctest::Approx(varangle(a) + varangle(b)).epsilon(1e-14));
}

TEST_CASE("siegel <-> J bijection and equivariance") {
    // iI <-> J0
    Mat j0n2 = standard_j(2);
    SiegelPoint ii(Mat::Zero(2, 2), Mat::Identity(2, 2));
    CHECK((siegel_to_j(ii) - j0n2).norm() < 1e-14);
    SiegelPoint back = j_to_siegel(j0n2);
    CHECK(back.x.norm() < 1e-14);
    CHECK((back.y - Mat::Identity(2, 2)).norm() < 1e-14);

    // round trip on random compatible structures
    RandomSp rs(2, 9);
    for (int i = 0; i < 25; ++i) {
        Mat j = rs.compatible_j(0.8, i);
        Mat j2 = siegel_to_j(j_to_siegel(j));
        CHECK((j - j2).norm() < 1e-9);
    }

    // equivariance against the fractional-linear action oracle, 100 pairs
    for (int i = 0; i < 100; ++i) {
        Mat g = rs.group_element(0.7, 1000 + i);
        Mat jrand = rs.compatible_j(0.6, 2000 + i);
        SiegelPoint z = j_to_siegel(jrand);
        Mat lhs = siegel_to_j(sp_fractional_action(g, z));
        Mat rhs = g * jrand * g.inverse();
        CHECK((lhs - rhs).norm() < 1e-9);
    }

    // Y must be positive definite
    Mat zx = Mat::Zero(1, 1), zy = -Mat::Identity(1, 1);
    CHECK_THROWS_AS(SiegelPoint(zx, zy), aqm::validation_error);
}

TEST_CASE("membership validation errors") {
    Mat bad = 2.0 * Mat::Identity(2, 2);
    CHECK_THROWS_AS(SympMatrix{bad}, aqm::validation_error);
    CHECK_THROWS_AS(SpAlgebra{Mat::Identity(2, 2)}, aqm::validation_error);
    CHECK_THROWS_AS(CompatibleJ{bad}, aqm::validation_error);
    // random sp elements really are in sp
    RandomSp rs(3, 4);
    for (int i = 0; i < 10; ++i) {
        CHECK(sp_algebra_residual(rs.algebra_element(1.0, i)) < 1e-12);
        CHECK(symplectic_residual(rs.group_element(1.0, i)) < 1e-10);
    }
}
