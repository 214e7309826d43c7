#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "actionqm/sp_instance.hpp"

using namespace spqm;
using siegel::FormKind;
using symp::Mat;

namespace {
const double PI = 3.14159265358979323846;
}

TEST_CASE("maslov_turns reference values") {
    // constant path
    SpPath c = SpPath::from_generator(1, Mat::Zero(2, 2), 4);
    CHECK(maslov_turns(c) == doctest::Approx(0.0));

    // rotation loop winds det_C^2 twice per winding
    CHECK(maslov_turns(SpPath::rotation_loop(1, 1, 32)) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(maslov_turns(SpPath::rotation_loop(1, 3, 96)) == doctest::Approx(6.0).epsilon(1e-10));

    // positive-definite path has constant unitary part
    Mat d(2, 2);
    d << 1, 0, 0, -1;
    CHECK(maslov_turns(SpPath::from_generator(1, d, 16)) == doctest::Approx(0.0));

    // integrality on random loops: compose random path with its reverse then a loop
    for (int i = 0; i < 5; ++i) {
        SpPath p = SpPath::piecewise_random(1, 6, 0.8, 40 + i);
        SpPath loop = path_product(SpPath::rotation_loop(1, 1, 16),
                                   path_product(p, path_reverse(p)));
        double turns = maslov_turns(loop, 8);
        CHECK(std::fabs(turns - std::lround(turns)) < 1e-6);
    }
}

TEST_CASE("rotation_number_nu agrees with the engine nu_x") {
    qmeng::Instance inst = make_sp_instance(1, FormKind::trace);
    Mat x = symp::standard_j(1);
    Vec xv = flatten(x);

    // constant path
    SpPath c = SpPath::from_generator(1, Mat::Zero(2, 2), 4);
    CHECK(rotation_number_nu(c, x).value == doctest::Approx(0.0));

    // rotation loop reproduces the analytic -2pi
    SpPath loop = SpPath::rotation_loop(1, 1, 32);
    CHECK(rotation_number_nu(loop, x).value == doctest::Approx(-2 * PI).epsilon(1e-9));

    // dual-implementation oracle on random paths
    for (int i = 0; i < 10; ++i) {
        SpPath p = SpPath::piecewise_random(1, 8, 0.9, 700 + i);
        auto a = rotation_number_nu(p, x, 8);
        auto b = qmeng::nu_x(inst, p, xv);
        INFO("fan=", a.value, " join=", b.value);
        CHECK(std::fabs(a.value - b.value) < 1e-4);
    }
}

TEST_CASE("guichardet_wigner_restriction") {
    // trivial loop
    SpPath c = SpPath::from_generator(2, Mat::Zero(4, 4), 4);
    auto g0 = guichardet_wigner_restriction(c);
    CHECK(g0.detc_winding == doctest::Approx(0.0));

    // n=1 rotation loop: det_C winds once
    auto g1 = guichardet_wigner_restriction(SpPath::rotation_loop(1, 1, 32));
    CHECK(g1.detc_winding == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(g1.ref_power2 == doctest::Approx(-2.0).epsilon(1e-10));
    CHECK(g1.ref_power_minus_n1 == doctest::Approx(2.0).epsilon(1e-10));

    // n=2 one-factor block loop: det multiplicativity gives winding 1
    auto g2 = guichardet_wigner_restriction(SpPath::u1_block_loop(2, 0, 1, 32));
    CHECK(g2.detc_winding == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(g2.ref_power_minus_n1 == doctest::Approx(3.0).epsilon(1e-10));

    // a path leaving U(n) errors out
    Mat d(2, 2);
    d << 1, 0, 0, -1;
    SpPath hyper = SpPath::from_generator(1, d, 8);
    CHECK_THROWS_AS(guichardet_wigner_restriction(hyper), aqm::validation_error);

    // A_mu on the U(n) generator loop equals -2pi * winding (engine oracle)
    qmeng::Instance inst2 = make_sp_instance(2, FormKind::trace);
    Vec x2 = flatten(symp::standard_j(2));
    SpPath bl = SpPath::u1_block_loop(2, 1, 1, 32);
    double amu = qmeng::nu_x(inst2, bl, x2).value;
    auto gw = guichardet_wigner_restriction(bl);
    CHECK(amu == doctest::Approx(-2 * PI * gw.detc_winding).epsilon(1e-9));
}

TEST_CASE("nu scales linearly with the form kind") {
    Mat x = symp::standard_j(1);
    Vec xv = flatten(x);
    SpPath p = SpPath::piecewise_random(1, 6, 0.8, 2024);
    double vt = qmeng::nu_x(make_sp_instance(1, FormKind::trace), p, xv).value;
    double vs = qmeng::nu_x(make_sp_instance(1, FormKind::siegel),
                            p.with_kind(FormKind::siegel), xv).value;
    double vb = qmeng::nu_x(make_sp_instance(1, FormKind::bergman),
                            p.with_kind(FormKind::bergman), xv).value;
    CHECK(vs == doctest::Approx(2.0 * vt).epsilon(1e-12));
    CHECK(vb == doctest::Approx(2.0 * vt).epsilon(1e-12)); // n=1: n+1 = 2
}

TEST_CASE("homogenized nu is antisymmetric and conjugation invariant") {
    qmeng::Instance inst = make_sp_instance(1, FormKind::trace);
    Vec x0 = flatten(symp::standard_j(1));
    double cbound = empirical_defect_bound(FormKind::trace, 1);
    SpPath p = SpPath::piecewise_random(1, 6, 0.6, 5150);
    auto hf = qmeng::homogenize(inst, p, x0, 8, {}, cbound);
    auto hb = qmeng::homogenize(inst, path_reverse(p), x0, 8, {}, cbound);
    CHECK(std::fabs(hf.estimate + hb.estimate) < hf.half_width + hb.half_width + 1e-4);

    symp::RandomSp rs(1, 6);
    Mat h = rs.group_element(0.7, 11);
    auto hc = qmeng::homogenize(inst, p.conjugated(h), x0, 8, {}, cbound);
    CHECK(std::fabs(hc.estimate - hf.estimate) < hc.half_width + hf.half_width + 1e-3);
}

TEST_CASE("calibration ledger") {
    CalibrateOptions opt;
    opt.n = 1;
    opt.random_paths = 6;
    opt.k_max = 8;
    opt.seed = 99;
    CalibrationLedger ledger = calibrate(opt);

    // |kappa_trace| = pi on this suite; sign recorded, magnitude asserted
    CHECK(std::fabs(std::fabs(ledger.kappa_trace) - PI) < 2e-2);
    CHECK(ledger.kappa_siegel == doctest::Approx(2.0 * ledger.kappa_trace));
    CHECK(ledger.kappa_bergman == doctest::Approx(2.0 * ledger.kappa_trace));
    CHECK(ledger.provenance.size() >= 9);

    // ledger file round trip
    std::string path = "/tmp/aqm_test_ledger.json";
    ledger.save(path);
    CalibrationLedger l2 = CalibrationLedger::load(path);
    CHECK(l2.kappa_trace == doctest::Approx(ledger.kappa_trace).epsilon(1e-15));
    CHECK(l2.n == 1);
    CHECK(l2.provenance.size() == ledger.provenance.size());
    std::remove(path.c_str());
}
