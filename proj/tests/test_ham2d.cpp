#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "actionqm/ham2d.hpp"

using namespace ham2d;

namespace {
const double PI = 3.14159265358979323846;

expr::Expr ex(const std::string& s) { return expr::Expr::parse(s); }

HamSchedule torus_sched(const SurfaceGrid& g, const std::string& h) {
    return HamSchedule::from_expression(g, ex(h), Normalization::zero_mean);
}
HamSchedule disk_sched(const SurfaceGrid& g, const std::string& h) {
    return HamSchedule::from_expression(g, ex(h), Normalization::compact_support);
}
} // namespace

TEST_CASE("expression parser") {
    CHECK(ex("2*pi").eval(0, 0, 0) == doctest::Approx(2 * PI));
    CHECK(ex("sin(x)*cos(y)+t").eval(0.5, 1.0, 2.0) ==
          doctest::Approx(std::sin(1.0) * std::cos(2.0) + 0.5));
    CHECK(ex("-x/(1+y)").eval(0, 3.0, 1.0) == doctest::Approx(-1.5));
    CHECK(!ex("x*y").depends_on_t());
    CHECK(ex("x+t").depends_on_t());
    CHECK_THROWS_AS(ex("x +* y"), aqm::validation_error);
    CHECK_THROWS_AS(ex("foo(x)"), aqm::validation_error);
}

TEST_CASE("S(J0) is identically zero and curvature matches the conformal oracle") {
    SurfaceGrid g = SurfaceGrid::torus(32);
    Field S = hermitian_scalar_curvature(g, JField::flat(g));
    CHECK(S.abs().maxCoeff() == 0.0);

    // conformal metric g = e^{2 phi} (dx^2 + dy^2), K = -e^{-2 phi} Lap phi
    auto run = [](int N) {
        SurfaceGrid g2 = SurfaceGrid::torus(N);
        Field E(N, N), F(N, N), G(N, N), Kexact(N, N);
        for (int iy = 0; iy < N; ++iy)
            for (int ix = 0; ix < N; ++ix) {
                double x = g2.node_x(ix), y = g2.node_x(iy);
                double phi = 0.15 * std::sin(2 * PI * x) * std::cos(2 * PI * y);
                double lap = -8 * PI * PI * phi;
                E(ix, iy) = std::exp(2 * phi);
                F(ix, iy) = 0.0;
                G(ix, iy) = std::exp(2 * phi);
                Kexact(ix, iy) = -std::exp(-2 * phi) * lap;
            }
        Field K = gaussian_curvature_metric(g2, E, F, G);
        return (K - Kexact).abs().maxCoeff();
    };
    double e64 = run(64), e128 = run(128);
    CHECK(e64 < 1e-2);
    CHECK(e128 < e64 / 4.0); // at least second-order reduction (stencils are 4th)
}

TEST_CASE("Gauss-Bonnet on the torus for random smooth fields") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        SurfaceGrid g = SurfaceGrid::torus(64);
        JField j = JField::random_smooth(g, 0.3, 2, seed);
        Field S = hermitian_scalar_curvature(g, j);
        double total = S.sum() * g.cell_area();
        CHECK(std::fabs(total) < 1e-2);
    }
}

TEST_CASE("moment map trivials") {
    SurfaceGrid g = SurfaceGrid::torus(24);
    JField j = JField::random_smooth(g, 0.3, 2, 5);
    Field H = Field::Zero(g.N, g.N);
    CHECK(moment_map_ham(g, H, j) == 0.0);
    H = Field::Constant(g.N, g.N, 0.7);
    CHECK(moment_map_ham(g, H, JField::flat(g)) == 0.0); // S == 0
}

TEST_CASE("JField ambient embedding and binary files round trip") {
    SurfaceGrid g = SurfaceGrid::torus(16);
    JField j = JField::random_smooth(g, 0.4, 2, 9);
    JField j2 = unflatten_field(g, flatten_field(g, j));
    CHECK((j.a - j2.a).abs().maxCoeff() < 1e-12);
    CHECK((j.b - j2.b).abs().maxCoeff() < 1e-12);

    std::string path = "/tmp/aqm_grid_test.bin";
    write_grid_file(path, g, {&j.a, &j.b});
    SurfaceGrid g3;
    auto layers = read_grid_file(path, g3);
    REQUIRE(layers.size() == 2);
    CHECK(g3.N == g.N);
    CHECK((layers[0] - j.a).abs().maxCoeff() == 0.0);
    CHECK((layers[1] - j.b).abs().maxCoeff() == 0.0);
    std::remove(path.c_str());
}

TEST_CASE("integrate_flow: identity, translation, oscillator linearization") {
    SurfaceGrid g = SurfaceGrid::torus(16);
    FlowOptions fo;
    fo.dt = 1e-2;
    fo.store_forward = true;
    fo.inverse = InverseMode::full;

    // H == 0: identity flow, A == I
    FlowState st = integrate_flow(g, torus_sched(g, "0"), fo);
    const auto& last = st.forward_data.back();
    for (int p = 0; p < g.size(); ++p) {
        CHECK(last(p, 0) == doctest::Approx(g.node_x(p % g.N)).epsilon(1e-12));
        CHECK(last(p, 4) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::fabs(last(p, 5)) < 1e-12);
    }

    // H = y - 1/2: translation flow in x, A == I
    FlowState st2 = integrate_flow(g, torus_sched(g, "y - 0.5"), fo);
    const auto& l2 = st2.forward_data.back();
    for (int p = 0; p < g.size(); p += 37) {
        double x0 = g.node_x(p % g.N);
        CHECK(l2(p, 0) == doctest::Approx(x0 - 1.0).epsilon(1e-9)); // X_H = (-1, 0)
        CHECK(l2(p, 1) == doctest::Approx(g.node_x(p / g.N)).epsilon(1e-9));
        CHECK(l2(p, 4) == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(std::fabs(l2(p, 6)) < 1e-8);
    }
    CHECK(st2.max_det_drift < 1e-10);

    // H = (x^2+y^2)/2 near the center of a disk: A(0,t) = rotation by t
    SurfaceGrid gd = SurfaceGrid::disk(16, 1.0);
    FlowOptions fd = fo;
    fd.dt = 2e-3;
    FlowState st3 = integrate_flow(gd, disk_sched(gd, "0.5*(x*x+y*y)"), fd);
    int center = gd.idx(8, 8); // node at (0,0)
    const auto& l3 = st3.forward_data.back();
    CHECK(l3(center, 4) == doctest::Approx(std::cos(1.0)).epsilon(1e-6));
    CHECK(l3(center, 6) == doctest::Approx(std::sin(1.0)).epsilon(1e-6));
}

TEST_CASE("pushforward_j: identity flow, conjugation formula, round trip") {
    SurfaceGrid g = SurfaceGrid::torus(24);
    JField j = JField::random_smooth(g, 0.3, 2, 21);
    FlowOptions fo;
    fo.dt = 2e-3;

    FlowState id = integrate_flow(g, torus_sched(g, "0"), fo);
    JField same = pushforward_j(id, 1.0, j);
    CHECK((same.a - j.a).abs().maxCoeff() < 1e-10);
    CHECK((same.b - j.b).abs().maxCoeff() < 1e-10);

    // push J0 along a shear-like flow: fibers A J0 A^-1
    HamSchedule sh = torus_sched(g, "0.2*sin(2*pi*x)");
    FlowState st = integrate_flow(g, sh, fo);
    JField pj0 = pushforward_j(st, 1.0, JField::flat(g));
    CHECK((pj0.a.abs().maxCoeff() > 1e-4)); // generally differs from J0

    // round trip through the reverse flow
    FlowState back = integrate_flow(g, sh.reversed(), fo);
    JField round = pushforward_j(back, 1.0, pushforward_j(st, 1.0, j));
    CHECK((round.a - j.a).abs().maxCoeff() < 0.5 / g.N);
    CHECK((round.b - j.b).abs().maxCoeff() < 0.5 / g.N);
}

TEST_CASE("moment map equivariance under discretized flows") {
    SurfaceGrid g = SurfaceGrid::torus(48);
    JField j = JField::random_smooth(g, 0.2, 2, 33);
    FlowOptions fo;
    fo.dt = 2e-3;
    auto rep = moment_equivariance(g, torus_sched(g, "0.05*sin(2*pi*x)*cos(2*pi*y)"), j,
                                   ex("cos(2*pi*y)+0.5*sin(2*pi*x)"), fo);
    INFO("lhs=", rep.lhs, " rhs=", rep.rhs);
    CHECK(rep.rel_error < 0.05);

    // time-dependent schedule, inverse data at the final time only
    auto rep2 = moment_equivariance(
        g, torus_sched(g, "(0.03+0.02*t)*sin(2*pi*x)+0.02*cos(2*pi*y)"), j,
        ex("sin(2*pi*y)"), fo);
    CHECK(rep2.rel_error < 0.05);
}

TEST_CASE("normalization invariants") {
    SurfaceGrid g = SurfaceGrid::torus(24);
    HamSchedule s = torus_sched(g, "sin(2*pi*x)+3.0");
    for (double u : {0.0, 0.3, 1.0}) {
        Field H = s.normalized_grid(g, u);
        CHECK(std::fabs(H.mean()) < 1e-12);
    }
    // compact support: the mask vanishes on the collar
    SurfaceGrid gd = SurfaceGrid::disk(32, 1.0);
    HamSchedule sd = disk_sched(gd, "exp(-(x*x+y*y)/0.1)");
    Field Hd = sd.normalized_grid(gd, 0.0);
    for (int iy = 0; iy < gd.N; ++iy)
        for (int ix = 0; ix < gd.N; ++ix) {
            double x = gd.node_x(ix), y = gd.node_x(iy);
            if (std::max(std::fabs(x), std::fabs(y)) > 0.95 * gd.R)
                CHECK(std::fabs(Hd(ix, iy)) < 1e-10);
        }
}

TEST_CASE("calabi homomorphism") {
    SurfaceGrid gd = SurfaceGrid::disk(48, 1.0);
    HamSchedule zero = disk_sched(gd, "0");
    CHECK(calabi(gd, zero) == doctest::Approx(0.0));

    // c0 * bump: reference integral from a fine midpoint quadrature in the test
    double c0 = 0.8, w = 0.05;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.17g*exp(-(x*x+y*y)/%.17g)", c0, w);
    HamSchedule bump = disk_sched(gd, buf);
    double ref = 0.0;
    {
        int M = 400;
        double h = 2.0 * gd.R / M;
        for (int iy = 0; iy < M; ++iy)
            for (int ix = 0; ix < M; ++ix) {
                double x = -gd.R + (ix + 0.5) * h, y = -gd.R + (iy + 0.5) * h;
                ref += c0 * std::exp(-(x * x + y * y) / w) * h * h;
            }
    }
    double cal = calabi(gd, bump);
    CHECK(cal == doctest::Approx(ref).epsilon(2e-4));

    // additivity under concatenation
    HamSchedule twice = HamSchedule::product_second_then_first(bump, bump);
    CHECK(calabi(gd, twice) == doctest::Approx(2.0 * cal).epsilon(1e-10));

    // support violation: a Hamiltonian alive on the collar
    HamSchedule badraw = HamSchedule::from_expression(gd, ex("x"), Normalization::compact_support);
    CHECK_THROWS_AS(calabi(gd, badraw), aqm::validation_error);
}

TEST_CASE("barge_ghys_tau: identity, oscillator-center winding, loops") {
    SurfaceGrid gd = SurfaceGrid::disk(16, 1.0);
    FlowOptions fo;
    fo.dt = 2e-3;
    // identity flow
    auto r0 = barge_ghys_tau(gd, disk_sched(gd, "0"), 2, fo);
    CHECK(r0.tau_turns == doctest::Approx(0.0));

    // autonomous rotation bump: winding concentrated near the center; at the
    // center node the linearization winds at rate omega0 = -2 a / w
    double a = 0.05, w = 0.08;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.17g*exp(-(x*x+y*y)/%.17g)", a, w);
    HamSchedule bump = disk_sched(gd, buf);
    FlowOptions f2 = fo;
    f2.track_winding = true;
    f2.store_forward = false;
    f2.inverse = InverseMode::none;
    FlowState st = integrate_flow(gd, bump, f2);
    int center = gd.idx(8, 8);
    double omega0 = -2.0 * a / w;
    CHECK(st.winding_turns.back()[center] ==
          doctest::Approx(omega0 / (2 * PI)).epsilon(1e-4));
    auto rb = barge_ghys_tau(gd, bump, 4, fo);
    CHECK(std::fabs(rb.tau_turns) > 1e-5);

    // translation loop on the torus: A == I for all nodes, tau vanishes
    SurfaceGrid g = SurfaceGrid::torus(16);
    auto rt = barge_ghys_tau(g, torus_sched(g, "y - 0.5"), 2, fo);
    CHECK(rt.tau_turns == doctest::Approx(0.0));
}

TEST_CASE("sobolev norm: zero, Fourier oracle, homogeneity") {
    SurfaceGrid g = SurfaceGrid::torus(64);
    CHECK(sobolev_norm_22(g, torus_sched(g, "0")) == doctest::Approx(0.0));

    // H = sin(2 pi x): ||H||^2 = 1/2 (1 + (2pi)^2 + (2pi)^4)
    double w2 = 4 * PI * PI;
    double want = std::sqrt(0.5 * (1 + w2 + w2 * w2));
    CHECK(sobolev_norm_22(g, torus_sched(g, "sin(2*pi*x)")) ==
          doctest::Approx(want).epsilon(1e-4));

    double n1 = sobolev_norm_22(g, torus_sched(g, "0.05*sin(2*pi*x)*sin(2*pi*y)"));
    double n3 = sobolev_norm_22(g, torus_sched(g, "-0.9*sin(2*pi*x)*sin(2*pi*y)"));
    CHECK(n3 == doctest::Approx(3.0 * n1).epsilon(1e-12));
}

TEST_CASE("frak_S: zero flow, inversion antisymmetry, report identity") {
    SurfaceGrid g = SurfaceGrid::torus(24);
    JField j0 = JField::flat(g);
    FrakSOptions opt;
    opt.path.flow.dt = 2e-3;

    auto rz = frak_s(g, j0, torus_sched(g, "0"), opt);
    CHECK(rz.value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rz.value == rz.disk_term - rz.moment_term);

    HamSchedule s = torus_sched(g, "0.05*sin(2*pi*x)*cos(2*pi*y)+0.03*cos(2*pi*y)");
    auto rf = frak_s(g, j0, s, opt);
    auto rb = frak_s(g, j0, s.reversed(), opt);
    INFO("forward=", rf.value, " reverse=", rb.value);
    CHECK(std::fabs(rf.value) > 1e-4);
    CHECK(std::fabs(rf.value + rb.value) < 5e-4);
}

TEST_CASE("frak_S defect equals the fiberwise triangle area") {
    SurfaceGrid g = SurfaceGrid::torus(16);
    JField j0 = JField::flat(g);
    HamPathOptions po;
    po.flow.dt = 5e-3;
    HamPath p1(g, torus_sched(g, "0.04*sin(2*pi*x)"), j0, po);
    HamPath p2(g, torus_sched(g, "0.04*cos(2*pi*y)"), j0, po);
    qmeng::Instance inst = make_ham_instance(g);
    qmeng::QuadSpec quad{8, 2, 1e-5};
    auto d = qmeng::defect(inst, p1, p2, p1.base_ambient(), quad);
    INFO("defect=", d.defect, " triangle=", d.triangle);
    CHECK(std::fabs(d.defect - d.triangle) < 5e-4);
}

TEST_CASE("conjugation covariance under torus translation") {
    SurfaceGrid g = SurfaceGrid::torus(24);
    JField j0 = JField::flat(g);
    FrakSOptions opt;
    opt.path.flow.dt = 2e-3;
    HamSchedule s = torus_sched(g, "0.05*sin(2*pi*x)*sin(2*pi*y)");
    // translate by a whole number of cells so h^{-1}.J0 is again the flat field
    double shift = 6.0 / g.N;
    auto rc = frak_s(g, j0, s.translated(shift, 2 * shift), opt);
    auto rf = frak_s(g, j0, s, opt);
    CHECK(rc.value == doctest::Approx(rf.value).epsilon(5e-6));
}

TEST_CASE("embedding functoriality: disk-supported flow on torus vs plane") {
    // same bump flow, same grid spacing; c = 0 so no Calabi correction
    int N = 32;
    SurfaceGrid gt = SurfaceGrid::torus(N);
    SurfaceGrid gp = SurfaceGrid::disk(N, 0.5);
    char buf[160];
    // bump at torus point (1/2, 1/2) <-> plane origin, width well inside
    std::snprintf(buf, sizeof(buf),
                  "0.04*exp(-((x-0.5)*(x-0.5)+(y-0.5)*(y-0.5))/0.03)");
    HamSchedule st = torus_sched(gt, buf);
    HamSchedule sp = disk_sched(gp, "0.04*exp(-(x*x+y*y)/0.03)");
    FrakSOptions opt;
    opt.path.flow.dt = 2e-3;
    auto rt = frak_s(gt, JField::flat(gt), st, opt);
    auto rp = frak_s(gp, JField::flat(gp), sp, opt);
    INFO("torus=", rt.value, " plane=", rp.value);
    CHECK(std::fabs(rt.value - rp.value) <
          0.05 * std::max({1e-4, std::fabs(rt.value), std::fabs(rp.value)}));
}

TEST_CASE("local type report smoke test") {
    SurfaceGrid gd = SurfaceGrid::disk(24, 1.0);
    HamSchedule bump = disk_sched(gd, "0.15*exp(-(x*x+y*y)/0.07)");
    FrakSOptions opt;
    opt.path.flow.dt = 2e-3;
    double kappa = -PI; // placeholder scale of the ledger value
    auto rep = local_type_report(gd, bump, kappa, 2, opt);
    CHECK(std::isfinite(rep.s_hom));
    CHECK(std::isfinite(rep.prediction));
    CHECK(rep.difference == doctest::Approx(rep.s_hom - rep.prediction));
    INFO("s_hom=", rep.s_hom, " prediction=", rep.prediction, " rel=", rep.rel_error);
    CHECK(rep.rel_error < 0.25); // coarse grid; the 5% gate runs at N=64, k=8
}
