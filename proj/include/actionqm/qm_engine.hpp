// qm-engine: the generic construction of the quasimorphism nu_x on the
// universal cover of a group acting on a Domic-Toledo space with an
// equivariant moment map:
//
//     nu_x(path) = int_D Omega - int_0^1 mu(X_t)(g_t . x) dt,
//
// where D is the geodesic join of the orbit loop from the basepoint x.
// Points are type-erased as ambient coordinate vectors; group paths are
// supplied by instance-specific models (SpPath, HamPath) satisfying the
// GroupPathModel concept below.
#pragma once

#include <cmath>
#include <concepts>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "actionqm/common.hpp"
#include "actionqm/quadrature.hpp"

namespace qmeng {

using Vec = Eigen::VectorXd;

// A Domic-Toledo instance: the ambient embedding is implicit (points ARE
// their coordinate vectors), geodesic(x,x) must be the constant path, and
// form is the ambient bilinear extension of the symplectic form at a point.
struct Instance {
    Eigen::Index dim = 0;
    std::function<std::function<Vec(double)>(const Vec&, const Vec&)> geodesic;
    std::function<double(const Vec&, const Vec&, const Vec&)> form;
};

// Group-path model: a sampled path g_t, g_0 = Id, exposed to the engine
// through its orbit and its moment values along the orbit, plus the group
// combinators the quasimorphism calculus needs. knots() are the boundaries
// of the smooth pieces; orbit_point/moment must be smooth strictly inside
// each piece.
template <typename P>
concept GroupPathModel = requires(const P& p, const P& q, double t, const Vec& x, int k) {
    { p.knots() } -> std::convertible_to<std::vector<double>>;
    { p.orbit_point(t, x) } -> std::convertible_to<Vec>;
    { p.moment(t, x) } -> std::convertible_to<double>;
    { path_product(p, q) } -> std::convertible_to<P>;
    { path_power(p, k) } -> std::convertible_to<P>;
    { path_reverse(p) } -> std::convertible_to<P>;
};

struct QuadSpec {
    int s_nodes = 16;    // join direction, single Gauss-Legendre panel
    int t_nodes = 3;     // Gauss-Legendre nodes per smooth piece of the path
    double fd_step = 1e-5; // relative to the local interval length in t
};

struct QmReport {
    double value = 0.0;
    double disk_term = 0.0;
    double moment_term = 0.0;
    double error_estimate = 0.0; // disk + moment quadrature estimates combined
    int s_nodes = 0, t_nodes = 0;
    std::string basepoint;
};

struct DefectResult {
    double defect = 0.0;    // nu(p1 p2) - nu(p1) - nu(p2)
    double triangle = 0.0;  // integral over Delta(x, g.x, gh.x)
    double triangle_error = 0.0;
    double combined_error = 0.0;
};

struct HomogenizeResult {
    double estimate = 0.0;    // nu(path^k)/k at the last schedule entry
    double half_width = 0.0;  // D / k_last, D = max observed defect magnitude
    double max_defect = 0.0;
    std::vector<int> ks;
    std::vector<double> values; // nu(path^k)/k per schedule entry
    double quad_error = 0.0;    // error estimate of the last evaluation
};

namespace detail {

// Piecewise-smooth curve on [0,1] given by an evaluator plus knots.
struct Curve {
    std::vector<double> knots;
    std::function<Vec(double)> eval;
};

// Integral of the instance form over the geodesic-join surface
// D(s,t) = geodesic(x, curve(t))(s). Composite in t over the knots, single
// panel in s. Deterministic reduction (ascending node order).
inline double join_surface_pass(const Instance& inst, const Vec& x, const Curve& c,
                                int s_nodes, int t_nodes, double fd_rel) {
    const aqm::QuadRule& qs = aqm::gauss_legendre_cached(s_nodes);
    const aqm::QuadRule& qt = aqm::gauss_legendre_cached(t_nodes);
    double sum = 0.0;
    for (std::size_t iv = 0; iv + 1 < c.knots.size(); ++iv) {
        const double a = c.knots[iv], b = c.knots[iv + 1];
        const double len = b - a;
        if (len <= 0) throw aqm::validation_error("join_surface: knots not increasing");
        const double ht = fd_rel * len;
        for (int it = 0; it < t_nodes; ++it) {
            const double t = a + len * qt.nodes[it];
            auto g0 = inst.geodesic(x, c.eval(t));
            auto gp = inst.geodesic(x, c.eval(t + ht));
            auto gm = inst.geodesic(x, c.eval(t - ht));
            const double wt = qt.weights[it] * len;
            for (int is = 0; is < s_nodes; ++is) {
                const double s = qs.nodes[is];
                const double hs = fd_rel;
                Vec center = g0(s);
                Vec ds = (g0(s + hs) - g0(s - hs)) / (2.0 * hs);
                Vec dt = (gp(s) - gm(s)) / (2.0 * ht);
                sum += wt * qs.weights[is] * inst.form(center, ds, dt);
            }
        }
    }
    return sum;
}

struct ValueWithError {
    double value = 0.0;
    double error = 0.0;
};

inline ValueWithError join_surface_integral(const Instance& inst, const Vec& x,
                                            const Curve& c, const QuadSpec& quad) {
    double coarse = join_surface_pass(inst, x, c, std::max(2, quad.s_nodes / 2),
                                      std::max(1, quad.t_nodes - 1), quad.fd_step);
    double fine = join_surface_pass(inst, x, c, quad.s_nodes, quad.t_nodes, quad.fd_step);
    return {fine, std::fabs(fine - coarse)};
}

// Composite Simpson of a piecewise-smooth function over its knots; endpoint
// evaluations are nudged inward so each piece sees only its own smooth data.
inline ValueWithError simpson_piecewise(const std::vector<double>& knots,
                                        const std::function<double(double)>& f) {
    auto pass = [&](int split) {
        double sum = 0.0;
        for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
            double a = knots[i], b = knots[i + 1];
            double eps = 1e-9 * (b - a); // one-sided evaluation, full weights
            double step = (b - a) / split;
            for (int j = 0; j < split; ++j) {
                double u = a + j * step, v = u + step;
                double fu = f(j == 0 ? u + eps : u);
                double fv = f(j == split - 1 ? v - eps : v);
                sum += (v - u) / 6.0 * (fu + 4.0 * f(0.5 * (u + v)) + fv);
            }
        }
        return sum;
    };
    double one = pass(1), two = pass(2);
    return {two, std::fabs(two - one)};
}

} // namespace detail

// nu_x of a path: disk term from the geodesic join of the orbit, moment term
// by composite Simpson on the path's native time grid.
template <GroupPathModel P>
QmReport nu_x(const Instance& inst, const P& path, const Vec& x,
              const QuadSpec& quad = QuadSpec{}, std::string basepoint_name = "") {
    detail::Curve orbit{path.knots(), [&](double t) { return path.orbit_point(t, x); }};
    auto disk = detail::join_surface_integral(inst, x, orbit, quad);
    auto mom = detail::simpson_piecewise(path.knots(),
                                         [&](double t) { return path.moment(t, x); });
    QmReport r;
    r.disk_term = disk.value;
    r.moment_term = mom.value;
    r.value = disk.value - mom.value;
    r.error_estimate = disk.error + mom.error;
    r.s_nodes = quad.s_nodes;
    r.t_nodes = quad.t_nodes;
    r.basepoint = std::move(basepoint_name);
    return r;
}

// The Action homomorphism: nu_x on a loop (orbit must close), checked to be
// independent of the basepoint by evaluating at a second point.
template <GroupPathModel P>
QmReport action_homomorphism(const Instance& inst, const P& loop, const Vec& x,
                             const Vec& x_check, const QuadSpec& quad = QuadSpec{},
                             double closure_tol = 1e-7, double agree_tol = 1e-4) {
    Vec start = loop.orbit_point(0.0, x);
    Vec end = loop.orbit_point(1.0, x);
    if ((end - start).norm() > closure_tol * (1.0 + start.norm()))
        throw aqm::validation_error("action_homomorphism: path is not a closed loop");
    QmReport a = nu_x(inst, loop, x, quad, "x");
    QmReport b = nu_x(inst, loop, x_check, quad, "x_check");
    double tol = agree_tol + 10.0 * (a.error_estimate + b.error_estimate);
    if (std::fabs(a.value - b.value) > tol)
        throw aqm::numerics_error(
            "action_homomorphism: basepoint dependence beyond tolerance: |" +
                std::to_string(a.value) + " - " + std::to_string(b.value) + "| > " +
                std::to_string(tol),
            a.value);
    return a;
}

// Orientation of the triangle term in the defect identity, fixed by the
// glued-disk construction (join surfaces from the basepoint, t along the
// geodesic [g.x, gh.x]). Pinned by the randomized defect suite.
inline constexpr double kTriangleOrientation = 1.0;

template <GroupPathModel P>
DefectResult defect(const Instance& inst, const P& p1, const P& p2, const Vec& x,
                    const QuadSpec& quad = QuadSpec{}) {
    P prod = path_product(p1, p2);
    QmReport n12 = nu_x(inst, prod, x, quad);
    QmReport n1 = nu_x(inst, p1, x, quad);
    QmReport n2 = nu_x(inst, p2, x, quad);
    Vec gx = p1.orbit_point(1.0, x);
    Vec ghx = prod.orbit_point(1.0, x);
    auto edge = inst.geodesic(gx, ghx);
    detail::Curve c{{0.0, 1.0}, edge};
    QuadSpec tq = quad;
    tq.t_nodes = std::max(quad.t_nodes * 4, 12); // single smooth piece in t
    auto tri = detail::join_surface_integral(inst, x, c, tq);
    DefectResult r;
    r.defect = n12.value - n1.value - n2.value;
    r.triangle = kTriangleOrientation * tri.value;
    r.triangle_error = tri.error;
    r.combined_error =
        n12.error_estimate + n1.error_estimate + n2.error_estimate + tri.error;
    return r;
}

// Homogenization on the doubling schedule k = 1,2,4,...,<=k_max with the
// Fekete-style interval half-width D/k_last. D is the larger of the max
// observed defect |nu(p^2k) - 2 nu(p^k)| and the caller-supplied empirical
// defect bound of the instance (recorded by the randomized defect suites);
// the latter keeps the interval honest when the powers of one element
// happen to have small defects.
template <GroupPathModel P>
HomogenizeResult homogenize(const Instance& inst, const P& path, const Vec& x, int k_max,
                            const QuadSpec& quad = QuadSpec{}, double defect_bound = 0.0) {
    aqm::require(k_max >= 2, "homogenize: k_max must be >= 2");
    HomogenizeResult r;
    double prev_total = 0.0;
    int prev_k = 0;
    for (int k = 1; k <= k_max; k *= 2) {
        P pk = path_power(path, k);
        QmReport rep = nu_x(inst, pk, x, quad);
        r.ks.push_back(k);
        r.values.push_back(rep.value / k);
        r.quad_error = rep.error_estimate;
        if (prev_k > 0) {
            // one doubling step: nu(p^{2k'}) vs 2 nu(p^{k'})
            double d = std::fabs(rep.value - 2.0 * prev_total);
            if (d > r.max_defect) r.max_defect = d;
        }
        prev_total = rep.value;
        prev_k = k;
    }
    r.estimate = r.values.back();
    double d = std::max(r.max_defect, defect_bound);
    r.half_width = (prev_k > 1) ? d / prev_k : std::max(d, r.quad_error);
    return r;
}

// Conjugation transport check: lhs = nu_x evaluated on the conjugated path,
// rhs = nu at the transported basepoint on the original path. The caller
// supplies the conjugated path and h^{-1}.x since conjugation is
// instance-specific.
template <GroupPathModel P>
std::pair<QmReport, QmReport> conjugation_transport(const Instance& inst,
                                                    const P& conjugated_path, const Vec& x,
                                                    const P& path, const Vec& x_transported,
                                                    const QuadSpec& quad = QuadSpec{}) {
    QmReport lhs = nu_x(inst, conjugated_path, x, quad, "x");
    QmReport rhs = nu_x(inst, path, x_transported, quad, "h^-1.x");
    return {lhs, rhs};
}

} // namespace qmeng
