#include "actionqm/siegel.hpp"

#include <cmath>

#include "actionqm/quadrature.hpp"

namespace siegel {

FormKind form_kind_from_string(const std::string& s) {
    if (s == "trace") return FormKind::trace;
    if (s == "siegel") return FormKind::siegel;
    if (s == "bergman") return FormKind::bergman;
    throw aqm::validation_error("unknown form kind: " + s);
}

std::string to_string(FormKind k) {
    switch (k) {
        case FormKind::trace: return "trace";
        case FormKind::siegel: return "siegel";
        default: return "bergman";
    }
}

double form_scale(FormKind kind, int n) {
    switch (kind) {
        case FormKind::trace: return 1.0;
        case FormKind::siegel: return 2.0;
        default: return double(n + 1);
    }
}

double tangent_residual(const Mat& J, const Mat& A) {
    double anti = (A * J + J * A).norm();
    return anti + symp::sp_algebra_residual(A);
}

double form_raw(FormKind kind, int n, const Mat& J, const Mat& A, const Mat& B) {
    return form_scale(kind, n) * 0.25 * (J * A * B).trace();
}

double form_eval(FormKind kind, const Mat& J, const Mat& A, const Mat& B, double tol) {
    require(J.rows() == A.rows() && J.rows() == B.rows(), "form_eval: dimension mismatch");
    double scale = 1.0 + J.norm() + A.norm() + B.norm();
    if (tangent_residual(J, A) > tol * scale || tangent_residual(J, B) > tol * scale)
        throw aqm::validation_error("form_eval: arguments not tangent at J");
    return form_raw(kind, int(J.rows()) / 2, J, A, B);
}

Mat infinitesimal_action(const Mat& Xi, const Mat& J) { return Xi * J - J * Xi; }

double moment_map_sp(const Mat& J, const Mat& Xi) {
    return -0.5 * (Xi * J).trace();
}

GeodesicEval geodesic_between(const Mat& x, const Mat& y) {
    const int n2 = int(x.rows());
    require(y.rows() == n2 && y.cols() == n2 && x.cols() == n2,
            "geodesic_between: dimension mismatch");
    // coincident endpoints: the constant path (required convention)
    if ((x - y).norm() <= 1e-13 * (1.0 + x.norm())) {
        Mat xc = x;
        return [xc](double) { return xc; };
    }
    Mat j0 = symp::standard_j(n2 / 2);
    // h moves J0 to x: x = h J0 h^-1 with h = (-x J0)^(1/2), an SPD symplectic
    Mat qx = -x * j0;
    Mat h = symp::mat_pow_spd(0.5 * (qx + qx.transpose()), 0.5);
    Mat hinv = symp::mat_pow_spd(0.5 * (qx + qx.transpose()), -0.5);
    // y conjugated to the chart at J0; geodesic there is t -> P^t J0
    Mat yh = hinv * y * h;
    Mat p = -yh * j0;
    p = 0.5 * (p + p.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(p);
    require(es.eigenvalues().minCoeff() > 0, "geodesic_between: endpoint data not positive");
    Mat evec = es.eigenvectors();
    Eigen::VectorXd lam = es.eigenvalues().array().log();
    return [evec, lam, j0, h, hinv](double t) {
        Eigen::VectorXd powd = (t * lam.array()).exp();
        Mat pt = evec * powd.asDiagonal() * evec.transpose();
        return Mat(h * (pt * j0) * hinv);
    };
}

Mat geodesic(const Mat& x, const Mat& y, double t) { return geodesic_between(x, y)(t); }

namespace {

// Integral of the chosen form over the join surface D(s,t) = gamma(x, c(t))(s)
// for a curve c on [0,1]; single Gauss-Legendre panel in both directions.
// The curve callback must also provide values at t +- fd_step.
double join_panel_integral(FormKind kind, int n, const Mat& x,
                           const std::function<Mat(double)>& curve,
                           int s_nodes, int t_nodes, double fd_step) {
    const aqm::QuadRule& qs = aqm::gauss_legendre_cached(s_nodes);
    const aqm::QuadRule& qt = aqm::gauss_legendre_cached(t_nodes);
    const double h = fd_step;
    double sum = 0.0;
    for (int it = 0; it < t_nodes; ++it) {
        double t = qt.nodes[it];
        GeodesicEval g0 = geodesic_between(x, curve(t));
        GeodesicEval gp = geodesic_between(x, curve(t + h));
        GeodesicEval gm = geodesic_between(x, curve(t - h));
        for (int is = 0; is < s_nodes; ++is) {
            double s = qs.nodes[is];
            Mat center = g0(s);
            Mat ds = (g0(s + h) - g0(s - h)) / (2.0 * h);
            Mat dt = (gp(s) - gm(s)) / (2.0 * h);
            sum += qt.weights[it] * qs.weights[is] * form_raw(kind, n, center, ds, dt);
        }
    }
    return sum;
}

} // namespace

AreaResult triangle_area(FormKind kind, const Mat& x, const Mat& y, const Mat& z,
                         const SurfaceQuad& quad, double require_tol) {
    require(quad.s_nodes >= 4 && quad.t_nodes >= 4, "triangle_area: quadrature orders >= 4");
    const int n = int(x.rows()) / 2;
    GeodesicEval edge = geodesic_between(y, z);
    auto curve = [&edge](double t) { return edge(t); };
    double coarse = join_panel_integral(kind, n, x, curve, quad.s_nodes / 2,
                                        quad.t_nodes / 2, quad.fd_step);
    double fine = join_panel_integral(kind, n, x, curve, quad.s_nodes, quad.t_nodes,
                                      quad.fd_step);
    AreaResult r{fine, std::fabs(fine - coarse)};
    if (require_tol > 0 && r.error_estimate > require_tol)
        throw aqm::numerics_error("triangle_area: quadrature did not converge below " +
                                      std::to_string(require_tol),
                                  fine);
    return r;
}

} // namespace siegel
