// siegel-space: the symmetric space of compatible complex structures for
// Sp(2n,R) with its invariant Kahler forms, geodesics, geodesic-join surface
// areas and the linear moment map mu(J)(Xi) = -1/2 tr(Xi J).
#pragma once

#include <functional>

#include "actionqm/symplectic.hpp"

namespace siegel {

using symp::Mat;
using aqm::require;

// The invariant 2-form, fixed relative scalings:
//   sigma_siegel = 2 * sigma_trace,  sigma_bergman = (n+1) * sigma_trace.
enum class FormKind { trace, siegel, bergman };

FormKind form_kind_from_string(const std::string& s);
std::string to_string(FormKind k);

// Scale factor of the chosen form relative to sigma_trace.
double form_scale(FormKind kind, int n);

// Tangency residual of A at J: anti-commutation with J plus membership in
// sp(2n,R) (the derivative of the symplectic condition).
double tangent_residual(const Mat& J, const Mat& A);

// (sigma_kind)_J(A,B); validates tangency of A and B at J.
double form_eval(FormKind kind, const Mat& J, const Mat& A, const Mat& B,
                 double tol = 1e-6);

// Raw bilinear extension c * (1/4) tr(J A B) without tangency checks; this is
// what quadratures evaluate on finite-difference surface tangents.
double form_raw(FormKind kind, int n, const Mat& J, const Mat& A, const Mat& B);

// Infinitesimal action of Xi in sp(2n,R) at J: Xi J - J Xi. Satisfies the
// tangent conditions exactly.
Mat infinitesimal_action(const Mat& Xi, const Mat& J);

// Moment map for sigma_trace: mu(J)(Xi) = -1/2 tr(Xi J).
double moment_map_sp(const Mat& J, const Mat& Xi);

// Unique symmetric-space geodesic with eval(0) = x, eval(1) = y.
// Computed by moving x to the basepoint J0 with a symplectic element built
// from the positive part of -x J0, taking t -> P^t J0 there, and moving back.
// Validated by endpoint/midpoint/equivariance tests.
using GeodesicEval = std::function<Mat(double)>;
GeodesicEval geodesic_between(const Mat& x, const Mat& y);
Mat geodesic(const Mat& x, const Mat& y, double t);

// Tensor Gauss-Legendre quadrature parameters for surfaces swept by geodesic
// joins. Surface tangents are taken by central differences with step fd_step
// in the parameter square. Error estimates come from comparing against a
// halved-order pass.
struct SurfaceQuad {
    int s_nodes = 16;     // join direction
    int t_nodes = 16;     // curve direction (per smooth piece)
    double fd_step = 1e-5;
};

struct AreaResult {
    double value = 0.0;
    double error_estimate = 0.0;
};

// Signed integral of the chosen form over the geodesic-join surface
// Delta(x,y,z) = { geodesic(x, geodesic(y,z,t), s) }. The (s,t) orientation
// fixes the sign; swapping two vertices flips it.
AreaResult triangle_area(FormKind kind, const Mat& x, const Mat& y, const Mat& z,
                         const SurfaceQuad& quad = SurfaceQuad{},
                         double require_tol = 0.0);

} // namespace siegel
