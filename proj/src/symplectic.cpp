#include "actionqm/symplectic.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "actionqm/rng.hpp"

namespace symp {

Mat standard_j(int n) {
    require(n >= 1, "standard_j: n must be positive");
    Mat j = Mat::Zero(2 * n, 2 * n);
    j.topRightCorner(n, n) = -Mat::Identity(n, n);
    j.bottomLeftCorner(n, n) = Mat::Identity(n, n);
    return j;
}

static void require_square_even(const Mat& M, const char* who) {
    require(M.rows() == M.cols() && M.rows() % 2 == 0 && M.rows() >= 2,
            std::string(who) + ": expected square 2n x 2n matrix");
    require(M.allFinite(), std::string(who) + ": non-finite entries");
}

double symplectic_residual(const Mat& M) {
    require_square_even(M, "symplectic_residual");
    Mat j0 = standard_j(int(M.rows()) / 2);
    return (M.transpose() * j0 * M - j0).norm();
}

double sp_algebra_residual(const Mat& Xi) {
    require_square_even(Xi, "sp_algebra_residual");
    Mat j0 = standard_j(int(Xi.rows()) / 2);
    return (Xi.transpose() * j0 + j0 * Xi).norm();
}

double compatible_j_residual(const Mat& J) {
    require_square_even(J, "compatible_j_residual");
    int n2 = int(J.rows());
    Mat j0 = standard_j(n2 / 2);
    Mat g = j0.transpose() * J; // metric candidate
    return (J * J + Mat::Identity(n2, n2)).norm() + (g - g.transpose()).norm();
}

bool is_symplectic(const Mat& M, double tol) { return symplectic_residual(M) <= tol; }

bool is_sp_algebra(const Mat& Xi, double tol) { return sp_algebra_residual(Xi) <= tol; }

bool is_compatible_j(const Mat& J, double tol, double tol_pd) {
    if (compatible_j_residual(J) > tol) return false;
    Mat j0 = standard_j(int(J.rows()) / 2);
    Mat g = j0.transpose() * J;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (g + g.transpose()));
    return es.eigenvalues().minCoeff() > tol_pd;
}

SympMatrix::SympMatrix(Mat entries, double tol) : m(std::move(entries)) {
    require(is_symplectic(m, tol), "SympMatrix: not symplectic within tolerance");
}

SpAlgebra::SpAlgebra(Mat entries, double tol) : m(std::move(entries)) {
    require(is_sp_algebra(m, tol), "SpAlgebra: not in sp(2n,R) within tolerance");
}

CompatibleJ::CompatibleJ(Mat entries, double tol) : m(std::move(entries)) {
    require(is_compatible_j(m, tol), "CompatibleJ: not a compatible complex structure");
}

Mat mat_exp(const Mat& A) {
    require(A.rows() == A.cols(), "mat_exp: square matrix expected");
    require(A.allFinite(), "mat_exp: non-finite entries");
    require(A.norm() < 500.0, "mat_exp: norm too large, exponential would overflow");
    Mat e = A.exp();
    require(e.allFinite(), "mat_exp: overflow in exponential");
    return e;
}

Mat mat_log_spd(const Mat& P, double tol_pd) {
    require(P.rows() == P.cols(), "mat_log_spd: square matrix expected");
    require((P - P.transpose()).norm() <= 1e-8 * (1.0 + P.norm()),
            "mat_log_spd: matrix not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P + P.transpose()));
    require(es.eigenvalues().minCoeff() > tol_pd, "mat_log_spd: matrix not positive definite");
    Vec lam = es.eigenvalues().array().log();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

Mat mat_pow_spd(const Mat& P, double t, double tol_pd) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P + P.transpose()));
    require(es.eigenvalues().minCoeff() > tol_pd, "mat_pow_spd: matrix not positive definite");
    Vec lam = es.eigenvalues().array().pow(t);
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

PolarFactors polar_unitary(const Mat& M, double tol) {
    require(is_symplectic(M, std::max(tol, 1e-6)), "polar_unitary: input not symplectic");
    Mat P = mat_pow_spd(M * M.transpose(), 0.5);
    Mat Pinv = mat_pow_spd(M * M.transpose(), -0.5);
    PolarFactors f{Pinv * M, P};
    return f;
}

std::complex<double> det_complex(const Mat& U, double tol) {
    require_square_even(U, "det_complex");
    int n = int(U.rows()) / 2;
    Mat j0 = standard_j(n);
    // U(n) inside Sp: orthogonal, symplectic, commutes with J0
    double tolc = std::max(tol, 1e-7) * (1.0 + U.norm());
    require((U * U.transpose() - Mat::Identity(2 * n, 2 * n)).norm() <= tolc &&
                (U * j0 - j0 * U).norm() <= tolc,
            "det_complex: input not in U(n) (orthogonal symplectic)");
    CMat c = U.topLeftCorner(n, n).cast<std::complex<double>>() +
             std::complex<double>(0, 1) * U.bottomLeftCorner(n, n).cast<std::complex<double>>();
    std::complex<double> d = c.determinant();
    require(std::fabs(std::abs(d) - 1.0) <= std::max(tol, 1e-7) * 10,
            "det_complex: determinant not on the unit circle");
    return d / std::abs(d);
}

double varangle(const AngleTrack& track) {
    require(track.samples.size() >= 1, "varangle: empty track");
    double turns = 0.0;
    for (std::size_t i = 0; i + 1 < track.samples.size(); ++i) {
        std::complex<double> r = track.samples[i + 1] / track.samples[i];
        double d = std::arg(r); // in (-pi, pi]
        if (std::fabs(d) >= M_PI * (1.0 - 1e-9))
            throw aqm::numerics_error(
                "varangle: consecutive samples differ by >= half a turn (undersampled path)",
                turns);
        turns += d / (2.0 * M_PI);
    }
    return turns;
}

AngleTrack concat(const AngleTrack& a, const AngleTrack& b) {
    require(!a.samples.empty() && !b.samples.empty(), "concat: empty track");
    require(std::abs(a.samples.back() - b.samples.front()) < 1e-9,
            "concat: tracks do not share the junction sample");
    AngleTrack out = a;
    out.samples.insert(out.samples.end(), b.samples.begin() + 1, b.samples.end());
    return out;
}

SiegelPoint::SiegelPoint(Mat X, Mat Y, double tol, double tol_pd)
    : x(std::move(X)), y(std::move(Y)) {
    require(x.rows() == x.cols() && y.rows() == y.cols() && x.rows() == y.rows(),
            "SiegelPoint: X and Y must be square of equal size");
    require((x - x.transpose()).norm() <= tol * (1.0 + x.norm()), "SiegelPoint: X not symmetric");
    require((y - y.transpose()).norm() <= tol * (1.0 + y.norm()), "SiegelPoint: Y not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (y + y.transpose()));
    require(es.eigenvalues().minCoeff() > tol_pd, "SiegelPoint: Y not positive definite");
}

Mat siegel_to_j(const SiegelPoint& z) {
    int n = int(z.x.rows());
    Mat yinv = z.y.llt().solve(Mat::Identity(n, n));
    Mat xyinv = z.x * yinv;
    Mat J(2 * n, 2 * n);
    J.topLeftCorner(n, n) = xyinv;
    J.topRightCorner(n, n) = -xyinv * z.x - z.y;
    J.bottomLeftCorner(n, n) = yinv;
    J.bottomRightCorner(n, n) = -yinv * z.x;
    return J;
}

SiegelPoint j_to_siegel(const Mat& J, double tol) {
    require(is_compatible_j(J, std::max(tol, 1e-7)), "j_to_siegel: input not compatible");
    int n = int(J.rows()) / 2;
    Mat y = J.bottomLeftCorner(n, n).inverse();
    Mat x = J.topLeftCorner(n, n) * y;
    // enforce exact symmetry (float noise only)
    return SiegelPoint(0.5 * (x + x.transpose()), 0.5 * (y + y.transpose()), std::max(tol, 1e-7));
}

SiegelPoint sp_fractional_action(const Mat& g, const SiegelPoint& z) {
    require(is_symplectic(g, 1e-7), "sp_fractional_action: g not symplectic");
    int n = int(g.rows()) / 2;
    require(int(z.x.rows()) == n, "sp_fractional_action: dimension mismatch");
    using C = std::complex<double>;
    CMat Z = z.x.cast<C>() + C(0, 1) * z.y.cast<C>();
    CMat A = g.topLeftCorner(n, n).cast<C>();
    CMat B = g.topRightCorner(n, n).cast<C>();
    CMat Cm = g.bottomLeftCorner(n, n).cast<C>();
    CMat D = g.bottomRightCorner(n, n).cast<C>();
    CMat W = (A * Z + B) * (Cm * Z + D).inverse();
    Mat x = W.real(), y = W.imag();
    return SiegelPoint(0.5 * (x + x.transpose()), 0.5 * (y + y.transpose()), 1e-7);
}

Mat RandomSp::algebra_element(double scale, std::uint64_t idx) const {
    aqm::Rng rng = aqm::Rng(seed_).substream(idx);
    // sp(2n,R) = J0 * Sym(2n)
    Mat s(2 * n_, 2 * n_);
    for (int i = 0; i < 2 * n_; ++i)
        for (int j = i; j < 2 * n_; ++j) {
            double v = rng.gaussian();
            s(i, j) = v;
            s(j, i) = v;
        }
    Mat xi = standard_j(n_) * s;
    double norm = xi.norm();
    if (norm > 0) xi *= scale / norm;
    return xi;
}

Mat RandomSp::group_element(double scale, std::uint64_t idx) const {
    return mat_exp(algebra_element(scale, idx));
}

Mat RandomSp::compatible_j(double scale, std::uint64_t idx) const {
    Mat g = group_element(scale, idx);
    Mat j0 = standard_j(n_);
    return g * j0 * g.inverse();
}

} // namespace symp
