// symplectic-core: dense linear algebra for Sp(2n,R), sp(2n,R), U(n) inside Sp,
// compatible complex structures and angle-winding utilities.
//
// Conventions (asserted throughout the test suite):
//  * J0 = [[0,-I],[I,0]] on coordinates stacked as (p,q).
//  * omega_std(u,v) = u^T J0^T v, so that omega_std(., J0 .) is the Euclidean
//    inner product; M symplectic iff M^T J0 M = J0.
//  * Angles are measured in turns (full circle = 1) everywhere internally.
#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "actionqm/common.hpp"

namespace symp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using aqm::require;

// ---------------------------------------------------------------------------
// basic structure matrices and membership checks

// J0 = [[0,-I],[I,0]] for half-dimension n.
Mat standard_j(int n);

double symplectic_residual(const Mat& M);       // ||M^T J0 M - J0||
double sp_algebra_residual(const Mat& Xi);      // ||Xi^T J0 + J0 Xi||
double compatible_j_residual(const Mat& J);     // ||J^2 + I|| + asymmetry of J0^T J

bool is_symplectic(const Mat& M, double tol = aqm::default_tols().tol_sp);
bool is_sp_algebra(const Mat& Xi, double tol = aqm::default_tols().tol_sp);
// J^2 = -I and g = omega(., J.) symmetric positive definite
bool is_compatible_j(const Mat& J, double tol = aqm::default_tols().tol_sp,
                     double tol_pd = aqm::default_tols().tol_pd);

// Strong types for validated domain objects. Construction validates; the
// raw matrix stays accessible for arithmetic.
struct SympMatrix {
    Mat m;
    explicit SympMatrix(Mat entries, double tol = aqm::default_tols().tol_sp);
    int half_dim() const { return int(m.rows()) / 2; }
};

struct SpAlgebra {
    Mat m;
    explicit SpAlgebra(Mat entries, double tol = aqm::default_tols().tol_sp);
};

struct CompatibleJ {
    Mat m;
    explicit CompatibleJ(Mat entries, double tol = aqm::default_tols().tol_sp);
    int half_dim() const { return int(m.rows()) / 2; }
};

// ---------------------------------------------------------------------------
// matrix functions

// Scaling-and-squaring Pade exponential (Eigen); relative error <= 1e-12 for
// norms up to ~10. Throws on non-finite input or overflow.
Mat mat_exp(const Mat& A);

// Principal logarithm of a symmetric positive definite matrix.
Mat mat_log_spd(const Mat& P, double tol_pd = aqm::default_tols().tol_pd);

// Symmetric square root / power of an SPD matrix.
Mat mat_pow_spd(const Mat& P, double t, double tol_pd = aqm::default_tols().tol_pd);

// ---------------------------------------------------------------------------
// polar decomposition and complex determinant on U(n)

// M = P * U with P symmetric positive definite symplectic and
// U orthogonal symplectic (i.e. in U(n) as a subgroup of Sp(2n,R)).
struct PolarFactors {
    Mat unitary;  // U
    Mat positive; // P
};
PolarFactors polar_unitary(const Mat& M, double tol = aqm::default_tols().tol_sp);

// det over C of an orthogonal symplectic matrix U = [[A,-B],[B,A]],
// computed as det(A + iB); |result| = 1 up to tol.
std::complex<double> det_complex(const Mat& U, double tol = aqm::default_tols().tol_sp);

// ---------------------------------------------------------------------------
// angle tracking (units: turns, full circle = 1)

struct AngleTrack {
    std::vector<std::complex<double>> samples; // unit complex numbers
};

// Total continuous variation of argument in turns. Consecutive samples must
// differ in argument by strictly less than half a turn; otherwise the path is
// undersampled and an error is thrown.
double varangle(const AngleTrack& track);

// Concatenate two tracks sharing the junction sample.
AngleTrack concat(const AngleTrack& a, const AngleTrack& b);

// ---------------------------------------------------------------------------
// Siegel upper half-space <-> compatible complex structures
//
// Z = X + iY with X symmetric, Y symmetric positive definite corresponds to
// the complex structure whose +i eigenspace is spanned by the columns of
// [[Z],[I]] in C^{2n}. The closed form (derived from iI <-> J0 and
// equivariance under the fractional-linear action, and guarded by the
// equivariance property test) is
//     J(Z) = [[ X Y^-1 , -X Y^-1 X - Y ],
//             [  Y^-1  ,   -Y^-1 X     ]].
struct SiegelPoint {
    Mat x; // symmetric
    Mat y; // symmetric positive definite
    SiegelPoint(Mat X, Mat Y, double tol = aqm::default_tols().tol_sp,
                double tol_pd = aqm::default_tols().tol_pd);
};

Mat siegel_to_j(const SiegelPoint& z);
SiegelPoint j_to_siegel(const Mat& J, double tol = aqm::default_tols().tol_sp);

// Fractional-linear action of g = [[A,B],[C,D]] in Sp(2n,R) on the Siegel
// space: Z -> (A Z + B)(C Z + D)^{-1}. Used as the equivariance oracle for
// the conjugation action on compatible structures.
SiegelPoint sp_fractional_action(const Mat& g, const SiegelPoint& z);

// ---------------------------------------------------------------------------
// randomized generators (seeded; shared by tests and CLI suites)

class RandomSp {
public:
    RandomSp(int n, std::uint64_t seed) : n_(n), seed_(seed) {}
    Mat algebra_element(double scale, std::uint64_t idx) const;  // in sp(2n,R)
    Mat group_element(double scale, std::uint64_t idx) const;    // exp of the above
    Mat compatible_j(double scale, std::uint64_t idx) const;     // g J0 g^-1
private:
    int n_;
    std::uint64_t seed_;
};

} // namespace symp
