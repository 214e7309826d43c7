// ham2d: desk-scale discretization of the Hamiltonian group of a flat
// 2-torus or a planar disk acting on grids of fiberwise compatible complex
// structures. Fibers are copies of the hyperbolic plane (Siegel coordinates
// per node), the moment map is the Hermitian scalar curvature pairing
// mu(H)(J) = sum S(J) H dA with S = 2 * Gaussian curvature of g(J), and the
// engine instance is the dA-weighted product of the per-node fibers.
#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "actionqm/expr.hpp"
#include "actionqm/qm_engine.hpp"

namespace ham2d {

using Field = Eigen::ArrayXXd; // (N x N), indexed (ix, iy)
using qmeng::Vec;

// ---------------------------------------------------------------------------
// grids

struct SurfaceGrid {
    enum class Domain { torus, disk };
    Domain domain = Domain::torus;
    int N = 64;
    double R = 1.0; // disk half-width; torus period is 1

    double x0() const { return domain == Domain::torus ? 0.0 : -R; }
    double span() const { return domain == Domain::torus ? 1.0 : 2.0 * R; }
    double h() const { return span() / N; }
    double cell_area() const { return h() * h(); }
    double node_x(int i) const { return x0() + i * h(); }
    int size() const { return N * N; }
    int idx(int ix, int iy) const { return ix + N * iy; }

    static SurfaceGrid torus(int N);
    static SurfaceGrid disk(int N, double R);
};

// 4th-order first/second derivative stencils; periodic wrap on the torus,
// constant continuation (field boundary value semantics) outside the disk
// grid. pad = value used outside the disk grid.
struct Stencil {
    const SurfaceGrid& grid;
    double pad = 0.0;
    double dx(const Field& f, int ix, int iy) const;
    double dy(const Field& f, int ix, int iy) const;
    double dxx(const Field& f, int ix, int iy) const;
    double dyy(const Field& f, int ix, int iy) const;
    double dxy(const Field& f, int ix, int iy) const;
    double at(const Field& f, int ix, int iy) const; // with padding semantics
};

// ---------------------------------------------------------------------------
// J fields (per-node Siegel coordinates a + i b of the hyperbolic fiber)

struct JField {
    Field a; // fiber Siegel real part
    Field b; // fiber Siegel imaginary part, > 0
    static JField flat(const SurfaceGrid& grid);                     // a=0, b=1 (J0 fiber)
    static JField from_expressions(const SurfaceGrid& grid, const expr::Expr& ea,
                                   const expr::Expr& elogb);
    // random smooth low-frequency field; amplitude scales both a and log b
    static JField random_smooth(const SurfaceGrid& grid, double amplitude, int max_mode,
                                std::uint64_t seed);
    void validate(const SurfaceGrid& grid) const;
    // bilinear interpolation in (a, log b); torus wraps, disk pads with flat
    void sample(const SurfaceGrid& grid, double x, double y, double& out_a,
                double& out_b) const;
};

// node (a,b) -> 2x2 compatible structure entries [j00,j01,j10,j11]
std::array<double, 4> fiber_j(double a, double b);

// ambient embedding: 4 doubles per node, node-major
Vec flatten_field(const SurfaceGrid& grid, const JField& f);
JField unflatten_field(const SurfaceGrid& grid, const Vec& v);

// binary grid file: 16-byte header (magic "AQMGRID1", uint32 N, uint32
// domain tag), then row-major float64 layers until EOF.
void write_grid_file(const std::string& path, const SurfaceGrid& grid,
                     const std::vector<const Field*>& layers);
std::vector<Field> read_grid_file(const std::string& path, SurfaceGrid& grid_out);

// ---------------------------------------------------------------------------
// curvature

// Gaussian curvature of a metric given by component fields (E, F, G) via the
// Brioschi formula with 4th-order stencils. pads: boundary values of E,F,G
// outside a disk grid (flat: 1,0,1).
Field gaussian_curvature_metric(const SurfaceGrid& grid, const Field& E, const Field& F,
                                const Field& G);

// metric g(J) = omega(. , J .) of a J field: E = 1/b, F = -a/b, G = (a^2+b^2)/b
void metric_of_jfield(const JField& j, Field& E, Field& F, Field& G);

// S(J) = 2 * Gaussian curvature of g(J)
Field hermitian_scalar_curvature(const SurfaceGrid& grid, const JField& j);

// mu(H)(J) = sum S(J) H dA
double moment_map_ham(const SurfaceGrid& grid, const Field& H, const JField& j);

// ---------------------------------------------------------------------------
// Hamiltonian schedules and flows

enum class Normalization { zero_mean, compact_support };

// Generating data of a (possibly transformed) Hamiltonian path: the raw
// closed-form Hamiltonian with the compact-support mask already applied for
// disk domains. Transformations keep everything exact: powers periodize the
// schedule, reversal negates and flips time, products concatenate (second
// factor runs first), conjugation by a torus translation shifts arguments.
class HamSchedule {
public:
    static HamSchedule from_expression(const SurfaceGrid& grid, const expr::Expr& H,
                                       Normalization norm, double duration = 1.0);
    HamSchedule power(int k) const;
    HamSchedule reversed() const;
    static HamSchedule product_second_then_first(const HamSchedule& first_factor,
                                                 const HamSchedule& second_factor);
    HamSchedule translated(double ax, double ay) const; // torus conjugation

    double eval(double u, double x, double y) const { return eval_(u, x, y); }
    double duration() const { return duration_; }
    const std::vector<double>& knots() const { return knots_; } // in [0, duration]
    bool autonomous() const { return autonomous_; }
    Normalization normalization() const { return norm_; }
    std::string describe() const { return desc_; }
    // relative size of the raw Hamiltonian on the boundary collar (disk
    // domains): how much the compact-support mask had to remove
    double support_defect() const { return support_defect_; }

    // grid sample of the normalized Hamiltonian at physical time u
    Field normalized_grid(const SurfaceGrid& grid, double u) const;
    // gradient/Hessian of the generating function by small central differences
    void gradient(double u, double x, double y, double& hx, double& hy) const;
    void hessian(double u, double x, double y, double& hxx, double& hxy,
                 double& hyy) const;

private:
    std::function<double(double, double, double)> eval_;
    double duration_ = 1.0;
    std::vector<double> knots_;
    bool autonomous_ = false;
    Normalization norm_ = Normalization::zero_mean;
    std::string desc_;
    double fd_grad_ = 1e-4, fd_hess_ = 1e-3;
    double support_defect_ = 0.0;
};

// compact-support collar mask of a disk grid (C-infinity, 1 on the core,
// 0 on the collar), exposed for tests and support checks
double support_mask(const SurfaceGrid& grid, double x, double y);

enum class InverseMode { none, final_only, full };

struct FlowOptions {
    double dt = 1e-3;
    int checkpoints_per_unit = 32;
    bool store_forward = false;   // forward trajectories + linearizations
    InverseMode inverse = InverseMode::full;
    bool track_winding = false;   // per-node Maslov winding of forward linearizations
    double tol_flow = 1e-6;
    int threads = 0;
};

// Trajectories of the Hamiltonian isotopy and of its inverse path, sampled
// at checkpoint times with time-derivatives for Hermite evaluation.
// Matrices are stored row-major as 4 doubles per node.
struct FlowState {
    SurfaceGrid grid;
    std::vector<double> times; // checkpoints, [0, duration]
    // per checkpoint: (N^2 x 12): y(2) ydot(2) B(4) Bdot(4)
    std::vector<Eigen::MatrixXd> inverse_data;
    bool has_bdot = true;
    // forward (optional): (N^2 x 12): x(2) xdot(2) A(4) Adot(4)
    std::vector<Eigen::MatrixXd> forward_data;
    // per checkpoint: winding turns of det_C(polar(A(p,.))) per node
    std::vector<Eigen::VectorXd> winding_turns;
    double max_det_drift = 0.0;

    int checkpoint_at(double u) const; // index of last checkpoint <= u
};

FlowState integrate_flow(const SurfaceGrid& grid, const HamSchedule& sched,
                         const FlowOptions& opt);

// (phi_t . J)(p) = B^{-1} J(y_p(t)) B from the inverse-flow data at time u.
JField pushforward_j(const FlowState& state, double u, const JField& j);

// ---------------------------------------------------------------------------
// the engine instance and path model

qmeng::Instance make_ham_instance(const SurfaceGrid& grid);

struct HamPathOptions {
    FlowOptions flow{};
    int power_checkpoint_cap = 24; // checkpoints per unit for k >= 4
};

// Engine group-path model backed by a flow. The basepoint J field is fixed
// at construction (orbit data depends on it); engine calls must pass the
// matching ambient vector.
class HamPath {
public:
    HamPath(const SurfaceGrid& grid, HamSchedule sched, JField base,
            HamPathOptions opt = HamPathOptions{});

    std::vector<double> knots() const;
    Vec orbit_point(double t, const Vec& x) const;
    double moment(double t, const Vec& x) const;

    friend HamPath path_product(const HamPath& a, const HamPath& b);
    friend HamPath path_power(const HamPath& p, int k);
    friend HamPath path_reverse(const HamPath& p);

    const SurfaceGrid& grid() const { return grid_; }
    const HamSchedule& schedule() const { return sched_; }
    const JField& base() const { return base_; }
    const FlowState& flow() const { return *state_; }
    Vec base_ambient() const { return base_ambient_; }
    JField orbit_field(double u_physical) const; // delta(u) = (phi_u)_* base

private:
    SurfaceGrid grid_;
    HamSchedule sched_;
    JField base_;
    HamPathOptions opt_;
    std::shared_ptr<const FlowState> state_;
    Vec base_ambient_;
    bool base_is_flat_ = false;
};

// ---------------------------------------------------------------------------
// the quasimorphism and its companions

struct FrakSOptions {
    qmeng::QuadSpec quad{8, 2, 1e-5};
    HamPathOptions path{};
};

// One evaluation of the quasimorphism at basepoint J0field.
qmeng::QmReport frak_s(const SurfaceGrid& grid, const JField& j0, const HamSchedule& sched,
                       const FrakSOptions& opt = FrakSOptions{});

// Calabi homomorphism: time integral of the spatial sum of the
// compact-support-normalized Hamiltonian (disk domains).
double calabi(const SurfaceGrid& grid, const HamSchedule& sched, int time_samples = 64);

// dA-weighted Maslov winding of the linearized paths, homogenized over the
// doubling schedule up to k_max. Returns the homogenized value (in turns)
// plus the truncation half-width.
struct BargeGhysResult {
    double tau_turns = 0.0;     // homogenized, dA-weighted
    double half_width = 0.0;
    std::vector<double> per_k;  // tau(path^k)/k
};
BargeGhysResult barge_ghys_tau(const SurfaceGrid& grid, const HamSchedule& sched, int k_max,
                               const FlowOptions& opt = FlowOptions{});

// Local-type comparison: homogenized frak_S against the ledger-scaled
// (1/2) tau_B - c Cal_B prediction with c = 0 (flat base structure).
struct LocalTypeReport {
    double s_hom = 0.0;
    double s_half_width = 0.0;
    double tau_turns = 0.0;
    double tau_half_width = 0.0;
    double kappa = 0.0;      // ledger constant applied to tau
    double prediction = 0.0; // kappa * tau_turns - c * calabi, c = 0
    double calabi_value = 0.0;
    double difference = 0.0;
    double rel_error = 0.0;
};
LocalTypeReport local_type_report(const SurfaceGrid& grid, const HamSchedule& sched,
                                  double kappa_trace, int k_max,
                                  const FrakSOptions& opt = FrakSOptions{});

// time integral of the discrete L^2_2 norm of the normalized Hamiltonian
double sobolev_norm_22(const SurfaceGrid& grid, const HamSchedule& sched,
                       int time_samples = 32);

// Equivariance of the moment map under the discretized flow:
// mu(Ad_phi H)(phi_* J) vs mu(H)(J) at the final time of the schedule.
struct EquivarianceReport {
    double lhs = 0.0, rhs = 0.0, rel_error = 0.0;
};
EquivarianceReport moment_equivariance(const SurfaceGrid& grid, const HamSchedule& sched,
                                       const JField& j, const expr::Expr& testH,
                                       const FlowOptions& opt = FlowOptions{});

// empirical fiberwise Domic-Toledo bound: Area(M) * C_fiber for sigma_trace
double ham_defect_bound(const SurfaceGrid& grid);

} // namespace ham2d
