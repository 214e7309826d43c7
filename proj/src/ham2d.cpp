#include "actionqm/ham2d.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "actionqm/rng.hpp"
#include "actionqm/threads.hpp"

namespace ham2d {

using aqm::require;

// ---------------------------------------------------------------------------
// 2x2 helpers (row-major m[0]=m00 m[1]=m01 m[2]=m10 m[3]=m11)

namespace {

using M2 = std::array<double, 4>;

inline M2 mul2(const M2& a, const M2& b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}
inline double det2(const M2& a) { return a[0] * a[3] - a[1] * a[2]; }
inline M2 inv2(const M2& a) {
    double d = det2(a);
    return {a[3] / d, -a[1] / d, -a[2] / d, a[0] / d};
}
inline M2 add2(const M2& a, const M2& b) {
    return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]};
}
inline M2 scale2(const M2& a, double c) { return {a[0] * c, a[1] * c, a[2] * c, a[3] * c}; }

constexpr M2 kJ0{0.0, -1.0, 1.0, 0.0};
constexpr M2 kId{1.0, 0.0, 0.0, 1.0};

// -m * J0, the positive part of a compatible structure
inline M2 neg_mul_j0(const M2& m) {
    return {-(m[0] * kJ0[0] + m[1] * kJ0[2]), -(m[0] * kJ0[1] + m[1] * kJ0[3]),
            -(m[2] * kJ0[0] + m[3] * kJ0[2]), -(m[2] * kJ0[1] + m[3] * kJ0[3])};
}

} // namespace

std::array<double, 4> fiber_j(double a, double b) {
    return {a / b, -(a * a + b * b) / b, 1.0 / b, -a / b};
}

namespace {

inline void fiber_to_siegel(const M2& j, double& a, double& b) {
    b = 1.0 / j[2];
    a = j[0] * b;
}

// sqrt of a 2x2 SPD matrix with det = 1
inline M2 sqrt_spd_det1(const M2& s) {
    double tr = s[0] + s[3];
    double c = std::sqrt(tr + 2.0);
    return {(s[0] + 1.0) / c, s[1] / c, s[2] / c, (s[3] + 1.0) / c};
}

// node geodesic data: geod(s) = h * (c^s * J0) * hinv
struct NodeGeo {
    M2 h, hinv;
    double theta = 0.0;
    M2 v{};      // c = cosh(theta) I + sinh(theta) V
    M2 cm1{};    // c - I, used in the tiny-angle branch
    bool tiny = true;

    void build(const M2& ja, const M2& jb) {
        M2 qa = neg_mul_j0(ja);
        h = sqrt_spd_det1(qa);
        hinv = inv2(h);
        M2 c = neg_mul_j0(mul2(mul2(hinv, jb), h));
        double ch = 0.5 * (c[0] + c[3]);
        cm1 = add2(c, scale2(kId, -1.0));
        if (ch <= 1.0 + 1e-12) {
            tiny = true;
            theta = 0.0;
        } else {
            tiny = false;
            theta = std::acosh(ch);
            double sh = std::sqrt(ch * ch - 1.0);
            v = scale2(add2(c, scale2(kId, -ch)), 1.0 / sh);
        }
    }

    M2 eval(double s) const {
        M2 cs;
        if (tiny) {
            cs = add2(kId, scale2(cm1, s));
        } else {
            double chs = std::cosh(s * theta), shs = std::sinh(s * theta);
            cs = add2(scale2(kId, chs), scale2(v, shs));
        }
        return mul2(mul2(h, mul2(cs, kJ0)), hinv);
    }
};

} // namespace

// ---------------------------------------------------------------------------
// grids and stencils

SurfaceGrid SurfaceGrid::torus(int N) {
    require(N >= 16, "SurfaceGrid: N must be at least 16");
    SurfaceGrid g;
    g.domain = Domain::torus;
    g.N = N;
    g.R = 0.5;
    return g;
}

SurfaceGrid SurfaceGrid::disk(int N, double R) {
    require(N >= 16, "SurfaceGrid: N must be at least 16");
    require(R > 0, "SurfaceGrid: disk radius must be positive");
    SurfaceGrid g;
    g.domain = Domain::disk;
    g.N = N;
    g.R = R;
    return g;
}

double Stencil::at(const Field& f, int ix, int iy) const {
    const int N = grid.N;
    if (grid.domain == SurfaceGrid::Domain::torus) {
        ix = ((ix % N) + N) % N;
        iy = ((iy % N) + N) % N;
        return f(ix, iy);
    }
    if (ix < 0 || ix >= N || iy < 0 || iy >= N) return pad;
    return f(ix, iy);
}

double Stencil::dx(const Field& f, int ix, int iy) const {
    double h = grid.h();
    return (at(f, ix - 2, iy) - 8 * at(f, ix - 1, iy) + 8 * at(f, ix + 1, iy) -
            at(f, ix + 2, iy)) /
           (12 * h);
}
double Stencil::dy(const Field& f, int ix, int iy) const {
    double h = grid.h();
    return (at(f, ix, iy - 2) - 8 * at(f, ix, iy - 1) + 8 * at(f, ix, iy + 1) -
            at(f, ix, iy + 2)) /
           (12 * h);
}
double Stencil::dxx(const Field& f, int ix, int iy) const {
    double h = grid.h();
    return (-at(f, ix - 2, iy) + 16 * at(f, ix - 1, iy) - 30 * at(f, ix, iy) +
            16 * at(f, ix + 1, iy) - at(f, ix + 2, iy)) /
           (12 * h * h);
}
double Stencil::dyy(const Field& f, int ix, int iy) const {
    double h = grid.h();
    return (-at(f, ix, iy - 2) + 16 * at(f, ix, iy - 1) - 30 * at(f, ix, iy) +
            16 * at(f, ix, iy + 1) - at(f, ix, iy + 2)) /
           (12 * h * h);
}
double Stencil::dxy(const Field& f, int ix, int iy) const {
    double h = grid.h();
    auto dyat = [&](int jx) {
        return (at(f, jx, iy - 2) - 8 * at(f, jx, iy - 1) + 8 * at(f, jx, iy + 1) -
                at(f, jx, iy + 2)) /
               (12 * h);
    };
    return (dyat(ix - 2) - 8 * dyat(ix - 1) + 8 * dyat(ix + 1) - dyat(ix + 2)) / (12 * h);
}

// ---------------------------------------------------------------------------
// J fields

JField JField::flat(const SurfaceGrid& grid) {
    JField f;
    f.a = Field::Zero(grid.N, grid.N);
    f.b = Field::Ones(grid.N, grid.N);
    return f;
}

JField JField::from_expressions(const SurfaceGrid& grid, const expr::Expr& ea,
                                const expr::Expr& elogb) {
    JField f;
    f.a = Field::Zero(grid.N, grid.N);
    f.b = Field::Zero(grid.N, grid.N);
    for (int iy = 0; iy < grid.N; ++iy)
        for (int ix = 0; ix < grid.N; ++ix) {
            double x = grid.node_x(ix), y = grid.node_x(iy);
            f.a(ix, iy) = ea.eval(0.0, x, y);
            f.b(ix, iy) = std::exp(elogb.eval(0.0, x, y));
        }
    f.validate(grid);
    return f;
}

JField JField::random_smooth(const SurfaceGrid& grid, double amplitude, int max_mode,
                             std::uint64_t seed) {
    require(max_mode >= 1, "random_smooth: max_mode must be positive");
    aqm::Rng rng(seed);
    JField f;
    f.a = Field::Zero(grid.N, grid.N);
    Field logb = Field::Zero(grid.N, grid.N);
    const double twoPi = 2.0 * M_PI;
    // independent low-frequency Fourier data for a and log b
    for (int layer = 0; layer < 2; ++layer) {
        Field& target = (layer == 0) ? f.a : logb;
        for (int kx = -max_mode; kx <= max_mode; ++kx)
            for (int ky = -max_mode; ky <= max_mode; ++ky) {
                if (kx == 0 && ky == 0) continue;
                double amp = amplitude * rng.gaussian() /
                             (1.0 + kx * kx + ky * ky) / (2.0 * max_mode);
                double phase = rng.uniform(0.0, twoPi);
                for (int iy = 0; iy < grid.N; ++iy)
                    for (int ix = 0; ix < grid.N; ++ix) {
                        double x = grid.node_x(ix), y = grid.node_x(iy);
                        double u, v;
                        if (grid.domain == SurfaceGrid::Domain::torus) {
                            u = x;
                            v = y;
                        } else {
                            u = (x + grid.R) / (2 * grid.R);
                            v = (y + grid.R) / (2 * grid.R);
                        }
                        target(ix, iy) += amp * std::cos(twoPi * (kx * u + ky * v) + phase);
                    }
            }
    }
    if (grid.domain == SurfaceGrid::Domain::disk) {
        // enforce the flat-outside-support invariant with the collar mask
        for (int iy = 0; iy < grid.N; ++iy)
            for (int ix = 0; ix < grid.N; ++ix) {
                double m = support_mask(grid, grid.node_x(ix), grid.node_x(iy));
                f.a(ix, iy) *= m;
                logb(ix, iy) *= m;
            }
    }
    f.b = logb.exp();
    f.validate(grid);
    return f;
}

void JField::validate(const SurfaceGrid& grid) const {
    require(a.rows() == grid.N && a.cols() == grid.N && b.rows() == grid.N &&
                b.cols() == grid.N,
            "JField: field size does not match the grid");
    require(a.allFinite() && b.allFinite(), "JField: non-finite fiber values");
    require((b > 0.0).all(), "JField: fiber imaginary part must be positive");
}

void JField::sample(const SurfaceGrid& grid, double x, double y, double& out_a,
                    double& out_b) const {
    const int N = grid.N;
    const double h = grid.h();
    double fx = (x - grid.x0()) / h;
    double fy = (y - grid.x0()) / h;
    if (grid.domain == SurfaceGrid::Domain::torus) {
        fx -= std::floor(fx / N) * N;
        fy -= std::floor(fy / N) * N;
        int ix = int(std::floor(fx)), iy = int(std::floor(fy));
        double tx = fx - ix, ty = fy - iy;
        int ix1 = (ix + 1) % N, iy1 = (iy + 1) % N;
        ix = ix % N;
        iy = iy % N;
        double a00 = a(ix, iy), a10 = a(ix1, iy), a01 = a(ix, iy1), a11 = a(ix1, iy1);
        double l00 = std::log(b(ix, iy)), l10 = std::log(b(ix1, iy)),
               l01 = std::log(b(ix, iy1)), l11 = std::log(b(ix1, iy1));
        out_a = (1 - tx) * (1 - ty) * a00 + tx * (1 - ty) * a10 + (1 - tx) * ty * a01 +
                tx * ty * a11;
        out_b = std::exp((1 - tx) * (1 - ty) * l00 + tx * (1 - ty) * l10 +
                         (1 - tx) * ty * l01 + tx * ty * l11);
        return;
    }
    // disk: flat continuation outside the grid
    auto av = [&](int ix, int iy) {
        if (ix < 0 || ix >= N || iy < 0 || iy >= N) return 0.0;
        return a(ix, iy);
    };
    auto lv = [&](int ix, int iy) {
        if (ix < 0 || ix >= N || iy < 0 || iy >= N) return 0.0;
        return std::log(b(ix, iy));
    };
    int ix = int(std::floor(fx)), iy = int(std::floor(fy));
    double tx = fx - ix, ty = fy - iy;
    out_a = (1 - tx) * (1 - ty) * av(ix, iy) + tx * (1 - ty) * av(ix + 1, iy) +
            (1 - tx) * ty * av(ix, iy + 1) + tx * ty * av(ix + 1, iy + 1);
    out_b = std::exp((1 - tx) * (1 - ty) * lv(ix, iy) + tx * (1 - ty) * lv(ix + 1, iy) +
                     (1 - tx) * ty * lv(ix, iy + 1) + tx * ty * lv(ix + 1, iy + 1));
}

Vec flatten_field(const SurfaceGrid& grid, const JField& f) {
    Vec v(4 * grid.size());
    for (int iy = 0; iy < grid.N; ++iy)
        for (int ix = 0; ix < grid.N; ++ix) {
            auto j = fiber_j(f.a(ix, iy), f.b(ix, iy));
            int base = 4 * grid.idx(ix, iy);
            for (int c = 0; c < 4; ++c) v[base + c] = j[c];
        }
    return v;
}

JField unflatten_field(const SurfaceGrid& grid, const Vec& v) {
    require(v.size() == 4 * grid.size(), "unflatten_field: size mismatch");
    JField f;
    f.a = Field::Zero(grid.N, grid.N);
    f.b = Field::Zero(grid.N, grid.N);
    for (int iy = 0; iy < grid.N; ++iy)
        for (int ix = 0; ix < grid.N; ++ix) {
            int base = 4 * grid.idx(ix, iy);
            M2 j{v[base], v[base + 1], v[base + 2], v[base + 3]};
            double a, b;
            fiber_to_siegel(j, a, b);
            f.a(ix, iy) = a;
            f.b(ix, iy) = b;
        }
    f.validate(grid);
    return f;
}

// ---------------------------------------------------------------------------
// binary grid files

void write_grid_file(const std::string& path, const SurfaceGrid& grid,
                     const std::vector<const Field*>& layers) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "write_grid_file: cannot open " + path);
    const char magic[8] = {'A', 'Q', 'M', 'G', 'R', 'D', '0', '1'};
    f.write(magic, 8);
    std::uint32_t n = std::uint32_t(grid.N);
    std::uint32_t tag = grid.domain == SurfaceGrid::Domain::torus ? 0u : 1u;
    f.write(reinterpret_cast<const char*>(&n), 4);
    f.write(reinterpret_cast<const char*>(&tag), 4);
    for (const Field* layer : layers) {
        require(layer->rows() == grid.N && layer->cols() == grid.N,
                "write_grid_file: layer size mismatch");
        // row-major: iy outer, ix inner
        for (int iy = 0; iy < grid.N; ++iy)
            for (int ix = 0; ix < grid.N; ++ix) {
                double v = (*layer)(ix, iy);
                f.write(reinterpret_cast<const char*>(&v), 8);
            }
    }
}

std::vector<Field> read_grid_file(const std::string& path, SurfaceGrid& grid_out) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "read_grid_file: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    require(f.gcount() == 8 && std::memcmp(magic, "AQMGRD01", 8) == 0,
            "read_grid_file: bad magic");
    std::uint32_t n = 0, tag = 0;
    f.read(reinterpret_cast<char*>(&n), 4);
    f.read(reinterpret_cast<char*>(&tag), 4);
    require(n >= 16 && n <= 4096, "read_grid_file: implausible N");
    grid_out.N = int(n);
    grid_out.domain = tag == 0 ? SurfaceGrid::Domain::torus : SurfaceGrid::Domain::disk;
    std::vector<Field> layers;
    for (;;) {
        Field layer(grid_out.N, grid_out.N);
        bool ok = true;
        for (int iy = 0; iy < grid_out.N && ok; ++iy)
            for (int ix = 0; ix < grid_out.N; ++ix) {
                double v;
                f.read(reinterpret_cast<char*>(&v), 8);
                if (f.gcount() != 8) {
                    require(iy == 0 && ix == 0, "read_grid_file: truncated layer");
                    ok = false;
                    break;
                }
                layer(ix, iy) = v;
            }
        if (!ok) break;
        layers.push_back(std::move(layer));
        if (f.peek() == EOF) break;
    }
    return layers;
}

// ---------------------------------------------------------------------------
// curvature

namespace {
inline double det3(double a00, double a01, double a02, double a10, double a11, double a12,
                   double a20, double a21, double a22) {
    return a00 * (a11 * a22 - a12 * a21) - a01 * (a10 * a22 - a12 * a20) +
           a02 * (a10 * a21 - a11 * a20);
}
} // namespace

Field gaussian_curvature_metric(const SurfaceGrid& grid, const Field& E, const Field& F,
                                const Field& G) {
    Stencil se{grid, 1.0}, sf{grid, 0.0}, sg{grid, 1.0};
    Field K(grid.N, grid.N);
    for (int iy = 0; iy < grid.N; ++iy)
        for (int ix = 0; ix < grid.N; ++ix) {
            double e = E(ix, iy), f = F(ix, iy), g = G(ix, iy);
            double eu = se.dx(E, ix, iy), ev = se.dy(E, ix, iy);
            double gu = sg.dx(G, ix, iy), gv = sg.dy(G, ix, iy);
            double fu = sf.dx(F, ix, iy), fv = sf.dy(F, ix, iy);
            double evv = se.dyy(E, ix, iy), guu = sg.dxx(G, ix, iy);
            double fuv = sf.dxy(F, ix, iy);
            double m1 = det3(-0.5 * evv + fuv - 0.5 * guu, 0.5 * eu, fu - 0.5 * ev,
                             fv - 0.5 * gu, e, f, 0.5 * gv, f, g);
            double m2 = det3(0.0, 0.5 * ev, 0.5 * gu, 0.5 * ev, e, f, 0.5 * gu, f, g);
            double den = e * g - f * f;
            K(ix, iy) = (m1 - m2) / (den * den);
        }
    return K;
}

void metric_of_jfield(const JField& j, Field& E, Field& F, Field& G) {
    E = j.b.inverse();
    F = -j.a * j.b.inverse();
    G = (j.a.square() + j.b.square()) * j.b.inverse();
}

Field hermitian_scalar_curvature(const SurfaceGrid& grid, const JField& j) {
    j.validate(grid);
    Field E, F, G;
    metric_of_jfield(j, E, F, G);
    Field S = 2.0 * gaussian_curvature_metric(grid, E, F, G);
    if (!S.allFinite() || S.abs().maxCoeff() > 1e8)
        throw aqm::numerics_error(
            "hermitian_scalar_curvature: stencil blowup (field not smooth at grid scale)");
    return S;
}

double moment_map_ham(const SurfaceGrid& grid, const Field& H, const JField& j) {
    Field S = hermitian_scalar_curvature(grid, j);
    return (S * H).sum() * grid.cell_area();
}

// ---------------------------------------------------------------------------
// schedules

namespace {
inline double cinf_step(double s) {
    // 0 for s<=0, 1 for s>=1, C-infinity between
    auto f = [](double u) { return u > 0 ? std::exp(-1.0 / u) : 0.0; };
    double a = f(s), b = f(1.0 - s);
    return a / (a + b);
}
} // namespace

double support_mask(const SurfaceGrid& grid, double x, double y) {
    if (grid.domain == SurfaceGrid::Domain::torus) return 1.0;
    double rho = std::max(std::fabs(x), std::fabs(y)) / grid.R;
    if (rho <= 0.7) return 1.0;
    if (rho >= 0.9) return 0.0;
    return cinf_step((0.9 - rho) / 0.2);
}

HamSchedule HamSchedule::from_expression(const SurfaceGrid& grid, const expr::Expr& H,
                                         Normalization norm, double duration) {
    require(duration > 0, "HamSchedule: duration must be positive");
    require(H.valid(), "HamSchedule: empty Hamiltonian expression");
    if (grid.domain == SurfaceGrid::Domain::torus)
        require(norm == Normalization::zero_mean,
                "HamSchedule: torus flows use zero-mean normalization");
    HamSchedule s;
    bool disk = grid.domain == SurfaceGrid::Domain::disk;
    SurfaceGrid g = grid;
    expr::Expr h = H;
    s.eval_ = [g, h, disk](double u, double x, double y) {
        double v = h.eval(u, x, y);
        return disk ? v * support_mask(g, x, y) : v;
    };
    s.duration_ = duration;
    s.knots_ = {0.0, duration};
    s.autonomous_ = !H.depends_on_t();
    s.norm_ = norm;
    s.desc_ = "H = " + H.text();
    if (disk) {
        // record how much the collar mask removes, relative to the peak
        double worst = 0.0, scale = 0.0;
        int M = std::max(grid.N, 48);
        for (int ts = 0; ts <= 4; ++ts) {
            double u = duration * ts / 4.0;
            for (int iy = 0; iy <= M; ++iy)
                for (int ix = 0; ix <= M; ++ix) {
                    double x = -grid.R + 2 * grid.R * ix / M;
                    double y = -grid.R + 2 * grid.R * iy / M;
                    double raw = H.eval(u, x, y);
                    scale = std::max(scale, std::fabs(raw));
                    double m = support_mask(grid, x, y);
                    if (m < 1.0) worst = std::max(worst, std::fabs(raw * (1.0 - m)));
                }
            if (s.autonomous_) break;
        }
        s.support_defect_ = scale > 0 ? worst / scale : 0.0;
    }
    return s;
}

HamSchedule HamSchedule::power(int k) const {
    require(k >= 1, "HamSchedule::power: k must be positive");
    if (k == 1) return *this;
    HamSchedule s = *this;
    double T = duration_;
    if (autonomous_) {
        s.duration_ = k * T;
        s.knots_ = {0.0, k * T};
    } else {
        auto base = eval_;
        s.eval_ = [base, T](double u, double x, double y) {
            double w = std::fmod(u, T);
            if (u > 0 && w == 0.0) w = T; // right-continuous at the junctions
            return base(w, x, y);
        };
        s.duration_ = k * T;
        s.knots_.clear();
        for (int j = 0; j < k; ++j)
            for (std::size_t i = 0; i + 1 < knots_.size(); ++i)
                s.knots_.push_back(j * T + knots_[i]);
        s.knots_.push_back(k * T);
    }
    s.desc_ = desc_ + " ^" + std::to_string(k);
    return s;
}

HamSchedule HamSchedule::reversed() const {
    HamSchedule s = *this;
    auto base = eval_;
    double T = duration_;
    s.eval_ = [base, T](double u, double x, double y) { return -base(T - u, x, y); };
    s.knots_.clear();
    for (auto it = knots_.rbegin(); it != knots_.rend(); ++it) s.knots_.push_back(T - *it);
    s.desc_ = "reverse(" + desc_ + ")";
    return s;
}

HamSchedule HamSchedule::product_second_then_first(const HamSchedule& first_factor,
                                                   const HamSchedule& second_factor) {
    // represents (first_factor-tilde) * (second_factor-tilde): the second
    // factor's schedule runs first in time
    require(first_factor.norm_ == second_factor.norm_,
            "HamSchedule::product: normalization mismatch");
    HamSchedule s;
    auto e1 = first_factor.eval_;
    auto e2 = second_factor.eval_;
    double t2 = second_factor.duration_;
    s.eval_ = [e1, e2, t2](double u, double x, double y) {
        return u <= t2 ? e2(u, x, y) : e1(u - t2, x, y);
    };
    s.duration_ = first_factor.duration_ + second_factor.duration_;
    s.knots_ = second_factor.knots_;
    s.knots_.pop_back();
    for (double k : first_factor.knots_) s.knots_.push_back(t2 + k);
    s.autonomous_ = false;
    s.norm_ = first_factor.norm_;
    s.support_defect_ =
        std::max(first_factor.support_defect_, second_factor.support_defect_);
    s.desc_ = "(" + first_factor.desc_ + ") * (" + second_factor.desc_ + ")";
    return s;
}

HamSchedule HamSchedule::translated(double ax, double ay) const {
    HamSchedule s = *this;
    auto base = eval_;
    s.eval_ = [base, ax, ay](double u, double x, double y) {
        return base(u, x - ax, y - ay);
    };
    s.desc_ = "translate(" + desc_ + ")";
    return s;
}

Field HamSchedule::normalized_grid(const SurfaceGrid& grid, double u) const {
    Field H(grid.N, grid.N);
    for (int iy = 0; iy < grid.N; ++iy)
        for (int ix = 0; ix < grid.N; ++ix)
            H(ix, iy) = eval_(u, grid.node_x(ix), grid.node_x(iy));
    if (norm_ == Normalization::zero_mean) H -= H.mean();
    return H;
}

void HamSchedule::gradient(double u, double x, double y, double& hx, double& hy) const {
    const double h = fd_grad_;
    hx = (eval_(u, x + h, y) - eval_(u, x - h, y)) / (2 * h);
    hy = (eval_(u, x, y + h) - eval_(u, x, y - h)) / (2 * h);
}

void HamSchedule::hessian(double u, double x, double y, double& hxx, double& hxy,
                          double& hyy) const {
    const double h = fd_hess_;
    double c = eval_(u, x, y);
    hxx = (eval_(u, x + h, y) - 2 * c + eval_(u, x - h, y)) / (h * h);
    hyy = (eval_(u, x, y + h) - 2 * c + eval_(u, x, y - h)) / (h * h);
    hxy = (eval_(u, x + h, y + h) - eval_(u, x + h, y - h) - eval_(u, x - h, y + h) +
           eval_(u, x - h, y - h)) /
          (4 * h * h);
}

// ---------------------------------------------------------------------------
// flow integration

namespace {

// Hamiltonian vector field X_H = J0 grad H = (-dH/dy, dH/dx), and its
// Jacobian DX = J0 Hess H. sign = -1 integrates the inverse isotopy.
struct FieldEval {
    const HamSchedule& sched;
    double sign;
    void operator()(double u, double x, double y, double& vx, double& vy) const {
        double hx, hy;
        sched.gradient(u, x, y, hx, hy);
        vx = sign * -hy;
        vy = sign * hx;
    }
    void jac(double u, double x, double y, M2& dx) const {
        double hxx, hxy, hyy;
        sched.hessian(u, x, y, hxx, hxy, hyy);
        dx = {sign * -hxy, sign * -hyy, sign * hxx, sign * hxy};
    }
};

struct NodeState {
    double x, y;
    M2 m; // linearization
};

// one RK4 step of (position, linearization) for d/du = sign * X(u_of(u), .)
// u_of maps integration time to schedule time (identity forward, reflected
// for per-checkpoint backward runs).
template <typename UMap>
void rk4_step(const FieldEval& f, const UMap& u_of, double u, double du, NodeState& s) {
    auto eval = [&](double uu, const NodeState& st, NodeState& d) {
        f(u_of(uu), st.x, st.y, d.x, d.y);
        M2 j;
        f.jac(u_of(uu), st.x, st.y, j);
        d.m = mul2(j, st.m);
    };
    NodeState k1, k2, k3, k4, tmp;
    eval(u, s, k1);
    tmp = {s.x + 0.5 * du * k1.x, s.y + 0.5 * du * k1.y, add2(s.m, scale2(k1.m, 0.5 * du))};
    eval(u + 0.5 * du, tmp, k2);
    tmp = {s.x + 0.5 * du * k2.x, s.y + 0.5 * du * k2.y, add2(s.m, scale2(k2.m, 0.5 * du))};
    eval(u + 0.5 * du, tmp, k3);
    tmp = {s.x + du * k3.x, s.y + du * k3.y, add2(s.m, scale2(k3.m, du))};
    eval(u + du, tmp, k4);
    s.x += du / 6.0 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
    s.y += du / 6.0 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y);
    s.m = add2(s.m, scale2(add2(add2(k1.m, scale2(add2(k2.m, k3.m), 2.0)), k4.m), du / 6.0));
}

// polar angle of the unitary part of a 2x2 symplectic matrix
inline double polar_angle(const M2& a) {
    // P = sqrt(A A^T) via the det-1 closed form, U = P^-1 A
    M2 aat = {a[0] * a[0] + a[1] * a[1], a[0] * a[2] + a[1] * a[3],
              a[2] * a[0] + a[3] * a[1], a[2] * a[2] + a[3] * a[3]};
    double d = std::sqrt(std::max(1e-300, det2(aat)));
    // normalize to det 1 for the closed-form sqrt, then undo
    M2 n = scale2(aat, 1.0 / d);
    M2 p = sqrt_spd_det1(n);
    M2 u = mul2(inv2(p), a);
    return std::atan2(u[2], u[0]);
}

} // namespace

int FlowState::checkpoint_at(double u) const {
    int lo = 0, hi = int(times.size()) - 1;
    if (u <= times.front()) return 0;
    if (u >= times.back()) return hi - 1 >= 0 ? hi - 1 : 0;
    while (lo + 1 < hi) {
        int mid = (lo + hi) / 2;
        (times[mid] <= u ? lo : hi) = mid;
    }
    return lo;
}

FlowState integrate_flow(const SurfaceGrid& grid, const HamSchedule& sched,
                         const FlowOptions& opt) {
    require(opt.dt > 0, "integrate_flow: dt must be positive");
    require(opt.checkpoints_per_unit >= 4, "integrate_flow: need at least 4 checkpoints");
    FlowState st;
    st.grid = grid;
    const double T = sched.duration();

    // checkpoint times: uniform grid united with the schedule knots
    {
        int m = std::max(4, int(std::ceil(T * opt.checkpoints_per_unit)));
        std::vector<double> ts;
        for (int i = 0; i <= m; ++i) ts.push_back(T * i / m);
        for (double k : sched.knots()) ts.push_back(std::min(T, std::max(0.0, k)));
        std::sort(ts.begin(), ts.end());
        for (double t : ts)
            if (st.times.empty() || t - st.times.back() > 1e-12 * std::max(1.0, T))
                st.times.push_back(t);
        if (std::fabs(st.times.back() - T) > 1e-12) st.times.push_back(T);
    }
    const int n_nodes = grid.size();
    const int n_cp = int(st.times.size());
    const bool autonomous = sched.autonomous();

    std::vector<double> drift(n_nodes, 0.0);

    // ---- inverse data
    if (opt.inverse != InverseMode::none) {
        st.inverse_data.assign(n_cp, Eigen::MatrixXd::Zero(n_nodes, 12));
        st.has_bdot = autonomous;
        FieldEval back{sched, -1.0};
        FieldEval fwd{sched, +1.0};
        if (autonomous) {
            aqm::parallel_for(std::size_t(n_nodes), [&](std::size_t b, std::size_t e) {
                for (std::size_t p = b; p < e; ++p) {
                    int ix = int(p) % grid.N, iy = int(p) / grid.N;
                    NodeState s{grid.node_x(ix), grid.node_x(iy), kId};
                    auto ident = [](double uu) { return uu; };
                    for (int j = 0; j < n_cp; ++j) {
                        if (j > 0) {
                            double a = st.times[j - 1], b2 = st.times[j];
                            int nsub = std::max(1, int(std::ceil((b2 - a) / opt.dt)));
                            double du = (b2 - a) / nsub;
                            for (int ss = 0; ss < nsub; ++ss)
                                rk4_step(back, ident, a + ss * du, du, s);
                        }
                        auto row = st.inverse_data[j].row(int(p));
                        double vx, vy;
                        back(st.times[j], s.x, s.y, vx, vy);
                        M2 jm;
                        back.jac(st.times[j], s.x, s.y, jm);
                        M2 bdot = mul2(jm, s.m);
                        row << s.x, s.y, vx, vy, s.m[0], s.m[1], s.m[2], s.m[3], bdot[0],
                            bdot[1], bdot[2], bdot[3];
                        drift[p] = std::max(drift[p], std::fabs(det2(s.m) - 1.0));
                    }
                }
            }, opt.threads);
        } else {
            // per-checkpoint backward runs along the time-dependent field;
            // substeps must not straddle the schedule's smoothness knots
            int first = opt.inverse == InverseMode::full ? 0 : n_cp - 1;
            std::vector<std::vector<double>> sigma_breaks(n_cp);
            for (int j = first; j < n_cp; ++j) {
                double uj = st.times[j];
                std::vector<double>& br = sigma_breaks[j];
                br.push_back(0.0);
                for (auto it = sched.knots().rbegin(); it != sched.knots().rend(); ++it)
                    if (*it > 1e-14 && *it < uj - 1e-14) br.push_back(uj - *it);
                std::sort(br.begin(), br.end());
                br.push_back(uj);
            }
            aqm::parallel_for(std::size_t(n_nodes), [&](std::size_t b, std::size_t e) {
                for (std::size_t p = b; p < e; ++p) {
                    int ix = int(p) % grid.N, iy = int(p) / grid.N;
                    for (int j = first; j < n_cp; ++j) {
                        double uj = st.times[j];
                        NodeState s{grid.node_x(ix), grid.node_x(iy), kId};
                        // integrate sigma in [0, uj] with field -X(uj - sigma, .)
                        const std::vector<double>& br = sigma_breaks[j];
                        for (std::size_t seg = 0; seg + 1 < br.size(); ++seg) {
                            double a = br[seg], b2 = br[seg + 1];
                            if (b2 - a < 1e-15) continue;
                            // stage times stay strictly inside the smooth piece
                            double ulo = uj - b2, uhi = uj - a;
                            double eps = 1e-9 * (b2 - a);
                            auto umap = [uj, ulo, uhi, eps](double sig) {
                                double u = uj - sig;
                                return std::min(std::max(u, ulo + eps), uhi - eps);
                            };
                            int nsub = std::max(1, int(std::ceil((b2 - a) / opt.dt)));
                            double du = (b2 - a) / nsub;
                            for (int ss = 0; ss < nsub; ++ss)
                                rk4_step(back, umap, a + ss * du, du, s);
                        }
                        auto row = st.inverse_data[j].row(int(p));
                        // ydot = -B X_uj(p); Bdot unavailable here
                        double vx, vy;
                        fwd(uj, grid.node_x(ix), grid.node_x(iy), vx, vy);
                        double ydx = -(s.m[0] * vx + s.m[1] * vy);
                        double ydy = -(s.m[2] * vx + s.m[3] * vy);
                        row << s.x, s.y, ydx, ydy, s.m[0], s.m[1], s.m[2], s.m[3], 0, 0, 0, 0;
                        drift[p] = std::max(drift[p], std::fabs(det2(s.m) - 1.0));
                    }
                }
            }, opt.threads);
        }
    }

    // ---- forward data (+ winding)
    if (opt.store_forward || opt.track_winding) {
        if (opt.store_forward)
            st.forward_data.assign(n_cp, Eigen::MatrixXd::Zero(n_nodes, 12));
        if (opt.track_winding)
            st.winding_turns.assign(n_cp, Eigen::VectorXd::Zero(n_nodes));
        FieldEval fwd{sched, +1.0};
        std::vector<int> bad_nodes(n_nodes, 0);
        aqm::parallel_for(std::size_t(n_nodes), [&](std::size_t b, std::size_t e) {
            for (std::size_t p = b; p < e; ++p) {
                int ix = int(p) % grid.N, iy = int(p) / grid.N;
                NodeState s{grid.node_x(ix), grid.node_x(iy), kId};
                double angle_acc = 0.0, prev_angle = 0.0;
                for (int j = 0; j < n_cp; ++j) {
                    if (j > 0) {
                        double a = st.times[j - 1], b2 = st.times[j];
                        double eps = 1e-9 * (b2 - a);
                        auto tmap = [a, b2, eps](double uu) {
                            return std::min(std::max(uu, a + eps), b2 - eps);
                        };
                        int nsub = std::max(1, int(std::ceil((b2 - a) / opt.dt)));
                        double du = (b2 - a) / nsub;
                        for (int ss = 0; ss < nsub; ++ss) {
                            rk4_step(fwd, tmap, a + ss * du, du, s);
                            if (opt.track_winding) {
                                double th = polar_angle(s.m);
                                double d = th - prev_angle;
                                while (d > M_PI) d -= 2 * M_PI;
                                while (d < -M_PI) d += 2 * M_PI;
                                if (std::fabs(d) >= M_PI * (1.0 - 1e-9)) bad_nodes[p] = 1;
                                angle_acc += d;
                                prev_angle = th;
                            }
                        }
                    }
                    if (opt.store_forward) {
                        auto row = st.forward_data[j].row(int(p));
                        double vx, vy;
                        fwd(st.times[j], s.x, s.y, vx, vy);
                        M2 jm;
                        fwd.jac(st.times[j], s.x, s.y, jm);
                        M2 adot = mul2(jm, s.m);
                        row << s.x, s.y, vx, vy, s.m[0], s.m[1], s.m[2], s.m[3], adot[0],
                            adot[1], adot[2], adot[3];
                    }
                    if (opt.track_winding)
                        st.winding_turns[j][int(p)] = angle_acc / (2 * M_PI);
                    drift[p] = std::max(drift[p], std::fabs(det2(s.m) - 1.0));
                }
            }
        }, opt.threads);
        for (int p = 0; p < n_nodes; ++p)
            if (bad_nodes[p])
                throw aqm::numerics_error(
                    "integrate_flow: undersampled winding at node (" +
                    std::to_string(p % grid.N) + "," + std::to_string(p / grid.N) +
                    "); reduce dt");
    }

    for (int p = 0; p < n_nodes; ++p) st.max_det_drift = std::max(st.max_det_drift, drift[p]);
    if (st.max_det_drift > opt.tol_flow)
        throw aqm::numerics_error("integrate_flow: symplecticity drift " +
                                      std::to_string(st.max_det_drift) +
                                      " beyond tolerance; reduce dt",
                                  st.max_det_drift);
    return st;
}

// ---------------------------------------------------------------------------
// checkpoint interpolation

namespace {

// cubic Hermite basis on [0,1]
inline double hermite01(double f0, double f1, double d0, double d1, double len, double s) {
    double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * f0 + (s3 - 2 * s2 + s) * len * d0 +
           (-2 * s3 + 3 * s2) * f1 + (s3 - s2) * len * d1;
}

// evaluate component c of the inverse data at time u (Hermite if derivatives
// are stored, centered cubic Lagrange otherwise)
struct InverseEval {
    const FlowState& st;

    // out: y (0,1), B (2..5)
    void eval(int node, double u, double out[8]) const {
        // exact checkpoint hit (also the only valid case for final-only data)
        if (u >= st.times.back() - 1e-14 * std::max(1.0, st.times.back())) {
            const auto& r = st.inverse_data.back();
            out[0] = r(node, 0);
            out[1] = r(node, 1);
            for (int c = 0; c < 4; ++c) out[2 + c] = r(node, 4 + c);
            return;
        }
        int j = st.checkpoint_at(u);
        double t0 = st.times[j], t1 = st.times[j + 1];
        double len = t1 - t0;
        double s = (u - t0) / len;
        const auto& r0 = st.inverse_data[j];
        const auto& r1 = st.inverse_data[j + 1];
        if (st.has_bdot) {
            // y (components 0,1) with ydot (2,3); B (4..7) with Bdot (8..11)
            out[0] = hermite01(r0(node, 0), r1(node, 0), r0(node, 2), r1(node, 2), len, s);
            out[1] = hermite01(r0(node, 1), r1(node, 1), r0(node, 3), r1(node, 3), len, s);
            for (int c = 0; c < 4; ++c)
                out[2 + c] = hermite01(r0(node, 4 + c), r1(node, 4 + c), r0(node, 8 + c),
                                       r1(node, 8 + c), len, s);
            return;
        }
        // Lagrange cubic through checkpoints j-1..j+2 (clamped at the ends)
        int n = int(st.times.size());
        int a = std::max(0, j - 1);
        int d = std::min(n - 1, j + 2);
        while (d - a < 3 && (a > 0 || d < n - 1)) {
            if (a > 0) --a;
            else ++d;
        }
        double tt[4], w[4];
        int idx[4];
        for (int q = 0; q < 4; ++q) {
            idx[q] = std::min(a + q, n - 1);
            tt[q] = st.times[idx[q]];
        }
        for (int q = 0; q < 4; ++q) {
            w[q] = 1.0;
            for (int r = 0; r < 4; ++r)
                if (r != q) w[q] *= (u - tt[r]) / (tt[q] - tt[r]);
        }
        auto comp = [&](int c) {
            double v = 0;
            for (int q = 0; q < 4; ++q) v += w[q] * st.inverse_data[idx[q]](node, c);
            return v;
        };
        out[0] = comp(0);
        out[1] = comp(1);
        for (int c = 0; c < 4; ++c) out[2 + c] = comp(4 + c);
    }
};

} // namespace

JField pushforward_j(const FlowState& state, double u, const JField& j) {
    const SurfaceGrid& grid = state.grid;
    j.validate(grid);
    require(!state.inverse_data.empty(), "pushforward_j: flow has no inverse data");
    InverseEval ev{state};
    JField out;
    out.a = Field::Zero(grid.N, grid.N);
    out.b = Field::Zero(grid.N, grid.N);
    for (int iy = 0; iy < grid.N; ++iy)
        for (int ix = 0; ix < grid.N; ++ix) {
            int node = grid.idx(ix, iy);
            double d[8];
            ev.eval(node, u, d);
            double a, b;
            j.sample(grid, d[0], d[1], a, b);
            M2 jb = fiber_j(a, b);
            M2 B{d[2], d[3], d[4], d[5]};
            M2 res = mul2(mul2(inv2(B), jb), B);
            double na, nb;
            fiber_to_siegel(res, na, nb);
            if (!std::isfinite(na) || !(nb > 0))
                throw aqm::numerics_error("pushforward_j: interpolation left the fiber");
            out.a(ix, iy) = na;
            out.b(ix, iy) = nb;
        }
    return out;
}

// ---------------------------------------------------------------------------
// engine instance

qmeng::Instance make_ham_instance(const SurfaceGrid& grid) {
    qmeng::Instance inst;
    inst.dim = Eigen::Index(4) * grid.size();
    const double dA = grid.cell_area();
    const int n_nodes = grid.size();
    inst.form = [dA, n_nodes](const Vec& p, const Vec& a, const Vec& b) {
        double sum = 0.0;
        for (int q = 0; q < n_nodes; ++q) {
            const double* J = p.data() + 4 * q;
            const double* A = a.data() + 4 * q;
            const double* B = b.data() + 4 * q;
            // 1/4 tr(J A B)
            double ab0 = A[0] * B[0] + A[1] * B[2];
            double ab1 = A[0] * B[1] + A[1] * B[3];
            double ab2 = A[2] * B[0] + A[3] * B[2];
            double ab3 = A[2] * B[1] + A[3] * B[3];
            sum += 0.25 * (J[0] * ab0 + J[1] * ab2 + J[2] * ab1 + J[3] * ab3);
        }
        return sum * dA;
    };
    inst.geodesic = [n_nodes](const Vec& x, const Vec& y) {
        auto geos = std::make_shared<std::vector<NodeGeo>>(n_nodes);
        bool constant = (x - y).lpNorm<Eigen::Infinity>() < 1e-14;
        if (!constant)
            for (int q = 0; q < n_nodes; ++q) {
                M2 ja{x[4 * q], x[4 * q + 1], x[4 * q + 2], x[4 * q + 3]};
                M2 jb{y[4 * q], y[4 * q + 1], y[4 * q + 2], y[4 * q + 3]};
                (*geos)[q].build(ja, jb);
            }
        Vec xc = x;
        return [geos, xc, constant, n_nodes](double s) {
            if (constant) return xc;
            Vec out(xc.size());
            for (int q = 0; q < n_nodes; ++q) {
                M2 j = (*geos)[q].eval(s);
                out[4 * q] = j[0];
                out[4 * q + 1] = j[1];
                out[4 * q + 2] = j[2];
                out[4 * q + 3] = j[3];
            }
            return out;
        };
    };
    return inst;
}

double ham_defect_bound(const SurfaceGrid& grid) {
    double area = grid.span() * grid.span();
    return area * M_PI / 2.0;
}

// ---------------------------------------------------------------------------
// HamPath

HamPath::HamPath(const SurfaceGrid& grid, HamSchedule sched, JField base, HamPathOptions opt)
    : grid_(grid), sched_(std::move(sched)), base_(std::move(base)), opt_(opt) {
    base_.validate(grid_);
    FlowOptions fo = opt_.flow;
    fo.store_forward = false;
    fo.track_winding = false;
    fo.inverse = InverseMode::full;
    state_ = std::make_shared<FlowState>(integrate_flow(grid_, sched_, fo));
    base_ambient_ = flatten_field(grid_, base_);
    base_is_flat_ = (base_.a.abs().maxCoeff() == 0.0) && ((base_.b - 1.0).abs().maxCoeff() == 0.0);
}

std::vector<double> HamPath::knots() const {
    std::vector<double> k;
    double T = sched_.duration();
    for (double t : state_->times) k.push_back(t / T);
    k.front() = 0.0;
    k.back() = 1.0;
    return k;
}

JField HamPath::orbit_field(double u) const {
    InverseEval ev{*state_};
    JField out;
    out.a = Field::Zero(grid_.N, grid_.N);
    out.b = Field::Zero(grid_.N, grid_.N);
    for (int iy = 0; iy < grid_.N; ++iy)
        for (int ix = 0; ix < grid_.N; ++ix) {
            int node = grid_.idx(ix, iy);
            double d[8];
            ev.eval(node, u, d);
            M2 jb;
            if (base_is_flat_) {
                jb = kJ0;
            } else {
                double a, b;
                base_.sample(grid_, d[0], d[1], a, b);
                jb = fiber_j(a, b);
            }
            M2 B{d[2], d[3], d[4], d[5]};
            M2 res = mul2(mul2(inv2(B), jb), B);
            double na, nb;
            fiber_to_siegel(res, na, nb);
            out.a(ix, iy) = na;
            out.b(ix, iy) = nb;
        }
    return out;
}

Vec HamPath::orbit_point(double t, const Vec& x) const {
    require((x - base_ambient_).lpNorm<Eigen::Infinity>() < 1e-9,
            "HamPath::orbit_point: basepoint does not match this path's base field; "
            "construct a HamPath for that basepoint");
    double u = t * sched_.duration();
    u = std::min(std::max(u, 0.0), sched_.duration());
    return flatten_field(grid_, orbit_field(u));
}

double HamPath::moment(double t, const Vec& x) const {
    require((x - base_ambient_).lpNorm<Eigen::Infinity>() < 1e-9,
            "HamPath::moment: basepoint mismatch");
    double T = sched_.duration();
    double u = std::min(std::max(t * T, 0.0), T);
    Field H = sched_.normalized_grid(grid_, u);
    JField delta = orbit_field(u);
    return T * moment_map_ham(grid_, H, delta);
}

HamPath path_product(const HamPath& a, const HamPath& b) {
    require(a.grid_.N == b.grid_.N && a.grid_.domain == b.grid_.domain,
            "path_product: grid mismatch");
    HamSchedule s = HamSchedule::product_second_then_first(a.sched_, b.sched_);
    return HamPath(a.grid_, s, a.base_, a.opt_);
}

HamPath path_power(const HamPath& p, int k) {
    if (k == 1) return p;
    HamPathOptions opt = p.opt_;
    if (k >= 4)
        opt.flow.checkpoints_per_unit =
            std::min(opt.flow.checkpoints_per_unit, p.opt_.power_checkpoint_cap);
    return HamPath(p.grid_, p.sched_.power(k), p.base_, opt);
}

HamPath path_reverse(const HamPath& p) {
    return HamPath(p.grid_, p.sched_.reversed(), p.base_, p.opt_);
}

// ---------------------------------------------------------------------------
// quasimorphism companions

qmeng::QmReport frak_s(const SurfaceGrid& grid, const JField& j0, const HamSchedule& sched,
                       const FrakSOptions& opt) {
    HamPath path(grid, sched, j0, opt.path);
    qmeng::Instance inst = make_ham_instance(grid);
    return qmeng::nu_x(inst, path, path.base_ambient(), opt.quad, "J0-field");
}

double calabi(const SurfaceGrid& grid, const HamSchedule& sched, int time_samples) {
    require(grid.domain == SurfaceGrid::Domain::disk,
            "calabi: defined for compactly supported (disk-domain) flows");
    require(sched.normalization() == Normalization::compact_support,
            "calabi: schedule must be compact-support normalized");
    // support check: the mask may only trim a negligible tail
    if (sched.support_defect() > 0.02)
        throw aqm::validation_error(
            "calabi: Hamiltonian support reaches the boundary collar (defect " +
            std::to_string(sched.support_defect()) + ")");

    std::vector<double> knots;
    for (int i = 0; i <= time_samples; ++i)
        knots.push_back(sched.duration() * i / time_samples);
    auto f = [&](double u) {
        Field H = sched.normalized_grid(grid, u);
        return H.sum() * grid.cell_area();
    };
    return aqm::composite_simpson(knots, f);
}

BargeGhysResult barge_ghys_tau(const SurfaceGrid& grid, const HamSchedule& sched, int k_max,
                               const FlowOptions& opt) {
    require(k_max >= 1, "barge_ghys_tau: k_max must be positive");
    BargeGhysResult r;
    FlowOptions fo = opt;
    fo.store_forward = false;
    fo.track_winding = true;
    fo.inverse = InverseMode::none;
    double prev = 0.0;
    double max_defect = 0.0;
    int last_k = 1;
    if (sched.autonomous()) {
        // one integration over [0, k_max T]; tau(p^k) read at u = k T
        int kk = 1;
        while (kk * 2 <= k_max) kk *= 2;
        FlowState st = integrate_flow(grid, sched.power(kk), fo);
        for (int k = 1; k <= k_max; k *= 2) {
            double u = k * sched.duration();
            int j = st.checkpoint_at(u);
            if (std::fabs(st.times[j + 1] - u) < std::fabs(st.times[j] - u)) ++j;
            double tau = 2.0 * st.winding_turns[j].sum() * grid.cell_area();
            r.per_k.push_back(tau / k);
            if (k > 1) max_defect = std::max(max_defect, std::fabs(tau - 2.0 * prev));
            prev = tau;
            last_k = k;
        }
    } else {
        for (int k = 1; k <= k_max; k *= 2) {
            FlowState st = integrate_flow(grid, sched.power(k), fo);
            double tau = 2.0 * st.winding_turns.back().sum() * grid.cell_area();
            r.per_k.push_back(tau / k);
            if (k > 1) max_defect = std::max(max_defect, std::fabs(tau - 2.0 * prev));
            prev = tau;
            last_k = k;
        }
    }
    r.tau_turns = r.per_k.back();
    double area = grid.span() * grid.span();
    r.half_width = std::max(max_defect, area) / last_k;
    return r;
}

LocalTypeReport local_type_report(const SurfaceGrid& grid, const HamSchedule& sched,
                                  double kappa_trace, int k_max, const FrakSOptions& opt) {
    LocalTypeReport rep;
    HamPath path(grid, sched, JField::flat(grid), opt.path);
    qmeng::Instance inst = make_ham_instance(grid);
    auto hom = qmeng::homogenize(inst, path, path.base_ambient(), k_max, opt.quad,
                                 ham_defect_bound(grid));
    rep.s_hom = hom.estimate;
    rep.s_half_width = hom.half_width + hom.quad_error;
    auto tau = barge_ghys_tau(grid, sched, k_max, opt.path.flow);
    rep.tau_turns = tau.tau_turns;
    rep.tau_half_width = tau.half_width;
    rep.kappa = kappa_trace;
    rep.calabi_value =
        grid.domain == SurfaceGrid::Domain::disk ? calabi(grid, sched) : 0.0;
    // flat base structure: average Hermitian scalar curvature c = 0
    rep.prediction = kappa_trace * tau.tau_turns;
    rep.difference = rep.s_hom - rep.prediction;
    rep.rel_error =
        std::fabs(rep.difference) / std::max(1e-12, std::fabs(rep.prediction));
    return rep;
}

double sobolev_norm_22(const SurfaceGrid& grid, const HamSchedule& sched, int time_samples) {
    std::vector<double> knots;
    for (int i = 0; i <= time_samples; ++i)
        knots.push_back(sched.duration() * i / time_samples);
    Stencil st{grid, 0.0};
    auto norm_at = [&](double u) {
        Field H = sched.normalized_grid(grid, u);
        double sum = 0.0;
        for (int iy = 0; iy < grid.N; ++iy)
            for (int ix = 0; ix < grid.N; ++ix) {
                double v = H(ix, iy);
                double dx = st.dx(H, ix, iy), dy = st.dy(H, ix, iy);
                double dxx = st.dxx(H, ix, iy), dyy = st.dyy(H, ix, iy),
                       dxy = st.dxy(H, ix, iy);
                sum += v * v + dx * dx + dy * dy + dxx * dxx + 2 * dxy * dxy + dyy * dyy;
            }
        return std::sqrt(sum * grid.cell_area());
    };
    return aqm::composite_simpson(knots, norm_at);
}

EquivarianceReport moment_equivariance(const SurfaceGrid& grid, const HamSchedule& sched,
                                       const JField& j, const expr::Expr& testH,
                                       const FlowOptions& opt) {
    FlowOptions fo = opt;
    fo.store_forward = false;
    fo.track_winding = false;
    fo.inverse = sched.autonomous() ? InverseMode::full : InverseMode::final_only;
    FlowState st = integrate_flow(grid, sched, fo);
    double T = sched.duration();

    // rhs: mu(H)(J)
    Field H0(grid.N, grid.N);
    for (int iy = 0; iy < grid.N; ++iy)
        for (int ix = 0; ix < grid.N; ++ix)
            H0(ix, iy) = testH.eval(0.0, grid.node_x(ix), grid.node_x(iy));
    if (sched.normalization() == Normalization::zero_mean) H0 -= H0.mean();
    EquivarianceReport rep;
    rep.rhs = moment_map_ham(grid, H0, j);

    // lhs: mu(Ad_phi H)(phi_* J) with Ad_phi H = H o phi^{-1}
    JField jp = pushforward_j(st, T, j);
    InverseEval ev{st};
    Field Ht(grid.N, grid.N);
    for (int iy = 0; iy < grid.N; ++iy)
        for (int ix = 0; ix < grid.N; ++ix) {
            double d[8];
            ev.eval(grid.idx(ix, iy), T, d);
            Ht(ix, iy) = testH.eval(0.0, d[0], d[1]);
        }
    if (sched.normalization() == Normalization::zero_mean) Ht -= Ht.mean();
    rep.lhs = moment_map_ham(grid, Ht, jp);
    rep.rel_error = std::fabs(rep.lhs - rep.rhs) / std::max(1e-12, std::fabs(rep.rhs));
    return rep;
}

} // namespace ham2d
