#include "actionqm/sp_instance.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include <nlohmann/json.hpp>

namespace spqm {

using aqm::require;

namespace {
// inverse of a symplectic matrix through the structure identity g^-1 = -J0 g^T J0
Mat sp_inverse(const Mat& g) {
    Mat j0 = symp::standard_j(int(g.rows()) / 2);
    return -j0 * g.transpose() * j0;
}
} // namespace

SpPath::SpPath(int n, siegel::FormKind kind, std::vector<double> knots,
               std::vector<Mat> elems, std::vector<Mat> gens)
    : n_(n), kind_(kind), knots_(std::move(knots)), elems_(std::move(elems)),
      gens_(std::move(gens)) {
    require(knots_.size() >= 2, "SpPath: need at least one interval");
    require(elems_.size() == knots_.size(), "SpPath: one element per knot");
    require(gens_.size() + 1 == knots_.size(), "SpPath: one generator per interval");
    require(std::fabs(knots_.front()) < 1e-15 && std::fabs(knots_.back() - 1.0) < 1e-12,
            "SpPath: knots must span [0,1]");
    require((elems_.front() - Mat::Identity(2 * n_, 2 * n_)).norm() < 1e-12,
            "SpPath: path must start at the identity");
    // interpolation contract: g_{i+1} = exp(dt Xi_i) g_i within tolerance
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
        double dt = knots_[i + 1] - knots_[i];
        require(dt > 0, "SpPath: knots must be strictly increasing");
        double resid = (elems_[i + 1] - symp::mat_exp(dt * gens_[i]) * elems_[i]).norm();
        require(resid < 1e-6 * (1.0 + elems_[i + 1].norm()),
                "SpPath: samples inconsistent with generators (interpolation contract)");
    }
}

int SpPath::locate(double t) const {
    if (t <= knots_.front()) return 0;
    if (t >= knots_.back()) return int(gens_.size()) - 1;
    int lo = 0, hi = int(gens_.size()) - 1;
    while (lo < hi) {
        int mid = (lo + hi + 1) / 2;
        if (knots_[mid] <= t) lo = mid;
        else hi = mid - 1;
    }
    return lo;
}

Mat SpPath::element_at(double t) const {
    int i = locate(t);
    return symp::mat_exp((t - knots_[i]) * gens_[i]) * elems_[i];
}

Vec SpPath::orbit_point(double t, const Vec& x) const {
    Mat j = unflatten(x);
    Mat g = element_at(t);
    return flatten(g * j * sp_inverse(g));
}

double SpPath::moment(double t, const Vec& x) const {
    int i = locate(t);
    Mat g = element_at(t);
    Mat j = unflatten(x);
    Mat jt = g * j * sp_inverse(g);
    return moment_kind(kind_, n_, jt, gens_[i]);
}

SpPath path_product(const SpPath& a, const SpPath& b) {
    require(a.n_ == b.n_, "path_product: dimension mismatch");
    require(a.kind_ == b.kind_, "path_product: form kind mismatch");
    int ma = a.intervals(), mb = b.intervals();
    std::vector<double> knots(ma + mb + 1);
    std::vector<Mat> elems(ma + mb + 1);
    std::vector<Mat> gens(ma + mb);
    Mat g1 = a.endpoint();
    for (int i = 0; i <= ma; ++i) {
        knots[i] = 0.5 * a.knots_[i];
        elems[i] = a.elems_[i];
    }
    for (int i = 0; i < ma; ++i) gens[i] = 2.0 * a.gens_[i];
    for (int i = 0; i <= mb; ++i) {
        knots[ma + i] = 0.5 + 0.5 * b.knots_[i];
        elems[ma + i] = g1 * b.elems_[i];
    }
    Mat g1inv = sp_inverse(g1);
    for (int i = 0; i < mb; ++i) gens[ma + i] = 2.0 * g1 * b.gens_[i] * g1inv;
    return SpPath(a.n_, a.kind_, std::move(knots), std::move(elems), std::move(gens));
}

SpPath path_power(const SpPath& p, int k) {
    require(k >= 1, "path_power: k must be positive");
    if (k == 1) return p;
    int m = p.intervals();
    std::vector<double> knots(m * k + 1);
    std::vector<Mat> elems(m * k + 1);
    std::vector<Mat> gens(m * k);
    Mat g1 = p.endpoint();
    Mat prefix = Mat::Identity(2 * p.n_, 2 * p.n_);
    for (int j = 0; j < k; ++j) {
        Mat pref_inv = sp_inverse(prefix);
        for (int i = 0; i < m; ++i) {
            knots[j * m + i] = (double(j) + p.knots_[i]) / k;
            elems[j * m + i] = prefix * p.elems_[i];
            gens[j * m + i] = double(k) * prefix * p.gens_[i] * pref_inv;
        }
        prefix = prefix * g1;
    }
    knots[m * k] = 1.0;
    elems[m * k] = prefix;
    return SpPath(p.n_, p.kind_, std::move(knots), std::move(elems), std::move(gens));
}

SpPath path_reverse(const SpPath& p) {
    int m = p.intervals();
    std::vector<double> knots(m + 1);
    std::vector<Mat> elems(m + 1);
    std::vector<Mat> gens(m);
    Mat g1inv = sp_inverse(p.endpoint());
    for (int i = 0; i <= m; ++i) {
        knots[i] = 1.0 - p.knots_[m - i];
        elems[i] = p.elems_[m - i] * g1inv;
    }
    for (int i = 0; i < m; ++i) gens[i] = -p.gens_[m - 1 - i];
    return SpPath(p.n_, p.kind_, std::move(knots), std::move(elems), std::move(gens));
}

SpPath SpPath::conjugated(const Mat& h) const {
    require(symp::is_symplectic(h, 1e-7), "conjugated: h must be symplectic");
    Mat hinv = sp_inverse(h);
    std::vector<Mat> elems(elems_.size()), gens(gens_.size());
    for (std::size_t i = 0; i < elems_.size(); ++i) elems[i] = h * elems_[i] * hinv;
    for (std::size_t i = 0; i < gens_.size(); ++i) gens[i] = h * gens_[i] * hinv;
    return SpPath(n_, kind_, knots_, std::move(elems), std::move(gens));
}

SpPath SpPath::with_kind(siegel::FormKind k) const {
    return SpPath(n_, k, knots_, elems_, gens_);
}

SpPath SpPath::rotation_loop(int n, int windings, int samples, siegel::FormKind kind) {
    require(samples >= 8 * std::abs(windings), "rotation_loop: undersampled");
    Mat xi = 2.0 * M_PI * windings * symp::standard_j(n);
    return from_generator(n, xi, samples, kind);
}

SpPath SpPath::u1_block_loop(int n, int factor, int windings, int samples,
                             siegel::FormKind kind) {
    require(factor >= 0 && factor < n, "u1_block_loop: factor out of range");
    // generator [[0,-E],[E,0]] with E = e_factor e_factor^T rotates one
    // complex coordinate; it lies in u(n) = sp cap so(2n).
    Mat e = Mat::Zero(n, n);
    e(factor, factor) = 1.0;
    Mat xi = Mat::Zero(2 * n, 2 * n);
    xi.topRightCorner(n, n) = -e;
    xi.bottomLeftCorner(n, n) = e;
    xi *= 2.0 * M_PI * windings;
    return from_generator(n, xi, samples, kind);
}

SpPath SpPath::piecewise_random(int n, int intervals, double amplitude, std::uint64_t seed,
                                siegel::FormKind kind) {
    require(intervals >= 1, "piecewise_random: need at least one interval");
    symp::RandomSp rs(n, seed);
    std::vector<double> knots(intervals + 1);
    std::vector<Mat> elems(intervals + 1);
    std::vector<Mat> gens(intervals);
    elems[0] = Mat::Identity(2 * n, 2 * n);
    for (int i = 0; i <= intervals; ++i) knots[i] = double(i) / intervals;
    // |generator| = amplitude, so amplitude is the total Lie-algebra length
    for (int i = 0; i < intervals; ++i) {
        gens[i] = rs.algebra_element(amplitude, std::uint64_t(i));
        elems[i + 1] = symp::mat_exp(gens[i] / intervals) * elems[i];
    }
    return SpPath(n, kind, std::move(knots), std::move(elems), std::move(gens));
}

SpPath SpPath::from_generator(int n, const Mat& xi, int samples, siegel::FormKind kind) {
    require(symp::is_sp_algebra(xi, 1e-8 * (1.0 + xi.norm())),
            "from_generator: generator not in sp(2n,R)");
    require(samples >= 2, "from_generator: need at least two samples");
    std::vector<double> knots(samples + 1);
    std::vector<Mat> elems(samples + 1);
    std::vector<Mat> gens(samples, xi);
    for (int i = 0; i <= samples; ++i) {
        knots[i] = double(i) / samples;
        elems[i] = symp::mat_exp(knots[i] * xi);
    }
    return SpPath(n, kind, std::move(knots), std::move(elems), std::move(gens));
}

SpPath SpPath::from_samples(int n, const std::vector<Mat>& samples, siegel::FormKind kind) {
    require(samples.size() >= 2, "from_samples: need at least two samples");
    int m = int(samples.size()) - 1;
    std::vector<double> knots(m + 1);
    std::vector<Mat> gens(m);
    for (int i = 0; i <= m; ++i) knots[i] = double(i) / m;
    for (int i = 0; i < m; ++i) {
        // left-trivialized generator recovered from consecutive samples
        Mat rel = samples[i + 1] * sp_inverse(samples[i]);
        gens[i] = m * Mat(rel.log());
    }
    return SpPath(n, kind, knots, samples, std::move(gens));
}

double moment_kind(siegel::FormKind kind, int n, const Mat& J, const Mat& Xi) {
    return siegel::form_scale(kind, n) * siegel::moment_map_sp(J, Xi);
}

double empirical_defect_bound(siegel::FormKind kind, int n) {
    return siegel::form_scale(kind, n) * double(n) * M_PI / 2.0;
}

qmeng::Instance make_sp_instance(int n, siegel::FormKind kind) {
    qmeng::Instance inst;
    inst.dim = Eigen::Index(4) * n * n;
    inst.geodesic = [](const Vec& x, const Vec& y) {
        auto ev = siegel::geodesic_between(unflatten(x), unflatten(y));
        return [ev](double t) { return flatten(ev(t)); };
    };
    inst.form = [kind, n](const Vec& p, const Vec& a, const Vec& b) {
        return siegel::form_raw(kind, n, unflatten(p), unflatten(a), unflatten(b));
    };
    return inst;
}

symp::AngleTrack SpPath::unitary_det_track(int refine) const {
    require(refine >= 1, "unitary_det_track: refine must be positive");
    symp::AngleTrack track;
    for (int i = 0; i < intervals(); ++i) {
        double a = knots_[i], b = knots_[i + 1];
        int steps = refine;
        for (int j = (i == 0 ? 0 : 1); j <= steps; ++j) {
            double t = a + (b - a) * double(j) / steps;
            Mat g = element_at(t);
            symp::PolarFactors f = symp::polar_unitary(g, 1e-6);
            track.samples.push_back(symp::det_complex(f.unitary, 1e-6));
        }
    }
    return track;
}

double maslov_turns(const SpPath& path, int refine) {
    symp::AngleTrack dets = path.unitary_det_track(refine);
    symp::AngleTrack squared;
    squared.samples.reserve(dets.samples.size());
    for (auto& z : dets.samples) squared.samples.push_back(z * z);
    return symp::varangle(squared);
}

RotationNumberResult rotation_number_nu(const SpPath& path, const Mat& x,
                                        int chords_per_interval,
                                        const qmeng::QuadSpec& quad) {
    require(chords_per_interval >= 1, "rotation_number_nu: need at least one chord");
    qmeng::Instance inst = make_sp_instance(path.n(), path.kind());
    Vec xv = flatten(x);
    // disk term: fan of geodesic triangles over a chord subdivision of the orbit
    siegel::SurfaceQuad tq;
    tq.s_nodes = quad.s_nodes;
    tq.t_nodes = std::max(6, quad.t_nodes * 2);
    double disk = 0.0;
    std::vector<double> knots = path.knots();
    Mat prev = unflatten(path.orbit_point(0.0, xv));
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        for (int c = 1; c <= chords_per_interval; ++c) {
            double t = knots[i] + (knots[i + 1] - knots[i]) * double(c) / chords_per_interval;
            Mat next = unflatten(path.orbit_point(t, xv));
            if ((next - prev).norm() > 1e-14)
                disk += siegel::triangle_area(path.kind(), x, prev, next, tq).value;
            prev = next;
        }
    }
    auto mom = qmeng::detail::simpson_piecewise(
        knots, [&](double t) { return path.moment(t, xv); });
    RotationNumberResult r;
    r.disk_term = disk;
    r.moment_term = mom.value;
    r.value = disk - mom.value;
    return r;
}

GWRestriction guichardet_wigner_restriction(const SpPath& loop, double tol) {
    int n = loop.n();
    Mat id = Mat::Identity(2 * n, 2 * n);
    require((loop.endpoint() - id).norm() <= 1e-7 * (1.0 + id.norm()),
            "guichardet_wigner_restriction: path does not close at the identity");
    // every sample must stay in U(n)
    symp::AngleTrack track;
    std::vector<double> knots = loop.knots();
    Mat j0 = symp::standard_j(n);
    int refine = 4;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        for (int j = (i == 0 ? 0 : 1); j <= refine; ++j) {
            double t = knots[i] + (knots[i + 1] - knots[i]) * double(j) / refine;
            Mat g = loop.element_at(t);
            double dev = (g * g.transpose() - id).norm() + (g * j0 - j0 * g).norm();
            if (dev > std::max(tol, 1e-7) * 10 * (1.0 + g.norm()))
                throw aqm::validation_error(
                    "guichardet_wigner_restriction: path leaves U(n)");
            track.samples.push_back(symp::det_complex(g, 1e-6));
        }
    }
    GWRestriction r;
    r.detc_winding = symp::varangle(track);
    r.ref_power2 = -2.0 * r.detc_winding;
    r.ref_power_minus_n1 = double(n + 1) * r.detc_winding;
    return r;
}

// ---------------------------------------------------------------------------
// calibration

std::string CalibrationLedger::to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["kappa_trace"] = kappa_trace;
    j["kappa_siegel"] = kappa_siegel;
    j["kappa_bergman"] = kappa_bergman;
    j["spread"] = spread;
    j["max_half_width"] = max_half_width;
    nlohmann::json prov = nlohmann::json::array();
    for (const auto& e : provenance) {
        prov.push_back({{"path", e.path_desc},
                        {"nu_trace", e.nu_trace},
                        {"maslov", e.maslov},
                        {"ratio", e.ratio},
                        {"half_width", e.half_width}});
    }
    j["provenance"] = prov;
    return j.dump(2);
}

CalibrationLedger CalibrationLedger::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    CalibrationLedger l;
    l.n = j.at("n").get<int>();
    l.kappa_trace = j.at("kappa_trace").get<double>();
    l.kappa_siegel = j.at("kappa_siegel").get<double>();
    l.kappa_bergman = j.at("kappa_bergman").get<double>();
    l.spread = j.value("spread", 0.0);
    l.max_half_width = j.value("max_half_width", 0.0);
    if (j.contains("provenance"))
        for (const auto& e : j["provenance"]) {
            CalibrationEntry ce;
            ce.path_desc = e.value("path", "");
            ce.nu_trace = e.value("nu_trace", 0.0);
            ce.maslov = e.value("maslov", 0.0);
            ce.ratio = e.value("ratio", 0.0);
            ce.half_width = e.value("half_width", 0.0);
            l.provenance.push_back(ce);
        }
    return l;
}

void CalibrationLedger::save(const std::string& path) const {
    std::ofstream f(path);
    require(f.good(), "CalibrationLedger::save: cannot open " + path);
    f << to_json() << "\n";
}

CalibrationLedger CalibrationLedger::load(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "CalibrationLedger::load: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json(ss.str());
}

CalibrationLedger calibrate(const CalibrateOptions& opt) {
    require(opt.n >= 1, "calibrate: n must be positive");
    require(opt.random_paths >= 0, "calibrate: negative path count");
    const int n = opt.n;
    qmeng::Instance inst = make_sp_instance(n, siegel::FormKind::trace);
    Vec x0 = flatten(symp::standard_j(n));

    CalibrationLedger ledger;
    ledger.n = n;

    std::vector<SpPath> suite;
    std::vector<std::string> descs;
    for (int m = 1; m <= 3; ++m) {
        suite.push_back(SpPath::rotation_loop(n, m, 16 * m));
        descs.push_back("rotation-loop m=" + std::to_string(m));
    }
    // random paths; compose with a rotation loop so the Maslov winding of the
    // homogenized path stays away from zero and the ratio is well conditioned
    for (int i = 0; i < opt.random_paths; ++i) {
        SpPath rnd = SpPath::piecewise_random(n, 8, opt.amplitude,
                                              opt.seed + std::uint64_t(100 + i));
        SpPath loop = SpPath::rotation_loop(n, 1 + (i % 2), 16);
        suite.push_back(path_product(loop, rnd));
        descs.push_back("random path #" + std::to_string(i) +
                        " composed with rotation m=" + std::to_string(1 + (i % 2)));
    }

    const double nu_bound = empirical_defect_bound(siegel::FormKind::trace, n);
    const double tau_bound = double(n); // Maslov defect in turns
    double wsum = 0.0, wratio = 0.0;
    int ratio_count = 0;
    for (std::size_t i = 0; i < suite.size(); ++i) {
        const SpPath& p = suite[i];
        qmeng::HomogenizeResult nu =
            qmeng::homogenize(inst, p, x0, opt.k_max, opt.quad, nu_bound);
        // homogenized Maslov turns on the same schedule
        double tau_last = 0.0;
        double tau_prev = 0.0;
        int last_k = 1;
        double tau_defect = 0.0;
        for (int k = 1; k <= opt.k_max; k *= 2) {
            double tk = maslov_turns(path_power(p, k), 8);
            if (k > 1) tau_defect = std::max(tau_defect, std::fabs(tk - 2.0 * tau_prev));
            tau_prev = tk;
            tau_last = tk / k;
            last_k = k;
        }
        CalibrationEntry e;
        e.path_desc = descs[i];
        e.nu_trace = nu.estimate;
        e.maslov = tau_last;
        if (std::fabs(tau_last) < 0.05) {
            // Maslov-degenerate path: no ratio information, keep provenance only
            e.ratio = 0.0;
            e.half_width = 0.0;
            ledger.provenance.push_back(e);
            continue;
        }
        // uncertainty of the ratio from both truncation intervals
        double tau_hw = std::max(tau_defect, tau_bound) / last_k;
        e.ratio = nu.estimate / tau_last;
        e.half_width = (nu.half_width + nu.quad_error +
                        std::fabs(e.ratio) * tau_hw) / std::fabs(tau_last);
        ledger.provenance.push_back(e);
        double w = 1.0 / (e.half_width * e.half_width + 1e-12);
        wsum += w;
        wratio += w * e.ratio;
        ratio_count += 1;
        ledger.max_half_width = std::max(ledger.max_half_width, e.half_width);
    }
    require(ratio_count >= 3, "calibrate: not enough Maslov-nondegenerate paths");
    ledger.kappa_trace = wratio / wsum;
    for (const auto& e : ledger.provenance) {
        if (e.ratio == 0.0) continue;
        double dev = std::fabs(e.ratio - ledger.kappa_trace);
        ledger.spread = std::max(ledger.spread, dev);
        double allowance = opt.constancy_tol + e.half_width;
        if (dev > allowance)
            throw aqm::numerics_error(
                "calibrate: ratio nu/maslov not constant across the suite (path '" +
                    e.path_desc + "', deviation " + std::to_string(dev) + ")",
                ledger.kappa_trace);
    }
    // the paper-level scaling chain, exact for linearly scaled forms
    ledger.kappa_siegel = 2.0 * ledger.kappa_trace;
    ledger.kappa_bergman = double(n + 1) * ledger.kappa_trace;
    return ledger;
}

} // namespace spqm
