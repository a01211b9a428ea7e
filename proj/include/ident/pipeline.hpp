#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "ident/assembly.hpp"
#include "ident/denoise.hpp"
#include "ident/dictionary.hpp"
#include "ident/grid.hpp"
#include "ident/metrics.hpp"
#include "ident/regression.hpp"
#include "ident/selection.hpp"
#include "ident/simulate.hpp"
#include "ident/varying.hpp"

namespace ident {

inline const char* version() { return "0.1.0"; }

using Json = nlohmann::json;

namespace detail {

template <typename T>
T jget(const Json& j, const std::string& key, T fallback) {
    if (j.contains(key)) return j.at(key).get<T>();
    return fallback;
}

inline BenchmarkPde parse_pde(const std::string& name) {
    if (name == "burgers") return BenchmarkPde::Burgers;
    if (name == "viscous_burgers") return BenchmarkPde::ViscousBurgers;
    if (name == "transport") return BenchmarkPde::Transport;
    if (name == "kdv") return BenchmarkPde::KdV;
    if (name == "ks") return BenchmarkPde::KS;
    throw std::invalid_argument("unknown pde: " + name);
}

inline SmootherConfig parse_smoother(const Json& j) {
    SmootherConfig cfg;
    const std::string kind = jget<std::string>(j, "kind", "identity");
    if (kind == "lsma")
        cfg.kind = SmootherKind::LSMA;
    else if (kind == "mls")
        cfg.kind = SmootherKind::MLS;
    else if (kind == "identity")
        cfg.kind = SmootherKind::Identity;
    else
        throw std::invalid_argument("unknown smoother kind: " + kind);
    cfg.mls_bandwidth = jget<double>(j, "h", cfg.mls_bandwidth);
    cfg.degree = jget<int>(j, "degree", cfg.degree);
    return cfg;
}

inline Json support_labels(const LinearSystem& sys, const std::vector<int>& support) {
    Json out = Json::array();
    for (int k : support) out.push_back(sys.cols[k].label);
    return out;
}

inline Json coeff_map(const LinearSystem& sys, const Vector& coeffs) {
    Json out = Json::object();
    for (int k = 0; k < sys.ncols(); ++k)
        if (coeffs[k] != 0.0) out[sys.cols[k].label] = coeffs[k];
    return out;
}

}  // namespace detail

/// Default grids for the bundled benchmark problems, chosen so the observation
/// window stays ahead of shock formation and the reference solvers are stable.
inline Json default_simulate_config(const std::string& pde) {
    Json s;
    s["pde"] = pde;
    if (pde == "burgers" || pde == "viscous_burgers") {
        s["x0"] = 0.0;
        s["x1"] = 1.0;
        s["nx"] = 256;
        s["t1"] = 0.05;
        s["nt"] = 128;
    } else if (pde == "transport") {
        s["x0"] = 0.0;
        s["x1"] = 1.0;
        s["nx"] = 256;
        s["t1"] = 0.3;
        s["nt"] = 128;
    } else if (pde == "kdv") {
        s["x0"] = -1.0;
        s["x1"] = 1.0;
        s["nx"] = 128;
        s["t1"] = 0.1;
        s["nt"] = 128;
    } else if (pde == "ks") {
        s["x0"] = 0.0;
        s["x1"] = 32.0;
        s["nx"] = 256;
        s["t1"] = 5.0;
        s["nt"] = 128;
    } else if (pde == "varying_advection") {
        s["x0"] = 0.0;
        s["x1"] = 1.0;
        s["nx"] = 128;
        s["t1"] = 0.3;
        s["nt"] = 64;
    } else {
        throw std::invalid_argument("unknown pde: " + pde);
    }
    s["boundary"] = "periodic";
    s["refine"] = 10;
    return s;
}

inline Grid grid_from_config(const Json& s) {
    const int nx = s.at("nx").get<int>();
    const int nt = s.at("nt").get<int>();
    const double x0 = s.at("x0").get<double>();
    const double x1 = s.at("x1").get<double>();
    const double t0 = detail::jget<double>(s, "t0", 0.0);
    const double t1 = s.at("t1").get<double>();
    const Boundary b = detail::jget<std::string>(s, "boundary", "periodic") == "dirichlet"
                           ? Boundary::Dirichlet
                           : Boundary::Periodic;
    // periodic grids sample [x0, x1) so node nx would alias node 0
    const double dx = (b == Boundary::Periodic) ? (x1 - x0) / nx : (x1 - x0) / (nx - 1);
    const double dt = (t1 - t0) / (nt - 1);
    return Grid(x0, dx, nx, t0, dt, nt, b);
}

/// Optional custom initial state: "initial" is a list of Fourier terms
/// [{"fn": "sin"|"cos", "k": harmonic, "amp": amplitude}, ...] summed over the
/// domain length, e.g. 0.5*sin(2pi x) + 0.5*sin(6pi x) on [0,1).
inline std::optional<Vector> initial_from_config(const Json& s, const Grid& g) {
    if (!s.contains("initial")) return std::nullopt;
    const double L = (g.boundary == Boundary::Periodic) ? g.dx * g.nx : g.dx * (g.nx - 1);
    Vector u = Vector::Zero(g.nx);
    for (const Json& term : s.at("initial")) {
        const std::string fn = term.at("fn").get<std::string>();
        const double k = term.at("k").get<double>();
        const double amp = term.at("amp").get<double>();
        for (int i = 0; i < g.nx; ++i) {
            const double phase = 2.0 * M_PI * k * (g.x(i) - g.x(0)) / L;
            u[i] += amp * (fn == "cos" ? std::cos(phase) : std::sin(phase));
        }
    }
    return u;
}

/// Simulates the benchmark named in a "simulate" config block.
inline Field simulate_from_config(const Json& s) {
    const Grid g = grid_from_config(s);
    const int refine = detail::jget<int>(s, "refine", 10);
    const std::string pde = s.at("pde").get<std::string>();
    if (pde == "varying_advection") {
        Vector speed(g.nx), init(g.nx);
        for (int i = 0; i < g.nx; ++i) {
            speed[i] = 1.0 + 0.5 * std::sin(2.0 * M_PI * g.x(i));
            init[i] = std::sin(2.0 * M_PI * g.x(i)) + 0.5 * std::cos(4.0 * M_PI * g.x(i));
        }
        return simulate_varying_advection(g, speed, init, refine);
    }
    return simulate_reference(detail::parse_pde(pde), g, initial_from_config(s, g), refine);
}

inline std::optional<NoiseSpec> noise_from_config(const Json& config) {
    if (!config.contains("noise")) return std::nullopt;
    const Json& n = config.at("noise");
    NoiseSpec spec;
    const std::string kind = detail::jget<std::string>(n, "kind", "percent");
    spec.kind = (kind == "nsr") ? NoiseKind::NsrOfCenteredRms : NoiseKind::PercentOfRms;
    spec.level = detail::jget<double>(n, "level", 0.0);
    spec.seed = detail::jget<std::uint64_t>(n, "seed",
                                            detail::jget<std::uint64_t>(config, "seed", 0));
    if (spec.level <= 0.0) return std::nullopt;
    return spec;
}

inline Dictionary dictionary_from_config(const Json& config) {
    Json d = config.contains("dictionary") ? config.at("dictionary") : Json::object();
    const std::string style = detail::jget<std::string>(d, "style", "weak");
    const int max_alpha = detail::jget<int>(d, "max_alpha", 3);
    const int max_beta = detail::jget<int>(d, "max_beta", 3);
    if (style == "monomial") {
        const int degree = detail::jget<int>(d, "max_total_degree", 2);
        return build_dictionary(max_alpha, max_beta, DictionaryStyle::GeneralMonomial, degree);
    }
    return build_dictionary(max_alpha, max_beta, DictionaryStyle::WeakForm);
}

inline TestFunction test_function_from_config(const Json& config, const Grid& g, int max_alpha) {
    Json t = config.contains("test_function") ? config.at("test_function") : Json::object();
    // bump support spans roughly 1/4 of the domain in each direction by default;
    // narrow time supports bias the u_t column noticeably
    const int mx = detail::jget<int>(t, "mx", std::max(6, g.nx / 8));
    const int mt = detail::jget<int>(t, "mt", std::max(6, g.nt / 8));
    const int px = detail::jget<int>(t, "px", max_alpha + 2);
    const int pt = detail::jget<int>(t, "pt", 3);
    return TestFunction(mx, mt, px, pt);
}

namespace detail {

/// Denoised first slice used as evolution initial data.
inline Vector initial_slice(const Field& obs, const SmootherConfig& sm) {
    if (sm.kind == SmootherKind::Identity) return obs.values.col(0);
    return smooth_field(obs, sm).values.col(0);
}

inline PdeSpec candidate_pde(const Dictionary& dict, const Vector& coeffs, const Field& obs,
                             const Vector& init) {
    const SpatialScheme scheme = obs.grid.boundary == Boundary::Periodic
                                     ? SpatialScheme::Spectral
                                     : SpatialScheme::FiniteDifference;
    return PdeSpec(dict, coeffs, obs.grid, init, scheme);
}

inline Json candidate_json(const LinearSystem& sys, const CandidateModel& m,
                           const std::map<std::string, double>& scores) {
    Json c;
    c["support"] = support_labels(sys, m.support);
    c["coeffs"] = coeff_map(sys, m.coeffs);
    c["sparsity"] = m.sparsity;
    c["residual"] = m.residual;
    Json s = Json::object();
    for (auto& [name, val] : scores)
        s[name] = std::isfinite(val) ? Json(val) : Json("inf");
    c["scores"] = s;
    return c;
}

/// Rows kept when the system exceeds the row cap: uniform stride subsample.
inline std::vector<int> capped_rows(int nrows, int cap) {
    std::vector<int> idx;
    const int stride = std::max(1, (nrows + cap - 1) / cap);
    for (int r = 0; r < nrows; r += stride) idx.push_back(r);
    return idx;
}

}  // namespace detail

struct PipelineData {
    Field observed;
    Dictionary dict;
    SmootherConfig smoother;
    Json resolved;  // config with defaults filled in
};

/// Loads or simulates the observation, applies noise, resolves the dictionary
/// and smoother. Shared front end of every pipeline.
inline PipelineData prepare_data(Json config) {
    PipelineData d;
    if (config.contains("data") && config.at("data").contains("path")) {
        const std::string path = config.at("data").at("path").get<std::string>();
        d.observed = read_field_csv(path);
    } else {
        Json sim = config.contains("simulate") ? config.at("simulate") : Json::object();
        const std::string pde = detail::jget<std::string>(sim, "pde", "burgers");
        Json full = default_simulate_config(pde);
        full.update(sim);
        config["simulate"] = full;
        d.observed = simulate_from_config(full);
    }
    if (auto noise = noise_from_config(config)) {
        d.observed = add_gaussian_noise(d.observed, *noise);
        config["noise"]["sigma"] = noise_sigma(d.observed, *noise);
    }
    d.dict = dictionary_from_config(config);
    Json sm = config.contains("smoother") ? config.at("smoother") : Json::object();
    if (!sm.contains("kind")) sm["kind"] = "identity";
    if (sm["kind"] == "mls" && !sm.contains("h")) sm["h"] = 5.0 * d.observed.grid.dx;
    config["smoother"] = sm;
    d.smoother = detail::parse_smoother(sm);
    d.resolved = config;
    return d;
}

namespace detail {

inline Json base_report(const PipelineData& d, const std::string& pipeline) {
    Json r;
    r["schema"] = 1;
    r["version"] = version();
    r["pipeline"] = pipeline;
    r["config"] = d.resolved;
    r["seed"] = jget<std::uint64_t>(d.resolved, "seed", 0);
    r["dictionary"] = d.dict.labels();
    r["flags"] = Json::array();
    r["warnings"] = Json::array();
    {
        std::ostringstream ss;
        write_field_csv(d.observed, ss);
        r["plots"]["field_csv"] = ss.str();
    }
    return r;
}

inline void finish_report(Json& r, const LinearSystem& sys) {
    for (auto& w : sys.warnings) r["warnings"].push_back(w);
}

}  // namespace detail

/// IDENT: finite-difference (optionally LSMA-denoised) system, a LASSO path
/// whose supports and their subsets form the candidate family, TEE arbitration.
inline Json run_ident(const PipelineData& d) {
    Json report = detail::base_report(d, "ident");
    const Field& obs = d.observed;
    LinearSystem sys = assemble_differential(obs, d.dict, d.smoother);
    LinearSystem nsys = column_normalize(sys);

    const double lam_max = (nsys.A.transpose() * nsys.b).cwiseAbs().maxCoeff();
    std::set<std::vector<int>> supports;
    std::vector<std::vector<int>> active_sets;
    const int n_lambda = 20;
    for (int j = 0; j < n_lambda; ++j) {
        const double lam = lam_max * std::pow(10.0, -4.0 + 4.0 * j / (n_lambda - 1.0));
        LassoResult lr = lasso(nsys, lam);
        const double cmax = lr.coeffs.cwiseAbs().maxCoeff();
        if (cmax <= 0.0) continue;
        std::vector<std::pair<double, int>> active;
        for (int k = 0; k < nsys.ncols(); ++k)
            if (std::abs(lr.coeffs[k]) > 1e-8 * cmax) active.push_back({std::abs(lr.coeffs[k]), k});
        if (active.empty()) continue;
        std::sort(active.rbegin(), active.rend());
        if (active.size() > 12) active.resize(12);  // cap the subset enumeration
        std::vector<int> A;
        for (auto& [mag, k] : active) A.push_back(k);
        std::sort(A.begin(), A.end());
        supports.insert(A);  // the active set itself is always a candidate
        active_sets.push_back(A);
    }
    // expand subsets in order of increasing size so small supports are never
    // crowded out of the candidate budget by one large active set
    const size_t support_cap =
        static_cast<size_t>(detail::jget<int>(d.resolved, "support_cap", 256));
    for (size_t size = 1; supports.size() < support_cap; ++size) {
        bool any = false;
        for (const auto& A : active_sets) {
            const size_t nA = A.size();
            if (size > nA) continue;
            any = true;
            std::vector<size_t> pick(size);
            std::iota(pick.begin(), pick.end(), 0);
            while (supports.size() < support_cap) {
                std::vector<int> sub(size);
                for (size_t t = 0; t < size; ++t) sub[t] = A[pick[t]];
                supports.insert(sub);
                // next combination
                size_t t = size;
                while (t > 0 && pick[t - 1] == nA - size + t - 1) --t;
                if (t == 0) break;
                ++pick[t - 1];
                for (size_t q = t; q < size; ++q) pick[q] = pick[q - 1] + 1;
            }
        }
        if (!any) break;
    }
    if (supports.empty()) supports.insert({0});

    // candidate trajectories start from the denoised first slice and are scored
    // against the denoised field; comparing a denoised start against raw noisy
    // data rewards spurious growth terms that re-inflate the amplitude
    const Field eval_field = smooth_field(obs, d.smoother);
    const Vector init = eval_field.values.col(0);
    const double fine_dt = obs.grid.dt / 10.0;
    // evolution errors of rival supports cluster within the data's modeling
    // error floor; among near-ties the sparsest candidate is preferred
    const double tee_tie = detail::jget<double>(d.resolved, "tee_tie", 0.0);
    Json candidates = Json::array();
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, CandidateModel>> evaluated;
    Json selection_curve = Json::array();
    int idx = 0;
    for (auto& sup : supports) {
        CandidateModel m = least_squares_on_support(nsys, sup);
        PdeSpec cand = detail::candidate_pde(d.dict, m.coeffs, obs, init);
        // a candidate already beyond the near-tie band of the current best
        // stops evolving early; its recorded score is then a lower bound
        const double score = tee(cand, eval_field, fine_dt, (1.0 + tee_tie) * best);
        candidates.push_back(detail::candidate_json(nsys, m, {{"tee", score}}));
        selection_curve.push_back(
            Json::array({idx++, m.sparsity, std::isfinite(score) ? score : -1.0}));
        if (std::isfinite(score)) evaluated.push_back({score, m});
        best = std::min(best, score);
    }
    CandidateModel chosen;
    double chosen_score = best;
    if (evaluated.empty()) {
        report["flags"].push_back("all candidates diverged under time evolution");
        chosen = least_squares_on_support(nsys, *supports.begin());
    } else {
        const double tol = (1.0 + tee_tie) * best;
        bool have = false;
        for (auto& [score, m] : evaluated) {
            if (score > tol) continue;
            if (!have || m.sparsity < chosen.sparsity ||
                (m.sparsity == chosen.sparsity && score < chosen_score)) {
                chosen = m;
                chosen_score = score;
                have = true;
            }
        }
        // drop features whose contribution to the fit is negligible: on a flat
        // evolution-error plateau the argmin often carries tiny passengers
        CandidateModel trimmed = trim(nsys, chosen);
        if (trimmed.support != chosen.support) {
            chosen = trimmed;
            PdeSpec cand = detail::candidate_pde(d.dict, chosen.coeffs, obs, init);
            chosen_score = tee(cand, eval_field, fine_dt);
        }
    }
    report["candidates"] = candidates;
    report["chosen"] = detail::candidate_json(nsys, chosen, {{"tee", chosen_score}});
    report["plots"]["selection_curve"] = selection_curve;
    if (chosen.rank_deficient || chosen.flagged)
        report["flags"].push_back("chosen model fit was rank-deficient or trimmed to nothing");
    detail::finish_report(report, nsys);
    return report;
}

/// Robust-IDENT: SDD-smoothed differential system, Subspace Pursuit across
/// sparsity levels with trimming, MTEE arbitration (CEE attached).
inline Json run_robust_ident(const PipelineData& d) {
    Json report = detail::base_report(d, "robust_ident");
    const Field& obs = d.observed;
    LinearSystem sys = assemble_differential(obs, d.dict, d.smoother);
    LinearSystem nsys = column_normalize(sys);

    const int kmax = std::min(nsys.ncols(), detail::jget<int>(d.resolved, "max_sparsity", 6));
    const Vector init = detail::initial_slice(obs, d.smoother);
    const int w = std::max(1, obs.grid.nt / 10);
    const double fine_dt = obs.grid.dt / 10.0;

    Json candidates = Json::array();
    double best = std::numeric_limits<double>::infinity();
    CandidateModel chosen;
    for (int k = 1; k <= kmax; ++k) {
        CandidateModel m = trim(nsys, subspace_pursuit(nsys, k));
        PdeSpec cand = detail::candidate_pde(d.dict, m.coeffs, obs, init);
        const double score = mtee(cand, obs, fine_dt, w);
        const double holdout = cee(nsys, m.support);
        candidates.push_back(detail::candidate_json(nsys, m, {{"mtee", score}, {"cee", holdout}}));
        if (score < best) {
            best = score;
            chosen = m;
        }
    }
    report["candidates"] = candidates;
    report["chosen"] = detail::candidate_json(nsys, chosen, {{"mtee", best}});
    if (chosen.flagged) report["flags"].push_back("chosen model flagged by trimming");
    detail::finish_report(report, nsys);
    return report;
}

/// Weak-IDENT: weak-form system, error + column normalization, narrow fit on
/// the high dynamic region, SP + trimming across sparsity, CEE arbitration.
inline Json run_weak_ident(const PipelineData& d) {
    Json report = detail::base_report(d, "weak_ident");
    const Field& obs = d.observed;
    if (d.dict.style != DictionaryStyle::WeakForm)
        throw std::invalid_argument("weak_ident requires a weak-form dictionary");
    const TestFunction tf = test_function_from_config(d.resolved, obs.grid, d.dict.max_alpha);

    // stride chosen to keep the row count near the cap
    int sx = 1, st = 1;
    {
        const long full_rows = static_cast<long>(obs.grid.nx) * obs.grid.nt;
        const long cap = 10000;
        while (full_rows / (static_cast<long>(sx) * st) > cap) {
            if (sx <= st)
                ++sx;
            else
                ++st;
        }
    }
    LinearSystem sys = assemble_weak(obs, d.dict, tf, sx, st);
    LinearSystem esys = error_normalize(sys);
    std::vector<int> region = high_dynamic_region(esys);
    LinearSystem nsys = column_normalize(esys);
    LinearSystem narrow = narrow_system(nsys, region);

    const int kmax = std::min(nsys.ncols(), detail::jget<int>(d.resolved, "max_sparsity", 6));
    Json candidates = Json::array();
    double best = std::numeric_limits<double>::infinity();
    CandidateModel chosen;
    for (int k = 1; k <= kmax; ++k) {
        CandidateModel m = subspace_pursuit(nsys, k);
        CandidateModel nm = trim(narrow, least_squares_on_support(narrow, m.support));
        const double holdout = cee(nsys, nm.support);
        candidates.push_back(detail::candidate_json(narrow, nm, {{"cee", holdout}}));
        if (holdout < best) {
            best = holdout;
            chosen = nm;
        }
    }
    report["candidates"] = candidates;
    report["chosen"] = detail::candidate_json(narrow, chosen, {{"cee", best}});
    report["narrow_rows"] = static_cast<int>(region.size());
    report["total_rows"] = nsys.nrows();
    if (chosen.flagged) report["flags"].push_back("chosen model flagged by trimming");
    detail::finish_report(report, nsys);
    return report;
}

/// GP-IDENT: group system over a spline basis, GPSP across group sparsity,
/// Reduction-in-Residual selection, group trimming; emits c_k(x) curves.
inline Json run_gp_ident(const PipelineData& d) {
    Json report = detail::base_report(d, "gp_ident");
    const Field& obs = d.observed;
    const Grid& g = obs.grid;
    const int nb = detail::jget<int>(d.resolved, "basis_size", 20);
    BasisSet basis = build_basis(BasisKind::BSpline, nb, g);
    GroupSystem gs = assemble_group_system(obs, d.dict, basis, GroupForm::Differential, d.smoother);

    if (gs.sys.nrows() > 10000) {
        std::vector<int> keep = detail::capped_rows(gs.sys.nrows(), 10000);
        gs.sys = narrow_system(gs.sys, keep);
    }
    GroupSystem ngs = gs;
    ngs.sys = column_normalize(gs.sys);

    const int ngroups = static_cast<int>(ngs.groups.size());
    const int kmax = std::min(ngroups, detail::jget<int>(d.resolved, "max_sparsity", 8));
    std::vector<GroupModel> models;
    std::vector<double> residuals;
    Json rr_curve = Json::array();
    for (int k = 1; k <= kmax; ++k) {
        models.push_back(group_subspace_pursuit(ngs.sys, ngs.groups, k));
        residuals.push_back(models.back().residual * models.back().residual);
        rr_curve.push_back(Json::array({k, residuals.back()}));
    }
    const int n_rr = std::min(5, kmax - 1);
    RrResult rr = n_rr >= 1 ? rr_select(residuals, n_rr) : RrResult{1, true, {}};
    GroupModel chosen = group_trim(ngs.sys, ngs.groups, models[rr.k - 1]);

    Json candidates = Json::array();
    for (size_t i = 0; i < models.size(); ++i) {
        Json c;
        Json sup = Json::array();
        for (int gidx : models[i].group_support) sup.push_back(gs.feature_labels[gidx]);
        c["support"] = sup;
        c["sparsity"] = static_cast<int>(i) + 1;
        c["residual"] = models[i].residual;
        candidates.push_back(c);
    }
    report["candidates"] = candidates;

    Json chosen_json;
    Json sup = Json::array();
    for (int gidx : chosen.group_support) sup.push_back(gs.feature_labels[gidx]);
    chosen_json["support"] = sup;
    chosen_json["residual"] = chosen.residual;
    // reconstructed coefficient functions at the grid nodes
    Json curves = Json::object();
    for (int gidx : chosen.group_support) {
        Vector cm(basis.nb);
        for (int m = 0; m < basis.nb; ++m) cm[m] = chosen.coeffs[ngs.groups[gidx][m]];
        Vector curve = reconstruct_coefficient(basis, cm, g);
        Json pts = Json::array();
        for (int i = 0; i < g.nx; ++i) pts.push_back(Json::array({g.x(i), curve[i]}));
        curves[gs.feature_labels[gidx]] = pts;
    }
    chosen_json["coefficient_functions"] = curves;
    report["chosen"] = chosen_json;
    report["plots"]["rr_curve"] = rr_curve;
    report["plots"]["coefficient_functions"] = curves;
    if (!rr.plateau) report["flags"].push_back("no residual plateau; argmin fallback used");
    if (chosen.flagged) report["flags"].push_back("group trimming emptied the support");
    detail::finish_report(report, ngs.sys);
    return report;
}

/// CaSLR: spatial patches with 25% overlap, block-diagonal GPSP for a shared
/// support across patches, RRC over support sizes.
inline Json run_caslr(const PipelineData& d) {
    Json report = detail::base_report(d, "caslr");
    const Field& obs = d.observed;
    const Grid& g = obs.grid;
    LinearSystem sys = assemble_differential(obs, d.dict, d.smoother);

    const int J = std::max(2, detail::jget<int>(d.resolved, "patches", 4));
    const int width = g.nx / J + g.nx / (4 * J);  // 25% overlap
    std::vector<LinearSystem> patches;
    for (int j = 0; j < J; ++j) {
        const int lo = j * g.nx / J;
        const int hi = std::min(g.nx - 1, lo + width);
        std::vector<int> rows;
        for (int r = 0; r < sys.nrows(); ++r)
            if (sys.rows[r].ix >= lo && sys.rows[r].ix <= hi) rows.push_back(r);
        LinearSystem p = narrow_system(sys, rows);
        if (p.nrows() > 4000) p = narrow_system(p, detail::capped_rows(p.nrows(), 4000));
        patches.push_back(column_normalize(p));
    }

    const int nf = sys.ncols();
    std::vector<double> errors;
    std::vector<CaslrResult> results;
    for (int l = 1; l <= nf - 1; ++l) {
        results.push_back(caslr(patches, l));
        errors.push_back(results.back().global_error);
    }
    const int lstar = rrc_select(errors, 0.0, nf);
    const CaslrResult& chosen = results[lstar - 1];

    Json rr_curve = Json::array();
    for (size_t i = 0; i < errors.size(); ++i)
        rr_curve.push_back(Json::array({static_cast<int>(i) + 1, errors[i]}));
    report["plots"]["rr_curve"] = rr_curve;

    Json chosen_json;
    chosen_json["support"] = detail::support_labels(sys, chosen.support);
    chosen_json["global_error"] = chosen.global_error;
    Json per_patch = Json::array();
    for (auto& c : chosen.patch_coeffs) {
        Json cm = Json::object();
        for (int k : chosen.support) cm[sys.cols[k].label] = c[k];
        per_patch.push_back(cm);
    }
    chosen_json["patch_coeffs"] = per_patch;
    report["chosen"] = chosen_json;
    if (chosen.flagged) report["flags"].push_back("patch regression flagged");
    detail::finish_report(report, sys);
    return report;
}

/// Dispatch on config["pipeline"]. The returned report embeds the resolved
/// config, the dictionary, the seed, and all plot series.
inline Json run_pipeline(const Json& config) {
    const std::string name = detail::jget<std::string>(config, "pipeline", "weak_ident");
    PipelineData d = prepare_data(config);
    if (name == "ident") return run_ident(d);
    if (name == "robust_ident") return run_robust_ident(d);
    if (name == "weak_ident") return run_weak_ident(d);
    if (name == "gp_ident") return run_gp_ident(d);
    if (name == "caslr") return run_caslr(d);
    throw std::invalid_argument("unknown pipeline: " + name);
}

/// Writes the plot series carried by a report as CSV files into outdir.
inline std::vector<std::string> emit_plots(const Json& report, const std::string& outdir) {
    namespace fs = std::filesystem;
    fs::create_directories(outdir);
    std::vector<std::string> written;
    auto open = [&](const std::string& name) {
        const std::string path = (fs::path(outdir) / name).string();
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot write plot file: " + path);
        written.push_back(path);
        return os;
    };
    if (!report.contains("plots")) return written;
    const Json& plots = report.at("plots");

    if (plots.contains("field_csv")) {
        auto os = open("field.csv");
        os << plots.at("field_csv").get<std::string>();
    }
    if (plots.contains("selection_curve")) {
        auto os = open("selection_curve.csv");
        os << "candidate,sparsity,tee\n";
        for (auto& row : plots.at("selection_curve"))
            os << row[0].get<int>() << "," << row[1].get<int>() << "," << row[2].get<double>()
               << "\n";
    }
    if (plots.contains("rr_curve")) {
        auto os = open("rr_curve.csv");
        os << "sparsity,residual\n";
        for (auto& row : plots.at("rr_curve"))
            os << row[0].get<int>() << "," << row[1].get<double>() << "\n";
    }
    if (plots.contains("coefficient_functions")) {
        auto os = open("coefficient_functions.csv");
        os << "feature,x,c\n";
        for (auto& [label, pts] : plots.at("coefficient_functions").items())
            for (auto& p : pts) os << label << "," << p[0].get<double>() << "," << p[1].get<double>() << "\n";
    }
    return written;
}

/// Compares a report's chosen model against a truth block
/// {"coeffs": {label: value}}; returns a metrics JSON.
inline Json evaluate_report(const Json& report, const Json& truth) {
    if (!report.contains("chosen")) throw std::invalid_argument("report has no chosen model");
    const Json& chosen = report.at("chosen");
    if (!chosen.contains("coeffs"))
        throw std::invalid_argument("chosen model carries no constant coefficients");
    const Json& tc = truth.at("coeffs");

    std::vector<std::string> labels;
    for (auto& [label, val] : tc.items()) labels.push_back(label);
    for (auto& [label, val] : chosen.at("coeffs").items())
        if (!tc.contains(label)) labels.push_back(label);

    Vector c_hat = Vector::Zero(labels.size()), c_true = Vector::Zero(labels.size());
    std::vector<int> sup_hat, sup_true;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (tc.contains(labels[i])) {
            c_true[i] = tc.at(labels[i]).get<double>();
            sup_true.push_back(static_cast<int>(i));
        }
        if (chosen.at("coeffs").contains(labels[i])) {
            c_hat[i] = chosen.at("coeffs").at(labels[i]).get<double>();
            sup_hat.push_back(static_cast<int>(i));
        }
    }
    CoefficientErrors ce = coefficient_errors(c_hat, c_true);
    SupportScores ss = support_scores(sup_hat, sup_true);
    Json m;
    m["e_c"] = ce.e_c;
    m["e2"] = ce.e2;
    m["e_inf"] = ce.e_inf;
    m["tpr"] = ss.tpr;
    m["ppv"] = ss.ppv;
    m["jaccard"] = ss.jaccard;
    return m;
}

}  // namespace ident
