#include "svnet/sv_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "svnet/parallel.hpp"

namespace svnet {

namespace {

// coefficient evaluation without validation; callers guarantee v >= 0
void cch_sigma_at(const CchTheta& t, const double* x, const double* v, double* out) {
    const std::size_t d = t.d;
    const std::size_t r = 2 * d + 1;
    std::fill(out, out + d * r, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double sqrt_v = std::sqrt(v[i]);
        const double spot = sqrt_v * x[i];
        out[i * r + 0] = spot * t.rho_x[i];
        out[i * r + 1 + i] = spot * std::sqrt(1.0 - t.rho_x[i] * t.rho_x[i]);
    }
}

void cch_mu_at(const CchTheta& t, const double* v, double* out) {
    for (std::size_t i = 0; i < t.d; ++i) out[i] = t.a[i] * (t.b[i] - v[i]);
}

void cch_sigma_bar_at(const CchTheta& t, const double* v, double* out) {
    const std::size_t d = t.d;
    const std::size_t r = 2 * d + 1;
    std::fill(out, out + d * r, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double vol = std::sqrt(v[i]) * t.nu[i];
        const double orth_x = std::sqrt(1.0 - t.rho_x[i] * t.rho_x[i]);
        const double orth_v = std::sqrt(1.0 - t.rho_v[i] * t.rho_v[i]);
        out[i * r + 0] = vol * t.rho_x[i] * t.rho_v[i];
        out[i * r + 1 + i] = vol * orth_x * t.rho_v[i];
        out[i * r + 1 + d + i] = vol * orth_v;
    }
}

void require_nonneg_variance(std::size_t d, const double* v) {
    for (std::size_t i = 0; i < d; ++i) {
        if (!(v[i] >= 0.0))
            throw std::domain_error(
                "cch coefficients: negative variance; pick a truncation policy upstream");
    }
}

void append_g17(std::string& line, double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    line += buf;
}

} // namespace

// ----------------------------------------------------------------------------
// Parameters

CchTheta CchTheta::single(double a, double b, double nu, double rho_x, double rho_v) {
    return flat(1, a, b, nu, rho_x, rho_v);
}

CchTheta CchTheta::flat(std::size_t d, double a, double b, double nu, double rho_x, double rho_v) {
    CchTheta t;
    t.d = d;
    t.a.assign(d, a);
    t.b.assign(d, b);
    t.nu.assign(d, nu);
    t.rho_x.assign(d, rho_x);
    t.rho_v.assign(d, rho_v);
    return t;
}

void CchTheta::validate() const {
    if (d == 0) throw std::invalid_argument("CchTheta: d must be at least 1");
    if (a.size() != d || b.size() != d || nu.size() != d || rho_x.size() != d ||
        rho_v.size() != d)
        throw std::invalid_argument("CchTheta: parameter vectors must have length d");
    for (std::size_t i = 0; i < d; ++i) {
        if (!(a[i] > 0.0) || !(a[i] <= a_max))
            throw std::invalid_argument("CchTheta: a must lie in (0, a_max]");
        if (!(b[i] > 0.0) || !(b[i] <= b_max))
            throw std::invalid_argument("CchTheta: b must lie in (0, b_max]");
        if (!(nu[i] >= 0.0) || !(nu[i] <= nu_max))
            throw std::invalid_argument("CchTheta: nu must lie in [0, nu_max]");
        if (!(std::abs(rho_x[i]) <= 1.0) || !(std::abs(rho_v[i]) <= 1.0))
            throw std::invalid_argument("CchTheta: correlations must lie in [-1, 1]");
    }
}

std::vector<FellerEntry> feller_check(const CchTheta& theta) {
    theta.validate();
    std::vector<FellerEntry> out(theta.d);
    for (std::size_t i = 0; i < theta.d; ++i) {
        // nu == 0 gives ratio +inf, which passes both criteria
        const double ratio = 2.0 * theta.a[i] * theta.b[i] / (theta.nu[i] * theta.nu[i]);
        out[i].ratio = ratio;
        out[i].paper_pass = ratio > 0.0;
        out[i].classical_pass = ratio >= 1.0;
    }
    return out;
}

bool DomainBox::contains(std::span<const double> x, std::span<const double> v) const {
    for (double xi : x) {
        if (!(xi >= x_range.lo && xi <= x_range.hi)) return false;
    }
    for (double vi : v) {
        if (!(vi >= v_range.lo && vi <= v_range.hi)) return false;
    }
    return true;
}

// ----------------------------------------------------------------------------
// Coefficients

void cch_coefficients(const CchTheta& theta,
                      std::span<const double> x,
                      std::span<const double> v,
                      std::span<double> sigma,
                      std::span<double> mu_bar,
                      std::span<double> sigma_bar) {
    theta.validate();
    const std::size_t d = theta.d;
    const std::size_t r = 2 * d + 1;
    if (x.size() != d || v.size() != d)
        throw std::invalid_argument("cch_coefficients: state dimension mismatch");
    if (sigma.size() != d * r || sigma_bar.size() != d * r || mu_bar.size() != d)
        throw std::invalid_argument("cch_coefficients: output spans have the wrong shape");
    require_nonneg_variance(d, v.data());
    cch_sigma_at(theta, x.data(), v.data(), sigma.data());
    cch_mu_at(theta, v.data(), mu_bar.data());
    cch_sigma_bar_at(theta, v.data(), sigma_bar.data());
}

CoefficientField cch_field(const CchTheta& theta) {
    theta.validate();
    CoefficientField f;
    f.d = theta.d;
    f.r = 2 * theta.d + 1;
    f.sigma = [theta](const double* x, const double* v, double* out) {
        require_nonneg_variance(theta.d, v);
        cch_sigma_at(theta, x, v, out);
    };
    f.mu_bar = [theta](const double* v, double* out) {
        require_nonneg_variance(theta.d, v);
        cch_mu_at(theta, v, out);
    };
    f.sigma_bar = [theta](const double* v, double* out) {
        require_nonneg_variance(theta.d, v);
        cch_sigma_bar_at(theta, v, out);
    };
    return f;
}

CoefficientField cch_field_full_truncation(const CchTheta& theta) {
    theta.validate();
    CoefficientField f;
    f.d = theta.d;
    f.r = 2 * theta.d + 1;
    // the scratch buffer is thread_local because one field object may be
    // evaluated from several workers at once
    auto clamped = [](const CchTheta& t, const double* v) -> const double* {
        thread_local std::vector<double> plus;
        plus.assign(v, v + t.d);
        for (double& w : plus) {
            if (w < 0.0) w = 0.0;
        }
        return plus.data();
    };
    f.sigma = [theta, clamped](const double* x, const double* v, double* out) {
        cch_sigma_at(theta, x, clamped(theta, v), out);
    };
    f.mu_bar = [theta, clamped](const double* v, double* out) {
        cch_mu_at(theta, clamped(theta, v), out);
    };
    f.sigma_bar = [theta, clamped](const double* v, double* out) {
        cch_sigma_bar_at(theta, clamped(theta, v), out);
    };
    return f;
}

// ----------------------------------------------------------------------------
// Driver increments

BrownianBundle::BrownianBundle(RngKey key, GridSpec gen_grid, std::size_t drivers,
                               std::size_t n_paths)
    : key_(key), gen_grid_(gen_grid), drivers_(drivers), n_paths_(n_paths) {
    if (!(gen_grid_.horizon > 0.0) || gen_grid_.steps == 0)
        throw std::invalid_argument("BrownianBundle: generation grid must have T > 0 and N >= 1");
    if (drivers_ == 0) throw std::invalid_argument("BrownianBundle: drivers must be at least 1");
}

void BrownianBundle::fill_path(std::size_t path_index, std::size_t steps,
                               std::vector<double>& out) const {
    if (steps == 0 || gen_grid_.steps % steps != 0)
        throw std::invalid_argument("BrownianBundle: steps must divide the generation grid");
    const std::size_t m = gen_grid_.steps / steps;
    const double scale = std::sqrt(gen_grid_.dt());
    RngStream stream = key_.stream(path_index);
    out.assign(steps * drivers_, 0.0);
    // generation order is fixed (step-major, driver-minor); coarse cells
    // accumulate their fine increments in that order
    for (std::size_t k = 0; k < gen_grid_.steps; ++k) {
        double* cell = out.data() + (k / m) * drivers_;
        for (std::size_t j = 0; j < drivers_; ++j) cell[j] += scale * stream.normal();
    }
}

void BrownianBundle::aggregate(std::span<const double> fine,
                               std::size_t fine_steps,
                               std::size_t coarse_steps,
                               std::size_t drivers,
                               std::vector<double>& out) {
    if (coarse_steps == 0 || fine_steps % coarse_steps != 0)
        throw std::invalid_argument("BrownianBundle: steps must divide the generation grid");
    if (fine.size() != fine_steps * drivers)
        throw std::invalid_argument("BrownianBundle: fine increment buffer has the wrong shape");
    const std::size_t m = fine_steps / coarse_steps;
    out.assign(coarse_steps * drivers, 0.0);
    for (std::size_t k = 0; k < fine_steps; ++k) {
        double* cell = out.data() + (k / m) * drivers;
        const double* src = fine.data() + k * drivers;
        for (std::size_t j = 0; j < drivers; ++j) cell[j] += src[j];
    }
}

// ----------------------------------------------------------------------------
// Euler scheme

namespace {

void halt_with_nan(EulerPath& p, std::size_t first_bad_slot) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::fill(p.x.begin() + static_cast<std::ptrdiff_t>(first_bad_slot * p.d), p.x.end(), nan);
    std::fill(p.v.begin() + static_cast<std::ptrdiff_t>(first_bad_slot * p.d), p.v.end(), nan);
}

bool state_finite(const double* x, const double* v, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(v[i])) return false;
    }
    return true;
}

} // namespace

EulerPath euler_path(const CoefficientField& field,
                     std::span<const double> x0,
                     std::span<const double> v0,
                     const GridSpec& grid,
                     std::span<const double> increments) {
    const std::size_t d = field.d;
    const std::size_t r = field.r;
    const std::size_t n = grid.steps;
    if (x0.size() != d || v0.size() != d)
        throw std::invalid_argument("euler_path: initial state dimension mismatch");
    if (increments.size() != n * r)
        throw std::invalid_argument("euler_path: increment buffer has the wrong shape");

    EulerPath p;
    p.steps = n;
    p.d = d;
    p.x.assign((n + 1) * d, 0.0);
    p.v.assign((n + 1) * d, 0.0);
    std::copy(x0.begin(), x0.end(), p.x.begin());
    std::copy(v0.begin(), v0.end(), p.v.begin());

    std::vector<double> sig(d * r), mu(d), sbar(d * r);
    const double h = grid.dt();
    for (std::size_t k = 0; k < n; ++k) {
        const double* xk = p.x.data() + k * d;
        const double* vk = p.v.data() + k * d;
        double* xn = p.x.data() + (k + 1) * d;
        double* vn = p.v.data() + (k + 1) * d;
        field.sigma(xk, vk, sig.data());
        field.mu_bar(vk, mu.data());
        field.sigma_bar(vk, sbar.data());
        const double* dw = increments.data() + k * r;
        for (std::size_t i = 0; i < d; ++i) {
            double dx = 0.0;
            double dv = 0.0;
            for (std::size_t j = 0; j < r; ++j) dx += sig[i * r + j] * dw[j];
            for (std::size_t j = 0; j < r; ++j) dv += sbar[i * r + j] * dw[j];
            xn[i] = xk[i] + dx;
            vn[i] = vk[i] + mu[i] * h + dv;
        }
        if (!state_finite(xn, vn, d)) {
            p.diverged = true;
            p.diverged_step = k + 1;
            if (k + 2 <= n) halt_with_nan(p, k + 2);
            break;
        }
    }
    return p;
}

EulerPath euler_path(const CoefficientField& field,
                     std::span<const double> x0,
                     std::span<const double> v0,
                     const GridSpec& grid,
                     const BrownianBundle& bundle,
                     std::size_t path_index) {
    if (bundle.drivers() != field.r)
        throw std::invalid_argument("euler_path: bundle driver count differs from the field's");
    if (bundle.gen_grid().horizon != grid.horizon)
        throw std::invalid_argument("euler_path: grid horizon differs from the bundle's");
    std::vector<double> increments;
    bundle.fill_path(path_index, grid.steps, increments);
    return euler_path(field, x0, v0, grid, increments);
}

// ----------------------------------------------------------------------------
// Cross-correlated Heston paths

CchPathResult simulate_cch_path(const CchTheta& theta,
                                std::span<const double> x0,
                                std::span<const double> v0,
                                const GridSpec& grid,
                                const BrownianBundle& bundle,
                                std::size_t path_index,
                                VariancePolicy policy,
                                const DomainBox& box) {
    theta.validate();
    switch (policy) {
        case VariancePolicy::StoppedDomain:
        case VariancePolicy::FullTruncation:
            break;
        default:
            throw std::invalid_argument("simulate_cch_path: unknown variance policy");
    }
    const std::size_t d = theta.d;
    const std::size_t r = 2 * d + 1;
    const std::size_t n = grid.steps;
    if (x0.size() != d || v0.size() != d)
        throw std::invalid_argument("simulate_cch_path: initial state dimension mismatch");
    if (bundle.drivers() != r)
        throw std::invalid_argument("simulate_cch_path: bundle must carry 2d+1 drivers");
    if (bundle.gen_grid().horizon != grid.horizon)
        throw std::invalid_argument("simulate_cch_path: grid horizon differs from the bundle's");
    const bool stopped_domain = policy == VariancePolicy::StoppedDomain;
    if (stopped_domain && !box.contains(x0, v0))
        throw std::invalid_argument("simulate_cch_path: initial state outside the domain box");

    CchPathResult res;
    EulerPath& p = res.path;
    p.steps = n;
    p.d = d;
    p.x.assign((n + 1) * d, 0.0);
    p.v.assign((n + 1) * d, 0.0);
    std::copy(x0.begin(), x0.end(), p.x.begin());
    std::copy(v0.begin(), v0.end(), p.v.begin());

    std::vector<double> increments;
    bundle.fill_path(path_index, n, increments);

    std::vector<double> sig(d * r), mu(d), sbar(d * r), vplus(d);
    const double h = grid.dt();
    bool frozen = false;
    for (std::size_t k = 0; k < n; ++k) {
        const double* xk = p.x.data() + k * d;
        const double* vk = p.v.data() + k * d;
        double* xn = p.x.data() + (k + 1) * d;
        double* vn = p.v.data() + (k + 1) * d;
        if (frozen) {
            std::copy(xk, xk + d, xn);
            std::copy(vk, vk + d, vn);
            continue;
        }
        const double* veval = vk;
        if (!stopped_domain) {
            for (std::size_t i = 0; i < d; ++i) vplus[i] = vk[i] < 0.0 ? 0.0 : vk[i];
            veval = vplus.data();
        }
        cch_sigma_at(theta, xk, veval, sig.data());
        cch_mu_at(theta, veval, mu.data());
        cch_sigma_bar_at(theta, veval, sbar.data());
        const double* dw = increments.data() + k * r;
        for (std::size_t i = 0; i < d; ++i) {
            double dx = 0.0;
            double dv = 0.0;
            for (std::size_t j = 0; j < r; ++j) dx += sig[i * r + j] * dw[j];
            for (std::size_t j = 0; j < r; ++j) dv += sbar[i * r + j] * dw[j];
            xn[i] = xk[i] + dx;
            vn[i] = vk[i] + mu[i] * h + dv;
        }
        if (!state_finite(xn, vn, d)) {
            p.diverged = true;
            p.diverged_step = k + 1;
            if (k + 2 <= n) halt_with_nan(p, k + 2);
            break;
        }
        if (stopped_domain &&
            !box.contains(std::span<const double>(xn, d), std::span<const double>(vn, d))) {
            // the candidate state would leave the box: hold the last inside
            // state from here on, so the path never leaves the domain
            std::copy(xk, xk + d, xn);
            std::copy(vk, vk + d, vn);
            res.stopped = true;
            res.stop_step = k + 1;
            frozen = true;
        }
    }
    return res;
}

CchSimulation simulate_cch(const CchTheta& theta,
                           std::span<const double> x0,
                           std::span<const double> v0,
                           const GridSpec& grid,
                           const BrownianBundle& bundle,
                           VariancePolicy policy,
                           const DomainBox& box) {
    CchSimulation sim;
    sim.feller = feller_check(theta);
    sim.paths.reserve(bundle.n_paths());
    for (std::size_t p = 0; p < bundle.n_paths(); ++p)
        sim.paths.push_back(simulate_cch_path(theta, x0, v0, grid, bundle, p, policy, box));
    return sim;
}

// ----------------------------------------------------------------------------
// Strong error

StrongErrorResult strong_error(const CoefficientField& field,
                               std::span<const double> x0,
                               std::span<const double> v0,
                               double horizon,
                               std::size_t coarse_steps,
                               std::size_t ref_steps,
                               std::size_t n_paths,
                               RngKey key) {
    if (coarse_steps == 0 || ref_steps % coarse_steps != 0)
        throw std::invalid_argument(
            "strong_error: reference grid is not a refinement of the coarse grid");
    if (n_paths == 0) throw std::invalid_argument("strong_error: need at least one path");

    const GridSpec fine{horizon, ref_steps};
    const GridSpec coarse{horizon, coarse_steps};
    const BrownianBundle bundle(key, fine, field.r, n_paths);
    const std::size_t m = ref_steps / coarse_steps;
    const std::size_t d = field.d;

    struct Partial {
        double sum = 0.0;
        double sum_sq = 0.0;
        std::size_t used = 0;
    };
    auto parts = run_chunks<Partial>(n_paths, kPathChunk, [&](std::size_t begin, std::size_t end) {
        Partial acc;
        std::vector<double> fine_inc, coarse_inc;
        for (std::size_t path = begin; path < end; ++path) {
            bundle.fill_path(path, ref_steps, fine_inc);
            BrownianBundle::aggregate(fine_inc, ref_steps, coarse_steps, field.r, coarse_inc);
            const EulerPath pf = euler_path(field, x0, v0, fine, fine_inc);
            const EulerPath pc = euler_path(field, x0, v0, coarse, coarse_inc);
            if (pf.diverged || pc.diverged) continue;
            double sup = 0.0;
            for (std::size_t k = 0; k <= coarse_steps; ++k) {
                const double* xc = pc.x_at(k);
                const double* vc = pc.v_at(k);
                const double* xf = pf.x_at(k * m);
                const double* vf = pf.v_at(k * m);
                double s = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double dx = xc[i] - xf[i];
                    const double dv = vc[i] - vf[i];
                    s += dx * dx + dv * dv;
                }
                if (s > sup) sup = s;
            }
            acc.sum += sup;
            acc.sum_sq += sup * sup;
            acc.used += 1;
        }
        return acc;
    });

    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t used = 0;
    for (const Partial& part : parts) {
        sum += part.sum;
        sum_sq += part.sum_sq;
        used += part.used;
    }
    if (used == 0) throw std::runtime_error("strong_error: every path diverged");

    StrongErrorResult res;
    res.coarse_steps = coarse_steps;
    res.ref_steps = ref_steps;
    res.h = coarse.dt();
    res.paths = used;
    res.mean_sq_sup = sum / static_cast<double>(used);
    if (used > 1) {
        const double nd = static_cast<double>(used);
        double var = (sum_sq - sum * sum / nd) / (nd - 1.0);
        if (var < 0.0) var = 0.0;
        res.se = std::sqrt(var / nd);
    }
    return res;
}

// ----------------------------------------------------------------------------
// CSV output

namespace {

void write_paths_csv_impl(std::ostream& os, const std::vector<const EulerPath*>& paths,
                          const GridSpec& grid) {
    const std::size_t d = paths.empty() ? 0 : paths.front()->d;
    std::string line = "path_id,k,t";
    for (std::size_t i = 1; i <= d; ++i) line += ",X_" + std::to_string(i);
    for (std::size_t i = 1; i <= d; ++i) line += ",V_" + std::to_string(i);
    os << line << '\n';
    for (std::size_t pid = 0; pid < paths.size(); ++pid) {
        const EulerPath& p = *paths[pid];
        for (std::size_t k = 0; k <= p.steps; ++k) {
            line.clear();
            line += std::to_string(pid);
            line += ',';
            line += std::to_string(k);
            line += ',';
            append_g17(line, grid.time_at(k));
            for (std::size_t i = 0; i < p.d; ++i) {
                line += ',';
                append_g17(line, p.x_at(k)[i]);
            }
            for (std::size_t i = 0; i < p.d; ++i) {
                line += ',';
                append_g17(line, p.v_at(k)[i]);
            }
            os << line << '\n';
        }
    }
}

} // namespace

void write_paths_csv(std::ostream& os, const std::vector<CchPathResult>& paths,
                     const GridSpec& grid) {
    std::vector<const EulerPath*> ptrs;
    ptrs.reserve(paths.size());
    for (const CchPathResult& r : paths) ptrs.push_back(&r.path);
    write_paths_csv_impl(os, ptrs, grid);
}

void write_paths_csv(std::ostream& os, const std::vector<EulerPath>& paths, const GridSpec& grid) {
    std::vector<const EulerPath*> ptrs;
    ptrs.reserve(paths.size());
    for (const EulerPath& p : paths) ptrs.push_back(&p);
    write_paths_csv_impl(os, ptrs, grid);
}

void write_strong_error_csv(std::ostream& os, const std::vector<StrongErrorResult>& rows) {
    os << "N,h,err_mean,err_se\n";
    std::string line;
    for (const StrongErrorResult& r : rows) {
        line.clear();
        line += std::to_string(r.coarse_steps);
        line += ',';
        append_g17(line, r.h);
        line += ',';
        append_g17(line, r.mean_sq_sup);
        line += ',';
        append_g17(line, r.se);
        os << line << '\n';
    }
}

} // namespace svnet
