#include "svnet/experiment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <span>
#include <string_view>

#include "json.hpp"

#include "svnet/net_builder.hpp"
#include "svnet/pricing.hpp"
#include "svnet/rough_vol.hpp"
#include "svnet/sv_sim.hpp"
#include "svnet/trainer.hpp"

namespace svnet {

namespace {

using nlohmann::json;

void append_g17(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double rel_gap(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

// ----------------------------------------------------------------------------
// Strict schema access. Every key a command reads is marked; finish() rejects
// whatever is left over, so typos never silently fall back to defaults.
// ----------------------------------------------------------------------------

class ConfigReader {
public:
    ConfigReader(const json& obj, std::string context)
        : obj_(obj), ctx_(std::move(context)) {}

    void claim(const char* key) { seen_.insert(key); }

    double number(const char* key, double fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number()) fail(key, "must be a number");
        return v->get<double>();
    }

    std::size_t count(const char* key, std::size_t fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_unsigned()) fail(key, "must be a nonnegative integer");
        return v->get<std::size_t>();
    }

    bool flag(const char* key, bool fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) fail(key, "must be a boolean");
        return v->get<bool>();
    }

    std::string word(const char* key, std::string fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) fail(key, "must be a string");
        return v->get<std::string>();
    }

    std::vector<double> numbers(const char* key, std::vector<double> fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_array() || v->empty()) fail(key, "must be a nonempty array");
        std::vector<double> out;
        for (const json& e : *v) {
            if (!e.is_number()) fail(key, "must hold numbers only");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<std::size_t> counts(const char* key, std::vector<std::size_t> fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_array() || v->empty()) fail(key, "must be a nonempty array");
        std::vector<std::size_t> out;
        for (const json& e : *v) {
            if (!e.is_number_unsigned()) fail(key, "must hold nonnegative integers only");
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError(ctx_ + ": unknown key '" + it.key() + "'");
    }

    [[noreturn]] void fail(const char* key, const char* what) const {
        throw ConfigError(ctx_ + ": " + key + " " + what);
    }

private:
    const json* find(const char* key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &it.value();
    }

    const json& obj_;
    std::string ctx_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& context, const char* what) {
    if (!ok) throw ConfigError(context + ": " + what);
}

// ----------------------------------------------------------------------------
// CSV assembly. Line one embeds the canonical config so the run can be
// reproduced from the file alone; every row starts with (hash, seed).
// ----------------------------------------------------------------------------

class CsvBuilder {
public:
    CsvBuilder(const ExperimentConfig& cfg, const char* columns) {
        content_ = "# config=";
        content_ += cfg.canonical;
        content_ += '\n';
        content_ += "config_hash,master_seed,";
        content_ += columns;
        content_ += '\n';
        prefix_ = std::to_string(cfg.hash);
        prefix_ += ',';
        prefix_ += std::to_string(cfg.master_seed);
    }

    void begin_row() { content_ += prefix_; }
    void num(double v) {
        content_ += ',';
        append_g17(content_, v);
    }
    void whole(std::uint64_t v) {
        content_ += ',';
        content_ += std::to_string(v);
    }
    void word(std::string_view s) {
        content_ += ',';
        content_ += s;
    }
    void end_row() { content_ += '\n'; }

    std::string take() { return std::move(content_); }

private:
    std::string content_;
    std::string prefix_;
};

struct CheckList {
    std::vector<std::string> lines;
    bool ok = true;

    void check(bool pass, const std::string& what) {
        lines.push_back((pass ? "pass: " : "FAIL: ") + what);
        if (!pass) ok = false;
    }
    void note(const std::string& what) { lines.push_back(what); }
};

double ols_slope(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// least squares y = a + p*u + q*w; returns {p, q}, NaNs when the normal
// equations are singular (degenerate designs are handled by the caller)
std::array<double, 2> plane_fit(std::span<const double> u, std::span<const double> w,
                                std::span<const double> y) {
    std::array<std::array<double, 4>, 3> m{};
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double row[3] = {1.0, u[i], w[i]};
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) m[a][b] += row[a] * row[b];
            m[a][3] += row[a] * y[i];
        }
    }
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
        std::swap(m[col], m[pivot]);
        if (std::abs(m[col][col]) < 1e-12)
            return {std::numeric_limits<double>::quiet_NaN(),
                    std::numeric_limits<double>::quiet_NaN()};
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double f = m[r][col] / m[col][col];
            for (int c = col; c < 4; ++c) m[r][c] -= f * m[col][c];
        }
    }
    return {m[1][3] / m[1][1], m[2][3] / m[2][2]};
}

// bounded smooth coefficients with bounded derivatives, the regime where the
// Euler scheme's strong rate is clean enough to fit a slope against
CoefficientField bounded_field() {
    CoefficientField f;
    f.d = 1;
    f.r = 2;
    f.sigma = [](const double* x, const double* v, double* out) {
        out[0] = 0.3 + 0.15 * std::sin(x[0] + v[0]);
        out[1] = 0.0;
    };
    f.mu_bar = [](const double* v, double* out) { out[0] = 0.5 * std::cos(v[0]); };
    f.sigma_bar = [](const double* v, double* out) {
        out[0] = 0.0;
        out[1] = 0.25 + 0.1 * std::cos(v[0]);
    };
    return f;
}

CommandResult finish_command(const CheckList& checks, std::vector<CommandFile> files) {
    CommandResult out;
    out.exit_code = checks.ok ? 0 : 2;
    out.report = checks.lines;
    out.files = std::move(files);
    return out;
}

// ============================================================================
// converge-hybrid: closed-form fourth moment of the one-point scheme gap per
// (H, N), its envelope, and a shared-randomness MC estimate of the same
// moment drawn through the exact-joint sampler.
// ============================================================================

CommandResult cmd_converge_hybrid(const ExperimentConfig& cfg, ConfigReader& in) {
    const std::string ctx = "converge-hybrid";
    const std::vector<double> hurst = in.numbers("hurst", {0.05, 0.1, 0.25, 0.4});
    const std::vector<std::size_t> steps = in.counts("steps", {4, 16, 64, 256, 1024});
    const double horizon = in.number("horizon", 1.0);
    const std::size_t samples = in.count("samples", 100000);
    in.finish();

    require(std::isfinite(horizon) && horizon > 0.0, ctx, "horizon must be positive");
    for (double h : hurst) require(h > 0.0 && h < 1.0, ctx, "hurst values must lie in (0, 1)");
    for (std::size_t n : steps) require(n >= 1, ctx, "steps values must be at least 1");
    require(samples >= 2, ctx, "samples must be at least 2");

    const RngKey root = RngKey::from_seed(cfg.master_seed);
    std::vector<HybridMomentRow> rows;
    rows.reserve(hurst.size() * steps.size());
    std::uint64_t row_index = 0;
    for (double h : hurst)
        for (std::size_t n : steps)
            rows.push_back(hybrid_moment_mc(horizon, n, h, samples, root.child(row_index++)));

    CsvBuilder csv(cfg, "hurst,steps,h,bound,closed_form,mc_moment,mc_se");
    for (const HybridMomentRow& r : rows) {
        csv.begin_row();
        csv.num(r.hurst);
        csv.whole(r.cells);
        csv.num(r.h);
        csv.num(r.exact_bound);
        csv.num(r.exact_moment);
        csv.num(r.mc_moment);
        csv.num(r.mc_se);
        csv.end_row();
    }

    CheckList checks;
    std::size_t bound_ok = 0;
    std::size_t mc_ok = 0;
    for (const HybridMomentRow& r : rows) {
        if (r.exact_moment <= r.exact_bound) ++bound_ok;
        if (r.exact_moment == 0.0) {
            // scheme-exact rows: the joint covariance is singular and the
            // factorization leaves jitter far below any honest se band
            if (r.mc_moment <= 1e-20) ++mc_ok;
        } else if (std::abs(r.mc_moment - r.exact_moment) <= 4.0 * r.mc_se) {
            ++mc_ok;
        }
    }
    checks.check(bound_ok == rows.size(),
                 "closed form within envelope on " + std::to_string(bound_ok) + "/" +
                     std::to_string(rows.size()) + " rows");
    checks.check(mc_ok == rows.size(),
                 "Monte Carlo moment within 4 se of closed form on " + std::to_string(mc_ok) +
                     "/" + std::to_string(rows.size()) + " rows");

    for (std::size_t hi = 0; hi < hurst.size(); ++hi) {
        if (steps.size() < 2) {
            checks.note("slope hurst=" + fmt6(hurst[hi]) + ": skipped (single step count)");
            continue;
        }
        std::vector<double> lx, ly;
        bool exact = false;
        for (std::size_t ni = 0; ni < steps.size(); ++ni) {
            const HybridMomentRow& r = rows[hi * steps.size() + ni];
            if (!(r.exact_moment > 0.0)) {
                exact = true;
                break;
            }
            lx.push_back(std::log(r.h));
            ly.push_back(std::log(r.exact_moment));
        }
        if (exact) {
            checks.note("slope hurst=" + fmt6(hurst[hi]) + ": skipped (scheme exact, zero gap)");
            continue;
        }
        const double slope = ols_slope(lx, ly);
        const double target = 4.0 * hurst[hi];
        // ten percent of the rate, floored at a tenth of a slope unit: for
        // small H the coarsest grids sit outside the asymptotic regime and a
        // purely relative band would reject the exact moment itself
        const double band = std::max(0.1 * target, 0.1);
        checks.check(std::abs(slope - target) <= band,
                     "log-log slope hurst=" + fmt6(hurst[hi]) + ": " + fmt6(slope) +
                         " within " + fmt6(target) + " +- " + fmt6(band));
    }

    std::vector<CommandFile> files;
    files.push_back({"converge_hybrid.csv", csv.take()});
    return finish_command(checks, std::move(files));
}

// ============================================================================
// converge-em: strong-error sweep of the Euler scheme on a bounded smooth
// test model, coarse grids coupled to one fine reference per row.
// ============================================================================

CommandResult cmd_converge_em(const ExperimentConfig& cfg, ConfigReader& in) {
    const std::string ctx = "converge-em";
    const std::vector<std::size_t> steps = in.counts("steps", {16, 32, 64, 128, 256, 512});
    const std::size_t ref_steps = in.count("ref_steps", 4096);
    const std::size_t paths = in.count("paths", 20000);
    const double horizon = in.number("horizon", 1.0);
    const double x0 = in.number("x0", 0.0);
    const double v0 = in.number("v0", 0.0);
    in.finish();

    require(std::isfinite(horizon) && horizon > 0.0, ctx, "horizon must be positive");
    require(paths >= 2, ctx, "paths must be at least 2");
    for (std::size_t n : steps) {
        require(n >= 1, ctx, "steps values must be at least 1");
        require(n < ref_steps && ref_steps % n == 0, ctx,
                "ref_steps must be a strict multiple of every steps value");
    }

    const CoefficientField field = bounded_field();
    const RngKey root = RngKey::from_seed(cfg.master_seed);
    std::vector<StrongErrorResult> rows;
    for (std::size_t i = 0; i < steps.size(); ++i)
        rows.push_back(strong_error(field, std::span(&x0, 1), std::span(&v0, 1), horizon,
                                    steps[i], ref_steps, paths, root.child(i)));

    CsvBuilder csv(cfg, "steps,ref_steps,h,err_mean,err_se");
    for (const StrongErrorResult& r : rows) {
        csv.begin_row();
        csv.whole(r.coarse_steps);
        csv.whole(r.ref_steps);
        csv.num(r.h);
        csv.num(r.mean_sq_sup);
        csv.num(r.se);
        csv.end_row();
    }

    CheckList checks;
    if (rows.size() >= 2) {
        std::vector<double> lx, ly;
        for (const StrongErrorResult& r : rows) {
            lx.push_back(std::log(r.h));
            ly.push_back(std::log(r.mean_sq_sup));
        }
        const double slope = ols_slope(lx, ly);
        checks.check(slope >= 0.8 && slope <= 1.2,
                     "squared strong error slope " + fmt6(slope) + " within [0.8, 1.2]");
    } else {
        checks.note("slope: skipped (single step count)");
    }

    std::vector<CommandFile> files;
    files.push_back({"converge_em.csv", csv.take()});
    return finish_command(checks, std::move(files));
}

// ============================================================================
// realize-check: build the averaged pricing network per seed, evaluate it at
// one parameter point, and compare against the Monte Carlo average of the
// network-coefficient scheme on the identical frozen driver bundle. The size
// audit of the first build is emitted alongside; an optional injected bias
// perturbation must flip the equivalence check.
// ============================================================================

CommandResult cmd_realize_check(const ExperimentConfig& cfg, ConfigReader& in) {
    const std::string ctx = "realize-check";
    const std::string model = in.word("model", "cch");
    require(model == "cch" || model == "rbergomi", ctx, "model must be 'cch' or 'rbergomi'");

    const std::size_t steps = in.count("steps", 4);
    const std::size_t copies = in.count("copies", 2);
    const std::size_t seeds = in.count("seeds", 20);
    const double block_eps = in.number("block_eps", 0.1);
    const double target_eps = in.number("target_eps", 0.1);
    const double horizon = in.number("horizon", 1.0);
    const double strike = in.number("strike", 100.0);
    const double cap = in.number("cap", 0.0);
    const double x0 = in.number("x0", 100.0);
    const bool inject_fault = in.flag("inject_fault", false);
    const double fault_size = in.number("fault_size", 1e-6);

    require(steps >= 1, ctx, "steps must be at least 1");
    require(copies >= 1, ctx, "copies must be at least 1");
    require(seeds >= 1, ctx, "seeds must be at least 1");
    require(block_eps > 0.0 && block_eps < 1.0, ctx, "block_eps must lie in (0, 1)");
    require(target_eps > 0.0, ctx, "target_eps must be positive");
    require(std::isfinite(horizon) && horizon > 0.0, ctx, "horizon must be positive");
    require(cap >= 0.0, ctx, "cap must be nonnegative");
    require(fault_size > 0.0, ctx, "fault_size must be positive");

    const double tol = 1e-9;  // relative equivalence tolerance, pinned

    CsvBuilder csv(cfg, "model,seed,price_net,price_sim,rel_gap,pass");
    CsvBuilder audit_csv(cfg, "block,measured_size,bound_value,pass");
    CheckList checks;
    std::size_t eq_ok = 0;
    SizeAudit first_audit;
    ReluNetwork last_net;
    double last_sim = 0.0;
    std::vector<double> input;

    RealizationPlan plan;
    plan.copies = copies;
    plan.grid = GridSpec{horizon, steps};
    plan.block_eps = block_eps;
    plan.target_eps = target_eps;

    if (model == "cch") {
        const std::size_t assets = in.count("assets", 1);
        const double v0 = in.number("v0", 0.04);
        const double a = in.number("a", 2.0);
        const double b = in.number("b", 0.04);
        const double nu = in.number("nu", 0.3);
        const double rho_x = in.number("rho_x", 0.25);
        const double rho_v = in.number("rho_v", -0.5);
        in.finish();
        require(assets >= 1, ctx, "assets must be at least 1");

        CchTheta theta;
        try {
            theta = CchTheta::flat(assets, a, b, nu, rho_x, rho_v);
            theta.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(ctx + ": " + e.what());
        }

        PayoffSpec payoff;
        payoff.d = static_cast<int>(assets);
        payoff.kind = cap > 0.0 ? PayoffKind::CappedCall : PayoffKind::Call;
        payoff.cap = cap;

        plan.model = RealizedModel::CrossHeston;
        plan.assets = static_cast<int>(assets);

        const CchCoefficientNets coef = cch_coefficient_nets(assets, block_eps);
        const std::vector<double> theta_flat = cch_theta_flat(theta);
        const CoefficientField field = net_coefficient_field(coef, theta_flat);
        const std::vector<double> x0v(assets, x0);
        const std::vector<double> v0v(assets, v0);

        input.assign(x0v.begin(), x0v.end());
        input.insert(input.end(), v0v.begin(), v0v.end());
        input.insert(input.end(), theta_flat.begin(), theta_flat.end());
        input.push_back(strike);

        for (std::size_t s = 0; s < seeds; ++s) {
            plan.master_seed = cfg.master_seed + s;
            RealizedPricer pricer = cch_pricing_net(plan, coef, payoff);
            const double got = pricer.net.evaluate(input)[0];

            const BrownianBundle bundle(plan.randomness_key(), plan.grid, 2 * assets + 1,
                                        copies);
            double mean = 0.0;
            for (std::size_t c = 0; c < copies; ++c) {
                const EulerPath ep = euler_path(field, x0v, v0v, plan.grid, bundle, c);
                mean += payoff_value(payoff, std::span(ep.x_at(plan.grid.steps), assets), strike);
            }
            mean /= static_cast<double>(copies);

            const double gap = rel_gap(got, mean);
            const bool pass = gap <= tol;
            if (pass) ++eq_ok;
            csv.begin_row();
            csv.word("cch");
            csv.whole(plan.master_seed);
            csv.num(got);
            csv.num(mean);
            csv.num(gap);
            csv.whole(pass ? 1 : 0);
            csv.end_row();
            if (s == 0) first_audit = pricer.audit;
            if (s + 1 == seeds) {
                last_net = std::move(pricer.net);
                last_sim = mean;
            }
        }
    } else {
        const double nu = in.number("nu", 0.09);
        const double eta = in.number("eta", 1.9);
        const double rho = in.number("rho", -0.7);
        const double hurst = in.number("hurst", 0.1);
        const double truncation = in.number("truncation", 4.0);
        const double driver_clamp = in.number("driver_clamp", 2.5);
        in.finish();
        require(nu >= 0.01 && nu <= 0.25, ctx, "nu must lie in [0.01, 0.25]");
        require(eta >= 0.0 && eta <= 2.5, ctx, "eta must lie in [0, 2.5]");
        require(rho >= -0.99 && rho <= 0.0, ctx, "rho must lie in [-0.99, 0]");
        require(hurst >= 0.05 && hurst <= 0.45, ctx, "hurst must lie in [0.05, 0.45]");
        require(truncation > 1.0, ctx, "truncation must exceed 1");
        require(driver_clamp >= 1.0, ctx, "driver_clamp must be at least 1");

        PayoffSpec payoff;
        payoff.d = 1;
        payoff.kind = cap > 0.0 ? PayoffKind::CappedCall : PayoffKind::Call;
        payoff.cap = cap;

        plan.model = RealizedModel::RoughBergomi;
        plan.truncation = truncation;
        plan.driver_clamp = driver_clamp;

        input = {x0, nu, eta, rho, hurst, strike};

        for (std::size_t s = 0; s < seeds; ++s) {
            plan.master_seed = cfg.master_seed + s;
            const RoughBlocks blocks = rough_blocks(plan);
            RealizedPricer pricer = rbergomi_pricing_net(blocks, payoff);
            const double got = pricer.net.evaluate(input)[0];

            double mean = 0.0;
            for (std::size_t c = 0; c < copies; ++c) {
                const RoughPathNet path = rough_path_net(blocks, c);
                const double xt = rough_net_recursion(blocks, path, x0, nu, eta, rho, hurst);
                mean += payoff_value(payoff, std::span(&xt, 1), strike);
            }
            mean /= static_cast<double>(copies);

            const double gap = rel_gap(got, mean);
            const bool pass = gap <= tol;
            if (pass) ++eq_ok;
            csv.begin_row();
            csv.word("rbergomi");
            csv.whole(plan.master_seed);
            csv.num(got);
            csv.num(mean);
            csv.num(gap);
            csv.whole(pass ? 1 : 0);
            csv.end_row();
            if (s == 0) first_audit = pricer.audit;
            if (s + 1 == seeds) {
                last_net = std::move(pricer.net);
                last_sim = mean;
            }
        }
    }

    checks.check(eq_ok == seeds, "network equals simulated average on " + std::to_string(eq_ok) +
                                     "/" + std::to_string(seeds) + " seeds (tol 1e-09 relative)");

    std::size_t audit_ok = 0;
    for (const SizeAuditRow& r : first_audit.rows) {
        if (r.pass) ++audit_ok;
        audit_csv.begin_row();
        audit_csv.word(r.block);
        audit_csv.whole(static_cast<std::uint64_t>(r.measured_size));
        audit_csv.num(r.bound_value);
        audit_csv.whole(r.pass ? 1 : 0);
        audit_csv.end_row();
    }
    checks.check(first_audit.all_pass(), "size audit: " + std::to_string(audit_ok) + "/" +
                                             std::to_string(first_audit.rows.size()) +
                                             " rows within bounds");

    if (inject_fault) {
        ReluNetwork bad = last_net;
        bad.mutable_layers().back().bias[0] += fault_size;
        const double broken = bad.evaluate(input)[0];
        const double gap = rel_gap(broken, last_sim);
        checks.check(gap > tol, "injected bias fault detected (rel gap " + fmt6(gap) + ")");
    }

    std::vector<CommandFile> files;
    files.push_back({"realize_check.csv", csv.take()});
    files.push_back({"size_audit.csv", audit_csv.take()});
    return finish_command(checks, std::move(files));
}

// ============================================================================
// size-sweep: assembled pricer size across state dimension and target
// accuracy, with a joint log-log fit and the exact copy-count doubling law.
// ============================================================================

CommandResult cmd_size_sweep(const ExperimentConfig& cfg, ConfigReader& in) {
    const std::string ctx = "size-sweep";
    const std::vector<std::size_t> assets = in.counts("assets", {1, 2, 4, 8});
    const std::vector<double> targets = in.numbers("target_eps", {0.2, 0.1, 0.05});
    const std::size_t steps = in.count("steps", 2);
    const std::size_t copies = in.count("copies", 1);
    const double horizon = in.number("horizon", 1.0);
    in.finish();

    for (std::size_t d : assets) require(d >= 1 && d <= 16, ctx, "assets must lie in [1, 16]");
    for (double e : targets) require(e > 0.0 && e < 1.0, ctx, "target_eps must lie in (0, 1)");
    require(steps >= 1, ctx, "steps must be at least 1");
    require(copies >= 1, ctx, "copies must be at least 1");
    require(std::isfinite(horizon) && horizon > 0.0, ctx, "horizon must be positive");

    struct Point {
        std::size_t d = 0;
        double target = 0.0;
        double block = 0.0;
        std::int64_t size = 0;
        std::int64_t size_double = 0;
        int depth = 0;
    };
    std::vector<Point> points;

    for (std::size_t d : assets) {
        for (double target : targets) {
            Point p;
            p.d = d;
            p.target = target;
            p.block = target / 4.0;
            const CchCoefficientNets coef = cch_coefficient_nets(d, p.block);

            PayoffSpec payoff;
            payoff.d = static_cast<int>(d);
            if (d == 1) {
                payoff.kind = PayoffKind::Call;
            } else {
                payoff.kind = PayoffKind::BasketCall;
                payoff.weights.assign(d, 1.0 / static_cast<double>(d));
            }

            RealizationPlan plan;
            plan.model = RealizedModel::CrossHeston;
            plan.copies = copies;
            plan.grid = GridSpec{horizon, steps};
            plan.block_eps = p.block;
            plan.target_eps = target;
            plan.master_seed = cfg.master_seed;
            plan.assets = static_cast<int>(d);

            const RealizedPricer one = cch_pricing_net(plan, coef, payoff);
            const NetMetrics m = metrics(one.net);
            p.size = m.size;
            p.depth = m.depth;
            plan.copies = 2 * copies;
            const RealizedPricer two = cch_pricing_net(plan, coef, payoff);
            p.size_double = metrics(two.net).size;
            points.push_back(p);
        }
    }

    const auto d_bar = [](std::size_t d) { return static_cast<double>(3 * d + 1); };

    std::set<std::size_t> distinct_d(assets.begin(), assets.end());
    std::set<double> distinct_e(targets.begin(), targets.end());
    double p_emp = 0.0;
    double q_emp = 0.0;
    bool fitted = false;
    if (distinct_d.size() >= 2 && distinct_e.size() >= 2) {
        std::vector<double> u, w, y;
        for (const Point& p : points) {
            u.push_back(std::log(d_bar(p.d)));
            w.push_back(std::log(1.0 / p.target));
            y.push_back(std::log(static_cast<double>(p.size)));
        }
        const std::array<double, 2> fit = plane_fit(u, w, y);
        p_emp = fit[0];
        q_emp = fit[1];
        fitted = true;
    } else if (distinct_d.size() >= 2) {
        std::vector<double> u, y;
        for (const Point& p : points) {
            u.push_back(std::log(d_bar(p.d)));
            y.push_back(std::log(static_cast<double>(p.size)));
        }
        p_emp = ols_slope(u, y);
        fitted = true;
    } else if (distinct_e.size() >= 2) {
        std::vector<double> w, y;
        for (const Point& p : points) {
            w.push_back(std::log(1.0 / p.target));
            y.push_back(std::log(static_cast<double>(p.size)));
        }
        q_emp = ols_slope(w, y);
        fitted = true;
    }

    CsvBuilder csv(cfg,
                   "assets,d_bar,target_eps,block_eps,copies,size,size_double_copies,depth,"
                   "p_emp,q_emp");
    for (const Point& p : points) {
        csv.begin_row();
        csv.whole(p.d);
        csv.num(d_bar(p.d));
        csv.num(p.target);
        csv.num(p.block);
        csv.whole(copies);
        csv.whole(static_cast<std::uint64_t>(p.size));
        csv.whole(static_cast<std::uint64_t>(p.size_double));
        csv.whole(static_cast<std::uint64_t>(p.depth));
        csv.num(p_emp);
        csv.num(q_emp);
        csv.end_row();
    }

    CheckList checks;
    if (fitted) {
        checks.check(std::isfinite(p_emp) && std::isfinite(q_emp) && std::abs(p_emp) <= 100.0 &&
                         std::abs(q_emp) <= 100.0,
                     "fitted exponents finite: p_emp " + fmt6(p_emp) + ", q_emp " + fmt6(q_emp));
    } else {
        checks.note("exponent fit skipped (needs two distinct values on an axis)");
    }

    std::size_t doubling_ok = 0;
    for (const Point& p : points)
        if (p.size_double == 2 * p.size) ++doubling_ok;
    checks.check(doubling_ok == points.size(),
                 "doubling copies doubles size exactly on " + std::to_string(doubling_ok) + "/" +
                     std::to_string(points.size()) + " points");

    // halving the target accuracy only ever multiplies the size by a modest
    // factor; the blocks grow with log(1/eps), not any power of it
    bool ratio_ok = true;
    double worst = 1.0;
    for (std::size_t d : assets) {
        std::vector<const Point*> per_d;
        for (const Point& p : points)
            if (p.d == d) per_d.push_back(&p);
        std::sort(per_d.begin(), per_d.end(),
                  [](const Point* a, const Point* b) { return a->target > b->target; });
        for (std::size_t i = 1; i < per_d.size(); ++i) {
            const double ratio = static_cast<double>(per_d[i]->size) /
                                 static_cast<double>(per_d[i - 1]->size);
            worst = std::max(worst, ratio);
            if (!(ratio <= 4.0)) ratio_ok = false;
        }
    }
    if (distinct_e.size() >= 2)
        checks.check(ratio_ok, "tightening target_eps grows size by at most 4x per step (worst " +
                                   fmt6(worst) + ")");

    std::vector<CommandFile> files;
    files.push_back({"size_sweep.csv", csv.take()});
    return finish_command(checks, std::move(files));
}

// ============================================================================
// train: price a mu-sampled d = 1 parameter set by Monte Carlo, fit each
// requested architecture on the same labels, and report the error split into
// net-versus-label and the label noise floor.
// ============================================================================

CommandResult cmd_train(const ExperimentConfig& cfg, ConfigReader& in) {
    const std::string ctx = "train";
    const std::vector<std::size_t> widths = in.counts("widths", {8, 64});
    const std::vector<std::size_t> depths = in.counts("depths", {2, 4});
    const std::size_t samples = in.count("samples", 256);
    const std::size_t eval_samples = in.count("eval_samples", 64);
    const std::size_t m_label = in.count("m_label", 100000);
    const std::size_t label_steps = in.count("label_steps", 16);
    const double horizon = in.number("horizon", 1.0);
    const std::size_t epochs = in.count("epochs", 300);
    const std::size_t batch = in.count("batch", 256);
    const double lr = in.number("lr", 1e-3);
    in.finish();

    require(widths.size() == depths.size(), ctx, "widths and depths must have equal length");
    for (std::size_t w : widths) require(w >= 1, ctx, "widths must be positive");
    for (std::size_t l : depths) require(l >= 1, ctx, "depths must be positive");
    require(samples >= 2, ctx, "samples must be at least 2");
    require(eval_samples >= 2, ctx, "eval_samples must be at least 2");
    require(m_label >= 2, ctx, "m_label must be at least 2");
    require(label_steps >= 1, ctx, "label_steps must be at least 1");
    require(std::isfinite(horizon) && horizon > 0.0, ctx, "horizon must be positive");
    require(epochs >= 1, ctx, "epochs must be at least 1");
    require(batch >= 1, ctx, "batch must be at least 1");
    require(std::isfinite(lr) && lr > 0.0, ctx, "lr must be positive");

    const MeasureMu mu;
    const RngKey root = RngKey::from_seed(cfg.master_seed);
    const GridSpec grid{horizon, label_steps};
    PayoffSpec payoff;
    payoff.d = 1;

    const std::size_t total = samples + eval_samples;
    std::vector<std::vector<double>> features(total);
    std::vector<double> labels(total);
    std::vector<double> label_se(total);
    for (std::size_t i = 0; i < total; ++i) {
        RngStream draw = root.child("data").stream(i);
        const MuSample s = sample_mu(mu, 1, draw);
        features[i] = {s.x[0],          s.v[0],          s.theta.a[0], s.theta.b[0],
                       s.theta.nu[0],   s.theta.rho_x[0], s.theta.rho_v[0], s.k[0]};
        const std::uint64_t label_seed = root.child("labels").child(i).master;
        const PriceResult pr =
            mc_price_cch(s.theta, s.x, s.v, payoff, s.k[0], grid, m_label, label_seed,
                         VariancePolicy::FullTruncation);
        labels[i] = pr.estimate;
        label_se[i] = pr.se;
    }

    TrainSet set;
    set.x.assign(features.begin(), features.begin() + samples);
    set.y.assign(labels.begin(), labels.begin() + samples);

    double floor_sq = 0.0;
    for (std::size_t i = samples; i < total; ++i) floor_sq += label_se[i] * label_se[i];
    const double label_floor = std::sqrt(floor_sq / static_cast<double>(eval_samples));

    CsvBuilder csv(cfg, "width,depth,parameters,train_rmse,l2_rmse,label_floor,adjusted_rmse");
    CheckList checks;
    std::vector<double> adjusted;

    for (std::size_t a = 0; a < widths.size(); ++a) {
        MlpShape shape;
        shape.in_dim = 8;
        shape.hidden.assign(depths[a], static_cast<int>(widths[a]));
        shape.out_dim = 1;

        TrainConfig tc;
        tc.epochs = static_cast<int>(epochs);
        tc.batch = static_cast<int>(batch);
        tc.adam.lr = lr;
        tc.seed = root.child("train").child(a).master;

        TrainResult trained;
        try {
            trained = train_mlp(set, shape, tc);
        } catch (const std::runtime_error& e) {
            checks.check(false, std::string("training aborted: ") + e.what());
            break;
        }
        const ReluNetwork net = to_relu_network(trained);

        double sq = 0.0;
        for (std::size_t i = samples; i < total; ++i) {
            const double pred = net.evaluate(features[i])[0];
            const double gap = pred - labels[i];
            sq += gap * gap;
        }
        const double l2_rmse = std::sqrt(sq / static_cast<double>(eval_samples));
        const double adj =
            std::sqrt(std::max(l2_rmse * l2_rmse - label_floor * label_floor, 0.0));
        adjusted.push_back(adj);

        checks.check(std::isfinite(l2_rmse), "width " + std::to_string(widths[a]) + " depth " +
                                                 std::to_string(depths[a]) +
                                                 " generalization rmse finite: " + fmt6(l2_rmse));

        csv.begin_row();
        csv.whole(widths[a]);
        csv.whole(depths[a]);
        csv.whole(shape.parameter_count());
        csv.num(trained.train_rmse);
        csv.num(l2_rmse);
        csv.num(label_floor);
        csv.num(adj);
        csv.end_row();
    }

    if (adjusted.size() >= 2 && adjusted.front() > 0.0) {
        const double gain = (adjusted.front() - adjusted.back()) / adjusted.front();
        checks.note("adjusted rmse change first to last: " + fmt6(100.0 * gain) + "%");
    }

    std::vector<CommandFile> files;
    files.push_back({"train.csv", csv.take()});
    return finish_command(checks, std::move(files));
}

// ============================================================================
// Thin pricing wrappers.
// ============================================================================

CommandResult cmd_price(const ExperimentConfig& cfg, ConfigReader& in) {
    const std::string ctx = "price";
    const std::string model = in.word("model", "cch");
    require(model == "cch" || model == "rbergomi", ctx, "model must be 'cch' or 'rbergomi'");

    const double strike = in.number("strike", 100.0);
    const double horizon = in.number("horizon", 1.0);
    const std::size_t steps = in.count("steps", 64);
    const std::size_t paths = in.count("paths", 100000);
    const double cap = in.number("cap", 0.0);
    const double x0 = in.number("x0", 100.0);
    require(std::isfinite(horizon) && horizon > 0.0, ctx, "horizon must be positive");
    require(steps >= 1, ctx, "steps must be at least 1");
    require(paths >= 2, ctx, "paths must be at least 2");
    require(cap >= 0.0, ctx, "cap must be nonnegative");

    PayoffSpec payoff;
    payoff.d = 1;
    payoff.kind = cap > 0.0 ? PayoffKind::CappedCall : PayoffKind::Call;
    payoff.cap = cap;
    const GridSpec grid{horizon, steps};

    PriceResult res;
    if (model == "cch") {
        const double v0 = in.number("v0", 0.04);
        const double a = in.number("a", 2.0);
        const double b = in.number("b", 0.04);
        const double nu = in.number("nu", 0.3);
        const double rho_x = in.number("rho_x", 0.0);
        const double rho_v = in.number("rho_v", -0.7);
        const std::string policy = in.word("policy", "full");
        const double box_scale = in.number("box_scale", 1.0);
        in.finish();
        require(policy == "full" || policy == "stopped", ctx,
                "policy must be 'full' or 'stopped'");

        CchTheta theta;
        try {
            theta = CchTheta::single(a, b, nu, rho_x, rho_v);
            theta.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(ctx + ": " + e.what());
        }
        DomainBox box;
        try {
            box = scaled_domain_box(box_scale);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(ctx + ": " + e.what());
        }
        res = mc_price_cch(theta, std::span(&x0, 1), std::span(&v0, 1), payoff, strike, grid,
                           paths, cfg.master_seed,
                           policy == "full" ? VariancePolicy::FullTruncation
                                            : VariancePolicy::StoppedDomain,
                           box);
    } else {
        const double nu = in.number("nu", 0.09);
        const double eta = in.number("eta", 1.9);
        const double rho = in.number("rho", -0.7);
        const double hurst = in.number("hurst", 0.1);
        const double truncation = in.number("truncation", 10.0);
        const double driver_clamp = in.number("driver_clamp", 3.0);
        const std::string source = in.word("source", "exact");
        in.finish();
        require(source == "exact" || source == "hybrid", ctx,
                "source must be 'exact' or 'hybrid'");

        RBergomiTheta theta;
        theta.nu = nu;
        theta.eta = eta;
        theta.rho = rho;
        theta.hurst = hurst;
        theta.truncation = truncation;
        theta.driver_clamp = driver_clamp;
        try {
            theta.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(ctx + ": " + e.what());
        }
        res = mc_price_rbergomi(theta, x0, payoff, strike, grid, paths, cfg.master_seed,
                                source == "exact" ? VarianceSource::ExactJoint
                                                  : VarianceSource::Hybrid);
    }

    CsvBuilder csv(cfg, "model,strike,horizon,steps,paths,price,se,stopped,diverged");
    csv.begin_row();
    csv.word(model);
    csv.num(strike);
    csv.num(horizon);
    csv.whole(steps);
    csv.whole(res.paths);
    csv.num(res.estimate);
    csv.num(res.se);
    csv.whole(res.stopped);
    csv.whole(res.diverged);
    csv.end_row();

    CheckList checks;
    checks.note("price " + model + ": " + fmt6(res.estimate) + " (se " + fmt6(res.se) +
                ", stopped " + std::to_string(res.stopped) + ", diverged " +
                std::to_string(res.diverged) + ")");

    std::vector<CommandFile> files;
    files.push_back({"price.csv", csv.take()});
    return finish_command(checks, std::move(files));
}

CommandResult cmd_truncation_sweep(const ExperimentConfig& cfg, ConfigReader& in) {
    const std::string ctx = "truncation-sweep";
    std::vector<double> levels = in.numbers("truncations", {2.0, 5.0, 20.0, 100.0});
    const double nu = in.number("nu", 0.09);
    const double eta = in.number("eta", 1.9);
    const double rho = in.number("rho", -0.7);
    const double hurst = in.number("hurst", 0.1);
    const double driver_clamp = in.number("driver_clamp", 3.0);
    const double x0 = in.number("x0", 100.0);
    const double strike = in.number("strike", 100.0);
    const double horizon = in.number("horizon", 1.0);
    const std::size_t steps = in.count("steps", 32);
    const std::size_t paths = in.count("paths", 20000);
    const double cap = in.number("cap", 150.0);
    const std::string source = in.word("source", "exact");
    in.finish();

    for (double lvl : levels) require(lvl > 1.0, ctx, "truncations must exceed 1");
    require(std::isfinite(horizon) && horizon > 0.0, ctx, "horizon must be positive");
    require(steps >= 1, ctx, "steps must be at least 1");
    require(paths >= 2, ctx, "paths must be at least 2");
    require(cap > 0.0, ctx, "the sweep compares capped payoffs; cap must be positive");
    require(source == "exact" || source == "hybrid", ctx, "source must be 'exact' or 'hybrid'");
    std::sort(levels.begin(), levels.end());

    RBergomiTheta theta;
    theta.nu = nu;
    theta.eta = eta;
    theta.rho = rho;
    theta.hurst = hurst;
    theta.truncation = levels.back();
    theta.driver_clamp = driver_clamp;
    try {
        theta.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(ctx + ": " + e.what());
    }

    PayoffSpec payoff;
    payoff.d = 1;
    payoff.kind = PayoffKind::CappedCall;
    payoff.cap = cap;

    const std::vector<TruncationSweepPoint> points = truncation_sweep(
        theta, x0, payoff, strike, GridSpec{horizon, steps}, levels, paths, cfg.master_seed,
        source == "exact" ? VarianceSource::ExactJoint : VarianceSource::Hybrid);

    CsvBuilder csv(cfg, "truncation,price,se,paths");
    for (const TruncationSweepPoint& p : points) {
        csv.begin_row();
        csv.num(p.truncation);
        csv.num(p.price.estimate);
        csv.num(p.price.se);
        csv.whole(p.price.paths);
        csv.end_row();
    }

    CheckList checks;
    bool capped = true;
    for (const TruncationSweepPoint& p : points)
        if (!(p.price.estimate <= cap)) capped = false;
    checks.check(capped, "every price within the payoff cap");

    if (points.size() >= 3) {
        // gaps to the widest level shrink monotonically, shared randomness
        // keeping the comparison noise at the 2 se level
        const double ref = points.back().price.estimate;
        bool monotone = true;
        for (std::size_t i = 0; i + 2 < points.size(); ++i) {
            const double gap_here = std::abs(points[i].price.estimate - ref);
            const double gap_next = std::abs(points[i + 1].price.estimate - ref);
            const double slack = 2.0 * std::sqrt(points[i].price.se * points[i].price.se +
                                                 points[i + 1].price.se * points[i + 1].price.se);
            if (!(gap_next <= gap_here + slack)) monotone = false;
        }
        checks.check(monotone, "gap to the widest level shrinks monotonically (2 se slack)");
    } else {
        checks.note("monotonicity: skipped (needs at least three levels)");
    }

    checks.note("row count " + std::to_string(points.size()));

    std::vector<CommandFile> files;
    files.push_back({"truncation_sweep.csv", csv.take()});
    return finish_command(checks, std::move(files));
}

CommandResult cmd_stopped_sweep(const ExperimentConfig& cfg, ConfigReader& in) {
    const std::string ctx = "stopped-sweep";
    std::vector<double> scales = in.numbers("scales", {1.0, 1.5, 2.0, 3.0});
    // variance kept well away from zero by default (2ab >> nu^2), so the
    // shrinking variance floor of the growing boxes stops almost no paths
    // and the sweep can actually stabilize
    const double a = in.number("a", 2.0);
    const double b = in.number("b", 0.1);
    const double nu = in.number("nu", 0.2);
    const double rho_x = in.number("rho_x", 0.0);
    const double rho_v = in.number("rho_v", -0.7);
    const double x0 = in.number("x0", 100.0);
    const double v0 = in.number("v0", 0.1);
    const double strike = in.number("strike", 100.0);
    const double horizon = in.number("horizon", 1.0);
    const std::size_t steps = in.count("steps", 64);
    const std::size_t paths = in.count("paths", 20000);
    const double cap = in.number("cap", 0.0);
    in.finish();

    for (double s : scales) require(std::isfinite(s) && s > 0.0, ctx, "scales must be positive");
    require(std::isfinite(horizon) && horizon > 0.0, ctx, "horizon must be positive");
    require(steps >= 1, ctx, "steps must be at least 1");
    require(paths >= 2, ctx, "paths must be at least 2");
    require(cap >= 0.0, ctx, "cap must be nonnegative");
    std::sort(scales.begin(), scales.end());

    CchTheta theta;
    try {
        theta = CchTheta::single(a, b, nu, rho_x, rho_v);
        theta.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(ctx + ": " + e.what());
    }

    PayoffSpec payoff;
    payoff.d = 1;
    payoff.kind = cap > 0.0 ? PayoffKind::CappedCall : PayoffKind::Call;
    payoff.cap = cap;

    const StoppedSweepResult result =
        stopped_domain_sweep(theta, std::span(&x0, 1), std::span(&v0, 1), payoff, strike,
                             GridSpec{horizon, steps}, scales, paths, cfg.master_seed);

    CsvBuilder csv(cfg, "kind,scale,x_lo,x_hi,v_lo,v_hi,price,se");
    for (const StoppedSweepPoint& p : result.points) {
        csv.begin_row();
        csv.word("stopped");
        csv.num(p.scale);
        csv.num(p.box.x_range.lo);
        csv.num(p.box.x_range.hi);
        csv.num(p.box.v_range.lo);
        csv.num(p.box.v_range.hi);
        csv.num(p.price.estimate);
        csv.num(p.price.se);
        csv.end_row();
    }
    csv.begin_row();
    csv.word("unstopped");
    csv.num(0.0);
    csv.num(0.0);
    csv.num(0.0);
    csv.num(0.0);
    csv.num(0.0);
    csv.num(result.unstopped.estimate);
    csv.num(result.unstopped.se);
    csv.end_row();

    CheckList checks;
    const PriceResult& un = result.unstopped;
    if (!result.points.empty()) {
        const PriceResult& widest = result.points.back().price;
        const double gap = std::abs(widest.estimate - un.estimate);
        const double slack = 2.0 * std::sqrt(widest.se * widest.se + un.se * un.se);
        checks.check(gap <= slack, "widest box within 2 se of the unstopped price (gap " +
                                       fmt6(gap) + ", slack " + fmt6(slack) + ")");
    }
    if (result.points.size() >= 2) {
        bool monotone = true;
        for (std::size_t i = 0; i + 1 < result.points.size(); ++i) {
            const PriceResult& here = result.points[i].price;
            const PriceResult& next = result.points[i + 1].price;
            const double gap_here = std::abs(here.estimate - un.estimate);
            const double gap_next = std::abs(next.estimate - un.estimate);
            const double slack = 2.0 * std::sqrt(here.se * here.se + next.se * next.se);
            if (!(gap_next <= gap_here + slack)) monotone = false;
        }
        checks.check(monotone, "gap to the unstopped price shrinks monotonically (2 se slack)");
    }
    checks.note("row count " + std::to_string(result.points.size() + 1));

    std::vector<CommandFile> files;
    files.push_back({"stopped_sweep.csv", csv.take()});
    return finish_command(checks, std::move(files));
}

const std::set<std::string>& known_commands() {
    static const std::set<std::string> cmds = {
        "converge-hybrid", "converge-em",      "realize-check", "size-sweep",
        "train",           "price",            "truncation-sweep", "stopped-sweep",
    };
    return cmds;
}

}  // namespace

double BoundConstants::zeta4() {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    return pi2 * pi2 / 90.0;
}

double BoundConstants::moment_coefficient() { return (3.0 / 16.0) * zeta4(); }

double BoundConstants::stop_level(double horizon, double envelope, double target_eps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw std::invalid_argument("stop_level: horizon must be positive");
    if (!(envelope > 0.0) || !std::isfinite(envelope))
        throw std::invalid_argument("stop_level: envelope must be positive");
    if (!(target_eps > 0.0) || !std::isfinite(target_eps))
        throw std::invalid_argument("stop_level: target_eps must be positive");
    const double arg = 16.0 * envelope * envelope / std::pow(target_eps, 4.0);
    if (!(arg > 1.0))
        throw std::invalid_argument("stop_level: 16 c^2 / e^4 must exceed 1");
    return std::sqrt(4.0 * horizon * std::log(arg));
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    const auto cmd_it = doc.find("command");
    if (cmd_it == doc.end()) throw ConfigError("config: missing 'command'");
    if (!cmd_it->is_string()) throw ConfigError("config: 'command' must be a string");

    ExperimentConfig cfg;
    cfg.command = cmd_it->get<std::string>();
    if (!known_commands().count(cfg.command))
        throw ConfigError("config: unknown command '" + cfg.command + "'");

    const auto seed_it = doc.find("seed");
    if (seed_it != doc.end()) {
        if (!seed_it->is_number_unsigned())
            throw ConfigError("config: 'seed' must be a nonnegative integer");
        cfg.master_seed = seed_it->get<std::uint64_t>();
    }

    cfg.canonical = doc.dump();
    cfg.hash = fnv1a(cfg.canonical);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ConfigError("config: cannot read '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    return parse_experiment_config(text);
}

CommandResult run_experiment(const ExperimentConfig& cfg) {
    const json doc = json::parse(cfg.canonical);
    ConfigReader in(doc, cfg.command);
    in.claim("command");
    in.claim("seed");

    if (cfg.command == "converge-hybrid") return cmd_converge_hybrid(cfg, in);
    if (cfg.command == "converge-em") return cmd_converge_em(cfg, in);
    if (cfg.command == "realize-check") return cmd_realize_check(cfg, in);
    if (cfg.command == "size-sweep") return cmd_size_sweep(cfg, in);
    if (cfg.command == "train") return cmd_train(cfg, in);
    if (cfg.command == "price") return cmd_price(cfg, in);
    if (cfg.command == "truncation-sweep") return cmd_truncation_sweep(cfg, in);
    if (cfg.command == "stopped-sweep") return cmd_stopped_sweep(cfg, in);
    throw ConfigError("config: unknown command '" + cfg.command + "'");
}

void write_command_files(const CommandResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (const CommandFile& file : result.files) {
        const fs::path target = fs::path(out_dir) / file.name;
        std::ofstream out(target, std::ios::binary);
        if (!out) throw std::runtime_error("write_command_files: cannot open " + target.string());
        out.write(file.content.data(),
                  static_cast<std::streamsize>(file.content.size()));
        if (!out) throw std::runtime_error("write_command_files: short write to " + target.string());
    }
}

}  // namespace svnet
