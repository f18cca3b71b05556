#include "svnet/approx_blocks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"
#include "svnet/rng.hpp"

namespace svnet {

namespace {

// share of the target handed to the stage ledger; the rest absorbs the
// bound-inflation cross terms a first-order ledger does not see
constexpr double kBudgetShare = 0.9;

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> xs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        xs[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    xs.front() = lo;
    xs.back() = hi;
    return xs;
}

struct AuditResult {
    double sup_err = 0.0;
    std::vector<double> axis_lips;
};

// Evaluates the (scalar-output) network on the full product grid once, then
// reads off the sup deviation and per-axis difference-quotient maxima.
AuditResult audit_scan(const ReluNetwork& net,
                       const std::function<double(const std::vector<double>&)>& reference,
                       const std::vector<Interval>& domain, const std::vector<int>& pts) {
    const int n = static_cast<int>(domain.size());
    if (net.input_dim() != n || net.output_dim() != 1)
        throw std::invalid_argument("audit_scan: network shape does not match domain");
    std::vector<std::vector<double>> axes;
    long long total = 1;
    for (int i = 0; i < n; ++i) {
        axes.push_back(linspace(domain[i].lo, domain[i].hi, pts[i]));
        total *= pts[i];
    }

    std::vector<double> values(static_cast<std::size_t>(total));
    std::vector<double> x(n), a, b, out;
    AuditResult res;
    res.axis_lips.assign(n, 0.0);
    for (long long idx = 0; idx < total; ++idx) {
        long long rem = idx;
        for (int i = 0; i < n; ++i) {
            x[i] = axes[i][static_cast<std::size_t>(rem % pts[i])];
            rem /= pts[i];
        }
        net.evaluate_into(x.data(), a, b, out);
        values[static_cast<std::size_t>(idx)] = out[0];
        res.sup_err = std::max(res.sup_err, std::abs(out[0] - reference(x)));
    }

    // neighbours along axis i differ by stride = product of earlier pts
    long long stride = 1;
    for (int i = 0; i < n; ++i) {
        const double step = (domain[i].hi - domain[i].lo) / (pts[i] - 1);
        if (step > 0.0) {
            for (long long idx = 0; idx < total; ++idx) {
                const long long pos = (idx / stride) % pts[i];
                if (pos + 1 < pts[i]) {
                    const double diff =
                        std::abs(values[static_cast<std::size_t>(idx + stride)] -
                                 values[static_cast<std::size_t>(idx)]);
                    res.axis_lips[i] = std::max(res.axis_lips[i], diff / step);
                }
            }
        }
        stride *= pts[i];
    }
    return res;
}

std::vector<int> iota_map(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
}

// mult.net expects the pair (f(x), g(x)); pad to a common depth and feed both
// from the shared input vector
ReluNetwork join_mult(const ReluNetwork& mult, const ReluNetwork& f, const ReluNetwork& g,
                      int in_dim) {
    const int depth = std::max(f.affine_count(), g.affine_count()) + 1;
    const ReluNetwork fp = pad_to_depth(f, depth);
    const ReluNetwork gp = pad_to_depth(g, depth);
    const std::vector<int> io = iota_map(in_dim);
    return compose(mult, parallelize_shared({fp, gp}, {io, io}, in_dim));
}

void require_eps(double eps, const char* who) {
    if (!(eps > 0.0 && eps < 0.5))
        throw std::invalid_argument(std::string(who) + ": eps must lie in (0, 1/2)");
}

} // namespace

// ============================================================================
// records
// ============================================================================

double ErrorBudget::total() const {
    double t = 0.0;
    for (const auto& s : stages) t += s.eps * s.downstream_lip;
    return t;
}

ErrorBudget ErrorBudget::equal_split(const std::vector<std::pair<std::string, double>>& stage_lips,
                                     double target) {
    ErrorBudget b;
    const double n = static_cast<double>(stage_lips.size());
    for (const auto& [name, lip] : stage_lips) {
        if (!(lip > 0.0))
            throw std::invalid_argument("ErrorBudget::equal_split: nonpositive Lipschitz bound");
        b.stages.push_back({name, target / (n * lip), lip});
    }
    return b;
}

std::string approx_spec_to_json(const ApproxSpec& spec) {
    nlohmann::json j;
    j["target_eps"] = spec.target_eps;
    j["measured_sup_error"] = spec.measured_sup_error;
    j["grid_cells"] = spec.grid_cells;
    j["audit_points"] = spec.audit_points;
    return j.dump();
}

double audit_sup_error(const ReluNetwork& net,
                       const std::function<double(const std::vector<double>&)>& reference,
                       const std::vector<Interval>& domain, const std::vector<int>& points_per_axis) {
    return audit_scan(net, reference, domain, points_per_axis).sup_err;
}

// ============================================================================
// piecewise-linear 1-d approximation
// ============================================================================

CertifiedNet pl_approx_1d(const std::function<double(double)>& f, Interval dom, double eps,
                          int initial_cells, int max_cells) {
    require_eps(eps, "pl_approx_1d");
    if (!(dom.lo < dom.hi)) throw std::invalid_argument("pl_approx_1d: empty interval");

    for (int m = std::max(1, initial_cells); m <= max_cells; m *= 2) {
        const std::vector<double> knots = linspace(dom.lo, dom.hi, m + 1);
        std::vector<double> vals(knots.size());
        for (std::size_t i = 0; i < knots.size(); ++i) {
            vals[i] = f(knots[i]);
            if (!std::isfinite(vals[i]))
                throw std::domain_error("pl_approx_1d: non-finite sample at grid knot");
        }
        const double dx = (dom.hi - dom.lo) / m;
        std::vector<double> slopes(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i)
            slopes[static_cast<std::size_t>(i)] =
                (vals[static_cast<std::size_t>(i + 1)] - vals[static_cast<std::size_t>(i)]) / dx;

        // f(x_0) + s_0 (x-x_0)^+ + sum_i (s_i - s_{i-1}) (x-x_i)^+, with hinges
        // whose output weight is exactly zero pruned away
        std::vector<std::pair<int, double>> hinges; // (knot index, output weight)
        for (int i = 0; i < m; ++i) {
            const double c = i == 0 ? slopes[0]
                                    : slopes[static_cast<std::size_t>(i)] -
                                          slopes[static_cast<std::size_t>(i - 1)];
            if (c != 0.0) hinges.emplace_back(i, c);
        }
        if (hinges.empty()) hinges.emplace_back(0, 0.0); // constant f: keep one dead unit

        AffineLayer hidden = AffineLayer::zero(static_cast<int>(hinges.size()), 1);
        AffineLayer output = AffineLayer::zero(1, static_cast<int>(hinges.size()));
        for (std::size_t u = 0; u < hinges.size(); ++u) {
            hidden.set(static_cast<int>(u), 0, 1.0);
            hidden.bias[u] = -knots[static_cast<std::size_t>(hinges[u].first)];
            output.set(0, static_cast<int>(u), hinges[u].second);
        }
        output.bias[0] = vals[0];
        ReluNetwork net({std::move(hidden), std::move(output)});

        const auto ref = [&](const std::vector<double>& x) { return f(x[0]); };
        const AuditResult audit = audit_scan(net, ref, {dom}, {10 * m + 1});
        if (audit.sup_err <= eps) {
            double lip = 0.0;
            for (double s : slopes) lip = std::max(lip, std::abs(s));
            CertifiedNet cert;
            cert.net = std::move(net);
            cert.spec = {eps, {dom}, audit.sup_err, lip, m, 10 * m + 1};
            cert.budget.stages.push_back({"pl interpolation", audit.sup_err, 1.0});
            return cert;
        }
    }
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "pl_approx_1d: not certified at eps=%g within %d cells on [%g, %g]", eps,
                  max_cells, dom.lo, dom.hi);
    throw std::runtime_error(msg);
}

// ============================================================================
// bounded multiplication
// ============================================================================

namespace {

// Sawtooth squaring on one scalar: z |-> c^2 S_m(|z|/c) with
// S_m(u) = u - sum_{s<=m} g_s(u) / 4^s, realized with three units per level
// carrying (g_s, (g_s - 1/2)^+, running value). Interpolation error of the
// final level is c^2 2^{-2m-2} on |z| <= c.
ReluNetwork square_branch(double c, int m) {
    std::vector<AffineLayer> layers;

    AffineLayer split = AffineLayer::zero(2, 1);
    split.set(0, 0, 1.0 / c);
    split.set(1, 0, -1.0 / c);
    layers.push_back(std::move(split));

    AffineLayer first = AffineLayer::zero(3, 2); // u = z^+/c + (-z)^+/c = |z|/c
    for (int r = 0; r < 3; ++r) {
        first.set(r, 0, 1.0);
        first.set(r, 1, 1.0);
    }
    first.bias[1] = -0.5;
    layers.push_back(std::move(first));

    for (int s = 1; s <= m; ++s) {
        const double p4 = std::ldexp(1.0, 2 * s); // 4^s, exact
        AffineLayer level = AffineLayer::zero(3, 3);
        level.set(0, 0, 2.0);
        level.set(0, 1, -4.0); // g_s = 2 g_{s-1} - 4 (g_{s-1} - 1/2)^+
        level.set(1, 0, 2.0);
        level.set(1, 1, -4.0);
        level.bias[1] = -0.5;
        level.set(2, 0, -2.0 / p4); // acc_s = acc_{s-1} - g_s / 4^s
        level.set(2, 1, 4.0 / p4);
        level.set(2, 2, 1.0);
        layers.push_back(std::move(level));
    }

    AffineLayer out = AffineLayer::zero(1, 3);
    out.set(0, 2, c * c);
    layers.push_back(std::move(out));
    return ReluNetwork(std::move(layers));
}

} // namespace

CertifiedNet mult_net(double bound, double eps) {
    require_eps(eps, "mult_net");
    if (!(bound >= 1.0)) throw std::invalid_argument("mult_net: bound must be >= 1");

    // |net - ab| <= (3/2) c^2 2^{-2m-2} with c = 2*bound
    const double c = 2.0 * bound;
    int m = 0;
    while (1.5 * c * c * std::ldexp(1.0, -2 * m - 2) > eps) ++m;

    const ReluNetwork sq = square_branch(c, m);
    const ReluNetwork br_sum = precompose_affine(sq, AffineLayer::from_dense({{1.0, 1.0}}, {0.0}));
    const ReluNetwork br_a = precompose_affine(sq, AffineLayer::from_dense({{1.0, 0.0}}, {0.0}));
    const ReluNetwork br_b = precompose_affine(sq, AffineLayer::from_dense({{0.0, 1.0}}, {0.0}));
    ReluNetwork net = weighted_sum({br_sum, br_a, br_b}, {0.5, -0.5, -0.5});

    const auto ref = [](const std::vector<double>& x) { return x[0] * x[1]; };
    const std::vector<Interval> dom = {{-bound, bound}, {-bound, bound}};
    const AuditResult audit = audit_scan(net, ref, dom, {41, 41});
    if (audit.sup_err > eps) throw std::runtime_error("mult_net: certification failed");

    CertifiedNet cert;
    cert.net = std::move(net);
    cert.spec = {eps, dom, audit.sup_err,
                 std::max(audit.axis_lips[0], audit.axis_lips[1]), m, 41LL * 41LL};
    const double sq_err = c * c * std::ldexp(1.0, -2 * m - 2);
    cert.budget.stages = {{"square of sum", sq_err, 0.5},
                          {"square of first factor", sq_err, 0.5},
                          {"square of second factor", sq_err, 0.5}};
    return cert;
}

CertifiedNet mult3_net(double bound, double eps) {
    require_eps(eps, "mult3_net");
    if (!(bound >= 1.0)) throw std::invalid_argument("mult3_net: bound must be >= 1");

    const double inner_eps = eps / (2.0 * bound);
    CertifiedNet inner = mult_net(bound, inner_eps);
    const double pair_bound = std::max(bound, bound * bound + inner_eps);
    CertifiedNet outer = mult_net(pair_bound, eps / 2.0);

    // (a,b,c) -> (ab, c) -> abc; the c rail is an exact identity
    const ReluNetwork rail = identity_net(1, inner.net.affine_count() + 1);
    const ReluNetwork pair = parallelize_shared({inner.net, rail}, {{0, 1}, {2}}, 3);
    ReluNetwork net = compose(outer.net, pair);

    const auto ref = [](const std::vector<double>& x) { return x[0] * x[1] * x[2]; };
    const std::vector<Interval> dom = {{-bound, bound}, {-bound, bound}, {-bound, bound}};
    const AuditResult audit = audit_scan(net, ref, dom, {21, 21, 21});
    if (audit.sup_err > eps) throw std::runtime_error("mult3_net: certification failed");

    CertifiedNet cert;
    cert.net = std::move(net);
    cert.spec = {eps, dom, audit.sup_err,
                 *std::max_element(audit.axis_lips.begin(), audit.axis_lips.end()),
                 inner.spec.grid_cells + outer.spec.grid_cells, 21LL * 21LL * 21LL};
    cert.budget.stages = {{"inner product", inner_eps, bound}, {"outer product", eps / 2.0, 1.0}};
    return cert;
}

// ============================================================================
// CCH factor functions
// ============================================================================

int cch_factor_arity(FactorFunctionId id) {
    switch (id) {
        case FactorFunctionId::spot_vol_common:
        case FactorFunctionId::spot_vol_idio:
        case FactorFunctionId::mean_reversion_drift:
        case FactorFunctionId::vol_vol_idio: return 3;
        case FactorFunctionId::vol_vol_common:
        case FactorFunctionId::vol_vol_asset_idio: return 4;
        case FactorFunctionId::sqrt_level:
        case FactorFunctionId::orth_complement: return 1;
        case FactorFunctionId::exp_variance: return 3;
        case FactorFunctionId::product2: return 2;
        case FactorFunctionId::product3: return 3;
    }
    throw std::invalid_argument("cch_factor_arity: unknown id");
}

double cch_factor_value(FactorFunctionId id, const std::vector<double>& args) {
    if (static_cast<int>(args.size()) != cch_factor_arity(id))
        throw std::invalid_argument("cch_factor_value: wrong arity");
    const auto comp = [](double rho) { return std::sqrt(std::max(0.0, 1.0 - rho * rho)); };
    switch (id) {
        case FactorFunctionId::spot_vol_common: return args[0] * std::sqrt(args[1]) * args[2];
        case FactorFunctionId::spot_vol_idio: return args[0] * std::sqrt(args[1]) * comp(args[2]);
        case FactorFunctionId::mean_reversion_drift: return args[1] * (args[2] - args[0]);
        case FactorFunctionId::vol_vol_common:
            return std::sqrt(args[0]) * args[1] * args[2] * args[3];
        case FactorFunctionId::vol_vol_asset_idio:
            return std::sqrt(args[0]) * args[1] * comp(args[2]) * args[3];
        case FactorFunctionId::vol_vol_idio: return std::sqrt(args[0]) * args[1] * comp(args[2]);
        case FactorFunctionId::sqrt_level: return std::sqrt(args[0]);
        case FactorFunctionId::orth_complement: return comp(args[0]);
        case FactorFunctionId::product2: return args[0] * args[1];
        case FactorFunctionId::product3: return args[0] * args[1] * args[2];
        case FactorFunctionId::exp_variance: break;
    }
    throw std::invalid_argument("cch_factor_value: id has no closed form without extra data");
}

namespace {

// One multiplicand in a product chain: an affine functional of the natural
// arguments, optionally followed by a 1-d PL approximator.
struct ChainTerm {
    std::string name;
    std::vector<std::pair<int, double>> row;
    double bias = 0.0;
    std::function<double(double)> pl;  // empty => raw affine term (exact)
    Interval pl_dom;
};

double affine_bound(const ChainTerm& t, const std::vector<Interval>& box) {
    double center = t.bias, radius = 0.0;
    for (const auto& [i, w] : t.row) {
        center += w * 0.5 * (box[static_cast<std::size_t>(i)].lo + box[static_cast<std::size_t>(i)].hi);
        radius += std::abs(w) * 0.5 * box[static_cast<std::size_t>(i)].length();
    }
    return std::abs(center) + radius;
}

double sampled_sup(const std::function<double(double)>& f, Interval dom) {
    double m = 0.0;
    for (double x : linspace(dom.lo, dom.hi, 257)) m = std::max(m, std::abs(f(x)));
    return m;
}

struct ChainResult {
    ReluNetwork net;
    double bound = 0.0;
    ErrorBudget budget;
    std::int64_t pl_cells = 0;
};

// Builds the product of the terms over a shared input box, splitting eps
// equally across PL and multiplication stages after scaling each stage by the
// product of the bounds of everything multiplied in later.
ChainResult build_product_chain(const std::vector<ChainTerm>& terms,
                                const std::vector<Interval>& box, double eps) {
    const int n = static_cast<int>(box.size());
    const int k = static_cast<int>(terms.size());

    std::vector<double> bounds(terms.size());
    for (int i = 0; i < k; ++i) {
        const auto& t = terms[static_cast<std::size_t>(i)];
        bounds[static_cast<std::size_t>(i)] =
            t.pl ? sampled_sup(t.pl, t.pl_dom) : affine_bound(t, box);
    }
    const auto later = [&](int i) {
        double p = 1.0;
        for (int j = i + 1; j < k; ++j) p *= std::max(bounds[static_cast<std::size_t>(j)], 1e-12);
        return p;
    };
    const auto others = [&](int i) {
        double p = 1.0;
        for (int j = 0; j < k; ++j)
            if (j != i) p *= std::max(bounds[static_cast<std::size_t>(j)], 1e-12);
        return p;
    };

    // a term's error is scaled by every other factor in the product; a
    // multiplication stage's error only by the factors joined after it
    std::vector<std::pair<std::string, double>> stage_lips;
    for (int i = 0; i < k; ++i)
        if (terms[static_cast<std::size_t>(i)].pl)
            stage_lips.emplace_back(terms[static_cast<std::size_t>(i)].name + " pl", others(i));
    for (int i = 1; i < k; ++i)
        stage_lips.emplace_back("product " + std::to_string(i), later(i));
    ErrorBudget budget = ErrorBudget::equal_split(stage_lips, kBudgetShare * eps);

    // construct term networks at their stage epsilons
    ChainResult res;
    std::size_t stage = 0;
    std::vector<ReluNetwork> term_nets;
    std::vector<double> mult_eps(terms.size(), 0.0);
    for (int i = 0; i < k; ++i) {
        const auto& t = terms[static_cast<std::size_t>(i)];
        AffineLayer row = AffineLayer::zero(1, n);
        for (const auto& [c, w] : t.row) row.set(0, c, w);
        row.bias[0] = t.bias;
        if (t.pl) {
            const double e = budget.stages[stage++].eps;
            CertifiedNet cert = pl_approx_1d(t.pl, t.pl_dom, e);
            res.pl_cells += cert.spec.grid_cells;
            bounds[static_cast<std::size_t>(i)] += e; // inflate for chained products
            term_nets.push_back(precompose_affine(cert.net, row));
        } else {
            std::vector<AffineLayer> single;
            single.push_back(std::move(row));
            term_nets.push_back(ReluNetwork(std::move(single)));
        }
    }
    for (int i = 1; i < k; ++i) mult_eps[static_cast<std::size_t>(i)] = budget.stages[stage++].eps;

    ReluNetwork cur = std::move(term_nets.front());
    double cur_bound = bounds[0];
    for (int i = 1; i < k; ++i) {
        const double mb = std::max({1.0, cur_bound, bounds[static_cast<std::size_t>(i)]});
        CertifiedNet mult = mult_net(mb, mult_eps[static_cast<std::size_t>(i)]);
        cur = join_mult(mult.net, cur, term_nets[static_cast<std::size_t>(i)], n);
        cur_bound = cur_bound * bounds[static_cast<std::size_t>(i)] +
                    mult_eps[static_cast<std::size_t>(i)];
    }

    if (budget.total() > eps)
        throw std::runtime_error("build_product_chain: error-budget ledger exceeds target");
    res.net = std::move(cur);
    res.bound = cur_bound;
    res.budget = std::move(budget);
    return res;
}

struct FactorPlan {
    std::vector<Interval> box;
    std::vector<ChainTerm> terms;
};

FactorPlan factor_plan(FactorFunctionId id, const CchBoxes& b) {
    const auto raw = [](std::string name, int coord) {
        ChainTerm t;
        t.name = std::move(name);
        t.row = {{coord, 1.0}};
        return t;
    };
    const auto pl = [](std::string name, int coord, std::function<double(double)> f, Interval dom) {
        ChainTerm t;
        t.name = std::move(name);
        t.row = {{coord, 1.0}};
        t.pl = std::move(f);
        t.pl_dom = dom;
        return t;
    };
    const auto sqrt_f = [](double v) { return std::sqrt(v); };
    const auto comp_f = [](double r) { return std::sqrt(std::max(0.0, 1.0 - r * r)); };

    switch (id) {
        case FactorFunctionId::spot_vol_common:
            return {{b.x, b.v, b.rho_x},
                    {raw("spot", 0), pl("sqrt variance", 1, sqrt_f, b.v), raw("common corr", 2)}};
        case FactorFunctionId::spot_vol_idio:
            return {{b.x, b.v, b.rho_x},
                    {raw("spot", 0), pl("sqrt variance", 1, sqrt_f, b.v),
                     pl("orth complement", 2, comp_f, b.rho_x)}};
        case FactorFunctionId::mean_reversion_drift: {
            ChainTerm gap; // b - v, exact affine
            gap.name = "level gap";
            gap.row = {{0, -1.0}, {2, 1.0}};
            return {{b.v, b.a, b.b}, {raw("reversion speed", 1), gap}};
        }
        case FactorFunctionId::vol_vol_common:
            return {{b.v, b.nu, b.rho_x, b.rho_v},
                    {pl("sqrt variance", 0, sqrt_f, b.v), raw("vol of vol", 1),
                     raw("common corr", 2), raw("variance corr", 3)}};
        case FactorFunctionId::vol_vol_asset_idio:
            return {{b.v, b.nu, b.rho_x, b.rho_v},
                    {pl("sqrt variance", 0, sqrt_f, b.v), raw("vol of vol", 1),
                     pl("orth complement", 2, comp_f, b.rho_x), raw("variance corr", 3)}};
        case FactorFunctionId::vol_vol_idio:
            return {{b.v, b.nu, b.rho_v},
                    {pl("sqrt variance", 0, sqrt_f, b.v), raw("vol of vol", 1),
                     pl("orth complement", 2, comp_f, b.rho_v)}};
        default:
            throw std::invalid_argument("cch_factor_net: id is not one of the six factors");
    }
}

} // namespace

CertifiedNet cch_factor_net(FactorFunctionId id, double eps, const CchBoxes& boxes) {
    require_eps(eps, "cch_factor_net");
    FactorPlan plan = factor_plan(id, boxes);
    ChainResult chain = build_product_chain(plan.terms, plan.box, eps);

    const auto ref = [&](const std::vector<double>& x) { return cch_factor_value(id, x); };
    const std::vector<int> pts(plan.box.size(), plan.box.size() == 3 ? 17 : 11);
    const AuditResult audit = audit_scan(chain.net, ref, plan.box, pts);
    if (audit.sup_err > eps) throw std::runtime_error("cch_factor_net: certification failed");

    long long npts = 1;
    for (int p : pts) npts *= p;
    CertifiedNet cert;
    cert.net = std::move(chain.net);
    cert.spec = {eps, plan.box, audit.sup_err,
                 *std::max_element(audit.axis_lips.begin(), audit.axis_lips.end()),
                 chain.pl_cells, npts};
    cert.budget = std::move(chain.budget);
    return cert;
}

// ============================================================================
// assembled coefficient networks
// ============================================================================

int cch_sigma_input_dim(int d) { return 7 * d; }
int cch_drift_input_dim(int d) { return 6 * d; }
int cch_theta_offset(int d, int asset, int slot, bool with_x) {
    return (with_x ? 2 * d : d) + 5 * asset + slot;
}

namespace {

AffineLayer embed_row(int d, int row) {
    AffineLayer e = AffineLayer::zero(d, 1);
    e.set(row, 0, 1.0);
    return e;
}

} // namespace

CchCoefficientNets cch_coefficient_nets(int d, double eps, const CchBoxes& boxes) {
    require_eps(eps, "cch_coefficient_nets");
    if (d < 1) throw std::invalid_argument("cch_coefficient_nets: d must be >= 1");

    const CertifiedNet f_sv_common = cch_factor_net(FactorFunctionId::spot_vol_common, eps, boxes);
    const CertifiedNet f_sv_idio = cch_factor_net(FactorFunctionId::spot_vol_idio, eps, boxes);
    const CertifiedNet f_drift = cch_factor_net(FactorFunctionId::mean_reversion_drift, eps, boxes);
    const CertifiedNet f_vv_common = cch_factor_net(FactorFunctionId::vol_vol_common, eps, boxes);
    const CertifiedNet f_vv_asset = cch_factor_net(FactorFunctionId::vol_vol_asset_idio, eps, boxes);
    const CertifiedNet f_vv_idio = cch_factor_net(FactorFunctionId::vol_vol_idio, eps, boxes);

    const int nx = cch_sigma_input_dim(d);
    const int nv = cch_drift_input_dim(d);
    const auto th_x = [&](int i, int slot) { return cch_theta_offset(d, i, slot, true); };
    const auto th_v = [&](int i, int slot) { return cch_theta_offset(d, i, slot, false); };

    CchCoefficientNets out;
    out.d = d;
    out.eps = eps;
    out.boxes = boxes;

    // spot diffusion columns: common, per-asset, then the structurally-zero
    // block for the variance drivers
    {
        std::vector<ReluNetwork> members(static_cast<std::size_t>(d), f_sv_common.net);
        std::vector<std::vector<int>> maps;
        for (int i = 0; i < d; ++i) maps.push_back({i, d + i, th_x(i, 3)});
        out.sigma.push_back(parallelize_shared(members, maps, nx));
    }
    for (int i = 0; i < d; ++i) {
        const ReluNetwork one =
            parallelize_shared({f_sv_idio.net}, {{i, d + i, th_x(i, 3)}}, nx);
        out.sigma.push_back(postcompose_affine(embed_row(d, i), one));
    }
    for (int i = 0; i < d; ++i) out.sigma.push_back(zero_net(nx, d));

    {
        std::vector<ReluNetwork> members(static_cast<std::size_t>(d), f_drift.net);
        std::vector<std::vector<int>> maps;
        for (int i = 0; i < d; ++i) maps.push_back({i, th_v(i, 0), th_v(i, 1)});
        out.mu_bar = parallelize_shared(members, maps, nv);
    }

    {
        std::vector<ReluNetwork> members(static_cast<std::size_t>(d), f_vv_common.net);
        std::vector<std::vector<int>> maps;
        for (int i = 0; i < d; ++i) maps.push_back({i, th_v(i, 2), th_v(i, 3), th_v(i, 4)});
        out.sigma_bar.push_back(parallelize_shared(members, maps, nv));
    }
    for (int i = 0; i < d; ++i) {
        const ReluNetwork one =
            parallelize_shared({f_vv_asset.net}, {{i, th_v(i, 2), th_v(i, 3), th_v(i, 4)}}, nv);
        out.sigma_bar.push_back(postcompose_affine(embed_row(d, i), one));
    }
    for (int i = 0; i < d; ++i) {
        const ReluNetwork one =
            parallelize_shared({f_vv_idio.net}, {{i, th_v(i, 2), th_v(i, 4)}}, nv);
        out.sigma_bar.push_back(postcompose_affine(embed_row(d, i), one));
    }

    for (const auto& n : out.sigma) out.total_size += metrics(n).size;
    out.total_size += metrics(out.mu_bar).size;
    for (const auto& n : out.sigma_bar) out.total_size += metrics(n).size;

    // entrywise certification against the factor functions on random box points
    RngStream rng = RngKey::from_seed(0x5EEDCAFEULL).stream(0);
    const auto draw = [&](Interval iv) { return iv.lo + (iv.hi - iv.lo) * rng.uniform(); };
    double sup = 0.0;
    for (int trial = 0; trial < 160; ++trial) {
        std::vector<double> xin(static_cast<std::size_t>(nx)), vin(static_cast<std::size_t>(nv));
        std::vector<double> x(d), v(d), a(d), bb(d), nu(d), rx(d), rv(d);
        for (int i = 0; i < d; ++i) {
            x[i] = draw(boxes.x);
            v[i] = draw(boxes.v);
            a[i] = draw(boxes.a);
            bb[i] = draw(boxes.b);
            nu[i] = draw(boxes.nu);
            rx[i] = draw(boxes.rho_x);
            rv[i] = draw(boxes.rho_v);
            xin[i] = x[i];
            xin[d + i] = v[i];
            vin[i] = v[i];
            for (int s = 0; s < 5; ++s) {
                const double val = s == 0 ? a[i] : s == 1 ? bb[i] : s == 2 ? nu[i] : s == 3 ? rx[i] : rv[i];
                xin[static_cast<std::size_t>(th_x(i, s))] = val;
                vin[static_cast<std::size_t>(th_v(i, s))] = val;
            }
        }
        const auto entry_err = [&sup](double got, double want) {
            sup = std::max(sup, std::abs(got - want));
        };
        for (int j = 0; j <= 2 * d; ++j) {
            const std::vector<double> col = out.sigma[static_cast<std::size_t>(j)].evaluate(xin);
            for (int i = 0; i < d; ++i) {
                double want = 0.0;
                if (j == 0)
                    want = cch_factor_value(FactorFunctionId::spot_vol_common, {x[i], v[i], rx[i]});
                else if (j == 1 + i)
                    want = cch_factor_value(FactorFunctionId::spot_vol_idio, {x[i], v[i], rx[i]});
                entry_err(col[i], want);
            }
        }
        const std::vector<double> drift = out.mu_bar.evaluate(vin);
        for (int i = 0; i < d; ++i)
            entry_err(drift[i],
                      cch_factor_value(FactorFunctionId::mean_reversion_drift, {v[i], a[i], bb[i]}));
        for (int j = 0; j <= 2 * d; ++j) {
            const std::vector<double> col = out.sigma_bar[static_cast<std::size_t>(j)].evaluate(vin);
            for (int i = 0; i < d; ++i) {
                double want = 0.0;
                if (j == 0)
                    want = cch_factor_value(FactorFunctionId::vol_vol_common,
                                            {v[i], nu[i], rx[i], rv[i]});
                else if (j == 1 + i)
                    want = cch_factor_value(FactorFunctionId::vol_vol_asset_idio,
                                            {v[i], nu[i], rx[i], rv[i]});
                else if (j == 1 + d + i)
                    want = cch_factor_value(FactorFunctionId::vol_vol_idio, {v[i], nu[i], rv[i]});
                entry_err(col[i], want);
            }
        }
    }
    out.measured_sup_error = sup;
    if (sup > eps) throw std::runtime_error("cch_coefficient_nets: certification failed");
    return out;
}

// ============================================================================
// banded exponential variance factor
// ============================================================================

double exp_var_reference(double t, const ExpVarBoxes& boxes, double hurst, double eta, double z) {
    const double u = std::sqrt(hurst / 2.0) * eta * z -
                     0.25 * eta * eta * std::pow(t, 2.0 * hurst);
    return std::exp(std::clamp(u, boxes.u_lo, boxes.u_hi));
}

CertifiedNet exp_var_net(double t, double eps, const ExpVarBoxes& boxes) {
    require_eps(eps, "exp_var_net");
    if (t < 0.0) throw std::invalid_argument("exp_var_net: negative time");
    if (!(boxes.u_lo < boxes.u_hi)) throw std::invalid_argument("exp_var_net: empty clamp band");
    if (!(boxes.eta.lo >= 0.0 && boxes.eta.hi > 0.0))
        throw std::invalid_argument("exp_var_net: eta box must be nonnegative");
    const double z_abs = std::max(std::abs(boxes.z.lo), std::abs(boxes.z.hi));
    if (!(z_abs > 0.0)) throw std::invalid_argument("exp_var_net: degenerate z box");

    const bool has_decay = t > 0.0;
    const double s_bar = std::sqrt(boxes.hurst.hi / 2.0);
    const double eta_abs = boxes.eta.hi;
    const double q_bar = eta_abs * eta_abs;
    const double ct_bar =
        has_decay ? std::pow(t, 2.0 * (t < 1.0 ? boxes.hurst.lo : boxes.hurst.hi)) : 0.0;
    const double l_exp = std::exp(boxes.u_hi);

    std::vector<std::pair<std::string, double>> stage_lips = {
        {"sqrt-hurst pl", eta_abs * z_abs * l_exp},
        {"eta product", z_abs * l_exp},
        {"volterra product", l_exp},
    };
    if (has_decay) {
        stage_lips.emplace_back("eta-square pl", ct_bar * l_exp / 4.0);
        stage_lips.emplace_back("time-decay pl", q_bar * l_exp / 4.0);
        stage_lips.emplace_back("decay product", l_exp / 4.0);
    }
    stage_lips.emplace_back("exp pl", 1.0);
    ErrorBudget budget = ErrorBudget::equal_split(stage_lips, kBudgetShare * eps);
    std::size_t stage = 0;
    const auto next_eps = [&]() { return budget.stages[stage++].eps; };

    const AffineLayer row_h = AffineLayer::from_dense({{1.0, 0.0, 0.0}}, {0.0});
    const AffineLayer row_eta = AffineLayer::from_dense({{0.0, 1.0, 0.0}}, {0.0});
    const AffineLayer row_z = AffineLayer::from_dense({{0.0, 0.0, 1.0}}, {0.0});
    std::int64_t cells = 0;

    // drift-free part: sqrt(H/2) * eta * z
    CertifiedNet sqrt_h =
        pl_approx_1d([](double h) { return std::sqrt(h / 2.0); }, boxes.hurst, next_eps());
    cells += sqrt_h.spec.grid_cells;
    ReluNetwork lin = precompose_affine(sqrt_h.net, row_h);
    {
        const double b1 = std::max({1.0, s_bar + sqrt_h.spec.target_eps, eta_abs});
        CertifiedNet m1 = mult_net(b1, next_eps());
        std::vector<AffineLayer> eta_layers{row_eta};
        lin = join_mult(m1.net, lin, ReluNetwork(std::move(eta_layers)), 3);
        const double lin_bound = s_bar * eta_abs + m1.spec.target_eps + eps;
        const double b2 = std::max({1.0, lin_bound, z_abs});
        CertifiedNet m2 = mult_net(b2, next_eps());
        std::vector<AffineLayer> z_layers{row_z};
        lin = join_mult(m2.net, lin, ReluNetwork(std::move(z_layers)), 3);
    }

    ReluNetwork exponent;
    if (has_decay) {
        // decay part: (eta^2 / 4) * t^{2H}, with the square anchored at zero
        CertifiedNet eta_sq = pl_approx_1d([](double y) { return y * y; },
                                           {std::min(0.0, boxes.eta.lo), boxes.eta.hi}, next_eps());
        cells += eta_sq.spec.grid_cells;
        const double log_t = std::log(t);
        CertifiedNet decay = pl_approx_1d(
            [log_t](double h) { return std::exp(2.0 * h * log_t); }, boxes.hurst, next_eps());
        cells += decay.spec.grid_cells;
        const double b3 = std::max({1.0, q_bar + eta_sq.spec.target_eps,
                                    ct_bar + decay.spec.target_eps});
        CertifiedNet m3 = mult_net(b3, next_eps());
        ReluNetwork prod = join_mult(m3.net, precompose_affine(eta_sq.net, row_eta),
                                     precompose_affine(decay.net, row_h), 3);

        const int depth = std::max(lin.affine_count(), prod.affine_count()) + 1;
        exponent = weighted_sum({pad_to_depth(lin, depth), pad_to_depth(prod, depth)},
                                {1.0, -0.25});
    } else {
        exponent = std::move(lin);
    }

    ReluNetwork banded =
        compose(max_net(boxes.u_lo), compose(min_net(boxes.u_hi), exponent));
    CertifiedNet exp_pl =
        pl_approx_1d([](double u) { return std::exp(u); }, {boxes.u_lo, boxes.u_hi}, next_eps());
    cells += exp_pl.spec.grid_cells;
    ReluNetwork net = compose(exp_pl.net, banded);

    const auto ref = [&](const std::vector<double>& x) {
        return exp_var_reference(t, boxes, x[0], x[1], x[2]);
    };
    const std::vector<Interval> dom = {boxes.hurst, boxes.eta, boxes.z};
    const AuditResult audit = audit_scan(net, ref, dom, {13, 13, 13});
    if (audit.sup_err > eps) throw std::runtime_error("exp_var_net: certification failed");

    CertifiedNet cert;
    cert.net = std::move(net);
    cert.spec = {eps, dom, audit.sup_err, audit.axis_lips[2], cells, 13LL * 13LL * 13LL};
    cert.budget = std::move(budget);
    return cert;
}

} // namespace svnet
