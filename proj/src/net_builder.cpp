#include "svnet/net_builder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <utility>

#include "svnet/parallel.hpp"

namespace svnet {

namespace {

void append_g17(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

constexpr int kThetaSlots = 5;  // a, b, nu, rho_x, rho_v per asset

// |x| the spot recursion inputs are allowed to reach; the three-factor
// product block is certified on a radius covering every state reachable from
// here under the frozen increments
constexpr double kSpotCap = 200.0;

int depth_of(const ReluNetwork& net) { return net.affine_count() + 1; }

std::int64_t size_of(const ReluNetwork& net) { return metrics(net).size; }

std::vector<int> index_range(int first, int count) {
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = first + i;
    return idx;
}

AffineLayer coordinate_selector(int first, int count, int in_dim) {
    AffineLayer sel = AffineLayer::zero(count, in_dim);
    for (int i = 0; i < count; ++i) sel.set(i, first + i, 1.0);
    return sel;
}

// One audit row fed from several instances (steps, copies): pass must hold
// for every instance, the reported numbers come from the largest one.
struct RowFold {
    std::string name;
    std::int64_t measured = -1;
    int depth = 0;
    double bound = 0.0;
    bool pass = true;
    bool fed = false;

    void feed(std::int64_t m, int d, double b) {
        fed = true;
        if (static_cast<double>(m) > b) pass = false;
        if (m > measured) {
            measured = m;
            depth = d;
            bound = b;
        }
    }

    void feed(const ReluNetwork& net, double b) {
        const NetMetrics m = metrics(net);
        feed(m.size, m.depth, b);
    }

    SizeAuditRow row() const {
        return {name, fed ? measured : 0, depth, bound, pass && fed};
    }
};

}  // namespace

// ============================================================================
// plan and selection rules
// ============================================================================

void RealizationPlan::validate() const {
    if (copies < 1) throw std::invalid_argument("realization plan: needs at least one copy");
    if (grid.steps < 1) throw std::invalid_argument("realization plan: needs at least one step");
    if (!(grid.horizon > 0.0))
        throw std::invalid_argument("realization plan: horizon must be positive");
    if (!(block_eps > 0.0) || !(block_eps < 0.5))
        throw std::invalid_argument("realization plan: block accuracy must lie in (0, 1/2)");
    if (!(target_eps > 0.0) || !(target_eps < 0.5))
        throw std::invalid_argument("realization plan: target accuracy must lie in (0, 1/2)");
    if (assets < 1) throw std::invalid_argument("realization plan: needs at least one asset");
    if (model == RealizedModel::RoughBergomi) {
        if (assets != 1)
            throw std::invalid_argument("realization plan: the rough model is single-asset");
        if (!(truncation >= 1.0))
            throw std::invalid_argument("realization plan: truncation factor must be >= 1");
        if (!(driver_clamp >= 1.0))
            throw std::invalid_argument("realization plan: driver clamp must be >= 1");
    }
}

SelectionReport report_selections(const RealizationPlan& plan, double c_stand_in,
                                  double dim_power_stand_in, double lip_power,
                                  double hurst_floor) {
    plan.validate();
    if (!(c_stand_in > 0.0))
        throw std::invalid_argument("report_selections: stand-in constant must be positive");
    if (!(hurst_floor > 0.0) || !(hurst_floor < 0.5))
        throw std::invalid_argument("report_selections: hurst floor must lie in (0, 1/2)");

    SelectionReport r;
    r.c_stand_in = c_stand_in;
    r.dim_power_stand_in = dim_power_stand_in;
    r.lip_power = lip_power;
    r.hurst_floor = hurst_floor;

    const double ebar = plan.target_eps;
    if (plan.model == RealizedModel::CrossHeston) {
        const double b = 2.0 * static_cast<double>(plan.assets) + 1.0;
        r.d_bar = b;
        const double amp = c_stand_in * std::pow(b, dim_power_stand_in);
        const double eps = ebar / (4.0 * amp);
        r.suggested_block_eps = eps;
        const double eps_pow = std::pow(eps, -2.0 * lip_power);
        r.suggested_copies = std::ceil(3.0 * eps_pow * amp / (ebar * ebar));
        r.suggested_step = ebar * ebar / (6.0 * amp * eps_pow);
    } else {
        const double eps = ebar * ebar / (4.0 * c_stand_in);
        r.suggested_block_eps = eps;
        const double ebar4 = std::pow(ebar, 4.0);
        r.suggested_copies = std::ceil(16.0 * c_stand_in / ebar4);
        r.suggested_driver_clamp = std::sqrt(
            4.0 * plan.grid.horizon * std::log(16.0 * c_stand_in * c_stand_in / ebar4));
        r.suggested_step = std::pow(eps * ebar * ebar / (4.0 * c_stand_in), 1.0 / hurst_floor);
    }
    return r;
}

// ============================================================================
// size audit
// ============================================================================

bool SizeAudit::all_pass() const {
    for (const SizeAuditRow& r : rows)
        if (!r.pass) return false;
    return true;
}

const SizeAuditRow* SizeAudit::find(std::string_view block) const {
    for (const SizeAuditRow& r : rows)
        if (r.block == block) return &r;
    return nullptr;
}

void write_size_audit_csv(std::ostream& os, const SizeAudit& audit) {
    os << "block,measured_size,bound_value,pass\n";
    for (const SizeAuditRow& r : audit.rows) {
        std::string line = r.block;
        line += ',';
        line += std::to_string(r.measured_size);
        line += ',';
        append_g17(line, r.bound_value);
        line += ',';
        line += r.pass ? '1' : '0';
        line += '\n';
        os << line;
    }
}

// ============================================================================
// cross-correlated Heston realization
// ============================================================================

std::vector<double> cch_theta_flat(const CchTheta& theta) {
    theta.validate();
    std::vector<double> flat(theta.d * kThetaSlots);
    for (std::size_t i = 0; i < theta.d; ++i) {
        flat[kThetaSlots * i + 0] = theta.a[i];
        flat[kThetaSlots * i + 1] = theta.b[i];
        flat[kThetaSlots * i + 2] = theta.nu[i];
        flat[kThetaSlots * i + 3] = theta.rho_x[i];
        flat[kThetaSlots * i + 4] = theta.rho_v[i];
    }
    return flat;
}

CoefficientField net_coefficient_field(const CchCoefficientNets& coef,
                                       std::vector<double> theta_flat) {
    const int d = coef.d;
    if (theta_flat.size() != static_cast<std::size_t>(kThetaSlots * d))
        throw std::invalid_argument("net_coefficient_field: theta length != 5d");

    struct State {
        CchCoefficientNets coef;
        std::vector<double> theta;
    };
    auto state = std::make_shared<const State>(State{coef, std::move(theta_flat)});

    const std::size_t du = static_cast<std::size_t>(d);
    const std::size_t r = 2 * du + 1;

    CoefficientField field;
    field.d = du;
    field.r = r;
    field.sigma = [state, du, r](const double* x, const double* v, double* sigma) {
        std::vector<double> in(7 * du);
        std::copy(x, x + du, in.begin());
        std::copy(v, v + du, in.begin() + static_cast<std::ptrdiff_t>(du));
        std::copy(state->theta.begin(), state->theta.end(),
                  in.begin() + static_cast<std::ptrdiff_t>(2 * du));
        for (std::size_t j = 0; j < r; ++j) {
            const std::vector<double> col = state->coef.sigma[j].evaluate(in);
            for (std::size_t i = 0; i < du; ++i) sigma[i * r + j] = col[i];
        }
    };
    field.mu_bar = [state, du](const double* v, double* mu) {
        std::vector<double> in(6 * du);
        std::copy(v, v + du, in.begin());
        std::copy(state->theta.begin(), state->theta.end(),
                  in.begin() + static_cast<std::ptrdiff_t>(du));
        const std::vector<double> out = state->coef.mu_bar.evaluate(in);
        std::copy(out.begin(), out.end(), mu);
    };
    field.sigma_bar = [state, du, r](const double* v, double* sigma_bar) {
        std::vector<double> in(6 * du);
        std::copy(v, v + du, in.begin());
        std::copy(state->theta.begin(), state->theta.end(),
                  in.begin() + static_cast<std::ptrdiff_t>(du));
        for (std::size_t j = 0; j < r; ++j) {
            const std::vector<double> col = state->coef.sigma_bar[j].evaluate(in);
            for (std::size_t i = 0; i < du; ++i) sigma_bar[i * r + j] = col[i];
        }
    };
    return field;
}

namespace {

ReluNetwork cch_variance_core(const CchCoefficientNets& coef, std::span<const double> dw,
                              double dt) {
    const int d = coef.d;
    const int in_dim = cch_drift_input_dim(d);
    int depth = std::max(2, depth_of(coef.mu_bar));
    for (const ReluNetwork& n : coef.sigma_bar) depth = std::max(depth, depth_of(n));

    std::vector<ReluNetwork> branches;
    std::vector<double> weights;
    branches.reserve(coef.sigma_bar.size() + 2);
    weights.reserve(coef.sigma_bar.size() + 2);
    branches.push_back(precompose_affine(identity_net(d, depth),
                                         coordinate_selector(0, d, in_dim)));
    weights.push_back(1.0);
    branches.push_back(pad_to_depth(coef.mu_bar, depth));
    weights.push_back(dt);
    for (std::size_t j = 0; j < coef.sigma_bar.size(); ++j) {
        branches.push_back(pad_to_depth(coef.sigma_bar[j], depth));
        weights.push_back(dw[j]);
    }
    return weighted_sum(branches, weights);
}

ReluNetwork cch_spot_core(const CchCoefficientNets& coef, std::span<const double> dw) {
    const int d = coef.d;
    const int in_dim = cch_sigma_input_dim(d);
    int depth = 2;
    for (const ReluNetwork& n : coef.sigma) depth = std::max(depth, depth_of(n));

    std::vector<ReluNetwork> branches;
    std::vector<double> weights;
    branches.reserve(coef.sigma.size() + 1);
    weights.reserve(coef.sigma.size() + 1);
    branches.push_back(precompose_affine(identity_net(d, depth),
                                         coordinate_selector(0, d, in_dim)));
    weights.push_back(1.0);
    for (std::size_t j = 0; j < coef.sigma.size(); ++j) {
        branches.push_back(pad_to_depth(coef.sigma[j], depth));
        weights.push_back(dw[j]);
    }
    return weighted_sum(branches, weights);
}

}  // namespace

CchStepNets cch_step_nets(const CchCoefficientNets& coef, std::span<const double> step_increments,
                          double dt) {
    const std::size_t r = 2 * static_cast<std::size_t>(coef.d) + 1;
    if (step_increments.size() != r)
        throw std::invalid_argument("cch_step_nets: need one increment per driver");
    if (!(dt > 0.0)) throw std::invalid_argument("cch_step_nets: step size must be positive");
    return {cch_variance_core(coef, step_increments, dt), cch_spot_core(coef, step_increments)};
}

CchPathNet cch_path_net(const CchCoefficientNets& coef, std::span<const double> increments,
                        const GridSpec& grid) {
    const int d = coef.d;
    const std::size_t r = 2 * static_cast<std::size_t>(d) + 1;
    const std::size_t n = grid.steps;
    if (n < 1) throw std::invalid_argument("cch_path_net: needs at least one step");
    if (increments.size() != n * r)
        throw std::invalid_argument("cch_path_net: increment count != steps x drivers");
    const double dt = grid.dt();

    CchPathNet out;
    ReluNetwork chain;
    for (std::size_t k = 0; k < n; ++k) {
        const std::span<const double> dw = increments.subspan(k * r, r);
        ReluNetwork spot = cch_spot_core(coef, dw);
        out.spot_core_sizes.push_back(size_of(spot));

        ReluNetwork element;
        std::int64_t member_sum = 0;
        if (k + 1 < n) {
            ReluNetwork variance = cch_variance_core(coef, dw, dt);
            out.variance_core_sizes.push_back(size_of(variance));
            const int edepth = std::max(depth_of(spot), depth_of(variance));
            ReluNetwork spot_p = pad_to_depth(std::move(spot), edepth);
            ReluNetwork var_p = pad_to_depth(std::move(variance), edepth);
            ReluNetwork rail = identity_net(kThetaSlots * d, edepth);
            member_sum = size_of(spot_p) + size_of(var_p) + size_of(rail);
            element = parallelize_shared(
                {std::move(spot_p), std::move(var_p), std::move(rail)},
                {index_range(0, 7 * d), index_range(d, 6 * d), index_range(2 * d, 5 * d)},
                7 * d);
        } else {
            member_sum = size_of(spot);
            element = std::move(spot);
        }
        out.element_depths.push_back(depth_of(element));
        out.element_sizes.push_back(size_of(element));
        out.element_member_sums.push_back(member_sum);
        chain = (k == 0) ? std::move(element) : compose(element, chain);
    }
    out.net = std::move(chain);
    return out;
}

namespace {

// bound forms shared by the audit rows; the coefficient scale is the largest
// measured block entering the step (coefficient nets and identity carries)
double cch_step_scale(const CchCoefficientNets& coef, bool with_spot) {
    double s = static_cast<double>(size_of(coef.mu_bar));
    int depth = std::max(2, depth_of(coef.mu_bar));
    for (const ReluNetwork& net : coef.sigma_bar) {
        s = std::max(s, static_cast<double>(size_of(net)));
        depth = std::max(depth, depth_of(net));
    }
    if (with_spot) {
        for (const ReluNetwork& net : coef.sigma) {
            s = std::max(s, static_cast<double>(size_of(net)));
            depth = std::max(depth, depth_of(net));
        }
    }
    s = std::max(s, 2.0 * static_cast<double>(coef.d) * static_cast<double>(depth));
    return s;
}

double chain_law_bound(const std::vector<std::int64_t>& element_sizes) {
    double bound = 2.0 * static_cast<double>(element_sizes.back());
    for (std::size_t k = 0; k + 1 < element_sizes.size(); ++k)
        bound += 3.0 * static_cast<double>(element_sizes[k]);
    return bound;
}

}  // namespace

RealizedPricer cch_pricing_net(const RealizationPlan& plan, const CchCoefficientNets& coef,
                               const PayoffSpec& payoff) {
    plan.validate();
    if (plan.model != RealizedModel::CrossHeston)
        throw std::invalid_argument("cch_pricing_net: plan names the rough model");
    payoff.validate();
    const int d = coef.d;
    if (plan.assets != d)
        throw std::invalid_argument("cch_pricing_net: plan assets != coefficient dimension");
    if (payoff.d != static_cast<std::size_t>(d))
        throw std::invalid_argument("cch_pricing_net: payoff dimension != coefficient dimension");

    const std::size_t m = plan.copies;
    const std::size_t n = plan.grid.steps;
    const std::size_t r = 2 * static_cast<std::size_t>(d) + 1;
    const BrownianBundle bundle(plan.randomness_key(), plan.grid, r, m);

    std::vector<CchPathNet> paths(m);
    struct Done {};
    run_chunks<Done>(m, 1, [&](std::size_t begin, std::size_t end) {
        std::vector<double> incr;
        for (std::size_t i = begin; i < end; ++i) {
            bundle.fill_path(i, n, incr);
            paths[i] = cch_path_net(coef, incr, plan.grid);
        }
        return Done{};
    });

    const ReluNetwork phi = payoff_net(payoff);
    const double b = 2.0 * static_cast<double>(d) + 1.0;
    const double scale_v = cch_step_scale(coef, false);
    const double scale_x = cch_step_scale(coef, true);
    const double two_m = 2.0 * static_cast<double>(kThetaSlots);

    RowFold variance_row{"variance_step"};
    RowFold spot_row{"spot_step"};
    RowFold state_row{"state_step"};
    RowFold chain_row{"path_chain"};
    RowFold chain_coef_row{"path_chain_coef_form"};
    RowFold rail_row{"strike_rail"};
    RowFold copy_row{"copy_payoff"};

    const double variance_bound = (1.0 + 6.0 * b + 4.0 * b * b) * two_m * scale_v;
    const double spot_bound = (1.0 + 6.0 * b + 6.0 * b * b) * two_m * scale_x;
    const double chain_coef_bound =
        (1.0 + 6.0 * b + 6.0 * b * b) * two_m * std::max(scale_v, scale_x) *
        (2.0 + 6.0 * kThetaSlots * static_cast<double>(n - 1) +
         16.0 * kThetaSlots * static_cast<double>(n - 1) * b);

    std::vector<ReluNetwork> copies;
    copies.reserve(m);
    std::vector<std::int64_t> copy_sizes(m);
    std::int64_t rail_size = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const CchPathNet& p = paths[i];
        for (std::size_t k = 0; k < n; ++k) {
            spot_row.feed(p.spot_core_sizes[k], 0, spot_bound);
            state_row.feed(p.element_sizes[k], p.element_depths[k],
                           static_cast<double>(p.element_member_sums[k]));
        }
        for (const std::int64_t s : p.variance_core_sizes)
            variance_row.feed(s, 0, variance_bound);
        chain_row.feed(p.net, chain_law_bound(p.element_sizes));
        chain_coef_row.feed(p.net, chain_coef_bound);
        copy_sizes[i] = size_of(p.net);

        ReluNetwork rail = identity_net(1, depth_of(p.net));
        rail_size = size_of(rail);
        ReluNetwork pair = parallelize_shared({p.net, std::move(rail)},
                                              {index_range(0, 7 * d), {7 * d}}, 7 * d + 1);
        rail_row.feed(pair, static_cast<double>(copy_sizes[i] + rail_size));
        const NetMetrics pm = metrics(pair);
        ReluNetwork xi = compose(phi, pair);
        copy_row.feed(xi, 2.0 * static_cast<double>(size_of(phi)) +
                              static_cast<double>(pm.size_out) + static_cast<double>(pm.size));
        copies.push_back(std::move(xi));
    }
    paths.clear();

    const std::vector<double> avg(m, 1.0 / static_cast<double>(m));
    ReluNetwork u = weighted_sum(copies, avg);
    copies.clear();

    double sum_paths = 0.0;
    for (const std::int64_t s : copy_sizes) sum_paths += static_cast<double>(s);
    const double u_bound = 2.0 * static_cast<double>(m) * static_cast<double>(size_of(phi)) +
                           2.0 * static_cast<double>(m) * static_cast<double>(rail_size) +
                           2.0 * sum_paths;
    RowFold u_row{"price_average"};
    u_row.feed(u, u_bound);

    RealizedPricer out;
    out.audit.rows = {variance_row.row(), spot_row.row(),  state_row.row(), chain_row.row(),
                      chain_coef_row.row(), rail_row.row(), copy_row.row(),  u_row.row()};
    out.copy_sizes = std::move(copy_sizes);
    out.payoff_size = size_of(phi);
    out.strike_rail_size = rail_size;
    out.net = std::move(u);
    return out;
}

// ============================================================================
// rough Bergomi realization
// ============================================================================

std::span<const double> RoughBlocks::variance_subgrid(std::size_t copy, std::size_t k) const {
    if (copy >= variance_db.size())
        throw std::out_of_range("RoughBlocks::variance_subgrid: copy out of range");
    if (k < 1 || k >= plan.grid.steps)
        throw std::out_of_range("RoughBlocks::variance_subgrid: grid index out of range");
    return std::span<const double>(variance_db[copy]).subspan(k * (k - 1) / 2, k);
}

double RoughBlocks::variance_z_at(std::size_t copy, std::size_t k) const {
    if (copy >= variance_z.size())
        throw std::out_of_range("RoughBlocks::variance_z_at: copy out of range");
    if (k < 1 || k >= plan.grid.steps)
        throw std::out_of_range("RoughBlocks::variance_z_at: grid index out of range");
    return variance_z[copy][k - 1];
}

RoughBlocks rough_blocks(const RealizationPlan& plan, const RBergomiTheta& box) {
    plan.validate();
    if (plan.model != RealizedModel::RoughBergomi)
        throw std::invalid_argument("rough_blocks: plan names the cross-Heston model");

    RoughBlocks blocks;
    blocks.plan = plan;
    blocks.box = box;

    const std::size_t n = plan.grid.steps;
    const std::size_t m = plan.copies;
    const double eps = plan.block_eps;
    const double trunc = plan.truncation;
    const RngKey key = plan.randomness_key();

    // frozen randomness first: the certification boxes must cover it.
    // Grid time t_k gets a k-cell subgrid whose cell width equals the main
    // step, plus the normalized last-cell draw; z is drawn before the cells.
    const RngKey vkey = key.child("volterra");
    const double sd = std::sqrt(plan.grid.dt());
    blocks.variance_db.assign(m, {});
    blocks.variance_z.assign(m, {});
    for (std::size_t i = 0; i < m; ++i) {
        blocks.variance_db[i].resize(n * (n - 1) / 2);
        blocks.variance_z[i].resize(n > 0 ? n - 1 : 0);
        for (std::size_t k = 1; k < n; ++k) {
            RngStream stream = vkey.stream(i, static_cast<std::uint32_t>(k));
            blocks.variance_z[i][k - 1] = stream.normal();
            double* db = blocks.variance_db[i].data() + k * (k - 1) / 2;
            for (std::size_t c = 0; c < k; ++c) db[c] = sd * stream.normal();
        }
    }

    const BrownianBundle spot_bundle(key.child("spot"), plan.grid, 2, m);
    blocks.spot_db.assign(m, {});
    blocks.stop_step.assign(m, n + 1);
    for (std::size_t i = 0; i < m; ++i) {
        spot_bundle.fill_path(i, n, blocks.spot_db[i]);
        double b = 0.0;
        double b_perp = 0.0;
        for (std::size_t s = 1; s <= n; ++s) {
            b += blocks.spot_db[i][2 * (s - 1)];
            b_perp += blocks.spot_db[i][2 * (s - 1) + 1];
            if (std::abs(b) > plan.driver_clamp || std::abs(b_perp) > plan.driver_clamp) {
                blocks.stop_step[i] = s;
                for (std::size_t k = s; k < n; ++k) {
                    blocks.spot_db[i][2 * k] = 0.0;
                    blocks.spot_db[i][2 * k + 1] = 0.0;
                }
                break;
            }
        }
    }

    blocks.sqrt_level =
        pl_approx_1d([](double y) { return std::sqrt(y); }, box.nu_box, eps);
    blocks.orth = pl_approx_1d([](double y) { return std::sqrt(1.0 - y * y); },
                               blocks.rho_box, eps);
    blocks.vmult = mult_net(trunc + 1.0, eps);

    blocks.volterra_weights.resize(n);
    for (std::size_t k = 1; k < n; ++k)
        blocks.volterra_weights[k] =
            hybrid_weight_nets(plan.grid.time_at(k), k, eps, box.hurst_box);

    // size the Volterra output box from the frozen draws themselves, then
    // hand the widened box to the exponential factors
    double z_lo = -10.0;
    double z_hi = 10.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 1; k < n; ++k) {
            const std::span<const double> db = blocks.variance_subgrid(i, k);
            const double z = blocks.variance_z_at(i, k);
            for (int g = 0; g <= 64; ++g) {
                const double h = box.hurst_box.lo +
                                 box.hurst_box.length() * static_cast<double>(g) / 64.0;
                const double xi = volterra_dnn_point(blocks.volterra_weights[k], h, db, z);
                z_lo = std::min(z_lo, xi - 1.0);
                z_hi = std::max(z_hi, xi + 1.0);
            }
        }
    }
    blocks.z_box = {z_lo, z_hi};

    // the exponential factor saturates one margin beyond the clamp band, and
    // its accuracy is capped so a saturated value can never cross back over
    // the nearby clamp level
    ExpVarBoxes eb;
    eb.hurst = box.hurst_box;
    eb.eta = box.eta_box;
    eb.z = blocks.z_box;
    eb.u_hi = std::log(trunc) + 1.0;
    eb.u_lo = -eb.u_hi;
    const double exp_eps = std::min(eps, 0.25 / trunc);
    blocks.exp_factor.reserve(n);
    for (std::size_t k = 0; k < n; ++k)
        blocks.exp_factor.push_back(exp_var_net(plan.grid.time_at(k), exp_eps, eb));

    // certify the product block on every state the frozen recursion can
    // reach: |x_{k+1}| <= |x_k| (1 + ceiling (|db| + |db_perp|)) plus the
    // block's own error carried along
    const double ceiling =
        (std::sqrt(box.nu_box.hi) + blocks.sqrt_level.spec.target_eps) * trunc +
        blocks.vmult.spec.target_eps;
    double radius = kSpotCap;
    for (std::size_t i = 0; i < m; ++i) {
        double reach = kSpotCap;
        for (std::size_t k = 0; k < n; ++k) {
            const double swing = std::abs(blocks.spot_db[i][2 * k]) +
                                 std::abs(blocks.spot_db[i][2 * k + 1]);
            reach = reach * (1.0 + ceiling * swing) + eps * swing;
        }
        radius = std::max(radius, reach);
    }
    blocks.triple_radius = 2.0 * radius;

    // The spot factor dwarfs the other two, so a product certified on a
    // symmetric cube would need a square-difference branch whose scale wipes
    // out the accuracy in double precision. Multiply the two small factors
    // first and certify each stage on its own box.
    const double small = std::max(1.0, ceiling);
    const double pair_eps = std::min(0.45, eps / (4.0 * blocks.triple_radius));
    const CertifiedNet pair_block = mult_net(small, pair_eps);
    const CertifiedNet spot_join = mult_net(blocks.triple_radius, eps / 4.0);
    ReluNetwork stage = parallelize_shared(
        {identity_net(1, depth_of(pair_block.net)), pair_block.net}, {{0}, {1, 2}}, 3);
    ReluNetwork triple = compose(spot_join.net, std::move(stage));

    const std::vector<Interval> triple_dom = {
        {-blocks.triple_radius, blocks.triple_radius}, {-small, small}, {-small, small}};
    const double triple_err = audit_sup_error(
        triple,
        [](const std::vector<double>& y) { return y[0] * y[1] * y[2]; },
        triple_dom, {21, 21, 21});
    if (triple_err > eps)
        throw std::runtime_error("rough_blocks: product block certification failed");
    blocks.triple.net = std::move(triple);
    blocks.triple.spec = {eps, triple_dom, triple_err, blocks.triple_radius * small,
                          pair_block.spec.grid_cells + spot_join.spec.grid_cells,
                          21LL * 21LL * 21LL};
    blocks.triple.budget.stages = {{"factor pair", pair_eps, blocks.triple_radius},
                                   {"spot join", eps / 4.0, 1.0}};
    return blocks;
}

RoughVarianceNet rbergomi_variance_net(const RoughBlocks& blocks, std::size_t k,
                                       std::span<const double> db, double z) {
    const std::size_t n = blocks.plan.grid.steps;
    if (k >= n) throw std::invalid_argument("rbergomi_variance_net: grid index out of range");
    if (db.size() != k)
        throw std::invalid_argument("rbergomi_variance_net: need one increment per subgrid cell");
    const double trunc = blocks.plan.truncation;

    RoughVarianceNet out;
    out.t = blocks.plan.grid.time_at(k);
    out.volterra =
        k == 0 ? zero_net(1, 1) : volterra_point_net(blocks.volterra_weights[k], db, z);

    // the exponential factor is certified on z_box only; randomness that
    // escapes it would be evaluated on an unaudited extrapolation
    for (int g = 0; g <= 128; ++g) {
        const double h = blocks.box.hurst_box.lo +
                         blocks.box.hurst_box.length() * static_cast<double>(g) / 128.0;
        const double xi = out.volterra.evaluate({h})[0];
        if (xi < blocks.z_box.lo || xi > blocks.z_box.hi)
            throw std::runtime_error(
                "rbergomi_variance_net: frozen randomness outside the certified volterra box");
    }

    const int vd = std::max(2, depth_of(out.volterra));
    ReluNetwork inner = parallelize_shared(
        {identity_net(1, vd), identity_net(1, vd), pad_to_depth(out.volterra, vd)},
        {{3}, {1}, {3}}, 4);
    const std::int64_t inner_size = size_of(inner);
    ReluNetwork exp_side = compose(blocks.exp_factor[k].net, std::move(inner));
    ReluNetwork floor_clamp = max_net(1.0 / trunc);
    ReluNetwork cap_clamp = min_net(trunc);
    const std::int64_t floor_size = size_of(floor_clamp);
    const std::int64_t cap_size = size_of(cap_clamp);
    ReluNetwork clamped =
        compose(cap_clamp, compose(floor_clamp, std::move(exp_side)));

    ReluNetwork sq = pad_to_depth(blocks.sqrt_level.net, depth_of(clamped));
    const std::int64_t sq_size = size_of(sq);
    ReluNetwork pair = parallelize_shared({std::move(sq), std::move(clamped)},
                                          {{0}, {0, 1, 2, 3}}, 4);
    out.net = compose(blocks.vmult.net, std::move(pair));

    const double lvl_eps = blocks.sqrt_level.spec.target_eps;
    const double exp_eps = blocks.exp_factor[k].spec.target_eps;
    const double join_eps = blocks.vmult.spec.target_eps;
    out.budget.stages = {
        {"product_join", join_eps, 1.0},
        {"level_scale", lvl_eps, trunc},
        {"exponential_factor", exp_eps, std::sqrt(blocks.box.nu_box.hi)},
    };
    out.budget_bound = out.budget.total();
    out.output_ceiling = (std::sqrt(blocks.box.nu_box.hi) + lvl_eps) * trunc + join_eps;
    out.size_bound = 2.0 * static_cast<double>(size_of(blocks.vmult.net)) +
                     2.0 * static_cast<double>(sq_size) +
                     4.0 * static_cast<double>(cap_size) +
                     8.0 * static_cast<double>(floor_size) +
                     16.0 * static_cast<double>(size_of(blocks.exp_factor[k].net)) +
                     16.0 * static_cast<double>(inner_size);
    return out;
}

double rough_variance_reference(const RoughBlocks& blocks, const RoughVarianceNet& vnet,
                                double nu, double eta, double hurst) {
    RBergomiTheta th = blocks.box;
    th.nu = nu;
    th.eta = eta;
    th.hurst = hurst;
    th.truncation = blocks.plan.truncation;
    const double xi = vnet.volterra.evaluate({hurst})[0];
    return truncated_sqrt_variance(vnet.t, th, xi);
}

RoughPathNet rough_path_net(const RoughBlocks& blocks, std::span<const double> increments,
                            std::size_t copy_for_variance) {
    const std::size_t n = blocks.plan.grid.steps;
    if (increments.size() != 2 * n)
        throw std::invalid_argument("rough_path_net: increment count != steps x 2");

    RoughPathNet out;
    out.spot_db.assign(increments.begin(), increments.end());
    out.variance.reserve(n);
    for (std::size_t k = 0; k < n; ++k)
        out.variance.push_back(rbergomi_variance_net(
            blocks, k,
            k == 0 ? std::span<const double>{} : blocks.variance_subgrid(copy_for_variance, k),
            k == 0 ? 0.0 : blocks.variance_z_at(copy_for_variance, k)));

    ReluNetwork chain;
    for (std::size_t k = 0; k < n; ++k) {
        const ReluNetwork& vnet = out.variance[k].net;
        const int vd = depth_of(vnet);
        ReluNetwork fp_common = parallelize_shared(
            {identity_net(1, vd), vnet, identity_net(1, vd)}, {{0}, {1, 2, 3, 4}, {3}}, 5);
        ReluNetwork branch_common = compose(blocks.triple.net, std::move(fp_common));
        ReluNetwork fp_orth = parallelize_shared(
            {identity_net(1, vd), vnet, pad_to_depth(blocks.orth.net, vd)},
            {{0}, {1, 2, 3, 4}, {3}}, 5);
        ReluNetwork branch_orth = compose(blocks.triple.net, std::move(fp_orth));
        ReluNetwork carry = precompose_affine(identity_net(1, depth_of(branch_common)),
                                              coordinate_selector(0, 1, 5));

        out.step_member_sums.push_back(size_of(carry) + size_of(branch_common) +
                                       size_of(branch_orth));
        ReluNetwork core = weighted_sum(
            {std::move(carry), std::move(branch_common), std::move(branch_orth)},
            {1.0, increments[2 * k], increments[2 * k + 1]});
        out.step_core_sizes.push_back(size_of(core));

        ReluNetwork element;
        if (k + 1 < n) {
            ReluNetwork rail = identity_net(4, depth_of(core));
            element = parallelize_shared({std::move(core), std::move(rail)},
                                         {index_range(0, 5), {1, 2, 3, 4}}, 5);
        } else {
            element = std::move(core);
        }
        out.element_depths.push_back(depth_of(element));
        out.element_sizes.push_back(size_of(element));
        chain = (k == 0) ? std::move(element) : compose(element, chain);
    }
    out.net = std::move(chain);
    return out;
}

RoughPathNet rough_path_net(const RoughBlocks& blocks, std::size_t copy) {
    if (copy >= blocks.spot_db.size())
        throw std::out_of_range("rough_path_net: copy out of range");
    return rough_path_net(blocks, blocks.spot_db[copy], copy);
}

double rough_net_recursion(const RoughBlocks& blocks, const RoughPathNet& path, double x0,
                           double nu, double eta, double rho, double hurst) {
    const std::vector<double> state{nu, eta, rho, hurst};
    const double orth = blocks.orth.net.evaluate({rho})[0];
    double x = x0;
    for (std::size_t k = 0; k < path.variance.size(); ++k) {
        const double v = path.variance[k].net.evaluate(state)[0];
        const double common = blocks.triple.net.evaluate({x, v, rho})[0];
        const double idio = blocks.triple.net.evaluate({x, v, orth})[0];
        x += common * path.spot_db[2 * k] + idio * path.spot_db[2 * k + 1];
    }
    return x;
}

RealizedPricer rbergomi_pricing_net(const RoughBlocks& blocks, const PayoffSpec& payoff) {
    payoff.validate();
    if (payoff.d != 1)
        throw std::invalid_argument("rbergomi_pricing_net: payoff must be single-asset");
    const std::size_t m = blocks.plan.copies;
    const std::size_t n = blocks.plan.grid.steps;

    std::vector<RoughPathNet> paths(m);
    struct Done {};
    run_chunks<Done>(m, 1, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) paths[i] = rough_path_net(blocks, i);
        return Done{};
    });

    const ReluNetwork phi = payoff_net(payoff);

    RowFold volterra_row{"rough_volterra"};
    RowFold variance_row{"rough_variance_net"};
    RowFold step_row{"rough_step"};
    RowFold state_row{"rough_state_step"};
    RowFold chain_row{"rough_path_chain"};
    RowFold rail_row{"rough_strike_rail"};
    RowFold copy_row{"rough_copy_payoff"};

    std::vector<ReluNetwork> copies;
    copies.reserve(m);
    std::vector<std::int64_t> copy_sizes(m);
    std::int64_t rail_size = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const RoughPathNet& p = paths[i];
        for (std::size_t k = 0; k < n; ++k) {
            const RoughVarianceNet& v = p.variance[k];
            if (k >= 1) {
                const HybridWeightNets& w = blocks.volterra_weights[k];
                double parts = static_cast<double>(size_of(w.last_cell.net));
                for (const CertifiedNet& c : w.kernel)
                    parts += static_cast<double>(size_of(c.net));
                volterra_row.feed(v.volterra, parts);
            }
            variance_row.feed(v.net, v.size_bound);
            step_row.feed(p.step_core_sizes[k], 0,
                          static_cast<double>(p.step_member_sums[k]));
            if (k + 1 < n)
                state_row.feed(p.element_sizes[k], p.element_depths[k],
                               9.0 * static_cast<double>(p.step_core_sizes[k]));
        }
        chain_row.feed(p.net, chain_law_bound(p.element_sizes));
        copy_sizes[i] = size_of(p.net);

        ReluNetwork rail = identity_net(1, depth_of(p.net));
        rail_size = size_of(rail);
        ReluNetwork pair = parallelize_shared({p.net, std::move(rail)},
                                              {index_range(0, 5), {5}}, 6);
        rail_row.feed(pair, static_cast<double>(copy_sizes[i] + rail_size));
        const NetMetrics pm = metrics(pair);
        ReluNetwork xi = compose(phi, pair);
        copy_row.feed(xi, 2.0 * static_cast<double>(size_of(phi)) +
                              static_cast<double>(pm.size_out) + static_cast<double>(pm.size));
        copies.push_back(std::move(xi));
    }

    RealizedPricer out;
    const std::vector<double> avg(m, 1.0 / static_cast<double>(m));
    ReluNetwork u = weighted_sum(copies, avg);
    copies.clear();
    paths.clear();

    double sum_paths = 0.0;
    for (const std::int64_t s : copy_sizes) sum_paths += static_cast<double>(s);
    const double u_bound = 2.0 * static_cast<double>(m) * static_cast<double>(size_of(phi)) +
                           2.0 * static_cast<double>(m) * static_cast<double>(rail_size) +
                           2.0 * sum_paths;
    RowFold u_row{"rough_price_average"};
    u_row.feed(u, u_bound);

    out.audit.rows = {volterra_row.row(), variance_row.row(), step_row.row(),
                      state_row.row(),    chain_row.row(),    rail_row.row(),
                      copy_row.row(),     u_row.row()};
    out.copy_sizes = std::move(copy_sizes);
    out.payoff_size = size_of(phi);
    out.strike_rail_size = rail_size;
    out.net = std::move(u);
    return out;
}

// ============================================================================
// verified realization
// ============================================================================

RoughMuPoint rough_mu_point(const MuSample& sample, const MeasureMu& mu,
                            const Interval& rho_box, const RBergomiTheta& box) {
    const auto remap = [](double y, const Interval& from, const Interval& to) {
        if (!(from.length() > 0.0)) return 0.5 * (to.lo + to.hi);
        return to.lo + (y - from.lo) / from.length() * to.length();
    };
    RoughMuPoint p;
    p.x = sample.x.at(0);
    p.nu = remap(sample.v.at(0), mu.v_box, box.nu_box);
    p.eta = remap(sample.theta.nu.at(0), mu.nu_box, box.eta_box);
    p.rho = remap(sample.theta.rho_x.at(0), mu.rho_x_box, rho_box);
    p.hurst = remap(sample.theta.a.at(0), mu.a_box, box.hurst_box);
    p.strike = sample.k.at(0);
    return p;
}

namespace {

// the accuracy statement is existential in the randomness: resample with a
// fresh derived seed until the measured error meets the target or the retry
// cap is reached
template <typename Build, typename Candidate>
VerifiedRealization verify_with_retries(RealizationPlan plan, const MeasureMu& mu, std::size_t d,
                                        const PriceReference& reference, std::size_t samples,
                                        RngKey sample_key, Build&& build, Candidate&& candidate) {
    constexpr int kRetryCap = 8;
    const RngKey retry = RngKey::from_seed(plan.master_seed).child("retry");
    VerifiedRealization out;
    for (int attempt = 0; attempt < kRetryCap; ++attempt) {
        if (attempt > 0)
            plan.master_seed = retry.child(static_cast<std::uint64_t>(attempt)).master;
        out.pricer = build(plan);
        const auto eval = [&](const MuSample& s) { return candidate(out.pricer, s); };
        out.l2 = l2_mu_error(eval, reference, mu, d, samples, sample_key);
        out.attempts = attempt + 1;
        out.seed_used = plan.master_seed;
        out.met_target = out.l2.rmse <= plan.target_eps;
        if (out.met_target) break;
    }
    return out;
}

}  // namespace

VerifiedRealization verified_cch_pricing_net(RealizationPlan plan, const CchCoefficientNets& coef,
                                             const PayoffSpec& payoff, const MeasureMu& mu,
                                             const PriceReference& reference, std::size_t samples,
                                             RngKey sample_key) {
    plan.validate();
    mu.validate();
    const int d = coef.d;
    return verify_with_retries(
        std::move(plan), mu, static_cast<std::size_t>(d), reference, samples, sample_key,
        [&](const RealizationPlan& p) { return cch_pricing_net(p, coef, payoff); },
        [d](const RealizedPricer& pricer, const MuSample& s) {
            std::vector<double> in;
            in.reserve(7 * static_cast<std::size_t>(d) + 1);
            in.insert(in.end(), s.x.begin(), s.x.end());
            in.insert(in.end(), s.v.begin(), s.v.end());
            const std::vector<double> flat = cch_theta_flat(s.theta);
            in.insert(in.end(), flat.begin(), flat.end());
            in.push_back(s.k.at(0));
            return pricer.net.evaluate(in)[0];
        });
}

VerifiedRealization verified_rbergomi_pricing_net(RealizationPlan plan, const RBergomiTheta& box,
                                                  const PayoffSpec& payoff, const MeasureMu& mu,
                                                  const PriceReference& reference,
                                                  std::size_t samples, RngKey sample_key) {
    plan.validate();
    mu.validate();
    Interval rho_box{-0.99, 0.0};
    return verify_with_retries(
        std::move(plan), mu, 1, reference, samples, sample_key,
        [&](const RealizationPlan& p) {
            const RoughBlocks blocks = rough_blocks(p, box);
            return rbergomi_pricing_net(blocks, payoff);
        },
        [&mu, rho_box, &box](const RealizedPricer& pricer, const MuSample& s) {
            const RoughMuPoint p = rough_mu_point(s, mu, rho_box, box);
            return pricer.net.evaluate({p.x, p.nu, p.eta, p.rho, p.hurst, p.strike})[0];
        });
}

}  // namespace svnet
