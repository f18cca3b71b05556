#include "svnet/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
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

// incremental FNV-1a over the parameter string of a run
struct ConfigHasher {
    std::string text;

    void add(std::string_view token) {
        text += token;
        text += '|';
    }
    void add(double v) {
        append_g17(text, v);
        text += '|';
    }
    void add(std::span<const double> vs) {
        for (double v : vs) add(v);
    }
    void add(std::uint64_t v) {
        text += std::to_string(v);
        text += '|';
    }
    std::uint64_t hash() const { return fnv1a(text); }
};

void hash_payoff(ConfigHasher& h, const PayoffSpec& spec) {
    switch (spec.kind) {
        case PayoffKind::Call: h.add("call"); break;
        case PayoffKind::Put: h.add("put"); break;
        case PayoffKind::BasketCall: h.add("basket-call"); break;
        case PayoffKind::CappedCall: h.add("capped-call"); break;
    }
    h.add(static_cast<std::uint64_t>(spec.d));
    h.add(std::span<const double>(spec.weights));
    h.add(spec.cap);
}

void require_grid(const GridSpec& grid, const char* who) {
    if (!std::isfinite(grid.horizon) || !(grid.horizon > 0.0) || grid.steps < 1)
        throw std::invalid_argument(std::string(who) + ": grid needs a positive horizon and steps");
}

void require_paths(std::size_t paths, const char* who) {
    if (paths < 2)
        throw std::invalid_argument(std::string(who) + ": needs at least 2 paths");
}

struct MomentSums {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t stopped = 0;
    std::size_t diverged = 0;
};

PriceResult reduce_price(const std::vector<MomentSums>& parts, std::size_t paths,
                         std::uint64_t seed, std::uint64_t config_hash) {
    MomentSums all;
    for (const MomentSums& p : parts) {
        all.sum += p.sum;
        all.sum_sq += p.sum_sq;
        all.stopped += p.stopped;
        all.diverged += p.diverged;
    }
    const std::size_t used = paths - all.diverged;
    if (used < 2)
        throw std::runtime_error("mc_price: fewer than 2 finite paths survived");
    const double n = static_cast<double>(used);
    const double mean = all.sum / n;
    double var = (all.sum_sq - n * mean * mean) / (n - 1.0);
    if (var < 0.0) var = 0.0;

    PriceResult out;
    out.estimate = mean;
    out.se = std::sqrt(var / n);
    out.paths = paths;
    out.seed = seed;
    out.config_hash = config_hash;
    out.stopped = all.stopped;
    out.diverged = all.diverged;
    return out;
}

// one cross-correlated Heston pricing pass over an existing bundle, so sweeps
// can share driver randomness across policies and boxes
PriceResult cch_price_on_bundle(const CchTheta& theta,
                                std::span<const double> x0,
                                std::span<const double> v0,
                                const PayoffSpec& spec,
                                double strike,
                                const GridSpec& grid,
                                const BrownianBundle& bundle,
                                std::size_t paths,
                                std::uint64_t seed,
                                VariancePolicy policy,
                                const DomainBox& box,
                                std::uint64_t config_hash) {
    auto parts = run_chunks<MomentSums>(paths, kPathChunk, [&](std::size_t begin, std::size_t end) {
        MomentSums part;
        std::vector<const double*> spot(theta.d);
        for (std::size_t i = begin; i < end; ++i) {
            CchPathResult r = simulate_cch_path(theta, x0, v0, grid, bundle, i, policy, box);
            if (r.stopped) ++part.stopped;
            if (r.path.diverged) {
                ++part.diverged;
                continue;
            }
            const double* xt = r.path.x_at(grid.steps);
            const double phi = payoff_value(spec, std::span<const double>(xt, theta.d), strike);
            part.sum += phi;
            part.sum_sq += phi * phi;
        }
        return part;
    });
    return reduce_price(parts, paths, seed, config_hash);
}

constexpr std::size_t kGlPoints = 16;

constexpr double kGlNode[kGlPoints] = {
    -0.98940093499164993260, -0.94457502307323257608, -0.86563120238783174388,
    -0.75540440835500303390, -0.61787624440264374845, -0.45801677765722738634,
    -0.28160355077925891323, -0.09501250983763744019, 0.09501250983763744019,
    0.28160355077925891323,  0.45801677765722738634,  0.61787624440264374845,
    0.75540440835500303390,  0.86563120238783174388,  0.94457502307323257608,
    0.98940093499164993260,
};

constexpr double kGlWeight[kGlPoints] = {
    0.02715245941175409485, 0.06225352393864789286, 0.09515851168249278481,
    0.12462897125553387205, 0.14959598881657673208, 0.16915651939500253819,
    0.18260341504492358887, 0.18945061045506849629, 0.18945061045506849629,
    0.18260341504492358887, 0.16915651939500253819, 0.14959598881657673208,
    0.12462897125553387205, 0.09515851168249278481, 0.06225352393864789286,
    0.02715245941175409485,
};

// Heston characteristic-function integrands, zero rates. The (beta - d)
// convention keeps the complex log off its branch cut for admissible
// parameters, so the integrand stays smooth in the maturity.
struct HestonIntegrand {
    double a, b, nu, rho, v0, ln_s, ln_k, t;

    // Re( e^{-iu ln K} phi_j(u) / (iu) ), j = 1 spot measure, j = 2 cash
    double operator()(int j, double u) const {
        const std::complex<double> iu(0.0, u);
        const double uj = (j == 1) ? 0.5 : -0.5;
        const double bj = (j == 1) ? a - rho * nu : a;
        const std::complex<double> beta = bj - rho * nu * iu;
        const std::complex<double> d =
            std::sqrt(beta * beta - nu * nu * (2.0 * uj * iu - u * u));
        const std::complex<double> c = (beta - d) / (beta + d);
        const std::complex<double> e = std::exp(-d * t);
        const std::complex<double> big_d = ((beta - d) / (nu * nu)) * (1.0 - e) / (1.0 - c * e);
        const std::complex<double> big_c =
            (a * b / (nu * nu)) * ((beta - d) * t - 2.0 * std::log((1.0 - c * e) / (1.0 - c)));
        const std::complex<double> phi = std::exp(big_c + big_d * v0 + iu * ln_s);
        return std::real(std::exp(-iu * ln_k) * phi / iu);
    }
};

// 16-point panels with quadratically spaced breakpoints: dense where the
// integrand still moves, coarse in the decayed tail. 32 panels = 512 nodes.
double integrate_probability(const HestonIntegrand& f, int j, double bound) {
    constexpr int panels = 32;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double frac_lo = static_cast<double>(p) / panels;
        const double frac_hi = static_cast<double>(p + 1) / panels;
        const double lo = bound * frac_lo * frac_lo;
        const double hi = bound * frac_hi * frac_hi;
        const double center = 0.5 * (hi + lo);
        const double radius = 0.5 * (hi - lo);
        double panel = 0.0;
        for (std::size_t q = 0; q < kGlPoints; ++q)
            panel += kGlWeight[q] * f(j, center + radius * kGlNode[q]);
        total += radius * panel;
    }
    return total;
}

struct HestonProbabilities {
    double p1 = 0.0;
    double p2 = 0.0;
};

HestonProbabilities heston_probabilities(double a, double b, double nu, double rho_v,
                                         double v0, double x0, double strike, double t) {
    const bool finite = std::isfinite(a) && std::isfinite(b) && std::isfinite(nu) &&
                        std::isfinite(rho_v) && std::isfinite(v0) && std::isfinite(x0) &&
                        std::isfinite(strike) && std::isfinite(t);
    if (!finite || !(a > 0.0) || b < 0.0 || !(nu > 0.0) || std::abs(rho_v) > 1.0 ||
        v0 < 0.0 || !(x0 > 0.0) || !(strike > 0.0) || !(t > 0.0))
        throw std::invalid_argument("heston_cf_price: invalid model parameters");

    const HestonIntegrand f{a, b, nu, rho_v, v0, std::log(x0), std::log(strike), t};

    // the tail beyond the bound is charged at |integrand| * bound; doubling
    // stops once that is safely under the 1e-10 budget for both integrals
    double bound = 200.0;
    for (int attempt = 0;; ++attempt) {
        double tail = 0.0;
        for (double m : {1.0, 1.5, 2.0}) {
            tail = std::max(tail, std::abs(f(1, bound * m)));
            tail = std::max(tail, std::abs(f(2, bound * m)));
        }
        if (std::isfinite(tail) && tail * bound <= 5e-11) break;
        if (attempt >= 12)
            throw std::runtime_error("heston_cf_price: integrand tail failed the decay test");
        bound *= 2.0;
    }

    HestonProbabilities probs;
    probs.p1 = 0.5 + integrate_probability(f, 1, bound) / std::numbers::pi;
    probs.p2 = 0.5 + integrate_probability(f, 2, bound) / std::numbers::pi;
    if (!std::isfinite(probs.p1) || !std::isfinite(probs.p2))
        throw std::runtime_error("heston_cf_price: quadrature did not converge");
    return probs;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

// ----------------------------------------------------------------------------
// Payoffs.

bool PayoffSpec::bounded() const {
    return kind == PayoffKind::Put || kind == PayoffKind::CappedCall;
}

void PayoffSpec::validate() const {
    if (d == 0) throw std::invalid_argument("payoff spec: d must be >= 1");
    if (kind == PayoffKind::BasketCall) {
        if (weights.size() != d)
            throw std::invalid_argument("payoff spec: basket needs one weight per underlying");
        for (double w : weights)
            if (!std::isfinite(w))
                throw std::invalid_argument("payoff spec: basket weights must be finite");
    } else {
        if (d != 1)
            throw std::invalid_argument("payoff spec: only the basket call takes d > 1");
        if (!weights.empty())
            throw std::invalid_argument("payoff spec: weights are a basket-call field");
    }
    if (kind == PayoffKind::CappedCall) {
        if (!std::isfinite(cap) || !(cap > 0.0))
            throw std::invalid_argument("payoff spec: capped call needs a positive finite cap");
    } else if (cap != 0.0) {
        throw std::invalid_argument("payoff spec: cap is a capped-call field");
    }
}

ReluNetwork payoff_net(const PayoffSpec& spec) {
    spec.validate();
    const int in = static_cast<int>(spec.d) + 1;
    const int k_col = static_cast<int>(spec.d);

    if (spec.kind == PayoffKind::CappedCall) {
        AffineLayer hinges = AffineLayer::zero(2, in);
        hinges.set(0, 0, 1.0);
        hinges.set(0, 1, -1.0);
        hinges.set(1, 0, 1.0);
        hinges.set(1, 1, -1.0);
        hinges.bias[1] = -spec.cap;
        AffineLayer out = AffineLayer::zero(1, 2);
        out.set(0, 0, 1.0);
        out.set(0, 1, -1.0);
        return ReluNetwork({std::move(hinges), std::move(out)});
    }

    AffineLayer hinge = AffineLayer::zero(1, in);
    switch (spec.kind) {
        case PayoffKind::Call:
            hinge.set(0, 0, 1.0);
            hinge.set(0, k_col, -1.0);
            break;
        case PayoffKind::Put:
            hinge.set(0, 0, -1.0);
            hinge.set(0, k_col, 1.0);
            break;
        case PayoffKind::BasketCall:
            for (int i = 0; i < static_cast<int>(spec.d); ++i)
                hinge.set(0, i, spec.weights[static_cast<std::size_t>(i)]);
            hinge.set(0, k_col, -1.0);
            break;
        case PayoffKind::CappedCall:
            break;  // handled above
    }
    AffineLayer out = AffineLayer::zero(1, 1);
    out.set(0, 0, 1.0);
    return ReluNetwork({std::move(hinge), std::move(out)});
}

double payoff_value(const PayoffSpec& spec, std::span<const double> x, double strike) {
    spec.validate();
    if (x.size() != spec.d)
        throw std::invalid_argument("payoff_value: spot dimension mismatch");
    switch (spec.kind) {
        case PayoffKind::Call:
            return std::max(x[0] - strike, 0.0);
        case PayoffKind::Put:
            return std::max(strike - x[0], 0.0);
        case PayoffKind::BasketCall: {
            double s = 0.0;
            for (std::size_t i = 0; i < spec.d; ++i) s += spec.weights[i] * x[i];
            return std::max(s - strike, 0.0);
        }
        case PayoffKind::CappedCall:
            return std::min(std::max(x[0] - strike, 0.0), spec.cap);
    }
    throw std::logic_error("payoff_value: unknown payoff kind");
}

// ----------------------------------------------------------------------------
// Measure.

namespace {

void require_box(const Interval& box, const char* name) {
    if (!std::isfinite(box.lo) || !std::isfinite(box.hi) || !(box.lo < box.hi))
        throw std::invalid_argument(std::string("measure mu: malformed box ") + name);
}

// second moment of a uniform on [lo, hi]
double uniform_m2(const Interval& box) {
    return (box.lo * box.lo + box.lo * box.hi + box.hi * box.hi) / 3.0;
}

}  // namespace

void MeasureMu::validate() const {
    require_box(x_box, "x");
    require_box(v_box, "v");
    require_box(a_box, "a");
    require_box(b_box, "b");
    require_box(nu_box, "nu");
    require_box(rho_x_box, "rho_x");
    require_box(rho_v_box, "rho_v");
    require_box(k_box, "K");
    if (!(v_box.lo > 0.0))
        throw std::invalid_argument("measure mu: variance box must stay positive");
    if (!(a_box.lo > 0.0) || !(b_box.lo > 0.0) || nu_box.lo < 0.0)
        throw std::invalid_argument("measure mu: parameter boxes leave the model's range");
    if (rho_x_box.lo < -1.0 || rho_x_box.hi > 1.0 || rho_v_box.lo < -1.0 || rho_v_box.hi > 1.0)
        throw std::invalid_argument("measure mu: correlation boxes must sit inside [-1, 1]");
    if (n_strikes == 0)
        throw std::invalid_argument("measure mu: needs at least one strike coordinate");
    if (!std::isfinite(moment_c) || !(moment_c > 0.0) || !std::isfinite(moment_p) || moment_p < 0.0)
        throw std::invalid_argument("measure mu: malformed moment constants");
}

double MeasureMu::moment_integral(std::size_t d) const {
    if (d == 0) throw std::invalid_argument("measure mu: d must be >= 1");
    const double per_asset = uniform_m2(x_box) + uniform_m2(v_box) + uniform_m2(a_box) +
                             uniform_m2(b_box) + uniform_m2(nu_box) + uniform_m2(rho_x_box) +
                             uniform_m2(rho_v_box);
    return 1.0 + static_cast<double>(d) * per_asset +
           static_cast<double>(n_strikes) * uniform_m2(k_box);
}

bool MeasureMu::moment_check(std::size_t d) const {
    return moment_integral(d) <= moment_c * std::pow(static_cast<double>(d), moment_p);
}

MuSample sample_mu(const MeasureMu& mu, std::size_t d, RngStream& stream) {
    mu.validate();
    if (d == 0) throw std::invalid_argument("sample_mu: d must be >= 1");

    auto draw = [&stream](const Interval& box) {
        return box.lo + stream.uniform() * (box.hi - box.lo);
    };
    auto fill = [&](std::vector<double>& out, const Interval& box, std::size_t n) {
        out.resize(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = draw(box);
    };

    MuSample s;
    fill(s.x, mu.x_box, d);
    fill(s.v, mu.v_box, d);
    s.theta.d = d;
    fill(s.theta.a, mu.a_box, d);
    fill(s.theta.b, mu.b_box, d);
    fill(s.theta.nu, mu.nu_box, d);
    fill(s.theta.rho_x, mu.rho_x_box, d);
    fill(s.theta.rho_v, mu.rho_v_box, d);
    s.theta.a_max = mu.a_box.hi;
    s.theta.b_max = mu.b_box.hi;
    s.theta.nu_max = mu.nu_box.hi;
    fill(s.k, mu.k_box, mu.n_strikes);
    return s;
}

// ----------------------------------------------------------------------------
// Monte Carlo pricers.

PriceResult mc_price_cch(const CchTheta& theta,
                         std::span<const double> x0,
                         std::span<const double> v0,
                         const PayoffSpec& spec,
                         double strike,
                         const GridSpec& grid,
                         std::size_t paths,
                         std::uint64_t seed,
                         VariancePolicy policy,
                         const DomainBox& box) {
    theta.validate();
    spec.validate();
    if (spec.d != theta.d)
        throw std::invalid_argument("mc_price_cch: payoff dimension does not match the model");
    if (x0.size() != theta.d || v0.size() != theta.d)
        throw std::invalid_argument("mc_price_cch: initial state dimension mismatch");
    if (!std::isfinite(strike))
        throw std::invalid_argument("mc_price_cch: strike must be finite");
    require_grid(grid, "mc_price_cch");
    require_paths(paths, "mc_price_cch");

    ConfigHasher h;
    h.add(policy == VariancePolicy::StoppedDomain ? "cch-stopped" : "cch-truncated");
    h.add(std::span<const double>(theta.a));
    h.add(std::span<const double>(theta.b));
    h.add(std::span<const double>(theta.nu));
    h.add(std::span<const double>(theta.rho_x));
    h.add(std::span<const double>(theta.rho_v));
    h.add(x0);
    h.add(v0);
    hash_payoff(h, spec);
    h.add(strike);
    h.add(grid.horizon);
    h.add(static_cast<std::uint64_t>(grid.steps));
    h.add(static_cast<std::uint64_t>(paths));
    if (policy == VariancePolicy::StoppedDomain) {
        h.add(box.x_range.lo);
        h.add(box.x_range.hi);
        h.add(box.v_range.lo);
        h.add(box.v_range.hi);
    }

    const BrownianBundle bundle(RngKey::from_seed(seed), grid, 2 * theta.d + 1, paths);
    return cch_price_on_bundle(theta, x0, v0, spec, strike, grid, bundle, paths, seed,
                               policy, box, h.hash());
}

PriceResult mc_price_rbergomi(const RBergomiTheta& theta,
                              double x0,
                              const PayoffSpec& spec,
                              double strike,
                              const GridSpec& grid,
                              std::size_t paths,
                              std::uint64_t seed,
                              VarianceSource source) {
    theta.validate();
    spec.validate();
    if (spec.d != 1)
        throw std::invalid_argument("mc_price_rbergomi: the model prices single-asset payoffs");
    if (!std::isfinite(x0) || !std::isfinite(strike))
        throw std::invalid_argument("mc_price_rbergomi: spot and strike must be finite");
    require_grid(grid, "mc_price_rbergomi");
    require_paths(paths, "mc_price_rbergomi");

    ConfigHasher h;
    h.add(source == VarianceSource::ExactJoint ? "rbergomi-exact" : "rbergomi-hybrid");
    h.add(theta.nu);
    h.add(theta.eta);
    h.add(theta.rho);
    h.add(theta.hurst);
    h.add(theta.truncation);
    h.add(theta.driver_clamp);
    h.add(x0);
    hash_payoff(h, spec);
    h.add(strike);
    h.add(grid.horizon);
    h.add(static_cast<std::uint64_t>(grid.steps));
    h.add(static_cast<std::uint64_t>(paths));
    const std::uint64_t config_hash = h.hash();

    const RBergomiSimulator sim(theta, x0, grid, source, RngKey::from_seed(seed));
    auto parts = run_chunks<MomentSums>(paths, kPathChunk, [&](std::size_t begin, std::size_t end) {
        MomentSums part;
        for (std::size_t i = begin; i < end; ++i) {
            RBergomiPath r = sim.sample_path(i);
            if (r.driver_stopped) ++part.stopped;
            const double xt = r.x.back();
            if (!std::isfinite(xt)) {
                ++part.diverged;
                continue;
            }
            const double phi = payoff_value(spec, std::span<const double>(&xt, 1), strike);
            part.sum += phi;
            part.sum_sq += phi * phi;
        }
        return part;
    });
    return reduce_price(parts, paths, seed, config_hash);
}

// ----------------------------------------------------------------------------
// Heston reference.

double black_scholes_call(double x0, double strike, double sigma, double t) {
    const bool finite = std::isfinite(x0) && std::isfinite(strike) && std::isfinite(sigma) &&
                        std::isfinite(t);
    if (!finite || !(x0 > 0.0) || !(strike > 0.0) || sigma < 0.0 || t < 0.0)
        throw std::invalid_argument("black_scholes_call: invalid arguments");
    if (sigma == 0.0 || t == 0.0) return std::max(x0 - strike, 0.0);
    const double sig_sqrt_t = sigma * std::sqrt(t);
    const double d1 = (std::log(x0 / strike) + 0.5 * sigma * sigma * t) / sig_sqrt_t;
    const double d2 = d1 - sig_sqrt_t;
    return x0 * normal_cdf(d1) - strike * normal_cdf(d2);
}

double heston_cf_price(double a, double b, double nu, double rho_v,
                       double v0, double x0, double strike, double t) {
    const HestonProbabilities p = heston_probabilities(a, b, nu, rho_v, v0, x0, strike, t);
    return x0 * p.p1 - strike * p.p2;
}

double heston_cf_put(double a, double b, double nu, double rho_v,
                     double v0, double x0, double strike, double t) {
    const HestonProbabilities p = heston_probabilities(a, b, nu, rho_v, v0, x0, strike, t);
    return strike * (1.0 - p.p2) - x0 * (1.0 - p.p1);
}

// ----------------------------------------------------------------------------
// L^2(mu) distance.

L2Result l2_mu_error(const std::function<double(const MuSample&)>& candidate,
                     const std::function<double(const MuSample&)>& reference,
                     const MeasureMu& mu,
                     std::size_t d,
                     std::size_t samples,
                     RngKey key) {
    if (!candidate || !reference)
        throw std::invalid_argument("l2_mu_error: both pricing routes must be callable");
    mu.validate();
    if (d == 0) throw std::invalid_argument("l2_mu_error: d must be >= 1");
    if (samples < 100)
        throw std::invalid_argument("l2_mu_error: needs at least 100 samples");

    struct Part {
        double sq = 0.0;
        double quart = 0.0;
    };
    // small chunks: the reference route may itself be a Monte Carlo run
    auto parts = run_chunks<Part>(samples, 32, [&](std::size_t begin, std::size_t end) {
        Part part;
        for (std::size_t i = begin; i < end; ++i) {
            RngStream stream = key.stream(i);
            const MuSample s = sample_mu(mu, d, stream);
            const double diff = candidate(s) - reference(s);
            const double sq = diff * diff;
            part.sq += sq;
            part.quart += sq * sq;
        }
        return part;
    });

    double sq = 0.0;
    double quart = 0.0;
    for (const Part& p : parts) {
        sq += p.sq;
        quart += p.quart;
    }
    const double n = static_cast<double>(samples);
    const double mse = sq / n;
    double var_sq = (quart - n * mse * mse) / (n - 1.0);
    if (var_sq < 0.0) var_sq = 0.0;
    const double se_mse = std::sqrt(var_sq / n);

    L2Result out;
    out.rmse = std::sqrt(mse);
    out.se = out.rmse > 0.0 ? se_mse / (2.0 * out.rmse) : 0.0;
    out.samples = samples;
    return out;
}

// ----------------------------------------------------------------------------
// Sweeps.

std::vector<TruncationSweepPoint> truncation_sweep(const RBergomiTheta& theta,
                                                   double x0,
                                                   const PayoffSpec& spec,
                                                   double strike,
                                                   const GridSpec& grid,
                                                   std::span<const double> levels,
                                                   std::size_t paths,
                                                   std::uint64_t seed,
                                                   VarianceSource source) {
    spec.validate();
    if (!spec.bounded())
        throw std::invalid_argument("truncation_sweep: needs a bounded payoff (put or capped call)");
    if (levels.empty())
        throw std::invalid_argument("truncation_sweep: needs at least one truncation level");

    std::vector<TruncationSweepPoint> out;
    out.reserve(levels.size());
    for (double level : levels) {
        RBergomiTheta pointwise = theta;
        pointwise.truncation = level;
        TruncationSweepPoint point;
        point.truncation = level;
        // same seed at every level: the level only moves the variance clamp,
        // never the draw sequence, so all levels price identical driver paths
        point.price = mc_price_rbergomi(pointwise, x0, spec, strike, grid, paths, seed, source);
        out.push_back(std::move(point));
    }
    return out;
}

DomainBox scaled_domain_box(double scale) {
    if (!std::isfinite(scale) || !(scale > 0.0))
        throw std::invalid_argument("scaled_domain_box: scale must be positive and finite");
    DomainBox box;
    box.x_range = Interval{100.0 - 50.0 * scale, 100.0 + 50.0 * scale};
    box.v_range = Interval{0.01 / scale, 0.25 * scale};
    if (!(box.v_range.lo < box.v_range.hi))
        throw std::invalid_argument("scaled_domain_box: scale collapses the variance range");
    return box;
}

StoppedSweepResult stopped_domain_sweep(const CchTheta& theta,
                                        std::span<const double> x0,
                                        std::span<const double> v0,
                                        const PayoffSpec& spec,
                                        double strike,
                                        const GridSpec& grid,
                                        std::span<const double> scales,
                                        std::size_t paths,
                                        std::uint64_t seed) {
    theta.validate();
    spec.validate();
    if (spec.d != theta.d)
        throw std::invalid_argument("stopped_domain_sweep: payoff dimension does not match the model");
    if (x0.size() != theta.d || v0.size() != theta.d)
        throw std::invalid_argument("stopped_domain_sweep: initial state dimension mismatch");
    require_grid(grid, "stopped_domain_sweep");
    require_paths(paths, "stopped_domain_sweep");
    if (scales.empty())
        throw std::invalid_argument("stopped_domain_sweep: needs at least one box scale");

    std::vector<DomainBox> boxes;
    boxes.reserve(scales.size());
    for (double scale : scales) {
        DomainBox box = scaled_domain_box(scale);
        if (!box.contains(x0, v0))
            throw std::invalid_argument("stopped_domain_sweep: initial state outside a scaled box");
        boxes.push_back(box);
    }

    ConfigHasher base;
    base.add(std::span<const double>(theta.a));
    base.add(std::span<const double>(theta.b));
    base.add(std::span<const double>(theta.nu));
    base.add(std::span<const double>(theta.rho_x));
    base.add(std::span<const double>(theta.rho_v));
    base.add(x0);
    base.add(v0);
    hash_payoff(base, spec);
    base.add(strike);
    base.add(grid.horizon);
    base.add(static_cast<std::uint64_t>(grid.steps));
    base.add(static_cast<std::uint64_t>(paths));

    // one bundle for the whole sweep: every box and the unstopped reference
    // see the same driver paths
    const BrownianBundle bundle(RngKey::from_seed(seed), grid, 2 * theta.d + 1, paths);

    StoppedSweepResult result;
    {
        ConfigHasher h = base;
        h.add("unstopped");
        result.unstopped = cch_price_on_bundle(theta, x0, v0, spec, strike, grid, bundle, paths,
                                               seed, VariancePolicy::FullTruncation, DomainBox{},
                                               h.hash());
    }
    result.points.reserve(scales.size());
    for (std::size_t i = 0; i < scales.size(); ++i) {
        ConfigHasher h = base;
        h.add("stopped");
        h.add(scales[i]);
        StoppedSweepPoint point;
        point.scale = scales[i];
        point.box = boxes[i];
        point.price = cch_price_on_bundle(theta, x0, v0, spec, strike, grid, bundle, paths, seed,
                                          VariancePolicy::StoppedDomain, boxes[i], h.hash());
        result.points.push_back(std::move(point));
    }
    return result;
}

// ----------------------------------------------------------------------------
// CSV output.

PriceRow price_row(std::string model, const PriceResult& result,
                   double strike, double horizon) {
    PriceRow row;
    row.model = std::move(model);
    row.params_hash = result.config_hash;
    row.strike = strike;
    row.horizon = horizon;
    row.paths = result.paths;
    row.price = result.estimate;
    row.se = result.se;
    return row;
}

void write_price_csv(std::ostream& os, const std::vector<PriceRow>& rows) {
    os << "model,params_hash,K,T,M,price,se\n";
    std::string line;
    for (const PriceRow& r : rows) {
        line.clear();
        line += r.model;
        line += ',';
        line += std::to_string(r.params_hash);
        line += ',';
        append_g17(line, r.strike);
        line += ',';
        append_g17(line, r.horizon);
        line += ',';
        line += std::to_string(r.paths);
        line += ',';
        append_g17(line, r.price);
        line += ',';
        append_g17(line, r.se);
        os << line << '\n';
    }
}

void write_truncation_sweep_csv(std::ostream& os,
                                const std::vector<TruncationSweepPoint>& points) {
    os << "D,M,price,se,stopped\n";
    std::string line;
    for (const TruncationSweepPoint& p : points) {
        line.clear();
        append_g17(line, p.truncation);
        line += ',';
        line += std::to_string(p.price.paths);
        line += ',';
        append_g17(line, p.price.estimate);
        line += ',';
        append_g17(line, p.price.se);
        line += ',';
        line += std::to_string(p.price.stopped);
        os << line << '\n';
    }
}

void write_stopped_sweep_csv(std::ostream& os, const StoppedSweepResult& result) {
    os << "scale,x_lo,x_hi,v_lo,v_hi,M,price,se,stopped\n";
    std::string line;
    auto emit = [&](double scale, const DomainBox& box, const PriceResult& price) {
        line.clear();
        append_g17(line, scale);
        line += ',';
        append_g17(line, box.x_range.lo);
        line += ',';
        append_g17(line, box.x_range.hi);
        line += ',';
        append_g17(line, box.v_range.lo);
        line += ',';
        append_g17(line, box.v_range.hi);
        line += ',';
        line += std::to_string(price.paths);
        line += ',';
        append_g17(line, price.estimate);
        line += ',';
        append_g17(line, price.se);
        line += ',';
        line += std::to_string(price.stopped);
        os << line << '\n';
    };
    // scale 0 row: the unstopped full-truncation reference (box columns empty
    // would break numeric parsers, so it repeats the widest convention)
    emit(0.0, DomainBox{Interval{0.0, 0.0}, Interval{0.0, 0.0}}, result.unstopped);
    for (const StoppedSweepPoint& p : result.points) emit(p.scale, p.box, p.price);
}

}  // namespace svnet
