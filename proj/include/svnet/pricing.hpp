#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "svnet/relu_net.hpp"
#include "svnet/rough_vol.hpp"
#include "svnet/sv_sim.hpp"

namespace svnet {

// ============================================================================
// European payoffs as exact ReLU networks, Monte Carlo pricers for both
// volatility schemes, and a semi-closed-form Heston reference for d = 1.
// ============================================================================

enum class PayoffKind {
    Call,        // (x - K)^+
    Put,         // (K - x)^+
    BasketCall,  // (sum_i w_i x_i - K)^+
    CappedCall,  // min((x - K)^+, cap)
};

struct PayoffSpec {
    PayoffKind kind = PayoffKind::Call;
    std::size_t d = 1;            // number of underlyings (1 except for baskets)
    std::vector<double> weights;  // basket only, size d
    double cap = 0.0;             // capped call only, > 0

    // put and capped call are bounded (by the strike resp. the cap); the
    // plain and basket calls grow linearly in the spot
    bool bounded() const;

    // throws std::invalid_argument on d == 0, a non-basket kind with d != 1,
    // missing/misshapen/non-finite weights, weights on a non-basket kind, a
    // capped call without a positive finite cap, or a cap on another kind
    void validate() const;
};

// Exact network for phi(x, K): inputs (x_1, ..., x_d, K), one output, three
// layers (affine, ReLU hinge, affine). Call and put are 1-Lipschitz in (x, K)
// jointly; the capped call is the difference of two hinges.
ReluNetwork payoff_net(const PayoffSpec& spec);

// Scalar route. Agrees with the network evaluation exactly for call/put/basket
// and up to one rounding of the cap subtraction for the capped call.
double payoff_value(const PayoffSpec& spec, std::span<const double> x, double strike);

// ----------------------------------------------------------------------------
// Product measure on (x, v, theta, K): every coordinate an independent
// uniform. The defaults are the parameter boxes the experiments range over.
// ----------------------------------------------------------------------------

struct MeasureMu {
    Interval x_box{50.0, 150.0};
    Interval v_box{0.01, 0.25};
    Interval a_box{0.5, 3.0};
    Interval b_box{0.01, 0.25};
    Interval nu_box{0.05, 0.8};
    Interval rho_x_box{-0.9, 0.9};
    Interval rho_v_box{-0.9, 0.9};
    Interval k_box{50.0, 150.0};
    std::size_t n_strikes = 1;

    // recorded bound: integral of (1 + |x|^2 + |v|^2 + |theta|^2 + |K|^2)
    // against the measure is <= moment_c * d^moment_p. The integral is linear
    // in d for a product of uniforms, hence the default exponent 1; the
    // default constant is the d = 1 value of the closed form, rounded up.
    double moment_c = 21673.0;
    double moment_p = 1.0;

    void validate() const;

    // closed form: 1 + sum over coordinates of (lo^2 + lo*hi + hi^2) / 3
    double moment_integral(std::size_t d) const;
    bool moment_check(std::size_t d) const;
};

struct MuSample {
    std::vector<double> x;  // d spots
    std::vector<double> v;  // d variances
    CchTheta theta;         // box caps copied from the measure
    std::vector<double> k;  // n_strikes strikes
};

// Coordinate blocks are drawn in a fixed order (x, v, a, b, nu, rho_x, rho_v,
// strikes), so a stream position always feeds the same coordinate.
MuSample sample_mu(const MeasureMu& mu, std::size_t d, RngStream& stream);

// ----------------------------------------------------------------------------
// Monte Carlo pricing. Path i draws from substream i of the seed's key and
// partial sums are combined in fixed chunk order, so the estimate is
// bit-identical for any worker count.
// ----------------------------------------------------------------------------

struct PriceResult {
    double estimate = 0.0;
    double se = 0.0;  // sample standard deviation / sqrt(paths used)
    std::size_t paths = 0;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;  // FNV-1a over the run's parameter string
    std::size_t stopped = 0;        // paths frozen by the domain or driver stop
    std::size_t diverged = 0;       // non-finite paths, excluded from the mean
};

// E[phi(X_T, K)] under the cross-correlated Heston Euler scheme. paths >= 2;
// spec.d must match theta.d; the stopped-domain policy requires the initial
// state inside the box.
PriceResult mc_price_cch(const CchTheta& theta,
                         std::span<const double> x0,
                         std::span<const double> v0,
                         const PayoffSpec& spec,
                         double strike,
                         const GridSpec& grid,
                         std::size_t paths,
                         std::uint64_t seed,
                         VariancePolicy policy = VariancePolicy::StoppedDomain,
                         const DomainBox& box = {});

// Same contract for the truncated rough Bergomi scheme (payoffs with d = 1).
PriceResult mc_price_rbergomi(const RBergomiTheta& theta,
                              double x0,
                              const PayoffSpec& spec,
                              double strike,
                              const GridSpec& grid,
                              std::size_t paths,
                              std::uint64_t seed,
                              VarianceSource source = VarianceSource::ExactJoint);

// ----------------------------------------------------------------------------
// Semi-closed-form Heston call under zero rates, used as the d = 1 reference.
// The characteristic function uses the branch-cut-stable log convention; each
// probability integral runs 512-node Gauss-Legendre (16-point panels with
// quadratically spaced breakpoints on [0, U]) and U doubles until the
// integrand tail is below 1e-10. Throws std::runtime_error when the tail
// never passes the test. Single-threaded, test-side reference only.
// ----------------------------------------------------------------------------

double black_scholes_call(double x0, double strike, double sigma, double t);

double heston_cf_price(double a, double b, double nu, double rho_v,
                       double v0, double x0, double strike, double t);

// put from the same two integrals, so C - P = x0 - K up to quadrature error
double heston_cf_put(double a, double b, double nu, double rho_v,
                     double v0, double x0, double strike, double t);

// ----------------------------------------------------------------------------
// L^2(mu) distance between two pricing routes, estimated from mu samples.
// Sample i is drawn from substream i. Both routes must be safe to call
// concurrently. samples >= 100. se is the delta-method standard error of the
// rmse (0 whenever the rmse is 0).
// ----------------------------------------------------------------------------

struct L2Result {
    double rmse = 0.0;
    double se = 0.0;
    std::size_t samples = 0;
};

L2Result l2_mu_error(const std::function<double(const MuSample&)>& candidate,
                     const std::function<double(const MuSample&)>& reference,
                     const MeasureMu& mu,
                     std::size_t d,
                     std::size_t samples,
                     RngKey key);

// ----------------------------------------------------------------------------
// Truncation sweep: the same rough Bergomi run repeated across truncation
// levels. The level never touches the draw sequence, so every level prices
// identical driver paths (shared randomness). Requires a bounded payoff;
// unbounded payoffs are rejected because the sweep's comparison logic
// presumes a uniform bound.
// ----------------------------------------------------------------------------

struct TruncationSweepPoint {
    double truncation = 0.0;
    PriceResult price;
};

std::vector<TruncationSweepPoint> truncation_sweep(const RBergomiTheta& theta,
                                                   double x0,
                                                   const PayoffSpec& spec,
                                                   double strike,
                                                   const GridSpec& grid,
                                                   std::span<const double> levels,
                                                   std::size_t paths,
                                                   std::uint64_t seed,
                                                   VarianceSource source = VarianceSource::ExactJoint);

// ----------------------------------------------------------------------------
// Stopped-domain sweep: the same cross-correlated Heston run across a family
// of domain boxes, next to the unstopped full-truncation price on the same
// driver bundle. Scale 1 is the default box; growing scales widen the spot
// range linearly and push the variance floor down as 1/scale (never to 0).
// ----------------------------------------------------------------------------

DomainBox scaled_domain_box(double scale);

struct StoppedSweepPoint {
    double scale = 0.0;
    DomainBox box;
    PriceResult price;
};

struct StoppedSweepResult {
    PriceResult unstopped;
    std::vector<StoppedSweepPoint> points;
};

StoppedSweepResult stopped_domain_sweep(const CchTheta& theta,
                                        std::span<const double> x0,
                                        std::span<const double> v0,
                                        const PayoffSpec& spec,
                                        double strike,
                                        const GridSpec& grid,
                                        std::span<const double> scales,
                                        std::size_t paths,
                                        std::uint64_t seed);

// ----------------------------------------------------------------------------
// CSV output (full round-trip precision).
// ----------------------------------------------------------------------------

struct PriceRow {
    std::string model;
    std::uint64_t params_hash = 0;
    double strike = 0.0;
    double horizon = 0.0;
    std::size_t paths = 0;
    double price = 0.0;
    double se = 0.0;
};

PriceRow price_row(std::string model, const PriceResult& result,
                   double strike, double horizon);

void write_price_csv(std::ostream& os, const std::vector<PriceRow>& rows);
void write_truncation_sweep_csv(std::ostream& os,
                                const std::vector<TruncationSweepPoint>& points);
void write_stopped_sweep_csv(std::ostream& os, const StoppedSweepResult& result);

}  // namespace svnet
