#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svnet/relu_net.hpp"

namespace svnet {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double length() const { return hi - lo; }
};

// ============================================================================
// Certification records. Every approximator is built against a target sup
// error and ships with the audit evidence: the measured maximum deviation on
// a grid 10x denser than the construction grid, the grid sizes, and an
// empirical Lipschitz estimate.
// ============================================================================

struct ApproxSpec {
    double target_eps = 0.0;
    std::vector<Interval> domain;
    double measured_sup_error = 0.0;
    double lip_estimate = 0.0;
    std::int64_t grid_cells = 0;  // construction cells (PL) or sawtooth levels
    std::int64_t audit_points = 0;
};

std::string approx_spec_to_json(const ApproxSpec& spec);

// Error-budget ledger for composed approximators: stage i contributes
// eps_i * downstream_lip_i to the end-to-end error, and the recorded total
// must stay within the target.
struct BudgetStage {
    std::string name;
    double eps = 0.0;
    double downstream_lip = 1.0;
};

struct ErrorBudget {
    std::vector<BudgetStage> stages;

    double total() const;

    // eps_i = target / (n * downstream_lip_i), so every stage contributes the
    // same share and the ledger sums exactly to target
    static ErrorBudget equal_split(const std::vector<std::pair<std::string, double>>& stage_lips,
                                   double target);
};

struct CertifiedNet {
    ReluNetwork net;
    ApproxSpec spec;
    ErrorBudget budget;
};

// Re-runs the audit grid recorded in `spec` against a reference function and
// returns the measured sup error (certification must be reproducible).
double audit_sup_error(const ReluNetwork& net,
                       const std::function<double(const std::vector<double>&)>& reference,
                       const std::vector<Interval>& domain,
                       const std::vector<int>& points_per_axis);

// ============================================================================
// Scalar building blocks
// ============================================================================

// Piecewise-linear interpolation of f on a uniform grid over `dom`, realized
// as f(x_0) + s_0 relu(x-x_0) + sum_i (s_i - s_{i-1}) relu(x-x_i) (depth 3).
// The cell count doubles until the sup error on a 10x denser audit grid is
// certified <= eps; extrapolation is flat to the left of the domain and
// continues the last slope to the right.
CertifiedNet pl_approx_1d(const std::function<double(double)>& f, Interval dom, double eps,
                          int initial_cells = 4, int max_cells = 1 << 20);

// |net(a,b) - ab| <= eps for |a|,|b| <= bound (bound >= 1), via the sawtooth
// squaring approximator and ab = ((a+b)^2 - a^2 - b^2)/2. Exactly zero when
// either input is exactly zero: the (a+b)- and b-branches then see identical
// inputs through identical weights and cancel bit for bit.
CertifiedNet mult_net(double bound, double eps);

// Three-factor product via two chained mult_nets; the inner stage gets
// eps/(2*bound) so its error survives multiplication by the third factor,
// the outer stage gets eps/2.
CertifiedNet mult3_net(double bound, double eps);

// ============================================================================
// Cross-correlated Heston coefficient factors. Coefficient matrices of the
// enlarged-driver formulation are sparse with entries drawn from six scalar
// factor functions; each is approximated as a product chain of raw
// coordinates, affine terms and 1-d PL blocks joined by mult_nets.
// ============================================================================

enum class FactorFunctionId {
    spot_vol_common,       // x sqrt(v) rho_x            args (x, v, rho_x)
    spot_vol_idio,         // x sqrt(v) sqrt(1-rho_x^2)  args (x, v, rho_x)
    mean_reversion_drift,  // a (b - v)                  args (v, a, b)
    vol_vol_common,        // sqrt(v) nu rho_x rho_v     args (v, nu, rho_x, rho_v)
    vol_vol_asset_idio,    // sqrt(v) nu sqrt(1-rho_x^2) rho_v
    vol_vol_idio,          // sqrt(v) nu sqrt(1-rho_v^2) args (v, nu, rho_v)
    sqrt_level,            // sqrt on a positive interval
    orth_complement,       // sqrt(1 - rho^2)
    exp_variance,          // exp(sqrt(H/2) eta z - eta^2 t^{2H} / 4), banded
    product2,
    product3,
};

int cch_factor_arity(FactorFunctionId id);
double cch_factor_value(FactorFunctionId id, const std::vector<double>& args);

// Certification boxes for the CCH factor nets. The variance correlation
// spans the full [-1,1] so the vanishing endpoints of sqrt(1-rho_v^2) are
// in-domain; the asset correlation stops short of +-1 because its orthogonal
// complement is multiplied by the spot bound, and a uniform PL grid cannot
// afford the vertical tangent at that error scale.
struct CchBoxes {
    Interval x{50.0, 150.0};
    Interval v{0.01, 0.25};
    Interval a{0.5, 3.0};
    Interval b{0.01, 0.25};
    Interval nu{0.05, 0.8};
    Interval rho_x{-0.95, 0.95};
    Interval rho_v{-1.0, 1.0};
};

CertifiedNet cch_factor_net(FactorFunctionId id, double eps, const CchBoxes& boxes = {});

// Assembled coefficient networks for d assets on the shared driver layout
// (one common component, d asset components, d variance components).
//
// Input layouts:
//   sigma nets:            (x_1..x_d, v_1..v_d, theta)   in R^{7d}
//   mu_bar / sigma_bar:    (v_1..v_d, theta)             in R^{6d}
// with theta = (a_1, b_1, nu_1, rho_x_1, rho_v_1, a_2, ...) in R^{5d}.
struct CchCoefficientNets {
    int d = 1;
    double eps = 0.0;
    CchBoxes boxes;
    std::vector<ReluNetwork> sigma;      // 2d+1 nets, R^{7d} -> R^d
    ReluNetwork mu_bar;                  // R^{6d} -> R^d
    std::vector<ReluNetwork> sigma_bar;  // 2d+1 nets, R^{6d} -> R^d
    double measured_sup_error = 0.0;     // entrywise, against the exact factors
    std::int64_t total_size = 0;
};

CchCoefficientNets cch_coefficient_nets(int d, double eps, const CchBoxes& boxes = {});

// index helpers for the layouts above
int cch_sigma_input_dim(int d);      // 7d
int cch_drift_input_dim(int d);      // 6d
int cch_theta_offset(int d, int asset, int slot, bool with_x);  // slot 0..4 = a,b,nu,rho_x,rho_v

// ============================================================================
// Banded exponential variance factor
// (H, eta, z) |-> exp(clamp(sqrt(H/2) eta z - eta^2 t^{2H} / 4)), where the
// exponent is clamped to [u_lo, u_hi] before exponentiation so the network
// saturates instead of extrapolating; downstream consumers clip the variance
// to a band strictly inside [e^{u_lo}, e^{u_hi}], which makes the clamp
// invisible after clipping.
// ============================================================================

struct ExpVarBoxes {
    Interval hurst{0.05, 0.45};
    Interval eta{0.0, 2.5};
    Interval z{-10.0, 10.0};
    double u_lo = -2.3862943611198906;  // -(log 4 + 1)
    double u_hi = 2.3862943611198906;
};

double exp_var_reference(double t, const ExpVarBoxes& boxes, double hurst, double eta, double z);

CertifiedNet exp_var_net(double t, double eps, const ExpVarBoxes& boxes = {});

} // namespace svnet
