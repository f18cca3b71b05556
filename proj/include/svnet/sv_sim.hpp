#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "svnet/approx_blocks.hpp"
#include "svnet/rng.hpp"

namespace svnet {

// ============================================================================
// Euler-Maruyama simulation of the Markovian stochastic-volatility system
//
//   dX_t = sigma(X_t, V_t) dW_t,      dV_t = mu_bar(V_t) dt + sigma_bar(V_t) dW_t,
//
// with a single r-dimensional driver shared by both equations (a coefficient
// row simply has zeros in the columns it does not use). The cross-correlated
// Heston model is the special case r = 2d+1 with driver layout
// (common spot factor, d idiosyncratic spot factors, d idiosyncratic vol
// factors); its coefficient matrices are provided in closed form below.
// ============================================================================

struct GridSpec {
    double horizon = 1.0;     // T
    std::size_t steps = 1;    // N

    double dt() const { return horizon / static_cast<double>(steps); }

    // t_k = k*T/N, with the right endpoint pinned so t_N == T holds exactly
    // even when N is not a power of two
    double time_at(std::size_t k) const {
        if (k >= steps) return horizon;
        return static_cast<double>(k) * horizon / static_cast<double>(steps);
    }
};

// Evaluator handles for the coefficient functions. sigma fills a d x r
// row-major matrix from (x, v); mu_bar fills a d-vector and sigma_bar a
// d x r matrix from v alone.
struct CoefficientField {
    std::size_t d = 1;
    std::size_t r = 1;
    std::function<void(const double* x, const double* v, double* sigma)> sigma;
    std::function<void(const double* v, double* mu_bar)> mu_bar;
    std::function<void(const double* v, double* sigma_bar)> sigma_bar;

    std::size_t d_bar() const { return d > r ? d : r; }
};

// ----------------------------------------------------------------------------
// Cross-correlated Heston parameters: per asset i a mean-reversion speed a_i,
// level b_i, vol-of-vol nu_i, and the two correlation loadings rho_x_i (spot
// vs. common factor) and rho_v_i (vol vs. its asset's spot drivers).
// a_max/b_max/nu_max record the parameter box the model is allowed to range
// over (they bound constants elsewhere; simulation only needs the per-asset
// values).
struct CchTheta {
    std::size_t d = 1;
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> nu;
    std::vector<double> rho_x;
    std::vector<double> rho_v;
    double a_max = 3.0;
    double b_max = 0.25;
    double nu_max = 0.8;

    static CchTheta single(double a, double b, double nu, double rho_x, double rho_v);
    // d copies of the same asset
    static CchTheta flat(std::size_t d, double a, double b, double nu, double rho_x, double rho_v);

    // throws std::invalid_argument on inconsistent sizes, non-positive a or b,
    // negative nu, correlations outside [-1,1], or per-asset values above the
    // recorded box bounds. nu == 0 is legal (deterministic-variance limit).
    void validate() const;
};

struct FellerEntry {
    double ratio = 0.0;        // 2*a*b / nu^2
    bool paper_pass = false;   // ratio > 0
    bool classical_pass = false;  // ratio >= 1
};

// Both positivity criteria are reported per asset; neither blocks simulation.
std::vector<FellerEntry> feller_check(const CchTheta& theta);

// Simulation domain: spot in x_range^d, variance in v_range^d with
// v_range.lo > 0, so the square-root coefficients stay Lipschitz inside.
struct DomainBox {
    Interval x_range{50.0, 150.0};
    Interval v_range{0.01, 0.25};

    bool contains(std::span<const double> x, std::span<const double> v) const;
};

// Exact coefficient matrices at one point. sigma and sigma_bar are
// d x (2d+1) row-major; column 0 is the common spot factor, columns 1..d the
// idiosyncratic spot factors, columns d+1..2d the idiosyncratic vol factors.
// Negative variance is rejected with std::domain_error; choosing a truncation
// policy is the caller's job.
void cch_coefficients(const CchTheta& theta,
                      std::span<const double> x,
                      std::span<const double> v,
                      std::span<double> sigma,
                      std::span<double> mu_bar,
                      std::span<double> sigma_bar);

// The matrices above wrapped as a CoefficientField (r = 2d+1). The exact
// field throws on negative variance; the full-truncation field evaluates all
// coefficients at max(v, 0) and is defined everywhere.
CoefficientField cch_field(const CchTheta& theta);
CoefficientField cch_field_full_truncation(const CchTheta& theta);

// ----------------------------------------------------------------------------
// Driver increments. A bundle addresses per-path substreams of a counter-based
// generator, so any path can be materialised on any worker in any order.
// Increments are generated on a fixed grid (gen_grid); requesting a coarser
// resolution sums the generated increments cell by cell in index order, which
// makes the nesting identity exact: a coarse increment IS the sum of its
// refinement's increments.
class BrownianBundle {
public:
    BrownianBundle(RngKey key, GridSpec gen_grid, std::size_t drivers, std::size_t n_paths);

    const GridSpec& gen_grid() const { return gen_grid_; }
    std::size_t drivers() const { return drivers_; }
    std::size_t n_paths() const { return n_paths_; }

    // fills out (resized to steps*drivers, row-major: step-major, driver-minor)
    // with N(0, T/steps) increments for one path. steps must divide the
    // generation step count; throws std::invalid_argument otherwise.
    void fill_path(std::size_t path_index, std::size_t steps, std::vector<double>& out) const;

    // sums already-generated fine increments cell by cell, in the same order
    // fill_path uses internally, so the result is bitwise identical to
    // fill_path at the coarse resolution
    static void aggregate(std::span<const double> fine,
                          std::size_t fine_steps,
                          std::size_t coarse_steps,
                          std::size_t drivers,
                          std::vector<double>& out);

private:
    RngKey key_;
    GridSpec gen_grid_;
    std::size_t drivers_ = 1;
    std::size_t n_paths_ = 0;
};

// ----------------------------------------------------------------------------
// One simulated path on the full grid. x and v are (steps+1) x d row-major
// with slot 0 holding the initial condition. If a step produces a non-finite
// value the path halts there: the offending state is stored, later slots are
// NaN, and the diagnostic fields say where.
struct EulerPath {
    std::size_t steps = 0;
    std::size_t d = 0;
    std::vector<double> x;
    std::vector<double> v;
    bool diverged = false;
    std::size_t diverged_step = 0;

    const double* x_at(std::size_t k) const { return x.data() + k * d; }
    const double* v_at(std::size_t k) const { return v.data() + k * d; }
};

// X_{k+1} = X_k + sigma(X_k, V_k) dW_k, V_{k+1} = V_k + mu_bar(V_k) h
// + sigma_bar(V_k) dW_k, exactly as written: no positivity fixes of any kind.
// increments is steps x r row-major.
EulerPath euler_path(const CoefficientField& field,
                     std::span<const double> x0,
                     std::span<const double> v0,
                     const GridSpec& grid,
                     std::span<const double> increments);

EulerPath euler_path(const CoefficientField& field,
                     std::span<const double> x0,
                     std::span<const double> v0,
                     const GridSpec& grid,
                     const BrownianBundle& bundle,
                     std::size_t path_index);

// ----------------------------------------------------------------------------
// Negative-variance handling for the Heston dynamics. StoppedDomain freezes
// the whole state at the last grid point inside the domain box once the next
// Euler state would leave it (exit detected on grid points; the frozen path
// never leaves the box). FullTruncation evaluates coefficients at max(v, 0)
// and lets the raw state roam; it exists for diagnostics, the error theory
// lives on the stopped domain.
enum class VariancePolicy {
    StoppedDomain,
    FullTruncation,
};

struct CchPathResult {
    EulerPath path;
    bool stopped = false;
    std::size_t stop_step = 0;  // first grid index whose candidate state was outside
};

CchPathResult simulate_cch_path(const CchTheta& theta,
                                std::span<const double> x0,
                                std::span<const double> v0,
                                const GridSpec& grid,
                                const BrownianBundle& bundle,
                                std::size_t path_index,
                                VariancePolicy policy,
                                const DomainBox& box = {});

struct CchSimulation {
    std::vector<FellerEntry> feller;
    std::vector<CchPathResult> paths;
};

// Materialises every path in the bundle (memory scales with paths*steps*d;
// large Monte Carlo runs should loop over simulate_cch_path instead).
CchSimulation simulate_cch(const CchTheta& theta,
                           std::span<const double> x0,
                           std::span<const double> v0,
                           const GridSpec& grid,
                           const BrownianBundle& bundle,
                           VariancePolicy policy,
                           const DomainBox& box = {});

// ----------------------------------------------------------------------------
// Strong-error measurement: E[ max_k || path_coarse(t_k) - path_fine(t_k) ||^2 ]
// over the coarse grid, with the coarse driver the cellwise aggregation of the
// fine one (shared randomness). ref_steps must be a multiple of coarse_steps.
struct StrongErrorResult {
    std::size_t coarse_steps = 0;
    std::size_t ref_steps = 0;
    double h = 0.0;
    double mean_sq_sup = 0.0;
    double se = 0.0;
    std::size_t paths = 0;
};

StrongErrorResult strong_error(const CoefficientField& field,
                               std::span<const double> x0,
                               std::span<const double> v0,
                               double horizon,
                               std::size_t coarse_steps,
                               std::size_t ref_steps,
                               std::size_t n_paths,
                               RngKey key);

// ----------------------------------------------------------------------------
// CSV dumps. Paths: header path_id,k,t,X_1..X_d,V_1..V_d; one row per grid
// point per path. Strong-error sweeps: header N,h,err_mean,err_se. Values are
// printed with %.17g so a reader recovers the doubles bit-exactly.
void write_paths_csv(std::ostream& os, const std::vector<CchPathResult>& paths, const GridSpec& grid);
void write_paths_csv(std::ostream& os, const std::vector<EulerPath>& paths, const GridSpec& grid);
void write_strong_error_csv(std::ostream& os, const std::vector<StrongErrorResult>& rows);

} // namespace svnet
