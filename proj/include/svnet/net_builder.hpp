#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svnet/approx_blocks.hpp"
#include "svnet/pricing.hpp"
#include "svnet/relu_net.hpp"
#include "svnet/rough_vol.hpp"
#include "svnet/sv_sim.hpp"

namespace svnet {

// ============================================================================
// Realizing the Euler schemes as ReLU networks. With the randomness frozen,
// one Euler step is an increment-weighted sum of coefficient networks plus an
// identity carry; steps chain by composition with identity rails for the
// parameters; M independent copies are averaged by merging their final
// layers. Every assembly stage is audited against its size-law bound, and
// evaluating the finished network reproduces the recursion run with the same
// sub-networks up to floating-point re-association.
// ============================================================================

enum class RealizedModel {
    CrossHeston,
    RoughBergomi,
};

struct RealizationPlan {
    RealizedModel model = RealizedModel::CrossHeston;
    std::size_t copies = 1;         // Monte Carlo copies the final network averages
    GridSpec grid;
    double block_eps = 0.05;        // accuracy handed to each approximator block
    double target_eps = 0.1;        // end-to-end accuracy the realization aims for
    std::uint64_t master_seed = 1;  // root of the frozen randomness
    int assets = 1;                 // CrossHeston state dimension
    double truncation = 10.0;       // RoughBergomi sqrt-variance clamp factor D
    double driver_clamp = 3.0;      // RoughBergomi spot-driver stop level R

    // Copy i freezes the increments of bundle path i under this key. For
    // CrossHeston the bundle construction matches mc_price_cch with
    // seed == master_seed, so the frozen draws are that run's paths.
    RngKey randomness_key() const { return RngKey::from_seed(master_seed); }

    void validate() const;  // throws std::invalid_argument
};

// The selection rules tying copies, step count and block accuracy to the
// target accuracy involve constants from the error analysis that have no
// computable value. They are evaluated here with caller-supplied stand-ins
// and echoed; nothing in the plan is changed.
struct SelectionReport {
    double c_stand_in = 1.0;
    double dim_power_stand_in = 0.0;
    double lip_power = 0.5;
    double hurst_floor = 0.05;
    double d_bar = 0.0;
    double suggested_block_eps = 0.0;
    double suggested_copies = 0.0;
    double suggested_step = 0.0;
    double suggested_driver_clamp = 0.0;  // rough model only, else 0
};

SelectionReport report_selections(const RealizationPlan& plan,
                                  double c_stand_in = 1.0,
                                  double dim_power_stand_in = 0.0,
                                  double lip_power = 0.5,
                                  double hurst_floor = 0.05);

// ----------------------------------------------------------------------------
// Size audit: measured metrics of each constructed block against the size-law
// bound evaluated from the measured sizes of its components. A row passes
// when measured <= bound.
struct SizeAuditRow {
    std::string block;
    std::int64_t measured_size = 0;
    int measured_depth = 0;
    double bound_value = 0.0;
    bool pass = false;
};

struct SizeAudit {
    std::vector<SizeAuditRow> rows;

    bool all_pass() const;
    const SizeAuditRow* find(std::string_view block) const;
};

// header block,measured_size,bound_value,pass; bounds printed with %.17g
void write_size_audit_csv(std::ostream& os, const SizeAudit& audit);

// ============================================================================
// Cross-correlated Heston realization. State layout matches the coefficient
// networks: spot step input (x, v, theta) in R^{7d}, variance step input
// (v, theta) in R^{6d}, theta asset-major (a, b, nu, rho_x, rho_v).
// ============================================================================

std::vector<double> cch_theta_flat(const CchTheta& theta);

// Coefficient field whose entries evaluate the given networks with theta
// baked in, so the generic Euler driver runs exactly the scheme the step
// networks realize. Callbacks are self-contained and thread-safe.
CoefficientField net_coefficient_field(const CchCoefficientNets& coef,
                                       std::vector<double> theta_flat);

// One Euler step with frozen increments as two networks: the variance map
// v + mu_bar(v,theta) dt + sum_j sigma_bar_j(v,theta) dW_j and the spot map
// x + sum_j sigma_j(x,v,theta) dW_j. Increments enter as weights in the
// merged final layer, so a zero increment erases its branch exactly.
struct CchStepNets {
    ReluNetwork variance;  // R^{6d} -> R^d
    ReluNetwork spot;      // R^{7d} -> R^d
};

CchStepNets cch_step_nets(const CchCoefficientNets& coef,
                          std::span<const double> step_increments,  // 2d+1 values
                          double dt);

// The N-step composition for one frozen driver path: the first N-1 elements
// carry the full state (x', v', theta), the final element emits x_T alone.
struct CchPathNet {
    ReluNetwork net;  // (x, v, theta) -> x_T in R^d
    std::vector<int> element_depths;  // in application order
    std::vector<std::int64_t> element_sizes;
    std::vector<std::int64_t> element_member_sums;  // rail/step additivity bound
    std::vector<std::int64_t> spot_core_sizes;      // per step, before rails
    std::vector<std::int64_t> variance_core_sizes;  // per step except the last
};

CchPathNet cch_path_net(const CchCoefficientNets& coef,
                        std::span<const double> increments,  // steps x (2d+1)
                        const GridSpec& grid);

// ----------------------------------------------------------------------------
// The averaged pricer. CrossHeston input (x, v, theta, K); RoughBergomi
// input (x, nu, eta, rho, H, K). Copies are built in parallel from the
// frozen bundle; the averaging merge is single-threaded and the result is
// bit-identical for any worker count.
struct RealizedPricer {
    ReluNetwork net;
    SizeAudit audit;
    std::vector<std::int64_t> copy_sizes;  // chained path size per copy
    std::int64_t payoff_size = 0;
    std::int64_t strike_rail_size = 0;
};

RealizedPricer cch_pricing_net(const RealizationPlan& plan,
                               const CchCoefficientNets& coef,
                               const PayoffSpec& payoff);

// ============================================================================
// Rough Bergomi realization. The clamped sqrt-variance at each grid time is
// itself a network in (nu, eta, rho, H) once the randomness is frozen; the
// spot recursion splices a shared three-factor product block around those
// maps. rho is carried as a dead input of the variance maps so every block
// shares one parameter layout.
// ============================================================================

// Copy-independent certified blocks plus the full frozen randomness of the
// plan. Spot increments are stopped at the first grid point whose running
// driver leaves [-R, R] (the increments from that point on are zero), the
// variance randomness gives grid time t_k its own k-cell subgrid and
// normalized last-cell draw.
struct RoughBlocks {
    RealizationPlan plan;
    RBergomiTheta box;  // parameter boxes; point values are not used
    Interval rho_box{-0.99, 0.0};
    Interval z_box{-10.0, 10.0};
    double triple_radius = 0.0;  // certified box of the product block

    CertifiedNet sqrt_level;  // nu -> sqrt(nu)
    CertifiedNet orth;        // rho -> sqrt(1 - rho^2)
    CertifiedNet vmult;       // two-factor product joining the level and clamp branches
    CertifiedNet triple;      // (a, b, c) -> abc, a up to triple_radius, b and c small
    std::vector<CertifiedNet> exp_factor;            // per grid index k = 0..N-1
    std::vector<HybridWeightNets> volterra_weights;  // per k; entry 0 unused

    std::vector<std::vector<double>> variance_db;  // [copy] subgrids for k=1.. packed
    std::vector<std::vector<double>> variance_z;   // [copy][k-1]
    std::vector<std::vector<double>> spot_db;      // [copy] N x 2 row-major, stopped
    std::vector<std::size_t> stop_step;            // first stopped grid index, N+1 = none

    std::span<const double> variance_subgrid(std::size_t copy, std::size_t k) const;
    double variance_z_at(std::size_t copy, std::size_t k) const;
};

RoughBlocks rough_blocks(const RealizationPlan& plan, const RBergomiTheta& box = {});

// Clamped sqrt-variance map at grid time t_k with frozen randomness:
// product(sqrt block(nu), clamp(exp block(H, eta, volterra(H)))) where the
// clamp is exact and volterra is the frozen-draw kernel sum as a network
// in H. budget_bound certifies |net - reference formula| from the measured
// block errors; output magnitude stays below output_ceiling by construction.
struct RoughVarianceNet {
    ReluNetwork net;       // (nu, eta, rho, H) -> clamped sqrt-variance
    ReluNetwork volterra;  // H -> frozen Volterra value at t_k
    double t = 0.0;
    double budget_bound = 0.0;
    ErrorBudget budget;
    double output_ceiling = 0.0;
    double size_bound = 0.0;  // composition-law cascade over the measured parts
};

RoughVarianceNet rbergomi_variance_net(const RoughBlocks& blocks, std::size_t k,
                                       std::span<const double> db, double z);

// The formula the variance net approximates, with the net's own frozen
// Volterra value plugged in.
double rough_variance_reference(const RoughBlocks& blocks, const RoughVarianceNet& vnet,
                                double nu, double eta, double hurst);

// One copy's spot recursion over the whole grid. Elements before the last
// carry (x', nu, eta, rho, H); the last emits x_T.
struct RoughPathNet {
    ReluNetwork net;  // (x, nu, eta, rho, H) -> x_T
    std::vector<RoughVarianceNet> variance;  // per step k = 0..N-1
    std::vector<int> element_depths;
    std::vector<std::int64_t> element_sizes;
    std::vector<std::int64_t> step_core_sizes;
    std::vector<std::int64_t> step_member_sums;  // branch additivity bound
    std::vector<double> spot_db;  // the frozen stopped increments used, N x 2
};

// increments: N x 2 row-major (already stopped); the copy overload uses the
// blocks' stored randomness for that copy.
RoughPathNet rough_path_net(const RoughBlocks& blocks, std::span<const double> increments,
                            std::size_t copy_for_variance);
RoughPathNet rough_path_net(const RoughBlocks& blocks, std::size_t copy);

// Step recursion evaluating the same blocks the path net splices together.
double rough_net_recursion(const RoughBlocks& blocks, const RoughPathNet& path,
                           double x0, double nu, double eta, double rho, double hurst);

RealizedPricer rbergomi_pricing_net(const RoughBlocks& blocks, const PayoffSpec& payoff);

// ============================================================================
// Verified realization. The accuracy statement is existential in the frozen
// randomness: a draw achieving the target exists, but any particular draw
// may miss it. Build, measure the L2(mu) error of the pricer against the
// caller's reference, and resample the randomness with a fresh seed until
// the target is met or the retry cap (8) is exhausted.
// ============================================================================

struct VerifiedRealization {
    RealizedPricer pricer;
    L2Result l2;
    int attempts = 0;
    std::uint64_t seed_used = 0;
    bool met_target = false;
};

using PriceReference = std::function<double(const MuSample&)>;

// Coordinate embedding used when the generic measure drives the rough model:
// every mu coordinate is mapped affinely onto the rough parameter box
// (x -> x, v -> nu, theta nu -> eta, theta rho_x -> rho, theta a -> hurst,
// first strike -> strike), so the pushforward is again a uniform product.
struct RoughMuPoint {
    double x = 0.0;
    double nu = 0.0;
    double eta = 0.0;
    double rho = 0.0;
    double hurst = 0.0;
    double strike = 0.0;
};

RoughMuPoint rough_mu_point(const MuSample& sample, const MeasureMu& mu,
                            const Interval& rho_box, const RBergomiTheta& box);

VerifiedRealization verified_cch_pricing_net(RealizationPlan plan,
                                             const CchCoefficientNets& coef,
                                             const PayoffSpec& payoff,
                                             const MeasureMu& mu,
                                             const PriceReference& reference,
                                             std::size_t samples,
                                             RngKey sample_key);

VerifiedRealization verified_rbergomi_pricing_net(RealizationPlan plan,
                                                  const RBergomiTheta& box,
                                                  const PayoffSpec& payoff,
                                                  const MeasureMu& mu,
                                                  const PriceReference& reference,
                                                  std::size_t samples,
                                                  RngKey sample_key);

}  // namespace svnet
