#include "doctest.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "svnet/pricing.hpp"
#include "svnet/rng.hpp"

using namespace svnet;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct EnvGuard {
    std::string name;
    std::string saved;
    bool had = false;

    explicit EnvGuard(const char* var) : name(var) {
        if (const char* cur = std::getenv(var)) {
            saved = cur;
            had = true;
        }
    }
    ~EnvGuard() {
        if (had)
            ::setenv(name.c_str(), saved.c_str(), 1);
        else
            ::unsetenv(name.c_str());
    }
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

PayoffSpec call_spec() { return PayoffSpec{}; }

PayoffSpec put_spec() {
    PayoffSpec spec;
    spec.kind = PayoffKind::Put;
    return spec;
}

PayoffSpec capped_spec(double cap) {
    PayoffSpec spec;
    spec.kind = PayoffKind::CappedCall;
    spec.cap = cap;
    return spec;
}

PayoffSpec basket_spec(std::vector<double> weights) {
    PayoffSpec spec;
    spec.kind = PayoffKind::BasketCall;
    spec.d = weights.size();
    spec.weights = std::move(weights);
    return spec;
}

}  // namespace

TEST_SUITE("pricing") {

TEST_CASE("payoff specs validate and evaluate the textbook values") {
    const double x_call[] = {110.0};
    CHECK(payoff_value(call_spec(), x_call, 100.0) == 10.0);
    const double x_put[] = {90.0};
    CHECK(payoff_value(put_spec(), x_put, 100.0) == 10.0);
    const double x_deep[] = {1000.0};
    CHECK(payoff_value(capped_spec(50.0), x_deep, 100.0) == 50.0);
    CHECK(payoff_value(capped_spec(50.0), x_call, 100.0) == 10.0);
    CHECK(payoff_value(call_spec(), x_put, 100.0) == 0.0);

    const double x_basket[] = {120.0, 80.0};
    CHECK(payoff_value(basket_spec({0.6, 0.4}), x_basket, 100.0) ==
          doctest::Approx(4.0).epsilon(1e-12));

    CHECK_FALSE(call_spec().bounded());
    CHECK_FALSE(basket_spec({1.0}).bounded());
    CHECK(put_spec().bounded());
    CHECK(capped_spec(5.0).bounded());

    auto rejects = [](PayoffSpec spec) {
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    };
    PayoffSpec zero_d;
    zero_d.d = 0;
    rejects(zero_d);
    PayoffSpec wide_call;
    wide_call.d = 2;
    rejects(wide_call);
    PayoffSpec wide_put = put_spec();
    wide_put.d = 3;
    rejects(wide_put);
    PayoffSpec call_with_weights;
    call_with_weights.weights = {1.0};
    rejects(call_with_weights);
    PayoffSpec basket_missing;
    basket_missing.kind = PayoffKind::BasketCall;
    basket_missing.d = 2;
    rejects(basket_missing);
    PayoffSpec basket_short = basket_spec({0.5, 0.5});
    basket_short.d = 3;
    rejects(basket_short);
    PayoffSpec basket_nan = basket_spec({0.5, kNan});
    rejects(basket_nan);
    rejects(capped_spec(0.0));
    rejects(capped_spec(-1.0));
    rejects(capped_spec(kNan));
    PayoffSpec put_with_cap = put_spec();
    put_with_cap.cap = 1.0;
    rejects(put_with_cap);

    const double x_pair[] = {100.0, 100.0};
    CHECK_THROWS_AS(payoff_value(call_spec(), x_pair, 100.0), std::invalid_argument);
}

TEST_CASE("payoff networks realize the scalar payoffs") {
    const ReluNetwork call = payoff_net(call_spec());
    const ReluNetwork put = payoff_net(put_spec());
    const ReluNetwork capped = payoff_net(capped_spec(50.0));
    const ReluNetwork basket = payoff_net(basket_spec({0.6, 0.4}));

    const NetMetrics call_m = metrics(call);
    CHECK(call.input_dim() == 2);
    CHECK(call.output_dim() == 1);
    CHECK(call_m.depth == 3);
    CHECK(call_m.size == 3);
    const NetMetrics capped_m = metrics(capped);
    CHECK(capped_m.depth == 3);
    CHECK(capped_m.size == 7);
    CHECK(basket.input_dim() == 3);

    CHECK(call.evaluate({110.0, 100.0})[0] == 10.0);
    CHECK(put.evaluate({90.0, 100.0})[0] == 10.0);
    CHECK(capped.evaluate({1000.0, 100.0})[0] == 50.0);
    CHECK(capped.evaluate({110.0, 100.0})[0] == 10.0);
    CHECK(basket.evaluate({120.0, 80.0, 100.0})[0] == doctest::Approx(4.0).epsilon(1e-12));

    RngStream stream = RngKey::from_seed(2024).stream(0);
    for (int trial = 0; trial < 200; ++trial) {
        const double x = 1.0 + 199.0 * stream.uniform();
        const double k = 50.0 + 100.0 * stream.uniform();
        const double spot[] = {x};
        // the hinge rows evaluate literally x - K, so these two agree bitwise
        CHECK(call.evaluate({x, k})[0] == payoff_value(call_spec(), spot, k));
        CHECK(put.evaluate({x, k})[0] == payoff_value(put_spec(), spot, k));
        const double capped_net = capped.evaluate({x, k})[0];
        const double capped_val = payoff_value(capped_spec(50.0), spot, k);
        CHECK(capped_net == doctest::Approx(capped_val).epsilon(1e-12));

        const double y = 1.0 + 199.0 * stream.uniform();
        const double pair[] = {x, y};
        const double basket_net = basket.evaluate({x, y, k})[0];
        const double basket_val = payoff_value(basket_spec({0.6, 0.4}), pair, k);
        CHECK(basket_net == doctest::Approx(basket_val).epsilon(1e-12));
    }

    // joint 1-Lipschitz bound in (x, K) for the plain call and put
    for (int trial = 0; trial < 200; ++trial) {
        const double x1 = 1.0 + 199.0 * stream.uniform();
        const double k1 = 50.0 + 100.0 * stream.uniform();
        const double x2 = 1.0 + 199.0 * stream.uniform();
        const double k2 = 50.0 + 100.0 * stream.uniform();
        const double step = std::abs(x1 - x2) + std::abs(k1 - k2);
        const double call_gap = std::abs(call.evaluate({x1, k1})[0] - call.evaluate({x2, k2})[0]);
        const double put_gap = std::abs(put.evaluate({x1, k1})[0] - put.evaluate({x2, k2})[0]);
        CHECK(call_gap <= step * (1.0 + 1e-12) + 1e-12);
        CHECK(put_gap <= step * (1.0 + 1e-12) + 1e-12);
    }
}

TEST_CASE("measure mu closed-form moments and sampling") {
    const MeasureMu mu;
    CHECK_NOTHROW(mu.validate());

    // independently computed: 1 + 2*(32500/3) + 2*(0.0651/3) + 10.75/3
    //                           + 0.6825/3 + 2*0.27
    CHECK(mu.moment_integral(1) == doctest::Approx(21672.0609).epsilon(1e-13));
    CHECK(mu.moment_integral(3) == doctest::Approx(43347.516033333333).epsilon(1e-13));
    CHECK(mu.moment_check(1));
    CHECK(mu.moment_check(2));
    CHECK(mu.moment_check(5));
    CHECK(mu.moment_check(20));

    MeasureMu tight = mu;
    tight.moment_c = 1.0;
    CHECK_FALSE(tight.moment_check(1));

    auto rejects = [](MeasureMu bad) {
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    };
    MeasureMu zero_v = mu;
    zero_v.v_box.lo = 0.0;
    rejects(zero_v);
    MeasureMu zero_a = mu;
    zero_a.a_box.lo = 0.0;
    rejects(zero_a);
    MeasureMu wide_rho = mu;
    wide_rho.rho_x_box.lo = -1.2;
    rejects(wide_rho);
    MeasureMu neg_nu = mu;
    neg_nu.nu_box.lo = -0.1;
    rejects(neg_nu);
    MeasureMu no_strike = mu;
    no_strike.n_strikes = 0;
    rejects(no_strike);
    MeasureMu flat_k = mu;
    flat_k.k_box = Interval{100.0, 100.0};
    rejects(flat_k);
    MeasureMu bad_c = mu;
    bad_c.moment_c = 0.0;
    rejects(bad_c);
    MeasureMu bad_p = mu;
    bad_p.moment_p = -1.0;
    rejects(bad_p);

    const std::size_t d = 3;
    RngKey key = RngKey::from_seed(505);
    auto inside = [](double v, const Interval& box) { return v > box.lo && v <= box.hi; };
    for (std::size_t i = 0; i < 500; ++i) {
        RngStream stream = key.stream(i);
        const MuSample s = sample_mu(mu, d, stream);
        REQUIRE(s.x.size() == d);
        REQUIRE(s.v.size() == d);
        REQUIRE(s.k.size() == 1);
        CHECK_NOTHROW(s.theta.validate());
        CHECK(s.theta.a_max == mu.a_box.hi);
        for (std::size_t j = 0; j < d; ++j) {
            CHECK(inside(s.x[j], mu.x_box));
            CHECK(inside(s.v[j], mu.v_box));
            CHECK(inside(s.theta.a[j], mu.a_box));
            CHECK(inside(s.theta.b[j], mu.b_box));
            CHECK(inside(s.theta.nu[j], mu.nu_box));
            CHECK(inside(s.theta.rho_x[j], mu.rho_x_box));
            CHECK(inside(s.theta.rho_v[j], mu.rho_v_box));
        }
        CHECK(inside(s.k[0], mu.k_box));
    }

    RngStream once = key.stream(7);
    RngStream again = key.stream(7);
    const MuSample first = sample_mu(mu, d, once);
    const MuSample second = sample_mu(mu, d, again);
    CHECK(first.x == second.x);
    CHECK(first.v == second.v);
    CHECK(first.theta.nu == second.theta.nu);
    CHECK(first.k == second.k);

    RngStream bad_stream = key.stream(8);
    CHECK_THROWS_AS(sample_mu(mu, 0, bad_stream), std::invalid_argument);
}

TEST_CASE("measure mu sample moments match the closed form") {
    const MeasureMu mu;
    const std::size_t d = 2;
    const std::size_t n = 150000;
    RngKey key = RngKey::from_seed(8181);

    double sum = 0.0;
    double sum_sq = 0.0;
    RngStream stream = key.stream(0);
    for (std::size_t i = 0; i < n; ++i) {
        const MuSample s = sample_mu(mu, d, stream);
        double g = 1.0;
        for (double x : s.x) g += x * x;
        for (double v : s.v) g += v * v;
        for (double a : s.theta.a) g += a * a;
        for (double b : s.theta.b) g += b * b;
        for (double nu : s.theta.nu) g += nu * nu;
        for (double r : s.theta.rho_x) g += r * r;
        for (double r : s.theta.rho_v) g += r * r;
        for (double k : s.k) g += k * k;
        sum += g;
        sum_sq += g * g;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = (sum_sq - static_cast<double>(n) * mean * mean) /
                       (static_cast<double>(n) - 1.0);
    const double se = std::sqrt(var / static_cast<double>(n));
    CHECK(se > 0.0);
    CHECK(std::abs(mean - mu.moment_integral(d)) <= 3.0 * se);
}

TEST_CASE("black-scholes and heston characteristic-function reference") {
    const double bs = black_scholes_call(100.0, 100.0, 0.2, 1.0);
    CHECK(bs == doctest::Approx(7.965567455406).epsilon(1e-10));
    CHECK(black_scholes_call(110.0, 100.0, 0.0, 1.0) == 10.0);
    CHECK(black_scholes_call(90.0, 100.0, 0.2, 0.0) == 0.0);

    const double heston = heston_cf_price(2.0, 0.04, 0.3, -0.7, 0.04, 100.0, 100.0, 1.0);
    CHECK(std::abs(heston - 7.6157469178665) <= 5e-9);

    // vol-of-vol -> 0 with v0 = b pins the variance at v0, i.e. Black-Scholes
    const double near_bs = heston_cf_price(2.0, 0.04, 1e-4, -0.7, 0.04, 100.0, 100.0, 1.0);
    CHECK(std::abs(near_bs - bs) <= 1e-3);

    for (double strike : {80.0, 100.0, 110.0}) {
        const double c = heston_cf_price(2.0, 0.04, 0.3, -0.7, 0.04, 100.0, strike, 1.0);
        const double p = heston_cf_put(2.0, 0.04, 0.3, -0.7, 0.04, 100.0, strike, 1.0);
        CHECK(std::abs(c - p - (100.0 - strike)) <= 1e-8);
        CHECK(c > std::max(100.0 - strike, 0.0));
        CHECK(c < 100.0);
    }

    const double c90 = heston_cf_price(2.0, 0.04, 0.3, -0.7, 0.04, 100.0, 90.0, 1.0);
    const double c110 = heston_cf_price(2.0, 0.04, 0.3, -0.7, 0.04, 100.0, 110.0, 1.0);
    CHECK(c90 > heston);
    CHECK(heston > c110);

    const double rich = heston_cf_price(2.0, 0.04, 0.3, -0.7, 0.09, 100.0, 100.0, 1.0);
    CHECK(rich > heston);

    auto rejects = [](double a, double b, double nu, double rho, double v0, double x0,
                      double k, double t) {
        CHECK_THROWS_AS(heston_cf_price(a, b, nu, rho, v0, x0, k, t), std::invalid_argument);
    };
    rejects(2.0, 0.04, 0.0, -0.7, 0.04, 100.0, 100.0, 1.0);
    rejects(2.0, 0.04, 0.3, -0.7, 0.04, 100.0, 100.0, 0.0);
    rejects(2.0, 0.04, 0.3, -0.7, 0.04, 100.0, 100.0, -1.0);
    rejects(2.0, 0.04, 0.3, -0.7, -0.01, 100.0, 100.0, 1.0);
    rejects(2.0, 0.04, 0.3, -0.7, 0.04, 0.0, 100.0, 1.0);
    rejects(2.0, 0.04, 0.3, -0.7, 0.04, 100.0, 0.0, 1.0);
    rejects(2.0, 0.04, 0.3, 1.5, 0.04, 100.0, 100.0, 1.0);
    rejects(0.0, 0.04, 0.3, -0.7, 0.04, 100.0, 100.0, 1.0);
    rejects(2.0, kNan, 0.3, -0.7, 0.04, 100.0, 100.0, 1.0);

    CHECK_THROWS_AS(black_scholes_call(0.0, 100.0, 0.2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(black_scholes_call(100.0, 100.0, -0.2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(black_scholes_call(100.0, kInf, 0.2, 1.0), std::invalid_argument);
}

TEST_CASE("cch pricer hits black-scholes when vol-of-vol vanishes") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.0, -0.3, 0.5);
    const double x0[] = {100.0};
    const double v0[] = {0.04};
    const GridSpec grid{1.0, 64};

    const PriceResult r = mc_price_cch(theta, x0, v0, call_spec(), 100.0, grid, 20000, 4242,
                                       VariancePolicy::FullTruncation);
    CHECK(r.paths == 20000);
    CHECK(r.diverged == 0);
    CHECK(r.stopped == 0);
    CHECK(r.se > 0.0);
    CHECK(r.se < 0.2);
    CHECK(std::abs(r.estimate - 7.965567455406) <= 3.0 * r.se);
    CHECK(r.seed == 4242);

    // deterministic variance at machine scale: the payoff collapses to x0 - K
    const CchTheta flat = CchTheta::single(2.0, 1e-12, 0.0, 0.0, 0.0);
    const double x_hi[] = {110.0};
    const double v_tiny[] = {1e-12};
    const PriceResult frozen = mc_price_cch(flat, x_hi, v_tiny, call_spec(), 100.0, grid, 2000,
                                            99, VariancePolicy::FullTruncation);
    CHECK(std::abs(frozen.estimate - 10.0) <= 1e-3);
    CHECK(frozen.se <= 1e-4);

    CHECK_THROWS_AS(mc_price_cch(theta, x0, v0, call_spec(), 100.0, grid, 1, 1,
                                 VariancePolicy::FullTruncation),
                    std::invalid_argument);
    CHECK_THROWS_AS(mc_price_cch(theta, x0, v0, basket_spec({0.5, 0.5}), 100.0, grid, 100, 1,
                                 VariancePolicy::FullTruncation),
                    std::invalid_argument);
    const double x_pair[] = {100.0, 100.0};
    CHECK_THROWS_AS(mc_price_cch(theta, x_pair, v0, call_spec(), 100.0, grid, 100, 1,
                                 VariancePolicy::FullTruncation),
                    std::invalid_argument);
    CHECK_THROWS_AS(mc_price_cch(theta, x0, v0, call_spec(), kNan, grid, 100, 1,
                                 VariancePolicy::FullTruncation),
                    std::invalid_argument);
}

TEST_CASE("cch estimate is bit-identical across worker counts") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.3, -0.4, -0.6);
    const double x0[] = {100.0};
    const double v0[] = {0.04};
    const GridSpec grid{1.0, 16};

    EnvGuard guard("SVNET_THREADS");
    ::setenv("SVNET_THREADS", "1", 1);
    const PriceResult serial = mc_price_cch(theta, x0, v0, call_spec(), 100.0, grid, 9000, 77,
                                            VariancePolicy::StoppedDomain);
    ::setenv("SVNET_THREADS", "7", 1);
    const PriceResult wide = mc_price_cch(theta, x0, v0, call_spec(), 100.0, grid, 9000, 77,
                                          VariancePolicy::StoppedDomain);
    CHECK(serial.estimate == wide.estimate);
    CHECK(serial.se == wide.se);
    CHECK(serial.stopped == wide.stopped);
    CHECK(serial.config_hash == wide.config_hash);
}

TEST_CASE("cch pricer tracks the heston reference") {
    // with one asset the scheme is classical Heston with spot-vol correlation
    // rho_v, whatever the common-factor loading rho_x is
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.3, 0.4, -0.7);
    const double x0[] = {100.0};
    const double v0[] = {0.04};
    const GridSpec grid{1.0, 128};

    const PriceResult r = mc_price_cch(theta, x0, v0, call_spec(), 100.0, grid, 30000, 99,
                                       VariancePolicy::FullTruncation);
    CHECK(r.diverged == 0);
    // 0.06 covers the O(h) Euler bias left at 128 steps
    CHECK(std::abs(r.estimate - 7.6157469178665) <= 3.0 * r.se + 0.06);
}

TEST_CASE("cch estimates are consistent across seeds") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.25, -0.3, -0.6);
    const double x0[] = {100.0};
    const double v0[] = {0.04};
    const GridSpec grid{1.0, 8};

    const PriceResult ref = mc_price_cch(theta, x0, v0, call_spec(), 100.0, grid, 200000, 10001,
                                         VariancePolicy::FullTruncation);

    double pooled = 0.0;
    double pooled_var = 0.0;
    double z_sq = 0.0;
    double z_max = 0.0;
    const int seeds = 50;
    for (int s = 1; s <= seeds; ++s) {
        const PriceResult r = mc_price_cch(theta, x0, v0, call_spec(), 100.0, grid, 2000,
                                           static_cast<std::uint64_t>(s),
                                           VariancePolicy::FullTruncation);
        pooled += r.estimate;
        pooled_var += r.se * r.se;
        const double z = (r.estimate - ref.estimate) /
                         std::sqrt(r.se * r.se + ref.se * ref.se);
        z_sq += z * z;
        z_max = std::max(z_max, std::abs(z));
    }
    pooled /= seeds;
    const double pooled_se = std::sqrt(pooled_var) / seeds;

    CHECK(std::abs(pooled - ref.estimate) <=
          4.0 * std::sqrt(pooled_se * pooled_se + ref.se * ref.se));
    CHECK(z_sq / seeds > 0.35);
    CHECK(z_sq / seeds < 2.0);
    CHECK(z_max <= 5.0);
}

TEST_CASE("call prices are exactly monotone in strike on shared paths") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.3, -0.4, -0.6);
    const double x0[] = {100.0};
    const double v0[] = {0.04};
    const GridSpec grid{1.0, 16};

    const double strikes[] = {80.0, 90.0, 100.0, 110.0, 120.0};
    std::vector<PriceResult> calls;
    std::vector<PriceResult> capped;
    for (double k : strikes) {
        calls.push_back(mc_price_cch(theta, x0, v0, call_spec(), k, grid, 1500, 7,
                                     VariancePolicy::StoppedDomain));
        capped.push_back(mc_price_cch(theta, x0, v0, capped_spec(15.0), k, grid, 1500, 7,
                                      VariancePolicy::StoppedDomain));
    }
    // same seed means the same frozen paths, so the per-path payoffs dominate
    // pointwise and the sequential sums inherit the order with no MC slack
    for (std::size_t i = 0; i + 1 < calls.size(); ++i) {
        CHECK(calls[i].estimate >= calls[i + 1].estimate);
        CHECK(capped[i].estimate >= capped[i + 1].estimate);
    }
    CHECK(calls.front().estimate > calls.back().estimate);
    for (const PriceResult& r : capped) CHECK(r.estimate <= 15.0 * (1.0 + 1e-12));
}

TEST_CASE("driftless cch parity ties call minus put to spot minus strike") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.3, -0.4, -0.6);
    const double x0[] = {100.0};
    const double v0[] = {0.04};
    const GridSpec grid{1.0, 32};

    const PriceResult c = mc_price_cch(theta, x0, v0, call_spec(), 90.0, grid, 20000, 11,
                                       VariancePolicy::FullTruncation);
    const PriceResult p = mc_price_cch(theta, x0, v0, put_spec(), 90.0, grid, 20000, 11,
                                       VariancePolicy::FullTruncation);
    CHECK(std::abs(c.estimate - p.estimate - (100.0 - 90.0)) <= 3.0 * (c.se + p.se));
}

TEST_CASE("l2 mu error separates pricing routes") {
    const MeasureMu mu;
    const RngKey key = RngKey::from_seed(606);
    auto reference = [](const MuSample& s) { return 0.05 * s.x[0] + 0.02 * s.k[0]; };

    const L2Result same = l2_mu_error(reference, reference, mu, 1, 500, key);
    CHECK(same.rmse == 0.0);
    CHECK(same.se == 0.0);
    CHECK(same.samples == 500);

    auto shifted = [&reference](const MuSample& s) { return reference(s) + 0.37; };
    const L2Result offset = l2_mu_error(shifted, reference, mu, 1, 500, key);
    CHECK(offset.rmse == doctest::Approx(0.37).epsilon(1e-12));
    CHECK(offset.se <= 1e-8);

    auto wavy = [&reference](const MuSample& s) { return reference(s) + 0.1 * std::sin(s.x[0]); };
    const L2Result wave = l2_mu_error(wavy, reference, mu, 1, 20000, key);
    // 0.1 * sqrt(E sin^2) with E sin^2 = 0.50123 over x ~ U[50, 150]
    CHECK(wave.se > 0.0);
    CHECK(std::abs(wave.rmse - 0.070798) <= 4.0 * wave.se + 1e-3);

    const L2Result rerun = l2_mu_error(wavy, reference, mu, 1, 20000, key);
    CHECK(rerun.rmse == wave.rmse);

    {
        EnvGuard guard("SVNET_THREADS");
        ::setenv("SVNET_THREADS", "1", 1);
        const L2Result serial = l2_mu_error(wavy, reference, mu, 1, 5000, key);
        ::setenv("SVNET_THREADS", "5", 1);
        const L2Result wide = l2_mu_error(wavy, reference, mu, 1, 5000, key);
        CHECK(serial.rmse == wide.rmse);
        CHECK(serial.se == wide.se);
    }

    CHECK_THROWS_AS(l2_mu_error(shifted, reference, mu, 1, 99, key), std::invalid_argument);
    CHECK_THROWS_AS(l2_mu_error(shifted, reference, mu, 0, 500, key), std::invalid_argument);
    CHECK_THROWS_AS(l2_mu_error(std::function<double(const MuSample&)>{}, reference, mu, 1, 500,
                                key),
                    std::invalid_argument);
}

TEST_CASE("rbergomi pricer is deterministic and martingale-consistent") {
    RBergomiTheta theta;
    theta.nu = 0.04;
    theta.eta = 1.2;
    theta.rho = -0.5;
    theta.hurst = 0.2;
    const GridSpec grid{1.0, 8};

    const PriceResult c = mc_price_rbergomi(theta, 100.0, call_spec(), 100.0, grid, 4000, 21,
                                            VarianceSource::Hybrid);
    const PriceResult p = mc_price_rbergomi(theta, 100.0, put_spec(), 100.0, grid, 4000, 21,
                                            VarianceSource::Hybrid);
    CHECK(c.diverged == 0);
    CHECK(p.estimate >= 0.0);
    CHECK(p.estimate <= 100.0 * (1.0 + 1e-12));
    // the scheme's spot is a martingale exactly, clamps included
    CHECK(std::abs(c.estimate - p.estimate) <= 3.0 * (c.se + p.se));

    const PriceResult joint = mc_price_rbergomi(theta, 100.0, put_spec(), 100.0, grid, 600, 22,
                                                VarianceSource::ExactJoint);
    CHECK(std::isfinite(joint.estimate));
    CHECK(joint.se > 0.0);

    {
        EnvGuard guard("SVNET_THREADS");
        ::setenv("SVNET_THREADS", "1", 1);
        const PriceResult serial = mc_price_rbergomi(theta, 100.0, put_spec(), 100.0, grid, 5000,
                                                     23, VarianceSource::Hybrid);
        ::setenv("SVNET_THREADS", "7", 1);
        const PriceResult wide = mc_price_rbergomi(theta, 100.0, put_spec(), 100.0, grid, 5000,
                                                   23, VarianceSource::Hybrid);
        CHECK(serial.estimate == wide.estimate);
        CHECK(serial.se == wide.se);
    }

    CHECK_THROWS_AS(mc_price_rbergomi(theta, 100.0, basket_spec({0.5, 0.5}), 100.0, grid, 100, 1,
                                      VarianceSource::Hybrid),
                    std::invalid_argument);
    CHECK_THROWS_AS(mc_price_rbergomi(theta, 100.0, call_spec(), 100.0, grid, 1, 1,
                                      VarianceSource::Hybrid),
                    std::invalid_argument);
    CHECK_THROWS_AS(mc_price_rbergomi(theta, kNan, call_spec(), 100.0, grid, 100, 1,
                                      VarianceSource::Hybrid),
                    std::invalid_argument);
}

TEST_CASE("truncation sweep shares randomness across levels") {
    RBergomiTheta theta;
    theta.nu = 0.04;
    theta.eta = 0.5;
    theta.rho = -0.3;
    theta.hurst = 0.1;
    const GridSpec grid{1.0, 16};
    const double levels[] = {2.0, 5.0, 20.0, 100.0};

    const auto sweep = truncation_sweep(theta, 100.0, capped_spec(30.0), 100.0, grid, levels,
                                        2500, 31, VarianceSource::ExactJoint);
    REQUIRE(sweep.size() == 4);
    for (const auto& point : sweep) {
        CHECK(point.price.paths == 2500);
        CHECK(point.price.seed == 31);
        CHECK(point.price.estimate >= 0.0);
        CHECK(point.price.estimate <= 30.0 * (1.0 + 1e-12));
    }

    // no exponent path reaches log(20) here, so the 20 and 100 clamps never
    // engage and the shared draws make the two prices bit-identical
    CHECK(sweep[2].price.estimate == sweep[3].price.estimate);
    CHECK(sweep[2].price.se == sweep[3].price.se);
    // the level-2 clamp does engage
    const double d2 = std::abs(sweep[0].price.estimate - sweep[3].price.estimate);
    const double d20 = std::abs(sweep[2].price.estimate - sweep[3].price.estimate);
    CHECK(d2 > 0.0);
    CHECK(d20 <= d2 + 2.0 * (sweep[2].price.se + sweep[0].price.se + 2.0 * sweep[3].price.se));

    CHECK_THROWS_AS(truncation_sweep(theta, 100.0, call_spec(), 100.0, grid, levels, 2500, 31,
                                     VarianceSource::ExactJoint),
                    std::invalid_argument);
    CHECK_THROWS_AS(truncation_sweep(theta, 100.0, basket_spec({1.0}), 100.0, grid, levels, 2500,
                                     31, VarianceSource::ExactJoint),
                    std::invalid_argument);
    CHECK_THROWS_AS(truncation_sweep(theta, 100.0, capped_spec(30.0), 100.0, grid, {}, 2500, 31,
                                     VarianceSource::ExactJoint),
                    std::invalid_argument);
    const double bad_levels[] = {0.5};
    CHECK_THROWS_AS(truncation_sweep(theta, 100.0, capped_spec(30.0), 100.0, grid, bad_levels,
                                     2500, 31, VarianceSource::ExactJoint),
                    std::invalid_argument);

    const double one_level[] = {5.0};
    CHECK_NOTHROW(truncation_sweep(theta, 100.0, put_spec(), 100.0, grid, one_level, 200, 31,
                                   VarianceSource::ExactJoint));
}

TEST_CASE("stopped domain sweep stabilizes toward the unstopped price") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.3, -0.4, -0.6);
    const double x0[] = {100.0};
    const double v0[] = {0.04};
    const GridSpec grid{1.0, 16};
    const double scales[] = {0.3, 1.0, 2.0, 8.0};

    const StoppedSweepResult sweep =
        stopped_domain_sweep(theta, x0, v0, call_spec(), 90.0, grid, scales, 3000, 13);
    REQUIRE(sweep.points.size() == 4);
    CHECK(sweep.unstopped.stopped == 0);

    // a box barely containing the start freezes nearly every path right away,
    // so the price collapses to the payoff at the initial state
    CHECK(sweep.points[0].price.stopped >= 2400);
    CHECK(std::abs(sweep.points[0].price.estimate - 10.0) <= 1.5);

    // nested boxes: any path that leaves the bigger box left the smaller one
    for (std::size_t i = 0; i + 1 < sweep.points.size(); ++i)
        CHECK(sweep.points[i + 1].price.stopped <= sweep.points[i].price.stopped);

    for (std::size_t i = 0; i + 1 < sweep.points.size(); ++i) {
        const double gap_i = std::abs(sweep.points[i].price.estimate - sweep.unstopped.estimate);
        const double gap_next =
            std::abs(sweep.points[i + 1].price.estimate - sweep.unstopped.estimate);
        const double band = 2.0 * (sweep.points[i].price.se + sweep.points[i + 1].price.se +
                                   2.0 * sweep.unstopped.se);
        CHECK(gap_next <= gap_i + band);
    }

    const StoppedSweepResult again =
        stopped_domain_sweep(theta, x0, v0, call_spec(), 90.0, grid, scales, 3000, 13);
    CHECK(again.unstopped.estimate == sweep.unstopped.estimate);
    CHECK(again.points[2].price.estimate == sweep.points[2].price.estimate);

    // a gentle model never reaches the scale-8 walls: with zero stops the
    // stopped run IS the unstopped run, bit for bit
    const CchTheta gentle = CchTheta::single(3.0, 0.04, 0.05, -0.3, -0.5);
    const GridSpec coarse{1.0, 8};
    const double wide[] = {8.0};
    const StoppedSweepResult calm =
        stopped_domain_sweep(gentle, x0, v0, call_spec(), 90.0, coarse, wide, 500, 5);
    REQUIRE(calm.points.size() == 1);
    CHECK(calm.points[0].price.stopped == 0);
    CHECK(calm.points[0].price.estimate == calm.unstopped.estimate);
    CHECK(calm.points[0].price.se == calm.unstopped.se);

    const double collapsing[] = {0.1};
    CHECK_THROWS_AS(stopped_domain_sweep(theta, x0, v0, call_spec(), 90.0, grid, collapsing,
                                         3000, 13),
                    std::invalid_argument);
    const double x_out[] = {140.0};
    const double narrow[] = {0.3};
    CHECK_THROWS_AS(stopped_domain_sweep(theta, x_out, v0, call_spec(), 90.0, grid, narrow, 3000,
                                         13),
                    std::invalid_argument);
    CHECK_THROWS_AS(stopped_domain_sweep(theta, x0, v0, call_spec(), 90.0, grid, {}, 3000, 13),
                    std::invalid_argument);
}

TEST_CASE("price and sweep tables round-trip through csv") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.2, -0.3, -0.5);
    const double x0[] = {100.0};
    const double v0[] = {0.04};
    const GridSpec grid{1.0, 8};
    const PriceResult r = mc_price_cch(theta, x0, v0, call_spec(), 100.0, grid, 500, 3,
                                       VariancePolicy::StoppedDomain);

    std::ostringstream table;
    write_price_csv(table, {price_row("cch-stopped", r, 100.0, grid.horizon)});
    std::istringstream lines(table.str());
    std::string header;
    std::string row;
    REQUIRE(std::getline(lines, header));
    REQUIRE(std::getline(lines, row));
    CHECK(header == "model,params_hash,K,T,M,price,se");
    const auto fields = split_csv_line(row);
    REQUIRE(fields.size() == 7);
    CHECK(fields[0] == "cch-stopped");
    CHECK(fields[1] == std::to_string(r.config_hash));
    CHECK(std::strtod(fields[5].c_str(), nullptr) == r.estimate);
    CHECK(std::strtod(fields[6].c_str(), nullptr) == r.se);
    CHECK(fields[4] == "500");

    RBergomiTheta rb;
    rb.nu = 0.04;
    rb.eta = 0.5;
    rb.rho = -0.3;
    rb.hurst = 0.1;
    const double levels[] = {2.0, 5.0};
    const auto trunc = truncation_sweep(rb, 100.0, capped_spec(30.0), 100.0, grid, levels, 400,
                                        31, VarianceSource::Hybrid);
    std::ostringstream trunc_csv;
    write_truncation_sweep_csv(trunc_csv, trunc);
    std::istringstream trunc_lines(trunc_csv.str());
    REQUIRE(std::getline(trunc_lines, header));
    CHECK(header == "D,M,price,se,stopped");
    std::size_t rows = 0;
    while (std::getline(trunc_lines, row)) {
        CHECK(split_csv_line(row).size() == 5);
        ++rows;
    }
    CHECK(rows == trunc.size());

    const double scales[] = {1.0, 2.0};
    const StoppedSweepResult sweep =
        stopped_domain_sweep(theta, x0, v0, call_spec(), 100.0, grid, scales, 400, 17);
    std::ostringstream sweep_csv;
    write_stopped_sweep_csv(sweep_csv, sweep);
    std::istringstream sweep_lines(sweep_csv.str());
    REQUIRE(std::getline(sweep_lines, header));
    CHECK(header == "scale,x_lo,x_hi,v_lo,v_hi,M,price,se,stopped");
    std::vector<std::vector<std::string>> parsed;
    while (std::getline(sweep_lines, row)) parsed.push_back(split_csv_line(row));
    REQUIRE(parsed.size() == 1 + sweep.points.size());
    CHECK(std::strtod(parsed[0][0].c_str(), nullptr) == 0.0);
    CHECK(std::strtod(parsed[0][6].c_str(), nullptr) == sweep.unstopped.estimate);
    CHECK(std::strtod(parsed[1][6].c_str(), nullptr) == sweep.points[0].price.estimate);
}

}  // TEST_SUITE("pricing")
