#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "svnet/parallel.hpp"
#include "svnet/rng.hpp"
#include "svnet/sv_sim.hpp"

using namespace svnet;

namespace {

CoefficientField zero_field(std::size_t d, std::size_t r) {
    CoefficientField f;
    f.d = d;
    f.r = r;
    f.sigma = [d, r](const double*, const double*, double* out) { std::fill(out, out + d * r, 0.0); };
    f.mu_bar = [d](const double*, double* out) { std::fill(out, out + d, 0.0); };
    f.sigma_bar = [d, r](const double*, double* out) { std::fill(out, out + d * r, 0.0); };
    return f;
}

// bounded smooth coefficients with bounded derivatives, so the Euler scheme
// is in its globally Lipschitz regime
CoefficientField lipschitz_field() {
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

} // namespace

TEST_SUITE("sv_sim") {

TEST_CASE("grid times hit the endpoints exactly") {
    const GridSpec g{0.7, 3};
    CHECK(g.time_at(0) == 0.0);
    CHECK(g.time_at(3) == 0.7);
    CHECK(g.dt() == 0.7 / 3.0);
    CHECK(g.time_at(1) == 1.0 * 0.7 / 3.0);
    for (std::size_t k = 0; k < 3; ++k) CHECK(g.time_at(k) < g.time_at(k + 1));

    const GridSpec g2{1.0 / 3.0, 7};
    CHECK(g2.time_at(7) == 1.0 / 3.0);
    const GridSpec g3{2.5, 8};
    CHECK(g3.time_at(4) == 1.25);
}

TEST_CASE("feller report carries both positivity criteria") {
    const auto r1 = feller_check(CchTheta::single(2.0, 0.04, 0.3, -0.7, 0.25));
    REQUIRE(r1.size() == 1);
    CHECK(r1[0].ratio == doctest::Approx(1.7777777777777777));
    CHECK(r1[0].paper_pass);
    CHECK(r1[0].classical_pass);

    const auto r2 = feller_check(CchTheta::single(1.0, 0.01, 0.5, 0.0, 0.0));
    CHECK(r2[0].ratio == doctest::Approx(0.08));
    CHECK(r2[0].paper_pass);
    CHECK_FALSE(r2[0].classical_pass);

    // vanishing vol-of-vol sends the ratio to infinity
    const auto r3 = feller_check(CchTheta::single(2.0, 0.04, 1e-9, 0.0, 0.0));
    CHECK(r3[0].ratio > 1e12);
    const auto r4 = feller_check(CchTheta::single(2.0, 0.04, 0.0, 0.0, 0.0));
    CHECK(std::isinf(r4[0].ratio));
    CHECK(r4[0].paper_pass);

    CHECK_THROWS_AS(CchTheta::single(2.0, 0.04, 0.3, 1.5, 0.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(CchTheta::single(0.0, 0.04, 0.3, 0.0, 0.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(CchTheta::single(2.0, -0.1, 0.3, 0.0, 0.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(CchTheta::single(2.0, 0.04, -0.1, 0.0, 0.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(CchTheta::single(2.0, 0.04, 0.9, 0.0, 0.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(CchTheta::single(4.0, 0.04, 0.3, 0.0, 0.0).validate(), std::invalid_argument);
    CchTheta bad = CchTheta::single(2.0, 0.04, 0.3, 0.0, 0.0);
    bad.a.push_back(1.0);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CchTheta empty;
    empty.d = 0;
    CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
}

TEST_CASE("driver increments nest exactly across resolutions") {
    const RngKey key = RngKey::from_seed(77).child("bundle");
    const GridSpec gen{1.0, 64};
    const BrownianBundle bundle(key, gen, 3, 8);

    std::vector<double> fine, coarse_direct, coarse_summed;
    bundle.fill_path(2, 64, fine);
    bundle.fill_path(2, 16, coarse_direct);
    BrownianBundle::aggregate(fine, 64, 16, 3, coarse_summed);
    REQUIRE(coarse_direct.size() == 16 * 3);
    for (std::size_t i = 0; i < coarse_direct.size(); ++i)
        CHECK(coarse_direct[i] == coarse_summed[i]);

    // second route: sum each cell by hand in index order
    for (std::size_t c = 0; c < 16; ++c) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 4 * c; k < 4 * (c + 1); ++k) s += fine[k * 3 + j];
            CHECK(s == coarse_direct[c * 3 + j]);
        }
    }

    std::vector<double> again;
    bundle.fill_path(2, 64, again);
    CHECK(again == fine);
    std::vector<double> other;
    bundle.fill_path(3, 64, other);
    CHECK(other != fine);

    CHECK_THROWS_AS(bundle.fill_path(0, 13, fine), std::invalid_argument);
    CHECK_THROWS_AS(bundle.fill_path(0, 0, fine), std::invalid_argument);
    CHECK_THROWS_AS(BrownianBundle(key, GridSpec{0.0, 4}, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(BrownianBundle(key, gen, 0, 1), std::invalid_argument);

    // per-cell variance should average to h = 1/64 over many paths
    const BrownianBundle wide(key.child("moments"), gen, 1, 256);
    double sum_sq = 0.0;
    std::vector<double> inc;
    for (std::size_t p = 0; p < 256; ++p) {
        wide.fill_path(p, 64, inc);
        for (double w : inc) sum_sq += w * w;
    }
    CHECK(sum_sq / 256.0 == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("euler paths are constant or telescoping in the degenerate cases") {
    const GridSpec grid{1.0, 32};
    const RngKey key = RngKey::from_seed(5).child("euler");
    const BrownianBundle bundle(key, grid, 1, 4);

    const CoefficientField still = zero_field(1, 1);
    const EulerPath flat = euler_path(still, std::vector<double>{3.5}, std::vector<double>{0.25},
                                      grid, bundle, 0);
    for (std::size_t k = 0; k <= 32; ++k) {
        CHECK(flat.x_at(k)[0] == 3.5);
        CHECK(flat.v_at(k)[0] == 0.25);
    }
    CHECK_FALSE(flat.diverged);

    CoefficientField unit = zero_field(1, 1);
    unit.sigma = [](const double*, const double*, double* out) { out[0] = 1.0; };

    std::vector<double> inc;
    bundle.fill_path(1, 32, inc);
    const EulerPath from_zero = euler_path(unit, std::vector<double>{0.0},
                                           std::vector<double>{0.25}, grid, inc);
    double running = 0.0;
    for (std::size_t k = 0; k < 32; ++k) {
        running += inc[k];
        CHECK(from_zero.x_at(k + 1)[0] == running);
        CHECK(from_zero.v_at(k + 1)[0] == 0.25);
    }

    const EulerPath from_level = euler_path(unit, std::vector<double>{100.0},
                                            std::vector<double>{0.25}, grid, inc);
    CHECK(std::abs(from_level.x_at(32)[0] - 100.0 - running) <= 1e-10);

    CHECK_THROWS_AS(euler_path(unit, std::vector<double>{0.0, 1.0}, std::vector<double>{0.25},
                               grid, inc),
                    std::invalid_argument);
    CHECK_THROWS_AS(euler_path(unit, std::vector<double>{0.0}, std::vector<double>{0.25}, grid,
                               std::vector<double>(7, 0.0)),
                    std::invalid_argument);
    const BrownianBundle mismatched(key, GridSpec{2.0, 32}, 1, 1);
    CHECK_THROWS_AS(euler_path(unit, std::vector<double>{0.0}, std::vector<double>{0.25}, grid,
                               mismatched, 0),
                    std::invalid_argument);
}

TEST_CASE("scaling the diffusion scales the increments") {
    const GridSpec grid{1.0, 32};
    const BrownianBundle bundle(RngKey::from_seed(6).child("scale"), grid, 1, 1);

    auto vol_only = [](double scale) {
        CoefficientField f = zero_field(1, 1);
        f.sigma = [scale](const double*, const double* v, double* out) {
            out[0] = scale * (0.1 + 0.2 * std::cos(v[0]));
        };
        return f;
    };

    const std::vector<double> x0{0.0}, v0{0.25};
    const EulerPath base = euler_path(vol_only(1.0), x0, v0, grid, bundle, 0);
    const EulerPath doubled = euler_path(vol_only(2.0), x0, v0, grid, bundle, 0);
    // power-of-two scale with x0 = 0: the whole path doubles bitwise
    for (std::size_t k = 0; k <= 32; ++k) CHECK(doubled.x_at(k)[0] == 2.0 * base.x_at(k)[0]);

    const EulerPath stretched = euler_path(vol_only(1.7), x0, v0, grid, bundle, 0);
    for (std::size_t k = 0; k < 32; ++k) {
        const double lhs = stretched.x_at(k + 1)[0] - stretched.x_at(k)[0];
        const double rhs = 1.7 * (base.x_at(k + 1)[0] - base.x_at(k)[0]);
        CHECK(std::abs(lhs - rhs) <= 1e-12);
    }
}

TEST_CASE("non-finite states halt the path with a diagnostic") {
    CoefficientField blower = zero_field(1, 1);
    blower.mu_bar = [](const double* v, double* out) { out[0] = v[0] * v[0] * 1e160; };

    const GridSpec grid{1.0, 4};
    const std::vector<double> inc(4, 0.0);
    const EulerPath p = euler_path(blower, std::vector<double>{5.0}, std::vector<double>{1.0},
                                   grid, inc);
    CHECK(p.diverged);
    CHECK(p.diverged_step == 2);
    CHECK(std::isfinite(p.v_at(1)[0]));
    CHECK(std::isinf(p.v_at(2)[0]));
    CHECK(p.x_at(2)[0] == 5.0);
    CHECK(std::isnan(p.v_at(3)[0]));
    CHECK(std::isnan(p.x_at(4)[0]));
}

TEST_CASE("heston coefficient matrices match the closed form") {
    const CchTheta one = CchTheta::single(2.0, 0.04, 0.3, -0.5, 0.25);
    std::vector<double> sig(3), mu(1), sbar(3);
    cch_coefficients(one, std::vector<double>{100.0}, std::vector<double>{0.04}, sig, mu, sbar);
    CHECK(sig[0] == -10.0);
    CHECK(sig[1] == doctest::Approx(17.320508075688772).epsilon(1e-15));
    CHECK(sig[1] == 10.0 * std::sqrt(3.0));
    CHECK(sig[2] == 0.0);
    const double vol = std::sqrt(0.04) * 0.3;
    CHECK(sbar[0] == doctest::Approx(vol * -0.5 * 0.25));
    CHECK(sbar[1] == doctest::Approx(vol * std::sqrt(0.75) * 0.25));
    CHECK(sbar[2] == doctest::Approx(vol * std::sqrt(1.0 - 0.0625)));

    cch_coefficients(one, std::vector<double>{100.0}, std::vector<double>{0.09}, sig, mu, sbar);
    CHECK(mu[0] == doctest::Approx(-0.1));

    // two assets with distinct parameters, rebuilt from scratch entry by entry
    CchTheta two;
    two.d = 2;
    two.a = {2.0, 1.5};
    two.b = {0.04, 0.1};
    two.nu = {0.3, 0.5};
    two.rho_x = {-0.5, 0.3};
    two.rho_v = {0.25, -0.6};
    const std::vector<double> x{100.0, 80.0};
    const std::vector<double> v{0.04, 0.09};
    std::vector<double> sig2(10), mu2(2), sbar2(10);
    cch_coefficients(two, x, v, sig2, mu2, sbar2);
    for (std::size_t i = 0; i < 2; ++i) {
        const double sv = std::sqrt(v[i]);
        const double ox = std::sqrt(1.0 - two.rho_x[i] * two.rho_x[i]);
        const double ov = std::sqrt(1.0 - two.rho_v[i] * two.rho_v[i]);
        for (std::size_t j = 0; j < 5; ++j) {
            double want_sig = 0.0;
            double want_sbar = 0.0;
            if (j == 0) {
                want_sig = sv * x[i] * two.rho_x[i];
                want_sbar = sv * two.nu[i] * two.rho_x[i] * two.rho_v[i];
            } else if (j == 1 + i) {
                want_sig = sv * x[i] * ox;
                want_sbar = sv * two.nu[i] * ox * two.rho_v[i];
            } else if (j == 3 + i) {
                want_sbar = sv * two.nu[i] * ov;
            }
            if (want_sig == 0.0)
                CHECK(sig2[i * 5 + j] == 0.0);
            else
                CHECK(sig2[i * 5 + j] == doctest::Approx(want_sig).epsilon(1e-15));
            if (want_sbar == 0.0)
                CHECK(sbar2[i * 5 + j] == 0.0);
            else
                CHECK(sbar2[i * 5 + j] == doctest::Approx(want_sbar).epsilon(1e-15));
        }
        CHECK(mu2[i] == doctest::Approx(two.a[i] * (two.b[i] - v[i])));
    }

    // perfectly correlated vol kills the idiosyncratic vol columns
    for (double rv : {1.0, -1.0}) {
        const CchTheta locked = CchTheta::flat(2, 2.0, 0.04, 0.3, -0.2, rv);
        cch_coefficients(locked, x, v, sig2, mu2, sbar2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(sbar2[i * 5 + 3] == 0.0);
            CHECK(sbar2[i * 5 + 4] == 0.0);
        }
    }

    CHECK_THROWS_AS(cch_coefficients(one, std::vector<double>{100.0}, std::vector<double>{-0.01},
                                     sig, mu, sbar),
                    std::domain_error);
    CHECK_THROWS_AS(cch_coefficients(one, std::vector<double>{100.0}, std::vector<double>{0.04},
                                     std::span<double>(sig.data(), 2), mu, sbar),
                    std::invalid_argument);
}

TEST_CASE("field wrappers expose exact and truncated coefficients") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.3, -0.5, 0.25);
    const CoefficientField exact = cch_field(theta);
    const CoefficientField trunc = cch_field_full_truncation(theta);
    REQUIRE(exact.r == 3);
    CHECK(exact.d_bar() == 3);

    const double x[1] = {100.0};
    double out[3];
    const double neg[1] = {-0.01};
    CHECK_THROWS_AS(exact.sigma(x, neg, out), std::domain_error);
    CHECK_THROWS_AS(exact.mu_bar(neg, out), std::domain_error);

    trunc.sigma(x, neg, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 0.0);
    // full truncation clamps the drift argument as well
    trunc.mu_bar(neg, out);
    CHECK(out[0] == doctest::Approx(0.08));

    const double pos[1] = {0.09};
    double a[3], b[3];
    exact.sigma_bar(pos, a);
    trunc.sigma_bar(pos, b);
    for (int j = 0; j < 3; ++j) CHECK(a[j] == b[j]);
}

TEST_CASE("zero vol-of-vol keeps variance pinned and the spot a martingale") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.0, -0.7, 0.3);
    const GridSpec grid{1.0, 16};
    const std::size_t n_paths = 50000;
    const BrownianBundle bundle(RngKey::from_seed(2024).child("nu-zero"), grid, 3, n_paths);
    const std::vector<double> x0{100.0}, v0{0.04};

    struct Acc {
        double sum = 0.0;
        double sum_sq = 0.0;
        std::size_t pinned_violations = 0;
    };
    auto run = [&] {
        auto parts = run_chunks<Acc>(n_paths, kPathChunk, [&](std::size_t b, std::size_t e) {
            Acc acc;
            for (std::size_t p = b; p < e; ++p) {
                const CchPathResult r = simulate_cch_path(theta, x0, v0, grid, bundle, p,
                                                          VariancePolicy::FullTruncation);
                for (std::size_t k = 0; k <= 16; ++k)
                    if (r.path.v_at(k)[0] != 0.04) ++acc.pinned_violations;
                const double xt = r.path.x_at(16)[0];
                acc.sum += xt;
                acc.sum_sq += xt * xt;
            }
            return acc;
        });
        Acc total;
        for (const Acc& a : parts) {
            total.sum += a.sum;
            total.sum_sq += a.sum_sq;
            total.pinned_violations += a.pinned_violations;
        }
        return total;
    };

    EnvGuard guard("SVNET_THREADS");
    ::setenv("SVNET_THREADS", "1", 1);
    CHECK(worker_count() == 1);
    const Acc serial = run();
    ::setenv("SVNET_THREADS", "7", 1);
    CHECK(worker_count() == 7);
    const Acc threaded = run();

    // identical (seed, config) must give bit-identical reductions on any
    // worker count
    CHECK(serial.sum == threaded.sum);
    CHECK(serial.sum_sq == threaded.sum_sq);
    CHECK(serial.pinned_violations == 0);
    CHECK(threaded.pinned_violations == 0);

    const double n = static_cast<double>(n_paths);
    const double mean = serial.sum / n;
    const double var = (serial.sum_sq - serial.sum * serial.sum / n) / (n - 1.0);
    const double se = std::sqrt(var / n);
    CHECK(std::abs(mean - 100.0) <= 3.0 * se);
}

TEST_CASE("stopped paths stay in the box and freeze at the last inside state") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.6, -0.5, 0.2);
    const GridSpec grid{1.0, 64};
    const BrownianBundle bundle(RngKey::from_seed(99).child("stop"), grid, 3, 400);
    const std::vector<double> x0{100.0}, v0{0.04};
    const DomainBox box;

    const CchSimulation stopped = simulate_cch(theta, x0, v0, grid, bundle,
                                               VariancePolicy::StoppedDomain, box);
    const CchSimulation raw = simulate_cch(theta, x0, v0, grid, bundle,
                                           VariancePolicy::FullTruncation, box);
    REQUIRE(stopped.paths.size() == 400);
    REQUIRE(stopped.feller.size() == 1);
    CHECK(stopped.feller[0].ratio == doctest::Approx(0.16 / 0.36));
    CHECK(stopped.feller[0].paper_pass);
    CHECK_FALSE(stopped.feller[0].classical_pass);

    std::size_t n_stopped = 0, n_free = 0, late_stops = 0;
    bool inside_ok = true, prefix_ok = true, frozen_ok = true, exit_ok = true;
    for (std::size_t p = 0; p < 400; ++p) {
        const EulerPath& s = stopped.paths[p].path;
        const EulerPath& u = raw.paths[p].path;
        for (std::size_t k = 0; k <= 64; ++k)
            inside_ok &= box.contains(std::span<const double>(s.x_at(k), 1),
                                      std::span<const double>(s.v_at(k), 1));
        if (!stopped.paths[p].stopped) {
            ++n_free;
            continue;
        }
        ++n_stopped;
        const std::size_t st = stopped.paths[p].stop_step;
        REQUIRE(st >= 1);
        if (st > 1) ++late_stops;
        for (std::size_t k = 0; k < st; ++k) {
            prefix_ok &= s.x_at(k)[0] == u.x_at(k)[0];
            prefix_ok &= s.v_at(k)[0] == u.v_at(k)[0];
        }
        for (std::size_t k = st; k <= 64; ++k) {
            frozen_ok &= s.x_at(k)[0] == s.x_at(st - 1)[0];
            frozen_ok &= s.v_at(k)[0] == s.v_at(st - 1)[0];
        }
        // the unstopped path's state at the detection step is what left the box
        exit_ok &= !box.contains(std::span<const double>(u.x_at(st), 1),
                                 std::span<const double>(u.v_at(st), 1));
    }
    CHECK(inside_ok);
    CHECK(prefix_ok);
    CHECK(frozen_ok);
    CHECK(exit_ok);
    CHECK(n_stopped > 0);
    CHECK(n_free > 0);
    CHECK(late_stops > 0);

    CHECK_THROWS_AS(simulate_cch_path(theta, std::vector<double>{200.0}, v0, grid, bundle, 0,
                                      VariancePolicy::StoppedDomain, box),
                    std::invalid_argument);
    CHECK_THROWS_AS(simulate_cch_path(theta, x0, v0, grid, bundle, 0,
                                      static_cast<VariancePolicy>(42), box),
                    std::invalid_argument);
}

TEST_CASE("a shared common driver makes log-returns perfectly correlated") {
    const CchTheta theta = CchTheta::flat(2, 2.0, 0.04, 0.2, 1.0, 1.0);
    const GridSpec grid{1.0, 16};
    const std::size_t n_paths = 100000;
    const BrownianBundle bundle(RngKey::from_seed(404).child("corr"), grid, 5, n_paths);
    const std::vector<double> x0{90.0, 110.0}, v0{0.04, 0.04};

    struct Acc {
        double s1 = 0.0, s2 = 0.0, s11 = 0.0, s22 = 0.0, s12 = 0.0;
        std::size_t n = 0, v_mismatch = 0, nonpositive = 0;
    };
    auto parts = run_chunks<Acc>(n_paths, kPathChunk, [&](std::size_t b, std::size_t e) {
        Acc acc;
        for (std::size_t p = b; p < e; ++p) {
            const CchPathResult r = simulate_cch_path(theta, x0, v0, grid, bundle, p,
                                                      VariancePolicy::FullTruncation);
            for (std::size_t k = 0; k <= 16; ++k)
                if (r.path.v_at(k)[0] != r.path.v_at(k)[1]) ++acc.v_mismatch;
            const double xa = r.path.x_at(16)[0];
            const double xb = r.path.x_at(16)[1];
            if (!(xa > 0.0) || !(xb > 0.0)) {
                ++acc.nonpositive;
                continue;
            }
            const double l1 = std::log(xa / 90.0);
            const double l2 = std::log(xb / 110.0);
            acc.s1 += l1;
            acc.s2 += l2;
            acc.s11 += l1 * l1;
            acc.s22 += l2 * l2;
            acc.s12 += l1 * l2;
            acc.n += 1;
        }
        return acc;
    });
    Acc t;
    for (const Acc& a : parts) {
        t.s1 += a.s1;
        t.s2 += a.s2;
        t.s11 += a.s11;
        t.s22 += a.s22;
        t.s12 += a.s12;
        t.n += a.n;
        t.v_mismatch += a.v_mismatch;
        t.nonpositive += a.nonpositive;
    }
    CHECK(t.v_mismatch == 0);
    CHECK(t.nonpositive == 0);
    const double n = static_cast<double>(t.n);
    const double m1 = t.s1 / n, m2 = t.s2 / n;
    const double c11 = t.s11 / n - m1 * m1;
    const double c22 = t.s22 / n - m2 * m2;
    const double c12 = t.s12 / n - m1 * m2;
    const double corr = c12 / std::sqrt(c11 * c22);
    CHECK(corr > 0.999999);
    CHECK(corr < 1.0 + 1e-9);
}

TEST_CASE("strong error vanishes when the grids coincide") {
    const CoefficientField field = lipschitz_field();
    const std::vector<double> x0{1.0}, v0{0.5};
    const RngKey key = RngKey::from_seed(12).child("strong-trivial");

    const StrongErrorResult same = strong_error(field, x0, v0, 1.0, 64, 64, 500, key);
    CHECK(same.mean_sq_sup == 0.0);
    CHECK(same.se == 0.0);
    CHECK(same.paths == 500);

    const StrongErrorResult off = strong_error(field, x0, v0, 1.0, 16, 64, 500, key);
    CHECK(off.mean_sq_sup > 0.0);
    CHECK(off.h == 1.0 / 16.0);

    CHECK_THROWS_AS(strong_error(field, x0, v0, 1.0, 24, 64, 10, key), std::invalid_argument);
    CHECK_THROWS_AS(strong_error(field, x0, v0, 1.0, 16, 64, 0, key), std::invalid_argument);
}

TEST_CASE("strong error decays at the euler rate on a lipschitz model") {
    const CoefficientField field = lipschitz_field();
    const std::vector<double> x0{1.0}, v0{0.5};
    const RngKey key = RngKey::from_seed(13).child("strong-slope");

    const std::vector<std::size_t> ns{32, 64, 128};
    std::vector<StrongErrorResult> rows;
    for (std::size_t n : ns) rows.push_back(strong_error(field, x0, v0, 1.0, n, 2048, 4000, key));

    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        CHECK(rows[i + 1].mean_sq_sup <=
              rows[i].mean_sq_sup + 2.0 * (rows[i].se + rows[i + 1].se));
    }

    // least-squares slope of log(error) against log(h); the squared sup error
    // of the euler scheme scales like h
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const StrongErrorResult& r : rows) {
        const double lx = std::log(r.h);
        const double ly = std::log(r.mean_sq_sup);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double m = static_cast<double>(rows.size());
    const double slope = (sxy - sx * sy / m) / (sxx - sx * sx / m);
    CHECK(slope >= 0.8);
    CHECK(slope <= 1.2);
}

TEST_CASE("csv dumps round-trip the doubles") {
    const CchTheta theta = CchTheta::single(2.0, 0.04, 0.3, -0.5, 0.25);
    const GridSpec grid{1.0, 2};
    const BrownianBundle bundle(RngKey::from_seed(55).child("csv"), grid, 3, 2);
    const CchSimulation sim = simulate_cch(theta, std::vector<double>{100.0},
                                           std::vector<double>{0.04}, grid, bundle,
                                           VariancePolicy::StoppedDomain);

    std::ostringstream os;
    write_paths_csv(os, sim.paths, grid);
    std::istringstream is(os.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "path_id,k,t,X_1,V_1");
    std::vector<std::vector<std::string>> body;
    while (std::getline(is, line)) body.push_back(split_csv_line(line));
    REQUIRE(body.size() == 6);
    const auto& row = body[2]; // path 0, k = 2
    REQUIRE(row.size() == 5);
    CHECK(row[0] == "0");
    CHECK(row[1] == "2");
    CHECK(std::strtod(row[2].c_str(), nullptr) == 1.0);
    CHECK(std::strtod(row[3].c_str(), nullptr) == sim.paths[0].path.x_at(2)[0]);
    CHECK(std::strtod(row[4].c_str(), nullptr) == sim.paths[0].path.v_at(2)[0]);

    StrongErrorResult r;
    r.coarse_steps = 16;
    r.h = 1.0 / 16.0;
    r.mean_sq_sup = 1.2345678901234567e-3;
    r.se = 9.8765432109876543e-5;
    std::ostringstream os2;
    write_strong_error_csv(os2, {r});
    std::istringstream is2(os2.str());
    REQUIRE(std::getline(is2, line));
    CHECK(line == "N,h,err_mean,err_se");
    REQUIRE(std::getline(is2, line));
    const auto cols = split_csv_line(line);
    REQUIRE(cols.size() == 4);
    CHECK(cols[0] == "16");
    CHECK(std::strtod(cols[1].c_str(), nullptr) == r.h);
    CHECK(std::strtod(cols[2].c_str(), nullptr) == r.mean_sq_sup);
    CHECK(std::strtod(cols[3].c_str(), nullptr) == r.se);
}

} // TEST_SUITE
