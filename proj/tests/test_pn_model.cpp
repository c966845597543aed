#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "pnradar/errors.hpp"
#include "pnradar/pn_model.hpp"
#include "pnradar/reference.hpp"

using namespace pnradar;

namespace {

FrameConfig make_toy(int n, int m) {
    FrameParams p;
    p.n_subcarriers = n;
    p.n_symbols = m;
    p.subcarrier_spacing = 50e6 / n;
    p.cp_duration = n / 50e6 / 4.0;
    p.carrier_frequency = 28e9;
    return make_frame(p);
}

FrameConfig table_frame() {
    FrameParams p;
    p.n_subcarriers = 256;
    p.n_symbols = 10;
    p.subcarrier_spacing = 195312.5;
    p.cp_duration = 1.28e-6;
    p.carrier_frequency = 28e9;
    return make_frame(p);
}

}  // namespace

TEST_CASE("dpn variance closed forms") {
    const OscillatorModel fro = OscillatorModel::free_running(200e3);
    CHECK(dpn_variance(fro, 2e-7) == doctest::Approx(0.502655).epsilon(1e-5));
    CHECK(dpn_variance(fro, 0.0) == 0.0);
    CHECK(dpn_variance(fro, -2e-7) == dpn_variance(fro, 2e-7));

    const OscillatorModel pll = OscillatorModel::pll(200e3, 1e6);
    CHECK(dpn_variance(pll, 2e-7) == doctest::Approx(0.2861561826655883).epsilon(1e-12));
    CHECK(dpn_variance(pll, 0.0) == 0.0);
    CHECK(dpn_variance(pll, -2e-7) == dpn_variance(pll, 2e-7));
}

TEST_CASE("dpn correlation matches the FRO closed form and is even") {
    const OscillatorModel fro = OscillatorModel::free_running(200e3);
    CHECK(dpn_correlation(fro, 1e-7, 2e-7) == doctest::Approx(0.251327).epsilon(1e-5));
    CHECK(dpn_correlation(fro, 0.0, 2e-7) == doctest::Approx(dpn_variance(fro, 2e-7)));
    // correlation vanishes once the lag exceeds the delay
    CHECK(dpn_correlation(fro, 2e-7, 2e-7) == 0.0);
    CHECK(dpn_correlation(fro, 5e-7, 2e-7) == 0.0);

    Rng rng(5);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const OscillatorModel pll = OscillatorModel::pll(120e3, 700e3);
    for (int i = 0; i < 100; ++i) {
        const double tau = uniform(rng) * 3e-6;
        const double dt = (uniform(rng) - 0.5) * 8e-6;
        // variance-difference route as the oracle for the closed form
        const double lemma =
            0.5 * (dpn_variance(fro, tau + dt) + dpn_variance(fro, tau - dt)) -
            dpn_variance(fro, dt);
        CHECK(std::abs(dpn_correlation(fro, dt, tau) - lemma) <=
              1e-12 * std::max(dpn_variance(fro, tau), 1e-30));
        CHECK(dpn_correlation(fro, dt, tau) == dpn_correlation(fro, -dt, tau));
        CHECK(dpn_correlation(pll, dt, tau) == dpn_correlation(pll, -dt, tau));
    }
}

TEST_CASE("dpn correlation matches a Wiener phase simulation") {
    // Discretized free-running phase accumulation as the generative route.
    Rng rng(1234);
    const double f3db = 1e5;
    const double dt_step = 1e-7;
    const int tau_steps = 10;
    for (int lag_steps : {0, 4, 8, 14}) {
        const auto est =
            reference::wiener_dpn_correlation(f3db, dt_step, lag_steps, tau_steps, 200000, rng);
        const double expected =
            dpn_correlation(OscillatorModel::free_running(f3db), lag_steps * dt_step,
                            tau_steps * dt_step);
        CHECK(std::abs(est.mean - expected) <= 3.0 * est.std_error + 1e-12);
    }
}

TEST_CASE("covariance generators: FRO inside the CP is block diagonal") {
    const FrameConfig frame = table_frame();
    const OscillatorModel fro = OscillatorModel::free_running(200e3);
    const TbtCovariance cov = build_covariance(fro, frame, 2e-7);
    CHECK(cov.n_dominant_blocks == 1);
    for (int m = 1; m < cov.n_blocks(); ++m) {
        CHECK(cov.block_generators[m].cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(cov.diag_value() == doctest::Approx(dpn_variance(fro, 2e-7)));
}

TEST_CASE("covariance generators: PLL keeps few dominant blocks") {
    const FrameConfig frame = table_frame();
    const OscillatorModel pll = OscillatorModel::pll(200e3, 1e6);
    const TbtCovariance cov = build_covariance(pll, frame, 2e-7);
    CHECK(cov.n_dominant_blocks >= 1);
    CHECK(cov.n_dominant_blocks <= 3);
}

TEST_CASE("covariance at tau = 0 is identically zero") {
    const FrameConfig frame = make_toy(8, 2);
    const TbtCovariance cov =
        build_covariance(OscillatorModel::free_running(100e3), frame, 0.0);
    for (const auto& g : cov.block_generators) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
    CHECK(materialize_dense(cov).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dense materialization agrees with the per-block generators") {
    const FrameConfig frame = make_toy(4, 2);
    const OscillatorModel fro = OscillatorModel::free_running(150e3);
    const double tau = 1.5 * frame.cp_duration;  // beyond the CP: off blocks non-zero
    const TbtCovariance cov = build_covariance(fro, frame, tau);
    const Eigen::MatrixXd dense = materialize_dense(cov);
    const int n = 4;

    CHECK(dense.isApprox(dense.transpose()));
    for (int i1 = 0; i1 < dense.rows(); ++i1) {
        CHECK(dense(i1, i1) == doctest::Approx(dpn_variance(fro, tau)).epsilon(1e-12));
        for (int i2 = 0; i2 < dense.cols(); ++i2) {
            const int m1 = i1 / n, n1 = i1 % n;
            const int m2 = i2 / n, n2 = i2 % n;
            // independent route through the per-block lag formula
            const double via_blocks =
                m1 <= m2 ? cov.generator(m2 - m1, n1 - n2) : cov.generator(m1 - m2, n2 - n1);
            CHECK(dense(i1, i2) == doctest::Approx(via_blocks).epsilon(1e-12));
        }
    }
}

TEST_CASE("FRO within the CP materializes with zero off-diagonal blocks") {
    const FrameConfig frame = make_toy(8, 3);
    const OscillatorModel fro = OscillatorModel::free_running(150e3);
    const TbtCovariance cov = build_covariance(fro, frame, 0.9 * frame.cp_duration);
    const Eigen::MatrixXd dense = materialize_dense(cov);
    const int n = 8;
    for (int b1 = 0; b1 < 3; ++b1) {
        for (int b2 = 0; b2 < 3; ++b2) {
            if (b1 == b2) continue;
            CHECK(dense.block(b1 * n, b2 * n, n, n).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("materialize guard") {
    const FrameConfig frame = table_frame();  // NM = 2560, fine
    CHECK_NOTHROW(
        materialize_dense(build_covariance(OscillatorModel::free_running(1e5), frame, 1e-7)));
    FrameParams p;
    p.n_subcarriers = 4096;
    p.n_symbols = 4;
    p.subcarrier_spacing = 50e6 / 4096;
    p.cp_duration = 1e-6;
    p.carrier_frequency = 28e9;
    const FrameConfig big = make_frame(p);
    CHECK_THROWS_AS(
        materialize_dense(build_covariance(OscillatorModel::free_running(1e5), big, 1e-7)),
        TooLarge);
}

TEST_CASE("covariance stays positive semidefinite over the oscillator grid") {
    const FrameConfig frame = make_toy(32, 3);
    std::vector<OscillatorModel> oscillators = {
        OscillatorModel::free_running(50e3),
        OscillatorModel::free_running(200e3),
        OscillatorModel::pll(50e3, 500e3),
        OscillatorModel::pll(200e3, 1e6),
    };
    const double c = kSpeedOfLight;
    for (const auto& osc : oscillators) {
        for (double range : {50.0, 150.0, 500.0}) {
            const TbtCovariance cov = build_covariance(osc, frame, 2 * range / c);
            const Eigen::MatrixXd dense = materialize_dense(cov);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
            const double max_eig = eig.eigenvalues().maxCoeff();
            CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * max_eig);
        }
    }
}

TEST_CASE("PN sampling determinism and degenerate cases") {
    const FrameConfig frame = make_toy(16, 2);
    const OscillatorModel fro = OscillatorModel::free_running(100e3);

    const TbtCovariance zero_cov = build_covariance(fro, frame, 0.0);
    Rng rng(42);
    CHECK(sample_pn(zero_cov, rng).cwiseAbs().maxCoeff() == 0.0);

    const TbtCovariance cov = build_covariance(fro, frame, frame.cp_duration / 2);
    Rng a(42), b(42);
    const Eigen::VectorXd xa = sample_pn(cov, a);
    const Eigen::VectorXd xb = sample_pn(cov, b);
    CHECK((xa - xb).cwiseAbs().maxCoeff() == 0.0);
    CHECK(xa.size() == 32);
}

TEST_CASE("PN sample variance matches the variance law at frame scale") {
    const FrameConfig frame = table_frame();
    const OscillatorModel fro = OscillatorModel::free_running(200e3);
    const double tau = 2.0 * 30.0 / kSpeedOfLight;
    const TbtCovariance cov = build_covariance(fro, frame, tau);
    const PnSampler sampler(cov);
    Rng rng(42);
    const int draws = 10000;
    const Eigen::MatrixXd samples = sampler.draw_many(rng, draws);
    const Eigen::VectorXd variance = samples.array().square().rowwise().mean();
    const double expected = dpn_variance(fro, tau);
    for (int i = 0; i < variance.size(); ++i) {
        CHECK(variance[i] == doctest::Approx(expected).epsilon(0.05));
    }
}

TEST_CASE("fast TBT matvec equals the dense product") {
    Rng rng(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    const FrameConfig frame = make_toy(8, 3);
    const OscillatorModel pll = OscillatorModel::pll(150e3, 400e3);
    const double tau = 1.2 * frame.cp_duration;
    const TbtCovariance cov = build_covariance(pll, frame, tau);
    const Eigen::MatrixXd dense = materialize_dense(cov);

    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd v(cov.size());
        for (int i = 0; i < v.size(); ++i) v[i] = normal(rng);
        const Eigen::VectorXd fast = tbt_matvec(cov, v, MatvecMode::exact, cov.n_blocks());
        const Eigen::VectorXd ref = dense * v;
        CHECK((fast - ref).norm() <= 1e-10 * ref.norm());
    }

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(cov.size());
    CHECK(tbt_matvec(cov, zero).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("FRO matvec reduces to the block-diagonal application") {
    Rng rng(4);
    std::normal_distribution<double> normal(0.0, 1.0);
    const FrameConfig frame = make_toy(8, 3);
    const OscillatorModel fro = OscillatorModel::free_running(150e3);
    const TbtCovariance cov = build_covariance(fro, frame, 0.8 * frame.cp_duration);
    REQUIRE(cov.n_dominant_blocks == 1);

    Eigen::MatrixXd block(8, 8);
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) block(r, c) = cov.generator(0, r - c);
    }
    Eigen::VectorXd v(cov.size());
    for (int i = 0; i < v.size(); ++i) v[i] = normal(rng);
    const Eigen::VectorXd fast = tbt_matvec(cov, v);
    for (int b = 0; b < 3; ++b) {
        const Eigen::VectorXd expect = block * v.segment(8 * b, 8);
        CHECK((fast.segment(8 * b, 8) - expect).norm() <= 1e-12 * expect.norm());
    }
}

TEST_CASE("best-circulant mode approximates the dense product") {
    Rng rng(6);
    std::normal_distribution<double> normal(0.0, 1.0);
    const FrameConfig frame = make_toy(32, 2);
    const OscillatorModel fro = OscillatorModel::free_running(150e3);
    const TbtCovariance cov = build_covariance(fro, frame, 0.5 * frame.cp_duration);
    const Eigen::MatrixXd dense = materialize_dense(cov);
    Eigen::VectorXd v(cov.size());
    for (int i = 0; i < v.size(); ++i) v[i] = normal(rng);

    const Eigen::VectorXd approx = tbt_matvec(cov, v, MatvecMode::best_circulant);
    const Eigen::VectorXd exact = tbt_matvec(cov, v, MatvecMode::exact);
    const Eigen::VectorXd ref = dense * v;
    CHECK((exact - ref).norm() <= 1e-10 * ref.norm());
    CHECK((approx - ref).norm() <= 0.5 * ref.norm());           // an approximation
    CHECK((approx - ref).norm() > (exact - ref).norm() * 10.0);  // but not the exact path
}

TEST_CASE("cg_solve basics and dense agreement") {
    const LinOp identity = [](const Eigen::VectorXd& in, Eigen::VectorXd& out) { out = in; };
    Eigen::VectorXd b(5);
    b << 1, -2, 3, 0.5, -0.25;
    const CgResult id = cg_solve(identity, b);
    CHECK(id.converged);
    CHECK(id.iterations == 1);
    CHECK((id.x - b).norm() <= 1e-12);

    const CgResult zero = cg_solve(identity, Eigen::VectorXd::Zero(4));
    CHECK(zero.converged);
    CHECK(zero.x.cwiseAbs().maxCoeff() == 0.0);

    Rng rng(9);
    std::normal_distribution<double> normal(0.0, 1.0);
    const FrameConfig frame = make_toy(16, 2);
    const OscillatorModel pll = OscillatorModel::pll(120e3, 600e3);
    const TbtCovariance cov = build_covariance(pll, frame, frame.cp_duration);
    const double jitter = 1e-10 * cov.diag_value();
    const TbtOperator op(cov, MatvecMode::exact, cov.n_blocks(), jitter);
    Eigen::VectorXd rhs(cov.size());
    for (int i = 0; i < rhs.size(); ++i) rhs[i] = normal(rng);

    const CgResult cg = cg_solve(
        [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) { op.apply(in, out); }, rhs,
        CgOptions{1e-10, 500},
        [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) { op.precondition(in, out); });
    Eigen::MatrixXd dense = materialize_dense(cov);
    dense.diagonal().array() += jitter;
    const Eigen::VectorXd ref = dense.ldlt().solve(rhs);
    CHECK(cg.converged);
    CHECK((cg.x - ref).norm() <= 1e-6 * ref.norm());
}

TEST_CASE("block-banded Cholesky matches dense log-det and solve") {
    Rng rng(11);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int kind = 0; kind < 2; ++kind) {
        const FrameConfig frame = make_toy(8, 4);
        const OscillatorModel osc = kind == 0 ? OscillatorModel::free_running(150e3)
                                              : OscillatorModel::pll(150e3, 300e3);
        const double tau = 1.3 * frame.cp_duration;
        const TbtCovariance cov = build_covariance(osc, frame, tau);
        const BlockBandedCholesky factor(cov);

        // Dense reference on the same M0 truncation.
        const int n = cov.block_size(), m = cov.n_blocks();
        Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(cov.size(), cov.size());
        for (int b1 = 0; b1 < m; ++b1) {
            for (int b2 = 0; b2 < m; ++b2) {
                if (std::abs(b1 - b2) >= cov.n_dominant_blocks) continue;
                for (int r = 0; r < n; ++r) {
                    for (int c = 0; c < n; ++c) {
                        dense(b1 * n + r, b2 * n + c) = b1 <= b2
                                                            ? cov.generator(b2 - b1, r - c)
                                                            : cov.generator(b1 - b2, c - r);
                    }
                }
            }
        }
        dense.diagonal().array() += factor.jitter();
        const Eigen::LLT<Eigen::MatrixXd> llt(dense);
        REQUIRE(llt.info() == Eigen::Success);
        const double ref_logdet =
            2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
        CHECK(factor.log_det() == doctest::Approx(ref_logdet).epsilon(1e-9));

        Eigen::VectorXd b(cov.size());
        for (int i = 0; i < b.size(); ++i) b[i] = normal(rng);
        const Eigen::VectorXd x = factor.solve(b);
        const Eigen::VectorXd ref = llt.solve(b);
        CHECK((x - ref).norm() <= 1e-9 * ref.norm());
        CHECK(factor.quadratic(b) == doctest::Approx(b.dot(ref)).epsilon(1e-9));
    }
}

TEST_CASE("block-banded Cholesky rejects the zero covariance") {
    const FrameConfig frame = make_toy(8, 2);
    const TbtCovariance cov =
        build_covariance(OscillatorModel::free_running(100e3), frame, 0.0);
    CHECK_THROWS_AS(BlockBandedCholesky{cov}, CholeskyFailure);
}
