#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dpa/errors.hpp"
#include "dpa/fpca.hpp"
#include "dpa/log.hpp"
#include "fpca_support.hpp"

using namespace dpa;
using namespace dpa::fpca;
using dpa::testing::brute_force_fpca;
using dpa::testing::control_grid;
using dpa::testing::random_functions;

namespace {

double w_inner(const Eigen::VectorXd& w, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (w.array() * a.array() * b.array()).sum();
}

// Within tol of b or of -b.
double signed_gap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return std::min((a - b).cwiseAbs().maxCoeff(), (a + b).cwiseAbs().maxCoeff());
}

std::vector<geo::MomentaField> fields_from(const Eigen::MatrixXd& mx, const Eigen::MatrixXd& my,
                                           const Eigen::VectorXd& grid, int period = 0) {
    std::vector<geo::MomentaField> out;
    for (Eigen::Index i = 0; i < mx.rows(); ++i) {
        geo::MomentaField f;
        f.participant_id = "s" + std::to_string(1000 + i);
        f.period = period;
        f.control_points.resize(grid.size(), 2);
        f.control_points.col(0) = grid;
        f.control_points.col(1).setConstant(0.1 * static_cast<double>(i % 3));
        f.momenta.resize(grid.size(), 2);
        f.momenta.col(0) = mx.row(i).transpose();
        f.momenta.col(1) = my.row(i).transpose();
        f.energy = geo::deformation_energy(f.momenta);
        out.push_back(f);
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Weights and component selection
// ---------------------------------------------------------------------------

TEST(TrapezoidWeights, UniformAndIrregular) {
    Eigen::VectorXd g(4);
    g << 0.0, 1.0, 3.0, 3.5;
    const Eigen::VectorXd w = trapezoid_weights(g);
    EXPECT_DOUBLE_EQ(w[0], 0.5);
    EXPECT_DOUBLE_EQ(w[1], 1.5);
    EXPECT_DOUBLE_EQ(w[2], 1.25);
    EXPECT_DOUBLE_EQ(w[3], 0.25);
    EXPECT_THROW(trapezoid_weights(Eigen::VectorXd::Zero(3)), InvalidInputError);
}

TEST(SelectComponents, MinimalCountReachingTarget) {
    Eigen::VectorXd ev(5);
    ev << 5, 3, 1, 0.5, 0.5;  // cumulative .5 .8 .9 .95 1
    EXPECT_EQ(select_components(ev, 0.5), 1);
    EXPECT_EQ(select_components(ev, 0.9), 3);  // exact tie resolves to the smaller count
    EXPECT_EQ(select_components(ev, 0.91), 4);
    EXPECT_EQ(select_components(ev, 1.0), 5);
    EXPECT_EQ(select_components(Eigen::VectorXd::Zero(3), 0.9), 0);
    EXPECT_THROW(select_components(ev, 0.0), InvalidInputError);
}

TEST(SelectComponents, BothSidedThresholdOnRandomSpectra) {
    std::mt19937_64 rng(1);
    std::exponential_distribution<double> ex(1.0);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (int rep = 0; rep < 500; ++rep) {
        Eigen::VectorXd ev(1 + rep % 20);
        for (auto& v : ev) v = ex(rng);
        std::sort(ev.begin(), ev.end(), std::greater<>());
        const double target = u(rng);
        const Eigen::Index l = select_components(ev, target);
        const double total = ev.sum();
        EXPECT_GE(ev.head(l).sum() / total, target);
        if (l > 1) {
            EXPECT_LT(ev.head(l - 1).sum() / total, target);
        }
    }
}

// ---------------------------------------------------------------------------
// UFPCA
// ---------------------------------------------------------------------------

TEST(Ufpca, IdenticalFunctionsHaveNoVariance) {
    const Eigen::VectorXd g = control_grid();
    Eigen::MatrixXd d(5, g.size());
    for (int i = 0; i < 5; ++i) d.row(i) = g.array().sin().transpose();
    const FpcaModel m = ufpca(make_sample(g, d, Domain::X));
    EXPECT_LT(m.spectrum.cwiseAbs().maxCoeff(), 1e-28);
    EXPECT_LT((m.mean - g.array().sin().matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Ufpca, RankOneRecoversTheFunction) {
    const Eigen::VectorXd g = control_grid();
    const Eigen::VectorXd w = trapezoid_weights(g);
    Eigen::VectorXd phi = (3.0 * g.array()).cos() + 0.2;
    phi /= std::sqrt(w_inner(w, phi, phi));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n01;
    Eigen::MatrixXd d(40, g.size());
    for (int i = 0; i < 40; ++i) d.row(i) = n01(rng) * phi.transpose();
    const FpcaModel m = ufpca(make_sample(g, d, Domain::Y));
    ASSERT_GE(m.components(), 1);
    EXPECT_LT(signed_gap(m.eigenfunctions.row(0).transpose(), phi), 1e-8);
    EXPECT_NEAR(m.pve[0], 1.0, 1e-12);
}

TEST(Ufpca, MatchesBruteForceDecomposition) {
    std::mt19937_64 rng(3);
    const Eigen::VectorXd g = control_grid();
    const Eigen::MatrixXd d = random_functions(rng, 300, g);
    const FpcaModel m = ufpca(make_sample(g, d, Domain::X));
    const auto bf = brute_force_fpca(g, d);
    ASSERT_GT(m.components(), 3);
    for (Eigen::Index k = 0; k < m.components(); ++k) {
        EXPECT_NEAR(m.eigenvalues[k], bf.eigenvalues[k], 1e-8);
        EXPECT_LT(signed_gap(m.scores.col(k), bf.scores.col(k)), 1e-8) << k;
    }
}

TEST(Ufpca, OrthonormalCenteredAndOriented) {
    std::mt19937_64 rng(4);
    const Eigen::VectorXd g = control_grid();
    const FpcaModel m = ufpca(make_sample(g, random_functions(rng, 80, g), Domain::X));
    const Eigen::VectorXd w = m.quad_weights;
    for (Eigen::Index j = 0; j < m.components(); ++j) {
        for (Eigen::Index k = 0; k < m.components(); ++k)
            EXPECT_NEAR(w_inner(w, m.eigenfunctions.row(j).transpose(), m.eigenfunctions.row(k).transpose()),
                        j == k ? 1.0 : 0.0, 1e-8);
        EXPECT_NEAR(m.scores.col(j).mean(), 0.0, 1e-8);
        Eigen::Index arg = 0;
        m.eigenfunctions.row(j).cwiseAbs().maxCoeff(&arg);
        EXPECT_GT(m.eigenfunctions(j, arg), 0.0);
        if (j > 0) {
            EXPECT_LE(m.eigenvalues[j], m.eigenvalues[j - 1]);
        }
    }
    EXPECT_GE(m.pve[m.components() - 1], 0.99);
    EXPECT_LT(m.pve[m.components() - 2], 0.99);
}

TEST(Ufpca, EigenvaluesScaleQuadratically) {
    std::mt19937_64 rng(5);
    const Eigen::VectorXd g = control_grid();
    const Eigen::MatrixXd d = random_functions(rng, 60, g);
    const FpcaModel a = ufpca(make_sample(g, d, Domain::X));
    const FpcaModel b = ufpca(make_sample(g, 2.5 * d, Domain::X));
    ASSERT_EQ(a.components(), b.components());
    EXPECT_LT((b.eigenvalues - 6.25 * a.eigenvalues).cwiseAbs().maxCoeff(), 1e-10 * b.eigenvalues[0]);
}

TEST(Ufpca, RejectsBadInput) {
    const Eigen::VectorXd g = control_grid();
    EXPECT_THROW(make_sample(g, Eigen::MatrixXd::Zero(1, g.size()), Domain::X), InvalidInputError);
    FunctionalSample s = make_sample(g, Eigen::MatrixXd::Zero(3, g.size()), Domain::X);
    s.quad_weights[0] *= 2.0;
    EXPECT_THROW(ufpca(s), InvalidInputError);
    EXPECT_THROW(ufpca(make_sample(g, Eigen::MatrixXd::Zero(3, g.size()), Domain::X), 1.5), InvalidInputError);
}

TEST(Reconstruct, TruncationBehaviour) {
    std::mt19937_64 rng(6);
    const Eigen::VectorXd g = control_grid();
    const Eigen::MatrixXd d = random_functions(rng, 12, g, 4, 0.0);
    const FpcaModel m = ufpca(make_sample(g, d, Domain::X), 1.0);
    for (Eigen::Index i = 0; i < 12; ++i) {
        EXPECT_EQ(reconstruct(m, i, 0), m.mean);
        double prev = INFINITY;
        for (Eigen::Index k = 0; k <= m.components(); ++k) {
            const double rms = std::sqrt((reconstruct(m, i, k) - d.row(i).transpose()).squaredNorm() / g.size());
            EXPECT_LE(rms, prev + 1e-12);
            prev = rms;
        }
        EXPECT_LT(prev, 1e-6);
    }
    EXPECT_THROW(reconstruct(m, 0, m.components() + 1), InvalidInputError);
}

// ---------------------------------------------------------------------------
// MFPCA
// ---------------------------------------------------------------------------

namespace {

FpcaModel score_model(const Eigen::MatrixXd& scores, Domain d) {
    // A univariate model whose scores are given directly.
    FpcaModel m;
    m.domain = d;
    m.grid = Eigen::VectorXd::LinSpaced(3, -1, 1);
    m.quad_weights = trapezoid_weights(m.grid);
    m.mean = Eigen::VectorXd::Zero(3);
    m.scores = scores;
    m.eigenvalues = Eigen::VectorXd::Ones(scores.cols());
    m.spectrum = m.eigenvalues;
    m.eigenfunctions = Eigen::MatrixXd::Zero(scores.cols(), 3);
    for (Eigen::Index k = 0; k < scores.cols(); ++k) m.eigenfunctions(k, k) = 1.0;
    m.pve = cumulative_pve(m.spectrum, scores.cols());
    return m;
}

} // namespace

TEST(Mfpca, HandEigenAnalysisOfTwoByTwo) {
    Eigen::MatrixXd sx(2, 1), sy(2, 1);
    sx << 1, -1;
    sy << 0, 0;
    const MfpcaModel m = mfpca(score_model(sx, Domain::X), score_model(sy, Domain::Y));
    Eigen::Matrix2d z;
    z << 2, 0, 0, 0;
    EXPECT_LT((m.z - z).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_NEAR(m.spectrum[0], 2.0, 1e-15);
    EXPECT_NEAR(m.spectrum[1], 0.0, 1e-15);
    EXPECT_NEAR(std::abs(m.full_weights(0, 0)), 1.0, 1e-15);
    EXPECT_NEAR(m.full_weights(1, 0), 0.0, 1e-15);
    EXPECT_EQ(m.retained(), 1);
}

TEST(Mfpca, ZeroYDomainContributesNothing) {
    std::mt19937_64 rng(7);
    const Eigen::VectorXd g = control_grid();
    const Eigen::MatrixXd dx = random_functions(rng, 50, g);
    const FpcaModel fx = ufpca(make_sample(g, dx, Domain::X));
    const FpcaModel fy = ufpca(make_sample(g, Eigen::MatrixXd::Zero(50, g.size()), Domain::Y));
    EXPECT_EQ(fy.components(), 0);
    const MfpcaModel m = mfpca(fx, fy);
    EXPECT_LT(m.eigenfunctions_y.cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((m.scores - fx.scores * m.weights.topRows(m.kx)).cwiseAbs().maxCoeff(), 1e-12);
    // The stacked scores are already decorrelated, so the rotation is a signed permutation.
    EXPECT_LT((m.eigenvalues - fx.eigenvalues.head(m.retained())).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Mfpca, TraceIdentityScoreCovarianceAndSwap) {
    std::mt19937_64 rng(8);
    const Eigen::VectorXd g = control_grid();
    const Eigen::MatrixXd dx = random_functions(rng, 500, g);
    const Eigen::MatrixXd dy = 0.5 * dx + random_functions(rng, 500, g);
    const FpcaModel fx = ufpca(make_sample(g, dx, Domain::X));
    const FpcaModel fy = ufpca(make_sample(g, dy, Domain::Y));
    const MfpcaModel m = mfpca(fx, fy);
    EXPECT_NEAR(m.spectrum.sum(), m.z.trace(), 1e-10);
    const Eigen::MatrixXd c = m.scores.rowwise() - m.scores.colwise().mean();
    const Eigen::MatrixXd cov = c.transpose() * c / 499.0;
    EXPECT_LT((cov - Eigen::MatrixXd(m.eigenvalues.asDiagonal())).cwiseAbs().maxCoeff(), 1e-6);
    const MfpcaModel swapped = mfpca(fy, fx);
    EXPECT_LT((swapped.spectrum - m.spectrum).cwiseAbs().maxCoeff(), 1e-10);
    // Orthonormal weights, non-increasing values, minimal L.
    EXPECT_LT((m.full_weights.transpose() * m.full_weights - Eigen::MatrixXd::Identity(m.z.rows(), m.z.rows()))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-10);
    const double total = m.spectrum.sum();
    EXPECT_GE(m.spectrum.head(m.retained()).sum() / total, 0.9);
    EXPECT_LT(m.spectrum.head(m.retained() - 1).sum() / total, 0.9);
}

TEST(Mfpca, EigenfunctionsCombineUnivariateOnes) {
    std::mt19937_64 rng(9);
    const Eigen::VectorXd g = control_grid();
    const FpcaModel fx = ufpca(make_sample(g, random_functions(rng, 60, g), Domain::X));
    const FpcaModel fy = ufpca(make_sample(g, random_functions(rng, 60, g), Domain::Y));
    const MfpcaModel m = mfpca(fx, fy);
    for (Eigen::Index l = 0; l < m.retained(); ++l) {
        Eigen::VectorXd px = Eigen::VectorXd::Zero(g.size()), py = Eigen::VectorXd::Zero(g.size());
        for (Eigen::Index k = 0; k < m.kx; ++k) px += m.weights(k, l) * fx.eigenfunctions.row(k).transpose();
        for (Eigen::Index k = 0; k < m.ky; ++k) py += m.weights(m.kx + k, l) * fy.eigenfunctions.row(k).transpose();
        EXPECT_LT((m.eigenfunctions_x.row(l).transpose() - px).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((m.eigenfunctions_y.row(l).transpose() - py).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Mfpca, ParticipantOrderMismatchRejected) {
    std::mt19937_64 rng(10);
    const Eigen::VectorXd g = control_grid();
    const Eigen::MatrixXd d = random_functions(rng, 3, g);
    const FpcaModel fx = ufpca(make_sample(g, d, Domain::X, {"a", "b", "c"}));
    const FpcaModel fy = ufpca(make_sample(g, d, Domain::Y, {"a", "c", "b"}));
    EXPECT_THROW(mfpca(fx, fy), InvalidInputError);
    const FpcaModel short_y = ufpca(make_sample(g, d.topRows(2), Domain::Y));
    EXPECT_THROW(mfpca(fx, short_y), InvalidInputError);
}

// ---------------------------------------------------------------------------
// Concatenated UFPCA
// ---------------------------------------------------------------------------

TEST(ConcatUfpca, ZeroYGivesXOnlyFunctions) {
    std::mt19937_64 rng(11);
    const Eigen::VectorXd g = control_grid();
    const Eigen::MatrixXd dx = random_functions(rng, 70, g);
    const auto sx = make_sample(g, dx, Domain::X);
    const auto sy = make_sample(g, Eigen::MatrixXd::Zero(70, g.size()), Domain::Y);
    const FpcaModel c = concat_ufpca(sx, sy);
    const FpcaModel x = ufpca(sx);
    ASSERT_EQ(c.components(), x.components());
    EXPECT_LT(c.domain_slice(Domain::Y).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index k = 0; k < c.components(); ++k)
        EXPECT_LT(signed_gap(c.domain_slice(Domain::X).row(k).transpose(), x.eigenfunctions.row(k).transpose()),
                  1e-8);
}

TEST(ConcatUfpca, TotalVarianceIsAdditive) {
    std::mt19937_64 rng(12);
    const Eigen::VectorXd g = control_grid();
    const auto sx = make_sample(g, random_functions(rng, 40, g), Domain::X);
    const auto sy = make_sample(g, random_functions(rng, 40, g), Domain::Y);
    EXPECT_NEAR(concat_ufpca(sx, sy).total_variance(), ufpca(sx).total_variance() + ufpca(sy).total_variance(),
                1e-10);
}

TEST(ConcatUfpca, AgreesWithMfpcaOnLeadingComponent) {
    std::mt19937_64 rng(13);
    const Eigen::VectorXd g = control_grid();
    std::normal_distribution<double> n01;
    Eigen::MatrixXd dx(300, g.size()), dy(300, g.size());
    const Eigen::ArrayXd bump = (-(g.array() - 0.1).square() / 0.09).exp();
    const Eigen::ArrayXd slope = 1.0 - g.array().square();
    for (int i = 0; i < 300; ++i) {
        const double s = 2.0 * n01(rng);
        dx.row(i) = (s * slope + 0.3 * n01(rng) * (2.0 * g.array()).sin()).matrix().transpose();
        dy.row(i) = (s * bump + 0.3 * n01(rng) * (3.0 * g.array()).cos()).matrix().transpose();
    }
    const auto sx = make_sample(g, dx, Domain::X), sy = make_sample(g, dy, Domain::Y);
    const MfpcaModel m = mfpca(ufpca(sx), ufpca(sy));
    const ConcatComparison c = compare_concat(m, concat_ufpca(sx, sy), 1);
    EXPECT_GT(c.cosine_x, 0.9);
    EXPECT_GT(c.cosine_y, 0.9);
    EXPECT_THROW(compare_concat(m, ufpca(sx), 1), InvalidInputError);
}

// ---------------------------------------------------------------------------
// PC deformations and per-period fits
// ---------------------------------------------------------------------------

TEST(PcDeformation, ScaleAndSymmetry) {
    std::mt19937_64 rng(14);
    const Eigen::VectorXd g = control_grid();
    const auto fields = fields_from(random_functions(rng, 30, g), random_functions(rng, 30, g), g);
    const PeriodFpca fit = fit_period(fields);
    const auto& mean = fit.mean_field;
    EXPECT_EQ(pc_deformation(fit.mfpca, mean, 1, 0.0).momenta, mean.momenta);
    const auto plus = pc_deformation(fit.mfpca, mean, 1);
    const auto minus = pc_deformation(fit.mfpca, mean, 1, -std::sqrt(fit.mfpca.eigenvalues[0]));
    EXPECT_LT(((plus.momenta + minus.momenta) / 2 - mean.momenta).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_TRUE(std::isfinite(plus.energy));
    EXPECT_GE(plus.energy, 0.0);
    EXPECT_NEAR(plus.energy, plus.momenta.squaredNorm(), 1e-12);
    EXPECT_THROW(pc_deformation(fit.mfpca, mean, 0, 1.0), InvalidInputError);
    EXPECT_THROW(pc_deformation(fit.mfpca, mean, fit.mfpca.retained() + 1, 1.0), InvalidInputError);
}

TEST(FitPeriod, MeanFieldAndIds) {
    std::mt19937_64 rng(15);
    const Eigen::VectorXd g = control_grid();
    const Eigen::MatrixXd mx = random_functions(rng, 20, g), my = random_functions(rng, 20, g);
    const PeriodFpca fit = fit_period(fields_from(mx, my, g, 1));
    EXPECT_EQ(fit.period, 1);
    EXPECT_LT((fit.mean_field.momenta.col(0) - mx.colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(fit.mfpca.participant_ids.front(), "s1000");
    auto bad = fields_from(mx, my, g, 1);
    bad[3].period = 0;
    EXPECT_THROW(fit_period(bad), InvalidInputError);
    bad = fields_from(mx, my, g, 1);
    bad[2].control_points(5, 0) += 0.01;
    EXPECT_THROW(fit_period(bad), InvalidInputError);
}

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

TEST(FpcaIo, PeriodJsonRoundTrip) {
    std::mt19937_64 rng(16);
    const Eigen::VectorXd g = control_grid();
    const PeriodFpca fit = fit_period(fields_from(random_functions(rng, 25, g), random_functions(rng, 25, g), g));
    std::stringstream ss;
    write_period_json(ss, fit);
    const PeriodFpca back = read_period_json(ss);
    EXPECT_EQ(back.period, fit.period);
    EXPECT_EQ(back.mfpca.eigenvalues, fit.mfpca.eigenvalues);
    EXPECT_EQ(back.mfpca.weights, fit.mfpca.weights);
    EXPECT_EQ(back.x.eigenfunctions, fit.x.eigenfunctions);
    EXPECT_EQ(back.mfpca.eigenfunctions_y, fit.mfpca.eigenfunctions_y);
    EXPECT_EQ(back.mean_field.momenta, fit.mean_field.momenta);
    EXPECT_EQ(back.mfpca.scores, fit.mfpca.scores);
}

TEST(FpcaIo, ScoresCsvAndPveTable) {
    std::mt19937_64 rng(17);
    const Eigen::VectorXd g = control_grid();
    const PeriodFpca a = fit_period(fields_from(random_functions(rng, 8, g), random_functions(rng, 8, g), g, 0));
    const PeriodFpca b = fit_period(fields_from(random_functions(rng, 8, g), random_functions(rng, 8, g), g, 1));
    std::stringstream ss;
    write_scores_csv_header(ss);
    write_scores_csv(ss, a);
    write_scores_csv(ss, b);
    const auto rows = read_scores_csv(ss);
    EXPECT_EQ(rows.size(), static_cast<std::size_t>(8 * (a.mfpca.retained() + b.mfpca.retained())));
    EXPECT_EQ(rows.front().pc, 1);
    EXPECT_EQ(rows.front().score, a.mfpca.scores(0, 0));
    std::stringstream pve;
    write_pve_table(pve, {a, b});
    std::string header;
    std::getline(pve, header);
    EXPECT_EQ(header.substr(0, 9), "component");
}
