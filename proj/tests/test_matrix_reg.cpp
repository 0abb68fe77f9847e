#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "distglm/distglm.hpp"
#include "oracles.hpp"

using namespace distglm;

namespace {

// Draws a matrix dataset with Gaussian responses y_i = trace(X_i' B) + noise.
MatrixDataset gaussian_matrix_data(std::mt19937_64& rng, Eigen::Index m, Eigen::Index p,
                                   Eigen::Index q, const Eigen::MatrixXd& B, double noise_sd) {
    std::normal_distribution<double> unit(0.0, 1.0);
    MatrixDataset data;
    data.predictors.reserve(static_cast<std::size_t>(m));
    data.y.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        Eigen::MatrixXd Xi = oracles::random_matrix(rng, p, q, 0.5);
        data.y[i] = (Xi.transpose() * B).trace() + noise_sd * unit(rng);
        data.predictors.push_back(std::move(Xi));
    }
    return data;
}

}  // namespace

TEST_CASE("vec stacks the columns in order") {
    Eigen::MatrixXd M(2, 2);
    M << 1.0, 3.0,
         2.0, 4.0;
    const Eigen::VectorXd v = vec(M);
    REQUIRE(v.size() == 4);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 2.0);
    CHECK(v[2] == 3.0);
    CHECK(v[3] == 4.0);

    Eigen::MatrixXd R(2, 3);
    R << 1.0, 2.0, 3.0,
         4.0, 5.0, 6.0;
    const Eigen::VectorXd w = vec(R);
    Eigen::VectorXd expected(6);
    expected << 1.0, 4.0, 2.0, 5.0, 3.0, 6.0;
    CHECK(w == expected);
}

TEST_CASE("unvec inverts vec and validates the target shape") {
    auto rng = oracles::make_rng(101);
    const Eigen::MatrixXd M = oracles::random_matrix(rng, 5, 3);
    CHECK(unvec(vec(M), 5, 3) == M);

    const Eigen::VectorXd x = oracles::random_vector(rng, 12);
    CHECK(vec(unvec(x, 4, 3)) == x);
    CHECK(vec(unvec(x, 3, 4)) == x);

    CHECK_THROWS_AS(unvec(x, 5, 3), InvalidInputError);
    CHECK_THROWS_AS(unvec(x, 0, 12), InvalidInputError);
    CHECK_THROWS_AS(unvec(x, -4, -3), InvalidInputError);
}

TEST_CASE("the trace pairing equals the flattened inner product") {
    auto rng = oracles::make_rng(103);
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::MatrixXd X = oracles::random_matrix(rng, 4, 3);
        const Eigen::MatrixXd B = oracles::random_matrix(rng, 4, 3);
        const double lhs = (X.transpose() * B).trace();
        const double rhs = vec(X).dot(vec(B));
        CHECK(lhs == Catch::Approx(rhs).margin(1e-12));
    }
}

TEST_CASE("flatten lays predictors out as design rows") {
    auto rng = oracles::make_rng(107);
    MatrixDataset data;
    for (int i = 0; i < 3; ++i) {
        data.predictors.push_back(oracles::random_matrix(rng, 2, 2));
    }
    data.y = oracles::random_vector(rng, 3);

    const Dataset flat = flatten(data);
    REQUIRE(flat.X.rows() == 3);
    REQUIRE(flat.X.cols() == 4);
    for (Eigen::Index i = 0; i < 3; ++i) {
        CHECK(flat.X.row(i).transpose() == vec(data.predictors[static_cast<std::size_t>(i)]));
    }
    CHECK(flat.y == data.y);
}

TEST_CASE("matrix dataset validation rejects malformed input") {
    MatrixDataset empty;
    empty.y.resize(0);
    CHECK_THROWS_AS(validate(Family::gaussian(), empty), InvalidInputError);

    auto rng = oracles::make_rng(109);
    MatrixDataset ragged;
    ragged.predictors.push_back(oracles::random_matrix(rng, 2, 2));
    ragged.predictors.push_back(oracles::random_matrix(rng, 3, 2));
    ragged.y = oracles::random_vector(rng, 2);
    CHECK_THROWS_AS(validate(Family::gaussian(), ragged), InvalidInputError);

    MatrixDataset short_y;
    short_y.predictors.push_back(oracles::random_matrix(rng, 2, 2));
    short_y.predictors.push_back(oracles::random_matrix(rng, 2, 2));
    short_y.y = oracles::random_vector(rng, 1);
    CHECK_THROWS_AS(validate(Family::gaussian(), short_y), InvalidInputError);

    MatrixDataset bad_domain;
    bad_domain.predictors.push_back(oracles::random_matrix(rng, 2, 2));
    bad_domain.y.resize(1);
    bad_domain.y[0] = -1.0;
    CHECK_THROWS_AS(validate(Family::poisson(), bad_domain), InvalidInputError);
    bad_domain.y[0] = 0.5;
    CHECK_THROWS_AS(validate(Family::bernoulli(), bad_domain), InvalidInputError);
    bad_domain.y[0] = 1.0;
    CHECK_NOTHROW(validate(Family::bernoulli(), bad_domain));
}

TEST_CASE("a full-rank bound reproduces the unconstrained fit") {
    auto rng = oracles::make_rng(113);
    const Eigen::MatrixXd B_star = oracles::random_matrix(rng, 2, 3, 0.6);
    const MatrixDataset data = gaussian_matrix_data(rng, 40, 2, 3, B_star, 0.05);

    SolverConfig cfg;
    cfg.grad_tol = 1e-8;
    cfg.obj_tol = 1e-15;
    const MatrixFitResult mr = fit_matrix(Family::gaussian(), data, 2, cfg);
    const FitResult plain = fit(Family::gaussian(), flatten(data), {}, cfg);

    REQUIRE(mr.result.converged);
    REQUIRE(plain.converged);
    // A bound of min(p, q) admits every matrix: the projection is the
    // identity, the distance is exactly zero, and annealing stops after the
    // first sweep.
    CHECK(mr.result.constraint_distances[0] == 0.0);
    CHECK(mr.result.epoch_offsets.size() == 1);
    CHECK(mr.projected_coefficients == mr.coefficients);
    CHECK((vec(mr.coefficients) - plain.beta).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("fit_matrix matches a hand-assembled flattened fit") {
    auto rng = oracles::make_rng(127);
    const Eigen::MatrixXd B_star =
        oracles::random_vector(rng, 3) * oracles::random_vector(rng, 4).transpose();
    const MatrixDataset data = gaussian_matrix_data(rng, 30, 3, 4, B_star, 0.1);

    SolverConfig cfg;
    cfg.max_iter = 200;
    const Eigen::MatrixXd B0 = Eigen::MatrixXd::Zero(3, 4);
    const MatrixFitResult mr = fit_matrix(Family::gaussian(), data, 1, cfg, 2.5, B0);

    const std::vector<ConstraintSpec> specs{{Rank{1, 3, 4}, 2.5}};
    const FitResult manual =
        fit(Family::gaussian(), flatten(data), specs, cfg, vec(B0));

    // Same deterministic code path, so agreement is exact.
    CHECK(mr.result.beta == manual.beta);
    CHECK(mr.result.projected_beta == manual.projected_beta);
    CHECK(vec(mr.coefficients) == mr.result.beta);
    CHECK(vec(mr.projected_coefficients) == mr.result.projected_beta);
}

TEST_CASE("a rank-one signal is recovered from clean data") {
    auto rng = oracles::make_rng(131);
    const Eigen::MatrixXd B_star =
        oracles::random_vector(rng, 4) * oracles::random_vector(rng, 3).transpose();
    const MatrixDataset data = gaussian_matrix_data(rng, 60, 4, 3, B_star, 0.0);

    SolverConfig cfg;
    cfg.grad_tol = 1e-8;
    cfg.obj_tol = 1e-15;
    const MatrixFitResult mr = fit_matrix(Family::gaussian(), data, 1, cfg);

    REQUIRE(mr.result.converged);
    CHECK((mr.coefficients - B_star).norm() <= 1e-5);
    CHECK((mr.projected_coefficients - B_star).norm() <= 1e-5);
    CHECK(mr.result.constraint_distances[0] <= 1e-8);
}

TEST_CASE("the projected coefficient respects the rank bound on noisy data") {
    auto rng = oracles::make_rng(137);
    const Eigen::MatrixXd B_star =
        oracles::random_vector(rng, 6, 0.7) * oracles::random_vector(rng, 5, 0.7).transpose() +
        oracles::random_vector(rng, 6, 0.7) * oracles::random_vector(rng, 5, 0.7).transpose();
    const MatrixDataset data = gaussian_matrix_data(rng, 80, 6, 5, B_star, 0.1);

    const MatrixFitResult mr = fit_matrix(Family::gaussian(), data, 2);
    REQUIRE(mr.result.converged);

    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(mr.projected_coefficients);
    const Eigen::VectorXd sv = svd.singularValues();
    REQUIRE(sv.size() == 5);
    CHECK(sv[2] <= 1e-10 * (1.0 + sv[0]));
    // At the annealing cap the unprojected iterate sits essentially on the set.
    CHECK(mr.result.constraint_distances[0] <= 1e-4);
}

TEST_CASE("a rank-constrained count fit stays within the bound") {
    auto rng = oracles::make_rng(139);
    const Eigen::MatrixXd B_star =
        oracles::random_vector(rng, 3, 0.3) * oracles::random_vector(rng, 3, 0.3).transpose();
    std::normal_distribution<double> unit(0.0, 1.0);
    MatrixDataset data;
    data.y.resize(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
        Eigen::MatrixXd Xi = oracles::random_matrix(rng, 3, 3, 0.5);
        const double theta = (Xi.transpose() * B_star).trace();
        std::poisson_distribution<long> draw(std::exp(theta));
        data.y[i] = static_cast<double>(draw(rng));
        data.predictors.push_back(std::move(Xi));
    }

    const MatrixFitResult mr = fit_matrix(Family::poisson(), data, 1);
    REQUIRE(mr.result.converged);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(mr.projected_coefficients);
    CHECK(svd.singularValues()[1] <= 1e-10 * (1.0 + svd.singularValues()[0]));
}

TEST_CASE("shape and bound errors are rejected") {
    auto rng = oracles::make_rng(149);
    const Eigen::MatrixXd B_star = oracles::random_matrix(rng, 3, 3, 0.3);
    const MatrixDataset data = gaussian_matrix_data(rng, 10, 3, 3, B_star, 0.1);

    CHECK_THROWS_AS(fit_matrix(Family::gaussian(), data, 0), InvalidInputError);
    CHECK_THROWS_AS(fit_matrix(Family::gaussian(), data, 4), InvalidInputError);

    const Eigen::MatrixXd wrong = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(fit_matrix(Family::gaussian(), data, 1, {}, 1.0, wrong),
                    InvalidInputError);
}
