#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "distglm/errors.hpp"
#include "distglm/matrix_reg.hpp"
#include "distglm/solver.hpp"

namespace distglm {

// Simulated Poisson rows whose mean would exceed this are redrawn, so that
// generated counts stay representable and fits stay well scaled.
inline constexpr double kSimulationMeanCap = 1e6;

// Law of the nonzero effects: magnitude uniform on [lo, hi], sign uniform.
struct UniformSigned {
    double lo = 0.5;
    double hi = 1.5;
};

// Recipe for a sparse GLM simulation.
struct SimSpec {
    Eigen::Index predictors = 100;
    Eigen::Index cases = 200;
    int k_true = 5;                 // number of nonzero true coefficients
    Family family = Family::gaussian();
    double design_sd = std::sqrt(0.1);  // standard deviation of design entries
    UniformSigned effect_law{};
    std::uint64_t seed = 0;
};

struct SparseSim {
    Dataset data;
    Eigen::VectorXd beta_true;
    int regenerated_rows = 0;  // Poisson rows redrawn because of the mean cap
};

namespace detail {

// k distinct indices from 0..n-1 via partial Fisher-Yates; deterministic for
// a given generator state.
inline std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, int k,
                                                            std::mt19937_64& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace detail

// Draws a sparse-coefficient GLM dataset: design entries are independent
// centered Gaussians, the true coefficient has k_true signed-uniform nonzero
// entries on a random support, and responses follow the family at the
// canonical link.
inline SparseSim gen_sparse_glm(const SimSpec& spec) {
    if (spec.predictors < 1 || spec.cases < 1) {
        throw InvalidInputError("simulation needs at least one case and one predictor");
    }
    if (spec.k_true < 0 || spec.k_true > spec.predictors) {
        throw InvalidInputError("true support size " + std::to_string(spec.k_true) +
                                " must lie in [0, " + std::to_string(spec.predictors) + "]");
    }
    if (!(spec.design_sd > 0.0)) {
        throw InvalidInputError("design_sd must be positive");
    }
    if (!(spec.effect_law.lo > 0.0) || !(spec.effect_law.hi >= spec.effect_law.lo)) {
        throw InvalidInputError("effect magnitudes need 0 < lo <= hi");
    }

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> design(0.0, spec.design_sd);
    std::uniform_real_distribution<double> magnitude(spec.effect_law.lo, spec.effect_law.hi);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> unit_noise(0.0, 1.0);

    SparseSim sim;
    sim.beta_true = Eigen::VectorXd::Zero(spec.predictors);
    for (Eigen::Index i : detail::sample_without_replacement(spec.predictors, spec.k_true, rng)) {
        const double mag = magnitude(rng);
        sim.beta_true[i] = coin(rng) ? mag : -mag;
    }

    sim.data.X.resize(spec.cases, spec.predictors);
    sim.data.y.resize(spec.cases);
    Eigen::VectorXd row(spec.predictors);
    for (Eigen::Index i = 0; i < spec.cases; ++i) {
        constexpr int kMaxRedraws = 1000;
        int redraws = 0;
        while (true) {
            for (Eigen::Index j = 0; j < spec.predictors; ++j) {
                row[j] = design(rng);
            }
            const double theta = row.dot(sim.beta_true);
            if (spec.family.kind == FamilyKind::Poisson && std::exp(theta) > kSimulationMeanCap) {
                ++sim.regenerated_rows;
                if (++redraws >= kMaxRedraws) {
                    throw InvalidInputError(
                        "simulated poisson means keep exceeding the cap; shrink design_sd or "
                        "the effect magnitudes");
                }
                continue;
            }
            sim.data.X.row(i) = row.transpose();
            switch (spec.family.kind) {
                case FamilyKind::Gaussian:
                    sim.data.y[i] = theta + unit_noise(rng);
                    break;
                case FamilyKind::Poisson: {
                    std::poisson_distribution<long> counts(std::exp(theta));
                    sim.data.y[i] = static_cast<double>(counts(rng));
                    break;
                }
                case FamilyKind::Bernoulli: {
                    std::bernoulli_distribution flip(spec.family.mean(theta));
                    sim.data.y[i] = flip(rng) ? 1.0 : 0.0;
                    break;
                }
            }
            break;
        }
    }
    return sim;
}

// Cross-shaped rank-2 signal: amplitude on the union of a centered row band
// and a centered column band, zero elsewhere.  With row indicator u and
// column indicator z the image is amplitude * (u (1 - z)' + 1 z'), a sum of
// two outer products, so its rank is exactly 2 whenever 0 < band < size.
inline Eigen::MatrixXd gen_cross_signal(Eigen::Index size, Eigen::Index band,
                                        double amplitude = 1.0) {
    if (size < 1 || band < 0 || band > size) {
        throw InvalidInputError("cross signal needs 0 <= band <= size with size >= 1");
    }
    Eigen::VectorXd u = Eigen::VectorXd::Zero(size);
    const Eigen::Index start = (size - band) / 2;
    u.segment(start, band).setConstant(1.0);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(size);
    return amplitude * (u * (ones - u).transpose() + ones * u.transpose());
}

// Gaussian matrix-predictor responses: X_i has independent standard normal
// entries and y_i = trace(X_i' B0) + noise_sd * N(0, 1).
inline MatrixDataset gen_matrix_responses(const Eigen::MatrixXd& B0, Eigen::Index cases,
                                          double noise_sd, std::uint64_t seed) {
    if (cases < 1) {
        throw InvalidInputError("matrix response generation needs at least one case");
    }
    if (noise_sd < 0.0) {
        throw InvalidInputError("noise_sd must be nonnegative");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    MatrixDataset data;
    data.predictors.reserve(static_cast<std::size_t>(cases));
    data.y.resize(cases);
    for (Eigen::Index i = 0; i < cases; ++i) {
        Eigen::MatrixXd Xi(B0.rows(), B0.cols());
        for (Eigen::Index c = 0; c < Xi.cols(); ++c) {
            for (Eigen::Index r = 0; r < Xi.rows(); ++r) {
                Xi(r, c) = unit(rng);
            }
        }
        data.y[i] = (Xi.transpose() * B0).trace() + noise_sd * unit(rng);
        data.predictors.push_back(std::move(Xi));
    }
    return data;
}

// Poisson counts at an identity design with log-means on an ascending linear
// grid; the natural setting for an order-constrained fit.
inline Dataset gen_isotone_poisson(Eigen::Index n, double theta_lo, double theta_hi,
                                   std::uint64_t seed) {
    if (n < 1) {
        throw InvalidInputError("isotone simulation needs at least one case");
    }
    if (!(theta_lo <= theta_hi)) {
        throw InvalidInputError("isotone simulation needs theta_lo <= theta_hi");
    }
    std::mt19937_64 rng(seed);
    Dataset data;
    data.X = Eigen::MatrixXd::Identity(n, n);
    data.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        const double theta = theta_lo + t * (theta_hi - theta_lo);
        std::poisson_distribution<long> counts(std::exp(theta));
        data.y[i] = static_cast<double>(counts(rng));
    }
    return data;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Metrics {
    double mse = 0.0;                    // |bhat - btrue|^2 / predictors
    Eigen::VectorXd relative_error;      // per true-nonzero relative coefficient error
    double support_precision = 1.0;      // share of estimated nonzeros that are true nonzeros
    double support_recall = 1.0;         // share of true nonzeros that were estimated nonzero
    std::optional<double> misclassification;  // Bernoulli sign-rule error on the test set
};

// Compares an estimate against the truth.  Supports are read off exact zeros,
// so pass a projected (hard-thresholded) estimate.  An empty estimated
// support has precision 1 by convention, an empty true support recall 1.
inline Metrics metrics(const Family& family, const Eigen::VectorXd& beta_hat,
                       const Eigen::VectorXd& beta_true,
                       const std::optional<Dataset>& test = std::nullopt) {
    if (beta_hat.size() != beta_true.size()) {
        throw InvalidInputError("estimate length " + std::to_string(beta_hat.size()) +
                                " does not match truth length " + std::to_string(beta_true.size()));
    }
    Metrics out;
    out.mse = (beta_hat - beta_true).squaredNorm() / static_cast<double>(beta_true.size());

    Eigen::Index true_nonzero = 0, est_nonzero = 0, hits = 0;
    for (Eigen::Index i = 0; i < beta_true.size(); ++i) {
        const bool t = beta_true[i] != 0.0;
        const bool e = beta_hat[i] != 0.0;
        true_nonzero += t;
        est_nonzero += e;
        hits += t && e;
    }
    out.relative_error.resize(true_nonzero);
    for (Eigen::Index i = 0, r = 0; i < beta_true.size(); ++i) {
        if (beta_true[i] != 0.0) {
            out.relative_error[r++] = std::abs(beta_hat[i] - beta_true[i]) / std::abs(beta_true[i]);
        }
    }
    out.support_precision =
        est_nonzero == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(est_nonzero);
    out.support_recall =
        true_nonzero == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(true_nonzero);

    if (family.kind == FamilyKind::Bernoulli && test.has_value()) {
        validate(family, *test);
        if (test->predictors() != beta_hat.size()) {
            throw InvalidInputError("test set predictor count does not match the estimate");
        }
        const Eigen::VectorXd theta = test->X * beta_hat;
        Eigen::Index wrong = 0;
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            const double label = theta[i] > 0.0 ? 1.0 : 0.0;
            wrong += label != test->y[i];
        }
        out.misclassification = static_cast<double>(wrong) / static_cast<double>(theta.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CvResult {
    double chosen_level = 0.0;
    std::size_t chosen_index = 0;
    std::vector<double> levels;
    std::vector<double> losses;     // held-out mean negative log-likelihood per level
    std::vector<char> succeeded;    // whether every fold fit at that level
};

// K-fold selection of a constraint level: folds come from a seeded shuffle,
// each level is fit on every training split, and the level with the smallest
// held-out mean negative log-likelihood wins.  Ties go to the earliest level
// in the list, so order candidates from most to least constrained to prefer
// parsimony.  Held-out predictions use the projected estimate.
inline CvResult cross_validate(const Family& family, const Dataset& data,
                               const std::function<ConstraintSpec(double)>& make_constraint,
                               const std::vector<double>& levels, int folds,
                               const SolverConfig& cfg, std::uint64_t seed) {
    validate(family, data);
    if (levels.empty()) {
        throw InvalidInputError("cross-validation needs at least one candidate level");
    }
    if (folds < 2 || folds > data.cases()) {
        throw InvalidInputError("fold count " + std::to_string(folds) +
                                " must lie in [2, cases = " + std::to_string(data.cases()) + "]");
    }
    const Eigen::Index m = data.cases();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold_of(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) {
        fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] =
            static_cast<int>(j % folds);
    }

    CvResult out;
    out.levels = levels;
    out.losses.assign(levels.size(), std::numeric_limits<double>::quiet_NaN());
    out.succeeded.assign(levels.size(), 0);

    for (std::size_t li = 0; li < levels.size(); ++li) {
        const ConstraintSpec spec = make_constraint(levels[li]);
        double total = 0.0;
        bool ok = true;
        for (int f = 0; f < folds && ok; ++f) {
            Eigen::Index train_count = 0;
            for (int tag : fold_of) {
                train_count += tag != f;
            }
            Dataset train;
            train.X.resize(train_count, data.predictors());
            train.y.resize(train_count);
            Eigen::Index r = 0;
            for (Eigen::Index j = 0; j < m; ++j) {
                if (fold_of[static_cast<std::size_t>(j)] != f) {
                    train.X.row(r) = data.X.row(j);
                    train.y[r] = data.y[j];
                    ++r;
                }
            }
            try {
                const FitResult fitted = fit(family, train, {spec}, cfg);
                for (Eigen::Index j = 0; j < m; ++j) {
                    if (fold_of[static_cast<std::size_t>(j)] != f) continue;
                    const double theta = data.X.row(j).dot(fitted.projected_beta);
                    const double term =
                        family.kind == FamilyKind::Poisson && theta > kPoissonThetaMax
                            ? std::numeric_limits<double>::infinity()
                            : family.cumulant(theta) - data.y[j] * theta;
                    total += term;
                }
            } catch (const std::exception&) {
                ok = false;
            }
        }
        out.succeeded[li] = ok;
        if (ok) {
            out.losses[li] = total / static_cast<double>(m);
        }
    }

    bool found = false;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        if (!out.succeeded[li]) continue;
        if (!found || out.losses[li] < out.losses[out.chosen_index]) {
            out.chosen_index = li;
            out.chosen_level = levels[li];
            found = true;
        }
    }
    if (!found) {
        throw NumericalError("every candidate level failed to fit");
    }
    return out;
}

}  // namespace distglm
