#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "distglm/errors.hpp"

namespace distglm {

// Natural parameters above this value make the Poisson cumulant exp(theta)
// overflow a double; evaluation beyond it is reported as a data problem.
inline constexpr double kPoissonThetaMax = 700.0;

enum class FamilyKind { Gaussian, Poisson, Bernoulli };

// One-parameter exponential family in canonical form with unit dispersion.
// The density is c(y) * exp(y * theta - cumulant(theta)); mean() and
// variance() are the first and second derivatives of the cumulant, so the
// mean function is also the inverse canonical link.
struct Family {
    FamilyKind kind = FamilyKind::Gaussian;

    static Family gaussian() { return Family{FamilyKind::Gaussian}; }
    static Family poisson() { return Family{FamilyKind::Poisson}; }
    static Family bernoulli() { return Family{FamilyKind::Bernoulli}; }

    const char* name() const {
        switch (kind) {
            case FamilyKind::Gaussian: return "gaussian";
            case FamilyKind::Poisson: return "poisson";
            case FamilyKind::Bernoulli: return "bernoulli";
        }
        return "unknown";
    }

    // Log-partition function psi(theta).
    double cumulant(double theta) const {
        switch (kind) {
            case FamilyKind::Gaussian:
                return 0.5 * theta * theta;
            case FamilyKind::Poisson:
                return std::exp(theta);
            case FamilyKind::Bernoulli:
                // log(1 + e^theta) without overflow for large |theta|.
                return theta >= 0.0 ? theta + std::log1p(std::exp(-theta))
                                    : std::log1p(std::exp(theta));
        }
        return 0.0;
    }

    // Mean function psi'(theta), the inverse canonical link.
    double mean(double theta) const {
        switch (kind) {
            case FamilyKind::Gaussian:
                return theta;
            case FamilyKind::Poisson:
                return std::exp(theta);
            case FamilyKind::Bernoulli:
                // Logistic function, evaluated from the side that avoids
                // overflow in the exponential.
                if (theta >= 0.0) {
                    return 1.0 / (1.0 + std::exp(-theta));
                }
                {
                    const double t = std::exp(theta);
                    return t / (1.0 + t);
                }
        }
        return 0.0;
    }

    // Variance function psi''(theta); nonnegative for every family.
    double variance(double theta) const {
        switch (kind) {
            case FamilyKind::Gaussian:
                return 1.0;
            case FamilyKind::Poisson:
                return std::exp(theta);
            case FamilyKind::Bernoulli: {
                // p(1-p) computed as t/(1+t)^2 with t = e^{-|theta|}; this
                // underflows gradually instead of hitting 0*1 cancellation.
                const double t = std::exp(-std::abs(theta));
                const double onep = 1.0 + t;
                return t / (onep * onep);
            }
        }
        return 0.0;
    }

    // Whether y is a legal response value for this family.
    bool valid_response(double y) const {
        if (!std::isfinite(y)) return false;
        switch (kind) {
            case FamilyKind::Gaussian:
                return true;
            case FamilyKind::Poisson:
                return y >= 0.0 && y == std::floor(y);
            case FamilyKind::Bernoulli:
                return y == 0.0 || y == 1.0;
        }
        return false;
    }
};

// Fixed design matrix (cases x predictors) with one response per case.
struct Dataset {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;

    Eigen::Index cases() const { return X.rows(); }
    Eigen::Index predictors() const { return X.cols(); }
};

// Checks that the dataset is shaped consistently, has finite entries, and
// that every response lies in the family's domain.
inline void validate(const Family& family, const Dataset& data) {
    if (data.X.rows() < 1 || data.X.cols() < 1) {
        throw InvalidInputError("dataset needs at least one case and one predictor, got " +
                                std::to_string(data.X.rows()) + " x " +
                                std::to_string(data.X.cols()));
    }
    if (data.y.size() != data.X.rows()) {
        throw InvalidInputError("response length " + std::to_string(data.y.size()) +
                                " does not match case count " + std::to_string(data.X.rows()));
    }
    if (!data.X.allFinite()) {
        throw InvalidInputError("design matrix contains non-finite entries");
    }
    for (Eigen::Index i = 0; i < data.y.size(); ++i) {
        if (!family.valid_response(data.y[i])) {
            throw InvalidInputError("response at case " + std::to_string(i) + " (" +
                                    std::to_string(data.y[i]) + ") is outside the " +
                                    family.name() + " domain");
        }
    }
}

// Average negative log-likelihood (1/m) * sum_j [psi(x_j' beta) - y_j x_j' beta],
// dropping the beta-free base-measure terms.  Throws NonFiniteObjectiveError
// naming the offending case when a term cannot be evaluated finitely.
inline double neg_loglik(const Family& family, const Dataset& data, const Eigen::VectorXd& beta) {
    if (beta.size() != data.predictors()) {
        throw InvalidInputError("coefficient length " + std::to_string(beta.size()) +
                                " does not match predictor count " +
                                std::to_string(data.predictors()));
    }
    const Eigen::VectorXd theta = data.X * beta;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        if (family.kind == FamilyKind::Poisson && theta[j] > kPoissonThetaMax) {
            throw NonFiniteObjectiveError(
                j, "poisson natural parameter " + std::to_string(theta[j]) + " at case " +
                       std::to_string(j) + " exceeds " + std::to_string(kPoissonThetaMax) +
                       "; the cumulant overflows");
        }
        const double term = family.cumulant(theta[j]) - data.y[j] * theta[j];
        if (!std::isfinite(term)) {
            throw NonFiniteObjectiveError(
                j, "likelihood term at case " + std::to_string(j) + " is not finite");
        }
        acc += term;
    }
    return acc / static_cast<double>(data.cases());
}

// Score vector X' (y - mu(theta)): the gradient of the unscaled
// log-likelihood.  Callers supply the 1/m factor and sign they need.
inline Eigen::VectorXd score(const Family& family, const Dataset& data,
                             const Eigen::VectorXd& beta) {
    const Eigen::VectorXd theta = data.X * beta;
    Eigen::VectorXd resid(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        resid[j] = data.y[j] - family.mean(theta[j]);
    }
    return data.X.transpose() * resid;
}

// Fisher information X' W X with W = diag(psi''(theta)); symmetric positive
// semidefinite by construction.
inline Eigen::MatrixXd information(const Family& family, const Dataset& data,
                                   const Eigen::VectorXd& beta) {
    const Eigen::VectorXd theta = data.X * beta;
    Eigen::VectorXd root_w(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        root_w[j] = std::sqrt(family.variance(theta[j]));
    }
    const Eigen::MatrixXd B = root_w.asDiagonal() * data.X;  // m x n
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(data.predictors(), data.predictors());
    info.selfadjointView<Eigen::Lower>().rankUpdate(B.transpose());
    info.triangularView<Eigen::StrictlyUpper>() = info.transpose();
    return info;
}

namespace detail {

// x * log(x / y) with the conventional limit 0 * log(0) = 0.
inline double xlog_ratio(double x, double y) {
    return x == 0.0 ? 0.0 : x * std::log(x / y);
}

}  // namespace detail

// Bregman divergence of the convex conjugate of the cumulant, expressed on
// the mean scale: the Gaussian case is half squared error, Poisson is
// relative entropy, Bernoulli is the binary divergence.  Nonnegative, zero
// iff p == q on the shared domain.
inline double bregman_divergence(const Family& family, double p, double q) {
    switch (family.kind) {
        case FamilyKind::Gaussian:
            return 0.5 * (p - q) * (p - q);
        case FamilyKind::Poisson:
            if (q <= 0.0) {
                throw InvalidInputError("poisson divergence needs q > 0, got " + std::to_string(q));
            }
            if (p < 0.0) {
                throw InvalidInputError("poisson divergence needs p >= 0, got " + std::to_string(p));
            }
            return detail::xlog_ratio(p, q) - p + q;
        case FamilyKind::Bernoulli:
            if (q <= 0.0 || q >= 1.0) {
                throw InvalidInputError("bernoulli divergence needs q in (0,1), got " +
                                        std::to_string(q));
            }
            if (p < 0.0 || p > 1.0) {
                throw InvalidInputError("bernoulli divergence needs p in [0,1], got " +
                                        std::to_string(p));
            }
            return detail::xlog_ratio(p, q) + detail::xlog_ratio(1.0 - p, 1.0 - q);
    }
    return 0.0;
}

}  // namespace distglm
