#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "distglm/errors.hpp"
#include "distglm/solver.hpp"

namespace distglm {

// Column-major flattening of a matrix into a vector.
inline Eigen::VectorXd vec(const Eigen::MatrixXd& M) {
    return Eigen::Map<const Eigen::VectorXd>(M.data(), M.size());
}

// Inverse of vec: reshape a length p*q vector into a p x q matrix.
inline Eigen::MatrixXd unvec(const Eigen::VectorXd& x, Eigen::Index p, Eigen::Index q) {
    if (p < 1 || q < 1 || x.size() != p * q) {
        throw InvalidInputError("cannot reshape a length-" + std::to_string(x.size()) +
                                " vector into " + std::to_string(p) + " x " + std::to_string(q));
    }
    return Eigen::Map<const Eigen::MatrixXd>(x.data(), p, q);
}

// Regression data whose predictors are matrices: the linear predictor for
// case i is trace(X_i' B) = vec(X_i)' vec(B).
struct MatrixDataset {
    std::vector<Eigen::MatrixXd> predictors;
    Eigen::VectorXd y;

    Eigen::Index cases() const { return static_cast<Eigen::Index>(predictors.size()); }
    Eigen::Index rows() const { return predictors.empty() ? 0 : predictors.front().rows(); }
    Eigen::Index cols() const { return predictors.empty() ? 0 : predictors.front().cols(); }
};

inline void validate(const Family& family, const MatrixDataset& data) {
    if (data.predictors.empty()) {
        throw InvalidInputError("matrix dataset has no cases");
    }
    const Eigen::Index p = data.rows();
    const Eigen::Index q = data.cols();
    if (p < 1 || q < 1) {
        throw InvalidInputError("matrix predictors must be nonempty");
    }
    for (std::size_t i = 0; i < data.predictors.size(); ++i) {
        if (data.predictors[i].rows() != p || data.predictors[i].cols() != q) {
            throw InvalidInputError("matrix predictor " + std::to_string(i) + " is " +
                                    std::to_string(data.predictors[i].rows()) + " x " +
                                    std::to_string(data.predictors[i].cols()) +
                                    " but the first case is " + std::to_string(p) + " x " +
                                    std::to_string(q));
        }
    }
    if (data.y.size() != data.cases()) {
        throw InvalidInputError("matrix dataset has " + std::to_string(data.cases()) +
                                " predictors but " + std::to_string(data.y.size()) +
                                " responses");
    }
    for (Eigen::Index i = 0; i < data.y.size(); ++i) {
        if (!family.valid_response(data.y[i])) {
            throw InvalidInputError("response at case " + std::to_string(i) +
                                    " is outside the " + std::string(family.name()) + " domain");
        }
    }
}

// Flattens matrix predictors into the rows of an ordinary design matrix.
inline Dataset flatten(const MatrixDataset& data) {
    Dataset flat;
    flat.X.resize(data.cases(), data.rows() * data.cols());
    for (Eigen::Index i = 0; i < data.cases(); ++i) {
        flat.X.row(i) = vec(data.predictors[static_cast<std::size_t>(i)]).transpose();
    }
    flat.y = data.y;
    return flat;
}

struct MatrixFitResult {
    FitResult result;
    Eigen::MatrixXd coefficients;            // unvec of the final iterate
    Eigen::MatrixXd projected_coefficients;  // unvec of the projected iterate; rank <= r
};

// Fits a rank-constrained matrix coefficient by flattening the problem and
// attaching a rank constraint on the reshaped coefficient vector.
inline MatrixFitResult fit_matrix(const Family& family, const MatrixDataset& data, int rank_bound,
                                  const SolverConfig& cfg = {}, double weight = 1.0,
                                  std::optional<Eigen::MatrixXd> B0 = std::nullopt) {
    validate(family, data);
    const Eigen::Index p = data.rows();
    const Eigen::Index q = data.cols();
    const Dataset flat = flatten(data);
    const std::vector<ConstraintSpec> specs{
        ConstraintSpec{Rank{rank_bound, p, q}, weight}};
    std::optional<Eigen::VectorXd> beta0;
    if (B0.has_value()) {
        if (B0->rows() != p || B0->cols() != q) {
            throw InvalidInputError("starting coefficient is " + std::to_string(B0->rows()) +
                                    " x " + std::to_string(B0->cols()) + " but predictors are " +
                                    std::to_string(p) + " x " + std::to_string(q));
        }
        beta0 = vec(*B0);
    }
    MatrixFitResult out;
    out.result = fit(family, flat, specs, cfg, std::move(beta0));
    out.coefficients = unvec(out.result.beta, p, q);
    out.projected_coefficients = unvec(out.result.projected_beta, p, q);
    return out;
}

}  // namespace distglm
