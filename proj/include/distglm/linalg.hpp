#pragma once

#include <Eigen/Dense>
#include <string>

#include "distglm/errors.hpp"

namespace distglm {

// Solves A x = b for symmetric positive definite A via Cholesky, with one
// step of iterative refinement to tighten the residual.
inline Eigen::VectorXd solve_spd(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    if (A.rows() != A.cols()) {
        throw InvalidInputError("solve_spd needs a square matrix, got " +
                                std::to_string(A.rows()) + " x " + std::to_string(A.cols()));
    }
    if (b.size() != A.rows()) {
        throw InvalidInputError("solve_spd right-hand side length " + std::to_string(b.size()) +
                                " does not match matrix order " + std::to_string(A.rows()));
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("Cholesky factorization failed; matrix is not positive definite");
    }
    Eigen::VectorXd x = llt.solve(b);
    x += llt.solve(b - A * x);  // one refinement step
    return x;
}

// Implicit representation of H = v I + U V without forming the n x n matrix.
struct LowRankSystem {
    double v = 1.0;     // positive multiple of the identity
    Eigen::MatrixXd U;  // n x m factor
    Eigen::MatrixXd V;  // m x n factor

    Eigen::Index order() const { return U.rows(); }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return v * x + U * (V * x); }
};

// Solves (v I + U V) x = b through the m x m correction system
// (I + V U / v), so the cost scales with the smaller dimension m.
inline Eigen::VectorXd woodbury_solve(const LowRankSystem& sys, const Eigen::VectorXd& b) {
    if (sys.v <= 0.0) {
        throw InvalidInputError("woodbury_solve needs v > 0, got " + std::to_string(sys.v));
    }
    if (b.size() != sys.U.rows()) {
        throw InvalidInputError("woodbury_solve right-hand side length " +
                                std::to_string(b.size()) + " does not match system order " +
                                std::to_string(sys.U.rows()));
    }
    if (sys.V.rows() != sys.U.cols() || sys.V.cols() != sys.U.rows()) {
        throw InvalidInputError("woodbury_solve factor shapes are inconsistent");
    }
    const Eigen::Index m = sys.U.cols();
    if (m == 0) {
        return b / sys.v;
    }
    Eigen::MatrixXd correction = (sys.V * sys.U) / sys.v;
    correction.diagonal().array() += 1.0;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(correction);
    const Eigen::VectorXd vb = sys.V * b;
    const Eigen::VectorXd t = lu.solve(vb);
    // PartialPivLU does not signal rank deficiency, so check the residual of
    // the small system explicitly.
    const double resid = (correction * t - vb).norm();
    if (!(resid <= 1e-8 * (1.0 + vb.norm()))) {
        throw NumericalError("correction system in woodbury_solve is singular or ill-conditioned");
    }
    return b / sys.v - sys.U * t / (sys.v * sys.v);
}

// Leading r singular triplets of a dense matrix.
struct TopSvd {
    Eigen::VectorXd values;  // r singular values, nonincreasing
    Eigen::MatrixXd left;    // p x r, orthonormal columns
    Eigen::MatrixXd right;   // q x r, orthonormal columns
};

inline TopSvd top_r_svd(const Eigen::MatrixXd& B, int r) {
    const Eigen::Index max_rank = std::min(B.rows(), B.cols());
    if (r < 1 || r > max_rank) {
        throw InvalidInputError("requested " + std::to_string(r) +
                                " singular triplets from a " + std::to_string(B.rows()) + " x " +
                                std::to_string(B.cols()) + " matrix");
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        throw NumericalError("singular value decomposition did not converge");
    }
    TopSvd out;
    out.values = svd.singularValues().head(r);
    out.left = svd.matrixU().leftCols(r);
    out.right = svd.matrixV().leftCols(r);
    return out;
}

}  // namespace distglm
