#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "distglm/errors.hpp"
#include "distglm/linalg.hpp"

namespace distglm {

// ---------------------------------------------------------------------------
// Constraint set variants.  Each one describes a closed set together with a
// computable Euclidean projection.
// ---------------------------------------------------------------------------

// Vectors with at most k nonzero entries.
struct Sparsity {
    int k = 1;
};

// Vectors with nondecreasing entries.
struct Isotone {};

// Vectors that, reshaped column-by-column into a rows x cols matrix, have
// rank at most r.
struct Rank {
    int r = 1;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
};

// Coordinate-wise interval [lower, upper].
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

// Closed Euclidean ball around a center.
struct Ball {
    Eigen::VectorXd center;
    double radius = 1.0;
};

// Affine set { x : a' x = b }.
struct Hyperplane {
    Eigen::VectorXd a;
    double b = 0.0;
};

// Closed half-space { x : a' x <= b }.
struct HalfSpace {
    Eigen::VectorXd a;
    double b = 0.0;
};

// Nonnegative orthant.
struct NonNegative {};

using ConstraintSet =
    std::variant<Sparsity, Isotone, Rank, Box, Ball, Hyperplane, HalfSpace, NonNegative>;

// A constraint set paired with its penalty weight.
struct ConstraintSpec {
    ConstraintSet set;
    double weight = 1.0;
};

inline const char* set_name(const ConstraintSet& set) {
    struct Namer {
        const char* operator()(const Sparsity&) const { return "sparsity"; }
        const char* operator()(const Isotone&) const { return "isotone"; }
        const char* operator()(const Rank&) const { return "rank"; }
        const char* operator()(const Box&) const { return "box"; }
        const char* operator()(const Ball&) const { return "ball"; }
        const char* operator()(const Hyperplane&) const { return "hyperplane"; }
        const char* operator()(const HalfSpace&) const { return "halfspace"; }
        const char* operator()(const NonNegative&) const { return "nonnegative"; }
    };
    return std::visit(Namer{}, set);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

// Checks the internal parameters of a constraint against the ambient
// dimension n of the coefficient vector.
inline void validate(const ConstraintSpec& spec, Eigen::Index n) {
    if (!(spec.weight > 0.0) || !std::isfinite(spec.weight)) {
        throw InvalidInputError("constraint weight must be positive and finite, got " +
                                std::to_string(spec.weight));
    }
    struct Checker {
        Eigen::Index n;

        void operator()(const Sparsity& s) const {
            if (s.k < 1 || s.k > n) {
                throw InvalidInputError("sparsity level k = " + std::to_string(s.k) +
                                        " must lie in [1, " + std::to_string(n) + "]");
            }
        }
        void operator()(const Isotone&) const {}
        void operator()(const Rank& r) const {
            if (r.rows < 1 || r.cols < 1 || r.rows * r.cols != n) {
                throw InvalidInputError("rank constraint shape " + std::to_string(r.rows) + " x " +
                                        std::to_string(r.cols) +
                                        " does not match coefficient length " + std::to_string(n));
            }
            if (r.r < 1 || r.r > std::min(r.rows, r.cols)) {
                throw InvalidInputError("rank bound " + std::to_string(r.r) +
                                        " must lie in [1, " +
                                        std::to_string(std::min(r.rows, r.cols)) + "]");
            }
        }
        void operator()(const Box& b) const {
            if (b.lower.size() != n || b.upper.size() != n) {
                throw InvalidInputError("box bound lengths " + std::to_string(b.lower.size()) +
                                        ", " + std::to_string(b.upper.size()) +
                                        " do not match coefficient length " + std::to_string(n));
            }
            if (!b.lower.allFinite() || !b.upper.allFinite()) {
                throw InvalidInputError("box bounds must be finite");
            }
            if ((b.lower.array() > b.upper.array()).any()) {
                throw InvalidInputError("box lower bound exceeds upper bound in some coordinate");
            }
        }
        void operator()(const Ball& b) const {
            if (b.center.size() != n) {
                throw InvalidInputError("ball center length " + std::to_string(b.center.size()) +
                                        " does not match coefficient length " + std::to_string(n));
            }
            if (!b.center.allFinite() || !(b.radius > 0.0) || !std::isfinite(b.radius)) {
                throw InvalidInputError("ball needs a finite center and a positive radius");
            }
        }
        void operator()(const Hyperplane& h) const { check_normal(h.a, h.b, "hyperplane"); }
        void operator()(const HalfSpace& h) const { check_normal(h.a, h.b, "halfspace"); }
        void operator()(const NonNegative&) const {}

        void check_normal(const Eigen::VectorXd& a, double b, const char* what) const {
            if (a.size() != n) {
                throw InvalidInputError(std::string(what) + " normal length " +
                                        std::to_string(a.size()) +
                                        " does not match coefficient length " + std::to_string(n));
            }
            if (!a.allFinite() || !std::isfinite(b)) {
                throw InvalidInputError(std::string(what) + " parameters must be finite");
            }
            if (a.squaredNorm() == 0.0) {
                throw InvalidInputError(std::string(what) + " normal must be nonzero");
            }
        }
    };
    std::visit(Checker{n}, spec.set);
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

// Weighted least-squares fit under a nondecreasing order constraint, by
// pool-adjacent-violators: maintain a stack of blocks with their weighted
// means and merge whenever a new block breaks monotonicity.  O(n).
inline Eigen::VectorXd pava(const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    if (y.size() != w.size()) {
        throw InvalidInputError("pava value and weight lengths differ: " +
                                std::to_string(y.size()) + " vs " + std::to_string(w.size()));
    }
    if ((w.array() <= 0.0).any()) {
        throw InvalidInputError("pava weights must be positive");
    }
    struct Block {
        double mean;
        double weight;
        Eigen::Index len;
    };
    std::vector<Block> blocks;
    blocks.reserve(static_cast<std::size_t>(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        blocks.push_back({y[i], w[i], 1});
        while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
            const Block top = blocks.back();
            blocks.pop_back();
            Block& prev = blocks.back();
            const double total = prev.weight + top.weight;
            prev.mean = (prev.weight * prev.mean + top.weight * top.mean) / total;
            prev.weight = total;
            prev.len += top.len;
        }
    }
    Eigen::VectorXd out(y.size());
    Eigen::Index pos = 0;
    for (const Block& b : blocks) {
        out.segment(pos, b.len).setConstant(b.mean);
        pos += b.len;
    }
    return out;
}

inline Eigen::VectorXd pava(const Eigen::VectorXd& y) {
    return pava(y, Eigen::VectorXd::Ones(y.size()));
}

// Nearest matrix of rank at most r in Frobenius norm: keep the r leading
// singular triplets.
inline Eigen::MatrixXd truncate_rank(const Eigen::MatrixXd& B, int r) {
    if (r >= std::min(B.rows(), B.cols())) {
        if (r < 1) {
            throw InvalidInputError("rank bound must be at least 1, got " + std::to_string(r));
        }
        return B;  // constraint cannot bind
    }
    const TopSvd svd = top_r_svd(B, r);
    return svd.left * svd.values.asDiagonal() * svd.right.transpose();
}

namespace detail {

// Indices of the k entries of x largest in magnitude; magnitude ties are
// broken toward the lower index so the projection is deterministic.
inline std::vector<Eigen::Index> top_k_by_magnitude(const Eigen::VectorXd& x, int k) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const auto larger = [&x](Eigen::Index a, Eigen::Index b) {
        const double fa = std::abs(x[a]);
        const double fb = std::abs(x[b]);
        return fa > fb || (fa == fb && a < b);
    };
    std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(), larger);
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Projection and distance
// ---------------------------------------------------------------------------

// Euclidean projection of x onto the set.  For the nonconvex sets (sparsity,
// rank) ties are resolved deterministically as documented on the helpers.
inline Eigen::VectorXd project(const ConstraintSet& set, const Eigen::VectorXd& x) {
    struct Projector {
        const Eigen::VectorXd& x;

        Eigen::VectorXd operator()(const Sparsity& s) const {
            Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
            for (Eigen::Index i : detail::top_k_by_magnitude(x, s.k)) {
                out[i] = x[i];
            }
            return out;
        }
        Eigen::VectorXd operator()(const Isotone&) const { return pava(x); }
        Eigen::VectorXd operator()(const Rank& r) const {
            const Eigen::MatrixXd B =
                Eigen::Map<const Eigen::MatrixXd>(x.data(), r.rows, r.cols);
            const Eigen::MatrixXd truncated = truncate_rank(B, r.r);
            return Eigen::Map<const Eigen::VectorXd>(truncated.data(), truncated.size());
        }
        Eigen::VectorXd operator()(const Box& b) const {
            return x.cwiseMax(b.lower).cwiseMin(b.upper);
        }
        Eigen::VectorXd operator()(const Ball& b) const {
            const Eigen::VectorXd d = x - b.center;
            const double dist = d.norm();
            if (dist <= b.radius) return x;
            return b.center + (b.radius / dist) * d;
        }
        Eigen::VectorXd operator()(const Hyperplane& h) const {
            return x + ((h.b - h.a.dot(x)) / h.a.squaredNorm()) * h.a;
        }
        Eigen::VectorXd operator()(const HalfSpace& h) const {
            if (h.a.dot(x) <= h.b) return x;
            return x + ((h.b - h.a.dot(x)) / h.a.squaredNorm()) * h.a;
        }
        Eigen::VectorXd operator()(const NonNegative&) const { return x.cwiseMax(0.0); }
    };
    return std::visit(Projector{x}, set);
}

inline Eigen::VectorXd project(const ConstraintSpec& spec, const Eigen::VectorXd& x) {
    return project(spec.set, x);
}

// Squared Euclidean distance from x to the set.
inline double distance_sq(const ConstraintSet& set, const Eigen::VectorXd& x) {
    return (x - project(set, x)).squaredNorm();
}

inline double distance_sq(const ConstraintSpec& spec, const Eigen::VectorXd& x) {
    return distance_sq(spec.set, x);
}

}  // namespace distglm
