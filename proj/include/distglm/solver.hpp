#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "distglm/constraints.hpp"
#include "distglm/errors.hpp"
#include "distglm/family.hpp"
#include "distglm/linalg.hpp"

namespace distglm {

enum class WoodburyMode { Auto, Always, Never };

enum class Termination { GradTol, ObjTol, MaxIter };

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::GradTol: return "grad_tol";
        case Termination::ObjTol: return "obj_tol";
        case Termination::MaxIter: return "max_iter";
    }
    return "unknown";
}

struct SolverConfig {
    double armijo_alpha = 1e-4;    // sufficient-decrease constant, in (0, 1)
    double halving_sigma = 0.5;    // step-halving factor, in (0, 1)
    double grad_tol = 1e-8;        // stop when the gradient norm falls below this
    double obj_tol = 1e-10;        // ... or the relative objective change does
    int max_iter = 500;            // iteration budget per weight epoch
    int max_backtracks = 50;       // halving budget per line search
    double ridge_omega = 0.0;      // coefficient of the squared-norm regularizer
    double anneal_rho = 10.0;      // weight multiplier between epochs; 1 fixes weights
    double anneal_cap = 1e8;       // weights are never annealed beyond this
    int qn_secants = 2;            // secant pairs for acceleration; 0 disables it
    WoodburyMode use_woodbury = WoodburyMode::Auto;
    double woodbury_crossover = 0.5;  // Auto factors the solve when cases < this * predictors
    double divergence_bound = 1e6;    // |beta| beyond this means the objective is not coercive
};

inline void validate(const SolverConfig& cfg) {
    const auto in_unit = [](double x) { return x > 0.0 && x < 1.0; };
    if (!in_unit(cfg.armijo_alpha)) {
        throw InvalidInputError("armijo_alpha must lie in (0, 1)");
    }
    if (!in_unit(cfg.halving_sigma)) {
        throw InvalidInputError("halving_sigma must lie in (0, 1)");
    }
    if (!(cfg.grad_tol > 0.0) || !(cfg.obj_tol > 0.0)) {
        throw InvalidInputError("grad_tol and obj_tol must be positive");
    }
    if (cfg.max_iter < 1) {
        throw InvalidInputError("max_iter must be at least 1");
    }
    if (cfg.max_backtracks < 0) {
        throw InvalidInputError("max_backtracks must be nonnegative");
    }
    if (!(cfg.ridge_omega >= 0.0) || !std::isfinite(cfg.ridge_omega)) {
        throw InvalidInputError("ridge_omega must be finite and nonnegative");
    }
    if (!(cfg.anneal_rho >= 1.0) || !std::isfinite(cfg.anneal_rho)) {
        throw InvalidInputError("anneal_rho must be finite and at least 1");
    }
    if (!(cfg.anneal_cap > 0.0)) {
        throw InvalidInputError("anneal_cap must be positive");
    }
    if (cfg.qn_secants < 0) {
        throw InvalidInputError("qn_secants must be nonnegative");
    }
    if (!(cfg.woodbury_crossover > 0.0)) {
        throw InvalidInputError("woodbury_crossover must be positive");
    }
    if (!(cfg.divergence_bound > 0.0)) {
        throw InvalidInputError("divergence_bound must be positive");
    }
}

// ---------------------------------------------------------------------------
// Objective, gradient, surrogate curvature
// ---------------------------------------------------------------------------

// Penalized objective: half the weighted squared distances to the constraint
// sets, plus the average negative log-likelihood, plus an optional ridge term.
inline double objective(const Family& family, const Dataset& data,
                        const std::vector<ConstraintSpec>& specs, const Eigen::VectorXd& beta,
                        double omega = 0.0) {
    double acc = 0.0;
    for (const ConstraintSpec& spec : specs) {
        validate(spec, beta.size());
        acc += 0.5 * spec.weight * distance_sq(spec, beta);
    }
    acc += neg_loglik(family, data, beta);
    if (omega != 0.0) {
        acc += omega * beta.squaredNorm();
    }
    return acc;
}

// Gradient of the objective.  Each half-squared-distance term differentiates
// to the displacement from the projection, wherever the projection is unique.
inline Eigen::VectorXd objective_gradient(const Family& family, const Dataset& data,
                                          const std::vector<ConstraintSpec>& specs,
                                          const Eigen::VectorXd& beta, double omega = 0.0) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(beta.size());
    for (const ConstraintSpec& spec : specs) {
        validate(spec, beta.size());
        g += spec.weight * (beta - project(spec, beta));
    }
    g -= score(family, data, beta) / static_cast<double>(data.cases());
    if (omega != 0.0) {
        g += 2.0 * omega * beta;
    }
    return g;
}

// Curvature of the quadratic surrogate: (sum of weights + 2 omega) I plus the
// averaged Fisher information.  Stored either densely or in factored form.
using SurrogateHessian = std::variant<Eigen::MatrixXd, LowRankSystem>;

namespace detail {

inline double penalty_mass(const std::vector<ConstraintSpec>& specs, double omega) {
    double total = 2.0 * omega;
    for (const ConstraintSpec& spec : specs) {
        total += spec.weight;
    }
    return total;
}

inline bool prefer_factored(WoodburyMode mode, Eigen::Index cases, Eigen::Index predictors,
                            double crossover) {
    switch (mode) {
        case WoodburyMode::Always: return true;
        case WoodburyMode::Never: return false;
        case WoodburyMode::Auto:
            return static_cast<double>(cases) < crossover * static_cast<double>(predictors);
    }
    return false;
}

// Square roots of the per-case surrogate weights psi''(theta_j) / m.
inline Eigen::VectorXd root_case_weights(const Family& family, const Dataset& data,
                                         const Eigen::VectorXd& beta) {
    const Eigen::VectorXd theta = data.X * beta;
    const double m = static_cast<double>(data.cases());
    Eigen::VectorXd root_w(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        root_w[j] = std::sqrt(family.variance(theta[j]) / m);
    }
    return root_w;
}

}  // namespace detail

inline SurrogateHessian surrogate_hessian(const Family& family, const Dataset& data,
                                          const std::vector<ConstraintSpec>& specs,
                                          const Eigen::VectorXd& beta, double omega = 0.0,
                                          WoodburyMode mode = WoodburyMode::Auto,
                                          double crossover = 0.5) {
    const double v = detail::penalty_mass(specs, omega);
    // The factored form (v I + U U') needs a positive identity part to invert
    // around; without any penalty mass, fall back to the dense matrix.
    if (v > 0.0 && detail::prefer_factored(mode, data.cases(), data.predictors(), crossover)) {
        const Eigen::VectorXd root_w = detail::root_case_weights(family, data, beta);
        LowRankSystem sys;
        sys.v = v;
        sys.U = data.X.transpose() * root_w.asDiagonal();
        sys.V = sys.U.transpose();
        return sys;
    }
    Eigen::MatrixXd H = information(family, data, beta) / static_cast<double>(data.cases());
    H.diagonal().array() += v;
    return H;
}

inline Eigen::VectorXd hessian_apply(const SurrogateHessian& H, const Eigen::VectorXd& x) {
    if (const auto* dense = std::get_if<Eigen::MatrixXd>(&H)) {
        return (*dense).selfadjointView<Eigen::Lower>() * x;
    }
    return std::get<LowRankSystem>(H).apply(x);
}

inline Eigen::VectorXd hessian_solve(const SurrogateHessian& H, const Eigen::VectorXd& b) {
    if (const auto* dense = std::get_if<Eigen::MatrixXd>(&H)) {
        return solve_spd(*dense, b);
    }
    return woodbury_solve(std::get<LowRankSystem>(H), b);
}

// ---------------------------------------------------------------------------
// Line search
// ---------------------------------------------------------------------------

struct ArmijoResult {
    double eta = 1.0;           // accepted step length
    Eigen::VectorXd beta_next;  // accepted trial point
    int halvings = 0;           // number of backtracks performed
};

// Backtracking line search: starting from a unit step along a descent
// direction, halve (by halving_sigma) until the sufficient-decrease condition
//   f(beta + eta v) <= f(beta) + armijo_alpha * eta * grad' v
// holds.  The objective callable may return +infinity to reject a trial.
template <class F>
ArmijoResult armijo_step(F&& f_at, const Eigen::VectorXd& beta, const Eigen::VectorXd& direction,
                         const Eigen::VectorXd& gradient, const SolverConfig& cfg) {
    const double slope = gradient.dot(direction);
    if (!(slope < 0.0)) {
        throw NumericalError("line search needs a descent direction; directional derivative = " +
                             std::to_string(slope));
    }
    const double f0 = f_at(beta);
    double eta = 1.0;
    for (int halvings = 0; halvings <= cfg.max_backtracks; ++halvings) {
        Eigen::VectorXd trial = beta + eta * direction;
        const double f_trial = f_at(trial);
        if (f_trial <= f0 + cfg.armijo_alpha * eta * slope) {
            return ArmijoResult{eta, std::move(trial), halvings};
        }
        eta *= cfg.halving_sigma;
    }
    throw StagnationError("no sufficient decrease within " + std::to_string(cfg.max_backtracks) +
                          " step halvings");
}

// ---------------------------------------------------------------------------
// Secant acceleration
// ---------------------------------------------------------------------------

// History of (input, output) evaluations of the iteration map, oldest first.
using MapHistory = std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>>;

// Extrapolates a better iterate from successive differences of the iteration
// map: with U and W holding the input and output differences, the candidate
// is M(beta) + W (U'U - U'W)^{-1} U'(M(beta) - beta).  Returns the candidate
// only when it strictly improves the objective over the plain map value;
// a singular secant system with zero right-hand side (an exact fixed point)
// short-circuits to the map value itself.
template <class F>
std::optional<Eigen::VectorXd> qn_accelerate(const MapHistory& history, F&& f_at) {
    if (history.size() < 2) {
        return std::nullopt;
    }
    const Eigen::Index q = static_cast<Eigen::Index>(history.size()) - 1;
    const Eigen::Index n = history.front().first.size();
    Eigen::MatrixXd U(n, q);
    Eigen::MatrixXd W(n, q);
    for (Eigen::Index i = 0; i < q; ++i) {
        const auto& older = history[static_cast<std::size_t>(i)];
        const auto& newer = history[static_cast<std::size_t>(i) + 1];
        U.col(i) = newer.first - older.first;
        W.col(i) = newer.second - older.second;
    }
    const Eigen::VectorXd residual = history.back().second - history.back().first;
    const Eigen::MatrixXd A = U.transpose() * (U - W);
    const Eigen::VectorXd rhs = U.transpose() * residual;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) {
        if (rhs.norm() == 0.0) {
            return history.back().second;  // stalled history: the map value is the candidate
        }
        return std::nullopt;
    }
    Eigen::VectorXd candidate = history.back().second + W * lu.solve(rhs);
    if (!candidate.allFinite()) {
        return std::nullopt;
    }
    if (!(f_at(candidate) < f_at(history.back().second))) {
        return std::nullopt;
    }
    return candidate;
}

// ---------------------------------------------------------------------------
// One iteration of the solver
// ---------------------------------------------------------------------------

// Mutable state threaded through the iterations of one fit.  The constraint
// copies carry the weights of the current epoch.
struct SolverState {
    Eigen::VectorXd beta;
    std::vector<ConstraintSpec> specs;
    double objective_value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd row_gram;  // X X', cached when the factored solve is active
    MapHistory map_history;
    int iterations = 0;
    int backtracks = 0;
    double last_step_norm = 0.0;
};

inline SolverState make_state(const Family& family, const Dataset& data,
                              const std::vector<ConstraintSpec>& specs, const SolverConfig& cfg,
                              const Eigen::VectorXd& beta0) {
    SolverState state;
    state.beta = beta0;
    state.specs = specs;
    if (detail::penalty_mass(specs, cfg.ridge_omega) > 0.0 &&
        detail::prefer_factored(cfg.use_woodbury, data.cases(), data.predictors(),
                                cfg.woodbury_crossover)) {
        // The row Gram matrix X X' never changes, so the factored solve can
        // reuse it across iterations and epochs.
        state.row_gram = Eigen::MatrixXd::Zero(data.cases(), data.cases());
        state.row_gram.selfadjointView<Eigen::Lower>().rankUpdate(data.X);
        state.row_gram.triangularView<Eigen::StrictlyUpper>() = state.row_gram.transpose();
    }
    state.objective_value = objective(family, data, specs, state.beta, cfg.ridge_omega);
    state.gradient = objective_gradient(family, data, specs, state.beta, cfg.ridge_omega);
    return state;
}

namespace detail {

// Newton direction through the factored curvature, reusing the cached row
// Gram: solving (v I + U U') d = g via the cases-sized correction system
// (I + D^{1/2} (X X') D^{1/2} / v) with D the per-case surrogate weights.
inline Eigen::VectorXd factored_direction(const SolverState& state, const Family& family,
                                          const Dataset& data, double v) {
    const Eigen::VectorXd root_w = root_case_weights(family, data, state.beta);
    Eigen::MatrixXd correction =
        root_w.asDiagonal() * state.row_gram * root_w.asDiagonal() / v;
    correction.diagonal().array() += 1.0;
    const Eigen::LLT<Eigen::MatrixXd> llt(correction);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("factored curvature correction is not positive definite");
    }
    const Eigen::VectorXd vg = root_w.cwiseProduct(data.X * state.gradient);
    const Eigen::VectorXd t = llt.solve(vg);
    return -(state.gradient / v - data.X.transpose() * root_w.cwiseProduct(t) / (v * v));
}

}  // namespace detail

// Performs one iteration: build the surrogate curvature at the current point,
// take a damped Newton step on it, then try to improve the result by secant
// acceleration.  A state whose gradient is already below grad_tol is a fixed
// point and is left untouched.
inline void mm_step(SolverState& state, const Family& family, const Dataset& data,
                    const SolverConfig& cfg) {
    if (state.gradient.norm() <= cfg.grad_tol) {
        return;
    }
    const double v = detail::penalty_mass(state.specs, cfg.ridge_omega);

    Eigen::VectorXd direction;
    if (state.row_gram.size() > 0 && v > 0.0) {
        direction = detail::factored_direction(state, family, data, v);
    } else {
        const SurrogateHessian H =
            surrogate_hessian(family, data, state.specs, state.beta, cfg.ridge_omega,
                              WoodburyMode::Never, cfg.woodbury_crossover);
        direction = -hessian_solve(H, state.gradient);
    }

    auto f_at = [&](const Eigen::VectorXd& b) {
        try {
            return objective(family, data, state.specs, b, cfg.ridge_omega);
        } catch (const NonFiniteObjectiveError&) {
            // An overflowing trial point just fails the decrease condition.
            return std::numeric_limits<double>::infinity();
        }
    };

    ArmijoResult ls = armijo_step(f_at, state.beta, direction, state.gradient, cfg);
    state.backtracks += ls.halvings;

    Eigen::VectorXd next = std::move(ls.beta_next);
    if (cfg.qn_secants > 0) {
        state.map_history.emplace_back(state.beta, next);
        while (state.map_history.size() > static_cast<std::size_t>(cfg.qn_secants) + 1) {
            state.map_history.pop_front();
        }
        if (state.map_history.size() == static_cast<std::size_t>(cfg.qn_secants) + 1) {
            if (std::optional<Eigen::VectorXd> accelerated =
                    qn_accelerate(state.map_history, f_at)) {
                next = std::move(*accelerated);
            }
        }
    }

    state.last_step_norm = (next - state.beta).norm();
    state.beta = std::move(next);
    state.objective_value = f_at(state.beta);
    state.gradient = objective_gradient(family, data, state.specs, state.beta, cfg.ridge_omega);
    ++state.iterations;
}

// ---------------------------------------------------------------------------
// Full fit
// ---------------------------------------------------------------------------

struct FitResult {
    Eigen::VectorXd beta;            // final iterate
    Eigen::VectorXd projected_beta;  // final iterate pushed through each constraint in turn
    std::vector<double> objective_trace;   // objective at each epoch start and after each step
    std::vector<double> grad_norm_trace;   // gradient norms aligned with objective_trace
    std::vector<std::size_t> epoch_offsets;          // trace position where each epoch begins
    std::vector<std::vector<double>> epoch_weights;  // penalty weights used in each epoch
    std::vector<std::vector<double>> epoch_distances;  // squared distances at each epoch's end
    std::vector<double> constraint_distances;          // final squared distances, one per set
    double last_step_norm = 0.0;
    int iterations = 0;
    int total_backtracks = 0;
    bool converged = false;
    Termination termination = Termination::MaxIter;
};

// Minimizes the penalized objective by damped Newton steps on the quadratic
// surrogate, annealing the penalty weights toward the cap between epochs so
// the iterate is driven into the constraint sets.
inline FitResult fit(const Family& family, const Dataset& data,
                     const std::vector<ConstraintSpec>& specs, const SolverConfig& cfg = {},
                     std::optional<Eigen::VectorXd> beta0 = std::nullopt) {
    validate(cfg);
    validate(family, data);
    const Eigen::Index n = data.predictors();
    for (const ConstraintSpec& spec : specs) {
        validate(spec, n);
    }
    Eigen::VectorXd start = beta0.has_value() ? std::move(*beta0) : Eigen::VectorXd::Zero(n);
    if (start.size() != n) {
        throw InvalidInputError("starting point length " + std::to_string(start.size()) +
                                " does not match predictor count " + std::to_string(n));
    }
    if (!start.allFinite()) {
        throw InvalidInputError("starting point must be finite");
    }

    SolverState state = make_state(family, data, specs, cfg, start);
    FitResult out;
    bool failed = false;
    Termination term = Termination::MaxIter;

    while (true) {
        // A weight change redefines the objective and the iteration map, so
        // refresh the cached values and drop stale secant pairs.
        state.objective_value =
            objective(family, data, state.specs, state.beta, cfg.ridge_omega);
        state.gradient =
            objective_gradient(family, data, state.specs, state.beta, cfg.ridge_omega);
        state.map_history.clear();

        out.epoch_offsets.push_back(out.objective_trace.size());
        {
            std::vector<double> weights;
            weights.reserve(state.specs.size());
            for (const ConstraintSpec& spec : state.specs) {
                weights.push_back(spec.weight);
            }
            out.epoch_weights.push_back(std::move(weights));
        }
        out.objective_trace.push_back(state.objective_value);
        out.grad_norm_trace.push_back(state.gradient.norm());

        bool epoch_done = false;
        term = Termination::MaxIter;
        for (int it = 0; it < cfg.max_iter; ++it) {
            if (state.gradient.norm() <= cfg.grad_tol) {
                term = Termination::GradTol;
                epoch_done = true;
                break;
            }
            const double f_before = state.objective_value;
            try {
                mm_step(state, family, data, cfg);
            } catch (const StagnationError&) {
                failed = true;
                break;
            }
            out.objective_trace.push_back(state.objective_value);
            out.grad_norm_trace.push_back(state.gradient.norm());
            if (state.beta.norm() > cfg.divergence_bound) {
                throw CoercivityError(
                    "iterates diverged (|beta| exceeded " + std::to_string(cfg.divergence_bound) +
                    "); the objective appears to have no finite minimizer -- set ridge_omega > 0 "
                    "to restore coercivity");
            }
            if (std::abs(f_before - state.objective_value) <=
                cfg.obj_tol * (1.0 + std::abs(f_before))) {
                term = Termination::ObjTol;
                epoch_done = true;
                break;
            }
        }
        if (!epoch_done && !failed && state.gradient.norm() <= cfg.grad_tol) {
            // The budget ran out exactly when the gradient test would pass.
            term = Termination::GradTol;
            epoch_done = true;
        }

        std::vector<double> dists;
        dists.reserve(state.specs.size());
        for (const ConstraintSpec& spec : state.specs) {
            dists.push_back(distance_sq(spec, state.beta));
        }
        out.epoch_distances.push_back(dists);

        if (!epoch_done) {
            failed = true;
        }
        if (failed) {
            break;
        }
        if (cfg.anneal_rho == 1.0 || state.specs.empty()) {
            break;
        }
        bool feasible = true;
        bool capped = true;
        for (std::size_t i = 0; i < state.specs.size(); ++i) {
            feasible = feasible && dists[i] <= cfg.grad_tol;
            capped = capped && state.specs[i].weight >= cfg.anneal_cap;
        }
        if (feasible || capped) {
            break;
        }
        for (ConstraintSpec& spec : state.specs) {
            spec.weight = std::min(spec.weight * cfg.anneal_rho, cfg.anneal_cap);
        }
    }

    out.beta = state.beta;
    Eigen::VectorXd projected = state.beta;
    for (const ConstraintSpec& spec : specs) {
        projected = project(spec, projected);
    }
    out.projected_beta = std::move(projected);
    out.constraint_distances.reserve(specs.size());
    for (const ConstraintSpec& spec : specs) {
        out.constraint_distances.push_back(distance_sq(spec, state.beta));
    }
    out.last_step_norm = state.last_step_norm;
    out.iterations = state.iterations;
    out.total_backtracks = state.backtracks;
    out.converged = !failed;
    out.termination = failed ? Termination::MaxIter : term;
    return out;
}

}  // namespace distglm
