// Command-line front end: CSV ingestion, constraint clause parsing, fitting,
// simulation, cross-validation, and seeded benchmark suites with JSON output.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "distglm/distglm.hpp"

using nlohmann::json;
using namespace distglm;

namespace {

using distglm::detail::append_number;
using distglm::detail::parse_cell;

// ---------------------------------------------------------------------------
// Small utilities
// ---------------------------------------------------------------------------

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Shortest round-trip decimal formatting, matching the CSV writer.
std::string format_number(double value) {
    std::string s;
    append_number(s, value);
    return s;
}

Family family_from_name(const std::string& name) {
    const std::string key = lower(name);
    if (key == "gaussian") return Family::gaussian();
    if (key == "poisson") return Family::poisson();
    if (key == "bernoulli") return Family::bernoulli();
    throw InvalidInputError("unknown family '" + name +
                            "'; expected gaussian, poisson, or bernoulli");
}

const char* woodbury_name(WoodburyMode mode) {
    switch (mode) {
        case WoodburyMode::Auto: return "auto";
        case WoodburyMode::Always: return "always";
        case WoodburyMode::Never: return "never";
    }
    return "auto";
}

// Classifies an exception into a stable machine-readable tag and flattens the
// message onto one line.
std::string one_line_error(const std::exception& e) {
    const char* tag = "error";
    if (dynamic_cast<const ParseError*>(&e)) tag = "parse_error";
    else if (dynamic_cast<const InvalidInputError*>(&e)) tag = "invalid_input";
    else if (dynamic_cast<const NonFiniteObjectiveError*>(&e)) tag = "non_finite_objective";
    else if (dynamic_cast<const CoercivityError*>(&e)) tag = "non_coercive";
    else if (dynamic_cast<const StagnationError*>(&e)) tag = "stagnation";
    else if (dynamic_cast<const NumericalError*>(&e)) tag = "numerical";
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    return std::string(tag) + ": " + msg;
}

json vector_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

template <typename T>
json array_json(const std::vector<T>& v) {
    json arr = json::array();
    for (const T& x : v) arr.push_back(x);
    return arr;
}

// ---------------------------------------------------------------------------
// Constraint clause parsing: name:key=value:key=value, e.g. sparsity:k=10:v=1
// ---------------------------------------------------------------------------

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(delim, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

class ClauseArgs {
  public:
    ClauseArgs(const std::string& clause, std::vector<std::string> parts) : clause_(clause) {
        for (std::size_t i = 1; i < parts.size(); ++i) {
            const std::size_t eq = parts[i].find('=');
            if (eq == std::string::npos || eq == 0) {
                throw InvalidInputError("constraint clause '" + clause_ + "': expected key=value, got '" +
                                        parts[i] + "'");
            }
            kv_.emplace_back(parts[i].substr(0, eq), parts[i].substr(eq + 1));
        }
    }

    double number(const std::string& key) {
        const std::string raw = take(key);
        try {
            return parse_cell(raw, 0, 0, "constraint clause");
        } catch (const ParseError&) {
            throw InvalidInputError("constraint clause '" + clause_ + "': key '" + key +
                                    "' has non-numeric value '" + raw + "'");
        }
    }

    double number_or(const std::string& key, double fallback) {
        return has(key) ? number(key) : fallback;
    }

    int integer(const std::string& key) {
        const double x = number(key);
        if (x != std::floor(x) || std::abs(x) > 1e9) {
            throw InvalidInputError("constraint clause '" + clause_ + "': key '" + key +
                                    "' must be an integer");
        }
        return static_cast<int>(x);
    }

    void finish() const {
        for (const auto& [key, value] : kv_) {
            if (std::find(consumed_.begin(), consumed_.end(), key) == consumed_.end()) {
                throw InvalidInputError("constraint clause '" + clause_ + "': unknown key '" + key +
                                        "'");
            }
        }
    }

  private:
    bool has(const std::string& key) const {
        return std::any_of(kv_.begin(), kv_.end(),
                           [&](const auto& p) { return p.first == key; });
    }

    std::string take(const std::string& key) {
        for (auto& [k, v] : kv_) {
            if (k == key) {
                consumed_.push_back(k);
                return v;
            }
        }
        throw InvalidInputError("constraint clause '" + clause_ + "': missing required key '" +
                                key + "'");
    }

    std::string clause_;
    std::vector<std::pair<std::string, std::string>> kv_;
    std::vector<std::string> consumed_;
};

// Materializes a textual clause into a constraint at ambient dimension n.
// Vector-valued parameters (box bounds, ball center, normal vectors) take a
// scalar that is broadcast to every coordinate; richer geometry is available
// through the library API.
ConstraintSpec parse_constraint(const std::string& clause, Eigen::Index n) {
    const std::vector<std::string> parts = split(clause, ':');
    if (parts.empty() || parts[0].empty()) {
        throw InvalidInputError("empty constraint clause");
    }
    const std::string name = lower(parts[0]);
    ClauseArgs args(clause, parts);

    ConstraintSpec spec;
    if (name == "sparsity") {
        spec.set = Sparsity{args.integer("k")};
    } else if (name == "isotone") {
        spec.set = Isotone{};
    } else if (name == "nonnegative") {
        spec.set = NonNegative{};
    } else if (name == "rank") {
        Rank r;
        r.r = args.integer("r");
        r.rows = args.integer("rows");
        r.cols = args.integer("cols");
        spec.set = r;
    } else if (name == "box") {
        Box b;
        b.lower = Eigen::VectorXd::Constant(n, args.number("lower"));
        b.upper = Eigen::VectorXd::Constant(n, args.number("upper"));
        spec.set = b;
    } else if (name == "ball") {
        Ball b;
        b.center = Eigen::VectorXd::Constant(n, args.number_or("center", 0.0));
        b.radius = args.number("radius");
        spec.set = b;
    } else if (name == "hyperplane" || name == "halfspace") {
        const Eigen::VectorXd a = Eigen::VectorXd::Constant(n, args.number("a"));
        const double b = args.number_or("b", 0.0);
        if (name == "hyperplane") {
            spec.set = Hyperplane{a, b};
        } else {
            spec.set = HalfSpace{a, b};
        }
    } else {
        throw InvalidInputError("unknown constraint '" + name +
                                "'; expected sparsity, isotone, rank, box, ball, hyperplane, "
                                "halfspace, or nonnegative");
    }
    spec.weight = args.number_or("v", 1.0);
    args.finish();
    validate(spec, n);
    return spec;
}

std::vector<ConstraintSpec> parse_constraints(const std::vector<std::string>& clauses,
                                              Eigen::Index n) {
    std::vector<ConstraintSpec> specs;
    specs.reserve(clauses.size());
    for (const std::string& clause : clauses) {
        specs.push_back(parse_constraint(clause, n));
    }
    return specs;
}

// ---------------------------------------------------------------------------
// Shared option bundles and JSON fragments
// ---------------------------------------------------------------------------

void add_solver_flags(CLI::App* cmd, SolverConfig& cfg) {
    cmd->add_option("--alpha", cfg.armijo_alpha, "Sufficient-decrease constant in (0,1)")
        ->capture_default_str();
    cmd->add_option("--sigma", cfg.halving_sigma, "Step-halving factor in (0,1)")
        ->capture_default_str();
    cmd->add_option("--grad-tol", cfg.grad_tol, "Gradient-norm stopping tolerance")
        ->capture_default_str();
    cmd->add_option("--obj-tol", cfg.obj_tol, "Relative objective-change stopping tolerance")
        ->capture_default_str();
    cmd->add_option("--max-iter", cfg.max_iter, "Iteration budget per weight epoch")
        ->capture_default_str();
    cmd->add_option("--max-backtracks", cfg.max_backtracks, "Halving budget per line search")
        ->capture_default_str();
    cmd->add_option("--ridge", cfg.ridge_omega, "Squared-norm regularizer coefficient")
        ->capture_default_str();
    cmd->add_option("--anneal-rho", cfg.anneal_rho, "Weight multiplier between epochs (1 fixes)")
        ->capture_default_str();
    cmd->add_option("--anneal-cap", cfg.anneal_cap, "Upper bound on annealed weights")
        ->capture_default_str();
    cmd->add_option("--qn", cfg.qn_secants, "Secant pairs for acceleration (0 disables)")
        ->capture_default_str();
    const std::map<std::string, WoodburyMode> modes{{"auto", WoodburyMode::Auto},
                                                    {"always", WoodburyMode::Always},
                                                    {"never", WoodburyMode::Never}};
    cmd->add_option("--woodbury", cfg.use_woodbury, "Factored-solve policy")
        ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case))
        ->default_str("auto");
    cmd->add_option("--crossover", cfg.woodbury_crossover,
                    "Auto mode factors when cases < crossover * predictors")
        ->capture_default_str();
    cmd->add_option("--divergence-bound", cfg.divergence_bound,
                    "Iterate norm treated as evidence of a non-coercive objective")
        ->capture_default_str();
}

json solver_json(const SolverConfig& cfg) {
    return json{{"alpha", cfg.armijo_alpha},
                {"sigma", cfg.halving_sigma},
                {"grad_tol", cfg.grad_tol},
                {"obj_tol", cfg.obj_tol},
                {"max_iter", cfg.max_iter},
                {"max_backtracks", cfg.max_backtracks},
                {"ridge", cfg.ridge_omega},
                {"anneal_rho", cfg.anneal_rho},
                {"anneal_cap", cfg.anneal_cap},
                {"qn", cfg.qn_secants},
                {"woodbury", woodbury_name(cfg.use_woodbury)},
                {"crossover", cfg.woodbury_crossover},
                {"divergence_bound", cfg.divergence_bound}};
}

json fit_result_json(const FitResult& r) {
    json epochs = json::array();
    for (const auto& w : r.epoch_weights) epochs.push_back(array_json(w));
    json edist = json::array();
    for (const auto& d : r.epoch_distances) edist.push_back(array_json(d));
    return json{{"beta", vector_json(r.beta)},
                {"projected_beta", vector_json(r.projected_beta)},
                {"objective_trace", array_json(r.objective_trace)},
                {"grad_norm_trace", array_json(r.grad_norm_trace)},
                {"epoch_offsets", array_json(r.epoch_offsets)},
                {"epoch_weights", std::move(epochs)},
                {"epoch_distances", std::move(edist)},
                {"constraint_distances", array_json(r.constraint_distances)},
                {"last_step_norm", r.last_step_norm},
                {"iterations", r.iterations},
                {"total_backtracks", r.total_backtracks},
                {"converged", r.converged},
                {"termination", to_string(r.termination)}};
}

json fit_metrics_json(const Family& family, const Dataset& data,
                      const std::vector<ConstraintSpec>& specs, const SolverConfig& cfg,
                      const FitResult& r) {
    return json{{"objective", objective(family, data, specs, r.beta, cfg.ridge_omega)},
                {"neg_loglik", neg_loglik(family, data, r.beta)},
                {"neg_loglik_projected", neg_loglik(family, data, r.projected_beta)},
                {"grad_norm",
                 objective_gradient(family, data, specs, r.beta, cfg.ridge_omega).norm()}};
}

// Writes the document to --out, or stdout when no path was given.
void emit(const json& doc, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << doc.dump(2) << "\n";
        return;
    }
    std::ofstream out(out_path);
    if (!out) {
        throw InvalidInputError("cannot open output file " + out_path);
    }
    out << doc.dump(2) << "\n";
}

json base_doc(json config) {
    return json{{"config", std::move(config)},
                {"result", nullptr},
                {"metrics", nullptr},
                {"timing", nullptr},
                {"error", nullptr}};
}

// Runs a handler under the uniform error contract: any failure becomes a
// single-line error field and exit code 1.
int guarded(json& doc, const std::string& out_path, const std::function<int()>& body) {
    const Clock::time_point t0 = Clock::now();
    try {
        const int code = body();
        return code;
    } catch (const std::exception& e) {
        doc["timing"] = json{{"wall_seconds", seconds_since(t0)}};
        doc["error"] = one_line_error(e);
        try {
            emit(doc, out_path);
        } catch (const std::exception&) {
            std::cerr << doc["error"].get<std::string>() << "\n";
        }
        return 1;
    }
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitOpts {
    std::string x_path, y_path, family = "gaussian", out;
    bool header = false;
    std::vector<std::string> clauses;
    SolverConfig cfg;
};

int run_fit(const FitOpts& o) {
    json config{{"command", "fit"},      {"family", o.family}, {"x", o.x_path},
                {"y", o.y_path},         {"header", o.header}, {"constraints", array_json(o.clauses)},
                {"solver", solver_json(o.cfg)}, {"out", o.out}};
    json doc = base_doc(std::move(config));
    return guarded(doc, o.out, [&] {
        const Family family = family_from_name(o.family);
        const Dataset data = ingest_csv(o.x_path, o.y_path, o.header);
        const std::vector<ConstraintSpec> specs =
            parse_constraints(o.clauses, data.predictors());
        const Clock::time_point t0 = Clock::now();
        const FitResult r = fit(family, data, specs, o.cfg);
        doc["timing"] = json{{"wall_seconds", seconds_since(t0)}};
        doc["result"] = fit_result_json(r);
        doc["metrics"] = fit_metrics_json(family, data, specs, o.cfg, r);
        emit(doc, o.out);
        return r.converged ? 0 : 2;
    });
}

// ---------------------------------------------------------------------------
// fit-matrix
// ---------------------------------------------------------------------------

struct FitMatrixOpts {
    std::string x_path, y_path, family = "gaussian", out;
    bool header = false;
    int rows = 0, cols = 0, rank = 1;
    double weight = 1.0;
    SolverConfig cfg;
};

int run_fit_matrix(const FitMatrixOpts& o) {
    json config{{"command", "fit-matrix"}, {"family", o.family}, {"x", o.x_path},
                {"y", o.y_path},           {"header", o.header}, {"rows", o.rows},
                {"cols", o.cols},          {"rank", o.rank},     {"weight", o.weight},
                {"solver", solver_json(o.cfg)}, {"out", o.out}};
    json doc = base_doc(std::move(config));
    return guarded(doc, o.out, [&] {
        const Family family = family_from_name(o.family);
        const Dataset flat = ingest_csv(o.x_path, o.y_path, o.header);
        if (o.rows < 1 || o.cols < 1 ||
            flat.X.cols() != static_cast<Eigen::Index>(o.rows) * o.cols) {
            throw InvalidInputError("each design row has " + std::to_string(flat.X.cols()) +
                                    " entries, which cannot reshape to " +
                                    std::to_string(o.rows) + " x " + std::to_string(o.cols));
        }
        MatrixDataset data;
        data.y = flat.y;
        data.predictors.reserve(static_cast<std::size_t>(flat.X.rows()));
        for (Eigen::Index i = 0; i < flat.X.rows(); ++i) {
            data.predictors.push_back(unvec(flat.X.row(i).transpose(), o.rows, o.cols));
        }
        const Clock::time_point t0 = Clock::now();
        const MatrixFitResult mr = fit_matrix(family, data, o.rank, o.cfg, o.weight);
        doc["timing"] = json{{"wall_seconds", seconds_since(t0)}};

        json result = fit_result_json(mr.result);
        result["coefficients"] = matrix_json(mr.coefficients);
        result["projected_coefficients"] = matrix_json(mr.projected_coefficients);
        doc["result"] = std::move(result);

        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(mr.projected_coefficients);
        const Eigen::VectorXd sv = svd.singularValues();
        Eigen::Index eff_rank = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i) {
            eff_rank += sv[i] > 1e-8 * (1.0 + sv[0]);
        }
        const std::vector<ConstraintSpec> specs{
            {Rank{o.rank, o.rows, o.cols}, o.weight}};
        json metrics = fit_metrics_json(family, flatten(data), specs, o.cfg, mr.result);
        metrics["projected_singular_values"] = vector_json(sv);
        metrics["projected_rank"] = eff_rank;
        doc["metrics"] = std::move(metrics);
        emit(doc, o.out);
        return mr.result.converged ? 0 : 2;
    });
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateOpts {
    std::string kind = "sparse", family = "gaussian", out;
    std::string out_x, out_y, out_beta;
    std::uint64_t seed = 0;
    // sparse
    Eigen::Index cases = 200, predictors = 100;
    int k = 5;
    double design_sd = std::sqrt(0.1), effect_lo = 0.5, effect_hi = 1.5;
    // isotone
    double theta_lo = 0.0, theta_hi = 2.0;
    // cross
    Eigen::Index size = 32, band = 4;
    double amplitude = 1.0, noise_sd = 0.1;
};

int run_simulate(const SimulateOpts& o) {
    json config{{"command", "simulate"}, {"kind", o.kind},     {"family", o.family},
                {"seed", o.seed},        {"out_x", o.out_x},   {"out_y", o.out_y},
                {"out_beta", o.out_beta}, {"out", o.out}};
    json doc = base_doc(std::move(config));
    return guarded(doc, o.out, [&] {
        const std::string kind = lower(o.kind);
        json result;
        if (kind == "sparse") {
            SimSpec spec;
            spec.predictors = o.predictors;
            spec.cases = o.cases;
            spec.k_true = o.k;
            spec.family = family_from_name(o.family);
            spec.design_sd = o.design_sd;
            spec.effect_law = UniformSigned{o.effect_lo, o.effect_hi};
            spec.seed = o.seed;
            const SparseSim sim = gen_sparse_glm(spec);
            write_csv(o.out_x, sim.data.X);
            write_csv(o.out_y, sim.data.y);
            if (!o.out_beta.empty()) write_csv(o.out_beta, sim.beta_true);
            result = json{{"cases", sim.data.cases()},
                          {"predictors", sim.data.predictors()},
                          {"k_true", o.k},
                          {"regenerated_rows", sim.regenerated_rows}};
            doc["metrics"] = json{{"mean_response", sim.data.y.mean()}};
        } else if (kind == "isotone") {
            const Dataset data = gen_isotone_poisson(o.cases, o.theta_lo, o.theta_hi, o.seed);
            write_csv(o.out_x, data.X);
            write_csv(o.out_y, data.y);
            result = json{{"cases", data.cases()}, {"predictors", data.predictors()}};
            doc["metrics"] = json{{"mean_response", data.y.mean()}};
        } else if (kind == "cross") {
            const Eigen::MatrixXd B0 = gen_cross_signal(o.size, o.band, o.amplitude);
            const MatrixDataset data =
                gen_matrix_responses(B0, o.cases, o.noise_sd, o.seed);
            const Dataset flat = flatten(data);
            write_csv(o.out_x, flat.X);
            write_csv(o.out_y, flat.y);
            if (!o.out_beta.empty()) write_csv(o.out_beta, B0);
            result = json{{"cases", data.cases()},
                          {"rows", o.size},
                          {"cols", o.size},
                          {"band", o.band}};
            doc["metrics"] = json{{"mean_response", flat.y.mean()}};
        } else {
            throw InvalidInputError("unknown simulation kind '" + o.kind +
                                    "'; expected sparse, isotone, or cross");
        }
        doc["timing"] = json{{"wall_seconds", 0.0}};
        doc["result"] = std::move(result);
        emit(doc, o.out);
        return 0;
    });
}

// ---------------------------------------------------------------------------
// cv
// ---------------------------------------------------------------------------

struct CvOpts {
    std::string x_path, y_path, family = "gaussian", out;
    bool header = false;
    std::string clause;  // contains '?' where the level goes
    std::vector<double> levels;
    int folds = 5;
    std::uint64_t seed = 0;
    SolverConfig cfg;
};

int run_cv(const CvOpts& o) {
    json config{{"command", "cv"},   {"family", o.family}, {"x", o.x_path},
                {"y", o.y_path},     {"header", o.header}, {"constraint", o.clause},
                {"levels", array_json(o.levels)}, {"folds", o.folds},
                {"seed", o.seed},    {"solver", solver_json(o.cfg)}, {"out", o.out}};
    json doc = base_doc(std::move(config));
    return guarded(doc, o.out, [&] {
        if (o.clause.find('?') == std::string::npos) {
            throw InvalidInputError(
                "cv constraint clause must contain '?' as the level placeholder, e.g. "
                "sparsity:k=?");
        }
        const Family family = family_from_name(o.family);
        const Dataset data = ingest_csv(o.x_path, o.y_path, o.header);
        const Eigen::Index n = data.predictors();
        const auto make = [&](double level) {
            std::string clause = o.clause;
            const std::string text = format_number(level);
            std::size_t pos;
            while ((pos = clause.find('?')) != std::string::npos) {
                clause.replace(pos, 1, text);
            }
            return parse_constraint(clause, n);
        };
        const Clock::time_point t0 = Clock::now();
        const CvResult cv =
            cross_validate(family, data, make, o.levels, o.folds, o.cfg, o.seed);
        doc["timing"] = json{{"wall_seconds", seconds_since(t0)}};

        json succeeded = json::array();
        for (char s : cv.succeeded) succeeded.push_back(s != 0);
        doc["result"] = json{{"chosen_level", cv.chosen_level},
                             {"chosen_index", cv.chosen_index},
                             {"levels", array_json(cv.levels)},
                             {"losses", array_json(cv.losses)},
                             {"succeeded", std::move(succeeded)}};
        doc["metrics"] = json{{"chosen_level", cv.chosen_level},
                              {"best_loss", cv.losses[cv.chosen_index]}};
        emit(doc, o.out);
        return 0;
    });
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchOpts {
    std::string suite = "sparse-poisson", out, table;
    int seeds = 20;
    std::uint64_t seed = 0;  // base seed; run i uses seed + i
    // sparse suites
    Eigen::Index cases = 500, predictors = 200;
    int k = 5, fit_k = 0;  // fit_k == 0 means "use k"
    // cross suite
    Eigen::Index size = 32, band = 4, bench_cases = 300;
    double amplitude = 1.0, noise_sd = 0.1;
    int rank = 2;
    SolverConfig cfg;
};

unsigned bench_workers(int seeds) {
    unsigned workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    if (const char* env = std::getenv("DISTGLM_THREADS")) {
        try {
            const long cap = std::stol(env);
            if (cap >= 1) workers = std::min<unsigned>(workers, static_cast<unsigned>(cap));
        } catch (const std::exception&) {
            throw InvalidInputError(std::string("DISTGLM_THREADS is not a positive integer: ") +
                                    env);
        }
    }
    return std::min<unsigned>(workers, static_cast<unsigned>(std::max(seeds, 1)));
}

double median(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t h = xs.size() / 2;
    return xs.size() % 2 == 1 ? xs[h] : 0.5 * (xs[h - 1] + xs[h]);
}

int run_bench(const BenchOpts& o) {
    json config{{"command", "bench"},   {"suite", o.suite},   {"seeds", o.seeds},
                {"seed", o.seed},       {"cases", o.cases},   {"predictors", o.predictors},
                {"k", o.k},             {"fit_k", o.fit_k},   {"size", o.size},
                {"band", o.band},       {"bench_cases", o.bench_cases},
                {"amplitude", o.amplitude}, {"noise_sd", o.noise_sd}, {"rank", o.rank},
                {"solver", solver_json(o.cfg)}, {"table", o.table}, {"out", o.out}};
    json doc = base_doc(std::move(config));
    return guarded(doc, o.out, [&] {
        const std::string suite = lower(o.suite);
        const bool is_cross = suite == "cross";
        std::optional<Family> sparse_family;
        if (suite == "sparse-gaussian") sparse_family = Family::gaussian();
        else if (suite == "sparse-poisson") sparse_family = Family::poisson();
        else if (suite == "sparse-bernoulli") sparse_family = Family::bernoulli();
        if (!is_cross && !sparse_family.has_value()) {
            throw InvalidInputError("unknown suite '" + o.suite +
                                    "'; expected sparse-gaussian, sparse-poisson, "
                                    "sparse-bernoulli, or cross");
        }
        if (o.seeds < 1) {
            throw InvalidInputError("bench needs at least one seed");
        }
        const int fit_k = o.fit_k > 0 ? o.fit_k : o.k;

        // One row per seed, filled by a small worker pool; rows land in a
        // preallocated slot each, so aggregation order never depends on
        // scheduling.
        std::vector<json> rows(static_cast<std::size_t>(o.seeds));
        const auto run_one = [&](int i) {
            const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(i);
            json row{{"seed", seed}, {"converged", false}, {"iterations", nullptr},
                     {"seconds", nullptr}, {"error", nullptr}};
            const Clock::time_point t0 = Clock::now();
            try {
                if (is_cross) {
                    const Eigen::MatrixXd B0 = gen_cross_signal(o.size, o.band, o.amplitude);
                    const MatrixDataset data =
                        gen_matrix_responses(B0, o.bench_cases, o.noise_sd, seed);
                    const MatrixFitResult mr = fit_matrix(Family::gaussian(), data, o.rank, o.cfg);
                    row["converged"] = mr.result.converged;
                    row["iterations"] = mr.result.iterations;
                    row["relative_error"] =
                        (mr.projected_coefficients - B0).norm() / B0.norm();
                    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(mr.projected_coefficients);
                    const Eigen::VectorXd sv = svd.singularValues();
                    Eigen::Index eff_rank = 0;
                    for (Eigen::Index j = 0; j < sv.size(); ++j) {
                        eff_rank += sv[j] > 1e-8 * (1.0 + sv[0]);
                    }
                    row["projected_rank"] = eff_rank;
                } else {
                    SimSpec spec;
                    spec.predictors = o.predictors;
                    spec.cases = o.cases;
                    spec.k_true = o.k;
                    spec.family = *sparse_family;
                    spec.seed = seed;
                    const SparseSim sim = gen_sparse_glm(spec);
                    const std::vector<ConstraintSpec> specs{{Sparsity{fit_k}, 1.0}};
                    const FitResult r = fit(spec.family, sim.data, specs, o.cfg);
                    const Metrics m = metrics(spec.family, r.projected_beta, sim.beta_true);
                    row["converged"] = r.converged;
                    row["iterations"] = r.iterations;
                    row["mse"] = m.mse;
                    row["support_precision"] = m.support_precision;
                    row["support_recall"] = m.support_recall;
                }
            } catch (const std::exception& e) {
                row["error"] = one_line_error(e);
            }
            row["seconds"] = seconds_since(t0);
            rows[static_cast<std::size_t>(i)] = std::move(row);
        };

        const Clock::time_point t0 = Clock::now();
        const unsigned workers = bench_workers(o.seeds);
        if (workers <= 1) {
            for (int i = 0; i < o.seeds; ++i) run_one(i);
        } else {
            std::atomic<int> next{0};
            std::vector<std::thread> pool;
            pool.reserve(workers);
            for (unsigned w = 0; w < workers; ++w) {
                pool.emplace_back([&] {
                    for (int i = next.fetch_add(1); i < o.seeds; i = next.fetch_add(1)) {
                        run_one(i);
                    }
                });
            }
            for (std::thread& t : pool) t.join();
        }
        doc["timing"] = json{{"wall_seconds", seconds_since(t0)}, {"workers", workers}};

        bool all_converged = true;
        std::vector<double> mses, precisions, recalls, rel_errors;
        for (const json& row : rows) {
            all_converged = all_converged && row["converged"].get<bool>();
            if (row["error"].is_null()) {
                if (is_cross) {
                    rel_errors.push_back(row["relative_error"].get<double>());
                } else {
                    mses.push_back(row["mse"].get<double>());
                    precisions.push_back(row["support_precision"].get<double>());
                    recalls.push_back(row["support_recall"].get<double>());
                }
            }
        }
        json metrics_doc;
        if (is_cross) {
            metrics_doc = json{{"median_relative_error", median(rel_errors)}};
        } else {
            metrics_doc = json{{"median_mse", median(mses)},
                               {"median_support_precision", median(precisions)},
                               {"median_support_recall", median(recalls)}};
        }
        doc["result"] = json{{"rows", array_json(rows)}};
        doc["metrics"] = std::move(metrics_doc);

        if (!o.table.empty()) {
            std::ofstream table(o.table);
            if (!table) {
                throw InvalidInputError("cannot open table file " + o.table);
            }
            std::string line;
            if (is_cross) {
                table << "seed,converged,iterations,seconds,relative_error,projected_rank\n";
            } else {
                table << "seed,converged,iterations,seconds,mse,support_precision,"
                         "support_recall\n";
            }
            for (const json& row : rows) {
                if (!row["error"].is_null()) continue;
                line.clear();
                append_number(line, row["seed"].get<double>());
                line += ',';
                append_number(line, row["converged"].get<bool>() ? 1.0 : 0.0);
                line += ',';
                append_number(line, row["iterations"].get<double>());
                line += ',';
                append_number(line, row["seconds"].get<double>());
                if (is_cross) {
                    line += ',';
                    append_number(line, row["relative_error"].get<double>());
                    line += ',';
                    append_number(line, row["projected_rank"].get<double>());
                } else {
                    line += ',';
                    append_number(line, row["mse"].get<double>());
                    line += ',';
                    append_number(line, row["support_precision"].get<double>());
                    line += ',';
                    append_number(line, row["support_recall"].get<double>());
                }
                table << line << "\n";
            }
        }
        emit(doc, o.out);
        return all_converged ? 0 : 2;
    });
}

}  // namespace

// ---------------------------------------------------------------------------
// main
// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"Constrained GLM fitting by distance-penalized likelihood"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Key-value config file; command-line flags win");

    FitOpts fit_opts;
    CLI::App* cmd_fit = app.add_subcommand("fit", "Fit a constrained GLM from CSV data");
    cmd_fit->add_option("--x", fit_opts.x_path, "Design matrix CSV")->required();
    cmd_fit->add_option("--y", fit_opts.y_path, "Response vector CSV")->required();
    cmd_fit->add_option("--family", fit_opts.family, "gaussian | poisson | bernoulli")
        ->capture_default_str();
    cmd_fit->add_flag("--header", fit_opts.header, "Skip one header row in each CSV");
    cmd_fit->add_option("--constraint", fit_opts.clauses,
                        "Constraint clause, e.g. sparsity:k=10:v=1 (repeatable)");
    cmd_fit->add_option("--out", fit_opts.out, "Result JSON path (default: stdout)");
    add_solver_flags(cmd_fit, fit_opts.cfg);

    FitMatrixOpts fm_opts;
    CLI::App* cmd_fm = app.add_subcommand(
        "fit-matrix", "Fit a rank-constrained matrix coefficient from flattened CSV data");
    cmd_fm->add_option("--x", fm_opts.x_path, "Design CSV; each row is a column-stacked matrix")
        ->required();
    cmd_fm->add_option("--y", fm_opts.y_path, "Response vector CSV")->required();
    cmd_fm->add_option("--family", fm_opts.family, "gaussian | poisson | bernoulli")
        ->capture_default_str();
    cmd_fm->add_flag("--header", fm_opts.header, "Skip one header row in each CSV");
    cmd_fm->add_option("--rows", fm_opts.rows, "Predictor matrix rows")->required();
    cmd_fm->add_option("--cols", fm_opts.cols, "Predictor matrix columns")->required();
    cmd_fm->add_option("--rank", fm_opts.rank, "Rank bound")->capture_default_str();
    cmd_fm->add_option("--weight", fm_opts.weight, "Initial penalty weight")
        ->capture_default_str();
    cmd_fm->add_option("--out", fm_opts.out, "Result JSON path (default: stdout)");
    add_solver_flags(cmd_fm, fm_opts.cfg);

    SimulateOpts sim_opts;
    CLI::App* cmd_sim =
        app.add_subcommand("simulate", "Generate benchmark datasets as CSV files");
    cmd_sim->add_option("--kind", sim_opts.kind, "sparse | isotone | cross")
        ->capture_default_str();
    cmd_sim->add_option("--family", sim_opts.family, "Family for sparse data")
        ->capture_default_str();
    cmd_sim->add_option("--seed", sim_opts.seed, "Generator seed")->capture_default_str();
    cmd_sim->add_option("--cases", sim_opts.cases, "Number of cases")->capture_default_str();
    cmd_sim->add_option("--predictors", sim_opts.predictors, "Number of predictors (sparse)")
        ->capture_default_str();
    cmd_sim->add_option("--k", sim_opts.k, "True support size (sparse)")->capture_default_str();
    cmd_sim->add_option("--design-sd", sim_opts.design_sd, "Design entry deviation (sparse)")
        ->capture_default_str();
    cmd_sim->add_option("--effect-lo", sim_opts.effect_lo, "Smallest effect magnitude (sparse)")
        ->capture_default_str();
    cmd_sim->add_option("--effect-hi", sim_opts.effect_hi, "Largest effect magnitude (sparse)")
        ->capture_default_str();
    cmd_sim->add_option("--theta-lo", sim_opts.theta_lo, "First log-mean (isotone)")
        ->capture_default_str();
    cmd_sim->add_option("--theta-hi", sim_opts.theta_hi, "Last log-mean (isotone)")
        ->capture_default_str();
    cmd_sim->add_option("--size", sim_opts.size, "Image side length (cross)")
        ->capture_default_str();
    cmd_sim->add_option("--band", sim_opts.band, "Band width (cross)")->capture_default_str();
    cmd_sim->add_option("--amplitude", sim_opts.amplitude, "Signal amplitude (cross)")
        ->capture_default_str();
    cmd_sim->add_option("--noise-sd", sim_opts.noise_sd, "Response noise deviation (cross)")
        ->capture_default_str();
    cmd_sim->add_option("--out-x", sim_opts.out_x, "Design CSV to write")->required();
    cmd_sim->add_option("--out-y", sim_opts.out_y, "Response CSV to write")->required();
    cmd_sim->add_option("--out-beta", sim_opts.out_beta, "Truth CSV to write (optional)");
    cmd_sim->add_option("--out", sim_opts.out, "Result JSON path (default: stdout)");

    CvOpts cv_opts;
    CLI::App* cmd_cv = app.add_subcommand(
        "cv", "Select a constraint level by K-fold cross-validation");
    cmd_cv->add_option("--x", cv_opts.x_path, "Design matrix CSV")->required();
    cmd_cv->add_option("--y", cv_opts.y_path, "Response vector CSV")->required();
    cmd_cv->add_option("--family", cv_opts.family, "gaussian | poisson | bernoulli")
        ->capture_default_str();
    cmd_cv->add_flag("--header", cv_opts.header, "Skip one header row in each CSV");
    cmd_cv->add_option("--constraint", cv_opts.clause,
                       "Clause with '?' as the level placeholder, e.g. sparsity:k=?")
        ->required();
    cmd_cv->add_option("--levels", cv_opts.levels, "Candidate levels, most constrained first")
        ->required();
    cmd_cv->add_option("--folds", cv_opts.folds, "Number of folds")->capture_default_str();
    cmd_cv->add_option("--seed", cv_opts.seed, "Fold-assignment seed")->capture_default_str();
    cmd_cv->add_option("--out", cv_opts.out, "Result JSON path (default: stdout)");
    add_solver_flags(cmd_cv, cv_opts.cfg);

    BenchOpts bench_opts;
    CLI::App* cmd_bench =
        app.add_subcommand("bench", "Run a seeded benchmark suite and tabulate metrics");
    cmd_bench->add_option("--suite", bench_opts.suite,
                          "sparse-gaussian | sparse-poisson | sparse-bernoulli | cross")
        ->capture_default_str();
    cmd_bench->add_option("--seeds", bench_opts.seeds, "Number of seeded replicates")
        ->capture_default_str();
    cmd_bench->add_option("--seed", bench_opts.seed, "Base seed; replicate i uses seed + i")
        ->capture_default_str();
    cmd_bench->add_option("--cases", bench_opts.cases, "Cases per replicate (sparse)")
        ->capture_default_str();
    cmd_bench->add_option("--predictors", bench_opts.predictors, "Predictors (sparse)")
        ->capture_default_str();
    cmd_bench->add_option("--k", bench_opts.k, "True support size (sparse)")
        ->capture_default_str();
    cmd_bench->add_option("--fit-k", bench_opts.fit_k,
                          "Fitted sparsity level; 0 means match --k")
        ->capture_default_str();
    cmd_bench->add_option("--size", bench_opts.size, "Image side length (cross)")
        ->capture_default_str();
    cmd_bench->add_option("--band", bench_opts.band, "Band width (cross)")
        ->capture_default_str();
    cmd_bench->add_option("--bench-cases", bench_opts.bench_cases, "Cases per replicate (cross)")
        ->capture_default_str();
    cmd_bench->add_option("--amplitude", bench_opts.amplitude, "Signal amplitude (cross)")
        ->capture_default_str();
    cmd_bench->add_option("--noise-sd", bench_opts.noise_sd, "Response noise deviation (cross)")
        ->capture_default_str();
    cmd_bench->add_option("--rank", bench_opts.rank, "Fitted rank bound (cross)")
        ->capture_default_str();
    cmd_bench->add_option("--table", bench_opts.table, "Also write a per-seed CSV table here");
    cmd_bench->add_option("--out", bench_opts.out, "Result JSON path (default: stdout)");
    add_solver_flags(cmd_bench, bench_opts.cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (app.got_subcommand(cmd_fit)) return run_fit(fit_opts);
    if (app.got_subcommand(cmd_fm)) return run_fit_matrix(fm_opts);
    if (app.got_subcommand(cmd_sim)) return run_simulate(sim_opts);
    if (app.got_subcommand(cmd_cv)) return run_cv(cv_opts);
    if (app.got_subcommand(cmd_bench)) return run_bench(bench_opts);
    return 1;
}
