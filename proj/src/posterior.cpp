#include "rai/posterior.hpp"

#include "rai/error.hpp"

#include <json.hpp>

#include <atomic>
#include <exception>
#include <optional>
#include <sstream>
#include <thread>

namespace rai {

namespace {

constexpr std::uint64_t kCalibrationStream = 1;
constexpr std::uint64_t kRealizationStream = 2;
constexpr std::uint64_t kWeightStream = 3;
constexpr std::uint64_t kSolverStream = 4;

bool uniform_weights(const Eigen::VectorXd& w) { return (w.array() == w[0]).all(); }

AtomicMeasure rectify_once(const LabeledSample& calib, const AtomicMeasure& base, const RectifierSpec& spec) {
    return apply_rectifier(fit_rectifier(spec, calib, base), base);
}

// `fixed` holds the rectified base when it does not vary across draws.
Theta draw_impl(const LabeledSample& labeled, const AtomicMeasure* base, const LossSpec& loss,
                const PriorConfig& config, Index draw_index, const AtomicMeasure* fixed) {
    const SeededRng rng(config.seed, static_cast<std::uint64_t>(draw_index));
    if (config.gamma == 0.0) {
        const Eigen::VectorXd w = sample_flat_dirichlet(labeled.size(), rng.substream(kWeightStream));
        const WeightedProblem problem(labeled.covariates(), labeled.outcomes(), w, loss);
        return solve_weighted(problem, rng.substream(kSolverStream));
    }

    std::optional<CalibrationSplit> split;
    std::optional<AtomicMeasure> rectified;
    if (fixed) {
        rectified = *fixed;
    } else if (std::holds_alternative<IdentityRectifier>(config.rectifier)) {
        rectified = *base;
    } else {
        split = make_calibration_sample(labeled, config.strategy, rng.substream(kCalibrationStream));
        rectified = rectify_once(split->calibration, *base, config.rectifier);
    }
    const LabeledSample& inference = split ? split->inference : labeled;

    if (rectified->outcomes().kind() == OutcomeKind::ClassProbs)
        rectified = realize_class_labels(*rectified, rng.substream(kRealizationStream));

    const double alpha = config.gamma * static_cast<double>(inference.size());
    const SeededRng weight_rng = rng.substream(kWeightStream);
    const DirichletWeights dw =
        uniform_weights(rectified->weights())
            ? sample_dirichlet_weights(inference.size(), rectified->size(), alpha, weight_rng)
            : sample_dirichlet_weights(inference.size(), rectified->weights(), alpha, weight_rng);
    const WeightedProblem problem = WeightedProblem::stack(inference, dw.labeled, *rectified, dw.base, loss);
    return solve_weighted(problem, rng.substream(kSolverStream));
}

std::optional<AtomicMeasure> fixed_base(const LabeledSample& labeled, const AtomicMeasure* base,
                                        const PriorConfig& config) {
    if (config.gamma == 0.0 || !std::holds_alternative<FixedCalibration>(config.strategy)) return std::nullopt;
    if (std::holds_alternative<IdentityRectifier>(config.rectifier)) return std::nullopt;
    return rectify_once(labeled, *base, config.rectifier);
}

void check_inputs(const LabeledSample& labeled, const AtomicMeasure* base, const LossSpec& loss,
                  const PriorConfig& config) {
    validate(config);
    validate(loss);
    if (config.gamma > 0.0) {
        if (!base) throw ParameterError("a base measure is required when gamma > 0");
        if (base->dim() != labeled.dim()) throw TypeError("labeled sample and base measure covariate dimensions differ");
    }
}

std::string tagged(Index draw_index, const char* what) { return "draw " + std::to_string(draw_index) + ": " + what; }

PosteriorRun run_impl(const LabeledSample& labeled, const AtomicMeasure* base, const LossSpec& loss,
                      const PriorConfig& config) {
    check_inputs(labeled, base, loss, config);
    const std::optional<AtomicMeasure> fixed = fixed_base(labeled, base, config);
    const AtomicMeasure* fixed_ptr = fixed ? &*fixed : nullptr;

    const auto draws = static_cast<std::size_t>(config.draws);
    std::vector<std::optional<Theta>> results(draws);
    std::vector<DrawStatus> status(draws);
    std::vector<std::exception_ptr> fatal(draws);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t b = next++; b < draws; b = next++) {
            const auto idx = static_cast<Index>(b);
            try {
                results[b] = draw_impl(labeled, base, loss, config, idx, fixed_ptr);
            } catch (const NumericalError& e) {
                status[b] = DrawStatus{false, tagged(idx, e.what())};
            } catch (...) {
                fatal[b] = std::current_exception();
            }
        }
    };

    unsigned workers = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, draws));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    }

    for (const auto& e : fatal)
        if (e) std::rethrow_exception(e);

    PosteriorRun run;
    run.config = config;
    run.loss = loss;
    run.status = std::move(status);
    const Index failed = run.failed();
    if (static_cast<double>(failed) > 0.05 * static_cast<double>(config.draws) ||
        config.draws - failed < 2) {
        std::string first;
        for (const auto& s : run.status)
            if (!s.ok) {
                first = s.message;
                break;
            }
        throw DrawFailureError(std::to_string(failed) + " of " + std::to_string(config.draws) +
                               " posterior draws failed; first failure: " + first);
    }

    const Index dim = parameter_dimension(loss, labeled.dim());
    run.samples.resize(config.draws - failed, dim);
    Index row = 0;
    for (const auto& r : results)
        if (r) run.samples.row(row++) = r->transpose();
    run.point = run.samples.colwise().mean().transpose();
    run.intervals.reserve(static_cast<std::size_t>(dim));
    for (Index j = 0; j < dim; ++j)
        run.intervals.push_back(credible_interval<double>(run.samples.col(j), config.level));
    return run;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

void validate(const PriorConfig& config) {
    if (!(config.gamma >= 0.0) || !std::isfinite(config.gamma))
        throw ParameterError("gamma must be a finite nonnegative number");
    if (config.draws < 2) throw ParameterError("at least 2 posterior draws are required");
    if (!(config.level > 0.0 && config.level < 1.0)) throw ParameterError("credible level must lie in (0, 1)");
    validate(config.strategy);
    validate(config.rectifier);
}

Index PosteriorRun::failed() const {
    return static_cast<Index>(std::count_if(status.begin(), status.end(), [](const DrawStatus& s) { return !s.ok; }));
}

Theta posterior_draw(const LabeledSample& labeled, const AtomicMeasure& base, const LossSpec& loss,
                     const PriorConfig& config, Index draw_index) {
    check_inputs(labeled, &base, loss, config);
    if (draw_index < 0) throw ParameterError("draw index must be nonnegative");
    const std::optional<AtomicMeasure> fixed = fixed_base(labeled, &base, config);
    try {
        return draw_impl(labeled, &base, loss, config, draw_index, fixed ? &*fixed : nullptr);
    } catch (const RankDeficiencyError& e) {
        throw RankDeficiencyError(tagged(draw_index, e.what()));
    } catch (const NumericalError& e) {
        throw NumericalError(tagged(draw_index, e.what()));
    }
}

PosteriorRun run_posterior(const LabeledSample& labeled, const AtomicMeasure& base, const LossSpec& loss,
                           const PriorConfig& config) {
    return run_impl(labeled, &base, loss, config);
}

PosteriorRun run_posterior(const LabeledSample& labeled, const LossSpec& loss, const PriorConfig& config) {
    if (config.gamma != 0.0) throw ParameterError("a base measure is required when gamma > 0");
    return run_impl(labeled, nullptr, loss, config);
}

double interpolated_quantile(const double* sorted_begin, Index count, double p) {
    const double h = static_cast<double>(count - 1) * p;
    const auto lo = static_cast<Index>(std::floor(h));
    if (lo >= count - 1) return sorted_begin[count - 1];
    const double frac = h - static_cast<double>(lo);
    const double a = sorted_begin[lo];
    const double b = sorted_begin[lo + 1];
    return frac == 0.0 ? a : a + frac * (b - a);
}

Eigen::MatrixXd posterior_predictive_proba(const PosteriorRun& run, const LossSpec& loss,
                                           const Eigen::MatrixXd& covariates) {
    if (!is_classification(loss)) throw TypeError("posterior class prediction needs a classification loss");
    if (run.samples.rows() < 1) throw ParameterError("posterior run has no samples");
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(covariates.rows(), num_classes(loss));
    for (Index b = 0; b < run.samples.rows(); ++b)
        mean += predict_proba(loss, run.samples.row(b).transpose(), covariates);
    return mean / static_cast<double>(run.samples.rows());
}

int posterior_predict_class(const PosteriorRun& run, const LossSpec& loss, const Eigen::VectorXd& x) {
    const Eigen::MatrixXd p = posterior_predictive_proba(run, loss, x.transpose());
    Index best = 0;
    p.row(0).maxCoeff(&best);
    return static_cast<int>(best);
}

std::string serialize(const PosteriorRun& run) {
    std::ostringstream out;
    out << "rai-posterior 1\n";
    nlohmann::json header = {
        {"record", "header"},
        {"loss", describe(run.loss)},
        {"rectifier", describe(run.config.rectifier)},
        {"strategy", describe(run.config.strategy)},
        {"gamma", run.config.gamma},
        {"draws", run.config.draws},
        {"level", run.config.level},
        {"seed", run.config.seed},
        {"dimension", run.samples.cols()},
    };
    out << header.dump() << '\n';
    Index row = 0;
    for (std::size_t b = 0; b < run.status.size(); ++b) {
        nlohmann::json rec = {{"record", "draw"}, {"index", b}};
        if (run.status[b].ok) {
            rec["status"] = "ok";
            rec["theta"] = vector_json(run.samples.row(row++).transpose());
        } else {
            rec["status"] = "failed";
            rec["message"] = run.status[b].message;
        }
        out << rec.dump() << '\n';
    }
    std::vector<double> lower, upper;
    for (const auto& iv : run.intervals) {
        lower.push_back(iv.lower);
        upper.push_back(iv.upper);
    }
    nlohmann::json summary = {
        {"record", "summary"},   {"point", vector_json(run.point)},
        {"lower", lower},        {"upper", upper},
        {"level", run.config.level}, {"successful", run.samples.rows()},
        {"failed", run.failed()},
    };
    out << summary.dump() << '\n';
    return out.str();
}

}  // namespace rai
