#include "rai/harness.hpp"

#include "rai/detail/text.hpp"
#include "rai/error.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace rai {

namespace {

using detail::format_double;

std::vector<std::string> resolved_methods(const RunConfig& c) {
    if (!c.methods.empty()) return c.methods;
    const bool classical = std::holds_alternative<MeanLoss>(c.loss) || std::holds_alternative<QuantileLoss>(c.loss) ||
                           std::holds_alternative<LinearRegressionLoss>(c.loss);
    std::vector<std::string> out;
    for (const auto& m : kBenchMethods)
        if (m != "classical" || classical) out.push_back(m);
    return out;
}

std::uint64_t method_tag(const std::string& method) {
    return static_cast<std::uint64_t>(std::find(kBenchMethods.begin(), kBenchMethods.end(), method) -
                                      kBenchMethods.begin());
}

struct Replicate {
    LabeledSample labeled;
    AtomicMeasure base;
    Theta truth;
};

// Data mode: a fixed pool, optionally a fixed base file, and the pool-wide ERM
// as the estimand.
struct Pool {
    LabeledSample labeled;
    std::optional<AtomicMeasure> base;
    Theta truth;
};

Replicate from_pool(const Pool& pool, Index subset, SeededRng rng) {
    const Index total = pool.labeled.size();
    const Index n = subset == 0 ? total : subset;
    if (n > total) throw ParameterError("subset size exceeds the labeled pool");
    std::vector<Index> idx(static_cast<std::size_t>(total));
    std::iota(idx.begin(), idx.end(), Index{0});
    for (Index i = 0; i < n; ++i)
        std::swap(idx[i], idx[i + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(total - i)))]);
    std::vector<Index> chosen(idx.begin(), idx.begin() + n);
    std::vector<Index> rest(idx.begin() + n, idx.end());
    std::sort(chosen.begin(), chosen.end());
    std::sort(rest.begin(), rest.end());
    LabeledSample labeled = pool.labeled.rows(chosen);
    if (pool.base) return Replicate{std::move(labeled), *pool.base, pool.truth};
    if (rest.empty()) throw ParameterError("no base file and no pool rows left to form the unlabeled base");
    if (!pool.labeled.imputed()) throw ParameterError("no base file and the labeled pool carries no imputations");
    const LabeledSample remainder = pool.labeled.rows(rest);
    return Replicate{std::move(labeled),
                     AtomicMeasure::uniform(remainder.covariates(), *remainder.imputed()), pool.truth};
}

[[noreturn]] void rethrow_tagged(const std::string& prefix) {
    try {
        throw;
    } catch (const IngestionError& e) {
        throw IngestionError(prefix + e.what(), 0);
    } catch (const RankDeficiencyError& e) {
        throw RankDeficiencyError(prefix + e.what());
    } catch (const DrawFailureError& e) {
        throw DrawFailureError(prefix + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(prefix + e.what());
    } catch (const CapabilityError& e) {
        throw CapabilityError(prefix + e.what());
    } catch (const TypeError& e) {
        throw TypeError(prefix + e.what());
    } catch (const ParameterError& e) {
        throw ParameterError(prefix + e.what());
    }
}

}  // namespace

void validate(const RunConfig& c) {
    if (c.scenario.has_value() == c.labeled_path.has_value())
        throw ParameterError("exactly one of a labeled data file or a scenario must be given");
    if (c.scenario && c.base_path) throw ParameterError("a base file cannot be combined with a scenario");
    validate(c.loss);
    validate(c.rectifier);
    validate(c.strategy);
    if (c.scenario) validate(*c.scenario);
    if (!(c.gamma >= 0.0) || !std::isfinite(c.gamma)) throw ParameterError("gamma must be a finite nonnegative number");
    if (c.draws < 2) throw ParameterError("at least 2 posterior draws are required");
    if (!(c.level > 0.0 && c.level < 1.0)) throw ParameterError("level must lie in (0, 1)");
    if (c.replications < 1) throw ParameterError("replications must be at least 1");
    if (c.subset < 0 || c.coordinate < 0) throw ParameterError("subset and coordinate must be nonnegative");
    for (const auto& m : c.methods)
        if (std::find(kBenchMethods.begin(), kBenchMethods.end(), m) == kBenchMethods.end())
            throw ParameterError("unknown bench method '" + m + "'");
}

std::vector<BenchRecord> run_bench(const RunConfig& config) {
    validate(config);
    const std::vector<std::string> methods = resolved_methods(config);

    std::optional<Pool> pool;
    if (config.labeled_path) {
        LabeledSample labeled = load_labeled_csv(*config.labeled_path, config.num_classes);
        std::optional<AtomicMeasure> base;
        if (config.base_path) base = load_base_csv(*config.base_path);
        Theta truth = solve_weighted(WeightedProblem::uniform(labeled, config.loss), SeededRng(config.seed, 0));
        pool = Pool{std::move(labeled), std::move(base), std::move(truth)};
    }

    std::vector<BenchRecord> records;
    for (int r = 0; r < config.replications; ++r) {
        const std::uint64_t rep_seed = mix64(config.seed, static_cast<std::uint64_t>(r));
        try {
            std::optional<Replicate> rep;
            if (pool) {
                rep = from_pool(*pool, config.subset, SeededRng(rep_seed, 0));
            } else {
                ScenarioSpec spec = *config.scenario;
                spec.seed = rep_seed;
                spec.target = config.loss;
                Scenario s = generate_scenario(spec);
                if (!s.theta0)
                    throw CapabilityError("scenario " + std::string(to_string(spec.kind)) +
                                          " has no closed-form estimand for loss " + describe(config.loss));
                rep = Replicate{std::move(s.labeled), std::move(s.base), std::move(*s.theta0)};
            }
            if (config.coordinate >= rep->truth.size())
                throw ParameterError("coordinate " + std::to_string(config.coordinate) + " exceeds the parameter dimension");
            const double truth = rep->truth[config.coordinate];

            for (const auto& method : methods) {
                if (method == "classical") {
                    const Theta point =
                        solve_weighted(WeightedProblem::uniform(rep->labeled, config.loss), SeededRng(rep_seed, 1));
                    const auto iv = classical_interval(rep->labeled, config.loss, config.level);
                    records.push_back(make_bench_record(r, method, iv[static_cast<std::size_t>(config.coordinate)],
                                                        point[config.coordinate], truth, config.level));
                    continue;
                }
                PriorConfig prior;
                prior.draws = config.draws;
                prior.level = config.level;
                prior.threads = config.threads;
                prior.seed = mix64(rep_seed, 16 + method_tag(method));
                prior.strategy = config.strategy;
                PosteriorRun run;
                if (method == "bayes-bootstrap") {
                    prior.gamma = 0.0;
                    run = run_posterior(rep->labeled, config.loss, prior);
                } else {
                    prior.gamma = config.gamma;
                    prior.rectifier = method == "raw" ? RectifierSpec{IdentityRectifier{}} : config.rectifier;
                    run = run_posterior(rep->labeled, rep->base, config.loss, prior);
                }
                records.push_back(make_bench_record(r, method, run.intervals[static_cast<std::size_t>(config.coordinate)],
                                                    run.point[config.coordinate], truth, config.level));
            }
        } catch (const Error&) {
            rethrow_tagged("replication " + std::to_string(r) + ": ");
        }
    }
    return records;
}

std::string format_bench_table(const std::vector<BenchRecord>& records) {
    std::ostringstream out;
    out << "rai-bench 1\n"
        << "replication,method,lower,upper,point,truth,covered,interval_score,width\n";
    for (const auto& r : records)
        out << r.replication << ',' << r.method << ',' << format_double(r.lower) << ',' << format_double(r.upper) << ','
            << format_double(r.point) << ',' << format_double(r.truth) << ',' << (r.covered ? 1 : 0) << ','
            << format_double(r.interval_score) << ',' << format_double(r.width) << '\n';
    return out.str();
}

std::string format_bench_summary(const std::vector<MethodSummary>& summaries) {
    std::ostringstream out;
    out << "rai-bench-summary 1\n"
        << "method,replications,mean_bias,bias_se,mean_interval_score,interval_score_se,mean_width,width_se,"
           "coverage,coverage_se\n";
    for (const auto& s : summaries)
        out << s.method << ',' << s.replications << ',' << format_double(s.mean_bias) << ',' << format_double(s.bias_se)
            << ',' << format_double(s.mean_interval_score) << ',' << format_double(s.interval_score_se) << ','
            << format_double(s.mean_width) << ',' << format_double(s.width_se) << ',' << format_double(s.coverage)
            << ',' << format_double(s.coverage_se) << '\n';
    return out.str();
}

}  // namespace rai
