#include "rai/cli.hpp"

#include "rai/detail/text.hpp"
#include "rai/diagnostics.hpp"
#include "rai/error.hpp"
#include "rai/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace rai::cli {

namespace {

using detail::format_double;

struct Options {
    std::string command;
    std::string labeled, base, scenario, out, config;
    std::string loss = "mean";
    double tau = 0.5;
    int classes = 0;
    double ridge = 1e-8;
    int hidden = 20, epochs = 200;
    double step = 1e-2;
    bool no_intercept = false;
    std::string rectifier = "quantile-map";
    std::string strategy = "npb";
    double split_fraction = 0.5;
    double gamma = 1.0;
    int draws = 500;
    double level = 0.9;
    int replications = 100;
    std::uint64_t seed = 0;
    std::string threads = "1";
    Index n = 500, n_unlabeled = 2000, n_test = 0, dx = 1;
    double noise = 0.5, shift = 1.0, distortion = 1.0, temperature = 2.0;
    Index subset = 0, coordinate = 0;
    std::string methods;
};

LossSpec make_loss(const Options& o) {
    if (o.loss == "mean") return MeanLoss{};
    if (o.loss == "quantile") return QuantileLoss{o.tau};
    if (o.loss == "linear") return LinearRegressionLoss{!o.no_intercept};
    if (o.loss == "logistic") return MultinomialLogisticLoss{o.classes > 0 ? o.classes : 2, o.ridge};
    if (o.loss == "mlp") {
        MlpLoss m;
        m.hidden = o.hidden;
        m.num_classes = o.classes > 0 ? o.classes : 2;
        m.epochs = o.epochs;
        m.step = o.step;
        m.seed = o.seed;
        return m;
    }
    throw ParameterError("unknown loss '" + o.loss + "'");
}

RectifierSpec make_rectifier(const std::string& name) {
    if (name == "identity") return IdentityRectifier{};
    if (name == "quantile-map") return QuantileMapRectifier{};
    if (name == "isotonic") return IsotonicRectifier{};
    if (name == "moment-shift") return MomentShiftRectifier{};
    if (name == "moment-affine") return MomentAffineRectifier{};
    if (name == "prob-recalib") return ProbRecalibRectifier{};
    throw ParameterError("unknown rectifier '" + name + "'");
}

CalibrationStrategy make_strategy(const Options& o) {
    if (o.strategy == "fixed") return FixedCalibration{};
    if (o.strategy == "split") return SplitCalibration{o.split_fraction};
    if (o.strategy == "npb") return NpbCalibration{};
    throw ParameterError("unknown strategy '" + o.strategy + "'");
}

unsigned make_threads(const std::string& s) {
    if (s == "auto") return 0;
    const auto v = detail::parse_double(s);
    if (!v || *v < 1 || *v != std::floor(*v) || *v > 4096)
        throw ParameterError("--threads takes a positive integer or 'auto'");
    return static_cast<unsigned>(*v);
}

std::optional<ScenarioSpec> make_scenario(const Options& o, const LossSpec& loss) {
    if (o.scenario.empty()) return std::nullopt;
    ScenarioSpec s;
    s.kind = parse_scenario_kind(o.scenario);
    s.n = o.n;
    s.n_unlabeled = o.n_unlabeled;
    s.n_test = o.n_test;
    s.covariate_dim = o.dx;
    s.noise = o.noise;
    s.shift = o.shift;
    s.distortion = o.distortion;
    s.temperature = o.temperature;
    s.num_classes = o.classes > 0 ? o.classes : 3;
    s.target = loss;
    s.seed = o.seed;
    return s;
}

PriorConfig make_prior(const Options& o) {
    PriorConfig p;
    p.gamma = o.gamma;
    p.draws = o.draws;
    p.level = o.level;
    p.strategy = make_strategy(o);
    p.rectifier = make_rectifier(o.rectifier);
    p.seed = o.seed;
    p.threads = make_threads(o.threads);
    return p;
}

struct Inputs {
    LabeledSample labeled;
    std::optional<AtomicMeasure> base;
};

Inputs load_inputs(const Options& o, const LossSpec& loss, bool need_base) {
    if (!o.scenario.empty()) {
        if (!o.labeled.empty() || !o.base.empty())
            throw ParameterError("--scenario cannot be combined with --labeled or --base");
        Scenario s = generate_scenario(*make_scenario(o, loss));
        return Inputs{std::move(s.labeled), std::move(s.base)};
    }
    if (o.labeled.empty()) throw ParameterError("either --labeled or --scenario is required");
    std::optional<int> classes;
    if (o.classes > 0) classes = o.classes;
    else if (is_classification(loss)) classes = num_classes(loss);
    Inputs in{load_labeled_csv(o.labeled, classes), std::nullopt};
    if (!o.base.empty()) in.base = load_base_csv(o.base);
    else if (need_base) throw ParameterError("--base is required");
    return in;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParameterError("cannot write '" + path + "'");
    f << text;
}

std::string pretty(double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(6) << v;
    return os.str();
}

std::string vector_text(const Eigen::VectorXd& v) {
    std::string s;
    for (Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
    return s;
}

int cmd_infer(const Options& o, std::ostream& out) {
    const LossSpec loss = make_loss(o);
    const PriorConfig prior = make_prior(o);
    const Inputs in = load_inputs(o, loss, prior.gamma > 0.0);
    const PosteriorRun run =
        prior.gamma > 0.0 ? run_posterior(in.labeled, *in.base, loss, prior) : run_posterior(in.labeled, loss, prior);
    if (!o.out.empty()) write_text(o.out, serialize(run));
    out << "loss " << describe(loss) << ", rectifier " << describe(prior.rectifier) << ", strategy "
        << describe(prior.strategy) << ", gamma " << pretty(prior.gamma) << "\n"
        << "draws " << prior.draws << " (" << run.failed() << " failed), level " << pretty(prior.level) << "\n";
    for (Index j = 0; j < run.point.size(); ++j)
        out << "theta[" << j << "] mean " << pretty(run.point[j]) << "  interval ["
            << pretty(run.intervals[static_cast<std::size_t>(j)].lower) << ", "
            << pretty(run.intervals[static_cast<std::size_t>(j)].upper) << "]\n";
    return 0;
}

int cmd_rectify(const Options& o, std::ostream& out) {
    const LossSpec loss = make_loss(o);
    const Inputs in = load_inputs(o, loss, true);
    const std::string text = serialize(fit_rectifier(make_rectifier(o.rectifier), in.labeled, *in.base));
    if (o.out.empty()) out << text;
    else write_text(o.out, text);
    return 0;
}

int cmd_bench(const Options& o, std::ostream& out) {
    RunConfig c;
    c.loss = make_loss(o);
    c.scenario = make_scenario(o, c.loss);
    if (!o.labeled.empty()) c.labeled_path = o.labeled;
    if (!o.base.empty()) c.base_path = o.base;
    if (o.classes > 0) c.num_classes = o.classes;
    c.rectifier = make_rectifier(o.rectifier);
    c.strategy = make_strategy(o);
    c.gamma = o.gamma;
    c.draws = o.draws;
    c.level = o.level;
    c.replications = o.replications;
    c.seed = o.seed;
    c.threads = make_threads(o.threads);
    c.output = o.out;
    c.subset = o.subset;
    c.coordinate = o.coordinate;
    std::stringstream methods(o.methods);
    for (std::string m; std::getline(methods, m, ',');)
        if (!m.empty()) c.methods.push_back(m);
    const auto records = run_bench(c);
    const std::string table = format_bench_table(records);
    const std::string summary = format_bench_summary(aggregate_bench(records));
    if (c.output.empty()) {
        out << table << summary;
    } else {
        write_text(c.output, table);
        out << summary;
    }
    return 0;
}

int cmd_diagnose(const Options& o, std::ostream& out) {
    const LossSpec loss = make_loss(o);
    const Inputs in = load_inputs(o, loss, true);
    const RectifierSpec rect = make_rectifier(o.rectifier);
    const Theta theta = solve_weighted(WeightedProblem::uniform(in.labeled, loss), SeededRng(o.seed, 0));
    const AtomicMeasure rectified = apply_rectifier(fit_rectifier(rect, in.labeled, *in.base), *in.base);
    const SandwichEstimate s = sandwich(in.labeled, rectified, loss, theta, o.gamma);
    std::ostringstream r;
    r << "rai-diagnose 1\n"
      << "loss = " << describe(loss) << "\n"
      << "rectifier = " << describe(rect) << "\n"
      << "gamma = " << format_double(o.gamma) << "\n"
      << "n = " << in.labeled.size() << "\n"
      << "theta_labeled = " << vector_text(theta) << "\n"
      << "sandwich_sd = " << vector_text(s.cov.diagonal().cwiseMax(0.0).cwiseSqrt()) << "\n"
      << "bias_raw = " << vector_text(predict_centering_bias(in.labeled, *in.base, loss, theta, o.gamma)) << "\n"
      << "bias_rectified = " << vector_text(predict_centering_bias(in.labeled, rectified, loss, theta, o.gamma))
      << "\n";
    if (!o.out.empty()) write_text(o.out, r.str());
    out << r.str();
    return 0;
}

int cmd_generate(const Options& o, std::ostream& out) {
    if (o.scenario.empty()) throw ParameterError("generate needs --scenario");
    if (o.out.empty()) throw ParameterError("generate needs --out (file prefix)");
    const LossSpec loss = make_loss(o);
    const Scenario s = generate_scenario(*make_scenario(o, loss));
    write_labeled_csv(o.out + "-labeled.csv", s.labeled);
    write_base_csv(o.out + "-base.csv", s.base);
    if (s.test) write_labeled_csv(o.out + "-test.csv", *s.test);
    out << "wrote " << o.out << "-labeled.csv (" << s.labeled.size() << " rows), " << o.out << "-base.csv ("
        << s.base.size() << " atoms)";
    if (s.test) out << ", " << o.out << "-test.csv (" << s.test->size() << " rows)";
    out << "\n";
    if (s.theta0) out << "theta0 = " << vector_text(*s.theta0) << "\n";
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Rectified AI-prior posterior bootstrap", "rai"};
    app.set_config("--config", "", "Flat key = value file with the same names as the flags");
    app.add_option("command", o.command, "infer | rectify | bench | diagnose | generate")
        ->required()
        ->check(CLI::IsMember({"infer", "rectify", "bench", "diagnose", "generate"}));
    app.add_option("--labeled", o.labeled, "Labeled CSV (x1..xd, y or y_class, optional yhat or p1..pC)");
    app.add_option("--base", o.base, "Unlabeled CSV with imputations (x1..xd, yhat or p1..pC)");
    app.add_option("--scenario", o.scenario,
                   "gaussian-shift | monotone-distortion | heteroscedastic-linear | categorical-miscalibrated");
    app.add_option("--loss", o.loss, "mean | quantile | linear | logistic | mlp")->capture_default_str();
    app.add_option("--tau", o.tau, "Quantile level")->capture_default_str();
    app.add_option("--classes", o.classes, "Number of classes");
    app.add_option("--ridge", o.ridge, "Logistic ridge penalty")->capture_default_str();
    app.add_option("--hidden", o.hidden, "MLP hidden units")->capture_default_str();
    app.add_option("--epochs", o.epochs, "MLP Adam epochs")->capture_default_str();
    app.add_option("--step", o.step, "MLP Adam step size")->capture_default_str();
    app.add_flag("--no-intercept", o.no_intercept, "Linear regression without intercept");
    app.add_option("--rectifier", o.rectifier,
                   "identity | quantile-map | isotonic | moment-shift | moment-affine | prob-recalib")
        ->capture_default_str();
    app.add_option("--strategy", o.strategy, "fixed | split | npb")->capture_default_str();
    app.add_option("--split-fraction", o.split_fraction, "Calibration share under split")->capture_default_str();
    app.add_option("--gamma", o.gamma, "Prior strength alpha / n")->capture_default_str();
    app.add_option("--draws", o.draws, "Posterior draws B")->capture_default_str();
    app.add_option("--level", o.level, "Credible level")->capture_default_str();
    app.add_option("--replications", o.replications, "Bench replications")->capture_default_str();
    app.add_option("--seed", o.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", o.threads, "Worker threads or 'auto'")->capture_default_str();
    app.add_option("--out", o.out, "Output path (prefix for generate)");
    app.add_option("--n", o.n, "Scenario labeled size")->capture_default_str();
    app.add_option("--n-unlabeled", o.n_unlabeled, "Scenario unlabeled size")->capture_default_str();
    app.add_option("--n-test", o.n_test, "Scenario test size")->capture_default_str();
    app.add_option("--dx", o.dx, "Scenario covariate dimension")->capture_default_str();
    app.add_option("--noise", o.noise, "Scenario noise scale")->capture_default_str();
    app.add_option("--shift", o.shift, "Scenario imputation shift")->capture_default_str();
    app.add_option("--distortion", o.distortion, "Scenario distortion")->capture_default_str();
    app.add_option("--temperature", o.temperature, "Scenario sharpening temperature")->capture_default_str();
    app.add_option("--subset", o.subset, "Bench data mode: labeled rows per replication (0 = all)");
    app.add_option("--coordinate", o.coordinate, "Bench: reported theta coordinate");
    app.add_option("--methods", o.methods, "Bench: comma list of classical,bayes-bootstrap,raw,rectified");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (o.command == "infer") return cmd_infer(o, out);
        if (o.command == "rectify") return cmd_rectify(o, out);
        if (o.command == "bench") return cmd_bench(o, out);
        if (o.command == "diagnose") return cmd_diagnose(o, out);
        return cmd_generate(o, out);
    } catch (const IngestionError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const TypeError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const RankDeficiencyError& e) {
        err << "rank deficiency: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace rai::cli
