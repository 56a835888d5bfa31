#include "rai/rectifiers.hpp"

#include "rai/detail/text.hpp"
#include "rai/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace rai {

namespace {

using detail::format_double;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Eigen::VectorXd sorted(Eigen::VectorXd v) {
    std::sort(v.data(), v.data() + v.size());
    return v;
}

const Eigen::VectorXd& calibration_imputations(const LabeledSample& calib, const char* who) {
    if (!calib.imputed())
        throw TypeError(std::string(who) + " needs AI imputations on the calibration rows");
    return calib.imputed()->real_values();
}

// Weighted mean of each column of m under w.
Eigen::VectorXd weighted_column_mean(const Eigen::MatrixXd& m, const Eigen::VectorXd& w) {
    return m.transpose() * w / w.sum();
}

std::string format_vector(const Eigen::VectorXd& v) {
    std::string out;
    for (Index i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += format_double(v[i]);
    }
    return out;
}

Eigen::VectorXd parse_vector(const std::string& text) {
    std::istringstream is(text);
    std::vector<double> vals;
    std::string tok;
    while (is >> tok) {
        const auto v = detail::parse_double(tok);
        if (!v) throw IngestionError("not a number: '" + tok + "'", 0);
        vals.push_back(*v);
    }
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Index>(vals.size()));
}

Eigen::MatrixXd recalibration_features(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& covariates, double clamp) {
    const Eigen::MatrixXd p = normalize_probability_rows(probs, clamp);
    Eigen::MatrixXd f(p.rows(), p.cols() + covariates.cols());
    f.leftCols(p.cols()) = p.array().log().matrix();
    f.rightCols(covariates.cols()) = covariates;
    return f;
}

}  // namespace

void validate(const RectifierSpec& spec) {
    if (const auto* p = std::get_if<ProbRecalibRectifier>(&spec)) {
        if (!(p->ridge >= 0.0)) throw ParameterError("prob-recalib ridge must be nonnegative");
        if (!(p->clamp > 0.0 && p->clamp <= 1e-2)) throw ParameterError("prob-recalib clamp must lie in (0, 1e-2]");
    }
}

void validate(const CalibrationStrategy& strategy) {
    if (const auto* s = std::get_if<SplitCalibration>(&strategy))
        if (!(s->fraction > 0.0 && s->fraction < 1.0)) throw ParameterError("split fraction must lie in (0, 1)");
}

std::string describe(const RectifierSpec& spec) {
    return std::visit(overloaded{
                          [](const IdentityRectifier&) -> std::string { return "identity"; },
                          [](const QuantileMapRectifier&) -> std::string { return "quantile-map"; },
                          [](const IsotonicRectifier&) -> std::string { return "isotonic"; },
                          [](const MomentShiftRectifier&) -> std::string { return "moment-shift"; },
                          [](const MomentAffineRectifier&) -> std::string { return "moment-affine"; },
                          [](const ProbRecalibRectifier&) -> std::string { return "prob-recalib"; },
                      },
                      spec);
}

std::string describe(const CalibrationStrategy& strategy) {
    return std::visit(overloaded{
                          [](const FixedCalibration&) -> std::string { return "fixed"; },
                          [](const SplitCalibration& s) -> std::string { return "split(" + format_double(s.fraction) + ")"; },
                          [](const NpbCalibration&) -> std::string { return "npb"; },
                      },
                      strategy);
}

double QuantileMapFit::operator()(double y) const {
    const double* begin = imputed_grid.data();
    const auto count = std::upper_bound(begin, begin + imputed_grid.size(), y) - begin;
    return true_grid[std::max<Index>(count, 1) - 1];
}

double IsotonicFit::operator()(double y) const {
    const Index k = knots.size();
    if (y <= knots[0]) return values[0];
    if (y >= knots[k - 1]) return values[k - 1];
    const double* begin = knots.data();
    const Index upper = std::upper_bound(begin, begin + k, y) - begin;  // knots[upper-1] <= y < knots[upper]
    const double mid = 0.5 * (knots[upper - 1] + knots[upper]);
    return y < mid ? values[upper - 1] : values[upper];
}

Eigen::MatrixXd ProbRecalibFit::operator()(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& covariates) const {
    if (probs.cols() != weights.rows() || probs.cols() + covariates.cols() != weights.cols())
        throw TypeError("prob-recalib: class count or covariate dimension does not match the fit");
    Eigen::MatrixXd logits = recalibration_features(probs, covariates, clamp) * weights.transpose();
    logits.rowwise() += bias.transpose();
    for (Index i = 0; i < logits.rows(); ++i) {
        const double top = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - top).exp();
        logits.row(i) /= logits.row(i).sum();
    }
    return logits;
}

CalibrationSplit make_calibration_sample(const LabeledSample& labeled, const CalibrationStrategy& strategy,
                                         SeededRng rng) {
    validate(strategy);
    return std::visit(
        overloaded{
            [&](const FixedCalibration&) { return CalibrationSplit{labeled, labeled}; },
            [&](const NpbCalibration&) {
                return CalibrationSplit{resample_nonparametric_bootstrap(labeled, rng), labeled};
            },
            [&](const SplitCalibration& s) {
                const Index n = labeled.size();
                if (n < 2) throw ParameterError("split calibration needs at least 2 labeled rows");
                const auto m = static_cast<Index>(std::ceil(s.fraction * static_cast<double>(n)));
                if (m < 1 || m >= n) throw ParameterError("split calibration leaves an empty part");
                std::vector<Index> idx(static_cast<std::size_t>(n));
                std::iota(idx.begin(), idx.end(), Index{0});
                for (Index i = n - 1; i > 0; --i)
                    std::swap(idx[i], idx[rng.uniform_index(static_cast<std::uint64_t>(i + 1))]);
                std::vector<Index> calib(idx.begin(), idx.begin() + m);
                std::vector<Index> infer(idx.begin() + m, idx.end());
                std::sort(calib.begin(), calib.end());
                std::sort(infer.begin(), infer.end());
                return CalibrationSplit{labeled.rows(calib), labeled.rows(infer)};
            },
        },
        strategy);
}

QuantileMapFit fit_quantile_map(const Eigen::VectorXd& calib_true, const Eigen::VectorXd& calib_imputed) {
    if (calib_true.size() != calib_imputed.size())
        throw ParameterError("fit_quantile_map: true and imputed lengths differ");
    if (calib_true.size() < 1) throw ParameterError("fit_quantile_map: empty calibration sample");
    return QuantileMapFit{sorted(calib_imputed), sorted(calib_true)};
}

IsotonicFit fit_isotonic(const Eigen::VectorXd& calib_imputed, const Eigen::VectorXd& calib_true) {
    if (calib_true.size() != calib_imputed.size())
        throw ParameterError("fit_isotonic: true and imputed lengths differ");
    const Index m = calib_true.size();
    if (m < 1) throw ParameterError("fit_isotonic: empty calibration sample");
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return calib_imputed[a] < calib_imputed[b]; });

    // Tied imputations form one knot carrying the mean of their outcomes.
    std::vector<double> knots, means, counts;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < order.size() && calib_imputed[order[j]] == calib_imputed[order[i]]) sum += calib_true[order[j++]];
        knots.push_back(calib_imputed[order[i]]);
        means.push_back(sum / static_cast<double>(j - i));
        counts.push_back(static_cast<double>(j - i));
        i = j;
    }
    const auto k = static_cast<Index>(knots.size());
    const Eigen::VectorXd fitted = pool_adjacent_violators<double>(Eigen::Map<Eigen::VectorXd>(means.data(), k),
                                                                   Eigen::Map<Eigen::VectorXd>(counts.data(), k));
    return IsotonicFit{Eigen::Map<Eigen::VectorXd>(knots.data(), k), fitted};
}

MomentShiftFit fit_moment_shift(const LabeledSample& calib, const AtomicMeasure& base) {
    const double calib_mean = calib.outcomes().real_values().mean();
    const double base_mean = base.weights().dot(base.outcomes().real_values());
    return MomentShiftFit{calib_mean - base_mean};
}

MomentAffineFit fit_moment_affine(const LabeledSample& calib, const AtomicMeasure& base) {
    if (calib.dim() != base.dim()) throw TypeError("moment-affine: covariate dimensions differ");
    const Eigen::VectorXd& yhat = base.outcomes().real_values();
    const Eigen::VectorXd& y = calib.outcomes().real_values();
    const Index d = base.dim();

    // Rows: the intercept moment, then one moment per covariate.
    Eigen::MatrixXd base_h(base.size(), d + 1);
    base_h.col(0).setOnes();
    base_h.rightCols(d) = base.covariates();
    Eigen::MatrixXd calib_h(calib.size(), d + 1);
    calib_h.col(0).setOnes();
    calib_h.rightCols(d) = calib.covariates();

    Eigen::MatrixXd design(d + 1, 2);
    design.col(0) = weighted_column_mean(base_h, base.weights());
    design.col(1) = base_h.transpose() * (base.weights().array() * yhat.array()).matrix();
    const Eigen::VectorXd target = calib_h.transpose() * y / static_cast<double>(calib.size());

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < 2) {
        const MomentShiftFit shift = fit_moment_shift(calib, base);
        return MomentAffineFit{shift.shift, 1.0, true};
    }
    const Eigen::Vector2d ab = qr.solve(target);
    return MomentAffineFit{ab[0], ab[1], false};
}

ProbRecalibFit fit_prob_recalib(const LabeledSample& calib, const Eigen::MatrixXd& calib_probs,
                                const ProbRecalibRectifier& spec) {
    validate(RectifierSpec{spec});
    if (calib_probs.rows() != calib.size()) throw ParameterError("prob-recalib: one probability row per calibration row");
    const int c = calib.outcomes().num_classes();
    if (calib.outcomes().kind() != OutcomeKind::Class) throw TypeError("prob-recalib needs Class calibration outcomes");
    if (calib_probs.cols() != c) throw TypeError("prob-recalib: probability width differs from the class count");

    const Eigen::MatrixXd features = recalibration_features(calib_probs, calib.covariates(), spec.clamp);
    const MultinomialLogisticLoss model{c, spec.ridge};
    const WeightedProblem problem(features, calib.outcomes(), Eigen::VectorXd::Ones(calib.size()), model);
    const Theta theta = solve_weighted(problem, SeededRng(0, 0));

    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMajor> coef(theta.data(), c, features.cols() + 1);
    return ProbRecalibFit{coef.rightCols(features.cols()), coef.col(0), spec.clamp};
}

FittedRectifier fit_rectifier(const RectifierSpec& spec, const LabeledSample& calib, const AtomicMeasure& base) {
    validate(spec);
    return std::visit(
        overloaded{
            [&](const IdentityRectifier&) -> FittedRectifier { return IdentityFit{}; },
            [&](const QuantileMapRectifier&) -> FittedRectifier {
                return fit_quantile_map(calib.outcomes().real_values(), calibration_imputations(calib, "quantile-map"));
            },
            [&](const IsotonicRectifier&) -> FittedRectifier {
                return fit_isotonic(calibration_imputations(calib, "isotonic"), calib.outcomes().real_values());
            },
            [&](const MomentShiftRectifier&) -> FittedRectifier { return fit_moment_shift(calib, base); },
            [&](const MomentAffineRectifier&) -> FittedRectifier { return fit_moment_affine(calib, base); },
            [&](const ProbRecalibRectifier& p) -> FittedRectifier {
                if (!calib.imputed()) throw TypeError("prob-recalib needs imputed probabilities on the calibration rows");
                return fit_prob_recalib(calib, calib.imputed()->probs(), p);
            },
        },
        spec);
}

AtomicMeasure apply_rectifier(const FittedRectifier& rectifier, const AtomicMeasure& base) {
    auto map_reals = [&](auto&& f) {
        Eigen::VectorXd y = base.outcomes().real_values();
        for (Index i = 0; i < y.size(); ++i) y[i] = f(y[i]);
        return base.with_outcomes(OutcomeColumn::reals(std::move(y)));
    };
    return std::visit(
        overloaded{
            [&](const IdentityFit&) { return base; },
            [&](const QuantileMapFit& q) { return map_reals(q); },
            [&](const IsotonicFit& q) { return map_reals(q); },
            [&](const MomentShiftFit& s) { return map_reals([&](double y) { return y + s.shift; }); },
            [&](const MomentAffineFit& a) {
                return map_reals([&](double y) { return a.intercept + a.slope * y; });
            },
            [&](const ProbRecalibFit& p) {
                return base.with_outcomes(OutcomeColumn::probabilities(p(base.outcomes().probs(), base.covariates())));
            },
        },
        rectifier);
}

Eigen::VectorXd score_discrepancy(const AtomicMeasure& base, const AtomicMeasure& reference, const LossSpec& loss,
                                  const Theta& theta) {
    auto mean_score = [&](const AtomicMeasure& m) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(theta.size());
        for (Index i = 0; i < m.size(); ++i) acc += m.weights()[i] * score(loss, theta, m.atom(i));
        return acc;
    };
    return mean_score(expand_class_probs(reference)) - mean_score(expand_class_probs(base));
}

std::string serialize(const FittedRectifier& rectifier) {
    std::ostringstream os;
    os << "rai-rectifier 1\n";
    std::visit(overloaded{
                   [&](const IdentityFit&) { os << "kind = identity\n"; },
                   [&](const QuantileMapFit& q) {
                       os << "kind = quantile-map\n"
                          << "imputed_grid = " << format_vector(q.imputed_grid) << "\n"
                          << "true_grid = " << format_vector(q.true_grid) << "\n";
                   },
                   [&](const IsotonicFit& q) {
                       os << "kind = isotonic\n"
                          << "knots = " << format_vector(q.knots) << "\n"
                          << "values = " << format_vector(q.values) << "\n";
                   },
                   [&](const MomentShiftFit& s) {
                       os << "kind = moment-shift\nshift = " << format_double(s.shift) << "\n";
                   },
                   [&](const MomentAffineFit& a) {
                       os << "kind = moment-affine\n"
                          << "intercept = " << format_double(a.intercept) << "\n"
                          << "slope = " << format_double(a.slope) << "\n"
                          << "fell_back = " << (a.fell_back ? 1 : 0) << "\n";
                   },
                   [&](const ProbRecalibFit& p) {
                       os << "kind = prob-recalib\n"
                          << "classes = " << p.weights.rows() << "\n"
                          << "features = " << p.weights.cols() << "\n"
                          << "clamp = " << format_double(p.clamp) << "\n"
                          << "bias = " << format_vector(p.bias) << "\n";
                       const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = p.weights;
                       os << "weights = " << format_vector(Eigen::Map<const Eigen::VectorXd>(w.data(), w.size())) << "\n";
                   },
               },
               rectifier);
    return os.str();
}

FittedRectifier parse_rectifier(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(is, line) || line != "rai-rectifier 1")
        throw IngestionError("missing 'rai-rectifier 1' format tag", 1);
    std::map<std::string, std::string> kv;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw IngestionError("expected 'key = value'", lineno);
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto get = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw IngestionError("missing key '" + key + "'", 0);
        return it->second;
    };
    auto scalar = [&](const std::string& key) {
        const Eigen::VectorXd v = parse_vector(get(key));
        if (v.size() != 1) throw IngestionError("key '" + key + "' must hold one number", 0);
        return v[0];
    };
    const std::string& kind = get("kind");
    if (kind == "identity") return IdentityFit{};
    if (kind == "quantile-map") return QuantileMapFit{parse_vector(get("imputed_grid")), parse_vector(get("true_grid"))};
    if (kind == "isotonic") return IsotonicFit{parse_vector(get("knots")), parse_vector(get("values"))};
    if (kind == "moment-shift") return MomentShiftFit{scalar("shift")};
    if (kind == "moment-affine") return MomentAffineFit{scalar("intercept"), scalar("slope"), scalar("fell_back") != 0.0};
    if (kind == "prob-recalib") {
        const auto c = static_cast<Index>(scalar("classes"));
        const auto f = static_cast<Index>(scalar("features"));
        const Eigen::VectorXd w = parse_vector(get("weights"));
        if (w.size() != c * f) throw IngestionError("prob-recalib weights have the wrong length", 0);
        using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        return ProbRecalibFit{Eigen::Map<const RowMajor>(w.data(), c, f), parse_vector(get("bias")), scalar("clamp")};
    }
    throw IngestionError("unknown rectifier kind '" + kind + "'", 0);
}

}  // namespace rai
