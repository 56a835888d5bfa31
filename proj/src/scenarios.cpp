#include "rai/harness.hpp"

#include "rai/error.hpp"

#include <cmath>
#include <numbers>

namespace rai {

namespace {

constexpr double kSignal = 2.0;

struct Rows {
    Eigen::MatrixXd x;
    OutcomeColumn y;
    OutcomeColumn yhat;
};

Eigen::VectorXd theta_star(const ScenarioSpec& s) {
    if (s.theta_star.size() > 0) return s.theta_star;
    Eigen::VectorXd t = Eigen::VectorXd::Zero(s.covariate_dim + 1);
    t[0] = 2.0;
    if (s.covariate_dim > 0) t[1] = -1.0;
    return t;
}

// Column c holds u_c.
Eigen::MatrixXd class_directions(const ScenarioSpec& s) {
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(s.covariate_dim, s.num_classes);
    for (int c = 0; c < s.num_classes; ++c) {
        const double angle = 2.0 * std::numbers::pi * c / s.num_classes;
        u(0, c) = std::cos(angle);
        if (s.covariate_dim > 1) u(1, c) = std::sin(angle);
    }
    return u;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    const Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

Eigen::MatrixXd gaussian_matrix(Index rows, Index cols, SeededRng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

Rows draw_rows(const ScenarioSpec& s, Index n, SeededRng rng) {
    Eigen::MatrixXd x = gaussian_matrix(n, s.covariate_dim, rng);
    if (s.kind == ScenarioKind::CategoricalMiscalibrated) {
        const Eigen::MatrixXd u = class_directions(s);
        Eigen::VectorXi labels(n);
        Eigen::MatrixXd probs(n, s.num_classes);
        for (Index i = 0; i < n; ++i) {
            const Eigen::VectorXd logits = kSignal * (u.transpose() * x.row(i).transpose());
            labels[i] = static_cast<int>(rng.categorical(softmax(logits)));
            Eigen::VectorXd tilted = s.temperature * logits;
            tilted[0] += s.shift;
            probs.row(i) = softmax(tilted).transpose();
        }
        return Rows{std::move(x), OutcomeColumn::classes(std::move(labels), s.num_classes),
                    OutcomeColumn::probabilities(std::move(probs))};
    }
    Eigen::VectorXd y(n), yhat(n);
    const Eigen::VectorXd t = theta_star(s);
    for (Index i = 0; i < n; ++i) {
        switch (s.kind) {
            case ScenarioKind::GaussianShift:
                y[i] = rng.normal();
                yhat[i] = y[i] + s.shift + s.noise * rng.normal();
                break;
            case ScenarioKind::MonotoneDistortion:
                y[i] = rng.normal();
                yhat[i] = s.shift + std::sinh(s.distortion * y[i]) / s.distortion + s.noise * rng.normal();
                break;
            case ScenarioKind::HeteroscedasticLinear: {
                const double signal = x.row(i).dot(t.tail(s.covariate_dim));
                const double scale = 0.5 + (s.covariate_dim > 0 ? std::abs(x(i, 0)) : 0.0);
                y[i] = t[0] + signal + s.noise * scale * rng.normal();
                yhat[i] = t[0] + s.shift + (1.0 + s.distortion) * signal;
                break;
            }
            case ScenarioKind::CategoricalMiscalibrated: break;
        }
    }
    return Rows{std::move(x), OutcomeColumn::reals(std::move(y)), OutcomeColumn::reals(std::move(yhat))};
}

std::optional<Theta> closed_form_theta(const ScenarioSpec& s) {
    const Index d = s.covariate_dim;
    switch (s.kind) {
        case ScenarioKind::GaussianShift:
        case ScenarioKind::MonotoneDistortion:
            if (std::holds_alternative<MeanLoss>(s.target)) return Theta::Zero(1);
            if (const auto* q = std::get_if<QuantileLoss>(&s.target))
                return Theta::Constant(1, normal_quantile(q->tau));
            if (const auto* l = std::get_if<LinearRegressionLoss>(&s.target))
                return Theta::Zero(d + (l->intercept ? 1 : 0));
            return std::nullopt;
        case ScenarioKind::HeteroscedasticLinear: {
            const Eigen::VectorXd t = theta_star(s);
            if (std::holds_alternative<MeanLoss>(s.target)) return Theta::Constant(1, t[0]);
            if (const auto* q = std::get_if<QuantileLoss>(&s.target))
                return q->tau == 0.5 ? std::optional<Theta>(Theta::Constant(1, t[0])) : std::nullopt;
            if (const auto* l = std::get_if<LinearRegressionLoss>(&s.target)) {
                if (l->intercept) return t;
                return t[0] == 0.0 ? std::optional<Theta>(t.tail(d)) : std::nullopt;
            }
            return std::nullopt;
        }
        case ScenarioKind::CategoricalMiscalibrated: {
            if (!std::holds_alternative<MultinomialLogisticLoss>(s.target)) return std::nullopt;
            const Eigen::MatrixXd u = class_directions(s);
            Theta theta = Theta::Zero(s.num_classes * (d + 1));
            for (int c = 0; c < s.num_classes; ++c) theta.segment(c * (d + 1) + 1, d) = kSignal * u.col(c);
            return theta;
        }
    }
    return std::nullopt;
}

}  // namespace

const char* to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::GaussianShift: return "gaussian-shift";
        case ScenarioKind::MonotoneDistortion: return "monotone-distortion";
        case ScenarioKind::HeteroscedasticLinear: return "heteroscedastic-linear";
        case ScenarioKind::CategoricalMiscalibrated: return "categorical-miscalibrated";
    }
    return "?";
}

ScenarioKind parse_scenario_kind(const std::string& name) {
    for (auto k : {ScenarioKind::GaussianShift, ScenarioKind::MonotoneDistortion, ScenarioKind::HeteroscedasticLinear,
                   ScenarioKind::CategoricalMiscalibrated})
        if (name == to_string(k)) return k;
    throw ParameterError("unknown scenario '" + name + "'");
}

void validate(const ScenarioSpec& s) {
    validate(s.target);
    if (s.n < 1 || s.n_unlabeled < 1 || s.n_test < 0) throw ParameterError("scenario sizes must be at least 1");
    if (s.covariate_dim < 0) throw ParameterError("covariate dimension must be nonnegative");
    for (double v : {s.noise, s.shift, s.distortion, s.temperature})
        if (!std::isfinite(v)) throw ParameterError("scenario parameters must be finite");
    if (s.noise < 0.0) throw ParameterError("noise scale must be nonnegative");
    const bool categorical = s.kind == ScenarioKind::CategoricalMiscalibrated;
    if (categorical) {
        if (s.num_classes < 2) throw ParameterError("categorical scenario needs at least 2 classes");
        if (s.covariate_dim < 1) throw ParameterError("categorical scenario needs at least one covariate");
        if (!(s.temperature > 0.0)) throw ParameterError("temperature must be positive");
        if (!is_classification(s.target)) throw TypeError("categorical scenario needs a classification target");
        if (num_classes(s.target) != s.num_classes)
            throw TypeError("target class count differs from the scenario class count");
    } else if (is_classification(s.target)) {
        throw TypeError(std::string(to_string(s.kind)) + " emits real outcomes; the target must be a regression loss");
    }
    if (s.kind == ScenarioKind::MonotoneDistortion && !(s.distortion > 0.0))
        throw ParameterError("distortion must be positive");
    if (s.kind == ScenarioKind::HeteroscedasticLinear) {
        if (s.theta_star.size() > 0 && s.theta_star.size() != s.covariate_dim + 1)
            throw ParameterError("theta_star must have covariate_dim + 1 entries");
        if (!s.theta_star.allFinite()) throw ParameterError("theta_star must be finite");
    }
}

Scenario generate_scenario(const ScenarioSpec& spec) {
    validate(spec);
    const SeededRng root(spec.seed, 0);
    Rows lab = draw_rows(spec, spec.n, root.substream(1));
    Rows unl = draw_rows(spec, spec.n_unlabeled, root.substream(2));
    std::optional<LabeledSample> test;
    if (spec.n_test > 0) {
        Rows t = draw_rows(spec, spec.n_test, root.substream(3));
        test.emplace(std::move(t.x), std::move(t.y), std::move(t.yhat));
    }
    return Scenario{LabeledSample(std::move(lab.x), std::move(lab.y), std::move(lab.yhat)),
                    AtomicMeasure::uniform(std::move(unl.x), std::move(unl.yhat)), closed_form_theta(spec),
                    std::move(test)};
}

}  // namespace rai
