#include "rai/losses.hpp"

#include "rai/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rai {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd z(x.rows(), x.cols() + 1);
    z.col(0).setOnes();
    z.rightCols(x.cols()) = x;
    return z;
}

void check_dimension(const LossSpec& spec, const Theta& theta, Index covariate_dim) {
    const Index want = parameter_dimension(spec, covariate_dim);
    if (theta.size() != want)
        throw TypeError("theta has dimension " + std::to_string(theta.size()) + ", " + describe(spec) +
                        " with " + std::to_string(covariate_dim) + " covariates needs " + std::to_string(want));
}

void check_outcomes(const LossSpec& spec, const OutcomeColumn& y) {
    if (is_classification(spec)) {
        if (y.kind() != OutcomeKind::Class)
            throw TypeError(describe(spec) + " needs Class outcomes, got " + to_string(y.kind()));
        if (y.num_classes() != num_classes(spec))
            throw TypeError(describe(spec) + ": outcome class count " + std::to_string(y.num_classes()) +
                            " does not match");
    } else if (y.kind() != OutcomeKind::Real) {
        throw TypeError(describe(spec) + " needs Real outcomes, got " + to_string(y.kind()));
    }
}

void softmax_rows_inplace(Eigen::MatrixXd& logits) {
    for (Index i = 0; i < logits.rows(); ++i) {
        const double top = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - top).exp();
        logits.row(i) /= logits.row(i).sum();
    }
}

// Per-row -log softmax(logits)[label].
Eigen::VectorXd cross_entropy_rows(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels) {
    Eigen::VectorXd out(logits.rows());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double top = logits.row(i).maxCoeff();
        const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
        out[i] = lse - logits(i, labels[i]);
    }
    return out;
}

Eigen::MatrixXd one_hot(const Eigen::VectorXi& labels, int classes) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(labels.size(), classes);
    for (Index i = 0; i < labels.size(); ++i) y(i, labels[i]) = 1.0;
    return y;
}

// ---- multinomial logistic ---------------------------------------------------

Eigen::MatrixXd logistic_logits(const MultinomialLogisticLoss& spec, const Theta& theta, const Eigen::MatrixXd& z) {
    const Eigen::Map<const RowMajorMatrix> coef(theta.data(), spec.num_classes, z.cols());
    return z * coef.transpose();
}

// Gradient of sum_i w_i CE_i with respect to the row-major flattened Theta.
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& onehot,
                                  const Eigen::MatrixXd& z, const Eigen::VectorXd& w) {
    const Eigen::MatrixXd resid = (probs - onehot).array().colwise() * w.array();
    const RowMajorMatrix g = resid.transpose() * z;
    return Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
}

Eigen::MatrixXd logistic_hessian(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& z, const Eigen::VectorXd& w) {
    const Index c = probs.cols();
    const Index p = z.cols();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(c * p, c * p);
    for (Index i = 0; i < z.rows(); ++i) {
        const Eigen::VectorXd pi = probs.row(i).transpose();
        const Eigen::MatrixXd s = Eigen::MatrixXd(pi.asDiagonal()) - pi * pi.transpose();
        const Eigen::MatrixXd zz = z.row(i).transpose() * z.row(i);
        for (Index a = 0; a < c; ++a)
            for (Index b = 0; b < c; ++b) h.block(a * p, b * p, p, p).noalias() += (w[i] * s(a, b)) * zz;
    }
    return h;
}

Theta solve_logistic(const MultinomialLogisticLoss& spec, const WeightedProblem& problem) {
    const Eigen::MatrixXd z = with_intercept(problem.covariates);
    const Eigen::VectorXd w = problem.weights / problem.weights.sum();
    const Eigen::MatrixXd onehot = one_hot(problem.outcomes.labels(), spec.num_classes);
    const Eigen::VectorXi& labels = problem.outcomes.labels();
    const double ridge = spec.ridge;

    auto objective = [&](const Theta& t) {
        return w.dot(cross_entropy_rows(logistic_logits(spec, t, z), labels)) + 0.5 * ridge * t.squaredNorm();
    };

    Theta theta = Theta::Zero(spec.num_classes * z.cols());
    double f = objective(theta);
    constexpr int kMaxIterations = 200;
    double grad_norm = 0.0;
    for (int iter = 0; iter < kMaxIterations; ++iter) {
        Eigen::MatrixXd probs = logistic_logits(spec, theta, z);
        softmax_rows_inplace(probs);
        const Eigen::VectorXd grad = logistic_gradient(probs, onehot, z, w) + ridge * theta;
        grad_norm = grad.norm();
        if (grad_norm <= 1e-8) return theta;
        Eigen::MatrixXd h = logistic_hessian(probs, z, w);
        h.diagonal().array() += ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
        Eigen::VectorXd step = ldlt.solve(-grad);
        if (ldlt.info() != Eigen::Success || !step.allFinite() || step.dot(grad) >= 0.0) step = -grad;
        // Armijo backtracking.
        double t = 1.0;
        const double slope = step.dot(grad);
        Theta next = theta + step;
        double f_next = objective(next);
        while (!(f_next <= f + 1e-4 * t * slope) && t > 1e-12) {
            t *= 0.5;
            next = theta + t * step;
            f_next = objective(next);
        }
        if (!(f_next <= f)) {
            // No decrease possible at working precision; accept if already tiny.
            if (grad_norm <= 1e-6) return theta;
            break;
        }
        theta = std::move(next);
        f = f_next;
    }
    Eigen::MatrixXd probs = logistic_logits(spec, theta, z);
    softmax_rows_inplace(probs);
    grad_norm = (logistic_gradient(probs, onehot, z, w) + ridge * theta).norm();
    if (grad_norm <= 1e-8) return theta;
    throw ConvergenceError("multinomial logistic Newton iteration did not converge", grad_norm);
}

// ---- MLP --------------------------------------------------------------------

struct MlpShape {
    Index d, h, c;
    Index w1() const { return 0; }
    Index b1() const { return h * d; }
    Index w2() const { return h * d + h; }
    Index b2() const { return h * d + h + c * h; }
    Index size() const { return h * d + h + c * h + c; }
};

MlpShape mlp_shape(const MlpLoss& spec, Index d) { return MlpShape{d, spec.hidden, spec.num_classes}; }

struct MlpForward {
    Eigen::MatrixXd pre;     // N x H
    Eigen::MatrixXd act;     // N x H
    Eigen::MatrixXd logits;  // N x C
};

MlpForward mlp_forward(const MlpShape& s, const Theta& theta, const Eigen::MatrixXd& x) {
    const Eigen::Map<const RowMajorMatrix> w1(theta.data() + s.w1(), s.h, s.d);
    const Eigen::Map<const Eigen::VectorXd> b1(theta.data() + s.b1(), s.h);
    const Eigen::Map<const RowMajorMatrix> w2(theta.data() + s.w2(), s.c, s.h);
    const Eigen::Map<const Eigen::VectorXd> b2(theta.data() + s.b2(), s.c);
    MlpForward f;
    f.pre = (x * w1.transpose()).rowwise() + b1.transpose();
    f.act = f.pre.cwiseMax(0.0);
    f.logits = (f.act * w2.transpose()).rowwise() + b2.transpose();
    return f;
}

// Gradient of sum_i w_i CE_i.
Eigen::VectorXd mlp_gradient(const MlpShape& s, const Theta& theta, const Eigen::MatrixXd& x,
                             const MlpForward& f, const Eigen::MatrixXd& onehot, const Eigen::VectorXd& w) {
    Eigen::MatrixXd probs = f.logits;
    softmax_rows_inplace(probs);
    const Eigen::MatrixXd g2 = (probs - onehot).array().colwise() * w.array();  // N x C
    const Eigen::Map<const RowMajorMatrix> w2(theta.data() + s.w2(), s.c, s.h);
    const Eigen::MatrixXd g1 = ((g2 * w2).array() * (f.pre.array() > 0.0).cast<double>()).matrix();  // N x H

    Eigen::VectorXd grad(s.size());
    Eigen::Map<RowMajorMatrix>(grad.data() + s.w1(), s.h, s.d) = g1.transpose() * x;
    grad.segment(s.b1(), s.h) = g1.colwise().sum().transpose();
    Eigen::Map<RowMajorMatrix>(grad.data() + s.w2(), s.c, s.h) = g2.transpose() * f.act;
    grad.segment(s.b2(), s.c) = g2.colwise().sum().transpose();
    return grad;
}

// ---- per-atom helpers -------------------------------------------------------

double real_of(const Atom& atom) {
    if (const auto* r = std::get_if<RealOutcome>(&atom.y)) return r->value;
    throw TypeError("loss needs a Real outcome");
}

int label_of(const Atom& atom, int classes) {
    const auto* c = std::get_if<ClassOutcome>(&atom.y);
    if (!c) throw TypeError("classification loss needs a Class outcome");
    if (c->num_classes != classes) throw TypeError("outcome class count does not match the loss");
    return c->label;
}

Eigen::VectorXd design_row(const LinearRegressionLoss& spec, const Eigen::VectorXd& x) {
    if (!spec.intercept) return x;
    Eigen::VectorXd z(x.size() + 1);
    z << 1.0, x;
    return z;
}

Eigen::MatrixXd row_matrix(const Eigen::VectorXd& x) { return x.transpose(); }

}  // namespace

void validate(const LossSpec& spec) {
    std::visit(overloaded{
                   [](const MeanLoss&) {},
                   [](const QuantileLoss& q) {
                       if (!(q.tau > 0.0 && q.tau < 1.0)) throw ParameterError("quantile tau must lie in (0, 1)");
                   },
                   [](const LinearRegressionLoss&) {},
                   [](const MultinomialLogisticLoss& m) {
                       if (m.num_classes < 2) throw ParameterError("multinomial logistic needs at least 2 classes");
                       if (!(m.ridge >= 0.0)) throw ParameterError("ridge must be nonnegative");
                   },
                   [](const MlpLoss& m) {
                       if (m.num_classes < 2) throw ParameterError("mlp needs at least 2 classes");
                       if (m.hidden < 1) throw ParameterError("mlp hidden width must be positive");
                       if (m.epochs < 0) throw ParameterError("mlp epochs must be nonnegative");
                       if (!(m.step > 0.0)) throw ParameterError("mlp step must be positive");
                       if (!(m.beta1 >= 0.0 && m.beta1 < 1.0 && m.beta2 >= 0.0 && m.beta2 < 1.0))
                           throw ParameterError("adam betas must lie in [0, 1)");
                   },
               },
               spec);
}

std::string describe(const LossSpec& spec) {
    return std::visit(overloaded{
                          [](const MeanLoss&) -> std::string { return "mean"; },
                          [](const QuantileLoss& q) -> std::string {
                              std::ostringstream os;
                              os << "quantile(" << q.tau << ")";
                              return os.str();
                          },
                          [](const LinearRegressionLoss& l) -> std::string {
                              return l.intercept ? "linear" : "linear(no intercept)";
                          },
                          [](const MultinomialLogisticLoss& m) -> std::string {
                              return "logistic(" + std::to_string(m.num_classes) + ")";
                          },
                          [](const MlpLoss& m) -> std::string {
                              return "mlp(" + std::to_string(m.hidden) + "," + std::to_string(m.num_classes) + ")";
                          },
                      },
                      spec);
}

Index parameter_dimension(const LossSpec& spec, Index d) {
    return std::visit(overloaded{
                          [](const MeanLoss&) -> Index { return 1; },
                          [](const QuantileLoss&) -> Index { return 1; },
                          [d](const LinearRegressionLoss& l) -> Index { return d + (l.intercept ? 1 : 0); },
                          [d](const MultinomialLogisticLoss& m) -> Index { return m.num_classes * (d + 1); },
                          [d](const MlpLoss& m) -> Index { return mlp_shape(m, d).size(); },
                      },
                      spec);
}

bool is_classification(const LossSpec& spec) {
    return std::holds_alternative<MultinomialLogisticLoss>(spec) || std::holds_alternative<MlpLoss>(spec);
}

bool has_hessian(const LossSpec& spec) {
    return std::holds_alternative<MeanLoss>(spec) || std::holds_alternative<LinearRegressionLoss>(spec) ||
           std::holds_alternative<MultinomialLogisticLoss>(spec);
}

int num_classes(const LossSpec& spec) {
    if (const auto* m = std::get_if<MultinomialLogisticLoss>(&spec)) return m->num_classes;
    if (const auto* m = std::get_if<MlpLoss>(&spec)) return m->num_classes;
    return 0;
}

WeightedProblem::WeightedProblem(Eigen::MatrixXd x, OutcomeColumn y, Eigen::VectorXd w, LossSpec l)
    : covariates(std::move(x)), outcomes(std::move(y)), weights(std::move(w)), loss(std::move(l)) {
    validate(loss);
    if (covariates.rows() < 1) throw ParameterError("weighted problem needs at least one atom");
    if (outcomes.size() != covariates.rows() || weights.size() != covariates.rows())
        throw ParameterError("weighted problem: atom, outcome and weight counts differ");
    if (!weights.allFinite() || (weights.array() <= 0.0).any())
        throw ParameterError("weighted problem weights must be positive");
    check_outcomes(loss, outcomes);
}

WeightedProblem WeightedProblem::stack(const LabeledSample& labeled, const Eigen::VectorXd& labeled_weights,
                                       const AtomicMeasure& base, const Eigen::VectorXd& base_weights,
                                       LossSpec loss) {
    if (labeled.dim() != base.dim()) throw TypeError("labeled sample and base measure covariate dimensions differ");
    Eigen::MatrixXd x(labeled.size() + base.size(), labeled.dim());
    x << labeled.covariates(), base.covariates();
    Eigen::VectorXd w(labeled.size() + base.size());
    w << labeled_weights, base_weights;
    return WeightedProblem(std::move(x), labeled.outcomes().concat(base.outcomes()), std::move(w), std::move(loss));
}

WeightedProblem WeightedProblem::from_measure(const AtomicMeasure& measure, LossSpec loss) {
    return WeightedProblem(measure.covariates(), measure.outcomes(), measure.weights(), std::move(loss));
}

WeightedProblem WeightedProblem::uniform(const LabeledSample& sample, LossSpec loss) {
    return WeightedProblem(sample.covariates(), sample.outcomes(), Eigen::VectorXd::Ones(sample.size()),
                           std::move(loss));
}

double loss_value(const LossSpec& spec, const Theta& theta, const Atom& atom) {
    check_dimension(spec, theta, atom.x.size());
    return std::visit(
        overloaded{
            [&](const MeanLoss&) {
                const double r = real_of(atom) - theta[0];
                return 0.5 * r * r;
            },
            [&](const QuantileLoss& q) {
                const double r = real_of(atom) - theta[0];
                return r > 0.0 ? q.tau * r : (q.tau - 1.0) * r;
            },
            [&](const LinearRegressionLoss& l) {
                const double r = real_of(atom) - design_row(l, atom.x).dot(theta);
                return 0.5 * r * r;
            },
            [&](const MultinomialLogisticLoss& m) {
                const int y = label_of(atom, m.num_classes);
                const Eigen::MatrixXd z = with_intercept(row_matrix(atom.x));
                return cross_entropy_rows(logistic_logits(m, theta, z), Eigen::VectorXi::Constant(1, y))[0];
            },
            [&](const MlpLoss& m) {
                const int y = label_of(atom, m.num_classes);
                const auto f = mlp_forward(mlp_shape(m, atom.x.size()), theta, row_matrix(atom.x));
                return cross_entropy_rows(f.logits, Eigen::VectorXi::Constant(1, y))[0];
            },
        },
        spec);
}

Eigen::VectorXd score(const LossSpec& spec, const Theta& theta, const Atom& atom) {
    check_dimension(spec, theta, atom.x.size());
    return std::visit(
        overloaded{
            [&](const MeanLoss&) -> Eigen::VectorXd {
                return Eigen::VectorXd::Constant(1, theta[0] - real_of(atom));
            },
            [&](const QuantileLoss& q) -> Eigen::VectorXd {
                // Ties go to the left branch, matching the solver's cumulative-weight rule.
                const double y = real_of(atom);
                return Eigen::VectorXd::Constant(1, y <= theta[0] ? 1.0 - q.tau : -q.tau);
            },
            [&](const LinearRegressionLoss& l) -> Eigen::VectorXd {
                const Eigen::VectorXd z = design_row(l, atom.x);
                return z * (z.dot(theta) - real_of(atom));
            },
            [&](const MultinomialLogisticLoss& m) -> Eigen::VectorXd {
                const int y = label_of(atom, m.num_classes);
                const Eigen::MatrixXd z = with_intercept(row_matrix(atom.x));
                Eigen::MatrixXd p = logistic_logits(m, theta, z);
                softmax_rows_inplace(p);
                return logistic_gradient(p, one_hot(Eigen::VectorXi::Constant(1, y), m.num_classes), z,
                                         Eigen::VectorXd::Ones(1));
            },
            [&](const MlpLoss& m) -> Eigen::VectorXd {
                const int y = label_of(atom, m.num_classes);
                const MlpShape s = mlp_shape(m, atom.x.size());
                const Eigen::MatrixXd x = row_matrix(atom.x);
                return mlp_gradient(s, theta, x, mlp_forward(s, theta, x),
                                    one_hot(Eigen::VectorXi::Constant(1, y), m.num_classes), Eigen::VectorXd::Ones(1));
            },
        },
        spec);
}

Eigen::MatrixXd hessian(const LossSpec& spec, const Theta& theta, const Atom& atom) {
    check_dimension(spec, theta, atom.x.size());
    return std::visit(
        overloaded{
            [&](const MeanLoss&) -> Eigen::MatrixXd {
                real_of(atom);
                return Eigen::MatrixXd::Ones(1, 1);
            },
            [&](const QuantileLoss&) -> Eigen::MatrixXd {
                throw CapabilityError("the check loss has no Hessian");
            },
            [&](const LinearRegressionLoss& l) -> Eigen::MatrixXd {
                real_of(atom);
                const Eigen::VectorXd z = design_row(l, atom.x);
                return z * z.transpose();
            },
            [&](const MultinomialLogisticLoss& m) -> Eigen::MatrixXd {
                label_of(atom, m.num_classes);
                const Eigen::MatrixXd z = with_intercept(row_matrix(atom.x));
                Eigen::MatrixXd p = logistic_logits(m, theta, z);
                softmax_rows_inplace(p);
                return logistic_hessian(p, z, Eigen::VectorXd::Ones(1));
            },
            [&](const MlpLoss&) -> Eigen::MatrixXd {
                throw CapabilityError("Hessians are not provided for the mlp loss");
            },
        },
        spec);
}

double weighted_risk(const WeightedProblem& problem, const Theta& theta) {
    check_dimension(problem.loss, theta, problem.covariates.cols());
    const Eigen::VectorXd w = problem.weights / problem.weights.sum();
    return std::visit(
        overloaded{
            [&](const MeanLoss&) {
                const auto r = problem.outcomes.real_values().array() - theta[0];
                return 0.5 * (w.array() * r.square()).sum();
            },
            [&](const QuantileLoss& q) {
                const Eigen::ArrayXd r = problem.outcomes.real_values().array() - theta[0];
                return (w.array() * (r > 0.0).select(q.tau * r, (q.tau - 1.0) * r)).sum();
            },
            [&](const LinearRegressionLoss& l) {
                const Eigen::MatrixXd z = l.intercept ? with_intercept(problem.covariates) : problem.covariates;
                const Eigen::VectorXd r = problem.outcomes.real_values() - z * theta;
                return 0.5 * (w.array() * r.array().square()).sum();
            },
            [&](const MultinomialLogisticLoss& m) {
                const Eigen::MatrixXd z = with_intercept(problem.covariates);
                return w.dot(cross_entropy_rows(logistic_logits(m, theta, z), problem.outcomes.labels()));
            },
            [&](const MlpLoss& m) {
                const auto f = mlp_forward(mlp_shape(m, problem.covariates.cols()), theta, problem.covariates);
                return w.dot(cross_entropy_rows(f.logits, problem.outcomes.labels()));
            },
        },
        problem.loss);
}

Eigen::VectorXd weighted_score(const WeightedProblem& problem, const Theta& theta) {
    check_dimension(problem.loss, theta, problem.covariates.cols());
    const Eigen::VectorXd w = problem.weights / problem.weights.sum();
    return std::visit(
        overloaded{
            [&](const MeanLoss&) -> Eigen::VectorXd {
                return Eigen::VectorXd::Constant(1, theta[0] - w.dot(problem.outcomes.real_values()));
            },
            [&](const QuantileLoss& q) -> Eigen::VectorXd {
                const auto& y = problem.outcomes.real_values();
                double g = 0.0;
                for (Index i = 0; i < y.size(); ++i) g += w[i] * (y[i] <= theta[0] ? 1.0 - q.tau : -q.tau);
                return Eigen::VectorXd::Constant(1, g);
            },
            [&](const LinearRegressionLoss& l) -> Eigen::VectorXd {
                const Eigen::MatrixXd z = l.intercept ? with_intercept(problem.covariates) : problem.covariates;
                const Eigen::VectorXd r = z * theta - problem.outcomes.real_values();
                return z.transpose() * (w.array() * r.array()).matrix();
            },
            [&](const MultinomialLogisticLoss& m) -> Eigen::VectorXd {
                const Eigen::MatrixXd z = with_intercept(problem.covariates);
                Eigen::MatrixXd p = logistic_logits(m, theta, z);
                softmax_rows_inplace(p);
                return logistic_gradient(p, one_hot(problem.outcomes.labels(), m.num_classes), z, w);
            },
            [&](const MlpLoss& m) -> Eigen::VectorXd {
                const MlpShape s = mlp_shape(m, problem.covariates.cols());
                return mlp_gradient(s, theta, problem.covariates, mlp_forward(s, theta, problem.covariates),
                                    one_hot(problem.outcomes.labels(), m.num_classes), w);
            },
        },
        problem.loss);
}

Theta solve_weighted(const WeightedProblem& problem, SeededRng rng) {
    return std::visit(
        overloaded{
            [&](const MeanLoss&) -> Theta {
                const auto& y = problem.outcomes.real_values();
                return Theta::Constant(1, problem.weights.dot(y) / problem.weights.sum());
            },
            [&](const QuantileLoss& q) -> Theta {
                // The weighted check risk is piecewise linear with knots at the
                // atoms: the smallest atom whose cumulative weight reaches tau
                // is its smallest minimizer.
                const auto& y = problem.outcomes.real_values();
                std::vector<Index> order(static_cast<std::size_t>(y.size()));
                std::iota(order.begin(), order.end(), Index{0});
                std::sort(order.begin(), order.end(), [&](Index a, Index b) { return y[a] < y[b]; });
                const double target = q.tau * problem.weights.sum();
                double acc = 0.0;
                for (std::size_t i = 0; i < order.size(); ++i) {
                    acc += problem.weights[order[i]];
                    // Equal values share one knot; only test at the last of a run.
                    if (i + 1 < order.size() && y[order[i + 1]] == y[order[i]]) continue;
                    if (acc >= target) return Theta::Constant(1, y[order[i]]);
                }
                return Theta::Constant(1, y[order.back()]);
            },
            [&](const LinearRegressionLoss& l) -> Theta {
                const Eigen::MatrixXd z = l.intercept ? with_intercept(problem.covariates) : problem.covariates;
                const Eigen::VectorXd w = problem.weights / problem.weights.sum();
                const Eigen::MatrixXd zw = z.transpose() * w.asDiagonal();
                const Eigen::MatrixXd gram = zw * z;
                const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
                // LDLT silently zeroes null pivots, so rcond alone misses exact singularity.
                const Eigen::VectorXd pivots = ldlt.vectorD();
                if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                    !(pivots.minCoeff() > 1e-12 * pivots.cwiseAbs().maxCoeff()) || !(ldlt.rcond() > 1e-12))
                    throw RankDeficiencyError("rank-deficient design: weighted X'WX is singular");
                return ldlt.solve(zw * problem.outcomes.real_values());
            },
            [&](const MultinomialLogisticLoss& m) -> Theta { return solve_logistic(m, problem); },
            [&](const MlpLoss& m) -> Theta { return train_mlp(m, problem, rng).theta; },
        },
        problem.loss);
}

double finite_diff_check(const LossSpec& spec, const Theta& theta, const Atom& atom, double h) {
    if (!(h >= 1e-7 && h <= 1e-3)) throw ParameterError("finite_diff_check: h must lie in [1e-7, 1e-3]");
    const Eigen::VectorXd g = score(spec, theta, atom);
    double worst = 0.0;
    Theta probe = theta;
    for (Index j = 0; j < theta.size(); ++j) {
        probe[j] = theta[j] + h;
        const double up = loss_value(spec, probe, atom);
        probe[j] = theta[j] - h;
        const double down = loss_value(spec, probe, atom);
        probe[j] = theta[j];
        worst = std::max(worst, std::abs(g[j] - (up - down) / (2.0 * h)) / (1.0 + std::abs(g[j])));
    }
    if (has_hessian(spec)) {
        const Eigen::MatrixXd hess = hessian(spec, theta, atom);
        for (Index j = 0; j < theta.size(); ++j) {
            probe[j] = theta[j] + h;
            const Eigen::VectorXd up = score(spec, probe, atom);
            probe[j] = theta[j] - h;
            const Eigen::VectorXd down = score(spec, probe, atom);
            probe[j] = theta[j];
            const Eigen::VectorXd fd = (up - down) / (2.0 * h);
            for (Index i = 0; i < theta.size(); ++i)
                worst = std::max(worst, std::abs(hess(i, j) - fd[i]) / (1.0 + std::abs(hess(i, j))));
        }
    }
    return worst;
}

Eigen::MatrixXd predict_proba(const LossSpec& spec, const Theta& theta, const Eigen::MatrixXd& covariates) {
    check_dimension(spec, theta, covariates.cols());
    Eigen::MatrixXd logits;
    if (const auto* m = std::get_if<MultinomialLogisticLoss>(&spec))
        logits = logistic_logits(*m, theta, with_intercept(covariates));
    else if (const auto* m = std::get_if<MlpLoss>(&spec))
        logits = mlp_forward(mlp_shape(*m, covariates.cols()), theta, covariates).logits;
    else
        throw TypeError("predict_proba needs a classification loss, got " + describe(spec));
    softmax_rows_inplace(logits);
    return logits;
}

Theta mlp_initial_theta(const MlpLoss& spec, Index d, SeededRng rng) {
    const MlpShape s = mlp_shape(spec, d);
    Theta theta(s.size());
    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for each layer's weights and bias.
    const double a1 = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(d, 1)));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(s.h));
    for (Index i = 0; i < s.w2(); ++i) theta[i] = a1 * (2.0 * rng.uniform() - 1.0);
    for (Index i = s.w2(); i < s.size(); ++i) theta[i] = a2 * (2.0 * rng.uniform() - 1.0);
    return theta;
}

MlpTrace train_mlp(const MlpLoss& spec, const WeightedProblem& problem, SeededRng rng) {
    validate(spec);
    check_outcomes(spec, problem.outcomes);
    const MlpShape s = mlp_shape(spec, problem.covariates.cols());
    const Eigen::VectorXd w = problem.weights / problem.weights.sum();
    const Eigen::MatrixXd onehot = one_hot(problem.outcomes.labels(), spec.num_classes);
    const Eigen::VectorXi& labels = problem.outcomes.labels();

    MlpTrace trace;
    trace.theta = mlp_initial_theta(spec, s.d, rng.substream(spec.seed));
    trace.risk.reserve(static_cast<std::size_t>(spec.epochs));
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(s.size());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(s.size());
    constexpr double kEps = 1e-8;
    double b1t = 1.0, b2t = 1.0;
    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        const MlpForward f = mlp_forward(s, trace.theta, problem.covariates);
        trace.risk.push_back(w.dot(cross_entropy_rows(f.logits, labels)));
        const Eigen::VectorXd g = mlp_gradient(s, trace.theta, problem.covariates, f, onehot, w);
        m1 = spec.beta1 * m1 + (1.0 - spec.beta1) * g;
        m2 = spec.beta2 * m2 + (1.0 - spec.beta2) * g.cwiseAbs2();
        b1t *= spec.beta1;
        b2t *= spec.beta2;
        const Eigen::ArrayXd mhat = m1.array() / (1.0 - b1t);
        const Eigen::ArrayXd vhat = m2.array() / (1.0 - b2t);
        trace.theta.array() -= spec.step * mhat / (vhat.sqrt() + kEps);
    }
    if (!trace.theta.allFinite()) throw ConvergenceError("mlp training diverged", INFINITY);
    return trace;
}

}  // namespace rai
