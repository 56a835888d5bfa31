#pragma once

#include "rai/measures.hpp"
#include "rai/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace rai {

// (y - theta)^2 / 2, theta scalar.
struct MeanLoss {};

// Check loss tau (y - q)^+ + (1 - tau) (q - y)^+.
struct QuantileLoss {
    double tau = 0.5;
};

// (y - z'theta)^2 / 2 with z = (1, x) when `intercept`, else z = x.
struct LinearRegressionLoss {
    bool intercept = true;
};

// Cross-entropy of softmax(Theta (1, x)). Theta is num_classes x (d_x + 1),
// flattened row-major: entry (c, j) sits at c * (d_x + 1) + j, j = 0 being the
// intercept. `ridge` / 2 * |theta|^2 is added by the solver only.
struct MultinomialLogisticLoss {
    int num_classes = 2;
    double ridge = 1e-8;
};

// One hidden ReLU layer and a softmax output, trained with full-batch Adam.
// Parameter order: W1 (hidden x d_x, row-major), b1 (hidden),
// W2 (num_classes x hidden, row-major), b2 (num_classes).
struct MlpLoss {
    int hidden = 20;
    int num_classes = 2;
    int epochs = 200;
    double step = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::uint64_t seed = 0;
};

using LossSpec = std::variant<MeanLoss, QuantileLoss, LinearRegressionLoss, MultinomialLogisticLoss, MlpLoss>;

using Theta = Eigen::VectorXd;

void validate(const LossSpec& spec);
std::string describe(const LossSpec& spec);
Index parameter_dimension(const LossSpec& spec, Index covariate_dim);
bool is_classification(const LossSpec& spec);
bool has_hessian(const LossSpec& spec);
int num_classes(const LossSpec& spec);

/// Atoms with positive weights (any total) and the loss to minimize.
struct WeightedProblem {
    Eigen::MatrixXd covariates;
    OutcomeColumn outcomes;
    Eigen::VectorXd weights;
    LossSpec loss;

    WeightedProblem(Eigen::MatrixXd covariates, OutcomeColumn outcomes, Eigen::VectorXd weights, LossSpec loss);

    // Labeled rows followed by base atoms, each with its own weight vector.
    static WeightedProblem stack(const LabeledSample& labeled, const Eigen::VectorXd& labeled_weights,
                                 const AtomicMeasure& base, const Eigen::VectorXd& base_weights, LossSpec loss);
    static WeightedProblem from_measure(const AtomicMeasure& measure, LossSpec loss);
    static WeightedProblem uniform(const LabeledSample& sample, LossSpec loss);

    Index size() const noexcept { return covariates.rows(); }
};

double loss_value(const LossSpec& spec, const Theta& theta, const Atom& atom);
Eigen::VectorXd score(const LossSpec& spec, const Theta& theta, const Atom& atom);
// Throws CapabilityError for Quantile and Mlp.
Eigen::MatrixXd hessian(const LossSpec& spec, const Theta& theta, const Atom& atom);

// Normalized-weight objective sum_i w_i l(theta; atom_i) / sum_i w_i
// (solver-only penalties excluded).
double weighted_risk(const WeightedProblem& problem, const Theta& theta);
// Gradient of weighted_risk.
Eigen::VectorXd weighted_score(const WeightedProblem& problem, const Theta& theta);

Theta solve_weighted(const WeightedProblem& problem, SeededRng rng);

// Max over coordinates of |analytic - central difference| / (1 + |analytic|),
// for the score and, where defined, the Hessian.
double finite_diff_check(const LossSpec& spec, const Theta& theta, const Atom& atom, double h);

// Softmax class probabilities of a classification model at each covariate row.
Eigen::MatrixXd predict_proba(const LossSpec& spec, const Theta& theta, const Eigen::MatrixXd& covariates);

struct MlpTrace {
    Theta theta;
    std::vector<double> risk;  // weighted risk before each Adam step
};

Theta mlp_initial_theta(const MlpLoss& spec, Index covariate_dim, SeededRng rng);
// Full-batch Adam from the seed-determined initialization.
MlpTrace train_mlp(const MlpLoss& spec, const WeightedProblem& problem, SeededRng rng);

}  // namespace rai
