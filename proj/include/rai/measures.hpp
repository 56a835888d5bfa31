#pragma once

#include "rai/random.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace rai {

using Eigen::Index;

struct RealOutcome {
    double value;
};

struct ClassOutcome {
    int label;
    int num_classes;
};

struct ClassProbsOutcome {
    Eigen::VectorXd p;
};

using Outcome = std::variant<RealOutcome, ClassOutcome, ClassProbsOutcome>;

enum class OutcomeKind { Real, Class, ClassProbs };

const char* to_string(OutcomeKind kind);

/// Column-oriented store of outcomes sharing one variant.
///
/// Real outcomes live in a vector, class labels in an integer vector, and
/// probability vectors as the rows of a matrix. Per-atom access through
/// operator[] materializes an Outcome value.
class OutcomeColumn {
public:
    static OutcomeColumn reals(Eigen::VectorXd values);
    static OutcomeColumn classes(Eigen::VectorXi labels, int num_classes);
    // Rows must be probability vectors (nonnegative, sum 1 within 1e-9).
    static OutcomeColumn probabilities(Eigen::MatrixXd probs);
    static OutcomeColumn from_outcomes(const std::vector<Outcome>& outcomes);

    OutcomeKind kind() const noexcept { return kind_; }
    Index size() const noexcept { return size_; }
    int num_classes() const noexcept { return num_classes_; }

    // Typed accessors throw TypeError on a variant mismatch.
    const Eigen::VectorXd& real_values() const;
    const Eigen::VectorXi& labels() const;
    const Eigen::MatrixXd& probs() const;

    Outcome operator[](Index i) const;

    OutcomeColumn rows(std::span<const Index> indices) const;
    OutcomeColumn concat(const OutcomeColumn& other) const;

    friend bool operator==(const OutcomeColumn&, const OutcomeColumn&);

private:
    OutcomeKind kind_ = OutcomeKind::Real;
    Index size_ = 0;
    int num_classes_ = 0;
    Eigen::VectorXd reals_;
    Eigen::VectorXi labels_;
    Eigen::MatrixXd probs_;
};

// Divides each row by its sum after clamping entries below `floor`; throws
// ParameterError on negative entries or a zero row sum.
Eigen::MatrixXd normalize_probability_rows(Eigen::MatrixXd probs, double floor = 0.0);

struct Atom {
    Eigen::VectorXd x;
    Outcome y;
};

/// n labeled rows (X_i, Y_i). Optionally carries the AI imputation for each
/// row, which rectifiers need to learn how imputations relate to the truth.
class LabeledSample {
public:
    LabeledSample(Eigen::MatrixXd covariates, OutcomeColumn outcomes,
                  std::optional<OutcomeColumn> imputed = std::nullopt);

    Index size() const noexcept { return covariates_.rows(); }
    Index dim() const noexcept { return covariates_.cols(); }
    const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
    const OutcomeColumn& outcomes() const noexcept { return outcomes_; }
    const std::optional<OutcomeColumn>& imputed() const noexcept { return imputed_; }

    Atom atom(Index i) const;
    LabeledSample rows(std::span<const Index> indices) const;

private:
    Eigen::MatrixXd covariates_;
    OutcomeColumn outcomes_;
    std::optional<OutcomeColumn> imputed_;
};

/// Finite weighted set of atoms. Weights are normalized on construction.
class AtomicMeasure {
public:
    AtomicMeasure(Eigen::MatrixXd covariates, OutcomeColumn outcomes, Eigen::VectorXd weights);
    static AtomicMeasure uniform(Eigen::MatrixXd covariates, OutcomeColumn outcomes);

    Index size() const noexcept { return covariates_.rows(); }
    Index dim() const noexcept { return covariates_.cols(); }
    const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
    const OutcomeColumn& outcomes() const noexcept { return outcomes_; }
    const Eigen::VectorXd& weights() const noexcept { return weights_; }
    double total_weight() const;

    Atom atom(Index i) const;
    // Same covariates and weights, new outcomes.
    AtomicMeasure with_outcomes(OutcomeColumn outcomes) const;

private:
    Eigen::MatrixXd covariates_;
    OutcomeColumn outcomes_;
    Eigen::VectorXd weights_;
};

struct DirichletWeights {
    Eigen::VectorXd labeled;
    Eigen::VectorXd base;
};

// Dirichlet(1,...,1, alpha/k,...,alpha/k) with n unit shapes and k base shapes.
DirichletWeights sample_dirichlet_weights(Index n, Index k, double alpha, SeededRng rng);
// Base shapes alpha * base_mass[j] for a non-uniform base measure.
DirichletWeights sample_dirichlet_weights(Index n, const Eigen::VectorXd& base_mass, double alpha, SeededRng rng);
// Dirichlet(1,...,1): the Bayesian bootstrap weights, used when the prior is off.
Eigen::VectorXd sample_flat_dirichlet(Index n, SeededRng rng);

AtomicMeasure empirical_measure(const LabeledSample& sample);
LabeledSample resample_nonparametric_bootstrap(const LabeledSample& sample, SeededRng rng);
// Draws a class label for each ClassProbs atom; weights and covariates unchanged.
AtomicMeasure realize_class_labels(const AtomicMeasure& base, SeededRng rng);
// Replaces each ClassProbs atom by one Class atom per class carrying mass
// weight * p_c, so integrals against the result are expectations over the
// probabilities. Other variants are returned unchanged.
AtomicMeasure expand_class_probs(const AtomicMeasure& measure);

}  // namespace rai
