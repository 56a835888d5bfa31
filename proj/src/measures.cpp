#include "rai/measures.hpp"

#include "rai/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace rai {

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw ParameterError(std::string(what) + " contains NaN or Inf");
}

[[noreturn]] void kind_mismatch(OutcomeKind have, OutcomeKind want) {
    throw TypeError(std::string("outcome variant is ") + to_string(have) + ", expected " + to_string(want));
}

// Neumaier-compensated sum so the total of n copies of 1/n comes back as 1.
double compensated_sum(const Eigen::VectorXd& v) {
    double sum = 0.0, comp = 0.0;
    for (Index i = 0; i < v.size(); ++i) {
        const double t = sum + v[i];
        if (std::abs(sum) >= std::abs(v[i]))
            comp += (sum - t) + v[i];
        else
            comp += (v[i] - t) + sum;
        sum = t;
    }
    return sum + comp;
}

// exp(logs - max) normalized; zeros from underflow clamped to the smallest
// positive double and renormalized.
Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& logs) {
    const double top = logs.maxCoeff();
    Eigen::VectorXd w = (logs.array() - top).exp();
    w /= w.sum();
    if ((w.array() <= 0.0).any()) {
        w = w.cwiseMax(std::numeric_limits<double>::denorm_min());
        w /= w.sum();
    }
    return w;
}

}  // namespace

const char* to_string(OutcomeKind kind) {
    switch (kind) {
        case OutcomeKind::Real: return "Real";
        case OutcomeKind::Class: return "Class";
        case OutcomeKind::ClassProbs: return "ClassProbs";
    }
    return "?";
}

OutcomeColumn OutcomeColumn::reals(Eigen::VectorXd values) {
    require_finite(values, "real outcomes");
    OutcomeColumn c;
    c.kind_ = OutcomeKind::Real;
    c.size_ = values.size();
    c.reals_ = std::move(values);
    return c;
}

OutcomeColumn OutcomeColumn::classes(Eigen::VectorXi labels, int num_classes) {
    if (num_classes < 2) throw ParameterError("class outcomes need at least 2 classes");
    if (labels.size() > 0 && (labels.minCoeff() < 0 || labels.maxCoeff() >= num_classes))
        throw ParameterError("class label outside [0, num_classes)");
    OutcomeColumn c;
    c.kind_ = OutcomeKind::Class;
    c.size_ = labels.size();
    c.num_classes_ = num_classes;
    c.labels_ = std::move(labels);
    return c;
}

OutcomeColumn OutcomeColumn::probabilities(Eigen::MatrixXd probs) {
    if (probs.cols() < 2) throw ParameterError("class probabilities need at least 2 classes");
    require_finite(probs, "class probabilities");
    if ((probs.array() < 0.0).any()) throw ParameterError("class probabilities must be nonnegative");
    for (Index i = 0; i < probs.rows(); ++i)
        if (std::abs(probs.row(i).sum() - 1.0) > 1e-9)
            throw ParameterError("class probabilities in row " + std::to_string(i) + " do not sum to 1");
    OutcomeColumn c;
    c.kind_ = OutcomeKind::ClassProbs;
    c.size_ = probs.rows();
    c.num_classes_ = static_cast<int>(probs.cols());
    c.probs_ = std::move(probs);
    return c;
}

OutcomeColumn OutcomeColumn::from_outcomes(const std::vector<Outcome>& outcomes) {
    if (outcomes.empty()) return reals(Eigen::VectorXd());
    const auto n = static_cast<Index>(outcomes.size());
    const std::size_t tag = outcomes.front().index();
    for (const auto& o : outcomes)
        if (o.index() != tag) throw TypeError("mixed outcome variants in one column");
    if (tag == 0) {
        Eigen::VectorXd v(n);
        for (Index i = 0; i < n; ++i) v[i] = std::get<RealOutcome>(outcomes[i]).value;
        return reals(std::move(v));
    }
    if (tag == 1) {
        const int c = std::get<ClassOutcome>(outcomes.front()).num_classes;
        Eigen::VectorXi v(n);
        for (Index i = 0; i < n; ++i) {
            const auto& o = std::get<ClassOutcome>(outcomes[i]);
            if (o.num_classes != c) throw TypeError("inconsistent num_classes in class outcomes");
            v[i] = o.label;
        }
        return classes(std::move(v), c);
    }
    const Index c = std::get<ClassProbsOutcome>(outcomes.front()).p.size();
    Eigen::MatrixXd m(n, c);
    for (Index i = 0; i < n; ++i) {
        const auto& p = std::get<ClassProbsOutcome>(outcomes[i]).p;
        if (p.size() != c) throw TypeError("inconsistent probability vector lengths");
        m.row(i) = p.transpose();
    }
    return probabilities(std::move(m));
}

const Eigen::VectorXd& OutcomeColumn::real_values() const {
    if (kind_ != OutcomeKind::Real) kind_mismatch(kind_, OutcomeKind::Real);
    return reals_;
}

const Eigen::VectorXi& OutcomeColumn::labels() const {
    if (kind_ != OutcomeKind::Class) kind_mismatch(kind_, OutcomeKind::Class);
    return labels_;
}

const Eigen::MatrixXd& OutcomeColumn::probs() const {
    if (kind_ != OutcomeKind::ClassProbs) kind_mismatch(kind_, OutcomeKind::ClassProbs);
    return probs_;
}

Outcome OutcomeColumn::operator[](Index i) const {
    switch (kind_) {
        case OutcomeKind::Real: return RealOutcome{reals_[i]};
        case OutcomeKind::Class: return ClassOutcome{labels_[i], num_classes_};
        case OutcomeKind::ClassProbs: return ClassProbsOutcome{probs_.row(i).transpose()};
    }
    return RealOutcome{0.0};
}

OutcomeColumn OutcomeColumn::rows(std::span<const Index> indices) const {
    OutcomeColumn c;
    c.kind_ = kind_;
    c.num_classes_ = num_classes_;
    c.size_ = static_cast<Index>(indices.size());
    switch (kind_) {
        case OutcomeKind::Real:
            c.reals_.resize(c.size_);
            for (Index i = 0; i < c.size_; ++i) c.reals_[i] = reals_[indices[i]];
            break;
        case OutcomeKind::Class:
            c.labels_.resize(c.size_);
            for (Index i = 0; i < c.size_; ++i) c.labels_[i] = labels_[indices[i]];
            break;
        case OutcomeKind::ClassProbs:
            c.probs_.resize(c.size_, probs_.cols());
            for (Index i = 0; i < c.size_; ++i) c.probs_.row(i) = probs_.row(indices[i]);
            break;
    }
    return c;
}

OutcomeColumn OutcomeColumn::concat(const OutcomeColumn& other) const {
    if (other.kind_ != kind_) kind_mismatch(other.kind_, kind_);
    if (kind_ != OutcomeKind::Real && other.num_classes_ != num_classes_)
        throw TypeError("cannot concatenate outcomes with different class counts");
    OutcomeColumn c;
    c.kind_ = kind_;
    c.num_classes_ = num_classes_;
    c.size_ = size_ + other.size_;
    switch (kind_) {
        case OutcomeKind::Real:
            c.reals_.resize(c.size_);
            c.reals_ << reals_, other.reals_;
            break;
        case OutcomeKind::Class:
            c.labels_.resize(c.size_);
            c.labels_ << labels_, other.labels_;
            break;
        case OutcomeKind::ClassProbs:
            c.probs_.resize(c.size_, probs_.cols());
            c.probs_ << probs_, other.probs_;
            break;
    }
    return c;
}

bool operator==(const OutcomeColumn& a, const OutcomeColumn& b) {
    if (a.kind_ != b.kind_ || a.size_ != b.size_ || a.num_classes_ != b.num_classes_) return false;
    switch (a.kind_) {
        case OutcomeKind::Real: return a.reals_ == b.reals_;
        case OutcomeKind::Class: return a.labels_ == b.labels_;
        case OutcomeKind::ClassProbs: return a.probs_ == b.probs_;
    }
    return false;
}

Eigen::MatrixXd normalize_probability_rows(Eigen::MatrixXd probs, double floor) {
    require_finite(probs, "class probabilities");
    if ((probs.array() < 0.0).any()) throw ParameterError("class probabilities must be nonnegative");
    for (Index i = 0; i < probs.rows(); ++i) {
        if (!(probs.row(i).sum() > 0.0))
            throw ParameterError("class probability row " + std::to_string(i) + " sums to zero");
        if (floor > 0.0) probs.row(i) = probs.row(i).cwiseMax(floor);
        probs.row(i) /= probs.row(i).sum();
    }
    return probs;
}

LabeledSample::LabeledSample(Eigen::MatrixXd covariates, OutcomeColumn outcomes,
                             std::optional<OutcomeColumn> imputed)
    : covariates_(std::move(covariates)), outcomes_(std::move(outcomes)), imputed_(std::move(imputed)) {
    if (covariates_.rows() < 1) throw ParameterError("labeled sample must have at least one row");
    if (outcomes_.size() != covariates_.rows())
        throw ParameterError("labeled sample: covariate rows and outcome count differ");
    if (imputed_ && imputed_->size() != covariates_.rows())
        throw ParameterError("labeled sample: imputation count differs from row count");
    require_finite(covariates_, "covariates");
}

Atom LabeledSample::atom(Index i) const { return Atom{covariates_.row(i).transpose(), outcomes_[i]}; }

LabeledSample LabeledSample::rows(std::span<const Index> indices) const {
    Eigen::MatrixXd x(static_cast<Index>(indices.size()), dim());
    for (Index i = 0; i < x.rows(); ++i) x.row(i) = covariates_.row(indices[i]);
    std::optional<OutcomeColumn> imp;
    if (imputed_) imp = imputed_->rows(indices);
    return LabeledSample(std::move(x), outcomes_.rows(indices), std::move(imp));
}

AtomicMeasure::AtomicMeasure(Eigen::MatrixXd covariates, OutcomeColumn outcomes, Eigen::VectorXd weights)
    : covariates_(std::move(covariates)), outcomes_(std::move(outcomes)), weights_(std::move(weights)) {
    if (covariates_.rows() < 1) throw ParameterError("atomic measure must have at least one atom");
    if (outcomes_.size() != covariates_.rows() || weights_.size() != covariates_.rows())
        throw ParameterError("atomic measure: atom, outcome and weight counts differ");
    require_finite(covariates_, "covariates");
    require_finite(weights_, "weights");
    if ((weights_.array() < 0.0).any()) throw ParameterError("atomic measure weights must be nonnegative");
    const double total = compensated_sum(weights_);
    if (!(total > 0.0)) throw ParameterError("atomic measure weights sum to zero");
    if (total != 1.0) weights_ /= total;
}

AtomicMeasure AtomicMeasure::uniform(Eigen::MatrixXd covariates, OutcomeColumn outcomes) {
    const Index k = covariates.rows();
    if (k < 1) throw ParameterError("atomic measure must have at least one atom");
    return AtomicMeasure(std::move(covariates), std::move(outcomes),
                         Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k)));
}

double AtomicMeasure::total_weight() const { return compensated_sum(weights_); }

Atom AtomicMeasure::atom(Index i) const { return Atom{covariates_.row(i).transpose(), outcomes_[i]}; }

AtomicMeasure AtomicMeasure::with_outcomes(OutcomeColumn outcomes) const {
    return AtomicMeasure(covariates_, std::move(outcomes), weights_);
}

DirichletWeights sample_dirichlet_weights(Index n, Index k, double alpha, SeededRng rng) {
    if (n < 1 || k < 1) throw ParameterError("sample_dirichlet_weights: counts must be positive");
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw ParameterError("sample_dirichlet_weights: alpha must be positive");
    const double shape = alpha / static_cast<double>(k);
    Eigen::VectorXd logs(n + k);
    for (Index i = 0; i < n; ++i) logs[i] = std::log(rng.exponential());
    for (Index j = 0; j < k; ++j) logs[n + j] = rng.log_gamma_variate(shape);
    const Eigen::VectorXd w = normalize_log_weights(logs);
    return DirichletWeights{w.head(n), w.tail(k)};
}

DirichletWeights sample_dirichlet_weights(Index n, const Eigen::VectorXd& base_mass, double alpha, SeededRng rng) {
    const Index k = base_mass.size();
    if (n < 1 || k < 1) throw ParameterError("sample_dirichlet_weights: counts must be positive");
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw ParameterError("sample_dirichlet_weights: alpha must be positive");
    if (!(base_mass.array() > 0.0).all()) throw ParameterError("sample_dirichlet_weights: base mass must be positive");
    Eigen::VectorXd logs(n + k);
    for (Index i = 0; i < n; ++i) logs[i] = std::log(rng.exponential());
    for (Index j = 0; j < k; ++j) logs[n + j] = rng.log_gamma_variate(alpha * base_mass[j]);
    const Eigen::VectorXd w = normalize_log_weights(logs);
    return DirichletWeights{w.head(n), w.tail(k)};
}

Eigen::VectorXd sample_flat_dirichlet(Index n, SeededRng rng) {
    if (n < 1) throw ParameterError("sample_flat_dirichlet: n must be positive");
    Eigen::VectorXd g(n);
    for (Index i = 0; i < n; ++i) g[i] = rng.exponential();
    return g / g.sum();
}

AtomicMeasure empirical_measure(const LabeledSample& sample) {
    return AtomicMeasure::uniform(sample.covariates(), sample.outcomes());
}

LabeledSample resample_nonparametric_bootstrap(const LabeledSample& sample, SeededRng rng) {
    const Index n = sample.size();
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (auto& i : idx) i = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    return sample.rows(idx);
}

AtomicMeasure realize_class_labels(const AtomicMeasure& base, SeededRng rng) {
    const Eigen::MatrixXd& p = base.outcomes().probs();
    Eigen::VectorXi labels(p.rows());
    for (Index i = 0; i < p.rows(); ++i) labels[i] = static_cast<int>(rng.categorical(p.row(i).transpose()));
    return base.with_outcomes(OutcomeColumn::classes(std::move(labels), static_cast<int>(p.cols())));
}

AtomicMeasure expand_class_probs(const AtomicMeasure& measure) {
    if (measure.outcomes().kind() != OutcomeKind::ClassProbs) return measure;
    const Eigen::MatrixXd& p = measure.outcomes().probs();
    const Index k = measure.size();
    const Index c = p.cols();
    Eigen::MatrixXd x(k * c, measure.dim());
    Eigen::VectorXi labels(k * c);
    Eigen::VectorXd w(k * c);
    for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < c; ++j) {
            x.row(i * c + j) = measure.covariates().row(i);
            labels[i * c + j] = static_cast<int>(j);
            w[i * c + j] = measure.weights()[i] * p(i, j);
        }
    return AtomicMeasure(std::move(x), OutcomeColumn::classes(std::move(labels), static_cast<int>(c)), std::move(w));
}

}  // namespace rai
