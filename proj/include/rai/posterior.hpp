#pragma once

#include "rai/error.hpp"
#include "rai/losses.hpp"
#include "rai/measures.hpp"
#include "rai/rectifiers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace rai {

struct PriorConfig {
    double gamma = 1.0;  // alpha / n; 0 turns the prior off (Bayesian bootstrap)
    int draws = 500;
    double level = 0.9;
    CalibrationStrategy strategy = NpbCalibration{};
    RectifierSpec rectifier = QuantileMapRectifier{};
    std::uint64_t seed = 0;
    unsigned threads = 1;  // 0 = one worker per hardware thread
};

void validate(const PriorConfig& config);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;

    double width() const { return upper - lower; }
};

struct DrawStatus {
    bool ok = true;
    std::string message;
};

struct PosteriorRun {
    Eigen::MatrixXd samples;  // successful draws in draw-index order, one per row
    Eigen::VectorXd point;    // posterior mean
    std::vector<Interval> intervals;
    std::vector<DrawStatus> status;  // one entry per requested draw
    PriorConfig config;
    LossSpec loss;

    Index failed() const;
};

// One posterior-bootstrap draw. Every random choice is keyed by
// (config.seed, draw_index), so the result does not depend on which worker
// computes it.
Theta posterior_draw(const LabeledSample& labeled, const AtomicMeasure& base, const LossSpec& loss,
                     const PriorConfig& config, Index draw_index);

PosteriorRun run_posterior(const LabeledSample& labeled, const AtomicMeasure& base, const LossSpec& loss,
                           const PriorConfig& config);
// Prior switched off: requires config.gamma == 0.
PosteriorRun run_posterior(const LabeledSample& labeled, const LossSpec& loss, const PriorConfig& config);

// Empirical quantiles at (1 - level)/2 and (1 + level)/2, linearly
// interpolated between order statistics (h = (N - 1) p).
template <class Scalar>
Interval credible_interval(Eigen::Matrix<Scalar, Eigen::Dynamic, 1> samples, double level);

Eigen::MatrixXd posterior_predictive_proba(const PosteriorRun& run, const LossSpec& loss,
                                           const Eigen::MatrixXd& covariates);
// Argmax of the draw-averaged class probabilities; ties go to the smaller class.
int posterior_predict_class(const PosteriorRun& run, const LossSpec& loss, const Eigen::VectorXd& x);

// Line-delimited records: format tag, header, one record per draw, summary.
std::string serialize(const PosteriorRun& run);

// ---- implementation ---------------------------------------------------------

double interpolated_quantile(const double* sorted_begin, Index count, double p);

template <class Scalar>
Interval credible_interval(Eigen::Matrix<Scalar, Eigen::Dynamic, 1> samples, double level) {
    if (samples.size() < 2) throw ParameterError("credible_interval needs at least 2 samples");
    if (!(level > 0.0 && level < 1.0)) throw ParameterError("credible level must lie in (0, 1)");
    Eigen::VectorXd s = samples.template cast<double>();
    std::sort(s.data(), s.data() + s.size());
    const double beta = 1.0 - level;
    return Interval{interpolated_quantile(s.data(), s.size(), beta / 2.0),
                    interpolated_quantile(s.data(), s.size(), 1.0 - beta / 2.0)};
}

}  // namespace rai
