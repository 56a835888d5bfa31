#pragma once

#include "rai/losses.hpp"
#include "rai/measures.hpp"
#include "rai/random.hpp"

#include <Eigen/Dense>

#include <string>
#include <variant>
#include <vector>

namespace rai {

// ---- specs ------------------------------------------------------------------

struct IdentityRectifier {};
struct QuantileMapRectifier {};
struct IsotonicRectifier {};
struct MomentShiftRectifier {};
struct MomentAffineRectifier {};
struct ProbRecalibRectifier {
    double ridge = 1e-3;
    double clamp = 1e-6;
};

using RectifierSpec = std::variant<IdentityRectifier, QuantileMapRectifier, IsotonicRectifier, MomentShiftRectifier,
                                   MomentAffineRectifier, ProbRecalibRectifier>;

struct FixedCalibration {};
struct SplitCalibration {
    double fraction = 0.5;
};
struct NpbCalibration {};

using CalibrationStrategy = std::variant<FixedCalibration, SplitCalibration, NpbCalibration>;

void validate(const RectifierSpec& spec);
void validate(const CalibrationStrategy& strategy);
std::string describe(const RectifierSpec& spec);
std::string describe(const CalibrationStrategy& strategy);

// ---- fitted state -----------------------------------------------------------

struct IdentityFit {};

// y -> F_Y^{-1}(F_Yhat(y)) with a right-continuous empirical CDF and the
// ceil(u m)-th order statistic as quantile; both grids sorted.
struct QuantileMapFit {
    Eigen::VectorXd imputed_grid;
    Eigen::VectorXd true_grid;

    double operator()(double y) const;
};

// Step function through the PAVA fit. Between two knots the value switches at
// their midpoint; outside the knot range it is clamped.
struct IsotonicFit {
    Eigen::VectorXd knots;
    Eigen::VectorXd values;

    double operator()(double y) const;
};

struct MomentShiftFit {
    double shift = 0.0;
};

struct MomentAffineFit {
    double intercept = 0.0;
    double slope = 1.0;
    bool fell_back = false;  // moment system was rank deficient; pure shift
};

// g(p, x) = softmax(W (log p, x) + b) with p floored at `clamp` and renormalized.
struct ProbRecalibFit {
    Eigen::MatrixXd weights;  // C x (C + d_x)
    Eigen::VectorXd bias;     // C
    double clamp = 1e-6;

    Eigen::MatrixXd operator()(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& covariates) const;
};

using FittedRectifier =
    std::variant<IdentityFit, QuantileMapFit, IsotonicFit, MomentShiftFit, MomentAffineFit, ProbRecalibFit>;

// ---- operations -------------------------------------------------------------

struct CalibrationSplit {
    LabeledSample calibration;
    LabeledSample inference;
};

CalibrationSplit make_calibration_sample(const LabeledSample& labeled, const CalibrationStrategy& strategy,
                                         SeededRng rng);

QuantileMapFit fit_quantile_map(const Eigen::VectorXd& calib_true, const Eigen::VectorXd& calib_imputed);
IsotonicFit fit_isotonic(const Eigen::VectorXd& calib_imputed, const Eigen::VectorXd& calib_true);
MomentShiftFit fit_moment_shift(const LabeledSample& calib, const AtomicMeasure& base);
MomentAffineFit fit_moment_affine(const LabeledSample& calib, const AtomicMeasure& base);
ProbRecalibFit fit_prob_recalib(const LabeledSample& calib, const Eigen::MatrixXd& calib_probs,
                                const ProbRecalibRectifier& spec);

// Dispatches on `spec`. Rectifiers that learn from (truth, imputation) pairs
// read the imputations carried by `calib`.
FittedRectifier fit_rectifier(const RectifierSpec& spec, const LabeledSample& calib, const AtomicMeasure& base);

AtomicMeasure apply_rectifier(const FittedRectifier& rectifier, const AtomicMeasure& base);

// (P_reference - P_base) g_theta.
Eigen::VectorXd score_discrepancy(const AtomicMeasure& base, const AtomicMeasure& reference, const LossSpec& loss,
                                  const Theta& theta);

std::string serialize(const FittedRectifier& rectifier);
FittedRectifier parse_rectifier(const std::string& text);

/// Weighted least-squares nondecreasing fit of `values` (already ordered by
/// the regressor). Blocks are pooled with a stack; each final block value is
/// then recomputed as a left-to-right weighted mean of its members.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> pool_adjacent_violators(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& values,
                                                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& weights) {
    struct Block {
        Index start;
        Scalar weight;
        Scalar weighted_sum;
    };
    std::vector<Block> blocks;
    blocks.reserve(static_cast<std::size_t>(values.size()));
    for (Index i = 0; i < values.size(); ++i) {
        blocks.push_back(Block{i, weights[i], weights[i] * values[i]});
        while (blocks.size() > 1) {
            const Block& last = blocks.back();
            const Block& prev = blocks[blocks.size() - 2];
            if (prev.weighted_sum / prev.weight <= last.weighted_sum / last.weight) break;
            Block merged{prev.start, prev.weight + last.weight, prev.weighted_sum + last.weighted_sum};
            blocks.pop_back();
            blocks.back() = merged;
        }
    }
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> fitted(values.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const Index start = blocks[b].start;
        const Index end = b + 1 < blocks.size() ? blocks[b + 1].start : values.size();
        Scalar num(0), den(0);
        for (Index i = start; i < end; ++i) {
            num += weights[i] * values[i];
            den += weights[i];
        }
        fitted.segment(start, end - start).setConstant(num / den);
    }
    return fitted;
}

}  // namespace rai
