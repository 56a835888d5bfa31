#pragma once

#include "rai/error.hpp"
#include "rai/losses.hpp"
#include "rai/measures.hpp"
#include "rai/posterior.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace rai {

// (U - L) + (2 / beta) (L - theta0) 1{theta0 < L} + (2 / beta) (theta0 - U) 1{theta0 > U}.
// An endpoint equal to theta0 counts as covered.
template <class Scalar>
Scalar interval_score(Scalar lower, Scalar upper, Scalar theta0, Scalar beta) {
    if (lower > upper) throw ParameterError("interval_score: lower endpoint exceeds upper");
    if (!(beta > Scalar(0) && beta < Scalar(1))) throw ParameterError("interval_score: beta must lie in (0, 1)");
    Scalar s = upper - lower;
    if (theta0 < lower) s += Scalar(2) / beta * (lower - theta0);
    if (theta0 > upper) s += Scalar(2) / beta * (theta0 - upper);
    return s;
}

struct SandwichEstimate {
    Eigen::MatrixXd J;
    Eigen::MatrixXd I;
    Eigen::MatrixXd cov;  // J^-1 I J^-1 / (n (1 + gamma))
    double gamma = 0.0;
    Index n = 0;
};

// J and I mix the labeled plug-in with the base plug-in as
// (P_n + gamma P_base) / (1 + gamma). The base is ignored when gamma = 0.
// For MultinomialLogistic the solver ridge is added to J, since the softmax
// parameterization leaves J singular along the class-shift direction.
SandwichEstimate sandwich(const LabeledSample& labeled, const AtomicMeasure& base, const LossSpec& loss,
                          const Theta& theta_hat, double gamma);
SandwichEstimate sandwich(const LabeledSample& labeled, const LossSpec& loss, const Theta& theta_hat);

// gamma / (1 + gamma) * J0^-1 (P_n - P_base) g at theta_tilde, J0 the labeled
// plug-in Hessian.
Eigen::VectorXd predict_centering_bias(const LabeledSample& labeled, const AtomicMeasure& rectified_base,
                                       const LossSpec& loss, const Theta& theta_tilde, double gamma);

// Labeled-only baseline. Mean and LinearRegression: normal interval from the
// gamma = 0 sandwich. Quantile: distribution-free order-statistic interval.
std::vector<Interval> classical_interval(const LabeledSample& labeled, const LossSpec& loss, double level);

struct BenchRecord {
    Index replication = 0;
    std::string method;
    double lower = 0.0;
    double upper = 0.0;
    double point = 0.0;
    double truth = 0.0;
    bool covered = false;
    double interval_score = 0.0;
    double width = 0.0;
};

BenchRecord make_bench_record(Index replication, std::string method, const Interval& interval, double point,
                              double truth, double level);

struct MethodSummary {
    std::string method;
    Index replications = 0;
    double mean_bias = 0.0;
    double bias_se = 0.0;
    double mean_interval_score = 0.0;
    double interval_score_se = 0.0;
    double mean_width = 0.0;
    double width_se = 0.0;
    double coverage = 0.0;
    double coverage_se = 0.0;
};

// One summary per method, in order of first appearance. Standard errors are
// sample standard deviation / sqrt(R).
std::vector<MethodSummary> aggregate_bench(const std::vector<BenchRecord>& records);

// Standard normal quantile, accurate to about 1e-15 relative.
double normal_quantile(double p);
// P(Binomial(n, p) <= k).
double binomial_cdf(Index k, Index n, double p);

}  // namespace rai
