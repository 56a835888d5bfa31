#include "rai/diagnostics.hpp"

#include "rai/rectifiers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace rai {

namespace {

struct PlugIn {
    Eigen::MatrixXd J;
    Eigen::MatrixXd I;
};

PlugIn plug_in(const AtomicMeasure& measure, const LossSpec& loss, const Theta& theta) {
    const AtomicMeasure m = expand_class_probs(measure);
    const Index d = theta.size();
    PlugIn p{Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d)};
    for (Index i = 0; i < m.size(); ++i) {
        const double w = m.weights()[i];
        if (w == 0.0) continue;
        const Atom a = m.atom(i);
        const Eigen::VectorXd g = score(loss, theta, a);
        p.J += w * hessian(loss, theta, a);
        p.I += w * g * g.transpose();
    }
    return p;
}

void require_smooth(const LossSpec& loss, const char* who) {
    if (!has_hessian(loss)) throw CapabilityError(std::string(who) + " needs a twice-differentiable loss, got " +
                                                  describe(loss));
}

void check_gamma(double gamma) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParameterError("gamma must be a finite nonnegative number");
}

double solver_ridge(const LossSpec& loss) {
    if (const auto* m = std::get_if<MultinomialLogisticLoss>(&loss)) return m->ridge;
    return 0.0;
}

Eigen::MatrixXd invert(const Eigen::MatrixXd& j, const char* who) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible()) throw RankDeficiencyError(std::string(who) + ": rank-deficient J");
    return lu.inverse();
}

double sample_sd(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::vector<Interval> quantile_interval(const LabeledSample& labeled, double tau, double level) {
    Eigen::VectorXd y = labeled.outcomes().real_values();
    std::sort(y.data(), y.data() + y.size());
    const Index n = y.size();
    const double half = (1.0 - level) / 2.0;
    // F[j] = P(Bin(n, tau) <= j)
    std::vector<double> F(static_cast<std::size_t>(n + 1));
    for (Index j = 0; j <= n; ++j) F[j] = binomial_cdf(j, n, tau);
    Index lo = 1;
    for (Index j = 1; j <= n; ++j)
        if (F[j - 1] <= half) lo = j;
    Index hi = n;
    for (Index j = 1; j <= n; ++j)
        if (F[j - 1] >= 1.0 - half) {
            hi = j;
            break;
        }
    if (hi < lo) hi = lo;
    return {Interval{y[lo - 1], y[hi - 1]}};
}

}  // namespace

SandwichEstimate sandwich(const LabeledSample& labeled, const AtomicMeasure& base, const LossSpec& loss,
                          const Theta& theta_hat, double gamma) {
    require_smooth(loss, "sandwich");
    check_gamma(gamma);
    const PlugIn lab = plug_in(empirical_measure(labeled), loss, theta_hat);
    SandwichEstimate s;
    s.gamma = gamma;
    s.n = labeled.size();
    if (gamma == 0.0) {
        s.J = lab.J;
        s.I = lab.I;
    } else {
        if (base.dim() != labeled.dim()) throw TypeError("labeled sample and base measure covariate dimensions differ");
        const PlugIn bas = plug_in(base, loss, theta_hat);
        s.J = (lab.J + gamma * bas.J) / (1.0 + gamma);
        s.I = (lab.I + gamma * bas.I) / (1.0 + gamma);
    }
    s.J.diagonal().array() += solver_ridge(loss);
    const Eigen::MatrixXd jinv = invert(s.J, "sandwich");
    Eigen::MatrixXd cov = jinv * s.I * jinv / (static_cast<double>(s.n) * (1.0 + gamma));
    s.cov = (cov + cov.transpose()) / 2.0;
    return s;
}

SandwichEstimate sandwich(const LabeledSample& labeled, const LossSpec& loss, const Theta& theta_hat) {
    return sandwich(labeled, empirical_measure(labeled), loss, theta_hat, 0.0);
}

Eigen::VectorXd predict_centering_bias(const LabeledSample& labeled, const AtomicMeasure& rectified_base,
                                       const LossSpec& loss, const Theta& theta_tilde, double gamma) {
    require_smooth(loss, "predict_centering_bias");
    check_gamma(gamma);
    const AtomicMeasure empirical = empirical_measure(labeled);
    Eigen::MatrixXd j0 = plug_in(empirical, loss, theta_tilde).J;
    j0.diagonal().array() += solver_ridge(loss);
    const Eigen::VectorXd gap = score_discrepancy(rectified_base, empirical, loss, theta_tilde);
    return gamma / (1.0 + gamma) * (invert(j0, "predict_centering_bias") * gap);
}

std::vector<Interval> classical_interval(const LabeledSample& labeled, const LossSpec& loss, double level) {
    if (!(level > 0.0 && level < 1.0)) throw ParameterError("level must lie in (0, 1)");
    if (const auto* q = std::get_if<QuantileLoss>(&loss)) return quantile_interval(labeled, q->tau, level);
    if (!std::holds_alternative<MeanLoss>(loss) && !std::holds_alternative<LinearRegressionLoss>(loss))
        throw CapabilityError("classical interval is available for mean, quantile and linear regression losses, got " +
                              describe(loss));
    const Theta theta = solve_weighted(WeightedProblem::uniform(labeled, loss), SeededRng(0, 0));
    const SandwichEstimate s = sandwich(labeled, loss, theta);
    const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    std::vector<Interval> out;
    for (Index j = 0; j < theta.size(); ++j) {
        const double half = z * std::sqrt(std::max(0.0, s.cov(j, j)));
        out.push_back(Interval{theta[j] - half, theta[j] + half});
    }
    return out;
}

BenchRecord make_bench_record(Index replication, std::string method, const Interval& interval, double point,
                              double truth, double level) {
    BenchRecord r;
    r.replication = replication;
    r.method = std::move(method);
    r.lower = interval.lower;
    r.upper = interval.upper;
    r.point = point;
    r.truth = truth;
    r.covered = interval.lower <= truth && truth <= interval.upper;
    r.interval_score = interval_score(interval.lower, interval.upper, truth, 1.0 - level);
    r.width = interval.upper - interval.lower;
    return r;
}

std::vector<MethodSummary> aggregate_bench(const std::vector<BenchRecord>& records) {
    if (records.empty()) throw ParameterError("aggregate_bench: no records");
    std::map<Index, double> truth;
    std::vector<std::string> order;
    std::map<std::string, std::vector<const BenchRecord*>> groups;
    for (const auto& r : records) {
        if (r.covered != (r.lower <= r.truth && r.truth <= r.upper))
            throw ParameterError("bench record for " + r.method + " in replication " + std::to_string(r.replication) +
                                 " has an inconsistent covered flag");
        auto [it, inserted] = truth.emplace(r.replication, r.truth);
        if (!inserted && it->second != r.truth)
            throw ParameterError("replication " + std::to_string(r.replication) + " has inconsistent truth values");
        auto& g = groups[r.method];
        if (g.empty()) order.push_back(r.method);
        g.push_back(&r);
    }
    std::vector<MethodSummary> out;
    for (const auto& method : order) {
        const auto& g = groups[method];
        std::vector<double> bias, score, width, cover;
        for (const auto* r : g) {
            bias.push_back(r->point - r->truth);
            score.push_back(r->interval_score);
            width.push_back(r->width);
            cover.push_back(r->covered ? 1.0 : 0.0);
        }
        const double root = std::sqrt(static_cast<double>(g.size()));
        MethodSummary s;
        s.method = method;
        s.replications = static_cast<Index>(g.size());
        s.mean_bias = mean_of(bias);
        s.bias_se = sample_sd(bias, s.mean_bias) / root;
        s.mean_interval_score = mean_of(score);
        s.interval_score_se = sample_sd(score, s.mean_interval_score) / root;
        s.mean_width = mean_of(width);
        s.width_se = sample_sd(width, s.mean_width) / root;
        s.coverage = mean_of(cover);
        s.coverage_se = sample_sd(cover, s.coverage) / root;
        out.push_back(std::move(s));
    }
    return out;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("normal_quantile: p must lie in (0, 1)");
    // Acklam's rational approximation followed by one Halley step.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double low = 0.02425;
    double x;
    if (p < low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

double binomial_cdf(Index k, Index n, double p) {
    if (n < 0 || !(p >= 0.0 && p <= 1.0)) throw ParameterError("binomial_cdf: invalid arguments");
    if (k < 0) return 0.0;
    if (k >= n) return 1.0;
    if (p == 0.0) return 1.0;
    if (p == 1.0) return 0.0;
    const double lp = std::log(p), lq = std::log1p(-p);
    const double ln = std::lgamma(static_cast<double>(n) + 1.0);
    double s = 0.0;
    for (Index j = 0; j <= k; ++j) {
        const auto jd = static_cast<double>(j);
        const auto nd = static_cast<double>(n);
        s += std::exp(ln - std::lgamma(jd + 1.0) - std::lgamma(nd - jd + 1.0) + jd * lp + (nd - jd) * lq);
    }
    return std::min(s, 1.0);
}

}  // namespace rai
