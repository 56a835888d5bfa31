#include "oracles.hpp"

#include "rai/diagnostics.hpp"
#include "rai/error.hpp"
#include "rai/posterior.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <sstream>

using namespace rai;

namespace {

Eigen::VectorXd normals(Eigen::Index n, SeededRng& r, double scale = 1.0, double shift = 0.0) {
    Eigen::VectorXd v(n);
    for (auto& x : v) x = shift + scale * r.normal();
    return v;
}

LabeledSample reals(const Eigen::VectorXd& y) {
    return LabeledSample(Eigen::MatrixXd::Zero(y.size(), 1), OutcomeColumn::reals(y), OutcomeColumn::reals(y));
}

AtomicMeasure real_base(const Eigen::VectorXd& y) {
    return AtomicMeasure::uniform(Eigen::MatrixXd::Zero(y.size(), 1), OutcomeColumn::reals(y));
}

PriorConfig config(double gamma, int draws, std::uint64_t seed = 1) {
    PriorConfig c;
    c.gamma = gamma;
    c.draws = draws;
    c.seed = seed;
    c.rectifier = IdentityRectifier{};
    return c;
}

double sd(const Eigen::VectorXd& v) {
    return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("a flat draw is the Dirichlet-weighted mean") {
    SeededRng r(1, 0);
    const Eigen::VectorXd y = normals(37, r);
    const LabeledSample s = reals(y);
    const AtomicMeasure unused = real_base(Eigen::VectorXd::Zero(1));
    for (Index b = 0; b < 20; ++b) {
        const Theta t = posterior_draw(s, unused, MeanLoss{}, config(0.0, 2, 9), b);
        const Eigen::VectorXd w = sample_flat_dirichlet(37, SeededRng(9, static_cast<std::uint64_t>(b)).substream(3));
        CHECK(t[0] == doctest::Approx(w.dot(y) / w.sum()).epsilon(1e-12));
    }
}

TEST_CASE("one labeled atom against one base atom") {
    const LabeledSample s = reals(Eigen::VectorXd::Constant(1, 1.0));
    const AtomicMeasure base = real_base(Eigen::VectorXd::Constant(1, 5.0));
    for (Index b = 0; b < 20; ++b) {
        const Theta t = posterior_draw(s, base, MeanLoss{}, config(1.0, 2, 4), b);
        const DirichletWeights dw =
            sample_dirichlet_weights(1, 1, 1.0, SeededRng(4, static_cast<std::uint64_t>(b)).substream(3));
        const double w = dw.labeled[0] / (dw.labeled[0] + dw.base[0]);
        CHECK(t[0] == doctest::Approx(w * 1.0 + (1.0 - w) * 5.0).epsilon(1e-12));
        CHECK(t[0] >= 1.0);
        CHECK(t[0] <= 5.0);
    }
}

TEST_CASE("runs do not depend on the worker count") {
    SeededRng r(2, 0);
    const LabeledSample s = reals(normals(60, r));
    const AtomicMeasure base = real_base(normals(80, r, 1.0, 0.3));
    PriorConfig c = config(1.0, 64, 3);
    c.rectifier = QuantileMapRectifier{};
    const PosteriorRun one = run_posterior(s, base, QuantileLoss{0.3}, c);
    c.threads = 4;
    const PosteriorRun four = run_posterior(s, base, QuantileLoss{0.3}, c);
    CHECK(one.samples == four.samples);
    CHECK(serialize(one) == serialize(four));
}

TEST_CASE("flat posterior width matches the sampling scale") {
    SeededRng r(3, 0);
    const Index n = 400;
    const Eigen::VectorXd y = normals(n, r);
    const PosteriorRun run = run_posterior(reals(y), MeanLoss{}, config(0.0, 2000, 5));
    const double half = run.intervals[0].width() / 2.0;
    const double expect = 1.6448536269514722 * sd(y) / std::sqrt(static_cast<double>(n));
    CHECK(half == doctest::Approx(expect).epsilon(0.15));
    CHECK(std::abs(run.point[0] - y.mean()) <= 0.01);
}

TEST_CASE("constant data collapses the posterior") {
    const LabeledSample s = reals(Eigen::VectorXd::Constant(25, 3.0));
    const AtomicMeasure base = real_base(Eigen::VectorXd::Constant(10, 3.0));
    const PosteriorRun run = run_posterior(s, base, MeanLoss{}, config(2.0, 50));
    CHECK(run.point[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(run.intervals[0].lower == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(run.intervals[0].upper == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("credible interval examples") {
    const Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(100, 1, 100);
    const Interval i = credible_interval<double>(s, 0.9);
    CHECK(i.lower == doctest::Approx(5.95).epsilon(1e-14));
    CHECK(i.upper == doctest::Approx(95.05).epsilon(1e-14));
    Eigen::VectorXd shuffled = s.reverse();
    const Interval j = credible_interval<double>(shuffled, 0.9);
    CHECK(j.lower == i.lower);
    CHECK(j.upper == i.upper);
    const Interval sym = credible_interval<double>(Eigen::VectorXd::LinSpaced(201, -1, 1), 0.8);
    CHECK(sym.lower == doctest::Approx(-sym.upper).epsilon(1e-14));
    CHECK(credible_interval<float>(Eigen::VectorXf::LinSpaced(100, 1, 100), 0.9).lower == doctest::Approx(5.95));
    CHECK_THROWS_AS(credible_interval<double>(Eigen::VectorXd::Ones(1), 0.9), ParameterError);
    CHECK_THROWS_AS(credible_interval<double>(s, 1.0), ParameterError);
}

TEST_CASE("credible interval agrees with a sort-based reference") {
    SeededRng r(4, 0);
    for (int rep = 0; rep < 200; ++rep) {
        const auto n = static_cast<Index>(2 + r.uniform_index(300));
        const Eigen::VectorXd v = normals(n, r);
        const double level = 0.05 + 0.9 * r.uniform();
        const Interval i = credible_interval<double>(v, level);
        const std::vector<double> vv(v.data(), v.data() + n);
        CHECK(i.lower == doctest::Approx(oracle::sorted_quantile(vv, (1 - level) / 2)).epsilon(1e-12));
        CHECK(i.upper == doctest::Approx(oracle::sorted_quantile(vv, (1 + level) / 2)).epsilon(1e-12));
        CHECK(i.lower <= i.upper);
    }
}

TEST_CASE("predicted class is the argmax of averaged probabilities") {
    PosteriorRun run;
    run.samples.resize(2, 2);
    // softmax(0, log 4) = (0.2, 0.8); softmax(log 1.5, 0) = (0.6, 0.4)
    run.samples << 0.0, std::log(4.0), std::log(1.5), 0.0;
    const LossSpec loss = MultinomialLogisticLoss{2, 1e-8};
    const Eigen::MatrixXd p = posterior_predictive_proba(run, loss, Eigen::MatrixXd::Zero(1, 0));
    CHECK(p(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(p(0, 1) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(posterior_predict_class(run, loss, Eigen::VectorXd::Zero(0)) == 1);
    run.samples.resize(1, 2);
    run.samples << 0.0, 0.0;
    CHECK(posterior_predict_class(run, loss, Eigen::VectorXd::Zero(0)) == 0);
}

TEST_CASE("a vanishing prior recovers the Bayesian bootstrap") {
    SeededRng r(5, 0);
    const Eigen::VectorXd y = normals(300, r);
    const LabeledSample s = reals(y);
    const AtomicMeasure base = real_base(normals(300, r, 1.0, 10.0));
    const PosteriorRun flat = run_posterior(s, MeanLoss{}, config(0.0, 3000, 1));
    const PosteriorRun tiny = run_posterior(s, base, MeanLoss{}, config(1e-9, 3000, 2));
    CHECK(tiny.point[0] == doctest::Approx(flat.point[0]).scale(1.0).epsilon(0.01));
    CHECK(tiny.intervals[0].width() == doctest::Approx(flat.intervals[0].width()).epsilon(0.08));
}

TEST_CASE("prior influence grows with gamma") {
    SeededRng r(6, 0);
    const Eigen::VectorXd y = normals(200, r);
    const LabeledSample s = reals(y);
    const AtomicMeasure base = real_base(normals(500, r, 1.0, 5.0));
    const double base_mean = base.weights().dot(base.outcomes().real_values());
    double prev = y.mean();
    for (double g : {0.5, 1.0, 2.0, 4.0}) {
        const PosteriorRun run = run_posterior(s, base, MeanLoss{}, config(g, 400, 7));
        const double expect = (y.mean() + g * base_mean) / (1.0 + g);
        CHECK(run.point[0] > prev);
        CHECK(std::abs(run.point[0] - expect) <= 0.02);
        prev = run.point[0];
    }
}

TEST_CASE("posterior spread matches the sandwich") {
    SeededRng r(7, 0);
    const LabeledSample s = reals(normals(400, r));
    const AtomicMeasure base = real_base(normals(1000, r, 2.0, 1.0));
    for (double g : {0.5, 2.0}) {
        const PosteriorRun run = run_posterior(s, base, MeanLoss{}, config(g, 2000, 8));
        const SandwichEstimate sw = sandwich(s, base, MeanLoss{}, run.point, g);
        CHECK(sd(run.samples.col(0)) == doctest::Approx(std::sqrt(sw.cov(0, 0))).epsilon(0.10));
    }
}

TEST_CASE("linear regression posterior concentrates near least squares") {
    SeededRng r(8, 0);
    const Index n = 500;
    Eigen::MatrixXd x(n, 2);
    for (Index i = 0; i < n; ++i) x.row(i) = normals(2, r).transpose();
    const Eigen::VectorXd y = (1.5 * x.col(0) - 0.5 * x.col(1) + normals(n, r)).array() + 2.0;
    const LabeledSample s(x, OutcomeColumn::reals(y));
    const PosteriorRun run = run_posterior(s, LinearRegressionLoss{}, config(0.0, 200));
    Eigen::MatrixXd z(n, 3);
    z << Eigen::VectorXd::Ones(n), x;
    const Eigen::VectorXd ols = oracle::weighted_ols(z, y, Eigen::VectorXd::Ones(n));
    for (Index j = 0; j < 3; ++j) {
        CHECK(std::abs(run.point[j] - ols[j]) <= 0.02);
        CHECK(run.intervals[j].lower <= ols[j]);
        CHECK(run.intervals[j].upper >= ols[j]);
    }
}

TEST_CASE("too many failed draws raise") {
    // The x = 1 row lands in the calibration half about half the time, which
    // leaves the inference design singular.
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(6, 1);
    x(5, 0) = 1.0;
    const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(6, 0, 5);
    const LabeledSample s(x, OutcomeColumn::reals(y), OutcomeColumn::reals(y));
    const AtomicMeasure base = real_base(Eigen::Vector4d(1, 2, 3, 4));
    PriorConfig c = config(1.0, 40);
    c.strategy = SplitCalibration{0.5};
    c.rectifier = MomentShiftRectifier{};
    try {
        run_posterior(s, base, LinearRegressionLoss{}, c);
        FAIL("expected DrawFailureError");
    } catch (const DrawFailureError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(" of 40 posterior draws failed; first failure: draw ") != std::string::npos);
    }
    CHECK_THROWS_AS(run_posterior(s, LinearRegressionLoss{}, config(1.0, 10)), ParameterError);
    CHECK_THROWS_AS(run_posterior(s, base, LinearRegressionLoss{}, config(1.0, 1)), ParameterError);
}

TEST_CASE("non-numerical errors propagate unchanged") {
    const LabeledSample s = reals(Eigen::Vector3d(1, 2, 3));
    const AtomicMeasure wide =
        AtomicMeasure::uniform(Eigen::MatrixXd::Zero(2, 2), OutcomeColumn::reals(Eigen::Vector2d(1, 2)));
    CHECK_THROWS_AS(run_posterior(s, wide, MeanLoss{}, config(1.0, 10)), TypeError);
}

TEST_CASE("serialized runs carry a header, every draw and a summary") {
    SeededRng r(9, 0);
    const PosteriorRun run = run_posterior(reals(normals(30, r)), MeanLoss{}, config(0.0, 12));
    std::istringstream in(serialize(run));
    std::string line;
    std::getline(in, line);
    CHECK(line == "rai-posterior 1");
    int draws = 0;
    std::string last_type;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        last_type = j.at("record").get<std::string>();
        if (last_type == "draw") ++draws;
    }
    CHECK(draws == 12);
    CHECK(last_type == "summary");
}
