#include "oracles.hpp"

#include "rai/error.hpp"
#include "rai/rectifiers.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace rai;

namespace {

Eigen::VectorXd normals(Eigen::Index n, SeededRng& r, double scale = 1.0, double shift = 0.0) {
    Eigen::VectorXd v(n);
    for (auto& x : v) x = shift + scale * r.normal();
    return v;
}

LabeledSample with_imputations(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat,
                               Eigen::MatrixXd x = Eigen::MatrixXd()) {
    if (x.size() == 0) x = Eigen::MatrixXd::Zero(y.size(), 1);
    return LabeledSample(std::move(x), OutcomeColumn::reals(y), OutcomeColumn::reals(yhat));
}

AtomicMeasure real_base(const Eigen::VectorXd& yhat, Eigen::MatrixXd x = Eigen::MatrixXd()) {
    if (x.size() == 0) x = Eigen::MatrixXd::Zero(yhat.size(), 1);
    return AtomicMeasure::uniform(std::move(x), OutcomeColumn::reals(yhat));
}

double mean_of(const AtomicMeasure& m) { return m.weights().dot(m.outcomes().real_values()); }

double cross_entropy(const Eigen::MatrixXd& p, const Eigen::VectorXi& labels) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) s -= std::log(p(i, labels[i]));
    return s / static_cast<double>(p.rows());
}

}  // namespace

TEST_CASE("calibration strategies") {
    const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(10, 0, 9);
    const LabeledSample s = with_imputations(y, y);
    const auto fixed = make_calibration_sample(s, FixedCalibration{}, SeededRng(1, 0));
    CHECK(fixed.calibration.outcomes() == s.outcomes());
    CHECK(fixed.inference.outcomes() == s.outcomes());

    const auto split = make_calibration_sample(s, SplitCalibration{0.5}, SeededRng(1, 0));
    CHECK(split.calibration.size() == 5);
    CHECK(split.inference.size() == 5);
    std::set<double> all;
    for (double v : split.calibration.outcomes().real_values()) all.insert(v);
    for (double v : split.inference.outcomes().real_values()) all.insert(v);
    CHECK(all.size() == 10);

    const auto uneven = make_calibration_sample(s, SplitCalibration{0.31}, SeededRng(1, 0));
    CHECK(uneven.calibration.size() == 4);
    CHECK(uneven.inference.size() == 6);

    const LabeledSample one = with_imputations(Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Constant(1, 1.0));
    const auto npb = make_calibration_sample(one, NpbCalibration{}, SeededRng(1, 0));
    CHECK(npb.calibration.outcomes() == one.outcomes());
    CHECK_THROWS_AS(make_calibration_sample(one, SplitCalibration{0.5}, SeededRng(1, 0)), ParameterError);
    CHECK_THROWS_AS(make_calibration_sample(s, SplitCalibration{0.95}, SeededRng(1, 0)), ParameterError);
    CHECK_THROWS_AS(validate(CalibrationStrategy{SplitCalibration{1.0}}), ParameterError);
}

TEST_CASE("quantile map worked examples") {
    const Eigen::Vector3d t(1, 2, 3);
    const QuantileMapFit same = fit_quantile_map(t, t);
    CHECK(same(2.0) == 2.0);
    const QuantileMapFit q = fit_quantile_map(t, Eigen::Vector3d(10, 20, 30));
    CHECK(q(20.0) == 2.0);
    CHECK(q(5.0) == 1.0);
    CHECK(q(1e9) == 3.0);
    CHECK_THROWS_AS(fit_quantile_map(t, Eigen::Vector2d(1, 2)), ParameterError);
}

TEST_CASE("quantile map is monotone and returns grid points to themselves") {
    SeededRng r(2, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::VectorXd t = normals(30, r);
        const QuantileMapFit id = fit_quantile_map(t, t);
        for (double v : t) CHECK(id(v) == v);
        const QuantileMapFit q = fit_quantile_map(t, normals(30, r, 2.0, 1.0));
        double prev = -INFINITY;
        for (double v = -8.0; v <= 8.0; v += 0.01) {
            const double m = q(v);
            CHECK(m >= prev);
            prev = m;
        }
    }
}

TEST_CASE("isotonic worked examples") {
    const IsotonicFit noop = fit_isotonic(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, 2, 5));
    CHECK(noop.values == Eigen::Vector3d(1, 2, 5));
    const IsotonicFit f = fit_isotonic(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(1, 3, 2));
    CHECK(f.values == Eigen::Vector3d(1, 2.5, 2.5));
    const IsotonicFit c = fit_isotonic(Eigen::Vector3d(3, 1, 2), Eigen::Vector3d::Constant(4.0));
    for (double v : {-5.0, 1.5, 2.2, 9.0}) CHECK(c(v) == 4.0);
    // Midpoint switching and clamping.
    const IsotonicFit s = fit_isotonic(Eigen::Vector3d(0, 2, 4), Eigen::Vector3d(0, 1, 2));
    CHECK(s(0.9) == 0.0);
    CHECK(s(1.0) == 1.0);
    CHECK(s(-3.0) == 0.0);
    CHECK(s(7.0) == 2.0);
    CHECK_THROWS_AS(fit_isotonic(Eigen::Vector3d(1, 2, 3), Eigen::Vector2d(1, 2)), ParameterError);
}

TEST_CASE("isotonic pools tied imputations before fitting") {
    const IsotonicFit f = fit_isotonic(Eigen::Vector4d(1, 1, 2, 3), Eigen::Vector4d(4, 0, 1, 3));
    CHECK(f.knots.size() == 3);
    CHECK(f.values[0] == doctest::Approx(5.0 / 3.0));
    CHECK(f.values[1] == doctest::Approx(5.0 / 3.0));
    CHECK(f.values[2] == 3.0);
}

TEST_CASE("PAVA equals the quadratic pooling reference") {
    SeededRng r(3, 0);
    for (int rep = 0; rep < 500; ++rep) {
        const auto n = static_cast<Eigen::Index>(1 + r.uniform_index(200));
        Eigen::VectorXd v(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            v[i] = rep % 3 == 0 ? static_cast<double>(r.uniform_index(5)) : r.normal() + 0.01 * static_cast<double>(i);
            w[i] = rep % 2 == 0 ? 1.0 : 0.1 + r.uniform();
        }
        const Eigen::VectorXd got = pool_adjacent_violators<double>(v, w);
        REQUIRE(got == oracle::pava_quadratic(v, w));
        for (Eigen::Index i = 1; i < n; ++i) REQUIRE(got[i - 1] <= got[i]);
    }
}

TEST_CASE("moment shift") {
    const LabeledSample calib = with_imputations(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(0, 0, 0));
    const AtomicMeasure base = real_base(Eigen::Vector3d(4, 5, 6));
    const MomentShiftFit f = fit_moment_shift(calib, base);
    CHECK(f.shift == -3.0);
    CHECK(mean_of(apply_rectifier(f, base)) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(std::abs(fit_moment_shift(calib, real_base(Eigen::Vector3d(3, 2, 1))).shift) <= 1e-15);
    const AtomicMeasure single = real_base(Eigen::VectorXd::Zero(1));
    CHECK(std::get<RealOutcome>(apply_rectifier(fit_moment_shift(calib, single), single).atom(0).y).value == 2.0);
    const AtomicMeasure two = real_base(Eigen::Vector2d(0, 2));
    const AtomicMeasure shifted = apply_rectifier(MomentShiftFit{1.0}, two);
    CHECK(shifted.outcomes().real_values() == Eigen::Vector2d(1, 3));
}

TEST_CASE("moment shift kills the mean score discrepancy") {
    SeededRng r(4, 0);
    for (int rep = 0; rep < 100; ++rep) {
        const auto m = static_cast<Eigen::Index>(2 + r.uniform_index(50));
        const auto k = static_cast<Eigen::Index>(1 + r.uniform_index(80));
        const LabeledSample calib = with_imputations(normals(m, r, 2.0, 1.0), normals(m, r));
        Eigen::VectorXd w(k);
        for (auto& v : w) v = r.uniform();
        const AtomicMeasure base(Eigen::MatrixXd::Zero(k, 1), OutcomeColumn::reals(normals(k, r, 3.0, -2.0)), w);
        const AtomicMeasure rect = apply_rectifier(fit_moment_shift(calib, base), base);
        const Theta theta = Theta::Constant(1, 5.0 * r.normal());
        const Eigen::VectorXd gap = score_discrepancy(rect, empirical_measure(calib), MeanLoss{}, theta);
        CHECK(std::abs(gap[0]) <= 1e-12);
    }
}

TEST_CASE("moment affine") {
    SeededRng r(5, 0);
    const Eigen::Index n = 4000;
    Eigen::MatrixXd x = normals(n, r);
    const Eigen::VectorXd y = (2.0 * x.col(0) + normals(n, r)).array() + 1.0;
    const MomentAffineFit same = fit_moment_affine(with_imputations(y, y, x), real_base(y, x));
    CHECK(std::abs(same.intercept) <= 1e-10);
    CHECK(std::abs(same.slope - 1.0) <= 1e-10);

    // Base imputes twice the truth generated from an independent draw.
    Eigen::MatrixXd xb = normals(n, r);
    const Eigen::VectorXd yb = (2.0 * xb.col(0) + normals(n, r)).array() + 1.0;
    const MomentAffineFit half = fit_moment_affine(with_imputations(y, y, x), real_base(2.0 * yb, xb));
    CHECK(std::abs(half.slope - 0.5) <= 0.05);
    CHECK_FALSE(half.fell_back);

    // Constant covariate: the moment system is rank one and the fit is a shift.
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
    const LabeledSample calib = with_imputations(y, y, ones);
    const AtomicMeasure base = real_base(yb + Eigen::VectorXd::Constant(n, 3.0), ones);
    const MomentAffineFit shift = fit_moment_affine(calib, base);
    CHECK(shift.fell_back);
    CHECK(shift.slope == 1.0);
    CHECK(shift.intercept == doctest::Approx(fit_moment_shift(calib, base).shift).epsilon(1e-15));
}

TEST_CASE("moment affine residual is orthogonal to the moment design") {
    SeededRng r(6, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::Index m = 200, k = 300, d = 3;
        Eigen::MatrixXd xc(m, d), xb(k, d);
        for (Eigen::Index i = 0; i < m; ++i) xc.row(i) = normals(d, r).transpose();
        for (Eigen::Index i = 0; i < k; ++i) xb.row(i) = normals(d, r).transpose();
        const Eigen::VectorXd y = normals(m, r, 1.0, 0.5) + xc.col(0);
        const Eigen::VectorXd yhat = normals(k, r, 1.5, -1.0) + 0.5 * xb.col(1);
        const LabeledSample calib = with_imputations(y, normals(m, r), xc);
        const AtomicMeasure base = real_base(yhat, xb);
        const MomentAffineFit f = fit_moment_affine(calib, base);
        REQUIRE_FALSE(f.fell_back);
        Eigen::MatrixXd hb(k, d + 1), hc(m, d + 1);
        hb << Eigen::VectorXd::Ones(k), xb;
        hc << Eigen::VectorXd::Ones(m), xc;
        Eigen::MatrixXd design(d + 1, 2);
        design.col(0) = hb.transpose() * base.weights();
        design.col(1) = hb.transpose() * base.weights().cwiseProduct(yhat);
        const Eigen::VectorXd target = hc.transpose() * y / static_cast<double>(m);
        const Eigen::VectorXd resid = design * Eigen::Vector2d(f.intercept, f.slope) - target;
        CHECK((design.transpose() * resid).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("prob recalib: identity parameters reproduce the input") {
    Eigen::MatrixXd p(3, 3);
    p << 0.2, 0.3, 0.5, 0.9, 0.05, 0.05, 1.0 / 3, 1.0 / 3, 1.0 / 3;
    ProbRecalibFit id;
    id.weights = Eigen::MatrixXd::Zero(3, 4);
    id.weights.leftCols(3).setIdentity();
    id.bias = Eigen::VectorXd::Zero(3);
    id.clamp = 1e-6;
    const Eigen::MatrixXd out = id(p, Eigen::MatrixXd::Ones(3, 1));
    CHECK((out - p).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("prob recalib: calibrated data cannot be improved on, miscalibrated data is repaired") {
    SeededRng r(7, 0);
    const int c = 3;
    auto draw = [&](Eigen::Index n, bool calibrated, Eigen::MatrixXd& probs, Eigen::MatrixXd& x, Eigen::VectorXi& labels,
                    Eigen::MatrixXd& truth) {
        probs.resize(n, c);
        x.resize(n, 1);
        labels.resize(n);
        truth.resize(n, c);
        for (Eigen::Index i = 0; i < n; ++i) {
            x(i, 0) = r.normal();
            Eigen::VectorXd logits(c);
            for (int j = 0; j < c; ++j) logits[j] = r.normal();
            const Eigen::VectorXd p = oracle::softmax(logits);
            probs.row(i) = p.transpose();
            // Generating model: softmax(W* log p + v x + b*).
            Eigen::VectorXd z = calibrated ? Eigen::VectorXd(p.array().log()) : Eigen::VectorXd(0.4 * p.array().log());
            if (!calibrated) {
                z[0] += 0.7;
                z[1] += 0.5 * x(i, 0);
            }
            truth.row(i) = oracle::softmax(z).transpose();
            labels[i] = static_cast<int>(r.categorical(truth.row(i).transpose()));
        }
    };
    Eigen::MatrixXd probs, x, truth;
    Eigen::VectorXi labels;
    draw(2000, true, probs, x, labels, truth);
    ProbRecalibRectifier tiny;
    tiny.ridge = 1e-8;
    const ProbRecalibFit fit =
        fit_prob_recalib(LabeledSample(x, OutcomeColumn::classes(labels, c)), probs, tiny);
    CHECK(cross_entropy(fit(probs, x), labels) <= cross_entropy(probs, labels) + 1e-6);

    draw(2000, false, probs, x, labels, truth);
    const ProbRecalibFit mis = fit_prob_recalib(LabeledSample(x, OutcomeColumn::classes(labels, c)), probs, {});
    Eigen::MatrixXd hp, hx, htruth;
    Eigen::VectorXi hl;
    draw(20000, false, hp, hx, hl, htruth);
    const Eigen::MatrixXd out = mis(hp, hx);
    CHECK(std::abs(cross_entropy(out, hl) - cross_entropy(htruth, hl)) <= 0.02);
    for (Eigen::Index i = 0; i < out.rows(); ++i) REQUIRE(std::abs(out.row(i).sum() - 1.0) <= 1e-9);
}

TEST_CASE("prob recalib handles zero probabilities through the clamp") {
    Eigen::MatrixXd p(4, 2);
    p << 1, 0, 0, 1, 1, 0, 0.5, 0.5;
    Eigen::VectorXi labels(4);
    labels << 0, 1, 1, 0;
    const LabeledSample calib(Eigen::MatrixXd::Zero(4, 0), OutcomeColumn::classes(labels, 2),
                              OutcomeColumn::probabilities(p));
    const AtomicMeasure base = AtomicMeasure::uniform(Eigen::MatrixXd::Zero(4, 0), OutcomeColumn::probabilities(p));
    const AtomicMeasure rect = apply_rectifier(fit_rectifier(ProbRecalibRectifier{}, calib, base), base);
    for (Eigen::Index i = 0; i < 4; ++i) {
        CHECK(std::abs(rect.outcomes().probs().row(i).sum() - 1.0) <= 1e-9);
        CHECK((rect.outcomes().probs().row(i).array() > 0.0).all());
    }
    CHECK_THROWS_AS(validate(RectifierSpec{ProbRecalibRectifier{1e-3, 0.5}}), ParameterError);
    CHECK_THROWS_AS(validate(RectifierSpec{ProbRecalibRectifier{-1.0, 1e-6}}), ParameterError);
}

TEST_CASE("apply_rectifier preserves weights and covariates") {
    SeededRng r(8, 0);
    const Eigen::Index k = 40;
    Eigen::MatrixXd x(k, 2);
    for (Eigen::Index i = 0; i < k; ++i) x.row(i) = normals(2, r).transpose();
    Eigen::VectorXd w(k);
    for (auto& v : w) v = r.uniform();
    const AtomicMeasure base(x, OutcomeColumn::reals(normals(k, r)), w);
    const LabeledSample calib = with_imputations(normals(30, r), normals(30, r), Eigen::MatrixXd::Zero(30, 2));
    for (const RectifierSpec& spec : {RectifierSpec{IdentityRectifier{}}, RectifierSpec{QuantileMapRectifier{}},
                                      RectifierSpec{IsotonicRectifier{}}, RectifierSpec{MomentShiftRectifier{}},
                                      RectifierSpec{MomentAffineRectifier{}}}) {
        const AtomicMeasure out = apply_rectifier(fit_rectifier(spec, calib, base), base);
        CHECK(out.weights() == base.weights());
        CHECK(out.covariates() == base.covariates());
    }
    const AtomicMeasure same = apply_rectifier(IdentityFit{}, base);
    CHECK(same.outcomes() == base.outcomes());
    CHECK_THROWS_AS(apply_rectifier(ProbRecalibFit{}, base), TypeError);
}

TEST_CASE("quantile map on identical marginals keeps the base mean within one grid gap") {
    SeededRng r(9, 0);
    const Eigen::VectorXd grid = normals(200, r);
    const AtomicMeasure base = real_base(normals(500, r));
    const AtomicMeasure out = apply_rectifier(fit_quantile_map(grid, grid), base);
    Eigen::VectorXd g = grid;
    std::sort(g.data(), g.data() + g.size());
    double gap = 0.0;
    for (Eigen::Index i = 1; i < g.size(); ++i) gap = std::max(gap, g[i] - g[i - 1]);
    CHECK(std::abs(mean_of(out) - mean_of(base)) <= gap);
}

TEST_CASE("score discrepancy") {
    const AtomicMeasure a = real_base(Eigen::Vector2d(1, 3));
    const AtomicMeasure b = real_base(Eigen::Vector2d(4, 6));
    CHECK(score_discrepancy(a, a, MeanLoss{}, Theta::Constant(1, 0.7))[0] == 0.0);
    CHECK(score_discrepancy(b, a, MeanLoss{}, Theta::Constant(1, -2.0))[0] == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("npb refits differ across streams") {
    SeededRng r(10, 0);
    const LabeledSample s = with_imputations(normals(50, r), normals(50, r, 1.0, 1.0));
    const AtomicMeasure base = real_base(normals(100, r, 1.0, 1.0));
    auto fit = [&](std::uint64_t stream) {
        const auto part = make_calibration_sample(s, NpbCalibration{}, SeededRng(1, stream));
        return std::get<QuantileMapFit>(fit_rectifier(QuantileMapRectifier{}, part.calibration, base));
    };
    const QuantileMapFit a = fit(1), b = fit(2);
    CHECK(a.true_grid != b.true_grid);
}

TEST_CASE("fitted rectifiers round-trip through their text form") {
    SeededRng r(11, 0);
    const std::vector<FittedRectifier> fits = {
        IdentityFit{},
        fit_quantile_map(normals(7, r), normals(7, r)),
        fit_isotonic(normals(9, r), normals(9, r)),
        MomentShiftFit{-0.1},
        MomentAffineFit{0.3, 1.0 / 3.0, true},
        ProbRecalibFit{Eigen::MatrixXd::Random(3, 5), Eigen::VectorXd::Random(3), 1e-6},
    };
    for (const auto& f : fits) {
        const std::string text = serialize(f);
        CHECK(text.rfind("rai-rectifier 1\n", 0) == 0);
        CHECK(serialize(parse_rectifier(text)) == text);
    }
    const auto back = std::get<MomentAffineFit>(parse_rectifier(serialize(fits[4])));
    CHECK(back.slope == 1.0 / 3.0);
    CHECK(back.fell_back);
    CHECK_THROWS_AS(parse_rectifier("nonsense"), IngestionError);
    CHECK_THROWS_AS(parse_rectifier("rai-rectifier 1\nkind = moment-shift\nshift = abc\n"), IngestionError);
}

TEST_CASE("fit_rectifier needs imputations for pairwise rectifiers") {
    const LabeledSample plain(Eigen::MatrixXd::Zero(3, 1), OutcomeColumn::reals(Eigen::Vector3d(1, 2, 3)));
    const AtomicMeasure base = real_base(Eigen::Vector3d(1, 2, 3));
    CHECK_THROWS_AS(fit_rectifier(QuantileMapRectifier{}, plain, base), TypeError);
    CHECK_THROWS_AS(fit_rectifier(IsotonicRectifier{}, plain, base), TypeError);
    CHECK_NOTHROW(fit_rectifier(MomentShiftRectifier{}, plain, base));
}
