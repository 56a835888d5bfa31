#include "rai/error.hpp"
#include "rai/measures.hpp"
#include "rai/random.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace rai;

namespace {

LabeledSample real_sample(const Eigen::VectorXd& y) {
    return LabeledSample(Eigen::MatrixXd::Zero(y.size(), 1), OutcomeColumn::reals(y));
}

}  // namespace

TEST_CASE("rng streams are reproducible and distinct") {
    SeededRng a(42, 7), b(42, 7), c(42, 8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        CHECK(x == b.next());
        differs |= x != c.next();
    }
    CHECK(differs);
    SeededRng d(1, 2);
    const SeededRng s1 = d.substream(3);
    d.next();
    SeededRng s2 = SeededRng(1, 2).substream(3);
    SeededRng s1c = s1;
    CHECK(s1c.next() == s2.next());
}

TEST_CASE("rng uniform, normal and gamma moments") {
    SeededRng r(3, 0);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0, sg = 0, sgs = 0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        su += u;
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
        sg += r.gamma(2.5);
        sgs += r.gamma(0.3);
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::abs(sn / n) < 0.01);
    CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.01));
    CHECK(sg / n == doctest::Approx(2.5).epsilon(0.01));
    CHECK(sgs / n == doctest::Approx(0.3).epsilon(0.02));
    CHECK(std::isfinite(r.log_gamma_variate(1e-4)));
}

TEST_CASE("uniform_index covers its range without bias") {
    SeededRng r(5, 1);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) counts[r.uniform_index(7)]++;
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("outcome column invariants") {
    CHECK_THROWS_AS(OutcomeColumn::classes(Eigen::VectorXi::Constant(2, 2), 2), ParameterError);
    Eigen::MatrixXd p(1, 2);
    p << 0.3, 0.6;
    CHECK_THROWS_AS(OutcomeColumn::probabilities(p), ParameterError);
    p << 0.4, 0.6;
    const auto col = OutcomeColumn::probabilities(p);
    CHECK(col.kind() == OutcomeKind::ClassProbs);
    CHECK_THROWS_AS(col.real_values(), TypeError);
    CHECK_THROWS_AS(OutcomeColumn::reals(Eigen::VectorXd::Constant(1, NAN)), ParameterError);
    const auto r = OutcomeColumn::reals(Eigen::Vector2d(1, 2));
    CHECK_THROWS_AS(r.concat(col), TypeError);
    const auto rr = r.concat(r);
    CHECK(rr.size() == 4);
    CHECK(rr.real_values()[3] == 2.0);
}

TEST_CASE("normalize_probability_rows renormalizes and rejects zero rows") {
    Eigen::MatrixXd p(2, 2);
    p << 0.2, 0.8001, 0.0, 1.0;
    const Eigen::MatrixXd q = normalize_probability_rows(p);
    CHECK(q.row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(q(1, 0) == 0.0);
    const Eigen::MatrixXd f = normalize_probability_rows(p, 1e-6);
    CHECK(f(1, 0) > 0.0);
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 3);
    CHECK_THROWS_AS(normalize_probability_rows(z), ParameterError);
}

TEST_CASE("labeled sample validation") {
    CHECK_THROWS_AS(LabeledSample(Eigen::MatrixXd(0, 1), OutcomeColumn::reals(Eigen::VectorXd())), ParameterError);
    CHECK_THROWS_AS(LabeledSample(Eigen::MatrixXd::Zero(2, 1), OutcomeColumn::reals(Eigen::VectorXd::Zero(3))),
                    ParameterError);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 1);
    x(0, 0) = INFINITY;
    CHECK_THROWS_AS(LabeledSample(x, OutcomeColumn::reals(Eigen::VectorXd::Zero(2))), ParameterError);
}

TEST_CASE("dirichlet weights: n=1, k=1 sum to one") {
    for (double alpha : {1e-3, 1.0, 1e3}) {
        const auto w = sample_dirichlet_weights(1, 1, alpha, SeededRng(1, 0));
        CHECK(std::abs(w.labeled[0] + w.base[0] - 1.0) <= 1e-12);
    }
}

TEST_CASE("dirichlet weights: Monte Carlo means match a_i / sum(a)") {
    // n=2, k=2, alpha=2: all four shapes equal 1.
    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    const int draws = 100000;
    for (int b = 0; b < draws; ++b) {
        const auto w = sample_dirichlet_weights(2, 2, 2.0, SeededRng(11, static_cast<std::uint64_t>(b)));
        acc += Eigen::Vector4d(w.labeled[0], w.labeled[1], w.base[0], w.base[1]);
    }
    acc /= draws;
    for (int i = 0; i < 4; ++i) CHECK(std::abs(acc[i] - 0.25) <= 0.005);

    double base = 0.0;
    for (int b = 0; b < draws; ++b) base += sample_dirichlet_weights(3, 1, 3.0, SeededRng(12, b)).base[0];
    CHECK(std::abs(base / draws - 0.5) <= 0.005);
}

TEST_CASE("dirichlet weights: means within 5 Monte Carlo SEs for small shapes") {
    // Shapes: 1 (x3) and 0.05 (x4); each weight ~ Beta(a_i, A - a_i).
    const Eigen::Index n = 3, k = 4;
    const double alpha = 0.2, total = n + alpha;
    const int draws = 100000;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n + k);
    for (int b = 0; b < draws; ++b) {
        const auto w = sample_dirichlet_weights(n, k, alpha, SeededRng(13, b));
        REQUIRE((w.labeled.array() > 0.0).all());
        REQUIRE((w.base.array() > 0.0).all());
        REQUIRE(std::abs(w.labeled.sum() + w.base.sum() - 1.0) <= 1e-12);
        acc.head(n) += w.labeled;
        acc.tail(k) += w.base;
    }
    acc /= draws;
    for (Eigen::Index i = 0; i < n + k; ++i) {
        const double a = i < n ? 1.0 : alpha / k;
        const double mean = a / total;
        const double var = a * (total - a) / (total * total * (total + 1.0));
        CHECK(std::abs(acc[i] - mean) <= 5.0 * std::sqrt(var / draws));
    }
}

TEST_CASE("dirichlet weights: tiny shapes stay on the open simplex") {
    const auto w = sample_dirichlet_weights(5, 200, 1e-3, SeededRng(14, 0));
    CHECK((w.base.array() > 0.0).all());
    CHECK(std::abs(w.labeled.sum() + w.base.sum() - 1.0) <= 1e-12);
}

TEST_CASE("dirichlet weights: parameter errors") {
    CHECK_THROWS_AS(sample_dirichlet_weights(0, 1, 1.0, SeededRng(0, 0)), ParameterError);
    CHECK_THROWS_AS(sample_dirichlet_weights(1, 0, 1.0, SeededRng(0, 0)), ParameterError);
    CHECK_THROWS_AS(sample_dirichlet_weights(1, 1, 0.0, SeededRng(0, 0)), ParameterError);
    CHECK_THROWS_AS(sample_dirichlet_weights(1, 1, -1.0, SeededRng(0, 0)), ParameterError);
}

TEST_CASE("dirichlet weights are a pure function of the stream") {
    const auto a = sample_dirichlet_weights(10, 5, 3.0, SeededRng(9, 4));
    const auto b = sample_dirichlet_weights(10, 5, 3.0, SeededRng(9, 4));
    CHECK(a.labeled == b.labeled);
    CHECK(a.base == b.base);
}

TEST_CASE("non-uniform base mass reduces to alpha/k for uniform mass in distribution") {
    Eigen::VectorXd mass(2);
    mass << 0.75, 0.25;
    double acc = 0.0;
    const int draws = 50000;
    for (int b = 0; b < draws; ++b) acc += sample_dirichlet_weights(2, mass, 2.0, SeededRng(15, b)).base[0];
    CHECK(std::abs(acc / draws - 1.5 / 4.0) < 0.005);
}

TEST_CASE("empirical measure") {
    const auto one = empirical_measure(real_sample(Eigen::VectorXd::Constant(1, 3.0)));
    CHECK(one.size() == 1);
    CHECK(one.weights()[0] == 1.0);
    const auto four = empirical_measure(real_sample(Eigen::Vector4d(1, 1, 2, 3)));
    CHECK(four.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(four.weights()[i] == 0.25);
    CHECK(std::get<RealOutcome>(four.atom(0).y).value == std::get<RealOutcome>(four.atom(1).y).value);
}

TEST_CASE("empirical measure total weight is exactly one") {
    for (int n : {1, 3, 7, 10, 49, 97, 100, 1000, 4999}) {
        const auto m = empirical_measure(real_sample(Eigen::VectorXd::LinSpaced(n, 0, 1)));
        CHECK(m.total_weight() == 1.0);
    }
}

TEST_CASE("nonparametric bootstrap") {
    const auto single = real_sample(Eigen::VectorXd::Constant(1, 4.0));
    CHECK(resample_nonparametric_bootstrap(single, SeededRng(1, 1)).outcomes() == single.outcomes());

    const Eigen::Index n = 100;
    const auto s = real_sample(Eigen::VectorXd::LinSpaced(n, 0, n - 1));
    double frac = 0.0;
    const int reps = 1000;
    for (int r = 0; r < reps; ++r) {
        const auto b = resample_nonparametric_bootstrap(s, SeededRng(2, r));
        const auto& y = b.outcomes().real_values();
        frac += static_cast<double>(std::set<double>(y.data(), y.data() + n).size()) / n;
    }
    CHECK(std::abs(frac / reps - (1.0 - std::pow(1.0 - 1.0 / n, n))) <= 0.03);

    const auto b1 = resample_nonparametric_bootstrap(s, SeededRng(3, 9));
    const auto b2 = resample_nonparametric_bootstrap(s, SeededRng(3, 9));
    CHECK(b1.outcomes() == b2.outcomes());
}

TEST_CASE("realize class labels") {
    Eigen::MatrixXd p(1, 3);
    p << 0.0, 0.0, 1.0;
    const AtomicMeasure hot = AtomicMeasure::uniform(Eigen::MatrixXd::Zero(1, 1), OutcomeColumn::probabilities(p));
    CHECK(realize_class_labels(hot, SeededRng(1, 0)).outcomes().labels()[0] == 2);

    const Eigen::Index k = 10000;
    Eigen::MatrixXd half = Eigen::MatrixXd::Constant(k, 2, 0.5);
    Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(k, 1, 2);
    const AtomicMeasure m(Eigen::MatrixXd::Zero(k, 1), OutcomeColumn::probabilities(half), w);
    const AtomicMeasure r = realize_class_labels(m, SeededRng(2, 0));
    CHECK(r.weights() == m.weights());
    CHECK(r.covariates() == m.covariates());
    const double zeros = static_cast<double>((r.outcomes().labels().array() == 0).count()) / k;
    CHECK(std::abs(zeros - 0.5) <= 0.02);

    const AtomicMeasure reals = AtomicMeasure::uniform(Eigen::MatrixXd::Zero(1, 1), OutcomeColumn::reals(Eigen::VectorXd::Zero(1)));
    CHECK_THROWS_AS(realize_class_labels(reals, SeededRng(0, 0)), TypeError);
}

TEST_CASE("expand_class_probs splits atoms into weighted class atoms") {
    Eigen::MatrixXd p(2, 2);
    p << 0.25, 0.75, 1.0, 0.0;
    const AtomicMeasure m(Eigen::MatrixXd::Zero(2, 1), OutcomeColumn::probabilities(p), Eigen::Vector2d(0.5, 0.5));
    const AtomicMeasure e = expand_class_probs(m);
    CHECK(e.size() == 4);
    CHECK(e.weights()[0] == 0.125);
    CHECK(e.weights()[1] == 0.375);
    CHECK(e.weights()[3] == 0.0);
    CHECK(e.outcomes().labels()[1] == 1);
}

TEST_CASE("atomic measure normalizes weights and rejects bad input") {
    const AtomicMeasure m(Eigen::MatrixXd::Zero(2, 1), OutcomeColumn::reals(Eigen::Vector2d(1, 2)), Eigen::Vector2d(1, 3));
    CHECK(m.weights()[0] == 0.25);
    CHECK_THROWS_AS(AtomicMeasure(Eigen::MatrixXd::Zero(1, 1), OutcomeColumn::reals(Eigen::VectorXd::Zero(1)),
                                  Eigen::VectorXd::Constant(1, -1.0)),
                    ParameterError);
    CHECK_THROWS_AS(AtomicMeasure(Eigen::MatrixXd::Zero(1, 1), OutcomeColumn::reals(Eigen::VectorXd::Zero(1)),
                                  Eigen::VectorXd::Zero(1)),
                    ParameterError);
}
