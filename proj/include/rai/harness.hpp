#pragma once

#include "rai/diagnostics.hpp"
#include "rai/losses.hpp"
#include "rai/measures.hpp"
#include "rai/posterior.hpp"
#include "rai/rectifiers.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rai {

// ---- synthetic scenarios ----------------------------------------------------

enum class ScenarioKind { GaussianShift, MonotoneDistortion, HeteroscedasticLinear, CategoricalMiscalibrated };

const char* to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(const std::string& name);

// gaussian-shift:        y ~ N(0,1), yhat = y + shift + noise e
// monotone-distortion:   y ~ N(0,1), yhat = shift + sinh(distortion y) / distortion + noise e
// heteroscedastic-linear: y = t0 + x't1 + noise (0.5 + |x_1|) e,
//                         yhat = t0 + shift + (1 + distortion) x't1
// categorical-miscalibrated: P(y = c | x) = softmax(2 x'u_c), u_c spread on the
//                         unit circle; AI probabilities softmax(temperature * logits
//                         + shift e_0), i.e. sharpened and tilted toward class 0.
// Covariates are iid N(0,1); for the first two kinds they are independent of y.
struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::GaussianShift;
    Index n = 500;
    Index n_unlabeled = 2000;
    Index n_test = 0;
    Index covariate_dim = 1;
    double noise = 0.5;
    double shift = 1.0;
    double distortion = 1.0;
    double temperature = 2.0;
    int num_classes = 3;
    Eigen::VectorXd theta_star;  // heteroscedastic-linear (intercept first); empty = (2, -1, 0, ...)
    LossSpec target = MeanLoss{};
    std::uint64_t seed = 0;
};

void validate(const ScenarioSpec& spec);

struct Scenario {
    LabeledSample labeled;  // carries the AI imputations of its rows
    AtomicMeasure base;     // unlabeled covariates with imputed outcomes
    std::optional<Theta> theta0;  // absent when the target has no closed form for this law
    std::optional<LabeledSample> test;
};

Scenario generate_scenario(const ScenarioSpec& spec);

// ---- CSV ingestion ----------------------------------------------------------

// Header x1..xd plus y (real) or y_class (integer label), and optionally the
// AI imputation of each row as yhat or p1..pC. Labels must lie below
// num_classes when it is given; otherwise the class count comes from the
// p-columns or the largest label.
LabeledSample parse_labeled_csv(std::istream& in, std::optional<int> num_classes = std::nullopt);
LabeledSample load_labeled_csv(const std::string& path, std::optional<int> num_classes = std::nullopt);
// Header x1..xd plus yhat or p1..pC; uniform weights.
AtomicMeasure parse_base_csv(std::istream& in);
AtomicMeasure load_base_csv(const std::string& path);

void write_labeled_csv(std::ostream& out, const LabeledSample& sample);
void write_base_csv(std::ostream& out, const AtomicMeasure& base);
void write_labeled_csv(const std::string& path, const LabeledSample& sample);
void write_base_csv(const std::string& path, const AtomicMeasure& base);

// ---- replication benchmark --------------------------------------------------

inline const std::vector<std::string> kBenchMethods = {"classical", "bayes-bootstrap", "raw", "rectified"};

struct RunConfig {
    std::optional<std::string> labeled_path;
    std::optional<std::string> base_path;
    std::optional<ScenarioSpec> scenario;
    std::optional<int> num_classes;
    LossSpec loss = MeanLoss{};
    RectifierSpec rectifier = QuantileMapRectifier{};
    CalibrationStrategy strategy = NpbCalibration{};
    double gamma = 1.0;
    int draws = 500;
    double level = 0.9;
    int replications = 100;
    std::uint64_t seed = 0;
    unsigned threads = 1;  // 0 = auto
    std::string output;
    Index subset = 0;      // data mode: labeled rows drawn per replication (0 = whole pool)
    Index coordinate = 0;  // theta coordinate reported in bench records
    std::vector<std::string> methods;  // empty = every method the loss supports
};

void validate(const RunConfig& config);

std::vector<BenchRecord> run_bench(const RunConfig& config);

std::string format_bench_table(const std::vector<BenchRecord>& records);
std::string format_bench_summary(const std::vector<MethodSummary>& summaries);

}  // namespace rai
