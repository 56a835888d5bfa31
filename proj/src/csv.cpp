#include "rai/harness.hpp"

#include "rai/detail/text.hpp"
#include "rai/error.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace rai {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// Column roles recognized in a header.
struct Layout {
    std::vector<std::size_t> x;  // position of x1..xd
    std::optional<std::size_t> y, y_class, yhat;
    std::vector<std::size_t> p;  // position of p1..pC
    std::size_t width = 0;
};

// Parses "<prefix><k>" with k a positive integer.
std::optional<std::size_t> indexed(const std::string& name, char prefix) {
    if (name.size() < 2 || name[0] != prefix) return std::nullopt;
    std::size_t k = 0;
    for (std::size_t i = 1; i < name.size(); ++i) {
        if (name[i] < '0' || name[i] > '9') return std::nullopt;
        k = k * 10 + static_cast<std::size_t>(name[i] - '0');
    }
    if (k == 0 || name[1] == '0') return std::nullopt;
    return k;
}

void place(std::vector<std::size_t>& slots, std::vector<bool>& seen, std::size_t k, std::size_t pos,
           const std::string& name) {
    if (slots.size() < k) {
        slots.resize(k);
        seen.resize(k, false);
    }
    if (seen[k - 1]) throw IngestionError("duplicate column '" + name + "'", 1);
    seen[k - 1] = true;
    slots[k - 1] = pos;
}

Layout read_header(const std::string& line) {
    Layout l;
    const auto names = split_fields(line);
    l.width = names.size();
    std::vector<bool> seen_x, seen_p;
    auto single = [&](std::optional<std::size_t>& slot, std::size_t pos, const std::string& name) {
        if (slot) throw IngestionError("duplicate column '" + name + "'", 1);
        slot = pos;
    };
    for (std::size_t pos = 0; pos < names.size(); ++pos) {
        const std::string name = trim(names[pos]);
        if (name == "y") single(l.y, pos, name);
        else if (name == "y_class") single(l.y_class, pos, name);
        else if (name == "yhat") single(l.yhat, pos, name);
        else if (auto k = indexed(name, 'x')) place(l.x, seen_x, *k, pos, name);
        else if (auto k = indexed(name, 'p')) place(l.p, seen_p, *k, pos, name);
        else throw IngestionError("unrecognized column '" + name + "'", 1);
    }
    for (std::size_t k = 0; k < seen_x.size(); ++k)
        if (!seen_x[k]) throw IngestionError("missing column 'x" + std::to_string(k + 1) + "'", 1);
    for (std::size_t k = 0; k < seen_p.size(); ++k)
        if (!seen_p[k]) throw IngestionError("missing column 'p" + std::to_string(k + 1) + "'", 1);
    if (l.yhat && !l.p.empty()) throw IngestionError("both yhat and probability columns present", 1);
    if (l.p.size() == 1) throw IngestionError("probability columns need at least p1 and p2", 1);
    return l;
}

struct Table {
    Layout layout;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> line_numbers;
};

Table read_table(std::istream& in) {
    Table t;
    std::string line;
    std::size_t number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (trim(line).empty()) continue;
        if (!have_header) {
            if (number != 1) throw IngestionError("header must be the first line", number);
            t.layout = read_header(line);
            have_header = true;
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != t.layout.width)
            throw IngestionError("expected " + std::to_string(t.layout.width) + " fields, found " +
                                     std::to_string(fields.size()),
                                 number);
        std::vector<double> row(fields.size());
        for (std::size_t j = 0; j < fields.size(); ++j) {
            const auto v = detail::parse_double(fields[j]);
            if (!v || !std::isfinite(*v))
                throw IngestionError("cell " + std::to_string(j + 1) + " is not a finite number: '" + trim(fields[j]) +
                                         "'",
                                     number);
            row[j] = *v;
        }
        t.rows.push_back(std::move(row));
        t.line_numbers.push_back(number);
    }
    if (!have_header) throw IngestionError("empty file: missing header", 1);
    if (t.rows.empty()) throw IngestionError("no data rows", 0);
    return t;
}

Eigen::MatrixXd covariates_of(const Table& t) {
    Eigen::MatrixXd x(static_cast<Index>(t.rows.size()), static_cast<Index>(t.layout.x.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t k = 0; k < t.layout.x.size(); ++k) x(i, k) = t.rows[i][t.layout.x[k]];
    return x;
}

OutcomeColumn probability_column(const Table& t) {
    const auto c = static_cast<Index>(t.layout.p.size());
    Eigen::MatrixXd p(static_cast<Index>(t.rows.size()), c);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        double sum = 0.0;
        for (Index k = 0; k < c; ++k) {
            p(i, k) = t.rows[i][t.layout.p[k]];
            if (p(i, k) < 0.0) throw IngestionError("negative class probability", t.line_numbers[i]);
            sum += p(i, k);
        }
        if (!(sum > 0.0)) throw IngestionError("class probabilities sum to zero", t.line_numbers[i]);
    }
    return OutcomeColumn::probabilities(normalize_probability_rows(std::move(p)));
}

std::optional<OutcomeColumn> imputation_column(const Table& t) {
    if (t.layout.yhat) {
        Eigen::VectorXd v(static_cast<Index>(t.rows.size()));
        for (std::size_t i = 0; i < t.rows.size(); ++i) v[i] = t.rows[i][*t.layout.yhat];
        return OutcomeColumn::reals(std::move(v));
    }
    if (!t.layout.p.empty()) return probability_column(t);
    return std::nullopt;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open '" + path + "'", 0);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParameterError("cannot write '" + path + "'");
    return out;
}

void write_header_x(std::ostream& out, Index d) {
    for (Index k = 0; k < d; ++k) out << (k ? "," : "") << 'x' << k + 1;
}

void write_outcome_header(std::ostream& out, const OutcomeColumn& c, bool imputed, bool leading_comma) {
    const char* sep = leading_comma ? "," : "";
    switch (c.kind()) {
        case OutcomeKind::Real: out << sep << (imputed ? "yhat" : "y"); break;
        case OutcomeKind::Class: out << sep << "y_class"; break;
        case OutcomeKind::ClassProbs:
            for (int k = 0; k < c.num_classes(); ++k) out << (k || leading_comma ? "," : "") << 'p' << k + 1;
            break;
    }
}

void write_outcome_cells(std::ostream& out, const OutcomeColumn& c, Index i, bool leading_comma) {
    const char* sep = leading_comma ? "," : "";
    switch (c.kind()) {
        case OutcomeKind::Real: out << sep << detail::format_double(c.real_values()[i]); break;
        case OutcomeKind::Class: out << sep << c.labels()[i]; break;
        case OutcomeKind::ClassProbs:
            for (int k = 0; k < c.num_classes(); ++k)
                out << (k || leading_comma ? "," : "") << detail::format_double(c.probs()(i, k));
            break;
    }
}

void write_x_cells(std::ostream& out, const Eigen::MatrixXd& x, Index i) {
    for (Index k = 0; k < x.cols(); ++k) out << (k ? "," : "") << detail::format_double(x(i, k));
}

}  // namespace

LabeledSample parse_labeled_csv(std::istream& in, std::optional<int> num_classes) {
    const Table t = read_table(in);
    const Layout& l = t.layout;
    if (l.y && l.y_class) throw IngestionError("both y and y_class columns present", 1);
    if (!l.y && !l.y_class) throw IngestionError("missing outcome column (y or y_class)", 1);
    if (num_classes && *num_classes < 2) throw ParameterError("declared class count must be at least 2");
    const auto n = static_cast<Index>(t.rows.size());
    std::optional<OutcomeColumn> imputed = imputation_column(t);

    if (l.y) {
        if (!l.p.empty()) throw IngestionError("real outcome y paired with class probability columns", 1);
        Eigen::VectorXd y(n);
        for (Index i = 0; i < n; ++i) y[i] = t.rows[i][*l.y];
        return LabeledSample(covariates_of(t), OutcomeColumn::reals(std::move(y)), std::move(imputed));
    }
    if (l.yhat) throw IngestionError("class outcome y_class paired with a real yhat column", 1);
    Eigen::VectorXi labels(n);
    int largest = 0;
    for (Index i = 0; i < n; ++i) {
        const double v = t.rows[i][*l.y_class];
        if (v != std::floor(v) || v < 0.0 || v > 1e6)
            throw IngestionError("y_class must be a nonnegative integer", t.line_numbers[i]);
        labels[i] = static_cast<int>(v);
        largest = std::max(largest, labels[i]);
    }
    int classes = num_classes.value_or(l.p.empty() ? std::max(2, largest + 1) : static_cast<int>(l.p.size()));
    if (!l.p.empty() && static_cast<int>(l.p.size()) != classes)
        throw IngestionError("probability columns do not match the declared class count", 1);
    for (Index i = 0; i < n; ++i)
        if (labels[i] >= classes)
            throw IngestionError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")",
                                 t.line_numbers[i]);
    return LabeledSample(covariates_of(t), OutcomeColumn::classes(std::move(labels), classes), std::move(imputed));
}

LabeledSample load_labeled_csv(const std::string& path, std::optional<int> num_classes) {
    auto in = open_input(path);
    return parse_labeled_csv(in, num_classes);
}

AtomicMeasure parse_base_csv(std::istream& in) {
    const Table t = read_table(in);
    if (t.layout.y || t.layout.y_class) throw IngestionError("base file must not contain true outcomes", 1);
    std::optional<OutcomeColumn> imputed = imputation_column(t);
    if (!imputed) throw IngestionError("missing imputation column (yhat or p1..pC)", 1);
    return AtomicMeasure::uniform(covariates_of(t), std::move(*imputed));
}

AtomicMeasure load_base_csv(const std::string& path) {
    auto in = open_input(path);
    return parse_base_csv(in);
}

void write_labeled_csv(std::ostream& out, const LabeledSample& s) {
    write_header_x(out, s.dim());
    write_outcome_header(out, s.outcomes(), false, s.dim() > 0);
    if (s.imputed()) write_outcome_header(out, *s.imputed(), true, true);
    out << '\n';
    for (Index i = 0; i < s.size(); ++i) {
        write_x_cells(out, s.covariates(), i);
        write_outcome_cells(out, s.outcomes(), i, s.dim() > 0);
        if (s.imputed()) write_outcome_cells(out, *s.imputed(), i, true);
        out << '\n';
    }
}

void write_base_csv(std::ostream& out, const AtomicMeasure& base) {
    if (base.outcomes().kind() == OutcomeKind::Class)
        throw TypeError("base measures with realized class labels have no CSV form");
    write_header_x(out, base.dim());
    write_outcome_header(out, base.outcomes(), true, base.dim() > 0);
    out << '\n';
    for (Index i = 0; i < base.size(); ++i) {
        write_x_cells(out, base.covariates(), i);
        write_outcome_cells(out, base.outcomes(), i, base.dim() > 0);
        out << '\n';
    }
}

void write_labeled_csv(const std::string& path, const LabeledSample& sample) {
    auto out = open_output(path);
    write_labeled_csv(out, sample);
}

void write_base_csv(const std::string& path, const AtomicMeasure& base) {
    auto out = open_output(path);
    write_base_csv(out, base);
}

}  // namespace rai
