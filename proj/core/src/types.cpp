#include "driftcal/types.hpp"

#include <cmath>
#include <stdexcept>

namespace driftcal {

namespace {

void check_shape(std::size_t rows, std::size_t classes, std::size_t size) {
    if (rows < 1) throw std::invalid_argument("matrix needs at least one row");
    if (classes < 2) throw std::invalid_argument("matrix needs at least two classes");
    if (size != rows * classes) throw std::invalid_argument("matrix data size mismatch");
}

}  // namespace

LogitMatrix::LogitMatrix(std::size_t rows, std::size_t classes)
    : rows_(rows), classes_(classes), data_(rows * classes, 0.0) {
    check_shape(rows, classes, data_.size());
}

LogitMatrix LogitMatrix::from_data(std::size_t rows, std::size_t classes,
                                   std::vector<double> data) {
    check_shape(rows, classes, data.size());
    for (double v : data) {
        if (!std::isfinite(v)) throw std::invalid_argument("logit matrix has non-finite entry");
    }
    LogitMatrix m;
    m.rows_ = rows;
    m.classes_ = classes;
    m.data_ = std::move(data);
    return m;
}

ProbMatrix ProbMatrix::from_rows(std::size_t rows, std::size_t classes,
                                 std::vector<double> data) {
    check_shape(rows, classes, data.size());
    for (std::size_t i = 0; i < rows; ++i) {
        double* row = data.data() + i * classes;
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            double v = row[c];
            if (!(v >= 0.0 && v <= 1.0 + 1e-12)) {
                throw std::invalid_argument("probability entry outside [0,1]");
            }
            sum += v;
        }
        double drift = std::abs(sum - 1.0);
        if (drift > 1e-6) throw std::invalid_argument("probability row does not sum to 1");
        if (drift > 1e-9) {
            for (std::size_t c = 0; c < classes; ++c) row[c] /= sum;
        }
    }
    ProbMatrix m;
    m.rows_ = rows;
    m.classes_ = classes;
    m.data_ = std::move(data);
    return m;
}

std::size_t argmax_row(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
        if (row[c] > row[best]) best = c;
    }
    return best;
}

ProbMatrix softmax(const LogitMatrix& logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("softmax temperature must be positive");
    }
    std::vector<double> out(logits.rows() * logits.classes());
    const std::size_t c = logits.classes();
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto in = logits.row(i);
        double* row = out.data() + i * c;
        double mx = in[0];
        for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, in[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            row[k] = std::exp((in[k] - mx) / temperature);
            sum += row[k];
        }
        for (std::size_t k = 0; k < c; ++k) row[k] /= sum;
    }
    return ProbMatrix::from_rows(logits.rows(), logits.classes(), std::move(out));
}

double shannon_entropy(std::span<const double> row) {
    double sum = 0.0;
    for (double v : row) {
        if (v < 0.0) throw std::invalid_argument("entropy of a negative probability");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("entropy row does not sum to 1");
    }
    double h = 0.0;
    for (double v : row) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h < 0.0 ? 0.0 : h;
}

std::vector<PredictionRecord> make_records(const ProbMatrix& probs,
                                           const std::vector<int>& labels) {
    if (labels.size() != probs.rows()) {
        throw std::invalid_argument("label count does not match probability rows");
    }
    std::vector<PredictionRecord> records(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        auto row = probs.row(i);
        std::size_t pred = argmax_row(row);
        records[i].predicted = static_cast<int>(pred);
        records[i].confidence = row[pred];
        records[i].label = labels[i];
        records[i].correct = static_cast<int>(pred) == labels[i];
    }
    return records;
}

}  // namespace driftcal
