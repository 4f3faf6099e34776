#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace driftcal {

// One pre-tokenized snippet. `tokens` is the context the classifier sees,
// `target` the class to predict (a vocabulary index). Metadata drives the
// shift-split construction.
struct TokenSequence {
    std::vector<int> tokens;
    std::int64_t timestamp = 0;
    std::string project;
    std::string author;
    int target = 0;
    std::string id;
};

// Dense N x C matrix of raw scores. Rows are samples.
class LogitMatrix {
public:
    LogitMatrix() = default;
    LogitMatrix(std::size_t rows, std::size_t classes);

    // Validates finiteness and shape (C >= 2, N >= 1).
    static LogitMatrix from_data(std::size_t rows, std::size_t classes,
                                 std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t classes() const { return classes_; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * classes_, classes_}; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * classes_, classes_};
    }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t classes_ = 0;
    std::vector<double> data_;
};

// Dense N x C matrix of class probabilities. Every row sums to 1 within
// 1e-9; construction renormalizes rows whose sum drifts by up to 1e-6 and
// rejects anything worse.
class ProbMatrix {
public:
    ProbMatrix() = default;

    static ProbMatrix from_rows(std::size_t rows, std::size_t classes,
                                std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t classes() const { return classes_; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * classes_, classes_}; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * classes_, classes_};
    }
    const std::vector<double>& data() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t classes_ = 0;
    std::vector<double> data_;
};

// Per-sample outcome of a calibrated prediction.
struct PredictionRecord {
    int predicted = 0;       // argmax of the calibrated row
    double confidence = 0;   // row maximum
    int label = 0;
    double uncertainty = 0;  // filled by the estimation stage
    bool correct = false;
};

// Index of the row maximum; ties resolve to the lowest class index.
std::size_t argmax_row(std::span<const double> row);

// Row-stochastic softmax of logits / temperature, computed with
// max-subtraction so large logits cannot overflow. The per-row argmax is
// unchanged for any temperature > 0.
ProbMatrix softmax(const LogitMatrix& logits, double temperature);

// Natural-log entropy of a probability row; 0 log 0 counts as 0.
// Throws std::invalid_argument on negative entries or rows that do not
// sum to 1 within 1e-6.
double shannon_entropy(std::span<const double> row);

// Builds one record per row from calibrated probabilities and gold labels.
std::vector<PredictionRecord> make_records(const ProbMatrix& probs,
                                           const std::vector<int>& labels);

}  // namespace driftcal
