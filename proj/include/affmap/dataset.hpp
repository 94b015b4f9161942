#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace affmap {

// Dense row-major feature storage. Rows are float32: pose sweeps produce
// hundreds of thousands of 1030-dim vectors, and the solvers accumulate in
// double regardless.
class FeatureMatrix {
  public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    std::span<const float> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }
    std::span<float> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

    void set_row(std::size_t i, std::span<const double> values) {
        float* r = data_.data() + i * cols_;
        for (std::size_t j = 0; j < cols_; ++j) r[j] = static_cast<float>(values[j]);
    }

    void append_row(std::span<const float> values) {
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }
    void set_rows(std::size_t rows) { rows_ = rows; }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

// Canonical inner product: index-order accumulation in double. Every score
// computed anywhere in the repo goes through this, so independently computed
// objectives agree bit for bit.
inline double dot(std::span<const double> w, std::span<const float> x) {
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * static_cast<double>(x[j]);
    return acc;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
    return acc;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j)
        acc += static_cast<double>(a[j]) * static_cast<double>(b[j]);
    return acc;
}

// Pose-level binary classification data; labels are +1 / -1.
struct BinaryDataset {
    FeatureMatrix x;
    std::vector<std::int8_t> y;

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return x.cols(); }
    std::size_t positives() const;
    std::size_t negatives() const;
    BinaryDataset subset(const std::vector<std::size_t>& indices) const;
};

}  // namespace affmap
