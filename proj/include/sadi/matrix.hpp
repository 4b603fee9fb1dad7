#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace sadi {

/// Dense row-major matrix of per-head values: rows are attention heads,
/// columns are visual tokens.
template <typename T>
class matrix {
public:
    matrix() = default;

    matrix(int rows, int cols, T fill = T(0)) : rows_(rows), cols_(cols) {
        if (rows < 1 || cols < 1) {
            throw std::invalid_argument("matrix: dimensions must be positive, got " +
                                        std::to_string(rows) + "x" + std::to_string(cols));
        }
        data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
    }

    static matrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
        if (rows.size() == 0 || rows.begin()->size() == 0) {
            throw std::invalid_argument("matrix: empty row list");
        }
        matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
        int r = 0;
        for (const auto& row : rows) {
            if (static_cast<int>(row.size()) != m.cols_) {
                throw std::invalid_argument("matrix: ragged row " + std::to_string(r));
            }
            int c = 0;
            for (T v : row) m(r, c++) = v;
            ++r;
        }
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    T* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
    const T* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool same_shape(const matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const matrix&, const matrix&) = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

/// Rejects NaN/Inf entries, naming the offending head and token.
template <typename T>
void require_finite(const matrix<T>& logits, const char* what) {
    for (int h = 0; h < logits.rows(); ++h) {
        const T* row = logits.row(h);
        for (int m = 0; m < logits.cols(); ++m) {
            if (!std::isfinite(row[m])) {
                throw std::invalid_argument(std::string(what) + ": non-finite logit at head " +
                                            std::to_string(h) + ", token " + std::to_string(m));
            }
        }
    }
}

}  // namespace sadi
