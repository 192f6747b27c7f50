#pragma once
#include <cstddef>
#include <vector>

namespace divgen {

// Dense row-major matrix of doubles. Small and boring on purpose; every
// numeric path in the trainer and metrics runs at 64-bit precision.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0)
        : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

    double& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

} // namespace divgen
