#ifndef IPFN_TENSOR_HPP
#define IPFN_TENSOR_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ipfn/error.hpp"

namespace ipfn {

// Row-major dynamic matrix. Point batches are stored one point per row with
// features along the columns, so a batch of patches in N x spatial x C order
// is a contiguous channels-last buffer.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline std::size_t volume(const std::vector<int>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

inline std::string dims_to_string(const std::vector<int>& dims) {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(dims[i]);
    }
    return s;
}

// Batch of N patches sharing spatial dims, channels innermost.
template <typename Scalar>
struct PatchBatch {
    int count = 0;
    std::vector<int> spatial;
    int channels = 0;
    Mat<Scalar> data;  // (count * volume(spatial)) x channels

    PatchBatch() = default;
    PatchBatch(int n, std::vector<int> dims, int c)
        : count(n), spatial(std::move(dims)), channels(c),
          data(Mat<Scalar>::Zero(static_cast<Eigen::Index>(n * volume(spatial)), c)) {}

    std::size_t points_per_patch() const { return volume(spatial); }
    Scalar* patch_ptr(int i) { return data.data() + static_cast<std::size_t>(i) * points_per_patch() * channels; }
    const Scalar* patch_ptr(int i) const {
        return data.data() + static_cast<std::size_t>(i) * points_per_patch() * channels;
    }
};

template <typename Scalar>
bool all_finite(const Mat<Scalar>& m) {
    return m.allFinite();
}

// Row-major flat index for multi-dimensional position.
inline std::size_t flat_index(const std::vector<int>& dims, const std::vector<int>& pos) {
    std::size_t idx = 0;
    for (std::size_t a = 0; a < dims.size(); ++a) idx = idx * static_cast<std::size_t>(dims[a]) + pos[a];
    return idx;
}

// Visit every multi-index of dims in row-major order.
inline void for_each_index(const std::vector<int>& dims, const std::function<void(const std::vector<int>&)>& fn) {
    const std::size_t n = volume(dims);
    std::vector<int> pos(dims.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        fn(pos);
        for (int a = static_cast<int>(dims.size()) - 1; a >= 0; --a) {
            if (++pos[a] < dims[a]) break;
            pos[a] = 0;
        }
    }
}

}  // namespace ipfn

#endif
