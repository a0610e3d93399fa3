#ifndef IPFN_PARAMS_HPP
#define IPFN_PARAMS_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ipfn/error.hpp"

namespace ipfn {

// One named trainable array inside a network.
template <typename Scalar>
struct ParamRef {
    std::string name;
    std::vector<int> shape;
    std::span<Scalar> values;
};

// Flat, named, ordered view over all trainable arrays of one network. The
// view does not own storage; it is rebuilt from the network whenever needed.
template <typename Scalar>
class ParamVector {
public:
    void add(std::string name, std::vector<int> shape, std::span<Scalar> values) {
        refs_.push_back({std::move(name), std::move(shape), values});
    }

    const std::vector<ParamRef<Scalar>>& refs() const { return refs_; }
    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& r : refs_) n += r.values.size();
        return n;
    }

    std::vector<Scalar> flatten() const {
        std::vector<Scalar> out;
        out.reserve(size());
        for (const auto& r : refs_) out.insert(out.end(), r.values.begin(), r.values.end());
        return out;
    }

    void unflatten(std::span<const Scalar> flat) {
        if (flat.size() != size()) throw UsageError("unflatten: size mismatch");
        std::size_t off = 0;
        for (auto& r : refs_) {
            std::copy_n(flat.begin() + off, r.values.size(), r.values.begin());
            off += r.values.size();
        }
    }

    // Scalar at a flat position, for finite-difference probes.
    Scalar& at(std::size_t flat) {
        for (auto& r : refs_) {
            if (flat < r.values.size()) return r.values[flat];
            flat -= r.values.size();
        }
        throw UsageError("ParamVector index out of range");
    }

private:
    std::vector<ParamRef<Scalar>> refs_;
};

}  // namespace ipfn

#endif
