#ifndef IPFN_GENERATOR_HPP
#define IPFN_GENERATOR_HPP

#include <cmath>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "ipfn/error.hpp"
#include "ipfn/params.hpp"
#include "ipfn/rng.hpp"
#include "ipfn/tensor.hpp"

namespace ipfn {

// Pointwise MLP: affine layers with ReLU in between and a sigmoid head.
template <typename Scalar>
struct GeneratorParams {
    std::vector<int> widths;            // input, hidden..., output
    std::vector<Mat<Scalar>> weights;   // out x in
    std::vector<Vec<Scalar>> biases;

    int layer_count() const { return static_cast<int>(weights.size()); }
    int input_width() const { return widths.front(); }
    int output_width() const { return widths.back(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
        return n;
    }

    ParamVector<Scalar> view() {
        ParamVector<Scalar> pv;
        for (int l = 0; l < layer_count(); ++l) {
            auto& w = weights[l];
            auto& b = biases[l];
            pv.add("gen.l" + std::to_string(l) + ".weight", {static_cast<int>(w.rows()), static_cast<int>(w.cols())},
                   {w.data(), static_cast<std::size_t>(w.size())});
            pv.add("gen.l" + std::to_string(l) + ".bias", {static_cast<int>(b.size())},
                   {b.data(), static_cast<std::size_t>(b.size())});
        }
        return pv;
    }

    static GeneratorParams zeros_like(const GeneratorParams& o) {
        GeneratorParams g;
        g.widths = o.widths;
        for (int l = 0; l < o.layer_count(); ++l) {
            g.weights.push_back(Mat<Scalar>::Zero(o.weights[l].rows(), o.weights[l].cols()));
            g.biases.push_back(Vec<Scalar>::Zero(o.biases[l].size()));
        }
        return g;
    }
};

// widths = {input, hidden, ..., hidden, output}; layer count = widths.size()-1.
inline std::vector<int> generator_widths(int input_width, int hidden, int layers, int output_width) {
    if (layers < 1) throw ConfigError("generator needs at least one layer");
    std::vector<int> w{input_width};
    for (int l = 0; l < layers - 1; ++l) w.push_back(hidden);
    w.push_back(output_width);
    return w;
}

// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
template <typename Scalar>
GeneratorParams<Scalar> init_generator(Rng& rng, const std::vector<int>& widths) {
    if (widths.size() < 2) throw ConfigError("generator widths need input and output");
    for (int w : widths)
        if (w <= 0) throw ConfigError("generator widths must be positive");
    GeneratorParams<Scalar> p;
    p.widths = widths;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int in = widths[l], out = widths[l + 1];
        const double bound = std::sqrt(6.0 / in);
        Mat<Scalar> w(out, in);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
        p.weights.push_back(std::move(w));
        p.biases.push_back(Vec<Scalar>::Zero(out));
    }
    return p;
}

// Activations recorded by a forward pass for the reverse pass.
template <typename Scalar>
struct GeneratorTrace {
    bool recorded = false;
    std::vector<Mat<Scalar>> activations;  // layer inputs: x, relu(z_1), ..., relu(z_{L-1})
    Mat<Scalar> output;                    // sigmoid(z_L)
};

template <typename Scalar>
Mat<Scalar> generator_forward_raw(const GeneratorParams<Scalar>& p, std::type_identity_t<Mat<Scalar>> x,
                                  std::type_identity_t<GeneratorTrace<Scalar>>* trace, bool apply_sigmoid = true) {
    if (x.cols() != p.input_width())
        throw ConfigError("generator: input width " + std::to_string(x.cols()) + " != " +
                          std::to_string(p.input_width()));
    if (trace) {
        trace->activations.clear();
        trace->recorded = true;
    }
    for (int l = 0; l < p.layer_count(); ++l) {
        Mat<Scalar> z(x.rows(), p.weights[l].rows());
        z.noalias() = x * p.weights[l].transpose();
        z.rowwise() += p.biases[l].transpose();
        if (trace) trace->activations.push_back(std::move(x));
        if (l + 1 < p.layer_count()) {
            x = z.cwiseMax(Scalar(0));
        } else if (apply_sigmoid) {
            x = z.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
        } else {
            x = std::move(z);
        }
    }
    if (trace) trace->output = x;
    return x;
}

// Concatenate [encoded | latents | guidance] and evaluate the MLP.
template <typename Scalar>
Mat<Scalar> assemble_generator_input(const Mat<Scalar>& encoded, const Mat<Scalar>& latents,
                                     const Mat<Scalar>* guidance) {
    const Eigen::Index m = encoded.rows();
    if (latents.rows() != m || (guidance && guidance->rows() != m))
        throw ConfigError("generator: input row counts differ");
    const Eigen::Index gw = guidance ? guidance->cols() : 0;
    Mat<Scalar> x(m, encoded.cols() + latents.cols() + gw);
    x.leftCols(encoded.cols()) = encoded;
    x.middleCols(encoded.cols(), latents.cols()) = latents;
    if (guidance) x.rightCols(gw) = *guidance;
    return x;
}

template <typename Scalar>
Mat<Scalar> generator_forward(const GeneratorParams<Scalar>& p, const std::type_identity_t<Mat<Scalar>>& encoded,
                              const std::type_identity_t<Mat<Scalar>>& latents,
                              const std::type_identity_t<Mat<Scalar>>* guidance = nullptr,
                              std::type_identity_t<GeneratorTrace<Scalar>>* trace = nullptr) {
    return generator_forward_raw(p, assemble_generator_input(encoded, latents, guidance), trace);
}

// Reverse pass. Accumulates parameter gradients into `grads` (shaped like p)
// and returns the gradient with respect to the generator input.
template <typename Scalar>
Mat<Scalar> generator_backward(const GeneratorParams<Scalar>& p, const std::type_identity_t<GeneratorTrace<Scalar>>& trace,
                               const std::type_identity_t<Mat<Scalar>>& d_output,
                               std::type_identity_t<GeneratorParams<Scalar>>* grads) {
    if (!trace.recorded || static_cast<int>(trace.activations.size()) != p.layer_count())
        throw UsageError("generator_backward: no forward trace recorded");
    if (d_output.rows() != trace.output.rows() || d_output.cols() != trace.output.cols())
        throw ConfigError("generator_backward: upstream gradient shape mismatch");
    const auto& y = trace.output;
    Mat<Scalar> dz = d_output.cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix()));
    for (int l = p.layer_count() - 1; l >= 0; --l) {
        const auto& a = trace.activations[l];
        if (grads) {
            grads->weights[l].noalias() += dz.transpose() * a;
            grads->biases[l].noalias() += dz.colwise().sum().transpose();
        }
        Mat<Scalar> da(dz.rows(), p.weights[l].cols());
        da.noalias() = dz * p.weights[l];
        if (l == 0) return da;
        dz = da.cwiseProduct((a.array() > Scalar(0)).template cast<Scalar>().matrix());
    }
    return {};
}

}  // namespace ipfn

#endif
