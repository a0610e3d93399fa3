#ifndef IPFN_MODEL_HPP
#define IPFN_MODEL_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipfn/data.hpp"
#include "ipfn/fieldmath.hpp"
#include "ipfn/generator.hpp"
#include "ipfn/rng.hpp"
#include "ipfn/tensor.hpp"

namespace ipfn {

// Everything needed to rebuild the generator side of a trained model.
struct ModelArch {
    int k = 2;
    int channels = 3;
    int bandwidth_i = 5;
    int latent_dim = 5;
    std::vector<int> latent_grid{5, 5};
    double latent_sigma = 0.5;
    int hidden_width = 128;
    int layers = 10;
    GuidanceKind guidance = GuidanceKind::none;
    bool trainable_latent = false;

    EncoderConfig encoder() const { return {bandwidth_i, k}; }
    int guidance_width() const { return guidance == GuidanceKind::none ? 0 : 1; }
    int input_width() const { return encoder().out_dim() + latent_dim + guidance_width(); }
    std::vector<int> widths() const { return generator_widths(input_width(), hidden_width, layers, channels); }

    void validate() const {
        if (k != 2 && k != 3) throw ConfigError("k must be 2 or 3");
        if (channels < 1) throw ConfigError("channel count must be positive");
        if (bandwidth_i < 0) throw ConfigError("bandwidth must be nonnegative");
        if (latent_dim < 1) throw ConfigError("latent dim must be positive");
        if (static_cast<int>(latent_grid.size()) != k) throw ConfigError("latent grid needs k entries");
        for (int g : latent_grid)
            if (g < 2) throw ConfigError("latent grid needs at least 2 corners per axis");
        if (!(latent_sigma > 0.0)) throw ConfigError("latent sigma must be positive");
        if (hidden_width < 1 || layers < 1) throw ConfigError("generator widths must be positive");
    }
};

// Mapping from output sample index to field coordinates. One pixel/voxel is
// `pixel_step` coordinate units apart after scaling by s.
struct CoordMapping {
    double scale_s = 4.0;
    double spacing = 1.0 / 128.0;  // pre-scale step per sample

    double pixel_step() const { return scale_s * spacing; }
    // Encoding period 2/a expressed in samples.
    double period_in_samples(double period) const { return period / pixel_step(); }
};

template <typename Scalar>
struct Model {
    ModelArch arch;
    CoordMapping mapping;
    GeneratorParams<Scalar> generator;
    PeriodVector<Scalar> period;
    LatentFieldSpec<Scalar> latent;  // grid values are trained only when arch.trainable_latent
    // Output units and guidance statistics of the training exemplar.
    double value_offset = 0.0;
    double value_scale = 1.0;
    ExemplarKind kind = ExemplarKind::image2d;
    double guidance_mean = 0.0, guidance_min = 0.0, guidance_max = 0.0;
    std::vector<int> train_patch;

    // Latent spec scaled to the current period (one cell per period 2/a).
    LatentFieldSpec<Scalar> scaled_latent(const LatentFieldSpec<Scalar>& values, double extent = 1.0) const {
        return scale_latent_grid(values, period, extent);
    }
};

template <typename Scalar>
Model<Scalar> init_model(const ModelArch& arch, const CoordMapping& mapping, const std::vector<double>& a_init,
                         bool period_trainable, Rng& rng) {
    arch.validate();
    Model<Scalar> m;
    m.arch = arch;
    m.mapping = mapping;
    m.generator = init_generator<Scalar>(rng, arch.widths());
    m.period = PeriodVector<Scalar>::from_a(a_init, period_trainable);
    if (m.period.k() != arch.k) throw ConfigError("period init needs k entries");
    m.latent = make_latent_field<Scalar>(arch.latent_grid, arch.latent_dim, arch.latent_sigma);
    if (arch.trainable_latent) fill_gaussian(m.latent, rng);
    return m;
}

// Evaluates the field at arbitrary coordinates for one latent realization.
// `guidance` holds one value per row when the model is conditional.
template <typename Scalar>
Mat<Scalar> evaluate_field(const Model<Scalar>& m, std::span<const double> coords, const LatentFieldSpec<Scalar>& latent,
                           const Mat<Scalar>* guidance = nullptr, GeneratorTrace<Scalar>* trace = nullptr,
                           Mat<Scalar>* input_out = nullptr) {
    const Mat<Scalar> enc = periodic_encode(coords, m.period, m.arch.encoder());
    const Mat<Scalar> lat = latent_field_eval(latent, coords);
    if ((m.arch.guidance_width() > 0) != (guidance != nullptr))
        throw ConfigError(guidance ? "guidance given to an unconditional model" : "conditional model needs guidance");
    Mat<Scalar> x = assemble_generator_input(enc, lat, guidance);
    if (input_out) *input_out = x;
    return generator_forward_raw(m.generator, std::move(x), trace);
}

// Same as evaluate_field with a constant latent vector instead of a field.
template <typename Scalar>
Mat<Scalar> evaluate_field_constant(const Model<Scalar>& m, std::span<const double> coords,
                                    std::span<const double> latent_vector, const Mat<Scalar>* guidance = nullptr) {
    if (static_cast<int>(latent_vector.size()) != m.arch.latent_dim)
        throw ConfigError("constant latent must have " + std::to_string(m.arch.latent_dim) + " entries");
    const Mat<Scalar> enc = periodic_encode(coords, m.period, m.arch.encoder());
    Mat<Scalar> lat(enc.rows(), m.arch.latent_dim);
    for (int e = 0; e < m.arch.latent_dim; ++e) lat.col(e).setConstant(static_cast<Scalar>(latent_vector[e]));
    if ((m.arch.guidance_width() > 0) != (guidance != nullptr))
        throw ConfigError(guidance ? "guidance given to an unconditional model" : "conditional model needs guidance");
    return generator_forward(m.generator, enc, lat, guidance);
}

}  // namespace ipfn

#endif
