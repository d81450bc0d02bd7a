#include "bib/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bib/error.hpp"

namespace bib {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SplitRng::SplitRng(std::uint64_t seed) {
    for (auto& s : state_) s = splitmix64(seed);
}

std::uint64_t SplitRng::next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double SplitRng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitRng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double SplitRng::exponential(double mean) { return -mean * std::log(1.0 - uniform()); }

SyntheticSpec SyntheticSpec::default_four_layer(int num_samples, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.num_samples = num_samples;
    spec.seed = seed;

    SyntheticLayer first;
    first.shape = {16, 16, 8};
    first.sparsity = 0.3;
    first.components = {{0.6, 0.8, 0.6}, {0.4, 2.0, 1.0}};
    first.outlier_rate = 0.002;
    first.outlier_scale = 6.0;
    spec.layers.push_back(first);

    for (int l = 0; l < 3; ++l) {
        SyntheticLayer deep;
        deep.shape = {8, 8, 32};
        deep.sparsity = 0.6 + 0.08 * l;
        deep.components = {{0.7, 0.2, 0.5}, {0.3, 1.0, 0.8}};
        deep.outlier_rate = 0.004;
        deep.outlier_scale = 5.0;
        spec.layers.push_back(deep);
    }
    return spec;
}

std::vector<ActivationTensor> generate_layer(const SyntheticLayer& layer, int layer_id, int num_samples,
                                             std::uint64_t seed) {
    if (num_samples < 1) throw ConfigError("synthetic: num_samples must be >= 1");
    if (layer.components.empty()) throw ConfigError("synthetic: layer needs at least one mixture component");
    double total_weight = 0.0;
    for (const auto& c : layer.components) total_weight += c.weight;
    if (!(total_weight > 0.0)) throw ConfigError("synthetic: mixture weights must be positive");

    SplitRng rng(seed ^ (0x51ed2701ULL * static_cast<std::uint64_t>(layer_id)));
    std::vector<ActivationTensor> out;
    for (int i = 1; i <= num_samples; ++i) {
        ActivationTensor t;
        t.layer_id = layer_id;
        t.sample_id = i;
        t.shape = layer.shape;
        t.values.resize(layer.shape.numel());
        const double gain = std::exp(layer.sample_gain_spread * rng.normal());
        for (auto& v : t.values) {
            double x = 0.0;
            if (rng.uniform() >= layer.sparsity) {
                if (rng.uniform() < layer.outlier_rate) {
                    x = rng.exponential(layer.outlier_scale);
                } else {
                    double pick = rng.uniform() * total_weight;
                    const MixtureComponent* comp = &layer.components.back();
                    for (const auto& c : layer.components) {
                        if (pick < c.weight) {
                            comp = &c;
                            break;
                        }
                        pick -= c.weight;
                    }
                    x = std::max(0.0, comp->mean + comp->stddev * rng.normal());
                }
            }
            v = static_cast<float>(gain * x);
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::vector<ActivationTensor>> generate(const SyntheticSpec& spec) {
    std::vector<std::vector<ActivationTensor>> layers;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        layers.push_back(generate_layer(spec.layers[l], static_cast<int>(l + 1), spec.num_samples, spec.seed));
    }
    return layers;
}

DatasetManifest write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& root) {
    std::vector<Shape> shapes;
    for (const auto& l : spec.layers) shapes.push_back(l.shape);
    DatasetWriter writer(root, spec.num_samples, shapes);
    writer.add_comment("synthetic rectified-sparse activations, seed " + std::to_string(spec.seed));
    for (const auto& layer : generate(spec)) {
        for (const auto& t : layer) writer.write_tensor(t);
    }
    return writer.finish();
}

}  // namespace bib
