#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bib/tensor_store.hpp"

namespace bib {

struct MixtureComponent {
    double weight = 1.0;
    double mean = 0.0;
    double stddev = 1.0;
};

/// Rectified Gaussian mixture with an explicit fraction of exact zeros and a
/// rare heavy tail, the shape of post-ReLU activations.
struct SyntheticLayer {
    Shape shape{8, 8, 16};
    double sparsity = 0.5;         // probability of an exact zero
    std::vector<MixtureComponent> components{{1.0, 0.5, 1.0}};
    double outlier_rate = 0.0;     // probability of drawing from the tail
    double outlier_scale = 8.0;    // mean of the exponential tail
    double sample_gain_spread = 0.1;  // per-sample multiplicative jitter
};

struct SyntheticSpec {
    std::vector<SyntheticLayer> layers;
    int num_samples = 16;
    std::uint64_t seed = 0;

    /// Four layers, the first denser than the rest.
    static SyntheticSpec default_four_layer(int num_samples = 16, std::uint64_t seed = 0);
};

/// xoshiro256** seeded through splitmix64. The uniform/normal transforms are
/// implemented here rather than by <random> so streams match across platforms.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed);
    double uniform();  // [0, 1)
    double normal();
    double exponential(double mean);

private:
    std::uint64_t state_[4];
    std::uint64_t next();
};

std::vector<ActivationTensor> generate_layer(const SyntheticLayer& layer, int layer_id, int num_samples,
                                             std::uint64_t seed);

/// All layers of `spec`, as [layer][sample].
std::vector<std::vector<ActivationTensor>> generate(const SyntheticSpec& spec);

/// Writes a raw container and returns its validated manifest.
DatasetManifest write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& root);

}  // namespace bib
