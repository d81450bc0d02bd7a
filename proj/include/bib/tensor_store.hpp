#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bib {

/// (P, Q, K): height, width, feature maps. Flattened row-major, k fastest.
struct Shape {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    std::size_t numel() const { return height * width * channels; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

/// One layer's activation block for one sample. Indices are 1-based to match
/// the manifest numbering.
struct ActivationTensor {
    int layer_id = 1;
    int sample_id = 1;
    Shape shape;
    std::vector<float> values;

    std::size_t size() const { return values.size(); }
};

/// Throws DatasetError naming the first non-finite element or a length mismatch.
void validate(const ActivationTensor& tensor);

enum class StorageKind { raw_f32le, npy };

struct LayerEntry {
    Shape shape;
    std::string file;                 // as written in the manifest, relative to root
    std::filesystem::path path;       // resolved
    StorageKind storage = StorageKind::raw_f32le;
    std::uintmax_t data_offset = 0;   // byte offset of sample 1
};

struct DatasetManifest {
    static constexpr int kVersion = 1;

    std::filesystem::path root;
    int version = kVersion;
    int num_layers = 0;
    int num_samples = 0;
    std::vector<LayerEntry> layers;   // layers[l - 1]
    std::string dtype = "f32le";
    std::string order = "c";
    std::vector<std::string> comments;

    const LayerEntry& layer(int layer_id) const;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Accepts either the manifest file or the directory holding `manifest.txt`.
/// Validates file presence and byte lengths; no tensor data is read.
DatasetManifest load_dataset(const std::filesystem::path& manifest_path);

ActivationTensor read_tensor(const DatasetManifest& manifest, int layer_id, int sample_id);

/// Samples 1..count of one layer, in order.
std::vector<ActivationTensor> read_layer(const DatasetManifest& manifest, int layer_id, int count);

/// Builds a raw container directory. Every (layer, sample) slot must be
/// written once before finish() emits the manifest.
class DatasetWriter {
public:
    DatasetWriter(std::filesystem::path root, int num_samples, std::vector<Shape> shapes);

    void add_comment(std::string text);
    void write_tensor(const ActivationTensor& tensor);
    DatasetManifest finish();

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    int num_samples_;
    std::vector<Shape> shapes_;
    std::vector<std::vector<bool>> written_;
    std::vector<std::string> comments_;
};

// NPY v1.0, little-endian float32, C order only.
struct NpyArray {
    std::vector<std::size_t> shape;
    std::vector<float> data;
};

struct NpyHeader {
    std::vector<std::size_t> shape;
    std::uintmax_t data_offset = 0;
};

NpyHeader read_npy_header(const std::filesystem::path& path);
NpyArray read_npy(const std::filesystem::path& path);
void write_npy(const std::filesystem::path& path, std::span<const float> data,
               std::span<const std::size_t> shape);

/// Converts a single-tensor NPY file of rank 1..3 into an ActivationTensor;
/// missing leading dimensions are taken as 1.
ActivationTensor tensor_from_npy(const std::filesystem::path& path, int layer_id = 1, int sample_id = 1);

// Little-endian float32 byte helpers.
void decode_f32le(std::span<const char> bytes, std::span<float> out);
void encode_f32le(std::span<const float> values, std::span<char> out);

}  // namespace bib
