#include "bib/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "bib/error.hpp"
#include "bib/kvtext.hpp"

namespace fs = std::filesystem;

namespace bib {

std::string to_string(const Shape& shape) {
    return std::to_string(shape.height) + "," + std::to_string(shape.width) + "," +
           std::to_string(shape.channels);
}

void validate(const ActivationTensor& tensor) {
    if (tensor.values.size() != tensor.shape.numel()) {
        throw DatasetError("tensor has " + std::to_string(tensor.values.size()) +
                               " values but shape " + to_string(tensor.shape) + " needs " +
                               std::to_string(tensor.shape.numel()),
                           tensor.layer_id);
    }
    for (std::size_t i = 0; i < tensor.values.size(); ++i) {
        if (!std::isfinite(tensor.values[i])) {
            throw NonFiniteError("sample " + std::to_string(tensor.sample_id) +
                                     ": non-finite value at flat index " + std::to_string(i),
                                 tensor.layer_id, i);
        }
    }
}

const LayerEntry& DatasetManifest::layer(int layer_id) const {
    if (layer_id < 1 || layer_id > num_layers) {
        throw IndexError("layer_id " + std::to_string(layer_id) + " out of range [1, " +
                         std::to_string(num_layers) + "]");
    }
    return layers[static_cast<std::size_t>(layer_id - 1)];
}

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

void decode_f32le(std::span<const char> bytes, std::span<float> out) {
    std::memcpy(out.data(), bytes.data(), out.size() * sizeof(float));
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& v : out) {
            v = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(v)));
        }
    }
}

void encode_f32le(std::span<const float> values, std::span<char> out) {
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            const auto w = byteswap32(std::bit_cast<std::uint32_t>(values[i]));
            std::memcpy(out.data() + 4 * i, &w, 4);
        }
    } else {
        std::memcpy(out.data(), values.data(), values.size() * sizeof(float));
    }
}

namespace {

Shape parse_shape(const std::string& text, int layer_id) {
    std::vector<std::size_t> dims;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        std::int64_t v = 0;
        try {
            v = parse_int(piece.substr(piece.find_first_not_of(' ')), "shape");
        } catch (const DatasetError&) {
            throw DatasetError("malformed shape `" + text + "`", layer_id);
        }
        if (v <= 0) throw DatasetError("shape dimensions must be positive: `" + text + "`", layer_id);
        dims.push_back(static_cast<std::size_t>(v));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (dims.size() != 3) throw DatasetError("shape must be P,Q,K: `" + text + "`", layer_id);
    return {dims[0], dims[1], dims[2]};
}

// Collects the numeric suffixes of `prefix<n>` keys.
std::set<std::int64_t> indexed_keys(const KeyValueDoc& doc, const std::string& prefix) {
    std::set<std::int64_t> out;
    for (const auto& [k, v] : doc.entries()) {
        if (k.rfind(prefix, 0) == 0) {
            try {
                out.insert(parse_int(k.substr(prefix.size()), k));
            } catch (const DatasetError&) {
                throw DatasetError("bad layer key `" + k + "`");
            }
        }
    }
    return out;
}

std::string read_exact(std::ifstream& in, std::size_t n, const fs::path& path) {
    std::string buf(n, '\0');
    in.read(buf.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw DatasetError("truncated file " + path.string());
    return buf;
}

}  // namespace

DatasetManifest load_dataset(const fs::path& manifest_path) {
    fs::path file = manifest_path;
    if (fs::is_directory(file)) file /= kManifestName;
    if (!fs::exists(file)) throw DatasetError("manifest not found: " + file.string());

    const auto doc = KeyValueDoc::load(file);
    DatasetManifest m;
    m.root = file.parent_path();

    const auto version = doc.require_int("version");
    if (version != DatasetManifest::kVersion) {
        throw SchemaVersionError(file.string() + ": unsupported manifest version " + std::to_string(version));
    }
    m.num_layers = static_cast<int>(doc.require_int("num_layers"));
    m.num_samples = static_cast<int>(doc.require_int("num_samples"));
    if (m.num_layers < 1) throw DatasetError("num_layers must be >= 1");
    if (m.num_samples < 1) throw DatasetError("num_samples must be >= 1");
    m.dtype = doc.require("dtype");
    m.order = doc.require("order");
    if (m.dtype != "f32le") throw DatasetError("unsupported dtype `" + m.dtype + "` (only f32le)");
    if (m.order != "c") throw DatasetError("unsupported order `" + m.order + "` (only c)");

    for (const char* prefix : {"shape_", "file_"}) {
        const auto ids = indexed_keys(doc, prefix);
        std::int64_t expect = 1;
        for (const auto id : ids) {
            if (id != expect) {
                throw DatasetError(std::string("layer indices of `") + prefix +
                                       "*` are not contiguous from 1 to num_layers",
                                   static_cast<int>(id));
            }
            ++expect;
        }
        if (expect - 1 != m.num_layers) {
            throw DatasetError(std::string("expected ") + std::to_string(m.num_layers) + " `" + prefix +
                                   "*` entries, found " + std::to_string(expect - 1),
                               static_cast<int>(std::min<std::int64_t>(expect, m.num_layers)));
        }
    }

    const auto n = static_cast<std::uintmax_t>(m.num_samples);
    for (int l = 1; l <= m.num_layers; ++l) {
        LayerEntry e;
        e.shape = parse_shape(doc.require("shape_" + std::to_string(l)), l);
        e.file = doc.require("file_" + std::to_string(l));
        e.path = m.root / e.file;
        if (!fs::exists(e.path)) throw DatasetError("missing file " + e.path.string(), l);
        const std::uintmax_t payload = n * e.shape.numel() * sizeof(float);
        const auto actual = fs::file_size(e.path);
        if (e.path.extension() == ".npy") {
            e.storage = StorageKind::npy;
            NpyHeader h;
            try {
                h = read_npy_header(e.path);
            } catch (const DatasetError& err) {
                throw DatasetError(err.what(), l);
            }
            std::uintmax_t count = 1;
            for (auto d : h.shape) count *= d;
            if (h.shape.empty() || h.shape[0] != n || count != n * e.shape.numel()) {
                throw DatasetError("npy shape does not match num_samples x " + to_string(e.shape), l);
            }
            e.data_offset = h.data_offset;
            if (actual != h.data_offset + payload) {
                throw DatasetError("file " + e.file + " has " + std::to_string(actual - h.data_offset) +
                                       " data bytes, expected " + std::to_string(payload),
                                   l);
            }
        } else if (actual != payload) {
            throw DatasetError("file " + e.file + " has " + std::to_string(actual) + " bytes, expected " +
                                   std::to_string(payload),
                               l);
        }
        m.layers.push_back(std::move(e));
    }
    return m;
}

ActivationTensor read_tensor(const DatasetManifest& manifest, int layer_id, int sample_id) {
    const auto& e = manifest.layer(layer_id);
    if (sample_id < 1 || sample_id > manifest.num_samples) {
        throw IndexError("sample_id " + std::to_string(sample_id) + " out of range [1, " +
                         std::to_string(manifest.num_samples) + "]");
    }
    ActivationTensor t;
    t.layer_id = layer_id;
    t.sample_id = sample_id;
    t.shape = e.shape;
    t.values.resize(e.shape.numel());

    std::ifstream in(e.path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + e.path.string(), layer_id);
    const auto bytes = t.values.size() * sizeof(float);
    in.seekg(static_cast<std::streamoff>(e.data_offset + static_cast<std::uintmax_t>(sample_id - 1) * bytes));
    const auto raw = read_exact(in, bytes, e.path);
    decode_f32le(raw, t.values);
    validate(t);
    return t;
}

std::vector<ActivationTensor> read_layer(const DatasetManifest& manifest, int layer_id, int count) {
    if (count < 1 || count > manifest.num_samples) {
        throw IndexError("sample count " + std::to_string(count) + " out of range [1, " +
                         std::to_string(manifest.num_samples) + "]");
    }
    std::vector<ActivationTensor> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 1; i <= count; ++i) out.push_back(read_tensor(manifest, layer_id, i));
    return out;
}

DatasetWriter::DatasetWriter(fs::path root, int num_samples, std::vector<Shape> shapes)
    : root_(std::move(root)), num_samples_(num_samples), shapes_(std::move(shapes)) {
    if (num_samples_ < 1) throw DatasetError("num_samples must be >= 1");
    if (shapes_.empty()) throw DatasetError("at least one layer required");
    fs::create_directories(root_);
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        if (shapes_[l].numel() == 0) throw DatasetError("empty shape", static_cast<int>(l + 1));
        const auto path = root_ / ("layer_" + std::to_string(l + 1) + ".f32");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot create " + path.string());
        out.close();
        fs::resize_file(path, static_cast<std::uintmax_t>(num_samples_) * shapes_[l].numel() * sizeof(float));
        written_.emplace_back(static_cast<std::size_t>(num_samples_), false);
    }
}

void DatasetWriter::add_comment(std::string text) { comments_.push_back(std::move(text)); }

void DatasetWriter::write_tensor(const ActivationTensor& tensor) {
    const auto L = static_cast<int>(shapes_.size());
    if (tensor.layer_id < 1 || tensor.layer_id > L) {
        throw IndexError("layer_id " + std::to_string(tensor.layer_id) + " out of range");
    }
    if (tensor.sample_id < 1 || tensor.sample_id > num_samples_) {
        throw IndexError("sample_id " + std::to_string(tensor.sample_id) + " out of range");
    }
    const auto& shape = shapes_[static_cast<std::size_t>(tensor.layer_id - 1)];
    if (!(tensor.shape == shape)) {
        throw DatasetError("shape " + to_string(tensor.shape) + " differs from layer shape " + to_string(shape),
                           tensor.layer_id);
    }
    validate(tensor);

    const auto path = root_ / ("layer_" + std::to_string(tensor.layer_id) + ".f32");
    std::fstream out(path, std::ios::binary | std::ios::in | std::ios::out);
    if (!out) throw Error("cannot open " + path.string());
    std::vector<char> raw(tensor.values.size() * sizeof(float));
    encode_f32le(tensor.values, raw);
    out.seekp(static_cast<std::streamoff>(static_cast<std::uintmax_t>(tensor.sample_id - 1) * raw.size()));
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!out) throw Error("write failed: " + path.string());
    written_[static_cast<std::size_t>(tensor.layer_id - 1)][static_cast<std::size_t>(tensor.sample_id - 1)] = true;
}

DatasetManifest DatasetWriter::finish() {
    for (std::size_t l = 0; l < written_.size(); ++l) {
        const auto it = std::find(written_[l].begin(), written_[l].end(), false);
        if (it != written_[l].end()) {
            throw DatasetError("sample " + std::to_string(it - written_[l].begin() + 1) + " was never written",
                               static_cast<int>(l + 1));
        }
    }
    KeyValueDoc doc;
    for (const auto& c : comments_) doc.comment(c);
    doc.set("version", std::to_string(DatasetManifest::kVersion));
    doc.set("num_layers", std::to_string(shapes_.size()));
    doc.set("num_samples", std::to_string(num_samples_));
    doc.set("dtype", "f32le");
    doc.set("order", "c");
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        const auto id = std::to_string(l + 1);
        doc.set("shape_" + id, to_string(shapes_[l]));
        doc.set("file_" + id, "layer_" + id + ".f32");
    }
    write_file_atomic(root_ / kManifestName, doc.to_string());
    return load_dataset(root_);
}

namespace {

constexpr char kNpyMagic[] = "\x93NUMPY";

std::string dict_value(const std::string& header, const std::string& key, const fs::path& path) {
    const auto k = header.find("'" + key + "'");
    if (k == std::string::npos) throw DatasetError(path.string() + ": npy header lacks '" + key + "'");
    const auto colon = header.find(':', k);
    auto start = header.find_first_not_of(' ', colon + 1);
    std::size_t end = 0;
    if (header[start] == '(') {
        end = header.find(')', start) + 1;
    } else if (header[start] == '\'') {
        end = header.find('\'', start + 1) + 1;
    } else {
        end = header.find_first_of(",}", start);
    }
    return header.substr(start, end - start);
}

}  // namespace

NpyHeader read_npy_header(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    const auto preamble = read_exact(in, 10, path);
    if (preamble.compare(0, 6, kNpyMagic, 6) != 0) throw DatasetError(path.string() + ": bad npy magic");
    if (preamble[6] != 1 || preamble[7] != 0) {
        throw DatasetError(path.string() + ": unsupported npy version " + std::to_string(int(preamble[6])) + "." +
                           std::to_string(int(preamble[7])));
    }
    const auto header_len = static_cast<std::size_t>(static_cast<unsigned char>(preamble[8])) |
                            (static_cast<std::size_t>(static_cast<unsigned char>(preamble[9])) << 8);
    const auto header = read_exact(in, header_len, path);

    if (dict_value(header, "descr", path) != "'<f4'") {
        throw DatasetError(path.string() + ": unsupported npy dtype " + dict_value(header, "descr", path));
    }
    if (dict_value(header, "fortran_order", path) != "False") {
        throw DatasetError(path.string() + ": fortran_order arrays are not supported");
    }
    NpyHeader h;
    auto shape = dict_value(header, "shape", path);
    shape = shape.substr(1, shape.size() - 2);
    std::size_t start = 0;
    while (start < shape.size()) {
        auto comma = shape.find(',', start);
        if (comma == std::string::npos) comma = shape.size();
        const auto first = shape.find_first_not_of(' ', start);
        if (first < comma) {
            const auto v = parse_int(shape.substr(first, shape.find_last_not_of(' ', comma - 1) - first + 1), "shape");
            if (v < 0) throw DatasetError(path.string() + ": negative npy dimension");
            h.shape.push_back(static_cast<std::size_t>(v));
        }
        start = comma + 1;
    }
    h.data_offset = 10 + header_len;
    return h;
}

NpyArray read_npy(const fs::path& path) {
    const auto h = read_npy_header(path);
    std::size_t count = 1;
    for (auto d : h.shape) count *= d;
    const auto bytes = count * sizeof(float);
    if (fs::file_size(path) != h.data_offset + bytes) {
        throw DatasetError(path.string() + ": npy payload size does not match its shape");
    }
    std::ifstream in(path, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(h.data_offset));
    const auto raw = read_exact(in, bytes, path);
    NpyArray a;
    a.shape = h.shape;
    a.data.resize(count);
    decode_f32le(raw, a.data);
    return a;
}

void write_npy(const fs::path& path, std::span<const float> data, std::span<const std::size_t> shape) {
    std::size_t count = 1;
    std::string dims;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        count *= shape[i];
        dims += (i ? ", " : "") + std::to_string(shape[i]);
    }
    if (shape.size() == 1) dims += ",";
    if (count != data.size()) throw DatasetError("write_npy: data length does not match shape");
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + dims + "), }";
    // magic + version + length field + header + '\n' must be a multiple of 64
    const std::size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header.push_back('\n');

    std::string out(kNpyMagic, 6);
    out.push_back('\x01');
    out.push_back('\x00');
    out.push_back(static_cast<char>(header.size() & 0xff));
    out.push_back(static_cast<char>((header.size() >> 8) & 0xff));
    out += header;
    const auto offset = out.size();
    out.resize(offset + data.size() * sizeof(float));
    encode_f32le(data, std::span<char>(out.data() + offset, data.size() * sizeof(float)));
    write_file_atomic(path, out);
}

ActivationTensor tensor_from_npy(const fs::path& path, int layer_id, int sample_id) {
    auto a = read_npy(path);
    if (a.shape.empty() || a.shape.size() > 3) {
        throw DatasetError(path.string() + ": expected a tensor of rank 1..3", layer_id);
    }
    std::array<std::size_t, 3> dims{1, 1, 1};
    std::copy(a.shape.begin(), a.shape.end(), dims.begin() + static_cast<std::ptrdiff_t>(3 - a.shape.size()));
    ActivationTensor t;
    t.layer_id = layer_id;
    t.sample_id = sample_id;
    t.shape = {dims[0], dims[1], dims[2]};
    t.values = std::move(a.data);
    validate(t);
    return t;
}

}  // namespace bib
