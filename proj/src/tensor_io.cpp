#include "heracles/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace heracles {

namespace {

constexpr char kMagic[4] = {'H', 'T', 'E', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kU8 = 2;

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    template <typename U>
    void le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    std::string& str() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& s, std::size_t end) : s_(s), end_(end) {}

    const char* take(std::size_t n) {
        if (n > end_ - pos_) throw Error(Errc::TruncatedFile, "unexpected end of tensor file at byte " + std::to_string(pos_));
        const char* p = s_.data() + pos_;
        pos_ += n;
        return p;
    }
    template <typename U>
    U le() {
        const auto* p = reinterpret_cast<const unsigned char*>(take(sizeof(U)));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
        return v;
    }
    std::size_t pos() const { return pos_; }

private:
    const std::string& s_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

void write_header(Writer& w, const std::string& name, std::uint8_t dtype, const Shape& shape) {
    if (name.size() > 0xFFFF) throw Error(Errc::BadInput, "tensor name too long");
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(dtype);
    if (shape.size() > 0xFF) throw Error(Errc::BadInput, "tensor rank too large");
    w.le<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.le<std::uint64_t>(static_cast<std::uint64_t>(d));
}

}  // namespace

const Tensor* TensorFile::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

const std::string* TensorFile::find_blob(const std::string& name) const {
    for (const auto& [n, b] : blobs) {
        if (n == name) return &b;
    }
    return nullptr;
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string encode_tensor_file(const TensorFile& file) {
    Writer w;
    w.bytes(kMagic, 4);
    w.le<std::uint32_t>(kVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(file.tensors.size() + file.blobs.size()));
    for (const auto& [name, t] : file.tensors) {
        write_header(w, name, static_cast<std::uint8_t>(t.dtype()), t.shape());
        for (double v : t.data()) {
            if (t.dtype() == DType::f32) {
                w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            } else {
                w.le<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
            }
        }
    }
    for (const auto& [name, blob] : file.blobs) {
        write_header(w, name, kU8, {static_cast<std::int64_t>(blob.size())});
        w.bytes(blob.data(), blob.size());
    }
    const std::string& s = w.str();
    w.le<std::uint64_t>(fnv1a64(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    return std::move(w.str());
}

TensorFile decode_tensor_file(const std::string& bytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error(Errc::BadMagic, "not a tensor file (bad magic)");
    }
    if (bytes.size() < 4) throw Error(Errc::TruncatedFile, "file shorter than the magic");
    Reader r(bytes, bytes.size());
    r.take(4);
    const auto version = r.le<std::uint32_t>();
    if (version != kVersion) throw Error(Errc::UnsupportedVersion, "tensor file version " + std::to_string(version));
    const auto count = r.le<std::uint32_t>();
    TensorFile file;
    for (std::uint32_t e = 0; e < count; ++e) {
        const auto name_len = r.le<std::uint16_t>();
        std::string name(r.take(name_len), name_len);
        const auto dtype = r.le<std::uint8_t>();
        const auto ndim = r.le<std::uint8_t>();
        Shape shape;
        std::uint64_t numel = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            const auto extent = r.le<std::uint64_t>();
            if (extent > (std::uint64_t{1} << 40)) throw Error(Errc::TruncatedFile, "implausible extent in '" + name + "'");
            shape.push_back(static_cast<std::int64_t>(extent));
            numel *= extent;
        }
        if (dtype == kU8) {
            const char* p = r.take(static_cast<std::size_t>(numel));
            file.blobs.emplace_back(name, std::string(p, static_cast<std::size_t>(numel)));
            continue;
        }
        if (dtype > 1) throw Error(Errc::BadInput, "unknown dtype code " + std::to_string(dtype) + " in '" + name + "'");
        const std::size_t width = dtype == 0 ? 4 : 8;
        if (numel > (bytes.size() - r.pos()) / width) {
            throw Error(Errc::TruncatedFile, "payload of '" + name + "' runs past the end of the file");
        }
        std::vector<double> values(static_cast<std::size_t>(numel));
        for (auto& v : values) {
            if (dtype == 0) {
                v = static_cast<double>(std::bit_cast<float>(r.le<std::uint32_t>()));
            } else {
                v = std::bit_cast<double>(r.le<std::uint64_t>());
            }
        }
        file.tensors.emplace_back(name, Tensor::from(shape, std::move(values), static_cast<DType>(dtype)));
    }
    const std::size_t body = r.pos();
    const auto stored = r.le<std::uint64_t>();
    if (r.pos() != bytes.size()) throw Error(Errc::ChecksumMismatch, "trailing bytes after checksum");
    const auto actual = fnv1a64(reinterpret_cast<const std::uint8_t*>(bytes.data()), body);
    if (stored != actual) throw Error(Errc::ChecksumMismatch, "tensor file checksum mismatch");
    return file;
}

void save_tensor_file(const std::string& path, const TensorFile& file) {
    const std::string bytes = encode_tensor_file(file);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(Errc::Io, "cannot write '" + path + "'");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(Errc::Io, "write failed for '" + path + "'");
}

void save_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
    TensorFile file;
    file.tensors = tensors;
    save_tensor_file(path, file);
}

TensorFile load_tensor_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::Io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_tensor_file(ss.str());
}

}  // namespace heracles
