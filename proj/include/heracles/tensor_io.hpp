#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "heracles/gradcheck.hpp"
#include "heracles/tensor.hpp"

// Binary tensor container, little-endian throughout:
//   "HTEN" | u32 version (1) | u32 entry count
//   per entry: u16 name length | name bytes | u8 dtype | u8 ndim | ndim x u64 dims | payload
//   u64 FNV-1a checksum of every preceding byte
// dtype 0 = f32, 1 = f64, 2 = u8 (raw bytes, used for text blobs such as "__config").
namespace heracles {

struct TensorFile {
    std::vector<NamedTensor> tensors;
    /// u8 entries, kept as raw byte strings.
    std::vector<std::pair<std::string, std::string>> blobs;

    const Tensor* find(const std::string& name) const;
    const std::string* find_blob(const std::string& name) const;
};

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

std::string encode_tensor_file(const TensorFile& file);
/// Throws BadMagic, UnsupportedVersion, TruncatedFile or ChecksumMismatch.
TensorFile decode_tensor_file(const std::string& bytes);

void save_tensor_file(const std::string& path, const TensorFile& file);
void save_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors);
TensorFile load_tensor_file(const std::string& path);

}  // namespace heracles
