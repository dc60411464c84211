#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "listen/autograd.hpp"

namespace listen::ckpt {

using ag::Mat;

// Named-array container on disk:
//   8 bytes   magic "LSTNARR1"
//   8 bytes   little-endian u64 header length H
//   H bytes   JSON header {name: {dtype: "f32", shape: [rows, cols], offset: bytes}, "__metadata__": {...}}
//   ...       raw little-endian float32 data; offsets are relative to the end of the header
struct ArrayStore {
    std::map<std::string, Mat> arrays;
    nlohmann::json metadata = nlohmann::json::object();
};

void save(const std::filesystem::path& path, const ArrayStore& store);
ArrayStore load(const std::filesystem::path& path);

// Rounds every entry to float32 precision, which is what the container holds.
Mat to_f32_precision(const Mat& m);

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);

// Content digest of one array: shape then row-major float64 little-endian values.
std::string array_digest(const Mat& m);
// Digest of each array, keyed by name.
std::map<std::string, std::string> digest_each(const std::map<std::string, Mat>& arrays);
// Digest over all arrays in name order (name, NUL, per-array digest).
std::string digest_all(const std::map<std::string, Mat>& arrays);

}  // namespace listen::ckpt
