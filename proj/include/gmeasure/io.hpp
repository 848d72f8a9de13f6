#pragma once

#include <string>
#include <vector>

#include "gmeasure/eval.hpp"
#include "gmeasure/network.hpp"

namespace gmeasure {

// Model and dataset files share one container layout:
//   magic "GMB1", u32 header length (LE), JSON header, payload bytes,
//   u64 FNV-1a checksum of the payload (LE).
// The header declares per-tensor byte offsets into the payload; all floats
// are little-endian IEEE-754 binary32, labels little-endian int32.

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kDatasetFormatVersion = 1;

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size);

void save_model(const Network& net, const std::string& path);
Network load_model(const std::string& path);

void save_dataset(const LabeledDataset& data, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

struct ZooManifest {
    std::string task_description;
    std::vector<ZooEntry> entries;  // model_path set per entry
};

void save_manifest(const ZooManifest& manifest, const std::string& path);
// verify_models: load each referenced model file (checksum check included).
ZooManifest load_manifest(const std::string& path, bool verify_models = false);

}  // namespace gmeasure
