#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwie/formation.hpp"
#include "uwie/tensor.hpp"

namespace uwie {

// One dataset record. Paths are relative to the manifest's directory; the
// split is a pure function of scene_id so every draw of a scene lands in the
// same split.
struct ManifestEntry {
    std::string degraded_path;
    std::string clear_path;
    std::string depth_path;
    int class_id = 0;
    DegradationParams params;
    std::string scene_id;
    int draw_index = 0;
    std::string split;  // train | val | test

    bool operator==(const ManifestEntry&) const = default;
};

// Scene-hash split assignment, 80/10/10.
std::string split_for_scene(const std::string& scene_id);

// JSON-lines, one entry per line, keys sorted; read(write(x)) == x and both
// directions verify that every referenced file exists.
void write_manifest(const std::string& path, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Checkpoint container: a config JSON (architecture + training state) plus
// named float32 tensors. Binary layout, all integers little-endian:
//
//   magic   8 bytes        "UIEDAL01"
//   u64     config JSON byte length
//   bytes   config JSON (UTF-8)
//   u32     tensor count
//   per tensor:
//     u32   name length, name bytes
//     u32   ndim, u32 dims[ndim]
//     f32   payload, row-major
//
// save(load(file)) is byte-identical.
struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;

    bool operator==(const NamedTensor&) const = default;
};

struct CheckpointData {
    nlohmann::json config;
    std::vector<NamedTensor> tensors;
};

void save_checkpoint(const CheckpointData& ckpt, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

// Exact float<->bits helpers for metrics that must survive JSON round trips
// bitwise (validation scores feed threshold comparisons).
std::uint64_t double_to_bits(double v);
double bits_to_double(std::uint64_t bits);

}  // namespace uwie
