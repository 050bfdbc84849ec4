#pragma once

// On-disk formats. All integers little-endian, all reals 32-bit IEEE
// little-endian.
//
//   DGPB  dataset split   "DGPB" u16 version u32 count, then per record
//                          u32 byte length + payload (see io.cpp)
//   DGPW  model weights   "DGPW" u16 version, hyperparameters, u32 tensor
//                          count, per tensor u32 rank, u32 dims, reals
//   DGPD  depth raster    "DGPD" u32 width u32 height, row-major depths,
//                          NaN = invalid

#include "dgecn/depth.hpp"
#include "dgecn/dgpnp.hpp"
#include "dgecn/metrics.hpp"
#include "dgecn/synth.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dgecn::io {

inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::uint16_t kWeightsVersion = 1;

// Throws IoError naming the path.
void write_dataset(const std::filesystem::path& path, const std::vector<SyntheticSample>& samples);
// Samples share `mesh`; poses are re-orthonormalized after the 32-bit round trip.
// Throws IoError for unreadable files, ParseError for malformed content.
std::vector<SyntheticSample> read_dataset(const std::filesystem::path& path, std::shared_ptr<const MeshModel> mesh);

void write_weights(const std::filesystem::path& path, const DgPnpModel& model);
DgPnpModel read_weights(const std::filesystem::path& path);

void write_depth(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_depth(const std::filesystem::path& path);

// "v x y z" lines of an OBJ file, or the vertex element of an ASCII PLY.
// Throws IoError, ParseError (with line number), TooFewVertices.
MeshModel read_mesh(const std::filesystem::path& path);

// One pose per line: id, r00..r22 (row-major), tx, ty, tz, with a header row.
struct PoseRecord {
  std::string id;
  Pose pose;
};
void write_poses(const std::filesystem::path& path, const std::vector<PoseRecord>& poses);
// Throws ParseError with the 1-based line number.
std::vector<PoseRecord> read_poses(const std::filesystem::path& path);

// Whole-file helpers.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Comma-separated fields; no quoting (the harness never writes commas in values).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace dgecn::io
