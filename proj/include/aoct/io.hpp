#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aoct/types.hpp"

namespace aoct {

struct TriangleMesh;

/// Binary 8-bit PGM (P5).
void write_pgm(const std::string& path, const Image<uint8_t>& img);
Image<uint8_t> read_pgm(const std::string& path);

/// Masks are 0/1 in memory, 0/255 on disk; any nonzero pixel reads as 1.
void write_mask_pgm(const std::string& path, const SegmentationMask& mask);
SegmentationMask read_mask_pgm(const std::string& path, int frame_index);

/// Intensity frames quantize [0, 1] to 8 bits on disk.
void write_frame_pgm(const std::string& path, const PolarFrame& frame);
PolarFrame read_frame_pgm(const std::string& path, int frame_index);

/// ASCII PLY with x y z plus frame/column provenance properties.
void write_cloud_ply(const std::string& path, const PointCloud& pc);
PointCloud read_cloud_ply(const std::string& path);
void write_cloud_xyz(const std::string& path, const PointCloud& pc);

/// Shared boundary schema (simulator ground truth, extraction, resampling):
/// every (frame, column) cell gets a row; absent distances stay empty.
void write_boundaries_csv(const std::string& path, const std::vector<ALineBoundary>& boundaries,
                          const ScanConfig& cfg);
std::vector<ALineBoundary> read_boundaries_csv(const std::string& path);

void write_mesh_obj(const std::string& path, const TriangleMesh& mesh);
/// Binary little-endian PLY (float32 vertices, int32 face indices).
void write_mesh_ply(const std::string& path, const TriangleMesh& mesh);
/// Reads meshes in the schema write_mesh_ply emits.
TriangleMesh read_mesh_ply(const std::string& path);

std::string sha256_file(const std::string& path);
std::string sha256_bytes(const void* data, size_t size);

/// Formats a double so it round-trips exactly (shortest representation).
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace aoct
