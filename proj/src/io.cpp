#include "aoct/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "aoct/geometry.hpp"
#include "aoct/mesh.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats are written little-endian");

namespace aoct {

namespace {

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) io_fail(path, "cannot open for writing");
  return f;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) io_fail(path, "cannot open for reading");
  return f;
}

// Skips whitespace and # comments inside a PGM header.
int pgm_header_int(std::istream& in, const std::string& path) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = 0;
  if (!(in >> v)) io_fail(path, "malformed PGM header");
  return v;
}

std::string csv_field(const std::string& line, size_t& pos) {
  const size_t comma = line.find(',', pos);
  std::string field = line.substr(pos, comma == std::string::npos ? comma : comma - pos);
  pos = comma == std::string::npos ? line.size() : comma + 1;
  return field;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_pgm(const std::string& path, const Image<uint8_t>& img) {
  auto f = open_out(path, true);
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.size()));
  if (!f) io_fail(path, "write failed");
}

Image<uint8_t> read_pgm(const std::string& path) {
  auto f = open_in(path, true);
  std::string magic;
  f >> magic;
  if (magic != "P5") io_fail(path, "not a binary PGM (P5)");
  Image<uint8_t> img;
  img.width = pgm_header_int(f, path);
  img.height = pgm_header_int(f, path);
  const int maxval = pgm_header_int(f, path);
  if (img.width <= 0 || img.height <= 0 || maxval != 255) io_fail(path, "unsupported PGM");
  f.get();  // single whitespace after maxval
  img.data.resize(static_cast<size_t>(img.width) * img.height);
  f.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.size()));
  if (f.gcount() != std::streamsize(img.size())) io_fail(path, "truncated PGM payload");
  return img;
}

void write_mask_pgm(const std::string& path, const SegmentationMask& mask) {
  Image<uint8_t> img = mask.image;
  for (auto& v : img.data) v = v ? 255 : 0;
  write_pgm(path, img);
}

SegmentationMask read_mask_pgm(const std::string& path, int frame_index) {
  SegmentationMask mask;
  mask.frame_index = frame_index;
  mask.image = read_pgm(path);
  for (auto& v : mask.image.data) v = v ? 1 : 0;
  return mask;
}

void write_frame_pgm(const std::string& path, const PolarFrame& frame) {
  Image<uint8_t> img(frame.image.width, frame.image.height);
  for (size_t i = 0; i < img.size(); ++i) {
    const float v = std::clamp(frame.image.data[i], 0.0f, 1.0f);
    img.data[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  write_pgm(path, img);
}

PolarFrame read_frame_pgm(const std::string& path, int frame_index) {
  PolarFrame frame;
  frame.frame_index = frame_index;
  const Image<uint8_t> img = read_pgm(path);
  frame.image = Image<float>(img.width, img.height);
  for (size_t i = 0; i < img.size(); ++i)
    frame.image.data[i] = static_cast<float>(img.data[i]) / 255.0f;
  return frame;
}

void write_cloud_ply(const std::string& path, const PointCloud& pc) {
  if (!pc.provenance.empty() && pc.provenance.size() != pc.points.size())
    throw std::invalid_argument("write_cloud_ply: provenance length mismatch");
  auto f = open_out(path, false);
  f << "ply\nformat ascii 1.0\ncomment aoct point cloud v1\n";
  f << "element vertex " << pc.points.size() << "\n";
  f << "property double x\nproperty double y\nproperty double z\n";
  f << "property int frame\nproperty int column\nend_header\n";
  for (size_t i = 0; i < pc.points.size(); ++i) {
    const Point3& p = pc.points[i];
    const auto prov = pc.provenance.empty() ? PointCloud::Provenance{} : pc.provenance[i];
    f << format_double(p.x) << " " << format_double(p.y) << " " << format_double(p.z) << " "
      << prov.frame_index << " " << prov.column_index << "\n";
  }
  if (!f) io_fail(path, "write failed");
}

PointCloud read_cloud_ply(const std::string& path) {
  auto f = open_in(path, false);
  std::string line;
  size_t count = 0;
  bool header_done = false;
  while (std::getline(f, line)) {
    if (line.rfind("element vertex ", 0) == 0) count = std::stoull(line.substr(15));
    if (line == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) io_fail(path, "missing PLY header terminator");
  PointCloud pc;
  pc.points.reserve(count);
  pc.provenance.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    Point3 p;
    PointCloud::Provenance prov;
    if (!(f >> p.x >> p.y >> p.z >> prov.frame_index >> prov.column_index))
      io_fail(path, "truncated vertex list");
    pc.points.push_back(p);
    pc.provenance.push_back(prov);
  }
  return pc;
}

void write_cloud_xyz(const std::string& path, const PointCloud& pc) {
  auto f = open_out(path, false);
  for (const Point3& p : pc.points)
    f << format_double(p.x) << " " << format_double(p.y) << " " << format_double(p.z) << "\n";
  if (!f) io_fail(path, "write failed");
}

void write_boundaries_csv(const std::string& path, const std::vector<ALineBoundary>& boundaries,
                          const ScanConfig& cfg) {
  auto f = open_out(path, false);
  f << "# aoct-boundaries v1\n";
  f << "frame,column,t,d_tiss_mm,source,low_confidence\n";
  for (const ALineBoundary& b : boundaries) {
    for (size_t col = 0; col < b.columns.size(); ++col) {
      const auto& e = b.columns[col];
      const double t = sample_time({b.frame_index, static_cast<int>(col), std::nullopt}, cfg);
      f << b.frame_index << "," << col << "," << format_double(t) << ",";
      if (e.d_tiss) f << format_double(*e.d_tiss);
      f << "," << to_string(e.source) << "," << (e.low_confidence ? 1 : 0) << "\n";
    }
  }
  if (!f) io_fail(path, "write failed");
}

std::vector<ALineBoundary> read_boundaries_csv(const std::string& path) {
  auto f = open_in(path, false);
  std::string line;
  std::vector<ALineBoundary> out;
  bool saw_header = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {  // column header row
      saw_header = true;
      continue;
    }
    size_t pos = 0;
    const int frame = std::stoi(csv_field(line, pos));
    const int col = std::stoi(csv_field(line, pos));
    csv_field(line, pos);  // t, recomputable from the scan config
    const std::string d_field = csv_field(line, pos);
    const std::string source = csv_field(line, pos);
    const std::string lc = csv_field(line, pos);

    if (out.empty() || out.back().frame_index != frame) {
      if (!out.empty() && frame < out.back().frame_index)
        io_fail(path, "frames out of order");
      out.push_back({frame, {}});
    }
    ALineBoundary& b = out.back();
    if (static_cast<int>(b.columns.size()) != col) io_fail(path, "columns out of order");
    ALineBoundary::Entry e;
    if (!d_field.empty()) e.d_tiss = std::stod(d_field);
    if (source == "mask") e.source = SourceTag::mask;
    else if (source == "intensity") e.source = SourceTag::intensity;
    else if (source == "resampled") e.source = SourceTag::resampled;
    else io_fail(path, "unknown source tag '" + source + "'");
    e.low_confidence = lc == "1";
    b.columns.push_back(e);
  }
  return out;
}

void write_mesh_obj(const std::string& path, const TriangleMesh& mesh) {
  auto f = open_out(path, false);
  f << "# aoct mesh\n";
  for (const Point3& v : mesh.vertices)
    f << "v " << format_double(v.x) << " " << format_double(v.y) << " " << format_double(v.z)
      << "\n";
  for (const Point3& n : mesh.normals)
    f << "vn " << format_double(n.x) << " " << format_double(n.y) << " " << format_double(n.z)
      << "\n";
  for (const auto& t : mesh.triangles) {
    if (mesh.normals.empty())
      f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
    else
      f << "f " << t[0] + 1 << "//" << t[0] + 1 << " " << t[1] + 1 << "//" << t[1] + 1 << " "
        << t[2] + 1 << "//" << t[2] + 1 << "\n";
  }
  if (!f) io_fail(path, "write failed");
}

void write_mesh_ply(const std::string& path, const TriangleMesh& mesh) {
  auto f = open_out(path, true);
  f << "ply\nformat binary_little_endian 1.0\ncomment aoct mesh v1\n";
  f << "element vertex " << mesh.vertices.size() << "\n";
  f << "property float x\nproperty float y\nproperty float z\n";
  f << "element face " << mesh.triangles.size() << "\n";
  f << "property list uchar int vertex_indices\nend_header\n";
  for (const Point3& v : mesh.vertices) {
    const float xyz[3] = {float(v.x), float(v.y), float(v.z)};
    f.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  for (const auto& t : mesh.triangles) {
    const uint8_t n = 3;
    const int32_t idx[3] = {t[0], t[1], t[2]};
    f.write(reinterpret_cast<const char*>(&n), 1);
    f.write(reinterpret_cast<const char*>(idx), sizeof(idx));
  }
  if (!f) io_fail(path, "write failed");
}

TriangleMesh read_mesh_ply(const std::string& path) {
  auto f = open_in(path, true);
  std::string line;
  size_t n_vert = 0, n_face = 0;
  bool header_ok = false;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "ply" || line.rfind("comment", 0) == 0) continue;
    if (line == "format binary_little_endian 1.0") continue;
    if (line.rfind("element vertex ", 0) == 0) {
      n_vert = std::stoull(line.substr(15));
    } else if (line.rfind("element face ", 0) == 0) {
      n_face = std::stoull(line.substr(13));
    } else if (line.rfind("property", 0) == 0) {
      continue;
    } else if (line == "end_header") {
      header_ok = true;
      break;
    } else {
      io_fail(path, "unsupported PLY header line: " + line);
    }
  }
  if (!header_ok) io_fail(path, "missing end_header");

  TriangleMesh mesh;
  mesh.vertices.resize(n_vert);
  for (Point3& v : mesh.vertices) {
    float xyz[3];
    f.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
    v = {xyz[0], xyz[1], xyz[2]};
  }
  mesh.triangles.resize(n_face);
  for (auto& t : mesh.triangles) {
    uint8_t n = 0;
    int32_t idx[3];
    f.read(reinterpret_cast<char*>(&n), 1);
    if (n != 3) io_fail(path, "non-triangle face");
    f.read(reinterpret_cast<char*>(idx), sizeof(idx));
    t = {idx[0], idx[1], idx[2]};
  }
  if (!f) io_fail(path, "truncated PLY payload");
  for (const auto& t : mesh.triangles)
    for (int v : t)
      if (v < 0 || static_cast<size_t>(v) >= n_vert) io_fail(path, "face index out of range");
  return mesh;
}

std::string sha256_bytes(const void* data, size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr))
    throw std::runtime_error("sha256: digest failure");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  const std::string content = read_text_file(path);
  return sha256_bytes(content.data(), content.size());
}

std::string read_text_file(const std::string& path) {
  auto f = open_in(path, true);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  auto f = open_out(path, true);
  f.write(content.data(), std::streamsize(content.size()));
  if (!f) io_fail(path, "write failed");
}

}  // namespace aoct
