#include "dgecn/io.hpp"

#include "dgecn/error.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dgecn::io {

namespace fs = std::filesystem;

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void bytes(std::string_view s) { buf_.append(s); }
  std::string& buffer() { return buf_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string context) : data_(data), ctx_(std::move(context)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }
  std::size_t pos() const { return pos_; }
  [[noreturn]] void bad(const std::string& what) const {
    fail(ErrorKind::ParseError, ctx_ + ": " + what + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) bad("unexpected end of data");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string ctx_;
};

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_tensor(Writer& w, const Tensor& t) {
  w.u32(2);
  w.u32(static_cast<std::uint32_t>(t.rows()));
  w.u32(static_cast<std::uint32_t>(t.cols()));
  for (Eigen::Index i = 0; i < t.size(); ++i) w.f32(t.data()[i]);
}

Tensor read_tensor(Reader& r) {
  const std::uint32_t rank = r.u32();
  if (rank != 2) r.bad("tensor rank " + std::to_string(rank) + " (expected 2)");
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = r.f32();
  return t;
}

void write_record(Writer& w, const SyntheticSample& s) {
  const CorrespondenceSet& c = s.correspondences;
  const std::size_t kfa = c.hypotheses.empty() ? 0 : c.hypotheses.front().kfa_input.size();
  w.u64(s.seed);
  w.f32(s.sigma);
  w.f32(s.outlier_rate);
  const Eigen::Matrix3d& r = s.gt_pose.rotation.matrix();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) w.f32(r(i, j));
  for (int i = 0; i < 3; ++i) w.f32(s.gt_pose.translation(i));
  const CameraIntrinsics& in = c.intrinsics;
  w.f32(in.focal_x);
  w.f32(in.focal_y);
  w.f32(in.principal_x);
  w.f32(in.principal_y);
  w.u32(in.width);
  w.u32(in.height);
  w.u32(static_cast<std::uint32_t>(c.keypoint_count()));
  w.u32(static_cast<std::uint32_t>(c.hypotheses_per_keypoint));
  w.u32(static_cast<std::uint32_t>(kfa));
  for (std::size_t i = 0; i < c.keypoint_count(); ++i) {
    w.u32(static_cast<std::uint32_t>(c.keypoints.indices[i]));
    for (int a = 0; a < 3; ++a) w.f32(c.keypoints.points[i](a));
  }
  for (const Correspondence& h : c.hypotheses) {
    if (h.kfa_input.size() != kfa) fail(ErrorKind::DimensionMismatch, "KFA vector lengths differ within a sample");
    w.f32(h.pixel.x());
    w.f32(h.pixel.y());
    for (int a = 0; a < 3; ++a) w.f32(h.rgb(a));
    w.f32(h.has_depth() ? h.depth : std::numeric_limits<double>::quiet_NaN());
    w.u8(h.is_outlier_gt ? 1 : 0);
    for (double v : h.kfa_input) w.f32(v);
  }
}

SyntheticSample read_record(Reader& r, const std::shared_ptr<const MeshModel>& mesh) {
  SyntheticSample s;
  s.seed = r.u64();
  s.sigma = r.f32();
  s.outlier_rate = r.f32();
  Eigen::Matrix3d rot;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rot(i, j) = r.f32();
  Eigen::Vector3d t;
  for (int i = 0; i < 3; ++i) t(i) = r.f32();
  if (!rot.allFinite() || !t.allFinite()) r.bad("non-finite pose");
  s.gt_pose = Pose(Rotation::project(rot), t);
  CorrespondenceSet& c = s.correspondences;
  c.intrinsics.focal_x = r.f32();
  c.intrinsics.focal_y = r.f32();
  c.intrinsics.principal_x = r.f32();
  c.intrinsics.principal_y = r.f32();
  c.intrinsics.width = r.u32();
  c.intrinsics.height = r.u32();
  const std::uint32_t n = r.u32();
  const std::uint32_t m = r.u32();
  const std::uint32_t kfa = r.u32();
  c.hypotheses_per_keypoint = m;
  for (std::uint32_t i = 0; i < n; ++i) {
    c.keypoints.indices.push_back(r.u32());
    Point3 p;
    for (int a = 0; a < 3; ++a) p(a) = r.f32();
    c.keypoints.points.push_back(p);
  }
  c.hypotheses.resize(static_cast<std::size_t>(n) * m);
  for (std::size_t h = 0; h < c.hypotheses.size(); ++h) {
    Correspondence& x = c.hypotheses[h];
    x.keypoint_index = h / m;
    x.pixel.x() = r.f32();
    x.pixel.y() = r.f32();
    for (int a = 0; a < 3; ++a) x.rgb(a) = r.f32();
    x.depth = r.f32();
    x.is_outlier_gt = r.u8() != 0;
    x.kfa_input.resize(kfa);
    for (auto& v : x.kfa_input) v = r.f32();
  }
  s.model = mesh;
  return s;
}

constexpr std::string_view kDatasetMagic = "DGPB";
constexpr std::string_view kWeightsMagic = "DGPW";
constexpr std::string_view kDepthMagic = "DGPD";

}  // namespace

void write_dataset(const fs::path& path, const std::vector<SyntheticSample>& samples) {
  Writer w;
  w.bytes(kDatasetMagic);
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    Writer rec;
    write_record(rec, s);
    w.u32(static_cast<std::uint32_t>(rec.buffer().size()));
    w.bytes(rec.buffer());
  }
  write_file(path, w.buffer());
}

std::vector<SyntheticSample> read_dataset(const fs::path& path, std::shared_ptr<const MeshModel> mesh) {
  const std::string data = read_file(path);
  Reader r(data, path.string());
  if (r.take(4) != kDatasetMagic) r.bad("bad magic (expected DGPB)");
  if (const auto v = r.u16(); v != kDatasetVersion) r.bad("unsupported dataset version " + std::to_string(v));
  const std::uint32_t count = r.u32();
  std::vector<SyntheticSample> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    const std::string_view payload = r.take(len);
    Reader rr(payload, path.string() + " record " + std::to_string(i));
    out.push_back(read_record(rr, mesh));
    if (!rr.done()) rr.bad("trailing bytes in record");
  }
  if (!r.done()) r.bad("trailing bytes after last record");
  return out;
}

void write_weights(const fs::path& path, const DgPnpModel& model) {
  model.validate();
  const DgPnpConfig& c = model.config;
  Writer w;
  w.bytes(kWeightsMagic);
  w.u16(kWeightsVersion);
  w.u32(static_cast<std::uint32_t>(c.keypoints));
  w.u32(static_cast<std::uint32_t>(c.k));
  w.u8(c.dynamic ? 1 : 0);
  w.u8(c.bandwidth == BandwidthMode::Uniform ? 1 : 0);
  w.f32(c.initial_depth);
  w.f32(c.fallback_depth);
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  w.u32(static_cast<std::uint32_t>(model.head.size()));
  w.u32(model.kfa ? static_cast<std::uint32_t>(model.kfa->k) : 0);
  w.u32(model.kfa ? static_cast<std::uint32_t>(model.kfa->window_radius) : 0);
  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Tensor* t : params) write_tensor(w, *t);
  write_file(path, w.buffer());
}

DgPnpModel read_weights(const fs::path& path) {
  const std::string data = read_file(path);
  Reader r(data, path.string());
  if (r.take(4) != kWeightsMagic) r.bad("bad magic (expected DGPW)");
  if (const auto v = r.u16(); v != kWeightsVersion) r.bad("unsupported weights version " + std::to_string(v));
  DgPnpModel m;
  DgPnpConfig& c = m.config;
  c.keypoints = r.u32();
  c.k = r.u32();
  c.dynamic = r.u8() != 0;
  c.bandwidth = r.u8() != 0 ? BandwidthMode::Uniform : BandwidthMode::Adaptive;
  c.initial_depth = r.f32();
  c.fallback_depth = r.f32();
  const std::uint32_t n_layers = r.u32();
  const std::uint32_t n_head = r.u32();
  const std::uint32_t kfa_k = r.u32();
  const std::uint32_t kfa_radius = r.u32();
  const std::uint32_t n_tensors = r.u32();
  if (n_tensors != 2 * n_layers + 2 * n_head + (kfa_k > 0 ? 4 : 0)) r.bad("tensor count does not match layer counts");
  m.layers.resize(n_layers);
  for (auto& l : m.layers) {
    l.alpha = read_tensor(r);
    l.beta = read_tensor(r);
  }
  m.head.resize(n_head);
  for (auto& d : m.head) {
    d.weight = read_tensor(r);
    d.bias = read_tensor(r);
  }
  if (kfa_k > 0) {
    KfaParams p;
    p.k = kfa_k;
    p.window_radius = static_cast<int>(kfa_radius);
    p.w1 = read_tensor(r);
    p.b1 = read_tensor(r);
    p.w2 = read_tensor(r);
    p.b2 = read_tensor(r);
    c.kfa_k = kfa_k;
    c.kfa_hidden = static_cast<std::size_t>(p.w1.rows());
    c.kfa_dim = p.output_dim();
    m.kfa = std::move(p);
  }
  if (!r.done()) r.bad("trailing bytes");
  if (!m.layers.empty()) {
    c.layer_dims.assign(1, m.layers.front().in_dim());
    for (const auto& l : m.layers) c.layer_dims.push_back(l.out_dim());
  }
  c.head_hidden.clear();
  for (std::size_t d = 0; d + 1 < m.head.size(); ++d) c.head_hidden.push_back(static_cast<std::size_t>(m.head[d].weight.rows()));
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return m;
}

void write_depth(const fs::path& path, const DepthMap& depth) {
  Writer w;
  w.bytes(kDepthMagic);
  w.u32(depth.width());
  w.u32(depth.height());
  for (std::uint32_t v = 0; v < depth.height(); ++v)
    for (std::uint32_t u = 0; u < depth.width(); ++u) w.f32(depth.at(u, v));
  write_file(path, w.buffer());
}

DepthMap read_depth(const fs::path& path) {
  const std::string data = read_file(path);
  Reader r(data, path.string());
  if (r.take(4) != kDepthMagic) r.bad("bad magic (expected DGPD)");
  const std::uint32_t w = r.u32();
  const std::uint32_t h = r.u32();
  DepthMap d(w, h);
  for (std::uint32_t v = 0; v < h; ++v)
    for (std::uint32_t u = 0; u < w; ++u) {
      const double x = r.f32();
      if (std::isnan(x)) continue;
      if (!(x > 0.0) || !std::isfinite(x)) r.bad("depth must be positive or NaN");
      d.set(u, v, x);
    }
  if (!r.done()) r.bad("trailing bytes");
  return d;
}

namespace {

double parse_real(std::string_view s, const fs::path& path, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string tok; ss >> tok;) out.push_back(tok);
  return out;
}

}  // namespace

MeshModel read_mesh(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Point3> verts;
  std::string line;
  std::size_t lineno = 0;
  const bool ply = path.extension() == ".ply";
  if (!ply) {
    while (std::getline(in, line)) {
      ++lineno;
      const auto tok = split_ws(line);
      if (tok.empty() || tok[0] != "v") continue;
      if (tok.size() < 4) fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": vertex needs 3 coordinates");
      verts.emplace_back(parse_real(tok[1], path, lineno), parse_real(tok[2], path, lineno), parse_real(tok[3], path, lineno));
    }
    return MeshModel(std::move(verts));
  }

  std::size_t vertex_count = 0;
  bool header = true;
  bool ascii = false;
  while (header && std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (lineno == 1 && (tok.empty() || tok[0] != "ply")) fail(ErrorKind::ParseError, path.string() + ":1: missing 'ply' header");
    if (tok.empty()) continue;
    if (tok[0] == "format") ascii = tok.size() > 1 && tok[1] == "ascii";
    if (tok[0] == "element" && tok.size() == 3 && tok[1] == "vertex")
      vertex_count = static_cast<std::size_t>(parse_real(tok[2], path, lineno));
    if (tok[0] == "end_header") header = false;
  }
  if (header) fail(ErrorKind::ParseError, path.string() + ": missing end_header");
  if (!ascii) fail(ErrorKind::ParseError, path.string() + ": only ASCII PLY is supported");
  while (verts.size() < vertex_count && std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.size() < 3) fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": vertex needs 3 coordinates");
    verts.emplace_back(parse_real(tok[0], path, lineno), parse_real(tok[1], path, lineno), parse_real(tok[2], path, lineno));
  }
  if (verts.size() != vertex_count)
    fail(ErrorKind::ParseError, path.string() + ": expected " + std::to_string(vertex_count) + " vertices");
  return MeshModel(std::move(verts));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

void write_poses(const fs::path& path, const std::vector<PoseRecord>& poses) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "id,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n";
  for (const auto& p : poses) {
    out << p.id;
    const auto& r = p.pose.rotation.matrix();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out << ',' << r(i, j);
    for (int i = 0; i < 3; ++i) out << ',' << p.pose.translation(i);
    out << '\n';
  }
  write_file(path, out.str());
}

std::vector<PoseRecord> read_poses(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<PoseRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line.rfind("id,", 0) != 0) fail(ErrorKind::ParseError, path.string() + ":1: missing header row");
      continue;
    }
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 13)
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected 13 fields, got " +
                                      std::to_string(f.size()));
    Eigen::Matrix3d r;
    for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = parse_real(f[static_cast<std::size_t>(1 + i)], path, lineno);
    Eigen::Vector3d t;
    for (int i = 0; i < 3; ++i) t(i) = parse_real(f[static_cast<std::size_t>(10 + i)], path, lineno);
    // Text round trips lose a few ulps; accept near-rotations and snap them.
    if (!is_rotation(r, 1e-6))
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": rotation is not orthonormal");
    out.push_back({f[0], Pose(Rotation::project(r), t)});
  }
  return out;
}

std::string read_text(const fs::path& path) { return read_file(path); }
void write_text(const fs::path& path, const std::string& text) { write_file(path, text); }

}  // namespace dgecn::io
