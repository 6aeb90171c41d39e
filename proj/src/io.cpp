#include "dseg/io.hpp"

#include "dseg/toml.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dseg {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

double parse_double_field(const std::string& s, const std::filesystem::path& path) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw IoError(path.string() + ": malformed number '" + s + "'");
  }
  return v;
}

long parse_long_field(const std::string& s, const std::filesystem::path& path) {
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw IoError(path.string() + ": malformed integer '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

// getline that also strips a trailing \r so CRLF files read fine
bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace

void write_pgm16(const std::filesystem::path& path, const GridI& grid) {
  if (grid.rows() == 0 || grid.cols() == 0) throw IoError("write_pgm16: empty grid");
  auto out = open_out(path);
  out << "P5\n" << grid.cols() << " " << grid.rows() << "\n65535\n";
  std::string payload;
  payload.reserve(static_cast<std::size_t>(grid.rows()) * grid.cols() * 2);
  for (int v = 0; v < grid.rows(); ++v) {
    for (int u = 0; u < grid.cols(); ++u) {
      int val = grid(v, u);
      if (val < 0 || val > 65535) {
        throw IoError("write_pgm16: value " + std::to_string(val) + " outside 0..65535");
      }
      payload.push_back(static_cast<char>((val >> 8) & 0xff));
      payload.push_back(static_cast<char>(val & 0xff));
    }
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  finish(out, path);
}

namespace {

// Reads one PNM token, skipping whitespace and # comments.
std::string pnm_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) break;
  }
  if (c == EOF) throw IoError(path.string() + ": truncated header");
  do {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  } while (c != EOF && !std::isspace(c));
  return tok;
}

}  // namespace

GridI read_pgm16(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (pnm_token(in, path) != "P5") throw IoError(path.string() + ": not a P5 PGM");
  int w = static_cast<int>(parse_long_field(pnm_token(in, path), path));
  int h = static_cast<int>(parse_long_field(pnm_token(in, path), path));
  int maxval = static_cast<int>(parse_long_field(pnm_token(in, path), path));
  if (w <= 0 || h <= 0) throw IoError(path.string() + ": bad dimensions");
  if (maxval != 65535) throw IoError(path.string() + ": expected maxval 65535");
  std::vector<char> payload(static_cast<std::size_t>(w) * h * 2);
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size())) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  GridI grid(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      std::size_t at = (static_cast<std::size_t>(v) * w + u) * 2;
      grid(v, u) = (static_cast<unsigned char>(payload[at]) << 8) |
                   static_cast<unsigned char>(payload[at + 1]);
    }
  }
  return grid;
}

void write_range_pgm(const std::filesystem::path& path, const RangeImage& ri) {
  GridI cm(ri.ranges.rows(), ri.ranges.cols());
  for (int r = 0; r < ri.ranges.rows(); ++r) {
    for (int c = 0; c < ri.ranges.cols(); ++c) {
      long q = ri.validity(r, c) ? std::lround(ri.ranges(r, c) * 100.0) : 0;
      cm(r, c) = static_cast<int>(std::clamp(q, 0L, 65535L));
    }
  }
  write_pgm16(path, cm);
}

void write_ppm(const std::filesystem::path& path, const Rgb8Image& image) {
  if (image.width() == 0 || image.height() == 0) throw IoError("write_ppm: empty image");
  auto out = open_out(path);
  out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  std::string payload;
  payload.reserve(static_cast<std::size_t>(image.width()) * image.height() * 3);
  for (int v = 0; v < image.height(); ++v) {
    for (int u = 0; u < image.width(); ++u) {
      payload.push_back(static_cast<char>(image.r(v, u)));
      payload.push_back(static_cast<char>(image.g(v, u)));
      payload.push_back(static_cast<char>(image.b(v, u)));
    }
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  finish(out, path);
}

Rgb8Image read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (pnm_token(in, path) != "P6") throw IoError(path.string() + ": not a P6 PPM");
  int w = static_cast<int>(parse_long_field(pnm_token(in, path), path));
  int h = static_cast<int>(parse_long_field(pnm_token(in, path), path));
  int maxval = static_cast<int>(parse_long_field(pnm_token(in, path), path));
  if (w <= 0 || h <= 0) throw IoError(path.string() + ": bad dimensions");
  if (maxval != 255) throw IoError(path.string() + ": expected maxval 255");
  std::vector<char> payload(static_cast<std::size_t>(w) * h * 3);
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size())) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  Rgb8Image img = Rgb8Image::zero(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      std::size_t at = (static_cast<std::size_t>(v) * w + u) * 3;
      img.r(v, u) = static_cast<unsigned char>(payload[at]);
      img.g(v, u) = static_cast<unsigned char>(payload[at + 1]);
      img.b(v, u) = static_cast<unsigned char>(payload[at + 2]);
    }
  }
  return img;
}

void write_cloud_csv(const std::filesystem::path& path, const PointCloud& cloud) {
  if (cloud.frame_id.find_first_of("\n\r") != std::string::npos) {
    throw IoError(path.string() + ": frame id must be a single line");
  }
  auto out = open_out(path);
  std::string buf = "# frame: " + cloud.frame_id + "\n";
  buf += "x,y,z,beam_row,azimuth_col,valid\n";
  for (const LidarPoint& p : cloud.points) {
    if (p.valid) {
      buf += format_double(p.x) + "," + format_double(p.y) + "," + format_double(p.z);
    } else {
      buf += "0.0,0.0,0.0";
    }
    buf += "," + std::to_string(p.beam_row) + "," + std::to_string(p.azimuth_col) + "," +
           (p.valid ? "1" : "0") + "\n";
  }
  out << buf;
  finish(out, path);
}

PointCloud read_cloud_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  PointCloud cloud;
  if (!read_line(in, line) || line.rfind("# frame: ", 0) != 0) {
    throw IoError(path.string() + ": missing frame id line");
  }
  cloud.frame_id = line.substr(9);
  if (!read_line(in, line) || line != "x,y,z,beam_row,azimuth_col,valid") {
    throw IoError(path.string() + ": bad point cloud header");
  }
  while (read_line(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 6) throw IoError(path.string() + ": expected 6 fields per row");
    LidarPoint p;
    p.x = parse_double_field(fields[0], path);
    p.y = parse_double_field(fields[1], path);
    p.z = parse_double_field(fields[2], path);
    p.beam_row = static_cast<int>(parse_long_field(fields[3], path));
    p.azimuth_col = static_cast<int>(parse_long_field(fields[4], path));
    long valid = parse_long_field(fields[5], path);
    if (valid != 0 && valid != 1) throw IoError(path.string() + ": valid flag must be 0 or 1");
    p.valid = valid == 1;
    cloud.points.push_back(p);
  }
  return cloud;
}

void write_calib_toml(const std::filesystem::path& path, const CameraCalibration& calib) {
  toml::Document doc;
  toml::Table& intr = doc.tables["intrinsics"];
  intr.emplace("fx", calib.fx);
  intr.emplace("fy", calib.fy);
  intr.emplace("cx", calib.cx);
  intr.emplace("cy", calib.cy);
  intr.emplace("width", std::int64_t{calib.width});
  intr.emplace("height", std::int64_t{calib.height});
  toml::Array matrix;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) matrix.emplace_back(calib.lidar_to_cam(r, c));
  }
  doc.tables["extrinsics"].emplace("matrix", std::move(matrix));
  toml::write_file(path, doc);
}

CameraCalibration read_calib_toml(const std::filesystem::path& path) {
  toml::Document doc = toml::parse_file(path);
  auto intr_it = doc.tables.find("intrinsics");
  auto extr_it = doc.tables.find("extrinsics");
  if (intr_it == doc.tables.end() || extr_it == doc.tables.end()) {
    throw IoError(path.string() + ": calibration needs [intrinsics] and [extrinsics]");
  }
  const std::string where = path.string();
  CameraCalibration calib;
  calib.fx = toml::require_double(intr_it->second, "fx", where);
  calib.fy = toml::require_double(intr_it->second, "fy", where);
  calib.cx = toml::require_double(intr_it->second, "cx", where);
  calib.cy = toml::require_double(intr_it->second, "cy", where);
  calib.width = static_cast<int>(toml::require_int(intr_it->second, "width", where));
  calib.height = static_cast<int>(toml::require_int(intr_it->second, "height", where));
  auto matrix = toml::require_double_array(extr_it->second, "matrix", where);
  if (matrix.size() != 16) throw IoError(where + ": extrinsic matrix needs 16 entries");
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) calib.lidar_to_cam(r, c) = matrix[r * 4 + c];
  }
  calib.validate();
  return calib;
}

void write_features_csv(const std::filesystem::path& path,
                        const std::vector<SegmentFeature>& features) {
  const long dim = features.empty() ? 0 : features.front().vector.size();
  auto out = open_out(path);
  std::string buf = "frame_id,segment_id";
  for (long i = 0; i < dim; ++i) buf += ",f_" + std::to_string(i);
  buf += "\n";
  for (const SegmentFeature& f : features) {
    if (f.vector.size() != dim) throw IoError("write_features_csv: inconsistent dimensions");
    if (f.frame_id.find_first_of(",\n\r") != std::string::npos) {
      throw IoError("write_features_csv: frame id contains a separator");
    }
    buf += f.frame_id + "," + std::to_string(f.segment_id);
    for (long i = 0; i < dim; ++i) buf += "," + format_double(f.vector[i]);
    buf += "\n";
  }
  out << buf;
  finish(out, path);
}

std::vector<SegmentFeature> read_features_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!read_line(in, line)) throw IoError(path.string() + ": missing header");
  auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "frame_id" || header[1] != "segment_id") {
    throw IoError(path.string() + ": bad features header");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t i = 0; i < dim; ++i) {
    if (header[2 + i] != "f_" + std::to_string(i)) {
      throw IoError(path.string() + ": bad feature column name '" + header[2 + i] + "'");
    }
  }
  std::vector<SegmentFeature> features;
  while (read_line(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw IoError(path.string() + ": row width does not match header");
    }
    SegmentFeature f;
    f.frame_id = fields[0];
    f.segment_id = static_cast<int>(parse_long_field(fields[1], path));
    f.vector.resize(static_cast<long>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
      f.vector[static_cast<long>(i)] = parse_double_field(fields[2 + i], path);
    }
    features.push_back(std::move(f));
  }
  return features;
}

void write_cluster_csv(const std::filesystem::path& path, const ClusterModel& model) {
  auto out = open_out(path);
  std::string buf = "k,D,seed,inertia\n";
  buf += std::to_string(model.k) + "," + std::to_string(model.centroids.cols()) + "," +
         std::to_string(model.seed) + "," + format_double(model.inertia) + "\n";
  for (int j = 0; j < model.k; ++j) {
    for (long d = 0; d < model.centroids.cols(); ++d) {
      if (d) buf += ",";
      buf += format_double(model.centroids(j, d));
    }
    buf += "\n";
  }
  out << buf;
  finish(out, path);
}

ClusterModel read_cluster_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!read_line(in, line) || line != "k,D,seed,inertia") {
    throw IoError(path.string() + ": bad cluster model header");
  }
  if (!read_line(in, line)) throw IoError(path.string() + ": missing model row");
  auto fields = split_csv_line(line);
  if (fields.size() != 4) throw IoError(path.string() + ": model row needs 4 fields");
  ClusterModel model;
  model.k = static_cast<int>(parse_long_field(fields[0], path));
  long dim = parse_long_field(fields[1], path);
  unsigned long long seed = 0;
  {
    const std::string& s = fields[2];
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw IoError(path.string() + ": malformed seed");
    }
  }
  model.seed = seed;
  model.inertia = parse_double_field(fields[3], path);
  if (model.k < 1 || dim < 1) throw IoError(path.string() + ": bad model dimensions");
  model.centroids.resize(model.k, dim);
  for (int j = 0; j < model.k; ++j) {
    if (!read_line(in, line)) throw IoError(path.string() + ": missing centroid row");
    auto cells = split_csv_line(line);
    if (static_cast<long>(cells.size()) != dim) {
      throw IoError(path.string() + ": centroid row width mismatch");
    }
    for (long d = 0; d < dim; ++d) model.centroids(j, d) = parse_double_field(cells[d], path);
  }
  return model;
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& buf, std::size_t& at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at++])) << (8 * i);
  return v;
}

double get_f64(const std::string& buf, std::size_t& at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at++])) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void write_classifier(const std::filesystem::path& path, const ClassifierParams& params) {
  std::string buf = "DSEGCLS1";
  put_u32(buf, static_cast<std::uint32_t>(params.input_dim()));
  put_u32(buf, static_cast<std::uint32_t>(params.hidden_dim()));
  put_u32(buf, static_cast<std::uint32_t>(params.classes()));
  for (int r = 0; r < params.w1.rows(); ++r) {
    for (int c = 0; c < params.w1.cols(); ++c) put_f64(buf, params.w1(r, c));
  }
  for (int r = 0; r < params.b1.size(); ++r) put_f64(buf, params.b1[r]);
  for (int r = 0; r < params.w2.rows(); ++r) {
    for (int c = 0; c < params.w2.cols(); ++c) put_f64(buf, params.w2(r, c));
  }
  for (int r = 0; r < params.b2.size(); ++r) put_f64(buf, params.b2[r]);
  auto out = open_out(path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  finish(out, path);
}

ClassifierParams read_classifier(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < 20 || buf.compare(0, 8, "DSEGCLS1") != 0) {
    throw IoError(path.string() + ": not a classifier file");
  }
  std::size_t at = 8;
  std::uint32_t f = get_u32(buf, at);
  std::uint32_t hidden = get_u32(buf, at);
  std::uint32_t k = get_u32(buf, at);
  if (f == 0 || hidden == 0 || k == 0 || f > 65536 || hidden > 65536 || k > 65536) {
    throw IoError(path.string() + ": implausible classifier dimensions");
  }
  std::size_t need = 20 + 8ull * (static_cast<std::size_t>(hidden) * f + hidden +
                                  static_cast<std::size_t>(k) * hidden + k);
  if (buf.size() != need) throw IoError(path.string() + ": classifier payload size mismatch");
  ClassifierParams params;
  params.w1.resize(hidden, f);
  for (std::uint32_t r = 0; r < hidden; ++r) {
    for (std::uint32_t c = 0; c < f; ++c) params.w1(r, c) = get_f64(buf, at);
  }
  params.b1.resize(hidden);
  for (std::uint32_t r = 0; r < hidden; ++r) params.b1[r] = get_f64(buf, at);
  params.w2.resize(k, hidden);
  for (std::uint32_t r = 0; r < k; ++r) {
    for (std::uint32_t c = 0; c < hidden; ++c) params.w2(r, c) = get_f64(buf, at);
  }
  params.b2.resize(k);
  for (std::uint32_t r = 0; r < k; ++r) params.b2[r] = get_f64(buf, at);
  return params;
}

void write_train_log(const std::filesystem::path& path,
                     const std::vector<TrainStep>& trajectory) {
  auto out = open_out(path);
  std::string buf = "step,loss,lr\n";
  for (const TrainStep& s : trajectory) {
    buf += std::to_string(s.step) + "," + format_double(s.loss) + "," + format_double(s.lr) + "\n";
  }
  out << buf;
  finish(out, path);
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  auto out = open_out(path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  finish(out, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return std::move(buf).str();
}

}  // namespace dseg
