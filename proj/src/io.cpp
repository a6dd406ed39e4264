#include "vitac/io.hpp"

#include "vitac/error.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vitac {

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Exactly N whitespace-separated doubles.
template <std::size_t N>
std::array<double, N> parse_numbers(std::string_view s, std::size_t line_no) {
  std::array<double, N> out{};
  std::size_t got = 0;
  while (true) {
    s = trim(s);
    if (s.empty()) break;
    if (got == N) fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": too many values");
    double v = 0.0;
    const char* end = s.data() + s.size();
    const char* start = s.data();
    if (*start == '+') ++start;
    const auto res = std::from_chars(start, end, v);
    if (res.ec != std::errc{} || !std::isfinite(v)) {
      fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": bad number");
    }
    const std::size_t used = static_cast<std::size_t>(res.ptr - s.data());
    if (used < s.size() && s[used] != ' ' && s[used] != '\t' && s[used] != '\r') {
      fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": bad separator");
    }
    out[got++] = v;
    s.remove_prefix(used);
  }
  if (got != N) fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected " + std::to_string(N) + " values");
  return out;
}

}  // namespace

std::string format_cloud(const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 40 + 64);
  out += "#modality: ";
  out += to_string(cloud.modality);
  out += '\n';
  if (cloud.label) {
    out += "#label: " + *cloud.label + '\n';
  }
  if (cloud.sensor_origin) {
    const Point& o = *cloud.sensor_origin;
    out += "#sensor_origin: " + format_double(o.x()) + ' ' + format_double(o.y()) + ' ' +
           format_double(o.z()) + '\n';
  }
  for (const auto& p : cloud.points) {
    out += format_double(p.x());
    out += ' ';
    out += format_double(p.y());
    out += ' ';
    out += format_double(p.z());
    out += '\n';
  }
  return out;
}

PointCloud parse_cloud(std::string_view text) {
  PointCloud cloud;
  bool have_modality = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::size_t colon = line.find(':');
      if (colon == std::string_view::npos) continue;  // free comment
      const std::string_view key = trim(line.substr(1, colon - 1));
      const std::string_view value = trim(line.substr(colon + 1));
      if (key == "modality") {
        cloud.modality = parse_modality(std::string(value));
        have_modality = true;
      } else if (key == "label") {
        if (value.empty()) fail(ErrorCode::Parse, "empty label");
        cloud.label = std::string(value);
      } else if (key == "sensor_origin") {
        const auto v = parse_numbers<3>(value, line_no);
        cloud.sensor_origin = Point(v[0], v[1], v[2]);
      }
      continue;
    }
    const auto v = parse_numbers<3>(line, line_no);
    cloud.points.emplace_back(v[0], v[1], v[2]);
  }
  if (!have_modality) fail(ErrorCode::Parse, "missing #modality header");
  return cloud;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) fail(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

PointCloud read_cloud(const std::filesystem::path& path) {
  try {
    return parse_cloud(read_text(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Parse) fail(ErrorCode::Parse, path.string() + ": " + e.what());
    throw;
  }
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  write_text_atomic(path, format_cloud(cloud));
}

}  // namespace vitac
