#include "metosc/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace metosc::io {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_row(std::ostream& os, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ',';
    os << format_double(values[i]);
  }
  os << '\n';
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[i] = digits[h & 0xf];
  return out;
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::array<std::uint8_t, 3> ramp_color(double u) {
  // Piecewise-linear approximation of viridis.
  static const double stops[][3] = {{68, 1, 84},    {59, 82, 139},  {33, 145, 140},
                                    {94, 201, 98},  {253, 231, 37}};
  u = std::clamp(std::isfinite(u) ? u : 0.0, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(u));
  const double f = u - i;
  std::array<std::uint8_t, 3> c{};
  for (int k = 0; k < 3; ++k)
    c[k] = static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  return c;
}

void write_heatmap_ppm(const std::filesystem::path& path, std::span<const double> values,
                       std::size_t width, std::size_t height, double lo, double hi) {
  if (values.size() != width * height) throw std::invalid_argument("heatmap: size mismatch");
  std::string data = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  // Image rows run top to bottom, so the last value row is drawn first.
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double v = values[(height - 1 - r) * width + c];
      if (std::isnan(v)) {
        data.append(3, static_cast<char>(255));
      } else {
        const auto rgb = ramp_color((v - lo) / span);
        for (auto b : rgb) data.push_back(static_cast<char>(b));
      }
    }
  }
  write_file(path, data);
}

}  // namespace metosc::io
