#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace metosc::io {

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

/// Comma-joined round-trip formatted values.
void write_row(std::ostream& os, std::span<const double> values);

/// FNV-1a 64-bit hash, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

/// Writes text to path, creating parent directories. Throws on failure.
void write_file(const std::filesystem::path& path, std::string_view text);

/// Binary PPM (P6) of a row-major width x height value field. NaN cells are
/// drawn white; others map through a perceptual ramp between lo and hi.
void write_heatmap_ppm(const std::filesystem::path& path, std::span<const double> values,
                       std::size_t width, std::size_t height, double lo, double hi);

/// RGB of the ramp at u in [0, 1].
std::array<std::uint8_t, 3> ramp_color(double u);

}  // namespace metosc::io
