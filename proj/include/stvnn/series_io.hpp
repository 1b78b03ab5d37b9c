#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stvnn/types.hpp"

namespace stvnn {

// Header of variable names, one row per time step. An optional leading
// `timestamp` column is carried through untouched.
struct SeriesFile {
  std::vector<std::string> names;
  std::optional<std::vector<std::string>> timestamps;
  Series values;
};

// Throws InputError naming the offending row (1-based, header = row 1) and column.
SeriesFile parse_series_csv(const std::string& text);
SeriesFile read_series_csv(const std::string& path);

std::string format_series_csv(const SeriesFile& file);
void write_series_csv(const std::string& path, const SeriesFile& file);

// Default names x0..x{N-1}.
SeriesFile make_series_file(const Series& values);

// Shortest round-trip text for a double.
std::string format_double(double v);

// FNV-1a over the values (row-major) and names.
std::uint64_t series_fingerprint(const SeriesFile& file);

}  // namespace stvnn
