#include "stvnn/series_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stvnn/config.hpp"

namespace stvnn {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

SeriesFile parse_series_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line)) throw InputError("series csv: missing header row");
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  SeriesFile file;
  const bool has_time = !header.empty() && header.front() == "timestamp";
  if (has_time) {
    header.erase(header.begin());
    file.timestamps.emplace();
  }
  if (header.empty() || (header.size() == 1 && header[0].empty()))
    throw InputError("series csv: header names no variables");
  file.names = header;
  const std::size_t n = header.size();

  std::vector<double> values;
  int row = 1;
  int rows = 0;
  while (std::getline(ss, line)) {
    ++row;
    if (trim(line).empty() || trim(line) == "\r") continue;
    std::vector<std::string> cells = split_csv_line(line);
    const std::size_t expected = n + (has_time ? 1 : 0);
    if (cells.size() != expected)
      throw InputError("series csv row " + std::to_string(row) + ": expected " + std::to_string(expected) +
                       " cells, found " + std::to_string(cells.size()));
    std::size_t first = 0;
    if (has_time) {
      file.timestamps->push_back(trim(cells[0]));
      first = 1;
    }
    for (std::size_t j = first; j < cells.size(); ++j) {
      const std::string c = trim(cells[j]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (c.empty() || ec != std::errc() || ptr != c.data() + c.size() || !std::isfinite(v))
        throw InputError("series csv row " + std::to_string(row) + ", column " + std::to_string(j + 1) +
                         ": '" + c + "' is not a finite number");
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw InputError("series csv: no data rows");
  file.values = Eigen::Map<const Series>(values.data(), rows, static_cast<Eigen::Index>(n));
  return file;
}

SeriesFile read_series_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("series csv: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_series_csv(ss.str());
}

std::string format_series_csv(const SeriesFile& file) {
  if (static_cast<Eigen::Index>(file.names.size()) != file.values.cols())
    throw PreconditionError("series csv: name count does not match the columns");
  if (file.timestamps && static_cast<Eigen::Index>(file.timestamps->size()) != file.values.rows())
    throw PreconditionError("series csv: timestamp count does not match the rows");
  std::string out;
  if (file.timestamps) out += "timestamp,";
  for (std::size_t j = 0; j < file.names.size(); ++j) out += (j ? "," : "") + file.names[j];
  out += "\n";
  for (Eigen::Index i = 0; i < file.values.rows(); ++i) {
    if (file.timestamps) out += (*file.timestamps)[i] + ",";
    for (Eigen::Index j = 0; j < file.values.cols(); ++j) out += (j ? "," : "") + format_double(file.values(i, j));
    out += "\n";
  }
  return out;
}

void write_series_csv(const std::string& path, const SeriesFile& file) {
  const std::string text = format_series_csv(file);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("series csv: cannot write '" + path + "'");
  out << text;
}

SeriesFile make_series_file(const Series& values) {
  SeriesFile f;
  for (Eigen::Index j = 0; j < values.cols(); ++j) f.names.push_back("x" + std::to_string(j));
  f.values = values;
  return f;
}

std::uint64_t series_fingerprint(const SeriesFile& file) {
  std::uint64_t h = fnv1a(file.values.data(), static_cast<std::size_t>(file.values.size()) * sizeof(double));
  for (const auto& name : file.names) h = fnv1a(name.data(), name.size(), h);
  return h;
}

}  // namespace stvnn
