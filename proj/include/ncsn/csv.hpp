#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ncsn/error.hpp"
#include "ncsn/tensor.hpp"

namespace ncsn::csv {

// Shortest representation that round-trips a double.
inline std::string format(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Writes `contents` next to `path` and renames it into place.
inline void atomic_write(const std::filesystem::path& path, const std::string& contents) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string header_x(std::size_t dim) {
  std::string h;
  for (std::size_t d = 0; d < dim; ++d) {
    if (d) h += ',';
    h += "x" + std::to_string(d + 1);
  }
  return h;
}

// One row per point, columns x1..xD.
inline std::string batch_to_csv(const Tensor& batch) {
  std::ostringstream os;
  os << header_x(batch.cols()) << '\n';
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    for (std::size_t d = 0; d < batch.cols(); ++d) {
      if (d) os << ',';
      os << format(batch(i, d));
    }
    os << '\n';
  }
  return os.str();
}

inline void write_batch(const std::filesystem::path& path, const Tensor& batch) {
  atomic_write(path, batch_to_csv(batch));
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Minimal reader for the files this library writes (no quoting).
inline Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

}  // namespace ncsn::csv
