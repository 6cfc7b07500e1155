#pragma once

// File formats. Everything is long-format CSV with a fixed header; flows are
// sparse (absent rows are zero counts).
//
//   flows      t,origin,destination,count     t in 1..T, origin/destination 0..I
//   occupancy  t,node,count                   t in -1..T, node 1..I

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "netflow/network.hpp"

namespace netflow::io {

struct CsvRow {
  int line = 0;  // 1-based line in the source
  std::vector<std::string> fields;
};

// Reads a table whose first line must equal `header` exactly. Blank lines
// are skipped; CR before LF is tolerated.
std::vector<CsvRow> read_csv(std::istream& in, std::string_view header);

std::int64_t parse_int(const CsvRow& row, std::size_t column);
double parse_double(const CsvRow& row, std::size_t column);

// Shortest representation that reads back to the same double.
std::string format_double(double v);

struct PanelShape {
  std::optional<int> nodes;
  std::optional<int> length;
};

// Without a declared shape, I and T are the largest indices seen (T at
// least 1).
FlowPanel parse_panel(std::istream& flows, std::istream* occupancy, PanelShape shape = {});
FlowPanel read_panel(const std::filesystem::path& flows, const std::optional<std::filesystem::path>& occupancy,
                     PanelShape shape = {});

// Nonzero flows only; occupancies that were provided.
void write_panel(const FlowPanel& panel, std::ostream& flows, std::ostream& occupancy);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace netflow::io
