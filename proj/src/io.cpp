#include "netflow/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "netflow/error.hpp"

namespace netflow::io {

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::size_t column_count(std::string_view header) { return static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1; }

}  // namespace

std::vector<CsvRow> read_csv(std::istream& in, std::string_view header) {
  std::vector<CsvRow> rows;
  std::string line;
  int number = 0;
  bool seen_header = false;
  const std::size_t width = column_count(header);
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!seen_header) {
      if (number == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      if (line != header) throw ParseError("expected header '" + std::string(header) + "', got '" + line + "'", number);
      seen_header = true;
      continue;
    }
    if (line.empty()) continue;
    CsvRow row{number, split(line)};
    if (row.fields.size() != width)
      throw ParseError("expected " + std::to_string(width) + " fields, got " + std::to_string(row.fields.size()),
                       number);
    rows.push_back(std::move(row));
  }
  if (!seen_header) throw ParseError("empty file, expected header '" + std::string(header) + "'", 1);
  return rows;
}

std::int64_t parse_int(const CsvRow& row, std::size_t column) {
  const std::string& s = row.fields.at(column);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError("field " + std::to_string(column + 1) + ": '" + s + "' is not an integer", row.line);
  return v;
}

double parse_double(const CsvRow& row, std::size_t column) {
  const std::string& s = row.fields.at(column);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError("field " + std::to_string(column + 1) + ": '" + s + "' is not a number", row.line);
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

FlowPanel parse_panel(std::istream& flows, std::istream* occupancy, PanelShape shape) {
  const auto flow_rows = read_csv(flows, "t,origin,destination,count");
  std::vector<CsvRow> occ_rows;
  if (occupancy) occ_rows = read_csv(*occupancy, "t,node,count");

  struct Flow {
    std::int64_t t, i, j, x;
    int line;
  };
  std::vector<Flow> parsed;
  parsed.reserve(flow_rows.size());
  std::int64_t max_node = 0, max_t = 0;
  for (const auto& row : flow_rows) {
    Flow f{parse_int(row, 0), parse_int(row, 1), parse_int(row, 2), parse_int(row, 3), row.line};
    if (f.t < 1) throw ParseError("t must be at least 1", row.line);
    if (f.i < 0 || f.j < 0) throw ParseError("node indices must be non-negative", row.line);
    if (f.i == 0 && f.j == 0) throw ParseError("edge (0,0) is not part of the network", row.line);
    if (f.x < 0) throw ParseError("negative count", row.line);
    max_node = std::max({max_node, f.i, f.j});
    max_t = std::max(max_t, f.t);
    parsed.push_back(f);
  }
  for (const auto& row : occ_rows) {
    const auto t = parse_int(row, 0), node = parse_int(row, 1);
    if (node < 1) throw ParseError("occupancy node must be at least 1", row.line);
    if (t < -1) throw ParseError("occupancy t must be at least -1", row.line);
    max_node = std::max(max_node, node);
    max_t = std::max(max_t, t);
  }

  const std::int64_t nodes = shape.nodes.value_or(static_cast<int>(max_node));
  const std::int64_t length = shape.length.value_or(static_cast<int>(std::max<std::int64_t>(max_t, 1)));
  if (nodes < 1) throw ConfigError("panel: could not infer the node count; declare it in the config");
  if (max_node > nodes) throw ConfigError("panel: node index " + std::to_string(max_node) + " exceeds declared count");
  if (max_t > length) throw ConfigError("panel: time index " + std::to_string(max_t) + " exceeds declared length");

  FlowPanel panel(static_cast<int>(nodes), static_cast<int>(length));
  std::set<std::tuple<std::int64_t, std::int64_t, std::int64_t>> keys;
  for (const auto& f : parsed) {
    if (!keys.insert({f.t, f.i, f.j}).second) throw ParseError("duplicate flow key", f.line);
    panel.set_count(static_cast<int>(f.i), static_cast<int>(f.j), static_cast<int>(f.t), f.x);
  }
  std::set<std::pair<std::int64_t, std::int64_t>> occ_keys;
  for (const auto& row : occ_rows) {
    const auto t = parse_int(row, 0), node = parse_int(row, 1), n = parse_int(row, 2);
    if (n < 0) throw ParseError("negative occupancy", row.line);
    if (!occ_keys.insert({t, node}).second) throw ParseError("duplicate occupancy key", row.line);
    panel.set_occupancy(static_cast<int>(node), static_cast<int>(t), n);
  }
  return panel;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw ConfigError("write failed for " + path.string());
}

FlowPanel read_panel(const std::filesystem::path& flows, const std::optional<std::filesystem::path>& occupancy,
                     PanelShape shape) {
  std::istringstream f(read_file(flows));
  if (!occupancy) return parse_panel(f, nullptr, shape);
  std::istringstream o(read_file(*occupancy));
  return parse_panel(f, &o, shape);
}

void write_panel(const FlowPanel& panel, std::ostream& flows, std::ostream& occupancy) {
  flows << "t,origin,destination,count\n";
  for (int t = 1; t <= panel.length(); ++t)
    for (int i = 0; i <= panel.nodes(); ++i)
      for (int j = 0; j <= panel.nodes(); ++j) {
        if (i == 0 && j == 0) continue;
        if (const auto x = panel.count(i, j, t)) flows << t << ',' << i << ',' << j << ',' << x << '\n';
      }
  occupancy << "t,node,count\n";
  for (int t = -1; t <= panel.length(); ++t)
    for (int i = 1; i <= panel.nodes(); ++i)
      if (const auto n = panel.occupancy(i, t)) occupancy << t << ',' << i << ',' << *n << '\n';
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace netflow::io
