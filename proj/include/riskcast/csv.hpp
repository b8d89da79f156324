#pragma once

#include "riskcast/types.hpp"

#include <string>
#include <vector>

namespace riskcast::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Index col(const std::string& name) const;  // -1 if absent
};

Table read_file(const std::string& path);
void write_file(const std::string& path, const Table& table);

std::vector<std::string> split_line(const std::string& line);

/// Round-trip safe double formatting (shortest %.17g form).
std::string fmt(double v);

/// Strict numeric parse; throws DataError on garbage.
double parse_double(const std::string& s, const std::string& context);

}  // namespace riskcast::csv
