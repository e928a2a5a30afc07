#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "waveforge/error.hpp"

namespace waveforge {
namespace report {

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Two-column convenience writer (column 1 index/bin, column 2 value).
void write_series_csv(const std::filesystem::path& path, const std::string& index_name,
                      const std::string& value_name, const std::vector<double>& values);

// Strict reader: comma separation, no quoting, every row must match the
// header width.
Csv read_csv_strict(const std::filesystem::path& path);

struct Series {
    std::string name;
    std::vector<double> y;
};

// Minimal static line chart, one polyline per series, with axes and legend.
void write_line_svg(const std::filesystem::path& path, const std::string& title,
                    const std::vector<Series>& series);

} // namespace report
} // namespace waveforge
