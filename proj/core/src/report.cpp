#include "waveforge/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace waveforge {
namespace report {

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream os(path);
    if (!os) {
        throw IoError("csv: cannot open '" + path.string() + "' for writing");
    }
    auto emit = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (fields[i].find_first_of(",\n\"") != std::string::npos) {
                throw ValueError("csv: field '" + fields[i] + "' needs quoting, which this "
                                 "writer deliberately does not support");
            }
            os << (i ? "," : "") << fields[i];
        }
        os << "\n";
    };
    emit(header);
    for (const auto& row : rows) {
        if (row.size() != header.size()) {
            throw ValueError("csv: row width " + std::to_string(row.size()) +
                             " does not match header width " + std::to_string(header.size()));
        }
        emit(row);
    }
    if (!os) {
        throw IoError("csv: write failed for '" + path.string() + "'");
    }
}

void write_series_csv(const std::filesystem::path& path, const std::string& index_name,
                      const std::string& value_name, const std::vector<double>& values) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::ostringstream v;
        v.precision(12);
        v << values[i];
        rows.push_back({std::to_string(i), v.str()});
    }
    write_csv(path, {index_name, value_name}, rows);
}

Csv read_csv_strict(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("csv: cannot open '" + path.string() + "'");
    }
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::string field;
        for (const char c : line) {
            if (c == '"') {
                throw FormatError("csv: quoted fields are not supported by the strict reader");
            }
            if (c == ',') {
                out.push_back(field);
                field.clear();
            } else if (c != '\r') {
                field.push_back(c);
            }
        }
        out.push_back(field);
        return out;
    };
    Csv csv;
    std::string line;
    if (!std::getline(is, line)) {
        throw FormatError("csv: '" + path.string() + "' is empty");
    }
    csv.header = split(line);
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        auto row = split(line);
        if (row.size() != csv.header.size()) {
            throw FormatError("csv: row width " + std::to_string(row.size()) +
                              " does not match header in '" + path.string() + "'");
        }
        csv.rows.push_back(std::move(row));
    }
    return csv;
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (const char c : s) {
        switch (c) {
        case '&':
            out += "&amp;";
            break;
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '"':
            out += "&quot;";
            break;
        default:
            out.push_back(c);
        }
    }
    return out;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

} // namespace

void write_line_svg(const std::filesystem::path& path, const std::string& title,
                    const std::vector<Series>& series) {
    if (series.empty()) {
        throw ValueError("svg: no series to plot");
    }
    constexpr double kW = 880.0;
    constexpr double kH = 480.0;
    constexpr double kLeft = 64.0;
    constexpr double kRight = 24.0;
    constexpr double kTop = 48.0;
    constexpr double kBottom = 44.0;

    std::size_t max_len = 0;
    double y_min = 0.0;
    double y_max = 0.0;
    bool first = true;
    for (const auto& s : series) {
        max_len = std::max(max_len, s.y.size());
        for (const double v : s.y) {
            if (!std::isfinite(v)) {
                throw ValueError("svg: non-finite value in series '" + s.name + "'");
            }
            if (first) {
                y_min = y_max = v;
                first = false;
            } else {
                y_min = std::min(y_min, v);
                y_max = std::max(y_max, v);
            }
        }
    }
    if (max_len < 2) {
        throw ValueError("svg: series need at least two points");
    }
    if (y_max - y_min < 1e-12) {
        y_max += 0.5;
        y_min -= 0.5;
    }
    const double pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    const double plot_w = kW - kLeft - kRight;
    const double plot_h = kH - kTop - kBottom;
    auto sx = [&](double i) { return kLeft + plot_w * i / static_cast<double>(max_len - 1); };
    auto sy = [&](double v) { return kTop + plot_h * (1.0 - (v - y_min) / (y_max - y_min)); };

    std::ofstream os(path);
    if (!os) {
        throw IoError("svg: cannot open '" + path.string() + "' for writing");
    }
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
       << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    os << "  <rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
    os << "  <text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
       << " font-size=\"15\">" << xml_escape(title) << "</text>\n";
    // axes
    os << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
       << kTop + plot_h << "\" stroke=\"#222\"/>\n";
    os << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
       << "\" y2=\"" << kTop + plot_h << "\" stroke=\"#222\"/>\n";
    os.precision(6);
    os << "  <text x=\"" << kLeft - 6 << "\" y=\"" << sy(y_max - pad) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << y_max - pad
       << "</text>\n";
    os << "  <text x=\"" << kLeft - 6 << "\" y=\"" << sy(y_min + pad) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << y_min + pad
       << "</text>\n";
    os << "  <text x=\"" << kLeft << "\" y=\"" << kH - 12
       << "\" font-family=\"sans-serif\" font-size=\"11\">0</text>\n";
    os << "  <text x=\"" << kLeft + plot_w << "\" y=\"" << kH - 12
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << max_len - 1 << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
        os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            os << (i ? " " : "") << sx(static_cast<double>(i)) << "," << sy(s.y[i]);
        }
        os << "\"/>\n";
        // legend entry
        const double ly = kTop + 16.0 * static_cast<double>(si);
        os << "  <line x1=\"" << kLeft + plot_w - 150 << "\" y1=\"" << ly << "\" x2=\""
           << kLeft + plot_w - 130 << "\" y2=\"" << ly << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        os << "  <text x=\"" << kLeft + plot_w - 124 << "\" y=\"" << ly + 4
           << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.name)
           << "</text>\n";
    }
    os << "</svg>\n";
    if (!os) {
        throw IoError("svg: write failed for '" + path.string() + "'");
    }
}

} // namespace report
} // namespace waveforge
