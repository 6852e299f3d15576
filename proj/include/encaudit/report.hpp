#pragma once

// CSV reports with a provenance preamble, and minimal SVG charts.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "encaudit/errors.hpp"

namespace encaudit {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Fixed 9 significant digits so reruns are byte-identical.
inline std::string format_real(double v) {
    if (v == 0.0) return "0";  // folds -0
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

struct Provenance {
    std::string config_hash;
    nlohmann::json seeds = nlohmann::json::object();
    std::vector<std::string> notes;

    std::vector<std::string> lines() const {
        std::vector<std::string> out = {"tool=encaudit version=" + std::string(kToolVersion),
                                        "config_hash=" + config_hash, "seeds=" + seeds.dump()};
        out.insert(out.end(), notes.begin(), notes.end());
        return out;
    }
};

// Provenance lines are written as leading '#' comments.
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, std::vector<std::string> columns, const Provenance& provenance)
        : out_(path, std::ios::binary), columns_(std::move(columns)) {
        if (!out_) throw ConfigError("cannot write report " + path.string());
        for (const auto& line : provenance.lines()) out_ << "# " << line << '\n';
        write_fields(columns_);
    }

    void row(const std::vector<std::string>& fields) {
        if (fields.size() != columns_.size())
            throw InternalError("CSV row has " + std::to_string(fields.size()) + " fields, expected " +
                                std::to_string(columns_.size()));
        write_fields(fields);
        ++rows_;
    }

    std::size_t rows() const { return rows_; }

  private:
    void write_fields(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            const auto& f = fields[i];
            if (f.find_first_of(",\"\n") != std::string::npos) {
                out_ << '"';
                for (char c : f) {
                    if (c == '"') out_ << '"';
                    out_ << c;
                }
                out_ << '"';
            } else {
                out_ << f;
            }
        }
        out_ << '\n';
    }

    std::ofstream out_;
    std::vector<std::string> columns_;
    std::size_t rows_ = 0;
};

struct CsvTable {
    std::vector<std::string> comments;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) throw FormatError("CSV has no column " + name);
        return static_cast<std::size_t>(it - columns.begin());
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    return fields;
}

}  // namespace detail

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    CsvTable t;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("#", 0) == 0) {
            t.comments.push_back(line.size() > 2 ? line.substr(2) : "");
            continue;
        }
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (t.columns.empty()) {
            t.columns = std::move(fields);
        } else {
            if (fields.size() != t.columns.size())
                throw FormatError(path.string() + ": row with " + std::to_string(fields.size()) + " fields, header has " +
                                  std::to_string(t.columns.size()));
            t.rows.push_back(std::move(fields));
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// SVG

namespace svg {

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

inline std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series) {
    const double width = 640, height = 400, left = 60, right = 150, top = 40, bottom = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = 0.0, y1 = 1.0;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    if (!(x1 > x0)) {
        x0 = 0;
        x1 = 1;
    }
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = y0 + (y1 - y0) * i / 4.0;
        o << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
          << format_real(std::round(y * 1000) / 1000) << "</text>\n";
    }
    for (const auto& s : series)
        for (const auto& [x, _] : s.points)
            o << "<text x=\"" << px(x) << "\" y=\"" << top + ph + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
              << format_real(x) << "</text>\n";
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << escape(x_label) << "</text>\n";
    o << "<text x=\"14\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
      << top + ph / 2 << ")\">" << escape(y_label) << "</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % std::size(kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : series[i].points) o << px(x) << ',' << py(y) << ' ';
        o << "\"/>\n";
        o << "<text x=\"" << left + pw + 10 << "\" y=\"" << top + 14 * (i + 1) << "\" font-size=\"11\" fill=\"" << color
          << "\">" << escape(series[i].name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

// values[row][col] in [0,1]; darker is larger.
inline std::string heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                           const std::vector<std::string>& col_labels, const std::vector<std::vector<double>>& values) {
    const double cell = 36, left = 70, top = 40;
    const double width = left + cell * static_cast<double>(col_labels.size()) + 20;
    const double height = top + cell * static_cast<double>(row_labels.size()) + 30;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
    for (std::size_t r = 0; r < row_labels.size(); ++r) {
        o << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * (r + 0.5) + 4
          << "\" text-anchor=\"end\" font-size=\"11\">" << escape(row_labels[r]) << "</text>\n";
        for (std::size_t c = 0; c < col_labels.size(); ++c) {
            const double v = std::clamp(values.at(r).at(c), 0.0, 1.0);
            const int shade = static_cast<int>(std::lround(255 - 200 * v));
            o << "<rect x=\"" << left + cell * c << "\" y=\"" << top + cell * r << "\" width=\"" << cell
              << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\"/>\n";
        }
    }
    for (std::size_t c = 0; c < col_labels.size(); ++c)
        o << "<text x=\"" << left + cell * (c + 0.5) << "\" y=\"" << top + cell * row_labels.size() + 16
          << "\" text-anchor=\"middle\" font-size=\"10\">" << escape(col_labels[c]) << "</text>\n";
    o << "</svg>\n";
    return o.str();
}

}  // namespace svg

}  // namespace encaudit
