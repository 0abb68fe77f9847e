#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "distglm/errors.hpp"
#include "distglm/family.hpp"

namespace distglm {

namespace detail {

inline double parse_cell(std::string_view cell, std::size_t line, std::size_t column,
                         const std::string& path) {
    // Tolerate surrounding spaces and tabs, which spreadsheets like to emit.
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw ParseError("malformed numeric cell at line " + std::to_string(line) + ", column " +
                         std::to_string(column) + " of " + path + ": '" + std::string(cell) + "'");
    }
    return value;
}

}  // namespace detail

// Reads a rectangular numeric CSV (comma separator, '.' decimal point, LF or
// CRLF line endings), optionally skipping one header line.
inline Eigen::MatrixXd read_csv_matrix(const std::string& path, bool header = false) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open " + path);
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (header && line_no == 1) {
            continue;
        }
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) {
            break;  // trailing newline at end of file
        }
        std::vector<double> row;
        std::string_view rest(line);
        std::size_t column = 1;
        while (true) {
            const std::size_t comma = rest.find(',');
            const std::string_view cell =
                comma == std::string_view::npos ? rest : rest.substr(0, comma);
            row.push_back(detail::parse_cell(cell, line_no, column, path));
            if (comma == std::string_view::npos) {
                break;
            }
            rest.remove_prefix(comma + 1);
            ++column;
        }
        if (width == 0) {
            width = row.size();
        } else if (row.size() != width) {
            throw ParseError("line " + std::to_string(line_no) + " of " + path + " has " +
                             std::to_string(row.size()) + " cells but earlier lines have " +
                             std::to_string(width));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw ParseError(path + " contains no data rows");
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return out;
}

// Reads a single-column CSV as a vector.
inline Eigen::VectorXd read_csv_vector(const std::string& path, bool header = false) {
    const Eigen::MatrixXd m = read_csv_matrix(path, header);
    if (m.cols() != 1) {
        throw ParseError(path + " should have a single column, found " + std::to_string(m.cols()));
    }
    return m.col(0);
}

// Loads a design matrix and response vector pair, checking that the case
// counts line up.  Family-specific response validation happens at fit time.
inline Dataset ingest_csv(const std::string& x_path, const std::string& y_path,
                          bool header = false) {
    Dataset data;
    data.X = read_csv_matrix(x_path, header);
    data.y = read_csv_vector(y_path, header);
    if (data.y.size() != data.X.rows()) {
        throw InvalidInputError("design " + x_path + " has " + std::to_string(data.X.rows()) +
                                " cases but response " + y_path + " has " +
                                std::to_string(data.y.size()));
    }
    return data;
}

namespace detail {

inline void append_number(std::string& out, double value) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    out.append(buf, ptr);
}

}  // namespace detail

// Writes a matrix as CSV with shortest round-trip decimal representations,
// so a written file reloads to bit-identical values.
inline void write_csv(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ParseError("cannot open " + path + " for writing");
    }
    std::string line;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        line.clear();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) line.push_back(',');
            detail::append_number(line, m(i, j));
        }
        line.push_back('\n');
        out << line;
    }
    if (!out) {
        throw ParseError("failed while writing " + path);
    }
}

inline void write_csv(const std::string& path, const Eigen::VectorXd& v) {
    write_csv(path, Eigen::MatrixXd(v));
}

}  // namespace distglm
