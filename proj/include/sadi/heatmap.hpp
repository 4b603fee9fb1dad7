#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sadi/matrix.hpp"

namespace sadi {

/// Min-max scaling of a value map to 8-bit gray. A constant map renders as
/// uniform mid-gray (128).
inline std::vector<std::uint8_t> gray_scale(const std::vector<double>& values) {
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<std::uint8_t> out(values.size());
    if (lo == hi) {
        std::fill(out.begin(), out.end(), std::uint8_t(128));
        return out;
    }
    const double scale = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = static_cast<std::uint8_t>(std::lround((values[i] - lo) * scale));
    }
    return out;
}

/// Binary 8-bit PGM (P5). values.size() must be divisible by width.
inline void write_pgm(const std::string& path, const std::vector<double>& values, int width) {
    if (width < 1 || values.empty() || values.size() % static_cast<std::size_t>(width) != 0) {
        throw std::invalid_argument("write_pgm: " + std::to_string(values.size()) +
                                    " values do not form a grid of width " +
                                    std::to_string(width));
    }
    const int height = static_cast<int>(values.size()) / width;
    const auto pixels = gray_scale(values);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << "P5\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
    if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

/// Raw values as CSV rows matching the PGM grid.
inline void write_grid_csv(const std::string& path, const std::vector<double>& values,
                           int width) {
    if (width < 1 || values.empty() || values.size() % static_cast<std::size_t>(width) != 0) {
        throw std::invalid_argument("write_grid_csv: values do not form a grid of width " +
                                    std::to_string(width));
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << std::setprecision(17);
    for (std::size_t i = 0; i < values.size(); ++i) {
        os << values[i];
        os << (((i + 1) % width == 0) ? '\n' : ',');
    }
    if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

/// Reads a numeric CSV into a matrix; every row must have the same arity.
inline matrix<double> read_csv_matrix(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r,") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw std::runtime_error(path + ": non-numeric cell '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw std::runtime_error(path + ": ragged CSV rows");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path + ": empty CSV");
    matrix<double> out(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            out(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
        }
    }
    return out;
}

}  // namespace sadi
