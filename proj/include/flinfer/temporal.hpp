#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flinfer/errors.hpp"

namespace flinfer {

// E x C record of per-class accuracy across training rounds.
struct TemporalMatrix {
    std::size_t rounds = 0;
    std::size_t classes = 0;
    std::vector<double> values;

    TemporalMatrix() = default;
    TemporalMatrix(std::size_t e, std::size_t c) : rounds(e), classes(c), values(e * c, 0.0) {}

    double& at(std::size_t t, std::size_t c) { return values[t * classes + c]; }
    double at(std::size_t t, std::size_t c) const { return values[t * classes + c]; }

    std::span<double> row(std::size_t t) { return {values.data() + t * classes, classes}; }
    std::span<const double> row(std::size_t t) const {
        return {values.data() + t * classes, classes};
    }

    void append_row(const std::vector<double>& acc) {
        if (classes == 0) classes = acc.size();
        if (acc.size() != classes) throw ShapeError("TemporalMatrix: row width mismatch");
        for (double v : acc) {
            if (v < 0.0 || v > 1.0) throw ValidationError("TemporalMatrix: accuracy outside [0, 1]");
            values.push_back(v);
        }
        rounds++;
    }
};

// CSV with header `round,acc_0,...,acc_{C-1}`.
inline std::string temporal_to_csv(const TemporalMatrix& m) {
    std::ostringstream out;
    out << "round";
    for (std::size_t c = 0; c < m.classes; ++c) out << ",acc_" << c;
    out << "\n";
    char buf[32];
    for (std::size_t t = 0; t < m.rounds; ++t) {
        out << (t + 1);
        for (std::size_t c = 0; c < m.classes; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", m.at(t, c));
            out << ',' << buf;
        }
        out << "\n";
    }
    return out.str();
}

inline void save_temporal_csv(const TemporalMatrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("temporal: cannot write " + path);
    out << temporal_to_csv(m);
}

inline TemporalMatrix load_temporal_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("temporal: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("temporal: empty file " + path);
    TemporalMatrix m;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<double> acc;
        bool first = true;
        while (std::getline(row, cell, ',')) {
            if (first) {
                first = false;
                continue;
            }
            acc.push_back(std::stod(cell));
        }
        m.append_row(acc);
    }
    return m;
}

}  // namespace flinfer
