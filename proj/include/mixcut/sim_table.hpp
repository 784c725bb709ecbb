#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixcut/errors.hpp"

namespace mixcut {

// Joint draws of (parameters, summaries), one row per simulation. The first
// param_count columns are parameters, the rest are summary statistics.
struct SimTable {
    std::vector<std::string> labels;
    Eigen::MatrixXd values;  // n x d
    int param_count = 0;

    int rows() const { return static_cast<int>(values.rows()); }
    int cols() const { return static_cast<int>(values.cols()); }

    void validate() const {
        require(!labels.empty(), "sim table: no columns");
        require(static_cast<int>(labels.size()) == cols(),
                "sim table: label count " + std::to_string(labels.size()) +
                    " does not match column count " + std::to_string(cols()));
        for (std::size_t a = 0; a < labels.size(); ++a)
            for (std::size_t b = a + 1; b < labels.size(); ++b)
                require(labels[a] != labels[b], "sim table: duplicate column '" + labels[a] + "'");
        require(param_count >= 0 && param_count <= cols(),
                "sim table: param_count " + std::to_string(param_count) + " out of range");
        require(rows() >= 1, "sim table: no rows");
        if (!values.allFinite()) {
            for (int i = 0; i < rows(); ++i)
                for (int j = 0; j < cols(); ++j)
                    if (!std::isfinite(values(i, j)))
                        throw contract_error("sim table: non-finite value at row " +
                                             std::to_string(i) + ", column '" +
                                             labels[static_cast<std::size_t>(j)] + "'");
        }
    }

    // Too few rows to support a d-dimensional mixture fit; worth a warning upstream.
    bool is_underpowered() const { return rows() < 10 * cols(); }

    int column_index(const std::string& name) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == name) return static_cast<int>(i);
        throw contract_error("sim table has no column named '" + name + "'");
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw contract_error("cannot open '" + path + "' for writing");
        for (std::size_t j = 0; j < labels.size(); ++j)
            out << (j ? "," : "") << labels[j];
        out << "\n";
        char buf[64];
        for (int i = 0; i < rows(); ++i) {
            for (int j = 0; j < cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", values(i, j));
                out << (j ? "," : "") << buf;
            }
            out << "\n";
        }
        if (!out) throw contract_error("write to '" + path + "' failed");
    }

    static SimTable read_csv(const std::string& path, int param_count) {
        std::ifstream in(path);
        if (!in) throw contract_error("cannot open '" + path + "' for reading");
        std::string line;
        if (!std::getline(in, line)) throw contract_error("'" + path + "' is empty");
        SimTable t;
        t.param_count = param_count;
        {
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) t.labels.push_back(cell);
        }
        std::vector<double> flat;
        int nrows = 0;
        const int ncols = static_cast<int>(t.labels.size());
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string cell;
            int c = 0;
            while (std::getline(ss, cell, ',')) {
                std::size_t used = 0;
                double v;
                try {
                    v = std::stod(cell, &used);
                } catch (const std::exception&) {
                    throw contract_error("'" + path + "' row " + std::to_string(nrows + 1) +
                                         ": cannot parse '" + cell + "' as a number");
                }
                flat.push_back(v);
                ++c;
            }
            require(c == ncols, "'" + path + "' row " + std::to_string(nrows + 1) + " has " +
                                    std::to_string(c) + " cells, expected " +
                                    std::to_string(ncols));
            ++nrows;
        }
        t.values.resize(nrows, ncols);
        for (int i = 0; i < nrows; ++i)
            for (int j = 0; j < ncols; ++j)
                t.values(i, j) = flat[static_cast<std::size_t>(i) * ncols + j];
        t.validate();
        return t;
    }
};

}  // namespace mixcut
