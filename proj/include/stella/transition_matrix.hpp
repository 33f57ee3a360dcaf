#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stella/errors.hpp"

namespace stella {

// Row-stochastic position-bias matrix: entry (i, y) is the probability the
// ranker puts position y first given the ground truth sits at position i.
struct TransitionMatrix {
    std::size_t dim = 0;
    std::vector<std::vector<double>> entries;       // probabilities
    std::vector<std::vector<std::uint64_t>> counts;  // raw observations (all zero for synthetic T)
    bool smoothing = true;                           // add-one

    static TransitionMatrix uniform(std::size_t dim) {
        TransitionMatrix t;
        t.dim = dim;
        t.entries.assign(dim, std::vector<double>(dim, 1.0 / static_cast<double>(dim)));
        t.counts.assign(dim, std::vector<std::uint64_t>(dim, 0));
        return t;
    }

    static TransitionMatrix identity(std::size_t dim) {
        TransitionMatrix t = uniform(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t y = 0; y < dim; ++y) t.entries[i][y] = i == y ? 1.0 : 0.0;
        }
        return t;
    }

    static TransitionMatrix from_rows(std::vector<std::vector<double>> rows) {
        TransitionMatrix t;
        t.dim = rows.size();
        t.entries = std::move(rows);
        t.counts.assign(t.dim, std::vector<std::uint64_t>(t.dim, 0));
        t.validate();
        return t;
    }

    void validate(double tol = 1e-9) const {
        if (dim < 2) throw Error("transition matrix dim must be >= 2");
        if (entries.size() != dim) throw DimensionMismatch("transition matrix row count != dim");
        for (const auto& row : entries) {
            if (row.size() != dim) throw DimensionMismatch("transition matrix column count != dim");
            double sum = 0.0;
            for (double v : row) {
                if (v < 0.0) throw Error("transition matrix entry < 0");
                sum += v;
            }
            if (std::abs(sum - 1.0) > tol) throw Error("transition matrix row sum != 1");
        }
    }

    double max_abs_diff(const TransitionMatrix& other) const {
        if (other.dim != dim) throw DimensionMismatch("max_abs_diff: dim mismatch");
        double worst = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t y = 0; y < dim; ++y) {
                worst = std::max(worst, std::abs(entries[i][y] - other.entries[i][y]));
            }
        }
        return worst;
    }
};

namespace detail {

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

inline void save_transition_matrix(const TransitionMatrix& t, const std::string& path,
                                   const std::string& backend_identity) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << "# dim=" << t.dim << " smoothing=" << (t.smoothing ? "add1" : "none")
      << " backend=" << backend_identity << "\n";
    for (const auto& row : t.entries) {
        for (std::size_t y = 0; y < row.size(); ++y) {
            if (y) f << ',';
            f << detail::format_double(row[y]);
        }
        f << '\n';
    }
    std::ofstream c(path + ".counts.csv");
    for (const auto& row : t.counts) {
        for (std::size_t y = 0; y < row.size(); ++y) {
            if (y) c << ',';
            c << row[y];
        }
        c << '\n';
    }
}

inline TransitionMatrix load_transition_matrix(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FileNotFound("cannot read " + path);
    TransitionMatrix t;
    std::string line;
    if (!std::getline(f, line) || line.rfind("# dim=", 0) != 0) {
        throw SchemaError("transition matrix file missing header: " + path);
    }
    t.smoothing = line.find("smoothing=add1") != std::string::npos;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        t.entries.push_back(std::move(row));
    }
    t.dim = t.entries.size();
    t.counts.assign(t.dim, std::vector<std::uint64_t>(t.dim, 0));
    std::ifstream c(path + ".counts.csv");
    if (c) {
        std::size_t i = 0;
        while (std::getline(c, line) && i < t.dim) {
            std::stringstream ss(line);
            std::string cell;
            std::size_t y = 0;
            while (std::getline(ss, cell, ',') && y < t.dim) t.counts[i][y++] = std::stoull(cell);
            ++i;
        }
    }
    t.validate();
    return t;
}

}  // namespace stella
