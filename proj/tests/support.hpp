#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "kmf/types.hpp"

namespace kmf::test {

// Small seeded generator used by the property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double a = 0.0, double b = 1.0) { return std::uniform_real_distribution<double>(a, b)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
    std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
    }
    std::vector<double> vec(std::size_t n, double a = -1.0, double b = 1.0) {
        std::vector<double> v(n);
        for (double& x : v) x = uniform(a, b);
        return v;
    }
    RowMatrix matrix(std::size_t rows, std::size_t cols, double a = 0.0, double b = 1.0) {
        RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(a, b);
        return m;
    }
    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

// Scratch directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("kmf_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string operator/(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

// Central differences of a scalar function of a parameter vector.
inline std::vector<double> central_differences(std::vector<double> p, const std::function<double(const std::vector<double>&)>& f,
                                               double h = 1e-6) {
    std::vector<double> g(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double keep = p[k];
        p[k] = keep + h;
        const double up = f(p);
        p[k] = keep - h;
        const double down = f(p);
        p[k] = keep;
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

// Largest per-entry mismatch: relative where either side is >= 1e-8, absolute otherwise.
inline double gradient_mismatch(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double worst = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        const double a = analytic[k];
        const double n = numeric[k];
        const double scale = std::max(std::abs(a), std::abs(n));
        const double e = scale < 1e-8 ? std::abs(a - n) : std::abs(a - n) / scale;
        worst = std::max(worst, e);
    }
    return worst;
}

}  // namespace kmf::test
