#pragma once

/**
 * @file types.hpp
 * @brief Small fixed-capacity linear algebra types and the error hierarchy.
 *
 * Spatial dimension is at most 2, so vectors and matrices live on the stack
 * (Eigen dynamic size with a compile-time maximum of 2).
 */

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace hedgegame {

inline constexpr int kMaxDim = 2;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec vec_of(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

inline Vec zeros(int d) { return Vec::Zero(d); }

/// Base of all library errors; `exit_code` is what the CLI returns for it.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code)
        : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }
    virtual const char* kind() const noexcept = 0;

private:
    int exit_code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, 2) {}
    const char* kind() const noexcept override { return "config"; }
};

/// Ill-posed model definition (singular volatility, violated assumption).
class ModelError : public Error {
public:
    explicit ModelError(const std::string& what) : Error(what, 2) {}
    const char* kind() const noexcept override { return "model"; }
};

/// CFL violation, fixed-point non-convergence, out-of-range queries.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what, 3) {}
    const char* kind() const noexcept override { return "numerical"; }
};

class CertificationError : public Error {
public:
    explicit CertificationError(const std::string& what) : Error(what, 4) {}
    const char* kind() const noexcept override { return "certification"; }
};

}  // namespace hedgegame
