#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace erzefoz {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat2c = Eigen::Matrix<cplx, 2, 2>;
using Mat8c = Eigen::Matrix<cplx, 8, 8>;
using Mat16c = Eigen::Matrix<cplx, 16, 16>;
using Vec16c = Eigen::Matrix<cplx, 16, 1>;
using Vec16 = Eigen::Matrix<double, 16, 1>;

constexpr int kLevels = 16;

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

struct InvalidParameter : Error {
    explicit InvalidParameter(const std::string& w) : Error("invalid_parameter", w) {}
};
struct NumericalError : Error {
    explicit NumericalError(const std::string& w) : Error("numerical_error", w) {}
};
struct DegeneratePoint : Error {
    explicit DegeneratePoint(const std::string& w) : Error("degenerate_point", w) {}
};
struct TrackingLost : Error {
    explicit TrackingLost(const std::string& w) : Error("tracking_lost", w) {}
};
struct OutOfDomain : Error {
    explicit OutOfDomain(const std::string& w) : Error("out_of_domain", w) {}
};
struct UsageError : Error {
    explicit UsageError(const std::string& w) : Error("usage_error", w) {}
};

std::string format_vec(const Vec3& v);

}  // namespace erzefoz
