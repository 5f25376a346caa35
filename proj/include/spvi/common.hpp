#ifndef SPVI_COMMON_HPP
#define SPVI_COMMON_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace spvi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;

// Error taxonomy maps onto the CLI exit codes: FileError -> 2,
// ValidationError -> 3, NumericalError -> 4.
struct FileError : std::runtime_error {
  explicit FileError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace spvi

#endif
