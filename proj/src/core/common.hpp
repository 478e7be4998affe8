#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mscluster {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class errc {
  ok = 0,
  validation,
  schema,
  join,
  io,
  parse,
  numeric,
  step_size,
  conditioning,
  calibration,
  undefined_metric,
  divergence,
  empty_feature,
};

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace mscluster
