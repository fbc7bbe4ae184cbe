#pragma once

#include <Eigen/Dense>

namespace clusterscope {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Vector2 = Eigen::Vector2d;

}  // namespace clusterscope
