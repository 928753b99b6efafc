#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace caes {

// Adaptive-moment optimizer state for one parameter tensor.
struct AdamState {
  Eigen::MatrixXd m, v;
  AdamState() = default;
  AdamState(Eigen::Index rows, Eigen::Index cols)
      : m(Eigen::MatrixXd::Zero(rows, cols)), v(Eigen::MatrixXd::Zero(rows, cols)) {}
};

inline void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
                        AdamState& st, int t, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  st.m = b1 * st.m + (1.0 - b1) * grad;
  st.v = b2 * st.v + (1.0 - b2) * grad.cwiseProduct(grad);
  const double corr1 = 1.0 - std::pow(b1, t);
  const double corr2 = 1.0 - std::pow(b2, t);
  param -= (lr / corr1) *
           st.m.cwiseQuotient(((st.v / corr2).cwiseSqrt().array() + eps).matrix());
}

}  // namespace caes
